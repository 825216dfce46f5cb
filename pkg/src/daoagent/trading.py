"""Synthetic crypto-trading task: seeded prices, signal agents, Sharpe-ratio coalition values."""

from __future__ import annotations

import enum
import hashlib
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .game import SCALE

SIGNAL_TAG = b"SIG"


class Role(str, enum.Enum):
    DATA_ANALYSIS = "data_analysis"
    MARKET_PERSPECTIVE = "market_perspective"
    DECISION = "decision"


ROLE_CODES = {Role.DATA_ANALYSIS: 1, Role.MARKET_PERSPECTIVE: 2, Role.DECISION: 3}

# base skill per role; each agent's skill is jittered around it from its seed
ROLE_SKILL = {Role.DATA_ANALYSIS: 0.3, Role.MARKET_PERSPECTIVE: 0.25, Role.DECISION: 0.35}


def derive_seed(*labels) -> int:
    """Stable 64-bit seed from a tuple of ints/strings."""
    h = hashlib.sha256()
    for label in labels:
        h.update(str(label).encode() + b"\x00")
    return int.from_bytes(h.digest()[:8], "big")


@dataclass(frozen=True)
class PriceSeries:
    prices: np.ndarray

    def __post_init__(self):
        if len(self.prices) < 2 or np.any(self.prices <= 0):
            raise ValueError("a price series needs at least two positive prices")

    @classmethod
    def random_walk(
        cls, steps: int = 256, drift: float = 0.0002, volatility: float = 0.02, seed: int = 0, start: float = 100.0
    ) -> PriceSeries:
        rng = np.random.default_rng(seed)
        log_returns = drift + volatility * rng.standard_normal(steps - 1)
        return cls(start * np.exp(np.concatenate([[0.0], np.cumsum(log_returns)])))

    @property
    def returns(self) -> np.ndarray:
        return self.prices[1:] / self.prices[:-1] - 1.0

    def __len__(self):
        return len(self.prices)


def default_roles(n: int) -> list[Role]:
    """Two data-analysis agents, one decision agent, the rest market perspectives."""
    roles = [Role.DATA_ANALYSIS, Role.DATA_ANALYSIS, Role.DECISION][:n]
    return roles + [Role.MARKET_PERSPECTIVE] * (n - len(roles))


@dataclass(frozen=True)
class SyntheticAgent:
    id: int
    role: Role
    seed: int
    skill: float
    degradation: float = 0.0

    @classmethod
    def create(cls, agent_id: int, role: Role, seed: int) -> SyntheticAgent:
        jitter = np.random.default_rng(derive_seed(seed, "skill")).uniform(0.9, 1.1)
        return cls(agent_id, role, seed, float(min(1.0, ROLE_SKILL[role] * jitter)))

    def withholding(self, degradation: float) -> SyntheticAgent:
        if not 0.0 <= degradation <= 1.0:
            raise ValueError("degradation must be in [0, 1]")
        return SyntheticAgent(self.id, self.role, self.seed, self.skill, degradation)

    def signals(self, prices: PriceSeries) -> np.ndarray:
        """Per-step position in [-1, 1]; the entry at ``t`` is held over ``t -> t+1``."""
        truth = np.append(np.sign(prices.returns), 0.0)
        noise = np.random.default_rng(derive_seed(self.seed, "noise")).standard_normal(len(prices))
        raw = np.clip(self.skill * truth + (1.0 - self.skill) * noise, -1.0, 1.0)
        if self.degradation:
            junk = np.random.default_rng(derive_seed(self.seed, "withheld")).standard_normal(len(prices))
            raw = (1.0 - self.degradation) * raw + self.degradation * np.clip(junk, -1.0, 1.0)
        return quantize(raw)

    def output(self, prices: PriceSeries) -> bytes:
        return encode_signals(self.role, self.signals(prices))


def quantize(signals: np.ndarray) -> np.ndarray:
    """Round to the fixed-point grid so the committed bytes fully determine the signal."""
    return np.round(np.asarray(signals) * SCALE) / SCALE


def encode_signals(role: Role, signals: np.ndarray) -> bytes:
    q = np.round(np.asarray(signals) * SCALE).astype(">i4")
    return SIGNAL_TAG + struct.pack(">BI", ROLE_CODES[role], len(q)) + q.tobytes()


def decode_signals(payload: bytes) -> np.ndarray:
    if payload[:3] != SIGNAL_TAG:
        raise ValueError("not a signal payload")
    _, count = struct.unpack(">BI", payload[3:8])
    body = payload[8:]
    if len(body) != 4 * count:
        raise ValueError("signal payload length mismatch")
    return np.frombuffer(body, dtype=">i4").astype(np.float64) / SCALE


def sharpe_ratio(returns: np.ndarray) -> float:
    """Per-step Sharpe ratio: mean over sample standard deviation, no risk-free rate."""
    if len(returns) < 2:
        return 0.0
    std = float(np.std(returns, ddof=1))
    if std == 0.0:
        return 0.0
    return float(np.mean(returns)) / std


def evaluate_coalition(signals: Sequence[np.ndarray], prices: PriceSeries) -> int:
    """Fixed-point Sharpe ratio of the equal-weight combined signal; 0 for the empty coalition."""
    if not signals:
        return 0
    if any(len(s) != len(prices) for s in signals):
        raise ValueError("every signal series must match the price series length")
    combined = np.mean(np.vstack(signals), axis=0)
    strategy = combined[:-1] * prices.returns
    return int(round(SCALE * sharpe_ratio(strategy)))
