"""In-process ledger: commitment anchoring, proof-gated settlement and gas accounting.

Every state change is a canonical transaction applied through :meth:`Ledger.apply`,
one transaction per block.  The journal keeps each transaction with the running
state digest ``state_k = SHA-256("STATE" || state_{k-1} || tx_hash_k)`` so a
replay reproduces and checks the ledger bit for bit.

Transaction bytes (big-endian)::

    "TX" || kind u8 || height u64 || body
    commit-cid    body: mask u32 || cid 32B
    commit-value  body: mask u32 || digest 32B
    settle        body: status u8 || n u16 || payouts i64 * n || reason-len u16 || reason
                        || public-digest 32B
    abort         body: phase u8 || reason-len u16 || reason
"""

from __future__ import annotations

import struct
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

from .circuit import PublicInputs
from .commitment import Cid, check_digest, sha256
from .gas import GasModel, gas_report, GasReport  # noqa: F401  (re-exported)
from .proof import Proof, verify_detailed

TX_MAGIC = b"TX"
TX_COMMIT_CID = 1
TX_COMMIT_VALUE = 2
TX_SETTLE = 3
TX_ABORT = 4

SETTLED = "settled"
ABORTED = "aborted"

GENESIS_STATE = sha256(b"STATE", b"genesis")

REASON_DIVERGENCE = "public-input/ledger divergence"
REASON_INVALID = "proof invalid"
REASON_UNSETTLEABLE = "unsettleable allocation"
REASON_MISSING = "missing commitments"


class LedgerError(Exception):
    pass


class DuplicateCommitment(LedgerError):
    pass


class RecordNotFound(LedgerError, KeyError):
    pass


@dataclass(frozen=True)
class CommitmentRecord:
    coalition: int
    digest: bytes
    t_block: int
    tx_hash: bytes


@dataclass(frozen=True)
class Settlement:
    status: str
    payouts: tuple[int, ...]
    tx_hash: bytes
    reason: str = ""
    t_block: int = 0
    gas_charged: float = 0.0
    reference_gas: float = 0.0

    @property
    def settled(self) -> bool:
        return self.status == SETTLED


def _reason_bytes(reason: str) -> bytes:
    raw = reason.encode()
    return struct.pack(">H", len(raw)) + raw


@dataclass
class Ledger:
    gas_model: GasModel = field(default_factory=GasModel)

    def __post_init__(self):
        self.height = 0
        self.state = GENESIS_STATE
        self.journal: list[tuple[bytes, bytes]] = []  # (tx bytes, state after)
        self.cids: dict[int, CommitmentRecord] = {}
        self.value_hashes: dict[int, CommitmentRecord] = {}
        self.settlements: list[Settlement] = []
        self.aborts: list[tuple[int, str]] = []
        self.gas_used = 0.0
        self._lock = threading.Lock()

    # -- transaction core ------------------------------------------------------

    def apply(self, tx: bytes) -> bytes:
        """Validate and apply one canonical transaction; returns its hash."""
        with self._lock:
            if tx[:2] != TX_MAGIC or len(tx) < 11:
                raise LedgerError("malformed transaction")
            kind, height = struct.unpack(">BQ", tx[2:11])
            if height != self.height + 1:
                raise LedgerError(f"transaction height {height} does not follow {self.height}")
            body = tx[11:]
            tx_hash = sha256(tx)
            if kind in (TX_COMMIT_CID, TX_COMMIT_VALUE):
                if len(body) != 36:
                    raise LedgerError("malformed commitment transaction")
                (mask,) = struct.unpack(">I", body[:4])
                table = self.cids if kind == TX_COMMIT_CID else self.value_hashes
                if mask in table:
                    raise DuplicateCommitment(f"coalition {mask:#x} already committed")
                table[mask] = CommitmentRecord(mask, body[4:], height, tx_hash)
                self.gas_used += self.gas_model.storage_write
            elif kind == TX_SETTLE:
                status, n = struct.unpack(">BH", body[:3])
                payouts = struct.unpack(f">{n}q", body[3 : 3 + 8 * n])
                pos = 3 + 8 * n
                (rlen,) = struct.unpack(">H", body[pos : pos + 2])
                reason = body[pos + 2 : pos + 2 + rlen].decode()
                if len(body) != pos + 2 + rlen + 32:
                    raise LedgerError("malformed settlement transaction")
                # the verifier only runs once public inputs match the commitments
                charged = 0.0 if reason in (REASON_MISSING, REASON_DIVERGENCE) else self.gas_model.verify_constant
                self.gas_used += charged
                self.settlements.append(
                    Settlement(SETTLED if status else ABORTED, payouts, tx_hash, reason, height, charged)
                )
            elif kind == TX_ABORT:
                phase = body[0]
                (rlen,) = struct.unpack(">H", body[1:3])
                if len(body) != 3 + rlen:
                    raise LedgerError("malformed abort transaction")
                self.aborts.append((phase, body[3:].decode()))
            else:
                raise LedgerError(f"unknown transaction kind {kind}")
            self.height = height
            self.state = sha256(b"STATE", self.state, tx_hash)
            self.journal.append((tx, self.state))
            return tx_hash

    def _tx(self, kind: int, body: bytes) -> bytes:
        return TX_MAGIC + struct.pack(">BQ", kind, self.height + 1) + body

    # -- commitments -------------------------------------------------------------

    def commit_cid(self, mask: int, cid: Cid) -> tuple[int, bytes]:
        if mask in self.cids:
            raise DuplicateCommitment(f"coalition {mask:#x} already has a committed CID")
        tx_hash = self.apply(self._tx(TX_COMMIT_CID, struct.pack(">I", mask) + cid.digest))
        return self.height, tx_hash

    def commit_value_hash(self, mask: int, digest: bytes) -> tuple[int, bytes]:
        if mask in self.value_hashes:
            raise DuplicateCommitment(f"coalition {mask:#x} already has a committed value hash")
        tx_hash = self.apply(self._tx(TX_COMMIT_VALUE, struct.pack(">I", mask) + check_digest(digest)))
        return self.height, tx_hash

    def get_cid(self, mask: int) -> Cid:
        try:
            return Cid(self.cids[mask].digest)
        except KeyError:
            raise RecordNotFound(f"no CID committed for coalition {mask:#x}") from None

    def get_value_hash(self, mask: int) -> bytes:
        try:
            return self.value_hashes[mask].digest
        except KeyError:
            raise RecordNotFound(f"no value hash committed for coalition {mask:#x}") from None

    def record_abort(self, phase: int, reason: str) -> bytes:
        return self.apply(self._tx(TX_ABORT, struct.pack(">B", phase) + _reason_bytes(reason)))

    # -- settlement ---------------------------------------------------------------

    def _settle_tx(self, status: bool, payouts, reason: str, pub: PublicInputs) -> Settlement:
        body = struct.pack(f">BH{len(payouts)}q", int(status), len(payouts), *payouts)
        body += _reason_bytes(reason) + pub.public_digest
        self.apply(self._tx(TX_SETTLE, body))
        return self.settlements[-1]

    def verify_and_settle(
        self,
        proof: Proof,
        pub: PublicInputs,
        *,
        allow_deficit: bool = False,
        verifier: Callable = verify_detailed,
    ) -> Settlement:
        """Check public inputs against commitments, verify the proof, then pay out or abort."""
        n = pub.n

        def abort(reason):
            return self._settle_tx(False, (), reason, pub)

        masks = range(1 << n)
        if any(m not in self.cids or m not in self.value_hashes for m in masks):
            return abort(REASON_MISSING)
        for m in masks:
            if pub.output_hash_cids[m].digest != self.cids[m].digest:
                return abort(REASON_DIVERGENCE)
            if pub.value_hashes[m] != self.value_hashes[m].digest:
                return abort(REASON_DIVERGENCE)
        result = verifier(proof, pub)
        if not result:
            return abort(REASON_INVALID)
        payouts = tuple(pub.allocations)
        if sum(payouts) != pub.grand_value:
            return abort(REASON_INVALID)
        if not allow_deficit and any(p < 0 for p in payouts):
            return abort(REASON_UNSETTLEABLE)
        settlement = self._settle_tx(True, payouts, "", pub)
        m = self.gas_model
        reference = m.tx_base + result.hashes * m.hash_unit + result.evaluations * m.constraint_unit
        self.settlements[-1] = replace(settlement, reference_gas=reference)
        return self.settlements[-1]

    # -- journal ---------------------------------------------------------------------

    def journal_text(self) -> str:
        lines = [f"{tx.hex()} {state.hex()}" for tx, state in self.journal]
        lines.append(f"END {len(self.journal)} {self.state.hex()}")
        return "\n".join(lines) + "\n"

    def write_journal(self, path: str | Path) -> None:
        Path(path).write_text(self.journal_text())


@dataclass(frozen=True)
class ReplayResult:
    ok: bool
    transactions: int
    divergence: int | None = None  # 1-based transaction number
    reason: str = ""


def replay_journal(text: str, gas_model: GasModel | None = None) -> ReplayResult:
    """Rebuild a ledger from journal text and check every recorded state digest."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    ledger = Ledger(gas_model or GasModel())
    if not lines:
        return ReplayResult(True, 0)
    for k, line in enumerate(lines, start=1):
        parts = line.split()
        if parts[0] == "END":
            if k != len(lines):
                return ReplayResult(False, k - 1, k, "terminal record before end of journal")
            try:
                count, state = int(parts[1]), bytes.fromhex(parts[2])
            except (IndexError, ValueError):
                return ReplayResult(False, k - 1, k, "malformed terminal record")
            if count != k - 1 or state != ledger.state:
                return ReplayResult(False, k - 1, min(count, k - 1) + 1, "terminal state mismatch")
            return ReplayResult(True, k - 1)
        try:
            tx, state = bytes.fromhex(parts[0]), bytes.fromhex(parts[1])
            ledger.apply(tx)
        except (IndexError, ValueError, LedgerError, struct.error, UnicodeDecodeError) as exc:
            return ReplayResult(False, k - 1, k, f"transaction rejected: {exc}")
        if state != ledger.state:
            return ReplayResult(False, k - 1, k, "state digest mismatch")
    return ReplayResult(False, len(lines), len(lines) + 1, "journal truncated: no terminal record")
