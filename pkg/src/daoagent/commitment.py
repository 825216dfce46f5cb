"""Hash commitments over agent outputs and coalition values, plus a content-addressed store.

Every hash is SHA-256 over a domain-separated, big-endian framed message so
digests are byte-stable across runs and platforms.
"""

from __future__ import annotations

import hashlib
import struct
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

DIGEST_SIZE = 32
EMPTY_DIGEST = bytes(DIGEST_SIZE)

TAG_OUTPUT = b"OUT"
TAG_VALUE = b"VAL"
TAG_SET = b"SET"


class CommitmentError(Exception):
    pass


class NotFoundError(CommitmentError, KeyError):
    pass


class CorruptionError(CommitmentError):
    pass


def sha256(*parts: bytes) -> bytes:
    h = hashlib.sha256()
    for part in parts:
        h.update(part)
    return h.digest()


def check_digest(digest: bytes) -> bytes:
    if not isinstance(digest, (bytes, bytearray)) or len(digest) != DIGEST_SIZE:
        raise CommitmentError("a digest is exactly 32 bytes")
    return bytes(digest)


@dataclass(frozen=True)
class OutputRecord:
    agent: int
    payload: bytes

    def __post_init__(self):
        if not 0 <= self.agent < 2**16:
            raise CommitmentError(f"agent index {self.agent} out of range")
        if not self.payload:
            raise CommitmentError("output payload must be non-empty")


def hash_output(record: OutputRecord) -> bytes:
    return sha256(TAG_OUTPUT, struct.pack(">HI", record.agent, len(record.payload)), record.payload)


def hash_value(raw: int, mask: int) -> bytes:
    return sha256(TAG_VALUE, struct.pack(">Iq", mask, raw))


@dataclass(frozen=True)
class HashSet:
    """Sorted, duplicate-free set of output digests."""

    entries: tuple[bytes, ...]

    def __post_init__(self):
        for d in self.entries:
            check_digest(d)
        if list(self.entries) != sorted(set(self.entries)):
            raise CommitmentError("hash set entries must be sorted and unique")

    @classmethod
    def of(cls, digests: Iterable[bytes]) -> HashSet:
        digests = list(digests)
        if len(set(digests)) != len(digests):
            raise CommitmentError("duplicate digest in hash set")
        return cls(tuple(sorted(digests)))

    @classmethod
    def from_records(cls, records: Iterable[OutputRecord]) -> HashSet:
        return cls.of(hash_output(r) for r in records)

    def to_bytes(self) -> bytes:
        return TAG_SET + struct.pack(">I", len(self.entries)) + b"".join(self.entries)

    @classmethod
    def from_bytes(cls, data: bytes) -> HashSet:
        if data[:3] != TAG_SET or len(data) < 7:
            raise CommitmentError("not a serialized hash set")
        (count,) = struct.unpack(">I", data[3:7])
        if len(data) != 7 + count * DIGEST_SIZE:
            raise CommitmentError("hash set length does not match its count")
        body = data[7:]
        return cls(tuple(body[i * DIGEST_SIZE : (i + 1) * DIGEST_SIZE] for i in range(count)))


@dataclass(frozen=True, order=True)
class Cid:
    digest: bytes

    def __post_init__(self):
        check_digest(self.digest)

    @classmethod
    def of(cls, hs: HashSet) -> Cid:
        return cls(sha256(hs.to_bytes()))

    @classmethod
    def from_hex(cls, text: str) -> Cid:
        return cls(bytes.fromhex(text))

    def hex(self) -> str:
        return self.digest.hex()

    def __str__(self):
        return self.hex()


class ContentStore:
    """Content-addressed object store keyed by SHA-256 of the stored bytes.

    Objects live in memory, or under ``persist_dir`` as files named by hex CID.
    Writes are serialized; reads need no lock.
    """

    def __init__(self, persist_dir: str | Path | None = None):
        self._objects: dict[bytes, bytes] = {}
        self._lock = threading.Lock()
        self._dir = Path(persist_dir) if persist_dir is not None else None
        if self._dir is not None:
            self._dir.mkdir(parents=True, exist_ok=True)

    def __len__(self):
        if self._dir is not None:
            return sum(1 for _ in self._dir.iterdir())
        return len(self._objects)

    def store(self, hs: HashSet) -> Cid:
        data = hs.to_bytes()
        cid = Cid(sha256(data))
        with self._lock:
            self._put_raw(cid, data)
        return cid

    def retrieve(self, cid: Cid) -> HashSet:
        data = self._get_raw(cid)
        if sha256(data) != cid.digest:
            raise CorruptionError(f"stored object {cid.hex()} does not match its content id")
        return HashSet.from_bytes(data)

    def _put_raw(self, cid: Cid, data: bytes) -> None:
        # also the fault-injection hook: tests write corrupted bytes under a valid cid
        if self._dir is not None:
            (self._dir / cid.hex()).write_bytes(data)
        else:
            self._objects[cid.digest] = data

    def _get_raw(self, cid: Cid) -> bytes:
        if self._dir is not None:
            path = self._dir / cid.hex()
            if not path.exists():
                raise NotFoundError(cid.hex())
            return path.read_bytes()
        try:
            return self._objects[cid.digest]
        except KeyError:
            raise NotFoundError(cid.hex()) from None


def accept_outputs(store: ContentStore, candidate: Iterable[OutputRecord], cid: Cid) -> bool:
    """True iff the candidate outputs hash to exactly the committed set behind ``cid``."""
    committed = store.retrieve(cid)
    digests = sorted(hash_output(r) for r in candidate)
    return tuple(digests) == committed.entries
