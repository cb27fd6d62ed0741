"""Minimal Bitcoin transaction model.

Only the fields the lifecycle analysis looks at are carried: input witnesses,
output scripts and values, the locktime, and the confirming block. Amounts are
integer satoshis throughout.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from functools import total_ordering
from typing import Optional, Sequence, Tuple

MAX_WITNESS_ITEM = 10_000


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def sha256d(data: bytes) -> bytes:
    return sha256(sha256(data))


def p2wsh_script_pubkey(witness_script: bytes) -> bytes:
    """Version-0 witness program committing to ``sha256(witness_script)``."""
    if not witness_script:
        raise ValueError("witness script must be non-empty")
    return b"\x00\x20" + sha256(witness_script)


def p2wpkh_script_pubkey(pubkey_hash: bytes) -> bytes:
    if len(pubkey_hash) != 20:
        raise ValueError("pubkey hash must be 20 bytes")
    return b"\x00\x14" + pubkey_hash


def is_p2wsh(script_pubkey: bytes) -> bool:
    return len(script_pubkey) == 34 and script_pubkey[:2] == b"\x00\x20"


def is_p2wpkh(script_pubkey: bytes) -> bool:
    return len(script_pubkey) == 22 and script_pubkey[:2] == b"\x00\x14"


@total_ordering
@dataclass(frozen=True)
class TxId:
    """32-byte transaction hash. ``str()`` gives the byte-reversed hex form."""

    raw: bytes

    def __post_init__(self) -> None:
        if len(self.raw) != 32:
            raise ValueError(f"txid must be 32 bytes, got {len(self.raw)}")

    @classmethod
    def from_hex(cls, text: str) -> "TxId":
        if len(text) != 64:
            raise ValueError(f"txid hex must be 64 chars: {text!r}")
        return cls(bytes.fromhex(text)[::-1])

    @property
    def hex(self) -> str:
        return self.raw[::-1].hex()

    def __str__(self) -> str:
        return self.hex

    def __repr__(self) -> str:
        return f"TxId({self.hex})"

    def __lt__(self, other: "TxId") -> bool:
        return self.raw[::-1] < other.raw[::-1]


@total_ordering
@dataclass(frozen=True)
class OutPoint:
    txid: TxId
    vout: int

    def __post_init__(self) -> None:
        if self.vout < 0:
            raise ValueError("vout must be non-negative")

    @classmethod
    def parse(cls, text: str) -> "OutPoint":
        txid, _, vout = text.partition(":")
        return cls(TxId.from_hex(txid), int(vout))

    def __str__(self) -> str:
        return f"{self.txid.hex}:{self.vout}"

    def __lt__(self, other: "OutPoint") -> bool:
        return (self.txid, self.vout) < (other.txid, other.vout)


@dataclass(frozen=True)
class TxOutput:
    value: int
    script_pubkey: bytes

    def __post_init__(self) -> None:
        if self.value < 0:
            raise ValueError("output value must be non-negative")


@dataclass(frozen=True)
class TxInput:
    prevout: OutPoint
    witness: Tuple[bytes, ...] = ()
    sequence: int = 0xFFFFFFFF

    def __post_init__(self) -> None:
        object.__setattr__(self, "witness", tuple(self.witness))
        for item in self.witness:
            if len(item) > MAX_WITNESS_ITEM:
                raise ValueError("witness item exceeds sanity bound")
        if not 0 <= self.sequence <= 0xFFFFFFFF:
            raise ValueError("sequence must fit in 32 bits")


@dataclass(frozen=True)
class BlockRef:
    height: int
    time: int


def _txid_preimage(inputs: Sequence[TxInput], outputs: Sequence[TxOutput], locktime: int) -> bytes:
    # Witness data is excluded, matching how real txids are committed.
    parts = [struct.pack("<I", len(inputs))]
    for txin in inputs:
        parts.append(txin.prevout.txid.raw)
        parts.append(struct.pack("<II", txin.prevout.vout, txin.sequence))
    parts.append(struct.pack("<I", len(outputs)))
    for out in outputs:
        parts.append(struct.pack("<QI", out.value, len(out.script_pubkey)))
        parts.append(out.script_pubkey)
    parts.append(struct.pack("<I", locktime))
    return b"".join(parts)


@dataclass(frozen=True)
class Transaction:
    txid: TxId
    inputs: Tuple[TxInput, ...]
    outputs: Tuple[TxOutput, ...]
    locktime: int = 0
    block_height: Optional[int] = None
    block_time: Optional[int] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        if not self.inputs or not self.outputs:
            raise ValueError("transaction needs at least one input and one output")
        if not 0 <= self.locktime <= 0xFFFFFFFF:
            raise ValueError("locktime must fit in 32 bits")

    @classmethod
    def build(
        cls,
        inputs: Sequence[TxInput],
        outputs: Sequence[TxOutput],
        locktime: int = 0,
        block_height: Optional[int] = None,
        block_time: Optional[int] = None,
    ) -> "Transaction":
        """Construct a transaction whose txid is derived from its content."""
        txid = TxId(sha256d(_txid_preimage(inputs, outputs, locktime)))
        return cls(txid, tuple(inputs), tuple(outputs), locktime, block_height, block_time)

    def outpoint(self, vout: int) -> OutPoint:
        if not 0 <= vout < len(self.outputs):
            raise IndexError(f"{self.txid} has no output {vout}")
        return OutPoint(self.txid, vout)

    @property
    def block(self) -> Optional[BlockRef]:
        if self.block_height is None or self.block_time is None:
            return None
        return BlockRef(self.block_height, self.block_time)

    def spends(self, outpoint: OutPoint) -> Optional[int]:
        """Index of the input spending ``outpoint``, if any."""
        for i, txin in enumerate(self.inputs):
            if txin.prevout == outpoint:
                return i
        return None
