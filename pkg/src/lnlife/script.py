"""Script tokenizer and Lightning output template matching.

Locking scripts of P2WSH outputs are only revealed by the witness of the
spending input, so classification here always works from a revealed script
plus (optionally) the spend witness.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import List, Optional, Sequence, Union

from .chain import TxOutput, is_p2wpkh, is_p2wsh, p2wsh_script_pubkey
from .errors import HashMismatch, MalformedWitness, TruncatedPush


class Opcode(enum.IntEnum):
    OP_0 = 0x00
    OP_PUSHDATA1 = 0x4C
    OP_PUSHDATA2 = 0x4D
    OP_PUSHDATA4 = 0x4E
    OP_1NEGATE = 0x4F
    OP_1 = 0x51
    OP_2 = 0x52
    OP_3 = 0x53
    OP_4 = 0x54
    OP_5 = 0x55
    OP_6 = 0x56
    OP_7 = 0x57
    OP_8 = 0x58
    OP_9 = 0x59
    OP_10 = 0x5A
    OP_11 = 0x5B
    OP_12 = 0x5C
    OP_13 = 0x5D
    OP_14 = 0x5E
    OP_15 = 0x5F
    OP_16 = 0x60
    OP_NOP = 0x61
    OP_IF = 0x63
    OP_NOTIF = 0x64
    OP_ELSE = 0x67
    OP_ENDIF = 0x68
    OP_VERIFY = 0x69
    OP_RETURN = 0x6A
    OP_IFDUP = 0x73
    OP_DROP = 0x75
    OP_DUP = 0x76
    OP_SWAP = 0x7C
    OP_SIZE = 0x82
    OP_EQUAL = 0x87
    OP_EQUALVERIFY = 0x88
    OP_RIPEMD160 = 0xA6
    OP_SHA256 = 0xA8
    OP_HASH160 = 0xA9
    OP_CHECKSIG = 0xAC
    OP_CHECKSIGVERIFY = 0xAD
    OP_CHECKMULTISIG = 0xAE
    OP_CHECKLOCKTIMEVERIFY = 0xB1
    OP_CHECKSEQUENCEVERIFY = 0xB2


globals().update(Opcode.__members__)


@dataclass(frozen=True)
class Op:
    code: int

    @property
    def name(self) -> str:
        try:
            return Opcode(self.code).name
        except ValueError:
            return f"OP_UNKNOWN_{self.code:#04x}"

    def serialize(self) -> bytes:
        return bytes([self.code])


@dataclass(frozen=True)
class Push:
    """A data push; ``opcode`` records which push form carried it."""

    data: bytes
    opcode: int

    def serialize(self) -> bytes:
        n = len(self.data)
        if self.opcode == Opcode.OP_PUSHDATA1:
            return bytes([self.opcode]) + n.to_bytes(1, "little") + self.data
        if self.opcode == Opcode.OP_PUSHDATA2:
            return bytes([self.opcode]) + n.to_bytes(2, "little") + self.data
        if self.opcode == Opcode.OP_PUSHDATA4:
            return bytes([self.opcode]) + n.to_bytes(4, "little") + self.data
        return bytes([self.opcode]) + self.data


ScriptToken = Union[Op, Push]


def push(data: bytes) -> Push:
    """Push ``data`` with the smallest push opcode."""
    n = len(data)
    if n == 0:
        raise ValueError("empty pushes are written as OP_0")
    if n <= 75:
        return Push(data, n)
    if n <= 0xFF:
        return Push(data, Opcode.OP_PUSHDATA1)
    if n <= 0xFFFF:
        return Push(data, Opcode.OP_PUSHDATA2)
    return Push(data, Opcode.OP_PUSHDATA4)


def parse_script(script: bytes) -> List[ScriptToken]:
    tokens: List[ScriptToken] = []
    i = 0
    end = len(script)
    while i < end:
        code = script[i]
        i += 1
        if 1 <= code <= 75:
            size = code
        elif code == Opcode.OP_PUSHDATA1:
            size, width = _read_len(script, i, 1)
            i += width
        elif code == Opcode.OP_PUSHDATA2:
            size, width = _read_len(script, i, 2)
            i += width
        elif code == Opcode.OP_PUSHDATA4:
            size, width = _read_len(script, i, 4)
            i += width
        else:
            tokens.append(Op(code))
            continue
        if i + size > end:
            raise TruncatedPush(f"push of {size} bytes at offset {i - 1}, only {end - i} left")
        tokens.append(Push(script[i:i + size], code))
        i += size
    return tokens


def _read_len(script: bytes, i: int, width: int):
    if i + width > len(script):
        raise TruncatedPush(f"push length field truncated at offset {i}")
    return int.from_bytes(script[i:i + width], "little"), width


def serialize(tokens: Sequence[ScriptToken]) -> bytes:
    return b"".join(t.serialize() for t in tokens)


def encode_script_num(n: int) -> bytes:
    """Minimal little-endian sign-magnitude encoding."""
    if n == 0:
        return b""
    negative = n < 0
    mag = abs(n)
    out = bytearray()
    while mag:
        out.append(mag & 0xFF)
        mag >>= 8
    if out[-1] & 0x80:
        out.append(0x80 if negative else 0x00)
    elif negative:
        out[-1] |= 0x80
    return bytes(out)


def decode_script_num(data: bytes) -> int:
    if not data:
        return 0
    result = int.from_bytes(data, "little")
    if data[-1] & 0x80:
        return -(result & ~(0x80 << (8 * (len(data) - 1))))
    return result


def push_number(n: int) -> ScriptToken:
    if n == 0:
        return Op(Opcode.OP_0)
    if n == -1:
        return Op(Opcode.OP_1NEGATE)
    if 1 <= n <= 16:
        return Op(Opcode.OP_1 + n - 1)
    return push(encode_script_num(n))


def _read_number(token: ScriptToken) -> Optional[int]:
    """Decode a minimally pushed script number, else None."""
    if isinstance(token, Op):
        if token.code == Opcode.OP_0:
            return 0
        if token.code == Opcode.OP_1NEGATE:
            return -1
        if Opcode.OP_1 <= token.code <= Opcode.OP_16:
            return token.code - Opcode.OP_1 + 1
        return None
    if len(token.data) > 4:
        return None
    value = decode_script_num(token.data)
    if push_number(value) != token:
        return None
    return value


def is_pubkey(data: bytes) -> bool:
    return len(data) == 33 and data[0] in (2, 3)


def _key(token: ScriptToken) -> Optional[bytes]:
    if isinstance(token, Push) and token.opcode == 33 and is_pubkey(token.data):
        return token.data
    return None


def _is(token: ScriptToken, code: int) -> bool:
    return isinstance(token, Op) and token.code == code


# --- templates -------------------------------------------------------------

def funding_script(pubkey1: bytes, pubkey2: bytes) -> bytes:
    return serialize([Op(OP_2), push(pubkey1), push(pubkey2), Op(OP_2), Op(OP_CHECKMULTISIG)])


def local_script(revocation_pubkey: bytes, local_delayed_pubkey: bytes, to_self_delay: int) -> bytes:
    return serialize([
        Op(OP_IF),
        push(revocation_pubkey),
        Op(OP_ELSE),
        push_number(to_self_delay),
        Op(OP_CHECKSEQUENCEVERIFY),
        Op(OP_DROP),
        push(local_delayed_pubkey),
        Op(OP_ENDIF),
        Op(OP_CHECKSIG),
    ])


def anchor_script(funding_pubkey: bytes) -> bytes:
    return serialize([
        push(funding_pubkey),
        Op(OP_CHECKSIG),
        Op(OP_IFDUP),
        Op(OP_NOTIF),
        Op(OP_16),
        Op(OP_CHECKSEQUENCEVERIFY),
        Op(OP_ENDIF),
    ])


def remote_delayed_script(remote_pubkey: bytes) -> bytes:
    """Anchor-era to_remote output: spendable by the remote key after one block."""
    return serialize([push(remote_pubkey), Op(OP_CHECKSIGVERIFY), Op(OP_1), Op(OP_CHECKSEQUENCEVERIFY)])


def offered_htlc_script(revocation_hash: bytes, remote_htlc_pubkey: bytes,
                        local_htlc_pubkey: bytes, payment_hash: bytes) -> bytes:
    return serialize([
        Op(OP_DUP), Op(OP_HASH160), push(revocation_hash), Op(OP_EQUAL),
        Op(OP_IF),
        Op(OP_CHECKSIG),
        Op(OP_ELSE),
        push(remote_htlc_pubkey), Op(OP_SWAP), Op(OP_SIZE), push_number(32), Op(OP_EQUAL),
        Op(OP_NOTIF),
        Op(OP_DROP), Op(OP_2), Op(OP_SWAP), push(local_htlc_pubkey), Op(OP_2), Op(OP_CHECKMULTISIG),
        Op(OP_ELSE),
        Op(OP_HASH160), push(payment_hash), Op(OP_EQUALVERIFY), Op(OP_CHECKSIG),
        Op(OP_ENDIF),
        Op(OP_ENDIF),
    ])


def received_htlc_script(revocation_hash: bytes, remote_htlc_pubkey: bytes, local_htlc_pubkey: bytes,
                         payment_hash: bytes, cltv_expiry: int) -> bytes:
    return serialize([
        Op(OP_DUP), Op(OP_HASH160), push(revocation_hash), Op(OP_EQUAL),
        Op(OP_IF),
        Op(OP_CHECKSIG),
        Op(OP_ELSE),
        push(remote_htlc_pubkey), Op(OP_SWAP), Op(OP_SIZE), push_number(32), Op(OP_EQUAL),
        Op(OP_IF),
        Op(OP_HASH160), push(payment_hash), Op(OP_EQUALVERIFY),
        Op(OP_2), Op(OP_SWAP), push(local_htlc_pubkey), Op(OP_2), Op(OP_CHECKMULTISIG),
        Op(OP_ELSE),
        Op(OP_DROP), push_number(cltv_expiry), Op(OP_CHECKLOCKTIMEVERIFY), Op(OP_DROP), Op(OP_CHECKSIG),
        Op(OP_ENDIF),
        Op(OP_ENDIF),
    ])


# --- matchers --------------------------------------------------------------

@dataclass(frozen=True)
class FundingScript:
    pubkey1: bytes
    pubkey2: bytes


@dataclass(frozen=True)
class LocalOutputScript:
    revocation_pubkey: bytes
    local_delayed_pubkey: bytes
    to_self_delay: int


@dataclass(frozen=True)
class AnchorScript:
    funding_pubkey: bytes


def _tokens(script: bytes) -> Optional[List[ScriptToken]]:
    try:
        return parse_script(script)
    except TruncatedPush:
        return None


def match_funding(witness_script: bytes) -> Optional[FundingScript]:
    t = _tokens(witness_script)
    if t is None or len(t) != 5:
        return None
    k1, k2 = _key(t[1]), _key(t[2])
    if (_is(t[0], OP_2) and k1 and k2 and _is(t[3], OP_2) and _is(t[4], OP_CHECKMULTISIG)):
        return FundingScript(k1, k2)
    return None


def match_local(witness_script: bytes) -> Optional[LocalOutputScript]:
    t = _tokens(witness_script)
    if t is None or len(t) != 9:
        return None
    shape = (
        _is(t[0], OP_IF) and _is(t[2], OP_ELSE) and _is(t[4], OP_CHECKSEQUENCEVERIFY)
        and _is(t[5], OP_DROP) and _is(t[7], OP_ENDIF) and _is(t[8], OP_CHECKSIG)
    )
    revocation, delayed = _key(t[1]), _key(t[6])
    if not (shape and revocation and delayed):
        return None
    delay = _read_number(t[3])
    if delay is None or not 1 <= delay <= 0xFFFF:
        return None
    return LocalOutputScript(revocation, delayed, delay)


def match_anchor(witness_script: bytes) -> Optional[AnchorScript]:
    t = _tokens(witness_script)
    if t is None or len(t) != 7:
        return None
    key = _key(t[0])
    tail = (OP_CHECKSIG, OP_IFDUP, OP_NOTIF, OP_16, OP_CHECKSEQUENCEVERIFY, OP_ENDIF)
    if key and all(_is(tok, code) for tok, code in zip(t[1:], tail)):
        return AnchorScript(key)
    return None


def match_remote_delayed(witness_script: bytes) -> Optional[bytes]:
    t = _tokens(witness_script)
    if t is None or len(t) != 4:
        return None
    key = _key(t[0])
    if key and _is(t[1], OP_CHECKSIGVERIFY) and _is(t[2], OP_1) and _is(t[3], OP_CHECKSEQUENCEVERIFY):
        return key
    return None


# --- output classification -------------------------------------------------

class OutputKind(enum.Enum):
    TO_LOCAL = "to_local"
    TO_REMOTE = "to_remote"
    ANCHOR = "anchor"
    HTLC = "htlc"
    UNSPENT = "unspent"


@dataclass(frozen=True)
class OutputClass:
    kind: OutputKind
    local: Optional[LocalOutputScript] = None
    anchor: Optional[AnchorScript] = None


class LocalSpendPath(enum.Enum):
    REVOCATION = "revocation"
    DELAYED = "delayed"


def classify_output(
    output: TxOutput,
    revealed_witness_script: Optional[bytes] = None,
    spend_witness: Optional[Sequence[bytes]] = None,
) -> OutputClass:
    """Type a commitment output from its script and, if spent, its witness.

    When only ``spend_witness`` is given, the revealed script is taken to be
    its last item. Anything revealed that fits none of the known templates is
    an HTLC.
    """
    script = revealed_witness_script
    if script is None and spend_witness and is_p2wsh(output.script_pubkey):
        script = spend_witness[-1]
    if script is not None and is_p2wsh(output.script_pubkey):
        if p2wsh_script_pubkey(script) != output.script_pubkey:
            raise HashMismatch("revealed script does not hash to the output's witness program")

    if is_p2wpkh(output.script_pubkey):
        return OutputClass(OutputKind.TO_REMOTE)
    if script is None:
        return OutputClass(OutputKind.UNSPENT)
    local = match_local(script)
    if local is not None:
        return OutputClass(OutputKind.TO_LOCAL, local=local)
    anchor = match_anchor(script)
    if anchor is not None:
        return OutputClass(OutputKind.ANCHOR, anchor=anchor)
    if match_remote_delayed(script) is not None:
        return OutputClass(OutputKind.TO_REMOTE)
    return OutputClass(OutputKind.HTLC)


def is_truthy(item: bytes) -> bool:
    """Script boolean: false for empty, zero and negative zero."""
    if not item:
        return False
    return any(item[:-1]) or (item[-1] & 0x7F) != 0


def classify_local_spend(spend_witness: Sequence[bytes], script: LocalOutputScript) -> LocalSpendPath:
    if len(spend_witness) < 3:
        raise MalformedWitness(f"local output spend needs 3 witness items, got {len(spend_witness)}")
    if match_local(spend_witness[-1]) != script:
        raise MalformedWitness("last witness item is not the local output script")
    if is_truthy(spend_witness[-2]):
        return LocalSpendPath.REVOCATION
    return LocalSpendPath.DELAYED
