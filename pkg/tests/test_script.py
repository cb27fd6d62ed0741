import random

import pytest
from hypothesis import given, settings, strategies as st

from lnlife.chain import TxOutput, p2wpkh_script_pubkey, p2wsh_script_pubkey
from lnlife.errors import HashMismatch, MalformedWitness, TruncatedPush
from lnlife.script import (
    OP_0,
    OP_1,
    OP_2,
    OP_15,
    OP_CHECKMULTISIG,
    OP_CHECKSIG,
    OP_CHECKSEQUENCEVERIFY,
    OP_DROP,
    OP_ELSE,
    OP_ENDIF,
    OP_IF,
    LocalSpendPath,
    Op,
    OutputKind,
    Push,
    anchor_script,
    classify_local_spend,
    classify_output,
    decode_script_num,
    encode_script_num,
    funding_script,
    local_script,
    match_anchor,
    match_funding,
    match_local,
    match_remote_delayed,
    offered_htlc_script,
    parse_script,
    push,
    received_htlc_script,
    remote_delayed_script,
    serialize,
)

from conftest import key

REV, DELAYED = key(10), key(11)


def templates():
    return [
        funding_script(key(0), key(1)),
        local_script(REV, DELAYED, 144),
        local_script(REV, DELAYED, 6),
        anchor_script(key(2)),
        remote_delayed_script(key(3)),
        offered_htlc_script(bytes(20), key(4), key(5), bytes(20)),
        received_htlc_script(bytes(20), key(4), key(5), bytes(20), 700_000),
    ]


# --- parsing ----------------------------------------------------------------

def test_parse_empty():
    assert parse_script(b"") == []


def test_parse_p2wsh_program():
    digest = bytes(range(32))
    assert parse_script(b"\x00\x20" + digest) == [Op(OP_0), Push(digest, 32)]


def test_parse_truncated():
    with pytest.raises(TruncatedPush):
        parse_script(b"\x21" + bytes(10))
    with pytest.raises(TruncatedPush):
        parse_script(b"\x4d\x01")


def test_unknown_opcode_preserved():
    assert parse_script(b"\xba") == [Op(0xBA)]
    assert Op(0xBA).name.startswith("OP_UNKNOWN")


@pytest.mark.parametrize("script", templates())
def test_template_roundtrip(script):
    assert serialize(parse_script(script)) == script


@given(st.binary(max_size=300))
def test_parse_serialize_identity_on_parseable(data):
    try:
        tokens = parse_script(data)
    except TruncatedPush:
        return
    assert serialize(tokens) == data


def test_pushdata_forms_roundtrip():
    for n in (75, 76, 255, 256, 600):
        tok = push(bytes(n))
        assert parse_script(tok.serialize()) == [tok]


# --- script numbers -----------------------------------------------------------

@given(st.integers(min_value=-(2**31) + 1, max_value=2**31 - 1))
def test_script_num_roundtrip(n):
    assert decode_script_num(encode_script_num(n)) == n


def test_script_num_known_encodings():
    assert encode_script_num(144) == b"\x90\x00"
    assert encode_script_num(-1) == b"\x81"
    assert encode_script_num(127) == b"\x7f"
    assert encode_script_num(128) == b"\x80\x00"


# --- matchers ---------------------------------------------------------------

def test_match_funding():
    assert match_funding(funding_script(key(0), key(1))).pubkey2 == key(1)
    one_of_two = serialize([Op(OP_1), push(key(0)), push(key(1)), Op(OP_2), Op(OP_CHECKMULTISIG)])
    assert match_funding(one_of_two) is None
    three = serialize([Op(OP_2), push(key(0)), push(key(1)), push(key(2)), Op(0x53), Op(OP_CHECKMULTISIG)])
    assert match_funding(three) is None


def test_match_funding_rejects_bad_key_prefix():
    bad = b"\x04" + key(0)[1:]
    assert match_funding(serialize([Op(OP_2), push(bad), push(key(1)), Op(OP_2), Op(OP_CHECKMULTISIG)])) is None


def test_match_local_delay_144():
    m = match_local(local_script(REV, DELAYED, 144))
    assert (m.revocation_pubkey, m.local_delayed_pubkey, m.to_self_delay) == (REV, DELAYED, 144)


def test_match_local_small_delay_uses_op_n():
    script = local_script(REV, DELAYED, 6)
    assert parse_script(script)[3] == Op(0x56)
    assert match_local(script).to_self_delay == 6


def test_match_local_missing_checksig():
    assert match_local(local_script(REV, DELAYED, 144)[:-1]) is None


def _local_with_delay_push(delay_push: Push) -> bytes:
    return serialize([Op(OP_IF), push(REV), Op(OP_ELSE), delay_push, Op(OP_CHECKSEQUENCEVERIFY),
                      Op(OP_DROP), push(DELAYED), Op(OP_ENDIF), Op(OP_CHECKSIG)])


def test_match_local_requires_minimal_delay():
    minimal = encode_script_num(144)
    padded = minimal + b"\x00"
    assert decode_script_num(padded) == 144
    assert match_local(_local_with_delay_push(Push(minimal, len(minimal)))).to_self_delay == 144
    assert match_local(_local_with_delay_push(Push(padded, len(padded)))) is None
    # minimal bytes but carried by PUSHDATA1
    assert match_local(_local_with_delay_push(Push(minimal, 0x4C))) is None
    # small delays must use OP_N, not a one-byte push
    assert match_local(_local_with_delay_push(Push(b"\x06", 1))) is None


def test_match_local_delay_bounds():
    assert match_local(_local_with_delay_push(push(encode_script_num(0xFFFF)))).to_self_delay == 0xFFFF
    assert match_local(_local_with_delay_push(push(encode_script_num(0x10000)))) is None
    assert match_local(_local_with_delay_push(push(encode_script_num(-5)))) is None


def test_match_anchor():
    assert match_anchor(anchor_script(key(2))).funding_pubkey == key(2)
    assert match_anchor(funding_script(key(0), key(1))) is None
    op15 = anchor_script(key(2)).replace(b"\x60\xb2", bytes([OP_15]) + b"\xb2")
    assert match_anchor(op15) is None


def test_match_remote_delayed():
    assert match_remote_delayed(remote_delayed_script(key(3))) == key(3)
    assert match_remote_delayed(anchor_script(key(3))) is None


def _matches(script: bytes) -> int:
    return sum(m(script) is not None for m in (match_funding, match_local, match_anchor))


def test_matchers_exclusive_on_templates(corpus):
    for script in templates():
        assert _matches(script) <= 1
    for tx in corpus.source:
        for txin in tx.inputs:
            if txin.witness:
                assert _matches(txin.witness[-1]) <= 1


def _random_script(rng: random.Random) -> bytes:
    # mostly template-shaped noise so matchers get exercised past their length checks
    base = rng.choice(templates())
    mode = rng.randrange(4)
    if mode == 0:
        return bytes(rng.randrange(256) for _ in range(rng.randrange(1, 120)))
    b = bytearray(base)
    for _ in range(rng.randrange(1, 4)):
        i = rng.randrange(len(b))
        if mode == 1:
            b[i] = rng.randrange(256)
        elif mode == 2:
            del b[i]
        else:
            b.insert(i, rng.randrange(256))
    return bytes(b)


def test_matchers_exclusive_random_scripts():
    rng = random.Random(7)
    for _ in range(100_000):
        assert _matches(_random_script(rng)) <= 1


@settings(max_examples=300)
@given(st.lists(st.sampled_from([0x00, 0x51, 0x52, 0x63, 0x67, 0x68, 0x75, 0xAC, 0xAE, 0xB2, 0x60, 0x73, 0x64]),
                max_size=10), st.lists(st.just(key(1)), max_size=3))
def test_matchers_exclusive_opcode_soup(ops, keys):
    script = serialize([push(k) for k in keys] + [Op(c) for c in ops])
    assert _matches(script) <= 1


# --- output classification ----------------------------------------------------

def _p2wsh(script: bytes, value: int = 10_000) -> TxOutput:
    return TxOutput(value, p2wsh_script_pubkey(script))


def test_classify_unspent():
    assert classify_output(_p2wsh(local_script(REV, DELAYED, 144))).kind is OutputKind.UNSPENT


def test_classify_local_and_anchor():
    s = local_script(REV, DELAYED, 144)
    c = classify_output(_p2wsh(s), s)
    assert c.kind is OutputKind.TO_LOCAL and c.local.to_self_delay == 144
    a = anchor_script(key(2))
    assert classify_output(_p2wsh(a), a).kind is OutputKind.ANCHOR


def test_classify_remote_forms():
    assert classify_output(TxOutput(1, p2wpkh_script_pubkey(bytes(20)))).kind is OutputKind.TO_REMOTE
    r = remote_delayed_script(key(3))
    assert classify_output(_p2wsh(r), spend_witness=[b"sig", r]).kind is OutputKind.TO_REMOTE


def test_classify_htlc_by_elimination():
    hashlock = bytes([0xA8, 0x20]) + bytes(32) + bytes([0x87])  # SHA256 <h> EQUAL
    assert classify_output(_p2wsh(hashlock), hashlock).kind is OutputKind.HTLC
    h = offered_htlc_script(bytes(20), key(4), key(5), bytes(20))
    assert classify_output(_p2wsh(h), spend_witness=[b"x", h]).kind is OutputKind.HTLC


def test_classify_hash_mismatch():
    with pytest.raises(HashMismatch):
        classify_output(_p2wsh(anchor_script(key(2))), anchor_script(key(3)))


@given(st.binary(min_size=34, max_size=34), st.integers(min_value=0, max_value=10**8))
def test_no_htlc_without_revealed_script(spk, value):
    assert classify_output(TxOutput(value, spk)).kind is not OutputKind.HTLC


# --- spend path ---------------------------------------------------------------

def test_local_spend_paths():
    s = local_script(REV, DELAYED, 144)
    script = match_local(s)
    assert classify_local_spend([b"sig", b"\x01", s], script) is LocalSpendPath.REVOCATION
    assert classify_local_spend([b"sig", b"", s], script) is LocalSpendPath.DELAYED
    assert classify_local_spend([b"sig", b"\x80", s], script) is LocalSpendPath.DELAYED  # negative zero
    with pytest.raises(MalformedWitness):
        classify_local_spend([s], script)
    with pytest.raises(MalformedWitness):
        classify_local_spend([b"sig", b"", local_script(REV, DELAYED, 145)], script)
