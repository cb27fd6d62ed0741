"""Acceptance gate: one test per criterion, each logging a PASS/FAIL line.

The lines are collected in ``RESULTS`` and echoed in the terminal summary
(see conftest.py), so they show up even when output capture is on.
"""

import filecmp
import math
import random
import statistics
import time
from typing import List, Tuple

import numpy as np
import pytest

from lnlife.chain import TxOutput, p2wsh_script_pubkey
from lnlife.cli import main
from lnlife.errors import LockViolated
from lnlife.gossip import (
    FeeParams, GossipEvent, GossipKind, ShortChannelId, align_daily, dedup_updates, fee_correlation, group_updates,
    load_gossip,
)
from lnlife.heuristics import TxGraph, tracing_heuristic
from lnlife.lifecycle import (
    ClosingType,
    build_closing_report,
    is_commitment,
    share_to_imbalance,
)
from lnlife.pipeline import PipelineConfig, run_pipeline
from lnlife.script import LocalSpendPath, OutputKind, classify_local_spend, classify_output, local_script
from lnlife.source import FixtureSource
from lnlife.synth import DEFAULT_CORPUS, generate, generate_corpus, read_truth

from conftest import CORPUS_SEED, channel_output, coinbase, funding_witness, key, spend, wpkh

pytestmark = pytest.mark.acceptance

RESULTS: List[str] = []


def record(n: int, title: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} [{n:2d}] {title}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


# 1 -------------------------------------------------------------------------------

def test_01_oracle_classification(tmp_path):
    start = time.perf_counter()
    paths = generate_corpus(DEFAULT_CORPUS, CORPUS_SEED, tmp_path)
    source = FixtureSource.from_path(paths["chain"].parent)
    bundle = run_pipeline(PipelineConfig(source, paths["gossip"]))
    elapsed = time.perf_counter() - start
    truth = read_truth(paths["truth"])
    records = {str(r.funding): r for r in bundle.channels}
    wrong = 0
    for t in truth:
        r = records.get(t.funding)
        got = r.closing.closing_type.value if r is not None and r.closing else None
        if r is None or got != t.closing_type or r.visibility.value != t.visibility:
            wrong += 1
    scenarios = len({t.scenario for t in truth})
    ok = wrong == 0 and len(records) == len(truth) and scenarios == 500 and elapsed < 10
    record(1, "oracle classification", ok,
           f"{len(truth) - wrong}/{len(truth)} channels from {scenarios} scenarios correct in {elapsed:.2f}s")


# 2 -------------------------------------------------------------------------------

def test_02_imbalance_share_pairs():
    pairs = [(0.895, 0.79), (0.935, 0.87), (0.94, 0.88), (0.98, 0.96)]
    errs = [abs(share_to_imbalance(s) - want) for s, want in pairs]
    record(2, "imbalance from balance share", max(errs) < 1e-3, f"max error {max(errs):.2e} over {len(pairs)} pairs")


# 3 -------------------------------------------------------------------------------

def test_03_locktime_boundaries():
    cases = [(536870911, False), (536870912, True), (553648127, True), (553648128, False), (0, False)]
    cb = coinbase(100_000)
    got = [bool(is_commitment(spend([cb.outpoint(0)], [TxOutput(1, wpkh(1))], 101, locktime=lt))) for lt, _ in cases]
    ok = got == [want for _, want in cases]
    record(3, "commitment locktime range", ok, ", ".join(f"{lt}->{g}" for (lt, _), g in zip(cases, got)))


# 4 -------------------------------------------------------------------------------

def test_04_witness_paths():
    rng = random.Random(4)
    correct = 0
    for i in range(1000):
        revoke = i % 2 == 0
        delay = rng.randint(1, 2016)
        script = local_script(key(rng.randrange(10**6)), key(rng.randrange(10**6)), delay)
        out = TxOutput(rng.randint(1000, 10**7), p2wsh_script_pubkey(script))
        selector = rng.choice([b"\x01", b"\x02", b"\x01\x00"]) if revoke else rng.choice([b"", b"\x00", b"\x80"])
        witness = (rng.randbytes(72), selector, script)
        cls = classify_output(out, spend_witness=witness)
        path = classify_local_spend(witness, cls.local) if cls.kind is OutputKind.TO_LOCAL else None
        want = LocalSpendPath.REVOCATION if revoke else LocalSpendPath.DELAYED
        correct += path is want and cls.local.to_self_delay == delay
    record(4, "local-output spend path", correct == 1000, f"{correct}/1000 correct (500 per branch)")


# 5 -------------------------------------------------------------------------------

def test_05_htlc_extraction(corpus):
    checked = {}
    bad = 0
    records = corpus.records_by_funding
    for t in corpus.truth:
        if not t.scenario_kind.startswith("htlc_close") or t.closing_type is None:
            continue
        r = records[t.funding]
        n = int(t.scenario_kind.split(":")[1])
        checked[n] = checked.get(n, 0) + 1
        if (r.closing.htlc_count, r.closing.htlc_values) != (len(t.htlc_values), t.htlc_values) or len(t.htlc_values) != n:
            bad += 1
    for n in (0, 1, 2, 5):
        for seed in range(5):
            data = generate(f"htlc_close:{n}", 1000 + seed)
            src = FixtureSource(data.transactions)
            bundle = run_pipeline(PipelineConfig(src, public_channels=[t.outpoint for t in data.truth
                                                                       if t.visibility == "public"]))
            recs = {str(r.funding): r for r in bundle.channels}
            for t in data.truth:
                if t.scenario_kind.startswith("htlc_close") and t.closing_type:
                    c = recs[t.funding].closing
                    checked[n] += 1
                    bad += (c.htlc_count, c.htlc_values) != (n, t.htlc_values)
    ok = bad == 0 and set(checked) == {0, 1, 2, 5}
    record(5, "HTLC extraction", ok, f"{sum(checked.values()) - bad}/{sum(checked.values())} closes exact, by n: {dict(sorted(checked.items()))}")


# 6 -------------------------------------------------------------------------------

def test_06_peeling_chain(corpus):
    data = generate("peeling_chain:5", CORPUS_SEED)
    graph = TxGraph.from_transactions(data.transactions)
    public = {t.outpoint for t in data.truth if t.visibility == "public"}
    deep = tracing_heuristic(graph, public, max_depth=5)
    deeper = tracing_heuristic(graph, public, max_depth=10)
    none = tracing_heuristic(graph, public, max_depth=0)
    depths = sorted(c.chain_depth for c in deep)
    corpus_public = {t.funding for t in corpus.truth if t.visibility == "public"}
    leaked = [row for row in corpus.bundle["private_candidates"].rows if row[0] in corpus_public]
    ok = depths == [1, 2, 3, 4, 5] and deeper == deep and none == [] and not leaked
    record(6, "peeling chain tracing", ok,
           f"depths {depths} at max_depth 5, {len(none)} at max_depth 0, {len(leaked)} public seeds among "
           f"{len(corpus.bundle['private_candidates'].rows)} corpus candidates")


# 7 -------------------------------------------------------------------------------

def test_07_dedup_property():
    rng = random.Random(7)
    scid = ShortChannelId(1, 1, 0)
    failures = 0
    for case in range(10_000):
        k = rng.randint(0, 8)
        blocks = []
        for _ in range(k):
            ppm = rng.randrange(4)
            blocks.append((FeeParams(1000, ppm, 40, 1, rng.random() < 0.1), rng.randint(1, 5)))
        events = []
        ts = 0
        for params, repeats in blocks:
            for _ in range(repeats):
                ts += rng.randint(1, 1000)
                events.append(GossipEvent(GossipKind.CHANNEL_UPDATE, ts, scid=scid, direction=0, params=params))
        changes = sum(1 for a, b in zip(blocks, blocks[1:]) if a[0] != b[0])
        out = dedup_updates(events)
        expected = changes + 1 if blocks else 0
        failures += len(out) != expected or dedup_updates(out) != out
    record(7, "gossip dedup", failures == 0, f"{10_000 - failures}/10000 random cases hold length and idempotence")


# 8 -------------------------------------------------------------------------------

def _reference_pearson(x, y) -> float:
    # separately written two-pass formula
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)


def _reference_align(side0, side1) -> Tuple[list, list]:
    def daily(events):
        out = {}
        for e in events:
            out[e.timestamp // 86400] = e.params.fee_proportional_millionths
        return out

    d0, d1 = daily(side0), daily(side1)
    xs, ys = [], []
    for day in range(max(min(d0), min(d1)), max(max(d0), max(d1)) + 1):
        x = d0[max(d for d in d0 if d <= day)]
        y = d1[max(d for d in d1 if d <= day)]
        xs.append(x)
        ys.append(y)
    return xs, ys


def test_08_fee_correlation(corpus):
    rng = np.random.default_rng(8)
    scid = ShortChannelId(1, 1, 0)
    vals = [int(v) for v in rng.integers(1, 5000, 150)]

    def series(values, d):
        return [GossipEvent(GossipKind.CHANNEL_UPDATE, i * 86400 + 100, scid=scid, direction=d,
                            params=FeeParams(1000, v)) for i, v in enumerate(values)]

    same = fee_correlation(series(vals, 0), series(vals, 1))
    mirror = fee_correlation(series(vals, 0), series([6000 - v for v in vals], 1))

    events, _ = load_gossip(corpus.paths["gossip"])
    streams = group_updates(events)
    rebalance = [t for t in corpus.truth if t.scenario_kind == "fee_rebalance_gossip"]
    worst_r, worst_diff = -1.0, 0.0
    for t in rebalance:
        sc = ShortChannelId.parse(t.scid)
        s0 = dedup_updates(streams[(sc, 0)])
        s1 = dedup_updates(streams[(sc, 1)])
        r = fee_correlation(s0, s1)
        x, y = _reference_align(s0, s1)
        a, b = align_daily(s0, s1)
        ref = _reference_pearson(x, y)
        diff = max(abs(r - ref), abs(r - statistics.correlation(x, y)))
        same_grid = list(a) == x and list(b) == y
        worst_r = max(worst_r, r)
        worst_diff = max(worst_diff, diff if same_grid else math.inf)
    ok = (abs(same - 1) < 1e-9 and abs(mirror + 1) < 1e-9 and rebalance
          and worst_r < -0.9 and worst_diff < 1e-9)
    record(8, "fee correlation", ok,
           f"identical r={same:.12f}, mirrored r={mirror:.12f}, {len(rebalance)} rebalancing channels "
           f"max r={worst_r:.4f}, max |r - reference|={worst_diff:.1e}")


# 9 -------------------------------------------------------------------------------

def test_09_conservation(corpus):
    closed = [r for r in corpus.bundle.channels if r.closing is not None]
    bad = [r for r in closed
           if r.closing.out1 + r.closing.out2 + sum(r.closing.htlc_values) + r.closing.anchor_value
           + r.closing.unspent_value + r.closing.fee != r.capacity]
    truth = corpus.truth_by_funding
    fee_mismatch = [r for r in closed if r.closing.fee != truth[str(r.funding)].fee]
    ok = closed and not bad and not fee_mismatch
    record(9, "value conservation", ok, f"{len(closed) - len(bad)}/{len(closed)} closed channels balance exactly, "
           f"{len(fee_mismatch)} fee mismatches against truth")


# 10 ------------------------------------------------------------------------------

def test_10_determinism(corpus, tmp_path):
    base = ["--fixtures", str(corpus.paths["chain"].parent), "--gossip", str(corpus.paths["gossip"])]
    runs = {}
    for fmt in ("csv", "json"):
        for label, workers in (("a", 1), ("b", 1), ("w8", 8)):
            out = tmp_path / f"{fmt}-{label}"
            assert main(base + ["--format", fmt, "--workers", str(workers), "--out-dir", str(out), "report"]) == 0
            runs[(fmt, label)] = out
    differing = []
    files = 0
    for fmt in ("csv", "json"):
        ref = runs[(fmt, "a")]
        names = sorted(p.name for p in ref.iterdir())
        for label in ("b", "w8"):
            other = runs[(fmt, label)]
            if sorted(p.name for p in other.iterdir()) != names:
                differing.append(f"{fmt}-{label}: file set")
                continue
            _, mismatch, errors = filecmp.cmpfiles(ref, other, names, shallow=False)
            differing += [f"{fmt}-{label}:{m}" for m in mismatch + errors]
            files += len(names)
    record(10, "deterministic report", not differing,
           f"{files} file comparisons across 2 runs and workers 1/8, {len(differing)} differ")


# 11 ------------------------------------------------------------------------------

def _revoked_close(lag: int, selector: bytes, delay: int = 144):
    cb = coinbase(1_010_000, 99, tag=11)
    fund = spend([cb.outpoint(0)], [channel_output(1_000_000)], 100)
    ls = local_script(key(40), key(41), delay)
    close = spend([fund.outpoint(0)], [TxOutput(700_000, p2wsh_script_pubkey(ls)), TxOutput(299_000, wpkh(5))],
                  500, locktime=0x20ABCDEF, witnesses=[funding_witness()])
    sweep = spend([close.outpoint(0)], [TxOutput(699_000, wpkh(6))], 500 + lag, witnesses=[(b"sig", selector, ls)])
    return fund.outpoint(0), close, {close.outpoint(0): sweep}


def test_11_delay_math():
    got = {}
    for lag in (0, 1):
        op, close, spenders = _revoked_close(lag, b"\x01")
        rep = build_closing_report(op, 1_000_000, close, spenders, {op})
        got[f"revocation+{lag}"] = (rep.closing_type is ClosingType.REVOKED, rep.revocation_delay)
    for lag in (0, 1):
        op, close, spenders = _revoked_close(144 + lag, b"")
        rep = build_closing_report(op, 1_000_000, close, spenders, {op})
        got[f"spend+{lag}"] = (rep.closing_type is ClosingType.LOCAL_REMOTE, rep.spending_delay)
    op, close, spenders = _revoked_close(143, b"")
    try:
        build_closing_report(op, 1_000_000, close, spenders, {op})
        premature = False
    except LockViolated:
        premature = True
    ok = got == {"revocation+0": (True, 0), "revocation+1": (True, 1), "spend+0": (True, 0),
                 "spend+1": (True, 1)} and premature
    record(11, "revocation and spending delays", ok,
           f"{ {k: v[1] for k, v in got.items()} }, premature spend raises LockViolated: {premature}")
