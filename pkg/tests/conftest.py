import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List

import pytest

from lnlife.chain import OutPoint, Transaction, TxId, TxInput, TxOutput, p2wpkh_script_pubkey, p2wsh_script_pubkey
from lnlife.pipeline import PipelineConfig, run_pipeline
from lnlife.report import ReportBundle
from lnlife.script import funding_script
from lnlife.source import FixtureSource
from lnlife.synth import DEFAULT_CORPUS, ChannelTruth, generate_corpus, read_truth

CORPUS_SEED = 42


def key(i: int) -> bytes:
    """Deterministic 33-byte compressed-key lookalike."""
    return bytes([2 + i % 2]) + hashlib.sha256(b"key%d" % i).digest()


def coinbase(value: int, height: int = 100, tag: int = 0) -> Transaction:
    prev = OutPoint(TxId(hashlib.sha256(b"coinbase%d" % tag).digest()), 0)
    out = TxOutput(value, p2wpkh_script_pubkey(hashlib.sha256(b"w%d" % tag).digest()[:20]))
    return Transaction.build([TxInput(prev)], [out], block_height=height, block_time=1_600_000_000 + 600 * height)


def spend(prevs, outputs, height, locktime=0, witnesses=None, sequence=0xFFFFFFFF) -> Transaction:
    witnesses = witnesses or [()] * len(prevs)
    inputs = [TxInput(p, w, sequence) for p, w in zip(prevs, witnesses)]
    return Transaction.build(inputs, outputs, locktime, height, 1_600_000_000 + 600 * height)


def wpkh(tag: int) -> bytes:
    return p2wpkh_script_pubkey(hashlib.sha256(b"pkh%d" % tag).digest()[:20])


def channel_output(value: int, a: int = 0, b: int = 1) -> TxOutput:
    return TxOutput(value, p2wsh_script_pubkey(funding_script(key(a), key(b))))


def funding_witness(a: int = 0, b: int = 1):
    return (b"", b"\x30" * 71, b"\x30" * 71, funding_script(key(a), key(b)))


@dataclass
class Corpus:
    root: Path
    paths: Dict[str, Path]
    source: FixtureSource
    truth: List[ChannelTruth]
    bundle: ReportBundle

    @property
    def truth_by_funding(self) -> Dict[str, ChannelTruth]:
        return {t.funding: t for t in self.truth}

    @property
    def records_by_funding(self):
        return {str(r.funding): r for r in self.bundle.channels}


@pytest.fixture(scope="session")
def corpus(tmp_path_factory) -> Corpus:
    root = tmp_path_factory.mktemp("corpus")
    paths = generate_corpus(DEFAULT_CORPUS, CORPUS_SEED, root)
    source = FixtureSource.from_path(paths["chain"].parent)
    bundle = run_pipeline(PipelineConfig(source, paths["gossip"]))
    return Corpus(root, paths, source, read_truth(paths["truth"]), bundle)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS, key=lambda l: l.split("]")[0][-2:]):
            terminalreporter.write_line(line)
