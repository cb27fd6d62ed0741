"""Deterministic synthetic channel lifecycles with ground truth.

Every scenario builds real script templates, commitment locktimes and
witnesses, so the classifiers run on the generated data exactly as they
would on chain data. Keys and signatures are placeholders of the right size.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .chain import OutPoint, Transaction, TxId, TxInput, TxOutput, p2wpkh_script_pubkey, p2wsh_script_pubkey
from .gossip import FeeParams, GossipEvent, GossipKind, ShortChannelId, dump_events
from .lifecycle import COMMITMENT_LOCKTIME_MIN, ClosingType, Visibility
from .script import (
    anchor_script,
    funding_script,
    local_script,
    offered_htlc_script,
    received_htlc_script,
    remote_delayed_script,
)
from .source import dumps_tx

GENESIS_TIME = 1_231_006_505
BLOCK_SPACING = 600
BASE_HEIGHT = 650_000
HEIGHT_SPAN = 52 * 1008
ANNOUNCE_CONFIRMATIONS = 6
ANCHOR_VALUE = 330
NODE_POOL = 240
TRUTH_FORMAT = "lnlife-truth"


class Kind(enum.Enum):
    COOP_X1 = "coopx1"
    COOP_X2 = "coopx2"
    UNI_LOCAL = "uni_local"
    UNI_LOCAL_REMOTE = "uni_local_remote"
    UNI_REMOTE = "uni_remote"
    REVOKED = "revoked"
    PEELING_CHAIN = "peeling_chain"
    HTLC_CLOSE = "htlc_close"
    ANCHOR_CLOSE = "anchor_close"
    FEE_REBALANCE_GOSSIP = "fee_rebalance_gossip"


@dataclass(frozen=True)
class ScenarioKind:
    kind: Kind
    arg: int = 0

    @classmethod
    def parse(cls, text: str) -> "ScenarioKind":
        name, _, arg = text.partition(":")
        kind = Kind(name)
        if kind in (Kind.PEELING_CHAIN, Kind.HTLC_CLOSE):
            return cls(kind, int(arg) if arg else (5 if kind is Kind.PEELING_CHAIN else 1))
        if arg:
            raise ValueError(f"{name} takes no argument")
        return cls(kind)

    def __str__(self) -> str:
        if self.kind in (Kind.PEELING_CHAIN, Kind.HTLC_CLOSE):
            return f"{self.kind.value}:{self.arg}"
        return self.kind.value


DEFAULT_CORPUS: List[Tuple[ScenarioKind, int]] = [
    (ScenarioKind(Kind.COOP_X1), 80),
    (ScenarioKind(Kind.COOP_X2), 110),
    (ScenarioKind(Kind.UNI_LOCAL), 50),
    (ScenarioKind(Kind.UNI_LOCAL_REMOTE), 60),
    (ScenarioKind(Kind.UNI_REMOTE), 40),
    (ScenarioKind(Kind.REVOKED), 30),
    (ScenarioKind(Kind.PEELING_CHAIN, 5), 10),
    (ScenarioKind(Kind.HTLC_CLOSE, 0), 10),
    (ScenarioKind(Kind.HTLC_CLOSE, 1), 15),
    (ScenarioKind(Kind.HTLC_CLOSE, 2), 15),
    (ScenarioKind(Kind.HTLC_CLOSE, 5), 10),
    (ScenarioKind(Kind.ANCHOR_CLOSE), 50),
    (ScenarioKind(Kind.FEE_REBALANCE_GOSSIP), 20),
]


def derive_seed(*parts) -> int:
    digest = hashlib.sha256("/".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big")


class ChainClock:
    """Block timestamps: nominal 600 s spacing, seeded jitter under half a block.

    Jitter stays within +-299 s so time is strictly increasing in height.
    """

    def __init__(self, seed: int):
        self.seed = seed

    def time(self, height: int) -> int:
        digest = hashlib.sha256(f"clock/{self.seed}/{height}".encode()).digest()
        jitter = int.from_bytes(digest[:4], "big") % 599 - 299
        return GENESIS_TIME + BLOCK_SPACING * height + jitter


def node_pool(seed: int, size: int = NODE_POOL) -> List[bytes]:
    rng = random.Random(derive_seed("nodes", seed))
    return [bytes([2 + rng.getrandbits(1)]) + rng.randbytes(32) for _ in range(size)]


@dataclass
class ChannelTruth:
    funding: str
    capacity: int
    visibility: str
    scenario: int
    scenario_kind: str
    open_height: int
    open_time: int
    scid: Optional[str] = None
    node_ids: List[str] = field(default_factory=list)
    close_height: Optional[int] = None
    close_time: Optional[int] = None
    closing_type: Optional[str] = None
    out1: int = 0
    out2: int = 0
    htlc_values: List[int] = field(default_factory=list)
    anchors: int = 0
    anchor_value: int = 0
    fee: int = 0
    to_self_delay: Optional[int] = None
    revoked: bool = False
    revocation_delay: Optional[int] = None
    spending_delay: Optional[int] = None
    resurrection: List[List[str]] = field(default_factory=list)
    chain_depth: Optional[int] = None
    updates: Dict[str, int] = field(default_factory=dict)

    @property
    def outpoint(self) -> OutPoint:
        return OutPoint.parse(self.funding)

    @property
    def lifetime_days(self) -> Optional[float]:
        if self.close_time is None:
            return None
        return (self.close_time - self.open_time) / 86400

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "ChannelTruth":
        return cls(**{k: obj[k] for k in cls.__dataclass_fields__ if k in obj})


@dataclass
class _PendingUpdate:
    funding: OutPoint
    timestamp: int
    direction: int
    params: FeeParams


@dataclass
class Scenario:
    """One generated scenario before block positions and scids are fixed."""

    index: int
    kind: ScenarioKind
    txs: List[Transaction] = field(default_factory=list)
    truths: List[ChannelTruth] = field(default_factory=list)
    announcements: List[Tuple[OutPoint, int, Tuple[bytes, bytes]]] = field(default_factory=list)
    updates: List[_PendingUpdate] = field(default_factory=list)


@dataclass
class _Channel:
    funding_tx: Transaction
    outpoint: OutPoint
    keys: Tuple[bytes, bytes]
    truth: ChannelTruth

    @property
    def script(self) -> bytes:
        return funding_script(*self.keys)


class _Builder:
    def __init__(self, kind: ScenarioKind, seed: int, index: int, clock: ChainClock, nodes: Sequence[bytes]):
        self.rng = random.Random(derive_seed("scenario", seed, str(kind)))
        self.seed = seed
        self.clock = clock
        self.nodes = nodes
        self.out = Scenario(index, kind)
        self._wallet = 0

    # primitives

    def key(self) -> bytes:
        return bytes([2 + self.rng.getrandbits(1)]) + self.rng.randbytes(32)

    def sig(self) -> bytes:
        return b"\x30" + self.rng.randbytes(70) + b"\x01"

    def p2wpkh(self) -> bytes:
        return p2wpkh_script_pubkey(self.rng.randbytes(20))

    def wallet_input(self) -> TxInput:
        self._wallet += 1
        txid = TxId(hashlib.sha256(f"wallet/{self.seed}/{self.out.kind}/{self._wallet}".encode()).digest())
        return TxInput(OutPoint(txid, self.rng.randrange(4)), (self.sig(), self.key()), 0xFFFFFFFD)

    def tx(self, inputs, outputs, height: int, locktime: int = 0) -> Transaction:
        tx = Transaction.build(inputs, outputs, locktime, height, self.clock.time(height))
        self.out.txs.append(tx)
        return tx

    def sweep(self, prevout: OutPoint, value: int, witness, height: int, sequence: int = 0xFFFFFFFF) -> Transaction:
        fee = min(self.rng.randint(150, 600), value // 2)
        return self.tx([TxInput(prevout, tuple(witness), sequence)], [TxOutput(value - fee, self.p2wpkh())], height)

    def capacity(self) -> int:
        return self.rng.choice([
            self.rng.randint(100_000, 1_000_000),
            self.rng.randint(1_000_000, 5_000_000),
            self.rng.randint(5_000_000, 16_000_000),
        ])

    def visibility(self) -> Visibility:
        return Visibility.PUBLIC if self.rng.random() < 0.7 else Visibility.PRIVATE

    # channel lifecycle

    def open_channel(self, capacity: int, height: int, visibility: Visibility,
                     source: Optional[TxInput] = None, change: int = 0) -> Tuple[_Channel, Optional[OutPoint]]:
        keys = tuple(sorted((self.key(), self.key())))
        chan_out = TxOutput(capacity, p2wsh_script_pubkey(funding_script(*keys)))
        outputs = [chan_out]
        if change:
            outputs.append(TxOutput(change, self.p2wpkh()))
            if self.rng.random() < 0.5:
                outputs.reverse()
        tx = self.tx([source or self.wallet_input()], outputs, height)
        vout = outputs.index(chan_out)
        change_op = OutPoint(tx.txid, 1 - vout) if change else None
        op = OutPoint(tx.txid, vout)
        truth = ChannelTruth(
            funding=str(op), capacity=capacity, visibility=visibility.value,
            scenario=self.out.index, scenario_kind=str(self.out.kind),
            open_height=height, open_time=self.clock.time(height),
        )
        self.out.truths.append(truth)
        chan = _Channel(tx, op, keys, truth)
        if visibility is Visibility.PUBLIC:
            self.gossip(chan)
        return chan, change_op

    def funding_witness(self, chan: _Channel) -> Tuple[bytes, ...]:
        return (b"", self.sig(), self.sig(), chan.script)

    def close_meta(self, chan: _Channel, tx: Transaction, closing: ClosingType) -> None:
        t = chan.truth
        t.close_height = tx.block_height
        t.close_time = tx.block_time
        t.closing_type = closing.value
        t.fee = t.capacity - sum(o.value for o in tx.outputs)

    def split(self, total: int) -> Tuple[int, int]:
        # skewed towards one-sided closes
        share = self.rng.betavariate(0.6, 0.6)
        a = max(1, min(total - 1, int(total * share)))
        return a, total - a

    def coop_close(self, chan: _Channel, height: int, n_outputs: int) -> Transaction:
        fee = self.rng.randint(200, 3000)
        total = chan.truth.capacity - fee
        values = [total] if n_outputs == 1 else list(self.split(total))
        outputs = [TxOutput(v, self.p2wpkh()) for v in values]
        tx = self.tx([TxInput(chan.outpoint, self.funding_witness(chan), 0xFFFFFFFF)], outputs, height)
        self.close_meta(chan, tx, ClosingType.COOP_X1 if n_outputs == 1 else ClosingType.COOP_X2)
        chan.truth.out1 = values[0]
        chan.truth.out2 = values[1] if n_outputs == 2 else 0
        return tx

    def to_self_delay(self) -> int:
        return self.rng.choice([144, 144, 144, 432, 720, 1008, 2016, self.rng.randint(6, 2016)])

    def commitment(
        self,
        chan: _Channel,
        height: int,
        closing: ClosingType,
        local: int = 0,
        remote: int = 0,
        htlcs: Sequence[int] = (),
        anchors: bool = False,
        revoke: bool = False,
    ) -> Transaction:
        """Broadcast a commitment and spend every script output it reveals."""
        t = chan.truth
        delay = self.to_self_delay()
        local_ws = local_script(self.key(), self.key(), delay) if local else None
        remote_ws = remote_delayed_script(self.key()) if remote and anchors else None
        entries = []  # (kind, output, witness script, value)
        if local:
            entries.append(("local", TxOutput(local, p2wsh_script_pubkey(local_ws)), local_ws))
        if remote:
            spk = p2wsh_script_pubkey(remote_ws) if remote_ws else self.p2wpkh()
            entries.append(("remote", TxOutput(remote, spk), remote_ws))
        for value in htlcs:
            if self.rng.random() < 0.5:
                ws = offered_htlc_script(self.rng.randbytes(20), self.key(), self.key(), self.rng.randbytes(20))
            else:
                ws = received_htlc_script(self.rng.randbytes(20), self.key(), self.key(), self.rng.randbytes(20),
                                          height + self.rng.randint(10, 500))
            entries.append(("htlc", TxOutput(value, p2wsh_script_pubkey(ws)), ws))
        if anchors:
            for key in chan.keys:
                ws = anchor_script(key)
                entries.append(("anchor", TxOutput(ANCHOR_VALUE, p2wsh_script_pubkey(ws)), ws))
        self.rng.shuffle(entries)

        locktime = COMMITMENT_LOCKTIME_MIN | self.rng.getrandbits(24)
        sequence = 0x80000000 | self.rng.getrandbits(24)
        tx = self.tx([TxInput(chan.outpoint, self.funding_witness(chan), sequence)],
                     [e[1] for e in entries], height, locktime)
        self.close_meta(chan, tx, closing)
        t.out1 = local or remote
        t.out2 = remote if local else 0
        t.htlc_values = [e[1].value for e in entries if e[0] == "htlc"]
        t.anchors = 2 if anchors else 0
        t.anchor_value = 2 * ANCHOR_VALUE if anchors else 0
        if local:
            t.to_self_delay = delay

        for vout, (kind, out, ws) in enumerate(entries):
            op = OutPoint(tx.txid, vout)
            if kind == "local":
                if revoke:
                    lag = self.rng.choice([0, 1])
                    self.sweep(op, out.value, (self.sig(), b"\x01", ws), height + lag)
                    t.revoked = True
                    t.revocation_delay = lag
                else:
                    lag = self.rng.choice([0, 0, 1, 1, 2, 3, self.rng.randint(4, 300)])
                    self.sweep(op, out.value, (self.sig(), b"", ws), height + delay + lag, sequence=delay)
                    t.spending_delay = lag
            elif kind == "remote" and ws is not None:
                self.sweep(op, out.value, (self.sig(), ws), height + self.rng.randint(1, 50), sequence=1)
            elif kind == "htlc":
                if self.rng.random() < 0.5:
                    witness = (b"", self.sig(), self.sig(), b"", ws)
                else:
                    witness = (b"", self.sig(), self.sig(), self.rng.randbytes(32), ws)
                self.sweep(op, out.value, witness, height + self.rng.randint(1, 200))
            elif kind == "anchor":
                if self.rng.random() < 0.5:
                    self.sweep(op, out.value, (self.sig(), ws), height)
                else:
                    self.sweep(op, out.value, (b"", ws), height + 16 + self.rng.randint(0, 100), sequence=16)
        return tx

    def resurrect(self, chan: _Channel, close: Transaction, vout: int, height: int) -> Optional[_Channel]:
        value = close.outputs[vout].value
        fee = self.rng.randint(200, 2000)
        if value - fee < 100_000:
            return None
        src = TxInput(OutPoint(close.txid, vout), (self.sig(), self.key()), 0xFFFFFFFD)
        new, _ = self.open_channel(value - fee, height, self.visibility(), source=src)
        chan.truth.resurrection.append([f"{close.txid}:{vout}", str(new.outpoint.txid)])
        return new

    # gossip

    def gossip(self, chan: _Channel, n_updates: Optional[int] = None, rebalance: bool = False) -> None:
        """Register an announcement now; updates are drawn once the lifetime is known."""
        a, b = self.rng.sample(range(len(self.nodes)), 2)
        ends = (self.nodes[a], self.nodes[b])
        chan.truth.node_ids = [k.hex() for k in ends]
        announce_h = chan.truth.open_height + ANNOUNCE_CONFIRMATIONS
        self.out.announcements.append((chan.outpoint, self.clock.time(announce_h), ends))
        self._pending_gossip.append((chan, n_updates, rebalance))

    def finish_gossip(self, horizon: int) -> None:
        for chan, n_updates, rebalance in self._pending_gossip:
            t = chan.truth
            start = self.clock.time(t.open_height + ANNOUNCE_CONFIRMATIONS)
            end = t.close_time if t.close_time is not None else horizon
            if end - start < 2:
                end = start + 2
            counts = {}
            for direction in (0, 1):
                if rebalance:
                    stamps, ppms = self.rebalance_series(start, end, direction)
                else:
                    stamps, ppms = self.random_series(start, end, n_updates)
                base = self.rng.choice([0, 1000, 1000, 500])
                effective = 0
                prev = None
                for ts, ppm in zip(stamps, ppms):
                    params = FeeParams(base, ppm, 40, 1000, False)
                    self.out.updates.append(_PendingUpdate(chan.outpoint, ts, direction, params))
                    if params != prev:
                        effective += 1
                    prev = params
                counts[str(direction)] = effective
            t.updates = counts

    def _stamps(self, start: int, end: int, n: int) -> List[int]:
        n = min(n, end - start)
        return sorted(self.rng.sample(range(start, end), n))

    def random_series(self, start: int, end: int, n_updates: Optional[int]) -> Tuple[List[int], List[int]]:
        n = self.rng.randint(1, 30) if n_updates is None else n_updates
        stamps = self._stamps(start, end, n)
        ppm = self.rng.choice([1, 10, 100, 500, 1000])
        ppms = []
        for i in range(len(stamps)):
            if i and self.rng.random() < 0.3:
                pass  # rebroadcast of unchanged parameters
            elif i:
                ppm = max(0, ppm + self.rng.choice([-1, 1]) * self.rng.randint(1, 200))
                if ppm == ppms[-1]:
                    ppm += 1
            ppms.append(ppm)
        return stamps, ppms

    def rebalance_series(self, start: int, end: int, direction: int) -> Tuple[List[int], List[int]]:
        """Fees driven by a shared liquidity signal, opposite sign per side.

        Both peers react to the same liquidity shifts, so the two sides share
        update times up to a sub-hour lag.
        """
        if direction == 0:
            self._rebalance_stamps = self._stamps(start, end - 3600, self._rebalance_n)
            stamps = self._rebalance_stamps
        else:
            stamps = sorted(ts + self.rng.randrange(3600) for ts in self._rebalance_stamps)
        ppms = []
        for ts in stamps:
            phase = 2 * math.pi * (ts - start) / self._rebalance_period + self._rebalance_phase
            signal = 400 * math.sin(phase)
            value = 600 + (signal if direction == 0 else -signal) + self.rng.gauss(0, 15)
            ppm = max(0, int(round(value)))
            if ppms and ppm == ppms[-1]:
                ppm += 1
            ppms.append(ppm)
        return stamps, ppms

    # scenarios

    def build(self) -> Scenario:
        self._pending_gossip = []
        kind = self.out.kind
        rng = self.rng
        h0 = BASE_HEIGHT + rng.randint(0, HEIGHT_SPAN)
        life = rng.randint(1_000, 40_000)
        close_h = h0 + life

        if kind.kind is Kind.PEELING_CHAIN:
            self.peeling_chain(h0, kind.arg)
        elif kind.kind is Kind.FEE_REBALANCE_GOSSIP:
            self._rebalance_n = rng.randint(110, 160)
            self._rebalance_period = rng.randint(45, 90) * 86400
            self._rebalance_phase = rng.uniform(0, 2 * math.pi)
            life = rng.randint(30_000, 45_000)
            chan, _ = self.open_channel(self.capacity(), h0, Visibility.PUBLIC)
            self._pending_gossip[-1] = (chan, None, True)
            self.coop_close(chan, h0 + life, 2)
        else:
            chan = self.main_channel(h0)
            self.close_main(chan, close_h)

        horizon = self.clock.time(BASE_HEIGHT + HEIGHT_SPAN + 50_000)
        self.finish_gossip(horizon)
        return self.out

    def main_channel(self, h0: int) -> _Channel:
        capacity = self.capacity()
        visibility = self.visibility()
        if visibility is Visibility.PUBLIC:
            chan, _ = self.open_channel(capacity, h0, visibility)
            return chan
        # private channels hang off a public sponsor so tracing can reach them
        fee = self.rng.randint(200, 2000)
        sponsor, change = self.open_channel(self.capacity(), h0 - self.rng.randint(1, 200),
                                            Visibility.PUBLIC, change=capacity + fee)
        src = TxInput(change, (self.sig(), self.key()), 0xFFFFFFFD)
        chan, _ = self.open_channel(capacity, h0, visibility, source=src)
        chan.truth.chain_depth = 1
        return chan

    def close_main(self, chan: _Channel, close_h: int) -> None:
        k = self.out.kind
        cap = chan.truth.capacity
        fee = self.rng.randint(300, 3000)
        if k.kind in (Kind.COOP_X1, Kind.COOP_X2):
            n = 1 if k.kind is Kind.COOP_X1 else 2
            tx = self.coop_close(chan, close_h, n)
            roll = self.rng.random()
            refund = [] if roll < 0.55 else [0] if roll < 0.9 or n == 1 else [0, 1]
            for vout in refund:
                new = self.resurrect(chan, tx, vout, close_h + self.rng.randint(0, 30))
                if new is not None and chan.truth.chain_depth is not None \
                        and new.truth.visibility == Visibility.PRIVATE.value:
                    new.truth.chain_depth = chan.truth.chain_depth + 1
                elif new is not None and new.truth.visibility == Visibility.PRIVATE.value:
                    new.truth.chain_depth = 1
        elif k.kind is Kind.UNI_LOCAL:
            self.commitment(chan, close_h, ClosingType.LOCAL, local=cap - fee)
        elif k.kind is Kind.UNI_LOCAL_REMOTE:
            a, b = self.split(cap - fee)
            self.commitment(chan, close_h, ClosingType.LOCAL_REMOTE, local=a, remote=b)
        elif k.kind is Kind.UNI_REMOTE:
            self.commitment(chan, close_h, ClosingType.REMOTE, remote=cap - fee)
        elif k.kind is Kind.REVOKED:
            if self.rng.random() < 0.5:
                self.commitment(chan, close_h, ClosingType.REVOKED, local=cap - fee, revoke=True)
            else:
                a, b = self.split(cap - fee)
                self.commitment(chan, close_h, ClosingType.REVOKED, local=a, remote=b, revoke=True)
        elif k.kind is Kind.HTLC_CLOSE:
            htlcs = [self.rng.randint(1_000, max(1_000, cap // (4 * max(1, k.arg)))) for _ in range(k.arg)]
            a, b = self.split(cap - fee - sum(htlcs))
            self.commitment(chan, close_h, ClosingType.LOCAL_REMOTE, local=a, remote=b, htlcs=htlcs)
        elif k.kind is Kind.ANCHOR_CLOSE:
            a, b = self.split(cap - fee - 2 * ANCHOR_VALUE)
            self.commitment(chan, close_h, ClosingType.LOCAL_REMOTE, local=a, remote=b, anchors=True)
        else:
            raise ValueError(f"unhandled scenario {k}")

    def peeling_chain(self, h0: int, length: int) -> None:
        caps = [self.capacity() for _ in range(length)]
        fees = [self.rng.randint(200, 2000) for _ in range(length)]
        # change_k must fund every later channel in the chain
        changes = [0] * (length + 1)
        for k in range(length - 1, -1, -1):
            changes[k] = caps[k] + fees[k] + changes[k + 1]
        seed_chan, change = self.open_channel(self.capacity(), h0, Visibility.PUBLIC, change=changes[0])
        height = h0
        for k in range(length):
            height += self.rng.randint(1, 500)
            src = TxInput(change, (self.sig(), self.key()), 0xFFFFFFFD)
            chan, change = self.open_channel(caps[k], height, Visibility.PRIVATE, source=src,
                                             change=changes[k + 1])
            chan.truth.chain_depth = k + 1
            if self.rng.random() < 0.5:
                self.coop_close(chan, height + self.rng.randint(1_000, 30_000), 2)


def _build(args) -> Scenario:
    kind, seed, index, clock_seed = args
    clock = ChainClock(clock_seed)
    return _Builder(kind, seed, index, clock, node_pool(clock_seed)).build()


@dataclass
class Dataset:
    transactions: List[Transaction]
    gossip: List[GossipEvent]
    truth: List[ChannelTruth]


def finalize(scenarios: Sequence[Scenario]) -> Dataset:
    """Fix in-block positions, assign short channel ids, emit gossip."""
    ordered = []
    for sc in sorted(scenarios, key=lambda s: s.index):
        for seq, tx in enumerate(sc.txs):
            ordered.append((tx.block_height, sc.index, seq, tx))
    ordered.sort(key=lambda r: r[:3])
    txs = [r[3] for r in ordered]
    position: Dict[TxId, Tuple[int, int]] = {}
    counter: Dict[int, int] = {}
    for tx in txs:
        idx = counter.get(tx.block_height, 0)
        counter[tx.block_height] = idx + 1
        position[tx.txid] = (tx.block_height, idx)

    def scid(op: OutPoint) -> ShortChannelId:
        height, idx = position[op.txid]
        return ShortChannelId(height, idx, op.vout)

    events: List[GossipEvent] = []
    truths: List[ChannelTruth] = []
    for sc in sorted(scenarios, key=lambda s: s.index):
        for op, ts, ends in sc.announcements:
            events.append(GossipEvent(GossipKind.CHANNEL_ANNOUNCEMENT, ts, scid=scid(op), node_ids=ends))
            for offset, node in enumerate(ends, 1):
                events.append(GossipEvent(GossipKind.NODE_ANNOUNCEMENT, ts + offset, node_id=node))
        for up in sc.updates:
            events.append(GossipEvent(GossipKind.CHANNEL_UPDATE, up.timestamp, scid=scid(up.funding),
                                      direction=up.direction, params=up.params))
        for t in sc.truths:
            if t.visibility == Visibility.PUBLIC.value:
                t.scid = str(scid(t.outpoint))
            truths.append(t)
    events.sort(key=GossipEvent.sort_key)
    truths.sort(key=lambda t: t.outpoint)
    return Dataset(txs, events, truths)


def generate(kind: Union[ScenarioKind, str], seed: int) -> Dataset:
    if isinstance(kind, str):
        kind = ScenarioKind.parse(kind)
    return finalize([_build((kind, seed, 0, seed))])


def expand_spec(spec: Sequence[Tuple[Union[ScenarioKind, str], int]]) -> List[ScenarioKind]:
    kinds = []
    for kind, count in spec:
        if isinstance(kind, str):
            kind = ScenarioKind.parse(kind)
        kinds.extend([kind] * count)
    return kinds


def build_corpus(spec: Sequence[Tuple[Union[ScenarioKind, str], int]], seed: int, workers: int = 1) -> Dataset:
    kinds = expand_spec(spec)
    jobs = [(k, derive_seed("corpus", seed, i), i, seed) for i, k in enumerate(kinds)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            scenarios = list(pool.map(_build, jobs, chunksize=16))
    else:
        scenarios = [_build(j) for j in jobs]
    return finalize(scenarios)


CHAIN_DIR = "chain"
CHAIN_FILE = "chain.jsonl"
GOSSIP_FILE = "gossip.jsonl"
TRUTH_FILE = "truth.jsonl"


def write_dataset(dataset: Dataset, out_dir: Union[str, Path], seed: int, spec_text: str = "") -> Dict[str, Path]:
    out = Path(out_dir)
    (out / CHAIN_DIR).mkdir(parents=True, exist_ok=True)
    paths = {
        "chain": out / CHAIN_DIR / CHAIN_FILE,
        "gossip": out / GOSSIP_FILE,
        "truth": out / TRUTH_FILE,
    }
    with open(paths["chain"], "w") as fh:
        fh.writelines(dumps_tx(tx) + "\n" for tx in dataset.transactions)
    with open(paths["gossip"], "w") as fh:
        fh.write(dump_events(dataset.gossip))
    with open(paths["truth"], "w") as fh:
        header = {"format": TRUTH_FORMAT, "version": 1, "seed": seed, "spec": spec_text,
                  "channels": len(dataset.truth)}
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for t in dataset.truth:
            fh.write(json.dumps(t.to_json(), sort_keys=True) + "\n")
    return paths


def generate_corpus(
    spec: Sequence[Tuple[Union[ScenarioKind, str], int]],
    seed: int,
    out_dir: Union[str, Path],
    workers: int = 1,
) -> Dict[str, Path]:
    spec_text = ",".join(f"{k}={n}" for k, n in spec)
    return write_dataset(build_corpus(spec, seed, workers), out_dir, seed, spec_text)


def read_truth(path: Union[str, Path]) -> List[ChannelTruth]:
    with open(path) as fh:
        header = json.loads(fh.readline() or "{}")
        if header.get("format") != TRUTH_FORMAT:
            raise ValueError(f"{path} is not a truth file")
        return [ChannelTruth.from_json(json.loads(line)) for line in fh if line.strip()]


def parse_spec(text: str) -> List[Tuple[ScenarioKind, int]]:
    """``"coopx2=10,peeling_chain:5=2"`` -> [(ScenarioKind, count), ...]."""
    out = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        name, _, count = part.rpartition("=")
        if not name:
            name, count = count, "1"
        out.append((ScenarioKind.parse(name), int(count)))
    return out
