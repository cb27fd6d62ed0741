"""On-chain detection of unannounced channels.

The property heuristic flags outputs shaped like channel funding outputs.
The tracing heuristic starts from announced channels and follows change and
closing outputs (forward) or funding inputs (backward) through the
transaction graph, flagging property-positive outputs it reaches.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Set, Tuple

from .chain import OutPoint, Transaction, TxId, is_p2wsh
from .errors import NotFound
from .lifecycle import is_commitment
from .script import match_funding
from .source import ChainSource, FixtureSource

MIN_CHANNEL_SAT = 20_000
MAX_CHANNEL_SAT = 2**24 - 1  # pre-wumbo cap
DEFAULT_MAX_DEPTH = 10


@dataclass(frozen=True)
class PropertyParams:
    min_channel_sat: int = MIN_CHANNEL_SAT
    max_channel_sat: int = MAX_CHANNEL_SAT
    # commitments never open channels; their P2WSH outputs are to_local/HTLCs
    exclude_commitments: bool = True


def property_heuristic(tx: Transaction, params: PropertyParams = PropertyParams()) -> List[OutPoint]:
    if params.exclude_commitments and is_commitment(tx):
        return []
    return [
        OutPoint(tx.txid, vout)
        for vout, out in enumerate(tx.outputs)
        if is_p2wsh(out.script_pubkey) and params.min_channel_sat <= out.value <= params.max_channel_sat
    ]


class TraceDirection(enum.Enum):
    FORWARD = "forward"
    BACKWARD = "backward"


@dataclass(frozen=True)
class PrivateChannelCandidate:
    funding: OutPoint
    discovered_via: TraceDirection
    chain_depth: int


class TxGraph:
    """Read-only view of transactions and their spends over a chain source.

    An output is a funding candidate when it passes the property heuristic
    and, if already spent, its spend reveals a 2-of-2 multisig script.
    """

    def __init__(self, source: ChainSource, params: PropertyParams = PropertyParams()):
        self.source = source
        self.params = params
        self._candidates: Dict[TxId, Set[OutPoint]] = {}

    @classmethod
    def from_transactions(cls, txs: Iterable[Transaction], params: PropertyParams = PropertyParams()) -> "TxGraph":
        return cls(FixtureSource(txs), params)

    def tx(self, txid: TxId) -> Optional[Transaction]:
        try:
            return self.source.get_tx(txid)
        except NotFound:
            return None

    def spender(self, outpoint: OutPoint) -> Optional[Transaction]:
        try:
            return self.source.spender(outpoint)
        except NotFound:
            return None

    def candidates_of(self, tx: Transaction) -> Set[OutPoint]:
        hit = self._candidates.get(tx.txid)
        if hit is None:
            hit = set()
            for op in property_heuristic(tx, self.params):
                spender = self.spender(op)
                if spender is not None:
                    witness = spender.inputs[spender.spends(op)].witness
                    if not witness or match_funding(witness[-1]) is None:
                        continue
                hit.add(op)
            self._candidates[tx.txid] = hit
        return hit

    def is_funding_candidate(self, outpoint: OutPoint) -> bool:
        tx = self.tx(outpoint.txid)
        return tx is not None and outpoint in self.candidates_of(tx)

    @property
    def funding_candidates(self) -> Set[OutPoint]:
        """All candidates; only available for in-memory sources."""
        if not isinstance(self.source, FixtureSource):
            raise TypeError("funding_candidates needs an enumerable source")
        out: Set[OutPoint] = set()
        for tx in self.source:
            out |= self.candidates_of(tx)
        return out


def _neighbours(graph: TxGraph, tx: Transaction, direction: TraceDirection) -> List[Tuple[Transaction, int]]:
    """Adjacent transactions with edge cost: 0 across a channel, 1 otherwise."""
    out = []
    if direction is TraceDirection.FORWARD:
        for vout in range(len(tx.outputs)):
            op = OutPoint(tx.txid, vout)
            nxt = graph.spender(op)
            if nxt is not None:
                out.append((nxt, 0 if graph.is_funding_candidate(op) else 1))
    else:
        for txin in tx.inputs:
            prev = graph.tx(txin.prevout.txid)
            if prev is not None:
                out.append((prev, 0 if graph.is_funding_candidate(txin.prevout) else 1))
    return out


def _trace(graph: TxGraph, seeds: List[TxId], direction: TraceDirection, max_depth: int) -> Dict[TxId, int]:
    # 0-1 BFS: channel closes stay at their channel's depth, every other spend is a hop
    best: Dict[TxId, int] = {}
    queue = deque()
    for txid in seeds:
        if txid not in best:
            best[txid] = 0
            queue.append((0, txid))
    while queue:
        depth, txid = queue.popleft()
        if best[txid] < depth:
            continue
        tx = graph.tx(txid)
        if tx is None:
            continue
        for nxt, cost in _neighbours(graph, tx, direction):
            nd = depth + cost
            if nd > max_depth or best.get(nxt.txid, nd + 1) <= nd:
                continue
            best[nxt.txid] = nd
            if cost:
                queue.append((nd, nxt.txid))
            else:
                queue.appendleft((nd, nxt.txid))
    return best


def tracing_heuristic(
    graph: TxGraph,
    public_seeds: Iterable[OutPoint],
    max_depth: int = DEFAULT_MAX_DEPTH,
) -> List[PrivateChannelCandidate]:
    public = set(public_seeds)
    seed_txids = sorted({op.txid for op in public})
    found: Dict[OutPoint, PrivateChannelCandidate] = {}
    for direction in (TraceDirection.FORWARD, TraceDirection.BACKWARD):
        reached = _trace(graph, seed_txids, direction, max_depth)
        for txid in sorted(reached):
            depth = reached[txid]
            if depth == 0:
                continue
            for op in graph.candidates_of(graph.tx(txid)):
                if op in public:
                    continue
                prev = found.get(op)
                if prev is None or depth < prev.chain_depth:
                    found[op] = PrivateChannelCandidate(op, direction, depth)
    return [found[op] for op in sorted(found)]
