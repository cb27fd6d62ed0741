"""End-to-end run: gossip + chain source -> channel records -> report tables."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Set, Tuple

from .chain import OutPoint
from .errors import InsufficientUpdates, LnLifeError, SourceUnavailable, Unclassifiable
from .gossip import (
    MIN_UPDATES,
    GossipEvent,
    GossipKind,
    ShortChannelId,
    active_series,
    daily_update_rate,
    dedup_updates,
    fee_correlation,
    group_updates,
    load_gossip,
)
from .heuristics import DEFAULT_MAX_DEPTH, PrivateChannelCandidate, PropertyParams, TxGraph, tracing_heuristic
from .lifecycle import ChannelRecord, Visibility, analyze_channel
from .report import (
    ReportBundle,
    Table,
    channel_table,
    closing_type_counts,
    closing_type_shares,
    delay_tables,
    htlc_tables,
    imbalance_histogram,
    imbalance_stats,
    lifetime_histogram,
    lifetime_stats,
    resurrection_rates,
    sample_times,
    stats_table,
    weekly_counts,
)
from .source import ChainSource, walk_channel

log = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    source: ChainSource
    gossip_path: Optional[Path] = None
    public_channels: Sequence[OutPoint] = ()
    property_params: PropertyParams = field(default_factory=PropertyParams)
    trace_depth: int = DEFAULT_MAX_DEPTH
    min_updates: int = MIN_UPDATES
    workers: int = 1
    detect_private: bool = True


@dataclass
class GossipIndex:
    events: List[GossipEvent]
    malformed: int = 0
    # funding outpoint (text) -> scid / endpoints
    scids: Dict[str, ShortChannelId] = field(default_factory=dict)
    endpoints: Dict[str, Tuple[bytes, bytes]] = field(default_factory=dict)
    unresolved: int = 0
    # resolutions that failed because the source was down, not because the scid is unknown
    unavailable: int = 0
    announcements: int = 0

    @property
    def latest(self) -> int:
        return max((e.timestamp for e in self.events), default=0)


def index_gossip(source: ChainSource, events: List[GossipEvent], malformed: int = 0) -> GossipIndex:
    idx = GossipIndex(events, malformed)
    for ev in events:
        if ev.kind is not GossipKind.CHANNEL_ANNOUNCEMENT:
            continue
        idx.announcements += 1
        try:
            op = source.resolve_scid(ev.scid.block, ev.scid.tx_index, ev.scid.vout)
        except LnLifeError as exc:
            idx.unresolved += 1
            idx.unavailable += isinstance(exc, SourceUnavailable)
            log.warning("cannot resolve %s: %s", ev.scid, exc)
            continue
        idx.scids.setdefault(str(op), ev.scid)
        idx.endpoints.setdefault(str(op), ev.node_ids)
    return idx


def _analyze(source: ChainSource, op: OutPoint, visibility: Visibility, funding_index: Set[OutPoint],
             scid: Optional[str]):
    """Returns (record or None, outcome label)."""
    try:
        walk = walk_channel(source, op, 1)
    except SourceUnavailable as exc:
        log.error("channel %s: %s", op, exc)
        return None, "source_unavailable"
    except LnLifeError as exc:
        log.error("channel %s: %s", op, exc)
        return None, "failed"
    if walk.errors:
        log.warning("channel %s: partial walk: %s", op, "; ".join(walk.errors))
    try:
        return analyze_channel(walk, visibility, funding_index, scid), "ok"
    except Unclassifiable as exc:
        log.warning("channel %s: %s", op, exc)
        rec = ChannelRecord(op, walk.funding_tx.outputs[op.vout].value, visibility, walk.funding_tx.block,
                            close=walk.close_tx.block if walk.close_tx else None, scid=scid)
        return rec, "unclassifiable"
    except (LnLifeError, ValueError) as exc:
        log.error("channel %s: %s", op, exc)
        return None, "failed"


def classify_channels(
    source: ChainSource,
    public: Sequence[OutPoint],
    candidates: Sequence[PrivateChannelCandidate],
    scids: Dict[str, ShortChannelId],
    workers: int = 1,
) -> Tuple[List[ChannelRecord], Dict[str, int]]:
    jobs = [(op, Visibility.PUBLIC) for op in sorted(set(public))]
    jobs += [(c.funding, Visibility.PRIVATE) for c in candidates]
    funding_index = {op for op, _ in jobs}

    def run(job):
        op, vis = job
        scid = scids.get(str(op))
        return _analyze(source, op, vis, funding_index, str(scid) if scid else None)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]

    outcomes: Dict[str, int] = {"ok": 0, "unclassifiable": 0, "failed": 0, "source_unavailable": 0}
    records = []
    for rec, outcome in results:
        outcomes[outcome] += 1
        if rec is not None:
            records.append(rec)
    records.sort(key=lambda r: r.funding)
    return records, outcomes


def gossip_tables(records: Sequence[ChannelRecord], gossip: GossipIndex, min_updates: int,
                  horizon: int) -> List[Table]:
    streams = group_updates(gossip.events)
    rates = []
    corr = []
    for rec in records:
        if rec.visibility is not Visibility.PUBLIC or rec.scid is None:
            continue
        scid = ShortChannelId.parse(rec.scid)
        sides = [dedup_updates(streams.get((scid, d), [])) for d in (0, 1)]
        end = rec.close.time if rec.close is not None else horizon
        days = (end - rec.open.time) / 86400
        n = len(sides[0]) + len(sides[1])
        if days > 0:
            rates.append((rec.scid, n, days, daily_update_rate(sides[0] + sides[1], days)))
        try:
            r = fee_correlation(sides[0], sides[1], min_updates)
        except InsufficientUpdates:
            continue
        corr.append((rec.scid, len(sides[0]), len(sides[1]), r))
    rates.sort()
    corr.sort()
    defined = [r for *_, r in corr if r is not None]
    return [
        Table("update_rates", ["scid", "updates", "lifetime_days", "daily_rate"], rates),
        stats_table("update_rate_stats", "public", [r[3] for r in rates]),
        Table("fee_correlations", ["scid", "updates_side0", "updates_side1", "r"], corr),
        stats_table("fee_correlation_stats", "public", defined),
    ]


def horizon_of(records: Sequence[ChannelRecord], gossip: Optional[GossipIndex]) -> int:
    times = [r.open.time for r in records] + [r.close.time for r in records if r.close is not None]
    if gossip is not None:
        times.append(gossip.latest)
    return max(times, default=0)


def build_bundle(records: Sequence[ChannelRecord], gossip: GossipIndex, min_updates: int) -> ReportBundle:
    bundle = ReportBundle(channels=list(records))
    horizon = horizon_of(records, gossip)
    bundle.add(channel_table(records))
    bundle.add(weekly_counts("weekly_openings", records, lambda r: r.open.time))
    bundle.add(weekly_counts("weekly_closings", records, lambda r: r.close.time if r.close else None))
    bundle.add(closing_type_counts(records))
    bundle.add(closing_type_shares(records))
    bundle.add(imbalance_histogram(records))
    bundle.add(imbalance_stats(records))
    bundle.add(lifetime_histogram(records))
    bundle.add(lifetime_stats(records))
    for t in htlc_tables(records):
        bundle.add(t)
    bundle.add(resurrection_rates(records))
    for t in delay_tables(records):
        bundle.add(t)
    for t in gossip_tables(records, gossip, min_updates, horizon):
        bundle.add(t)
    start = min((r.open.time for r in records), default=0)
    samples = active_series(records, gossip.endpoints, sample_times(start, horizon) if records else [])
    bundle.add(Table("active_series", ["time", "nodes", "public_channels", "private_channels"],
                     [(s.time, s.nodes, s.public_channels, s.private_channels) for s in samples]))
    return bundle


def run_pipeline(config: PipelineConfig) -> ReportBundle:
    if config.gossip_path is not None:
        events, malformed = load_gossip(config.gossip_path)
    else:
        events, malformed = [], 0
    gossip = index_gossip(config.source, events, malformed)
    public = {OutPoint.parse(k) for k in gossip.scids} | set(config.public_channels)

    candidates: List[PrivateChannelCandidate] = []
    if config.detect_private and public:
        graph = TxGraph(config.source, config.property_params)
        candidates = tracing_heuristic(graph, public, config.trace_depth)

    records, outcomes = classify_channels(config.source, sorted(public), candidates, gossip.scids,
                                          config.workers)
    down = gossip.unavailable + outcomes["source_unavailable"]
    answered = gossip.announcements + len(public) + len(candidates) - down
    if down and not answered:
        raise SourceUnavailable("chain source failed for every request")
    bundle = build_bundle(records, gossip, config.min_updates)
    bundle.add(Table("private_candidates", ["funding", "discovered_via", "chain_depth"],
                     [(str(c.funding), c.discovered_via.value, c.chain_depth) for c in candidates]))
    bundle.diagnostics = {
        "gossip_events": len(events),
        "malformed_gossip_lines": malformed,
        "unresolved_scids": gossip.unresolved,
        "public_channels": len(public),
        "private_candidates": len(candidates),
        "channels_classified": outcomes["ok"],
        "channels_unclassifiable": outcomes["unclassifiable"],
        "channels_failed": outcomes["failed"] + outcomes["source_unavailable"],
    }
    return bundle
