"""Gossip ingestion and channel-update analytics.

Input is newline-delimited JSON, one message per line::

    {"kind": "channel_announcement", "timestamp": 1600000000,
     "scid": "650000x12x0", "node_ids": ["02ab..", "03cd.."]}
    {"kind": "channel_update", "timestamp": 1600000100, "scid": "650000x12x0",
     "direction": 0, "params": {"base_fee_msat": 1000,
     "fee_proportional_millionths": 100, "cltv_delta": 40,
     "htlc_minimum_msat": 1, "disabled": false}}
    {"kind": "node_announcement", "timestamp": 1600000200, "node_id": "02ab.."}
"""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InsufficientUpdates, ZeroLifetime

log = logging.getLogger(__name__)

SECONDS_PER_DAY = 86400
MIN_UPDATES = 100


@dataclass(frozen=True, order=True)
class ShortChannelId:
    block: int
    tx_index: int
    vout: int

    @classmethod
    def parse(cls, text: str) -> "ShortChannelId":
        parts = text.split("x")
        if len(parts) != 3:
            raise ValueError(f"bad short channel id {text!r}")
        block, tx_index, vout = (int(p) for p in parts)
        if min(block, tx_index, vout) < 0:
            raise ValueError(f"bad short channel id {text!r}")
        return cls(block, tx_index, vout)

    def __str__(self) -> str:
        return f"{self.block}x{self.tx_index}x{self.vout}"


@dataclass(frozen=True)
class FeeParams:
    base_fee_msat: int = 1000
    fee_proportional_millionths: int = 1
    cltv_delta: int = 40
    htlc_minimum_msat: int = 1
    disabled: bool = False

    def __post_init__(self) -> None:
        if min(self.base_fee_msat, self.fee_proportional_millionths, self.cltv_delta, self.htlc_minimum_msat) < 0:
            raise ValueError("fee parameters must be non-negative")

    def to_json(self) -> dict:
        return {
            "base_fee_msat": self.base_fee_msat,
            "fee_proportional_millionths": self.fee_proportional_millionths,
            "cltv_delta": self.cltv_delta,
            "htlc_minimum_msat": self.htlc_minimum_msat,
            "disabled": self.disabled,
        }


class GossipKind(enum.Enum):
    CHANNEL_ANNOUNCEMENT = "channel_announcement"
    CHANNEL_UPDATE = "channel_update"
    NODE_ANNOUNCEMENT = "node_announcement"


@dataclass(frozen=True)
class GossipEvent:
    kind: GossipKind
    timestamp: int
    scid: Optional[ShortChannelId] = None
    direction: Optional[int] = None
    node_id: Optional[bytes] = None
    node_ids: Tuple[bytes, ...] = ()
    params: Optional[FeeParams] = None

    def __post_init__(self) -> None:
        if self.kind is GossipKind.CHANNEL_UPDATE:
            if self.direction not in (0, 1) or self.params is None or self.scid is None:
                raise ValueError("channel_update needs scid, direction 0/1 and params")
        elif self.kind is GossipKind.CHANNEL_ANNOUNCEMENT:
            if self.scid is None or len(self.node_ids) != 2:
                raise ValueError("channel_announcement needs scid and two node ids")
        elif self.node_id is None:
            raise ValueError("node_announcement needs node_id")
        for key in (self.node_id, *self.node_ids):
            if key is not None and len(key) != 33:
                raise ValueError("node ids are 33-byte keys")

    def to_json(self) -> dict:
        obj: dict = {"kind": self.kind.value, "timestamp": self.timestamp}
        if self.scid is not None:
            obj["scid"] = str(self.scid)
        if self.direction is not None:
            obj["direction"] = self.direction
        if self.node_id is not None:
            obj["node_id"] = self.node_id.hex()
        if self.node_ids:
            obj["node_ids"] = [k.hex() for k in self.node_ids]
        if self.params is not None:
            obj["params"] = self.params.to_json()
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "GossipEvent":
        params = obj.get("params")
        return cls(
            kind=GossipKind(obj["kind"]),
            timestamp=int(obj["timestamp"]),
            scid=ShortChannelId.parse(obj["scid"]) if obj.get("scid") is not None else None,
            direction=obj.get("direction"),
            node_id=bytes.fromhex(obj["node_id"]) if obj.get("node_id") else None,
            node_ids=tuple(bytes.fromhex(k) for k in obj.get("node_ids") or ()),
            params=FeeParams(**{k: params[k] for k in FeeParams.__dataclass_fields__ if k in params})
            if params is not None else None,
        )

    def sort_key(self) -> Tuple[int, str]:
        return self.timestamp, json.dumps(self.to_json(), sort_keys=True)


def dump_events(events: Iterable[GossipEvent]) -> str:
    return "".join(json.dumps(e.to_json(), separators=(",", ":")) + "\n" for e in events)


def parse_gossip_lines(lines: Iterable[str]) -> Tuple[List[GossipEvent], int]:
    """Parse gossip records; returns (events, number of malformed lines skipped)."""
    events = []
    malformed = 0
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line:
            continue
        try:
            events.append(GossipEvent.from_json(json.loads(line)))
        except (ValueError, KeyError, TypeError, AttributeError) as exc:
            malformed += 1
            log.debug("skipping gossip line %d: %s", lineno, exc)
    return events, malformed


def load_gossip(path) -> Tuple[List[GossipEvent], int]:
    with open(path) as fh:
        return parse_gossip_lines(fh)


def group_updates(events: Iterable[GossipEvent]) -> Dict[Tuple[ShortChannelId, int], List[GossipEvent]]:
    """Channel updates per (scid, direction), each stream sorted by timestamp."""
    streams: Dict[Tuple[ShortChannelId, int], List[GossipEvent]] = {}
    for ev in events:
        if ev.kind is GossipKind.CHANNEL_UPDATE:
            streams.setdefault((ev.scid, ev.direction), []).append(ev)
    for stream in streams.values():
        stream.sort(key=GossipEvent.sort_key)
    return streams


def dedup_updates(events: Sequence[GossipEvent]) -> List[GossipEvent]:
    """Keep an update only when its parameters differ from the previous kept one."""
    kept: List[GossipEvent] = []
    for ev in events:
        if not kept or ev.params != kept[-1].params:
            kept.append(ev)
    return kept


def daily_update_rate(updates: Sequence[GossipEvent], lifetime_days: float) -> float:
    if lifetime_days <= 0:
        raise ZeroLifetime("lifetime must be positive")
    return len(updates) / lifetime_days


def daily_series(updates: Sequence[GossipEvent]) -> Dict[int, float]:
    """Proportional fee at the end of each day with an update."""
    by_day: Dict[int, float] = {}
    for ev in updates:
        by_day[ev.timestamp // SECONDS_PER_DAY] = float(ev.params.fee_proportional_millionths)
    return by_day


def align_daily(side0: Sequence[GossipEvent], side1: Sequence[GossipEvent]) -> Tuple[np.ndarray, np.ndarray]:
    """Carry each side's last value forward over the days both sides are defined."""
    s0, s1 = daily_series(side0), daily_series(side1)
    if not s0 or not s1:
        return np.array([]), np.array([])
    start = max(min(s0), min(s1))
    end = max(max(s0), max(s1))
    a, b = [], []
    cur0 = cur1 = None
    for day in range(min(min(s0), min(s1)), end + 1):
        cur0 = s0.get(day, cur0)
        cur1 = s1.get(day, cur1)
        if day >= start:
            a.append(cur0)
            b.append(cur1)
    return np.asarray(a, dtype=float), np.asarray(b, dtype=float)


def pearson(x: np.ndarray, y: np.ndarray) -> Optional[float]:
    if len(x) < 2 or np.ptp(x) == 0 or np.ptp(y) == 0:
        return None
    dx = x - x.mean()
    dy = y - y.mean()
    r = float(np.dot(dx, dy) / math.sqrt(float(np.dot(dx, dx)) * float(np.dot(dy, dy))))
    return max(-1.0, min(1.0, r))


def fee_correlation(
    side0: Sequence[GossipEvent],
    side1: Sequence[GossipEvent],
    min_updates: int = MIN_UPDATES,
) -> Optional[float]:
    """Pearson r of the two sides' proportional fees; None when a side is constant."""
    if len(side0) < min_updates or len(side1) < min_updates:
        raise InsufficientUpdates(f"need {min_updates} updates per side, got {len(side0)}/{len(side1)}")
    a, b = align_daily(side0, side1)
    return pearson(a, b)


def route_fee(amount_msat: int, params: FeeParams) -> int:
    return params.base_fee_msat + amount_msat * params.fee_proportional_millionths // 1_000_000


@dataclass(frozen=True)
class ActiveSample:
    time: int
    nodes: int
    public_channels: int
    private_channels: int


def active_series(channels, endpoints: Dict[str, Tuple[bytes, bytes]], sample_times: Iterable[int]) -> List[ActiveSample]:
    """Active nodes and channels at each sample time.

    ``channels`` are ChannelRecords; ``endpoints`` maps a public channel's
    funding outpoint (as text) to its two node ids. A channel is active on
    ``[open.time, close.time)``.
    """
    from .lifecycle import Visibility

    spans = []
    for ch in channels:
        close = ch.close.time if ch.close is not None else None
        spans.append((ch.open.time, close, ch.visibility, endpoints.get(str(ch.funding), ())))
    out = []
    for t in sample_times:
        nodes = set()
        pub = priv = 0
        for start, end, vis, ends in spans:
            if start <= t and (end is None or t < end):
                if vis is Visibility.PUBLIC:
                    pub += 1
                    nodes.update(ends)
                else:
                    priv += 1
        out.append(ActiveSample(t, len(nodes), pub, priv))
    return out

