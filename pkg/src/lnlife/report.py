"""Aggregate channel records into plot-ready tables and write them out."""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

from .errors import EmptyInput
from .lifecycle import ChannelRecord, ClosingType, Visibility

IMBALANCE_BIN = 0.05
LIFETIME_BIN_DAYS = 10
SAMPLE_SPACING = 7 * 86400
FLOAT_DIGITS = 4
VISIBILITIES = [v.value for v in Visibility]
CLOSING_TYPES = [c.value for c in ClosingType]


def summary_stats(values: Sequence[float]) -> Tuple[float, float, float]:
    """(mean, median, 99th percentile by nearest rank)."""
    if not values:
        raise EmptyInput("summary of an empty list")
    ordered = sorted(values)
    rank = math.ceil(0.99 * len(ordered))
    return math.fsum(ordered) / len(ordered), statistics.median(ordered), ordered[rank - 1]


def iso_week(ts: int) -> str:
    year, week, _ = datetime.fromtimestamp(ts, timezone.utc).isocalendar()
    return f"{year}-W{week:02d}"


@dataclass
class Table:
    name: str
    columns: List[str]
    rows: List[tuple] = field(default_factory=list)

    def records(self) -> List[Dict[str, Any]]:
        return [dict(zip(self.columns, (_json_value(v) for v in row))) for row in self.rows]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.{FLOAT_DIGITS}f}"
    return str(value)


def _json_value(value):
    if isinstance(value, float):
        return float(f"{value:.{FLOAT_DIGITS}f}")
    return value


@dataclass
class ReportBundle:
    tables: Dict[str, Table] = field(default_factory=dict)
    channels: List[ChannelRecord] = field(default_factory=list)
    diagnostics: Dict[str, int] = field(default_factory=dict)

    def __getitem__(self, name: str) -> Table:
        return self.tables[name]

    def add(self, table: Table) -> None:
        self.tables[table.name] = table


def emit(bundle: ReportBundle, fmt: str, out_dir: Union[str, Path]) -> List[Path]:
    """Write one file per table; returns the written paths."""
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown format {fmt!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    tables = list(bundle.tables.values())
    tables.append(Table("diagnostics", ["key", "value"], sorted(bundle.diagnostics.items())))
    for table in tables:
        path = out / f"{table.name}.{fmt}"
        if fmt == "csv":
            buf = io.StringIO()
            writer = csv.writer(buf, lineterminator="\n")
            writer.writerow(table.columns)
            writer.writerows([_fmt(v) for v in row] for row in table.rows)
            text = buf.getvalue()
        else:
            text = json.dumps(table.records(), indent=1) + "\n"
        path.write_text(text)
        paths.append(path)
    return paths


# --- aggregations -------------------------------------------------------------

def _closed(records: Iterable[ChannelRecord]) -> List[ChannelRecord]:
    return [r for r in records if r.closing is not None]


def weekly_counts(name: str, records: Iterable[ChannelRecord], when) -> Table:
    counts: Dict[str, Counter] = defaultdict(Counter)
    for r in records:
        ts = when(r)
        if ts is not None:
            counts[iso_week(ts)][r.visibility.value] += 1
    rows = [(week, c["public"], c["private"]) for week, c in sorted(counts.items())]
    return Table(name, ["week", "public", "private"], rows)


def closing_type_counts(records: Iterable[ChannelRecord]) -> Table:
    counts = Counter((r.visibility.value, r.closing.closing_type.value) for r in _closed(records))
    rows = [(v, c, counts[(v, c)]) for v in VISIBILITIES for c in CLOSING_TYPES]
    return Table("closing_type_counts", ["visibility", "closing_type", "count"], rows)


def closing_type_shares(records: Iterable[ChannelRecord]) -> Table:
    buckets: Dict[Tuple[str, str], Counter] = defaultdict(Counter)
    for r in _closed(records):
        buckets[(iso_week(r.close.time), r.visibility.value)][r.closing.closing_type.value] += 1
    rows = []
    for (week, vis), c in sorted(buckets.items()):
        total = sum(c.values())
        rows.append((week, vis, total, *(c[t] / total for t in CLOSING_TYPES)))
    return Table("closing_type_shares", ["week", "visibility", "closings", *CLOSING_TYPES], rows)


def imbalance_histogram(records: Iterable[ChannelRecord]) -> Table:
    nbins = round(1 / IMBALANCE_BIN)
    counts = Counter()
    for r in _closed(records):
        idx = min(int(math.floor(r.closing.imbalance * nbins + 1e-9)), nbins - 1)
        counts[(r.visibility.value, r.closing.closing_type.family, idx)] += 1
    rows = [
        (v, fam, i * IMBALANCE_BIN, (i + 1) * IMBALANCE_BIN, counts[(v, fam, i)])
        for v in VISIBILITIES for fam in ("coop", "unilateral") for i in range(nbins)
    ]
    return Table("imbalance_histogram", ["visibility", "family", "bin_start", "bin_end", "count"], rows)


def lifetime_histogram(records: Iterable[ChannelRecord]) -> Table:
    counts = Counter()
    top = 0
    for r in records:
        days = r.lifetime_days
        if days is None:
            continue
        idx = int(days // LIFETIME_BIN_DAYS)
        top = max(top, idx + 1)
        counts[(r.visibility.value, idx)] += 1
    rows = [
        (v, i * LIFETIME_BIN_DAYS, (i + 1) * LIFETIME_BIN_DAYS, counts[(v, i)])
        for v in VISIBILITIES for i in range(top)
    ]
    return Table("lifetime_histogram", ["visibility", "days_start", "days_end", "count"], rows)


def lifetime_stats(records: Iterable[ChannelRecord]) -> Table:
    rows = []
    for v in VISIBILITIES:
        days = [r.lifetime_days for r in records if r.visibility.value == v and r.close is not None]
        rows.append((v, len(days), *(summary_stats(days) if days else (None, None, None))))
    return Table("lifetime_stats", ["visibility", "channels", "mean_days", "median_days", "p99_days"], rows)


def imbalance_stats(records: Iterable[ChannelRecord]) -> Table:
    rows = []
    closed = _closed(records)
    for v in VISIBILITIES:
        for fam in ("coop", "unilateral"):
            vals = [r.closing.imbalance for r in closed
                    if r.visibility.value == v and r.closing.closing_type.family == fam]
            rows.append((v, fam, len(vals), *(summary_stats(vals) if vals else (None, None, None))))
    return Table("imbalance_stats", ["visibility", "family", "channels", "mean", "median", "p99"], rows)


def htlc_tables(records: Iterable[ChannelRecord]) -> Tuple[Table, Table]:
    counts = Counter()
    values = []
    for r in _closed(records):
        if r.closing.closing_type.family != "unilateral":
            continue
        counts[(r.visibility.value, r.closing.htlc_count)] += 1
        values.extend((r.visibility.value, str(r.funding), v) for v in r.closing.htlc_values)
    count_rows = [(v, n, c) for (v, n), c in sorted(counts.items())]
    return (
        Table("htlc_counts", ["visibility", "htlc_count", "channels"], count_rows),
        Table("htlc_values", ["visibility", "funding", "value_sat"], sorted(values)),
    )


def resurrection_rates(records: Iterable[ChannelRecord]) -> Table:
    rows = []
    closed = _closed(records)
    for v in VISIBILITIES:
        for fam in ("all", "coop", "unilateral"):
            group = [r for r in closed if r.visibility.value == v
                     and (fam == "all" or r.closing.closing_type.family == fam)]
            hit = sum(1 for r in group if r.closing.resurrection)
            rows.append((v, fam, len(group), hit, hit / len(group) if group else 0.0))
    return Table("resurrection_rates", ["visibility", "family", "closed", "resurrected", "rate"], rows)


def delay_tables(records: Iterable[ChannelRecord]) -> Tuple[Table, Table]:
    delays = Counter()
    locks = Counter()
    for r in _closed(records):
        c = r.closing
        v = r.visibility.value
        if c.revocation_delay is not None:
            delays[(v, "revocation", c.revocation_delay)] += 1
        if c.spending_delay is not None:
            delays[(v, "spending", c.spending_delay)] += 1
        if c.to_self_delay is not None:
            locks[(v, c.to_self_delay)] += 1
    return (
        Table("delays", ["visibility", "kind", "blocks", "count"],
              [(*k, n) for k, n in sorted(delays.items())]),
        Table("to_self_delay", ["visibility", "to_self_delay", "count"],
              [(*k, n) for k, n in sorted(locks.items())]),
    )


def channel_table(records: Iterable[ChannelRecord]) -> Table:
    columns = [
        "funding", "scid", "visibility", "capacity", "open_height", "open_time", "close_height",
        "close_time", "closing_type", "out1", "out2", "imbalance", "htlc_count", "anchors",
        "anchor_value", "unspent_value", "fee", "to_self_delay", "revocation_delay", "spending_delay", "resurrected",
    ]
    rows = []
    for r in records:
        c = r.closing
        rows.append((
            str(r.funding), r.scid, r.visibility.value, r.capacity, r.open.height, r.open.time,
            r.close.height if r.close else None, r.close.time if r.close else None,
            c.closing_type.value if c else None,
            c.out1 if c else None, c.out2 if c else None, c.imbalance if c else None,
            c.htlc_count if c else None, c.anchors if c else None, c.anchor_value if c else None,
            c.unspent_value if c else None,
            c.fee if c else None, c.to_self_delay if c else None,
            c.revocation_delay if c else None, c.spending_delay if c else None,
            len(c.resurrection) if c else None,
        ))
    return Table("channels", columns, rows)


def stats_table(name: str, label: str, values: Sequence[float]) -> Table:
    stats = summary_stats(values) if values else (None, None, None)
    return Table(name, ["group", "n", "mean", "median", "p99"], [(label, len(values), *stats)])


def sample_times(start: int, end: int, spacing: int = SAMPLE_SPACING) -> List[int]:
    if end < start:
        return []
    return list(range(start, end + 1, spacing))
