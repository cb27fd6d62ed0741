"""``lnlife`` command line.

Exit codes: 0 on success, 1 on configuration errors, 2 when the chain
source failed for every channel.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import click

from .chain import OutPoint
from .errors import ConfigError, LnLifeError, SourceUnavailable
from .gossip import MIN_UPDATES
from .heuristics import DEFAULT_MAX_DEPTH, MAX_CHANNEL_SAT, MIN_CHANNEL_SAT, PropertyParams
from .pipeline import PipelineConfig, run_pipeline
from .report import ReportBundle, emit
from .source import CachedSource, ChainSource, EsploraSource, FixtureSource, TxCache
from .synth import DEFAULT_CORPUS, generate_corpus, parse_spec

EXIT_CONFIG = 1
EXIT_SOURCE = 2

CLASSIFY_TABLES = [
    "channels", "weekly_openings", "weekly_closings", "closing_type_counts", "closing_type_shares",
    "imbalance_histogram", "imbalance_stats", "lifetime_histogram", "lifetime_stats", "htlc_counts",
    "htlc_values", "resurrection_rates", "delays", "to_self_delay",
]
GOSSIP_TABLES = ["update_rates", "update_rate_stats", "fee_correlations", "fee_correlation_stats", "active_series"]


def read_public_list(path: Path) -> List[OutPoint]:
    """One ``txid:vout`` per line; blank lines and ``#`` comments are ignored."""
    out = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            out.append(OutPoint.parse(line))
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from exc
    return out


class Settings:
    def __init__(self, **kw):
        self.__dict__.update(kw)
        self._source: Optional[ChainSource] = None

    def source(self) -> ChainSource:
        if self._source is not None:
            return self._source
        base = None if self.offline else self._base_source()
        if self.cache_dir is not None:
            self._source = CachedSource(base, TxCache(self.cache_dir), offline=self.offline)
        elif base is None:
            raise ConfigError("--offline needs --cache-dir")
        else:
            self._source = base
        return self._source

    def _base_source(self) -> ChainSource:
        if self.source_kind == "fixtures":
            if self.fixtures is None:
                raise ConfigError("--fixtures is required with --source fixtures")
            return FixtureSource.from_path(self.fixtures)
        if not self.url:
            raise ConfigError("--url is required with --source rest")
        return EsploraSource(self.url, timeout=self.timeout, retries=self.retries, max_in_flight=self.max_in_flight)

    def config(self, detect_private: bool = True) -> PipelineConfig:
        if self.min_channel_sat > self.max_channel_sat:
            raise ConfigError("--min-channel-sat exceeds --max-channel-sat")
        if self.gossip is not None and not self.gossip.exists():
            raise ConfigError(f"gossip file {self.gossip} does not exist")
        public = read_public_list(self.public_list) if self.public_list is not None else []
        return PipelineConfig(
            source=self.source(),
            gossip_path=self.gossip,
            public_channels=public,
            property_params=PropertyParams(self.min_channel_sat, self.max_channel_sat),
            trace_depth=self.trace_depth,
            min_updates=self.min_updates,
            workers=self.workers,
            detect_private=detect_private,
        )


def _emit(settings: Settings, bundle: ReportBundle, names: Optional[List[str]] = None) -> None:
    if names is not None:
        bundle.tables = {n: bundle.tables[n] for n in names if n in bundle.tables}
    paths = emit(bundle, settings.fmt, settings.out_dir)
    click.echo(f"wrote {len(paths)} files to {settings.out_dir}")


@click.group()
@click.option("--source", "source_kind", type=click.Choice(["fixtures", "rest"]), default="fixtures",
              show_default=True, help="Chain data backend.")
@click.option("--fixtures", type=click.Path(path_type=Path), help="Fixture directory or .jsonl file.")
@click.option("--url", help="Esplora base URL for --source rest.")
@click.option("--cache-dir", type=click.Path(path_type=Path), help="Persistent transaction cache.")
@click.option("--offline", is_flag=True, help="Serve from the cache only.")
@click.option("--gossip", type=click.Path(path_type=Path), help="Gossip JSON-lines file.")
@click.option("--public-list", type=click.Path(path_type=Path), help="Extra public funding outpoints.")
@click.option("--seed", type=int, default=42, show_default=True)
@click.option("--out-dir", type=click.Path(path_type=Path), default=Path("out"), show_default=True)
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv", show_default=True)
@click.option("--min-channel-sat", type=click.IntRange(min=0), default=MIN_CHANNEL_SAT, show_default=True)
@click.option("--max-channel-sat", type=click.IntRange(min=0), default=MAX_CHANNEL_SAT, show_default=True)
@click.option("--trace-depth", type=click.IntRange(min=0), default=DEFAULT_MAX_DEPTH, show_default=True)
@click.option("--min-updates", type=click.IntRange(min=1), default=MIN_UPDATES, show_default=True)
@click.option("--workers", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--timeout", type=float, default=10.0, show_default=True, help="REST timeout in seconds.")
@click.option("--retries", type=click.IntRange(min=0), default=3, show_default=True)
@click.option("--max-in-flight", type=click.IntRange(min=1), default=4, show_default=True)
@click.option("-v", "--verbose", count=True)
@click.pass_context
def cli(ctx, verbose, **kw):
    """Lightning channel lifecycle analysis over chain and gossip data."""
    logging.basicConfig(level=logging.ERROR - 10 * min(verbose, 3), format="%(levelname)s %(name)s: %(message)s")
    ctx.obj = Settings(**kw)


@cli.command()
@click.option("--spec", "spec_text", default=None, help='Scenario counts, e.g. "coopx2=10,peeling_chain:5=2".')
@click.pass_obj
def synth(settings: Settings, spec_text):
    """Generate a labeled synthetic corpus into --out-dir."""
    try:
        spec = parse_spec(spec_text) if spec_text is not None else DEFAULT_CORPUS
    except ValueError as exc:
        raise ConfigError(f"bad --spec: {exc}") from exc
    paths = generate_corpus(spec, settings.seed, settings.out_dir, settings.workers)
    for name, path in paths.items():
        click.echo(f"{name}: {path}")


@cli.command()
@click.pass_obj
def ingest(settings: Settings):
    """Fetch everything a report needs (fills --cache-dir) and print diagnostics."""
    bundle = run_pipeline(settings.config())
    click.echo(json.dumps(bundle.diagnostics, sort_keys=True))


@cli.command()
@click.option("--no-private", is_flag=True, help="Skip private-channel detection.")
@click.pass_obj
def classify(settings: Settings, no_private):
    """Classify closings and write per-channel and closing tables."""
    bundle = run_pipeline(settings.config(detect_private=not no_private))
    _emit(settings, bundle, CLASSIFY_TABLES)


@cli.command("detect-private")
@click.pass_obj
def detect_private(settings: Settings):
    """Run the private-channel heuristics from the public seeds."""
    bundle = run_pipeline(settings.config())
    _emit(settings, bundle, ["private_candidates"])


@cli.command("gossip-stats")
@click.pass_obj
def gossip_stats(settings: Settings):
    """Update rates, fee correlations and active-node series."""
    bundle = run_pipeline(settings.config(detect_private=False))
    _emit(settings, bundle, GOSSIP_TABLES)


@cli.command()
@click.pass_obj
def report(settings: Settings):
    """Full pipeline; every table."""
    _emit(settings, run_pipeline(settings.config()))


def main(argv: Optional[List[str]] = None) -> int:
    try:
        cli.main(args=argv, prog_name="lnlife", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return EXIT_CONFIG
    except click.ClickException as exc:
        exc.show()
        return EXIT_CONFIG
    except ConfigError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_CONFIG
    except SourceUnavailable as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_SOURCE
    except LnLifeError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())
