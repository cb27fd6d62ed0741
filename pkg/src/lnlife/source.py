"""Transaction retrieval from fixture files or an Esplora-compatible REST index.

Both sources expose ``get_tx``, ``get_outspend`` and ``resolve_scid``. A
``CachedSource`` persists everything it fetches to an append-only JSON-lines
store so long scans can resume and replay offline.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Tuple, Union

import httpx

from .chain import OutPoint, Transaction, TxId, TxInput, TxOutput
from .errors import ConfigError, NotFound, SourceUnavailable

log = logging.getLogger(__name__)

CACHE_FORMAT = "lnlife-cache"
CACHE_VERSION = 1


# --- JSON codec --------------------------------------------------------------

def tx_to_json(tx: Transaction) -> dict:
    return {
        "txid": tx.txid.hex,
        "inputs": [
            {
                "prevout": {"txid": i.prevout.txid.hex, "vout": i.prevout.vout},
                "witness": [w.hex() for w in i.witness],
                "sequence": i.sequence,
            }
            for i in tx.inputs
        ],
        "outputs": [{"value": o.value, "script_pubkey": o.script_pubkey.hex()} for o in tx.outputs],
        "locktime": tx.locktime,
        "block_height": tx.block_height,
        "block_time": tx.block_time,
    }


def tx_from_json(obj: dict) -> Transaction:
    """Decode either the fixture layout or Esplora's native ``vin``/``vout`` layout."""
    if "vin" in obj:
        status = obj.get("status") or {}
        inputs = [
            TxInput(
                OutPoint(TxId.from_hex(i["txid"]), i["vout"]),
                tuple(bytes.fromhex(w) for w in i.get("witness") or ()),
                i.get("sequence", 0xFFFFFFFF),
            )
            for i in obj["vin"]
        ]
        outputs = [TxOutput(o["value"], bytes.fromhex(o["scriptpubkey"])) for o in obj["vout"]]
        height = status.get("block_height") if status.get("confirmed", True) else None
        btime = status.get("block_time") if status.get("confirmed", True) else None
    else:
        inputs = [
            TxInput(
                OutPoint(TxId.from_hex(i["prevout"]["txid"]), i["prevout"]["vout"]),
                tuple(bytes.fromhex(w) for w in i.get("witness", ())),
                i.get("sequence", 0xFFFFFFFF),
            )
            for i in obj["inputs"]
        ]
        outputs = [TxOutput(o["value"], bytes.fromhex(o["script_pubkey"])) for o in obj["outputs"]]
        height = obj.get("block_height")
        btime = obj.get("block_time")
    return Transaction(TxId.from_hex(obj["txid"]), inputs, outputs, obj.get("locktime", 0), height, btime)


def dumps_tx(tx: Transaction) -> str:
    return json.dumps(tx_to_json(tx), separators=(",", ":"))


@dataclass(frozen=True)
class OutspendInfo:
    spent: bool
    spender: Optional[TxId] = None
    spend_input_index: Optional[int] = None
    spend_height: Optional[int] = None

    def __post_init__(self) -> None:
        if self.spent != (self.spender is not None):
            raise ValueError("spent must hold exactly when a spender is known")

    def to_json(self) -> dict:
        return {
            "spent": self.spent,
            "spender": self.spender.hex if self.spender else None,
            "spend_input_index": self.spend_input_index,
            "spend_height": self.spend_height,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "OutspendInfo":
        if not obj.get("spent"):
            return cls(False)
        if "spender" in obj:
            return cls(True, TxId.from_hex(obj["spender"]), obj.get("spend_input_index"), obj.get("spend_height"))
        status = obj.get("status") or {}
        return cls(True, TxId.from_hex(obj["txid"]), obj.get("vin"), status.get("block_height"))


# --- sources -------------------------------------------------------------------

class ChainSource:
    def get_tx(self, txid: TxId) -> Transaction:
        raise NotImplementedError

    def get_outspend(self, outpoint: OutPoint) -> OutspendInfo:
        raise NotImplementedError

    def resolve_scid(self, block: int, tx_index: int, vout: int) -> OutPoint:
        raise NotImplementedError

    def spender(self, outpoint: OutPoint) -> Optional[Transaction]:
        info = self.get_outspend(outpoint)
        if not info.spent:
            return None
        return self.get_tx(info.spender)


def read_jsonl(path: Path) -> Iterator[dict]:
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)


class FixtureSource(ChainSource):
    """In-memory index over newline-delimited transaction files.

    A transaction's position within its block is its order of appearance
    among same-height records (files read in name order), which is what
    short channel ids resolve against.
    """

    def __init__(self, transactions: Iterable[Transaction] = ()):
        self.txs: Dict[TxId, Transaction] = {}
        self.spends: Dict[OutPoint, Tuple[TxId, int]] = {}
        self.blocks: Dict[int, List[TxId]] = {}
        for tx in transactions:
            self.add(tx)

    @classmethod
    def from_path(cls, path: Union[str, Path]) -> "FixtureSource":
        path = Path(path)
        if path.is_dir():
            files = sorted(path.glob("*.jsonl"))
        elif path.exists():
            files = [path]
        else:
            raise ConfigError(f"fixture path {path} does not exist")
        src = cls()
        for f in files:
            for lineno, obj in enumerate(read_jsonl(f), 1):
                try:
                    tx = tx_from_json(obj)
                except (KeyError, TypeError, ValueError) as exc:
                    raise ConfigError(f"{f}: record {lineno} is not a transaction: {exc!r}") from exc
                src.add(tx)
        return src

    def add(self, tx: Transaction) -> None:
        if tx.txid in self.txs:
            return
        self.txs[tx.txid] = tx
        for i, txin in enumerate(tx.inputs):
            self.spends.setdefault(txin.prevout, (tx.txid, i))
        if tx.block_height is not None:
            self.blocks.setdefault(tx.block_height, []).append(tx.txid)

    def __iter__(self) -> Iterator[Transaction]:
        return iter(self.txs.values())

    def __len__(self) -> int:
        return len(self.txs)

    def get_tx(self, txid: TxId) -> Transaction:
        try:
            return self.txs[txid]
        except KeyError:
            raise NotFound(f"transaction {txid} not found") from None

    def get_outspend(self, outpoint: OutPoint) -> OutspendInfo:
        tx = self.get_tx(outpoint.txid)
        if outpoint.vout >= len(tx.outputs):
            raise NotFound(f"{outpoint.txid} has no output {outpoint.vout}")
        hit = self.spends.get(outpoint)
        if hit is None:
            return OutspendInfo(False)
        spender = self.txs[hit[0]]
        return OutspendInfo(True, spender.txid, hit[1], spender.block_height)

    def resolve_scid(self, block: int, tx_index: int, vout: int) -> OutPoint:
        txids = self.blocks.get(block, [])
        if not 0 <= tx_index < len(txids):
            raise NotFound(f"no transaction {tx_index} in block {block}")
        tx = self.txs[txids[tx_index]]
        if vout >= len(tx.outputs):
            raise NotFound(f"{tx.txid} has no output {vout}")
        return OutPoint(tx.txid, vout)

    def position(self, txid: TxId) -> Tuple[int, int]:
        """(block height, index in block) of a confirmed transaction."""
        tx = self.get_tx(txid)
        return tx.block_height, self.blocks[tx.block_height].index(txid)


class EsploraSource(ChainSource):
    """Client for ``GET /tx/{txid}`` and ``GET /tx/{txid}/outspend/{vout}``.

    At most ``max_in_flight`` requests run at once across threads. 5xx,
    429 and transport failures are retried with exponential backoff, then
    surface as ``SourceUnavailable``.
    """

    def __init__(
        self,
        base_url: str,
        timeout: float = 10.0,
        retries: int = 3,
        max_in_flight: int = 4,
        backoff: float = 0.5,
        client: Optional[httpx.Client] = None,
    ):
        self.client = client or httpx.Client(base_url=base_url.rstrip("/"), timeout=timeout)
        self.retries = retries
        self.backoff = backoff
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def _get(self, path: str) -> httpx.Response:
        last = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                with self._slots:
                    resp = self.client.get(path)
            except httpx.TransportError as exc:
                last = str(exc)
                log.warning("GET %s failed (%s), attempt %d", path, exc, attempt + 1)
                continue
            if resp.status_code == 404:
                raise NotFound(f"GET {path}: 404")
            if resp.status_code >= 500 or resp.status_code == 429:
                last = f"HTTP {resp.status_code}"
                log.warning("GET %s returned %d, attempt %d", path, resp.status_code, attempt + 1)
                continue
            resp.raise_for_status()
            return resp
        raise SourceUnavailable(f"GET {path} failed after {self.retries + 1} attempts: {last}")

    def get_tx(self, txid: TxId) -> Transaction:
        return tx_from_json(self._get(f"/tx/{txid.hex}").json())

    def get_outspend(self, outpoint: OutPoint) -> OutspendInfo:
        return OutspendInfo.from_json(self._get(f"/tx/{outpoint.txid.hex}/outspend/{outpoint.vout}").json())

    def resolve_scid(self, block: int, tx_index: int, vout: int) -> OutPoint:
        block_hash = self._get(f"/block-height/{block}").text.strip()
        txid = self._get(f"/block/{block_hash}/txid/{tx_index}").text.strip()
        return OutPoint(TxId.from_hex(txid), vout)

    def close(self) -> None:
        self.client.close()


# --- cache ---------------------------------------------------------------------

class TxCache:
    """Append-only JSON-lines store with a version header line."""

    def __init__(self, directory: Union[str, Path]):
        self.path = Path(directory) / "cache.jsonl"
        self._lock = threading.Lock()
        self._txs: Dict[str, dict] = {}
        self._outspends: Dict[str, dict] = {}
        self._scids: Dict[str, str] = {}
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if self.path.exists() and self.path.stat().st_size:
            self._load()
        else:
            with open(self.path, "w") as fh:
                fh.write(json.dumps({"format": CACHE_FORMAT, "version": CACHE_VERSION}) + "\n")

    def _load(self) -> None:
        rows = read_jsonl(self.path)
        header = next(rows, {})
        if header.get("format") != CACHE_FORMAT or header.get("version") != CACHE_VERSION:
            raise ConfigError(f"{self.path}: unsupported cache header {header}")
        stores = {"tx": self._txs, "outspend": self._outspends, "scid": self._scids}
        for row in rows:
            stores[row["type"]].setdefault(row["key"], row["value"])

    def _append(self, store: dict, kind: str, key: str, value) -> None:
        with self._lock:
            if key in store:
                return
            store[key] = value
            with open(self.path, "a") as fh:
                fh.write(json.dumps({"type": kind, "key": key, "value": value}, separators=(",", ":")) + "\n")

    def get_tx(self, txid: TxId) -> Optional[Transaction]:
        obj = self._txs.get(txid.hex)
        return tx_from_json(obj) if obj is not None else None

    def put_tx(self, tx: Transaction) -> None:
        self._append(self._txs, "tx", tx.txid.hex, tx_to_json(tx))

    def get_outspend(self, outpoint: OutPoint) -> Optional[OutspendInfo]:
        obj = self._outspends.get(str(outpoint))
        return OutspendInfo.from_json(obj) if obj is not None else None

    def put_outspend(self, outpoint: OutPoint, info: OutspendInfo) -> None:
        self._append(self._outspends, "outspend", str(outpoint), info.to_json())

    def get_scid(self, key: str) -> Optional[OutPoint]:
        value = self._scids.get(key)
        return OutPoint.parse(value) if value is not None else None

    def put_scid(self, key: str, outpoint: OutPoint) -> None:
        self._append(self._scids, "scid", key, str(outpoint))

    def __len__(self) -> int:
        return len(self._txs)


class CachedSource(ChainSource):
    """Read-through cache; with ``offline=True`` misses raise ``NotFound``."""

    def __init__(self, source: Optional[ChainSource], cache: TxCache, offline: bool = False):
        self.source = source
        self.cache = cache
        self.offline = offline or source is None

    def _miss(self, what: str):
        if self.offline:
            raise NotFound(f"{what} not in cache and source is offline")

    def get_tx(self, txid: TxId) -> Transaction:
        tx = self.cache.get_tx(txid)
        if tx is not None:
            return tx
        self._miss(f"transaction {txid}")
        tx = self.source.get_tx(txid)
        self.cache.put_tx(tx)
        return self.cache.get_tx(txid)

    def get_outspend(self, outpoint: OutPoint) -> OutspendInfo:
        info = self.cache.get_outspend(outpoint)
        if info is not None:
            return info
        self._miss(f"outspend {outpoint}")
        info = self.source.get_outspend(outpoint)
        self.cache.put_outspend(outpoint, info)
        return info

    def resolve_scid(self, block: int, tx_index: int, vout: int) -> OutPoint:
        key = f"{block}x{tx_index}x{vout}"
        op = self.cache.get_scid(key)
        if op is not None:
            return op
        self._miss(f"scid {key}")
        op = self.source.resolve_scid(block, tx_index, vout)
        self.cache.put_scid(key, op)
        return op


# --- channel walk ----------------------------------------------------------------

@dataclass
class WalkResult:
    funding: OutPoint
    funding_tx: Transaction
    close_tx: Optional[Transaction] = None
    # close output -> transactions reached from it, breadth-first; [0] spends it directly
    downstream: Dict[OutPoint, List[Transaction]] = field(default_factory=dict)
    depth_reached: int = 0
    errors: List[str] = field(default_factory=list)


def walk_channel(source: ChainSource, funding: OutPoint, max_downstream_depth: int = 1) -> WalkResult:
    """Follow a channel from its funding output to the close and beyond.

    Failures past the funding leg are recorded in ``errors`` and yield a
    partial result; a missing funding transaction raises.
    """
    funding_tx = source.get_tx(funding.txid)
    if funding.vout >= len(funding_tx.outputs):
        raise NotFound(f"{funding.txid} has no output {funding.vout}")
    result = WalkResult(funding, funding_tx)
    try:
        result.close_tx = source.spender(funding)
    except (NotFound, SourceUnavailable) as exc:
        result.errors.append(f"close: {exc}")
        return result
    if result.close_tx is None:
        return result

    for vout in range(len(result.close_tx.outputs)):
        op = OutPoint(result.close_tx.txid, vout)
        reached: List[Transaction] = []
        frontier = [op]
        for depth in range(1, max_downstream_depth + 1):
            nxt = []
            for prev in frontier:
                try:
                    tx = source.spender(prev)
                except (NotFound, SourceUnavailable) as exc:
                    result.errors.append(f"spend of {prev}: {exc}")
                    continue
                if tx is None or tx in reached:
                    continue
                reached.append(tx)
                result.depth_reached = max(result.depth_reached, depth)
                nxt.extend(OutPoint(tx.txid, i) for i in range(len(tx.outputs)))
            frontier = nxt
        if reached:
            result.downstream[op] = reached
    return result
