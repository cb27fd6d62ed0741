"""Per-channel lifecycle reconstruction: closing type, balances, HTLCs, delays."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from .chain import BlockRef, OutPoint, Transaction, TxId
from .errors import (
    LockViolated,
    NegativeDelay,
    NegativeLifetime,
    NotAClose,
    Unclassifiable,
    ZeroTotal,
)
from .script import LocalSpendPath, OutputClass, OutputKind, classify_local_spend, classify_output

if TYPE_CHECKING:
    from .source import WalkResult

COMMITMENT_LOCKTIME_MIN = 0x20000000  # 536870912
COMMITMENT_LOCKTIME_MAX = 0x20FFFFFF  # 553648127
SECONDS_PER_DAY = 86400


class ClosingType(enum.Enum):
    COOP_X1 = "coopx1"
    COOP_X2 = "coopx2"
    LOCAL = "local"
    LOCAL_REMOTE = "local+remote"
    REMOTE = "remote"
    REVOKED = "revoked"

    @property
    def family(self) -> str:
        return "coop" if self in (ClosingType.COOP_X1, ClosingType.COOP_X2) else "unilateral"


class Visibility(enum.Enum):
    PUBLIC = "public"
    PRIVATE = "private"


@dataclass(frozen=True)
class CommitmentMarker:
    is_commitment: bool
    obscured_payload: int = 0

    def __bool__(self) -> bool:
        return self.is_commitment


def is_commitment(tx: Transaction) -> CommitmentMarker:
    if COMMITMENT_LOCKTIME_MIN <= tx.locktime <= COMMITMENT_LOCKTIME_MAX:
        return CommitmentMarker(True, tx.locktime & 0xFFFFFF)
    return CommitmentMarker(False)


def classify_closing(
    funding: OutPoint,
    spend_tx: Transaction,
    output_classes: Sequence[OutputClass],
    local_spend_paths: Optional[Sequence[LocalSpendPath]] = None,
) -> ClosingType:
    if spend_tx.spends(funding) is None:
        raise NotAClose(f"{spend_tx.txid} does not spend {funding}")
    kinds = [c.kind for c in output_classes]

    if not is_commitment(spend_tx):
        n = sum(1 for k in kinds if k is not OutputKind.ANCHOR)
        if n == 1:
            return ClosingType.COOP_X1
        if n == 2:
            return ClosingType.COOP_X2
        raise Unclassifiable(f"cooperative close {spend_tx.txid} has {n} value outputs")

    if local_spend_paths and LocalSpendPath.REVOCATION in local_spend_paths:
        return ClosingType.REVOKED
    has_local = OutputKind.TO_LOCAL in kinds
    has_remote = OutputKind.TO_REMOTE in kinds
    if has_local and has_remote:
        return ClosingType.LOCAL_REMOTE
    if has_local:
        return ClosingType.LOCAL
    if has_remote:
        return ClosingType.REMOTE
    raise Unclassifiable(f"commitment {spend_tx.txid} has neither a local nor a remote output")


def imbalance(out1: int, out2: int) -> float:
    total = out1 + out2
    if total <= 0:
        raise ZeroTotal("imbalance undefined for zero total balance")
    return 2 * (max(out1, out2) / total - 0.5)


def share_to_imbalance(share: float) -> float:
    """Imbalance of a close where one side holds ``share`` of the funds."""
    return 2 * (share - 0.5)


def extract_htlcs(output_classes: Sequence[OutputClass], values: Sequence[int]) -> Tuple[int, List[int]]:
    htlc_values = [v for c, v in zip(output_classes, values) if c.kind is OutputKind.HTLC]
    return len(htlc_values), htlc_values


@dataclass(frozen=True)
class ResurrectionLink:
    """A closing output that was spent directly into a channel funding transaction."""

    closing_output: OutPoint
    funding_txid: TxId


def detect_resurrection(
    closing_outputs: Iterable[OutPoint],
    funding_index: Set[OutPoint],
    spenders: Mapping[OutPoint, TxId],
) -> List[ResurrectionLink]:
    funding_txids = {op.txid for op in funding_index}
    links = []
    for op in closing_outputs:
        spender = spenders.get(op)
        if spender is not None and spender in funding_txids:
            links.append(ResurrectionLink(op, spender))
    return links


def channel_lifetime(open_: BlockRef, close: BlockRef) -> float:
    """Lifetime in days, from block timestamps."""
    if close.time < open_.time:
        raise NegativeLifetime(f"close at {close.time} precedes open at {open_.time}")
    return (close.time - open_.time) / SECONDS_PER_DAY


def revocation_delay(commitment_height: int, revocation_height: int) -> int:
    if revocation_height < commitment_height:
        raise NegativeDelay(f"revocation at {revocation_height} before commitment at {commitment_height}")
    return revocation_height - commitment_height


def spending_delay(commitment_height: int, to_self_delay: int, spend_height: int) -> int:
    unlock = commitment_height + to_self_delay
    if spend_height < unlock:
        raise LockViolated(f"spend at {spend_height} before relative lock expires at {unlock}")
    return spend_height - unlock


@dataclass
class ClosingReport:
    closing_type: ClosingType
    out1: int
    out2: int
    imbalance: float
    htlc_count: int = 0
    htlc_values: List[int] = field(default_factory=list)
    anchors: int = 0
    anchor_value: int = 0
    # unilateral outputs whose script was never revealed; not part of any balance
    unspent_value: int = 0
    resurrection: List[ResurrectionLink] = field(default_factory=list)
    close_height: int = 0
    fee: int = 0
    to_self_delay: Optional[int] = None
    revocation_delay: Optional[int] = None
    spending_delay: Optional[int] = None


@dataclass
class ChannelRecord:
    funding: OutPoint
    capacity: int
    visibility: Visibility
    open: BlockRef
    close: Optional[BlockRef] = None
    closing: Optional[ClosingReport] = None
    scid: Optional[str] = None

    @property
    def lifetime_days(self) -> Optional[float]:
        if self.close is None:
            return None
        return channel_lifetime(self.open, self.close)


def _first_spender(walk: "WalkResult", op: OutPoint) -> Optional[Transaction]:
    chain = walk.downstream.get(op)
    return chain[0] if chain else None


def build_closing_report(
    funding: OutPoint,
    capacity: int,
    close_tx: Transaction,
    spenders: Mapping[OutPoint, Transaction],
    funding_index: Set[OutPoint],
) -> ClosingReport:
    """Classify ``close_tx`` given the transactions spending its outputs."""
    classes: List[OutputClass] = []
    witnesses = []
    for vout, out in enumerate(close_tx.outputs):
        op = OutPoint(close_tx.txid, vout)
        spender = spenders.get(op)
        witness = None
        if spender is not None:
            witness = spender.inputs[spender.spends(op)].witness
        classes.append(classify_output(out, spend_witness=witness))
        witnesses.append(witness)

    paths: List[LocalSpendPath] = []
    to_self_delay = rev_delay = spend_delay = None
    commitment_height = close_tx.block_height
    for vout, cls in enumerate(classes):
        if cls.kind is not OutputKind.TO_LOCAL or witnesses[vout] is None:
            continue
        path = classify_local_spend(witnesses[vout], cls.local)
        paths.append(path)
        to_self_delay = cls.local.to_self_delay
        spend_height = spenders[OutPoint(close_tx.txid, vout)].block_height
        if commitment_height is None or spend_height is None:
            continue
        if path is LocalSpendPath.REVOCATION:
            rev_delay = revocation_delay(commitment_height, spend_height)
        else:
            spend_delay = spending_delay(commitment_height, to_self_delay, spend_height)
    if to_self_delay is None:
        for cls in classes:
            if cls.kind is OutputKind.TO_LOCAL:
                to_self_delay = cls.local.to_self_delay

    closing_type = classify_closing(funding, close_tx, classes, paths)
    values = [o.value for o in close_tx.outputs]

    if closing_type.family == "coop":
        balances = [v for c, v in zip(classes, values) if c.kind is not OutputKind.ANCHOR]
        htlc_count, htlc_values = 0, []
        unspent_value = 0
    else:
        # settled balances only; local first so out1/out2 keep a fixed meaning
        balances = [v for c, v in zip(classes, values) if c.kind is OutputKind.TO_LOCAL]
        balances += [v for c, v in zip(classes, values) if c.kind is OutputKind.TO_REMOTE]
        htlc_count, htlc_values = extract_htlcs(classes, values)
        unspent_value = sum(v for c, v in zip(classes, values) if c.kind is OutputKind.UNSPENT)
    if not 1 <= len(balances) <= 2:
        raise Unclassifiable(f"{close_tx.txid} has {len(balances)} balance outputs")
    out1 = balances[0]
    out2 = balances[1] if len(balances) == 2 else 0

    anchor_values = [v for c, v in zip(classes, values) if c.kind is OutputKind.ANCHOR]
    closing_outputs = [OutPoint(close_tx.txid, i) for i in range(len(close_tx.outputs))]
    spender_ids = {op: tx.txid for op, tx in spenders.items()}
    return ClosingReport(
        closing_type=closing_type,
        out1=out1,
        out2=out2,
        imbalance=imbalance(out1, out2),
        htlc_count=htlc_count,
        htlc_values=htlc_values,
        anchors=len(anchor_values),
        anchor_value=sum(anchor_values),
        unspent_value=unspent_value,
        resurrection=detect_resurrection(closing_outputs, funding_index, spender_ids),
        close_height=commitment_height if commitment_height is not None else 0,
        fee=capacity - sum(values),
        to_self_delay=to_self_delay,
        revocation_delay=rev_delay,
        spending_delay=spend_delay,
    )


def analyze_channel(
    walk: "WalkResult",
    visibility: Visibility,
    funding_index: Set[OutPoint],
    scid: Optional[str] = None,
) -> ChannelRecord:
    funding_tx = walk.funding_tx
    funding = walk.funding
    capacity = funding_tx.outputs[funding.vout].value
    if funding_tx.block is None:
        raise ValueError(f"funding transaction {funding_tx.txid} is unconfirmed")
    record = ChannelRecord(funding, capacity, visibility, funding_tx.block, scid=scid)
    close_tx = walk.close_tx
    if close_tx is None:
        return record
    record.close = close_tx.block
    spenders = {}
    for op in walk.downstream:
        tx = _first_spender(walk, op)
        if tx is not None:
            spenders[op] = tx
    record.closing = build_closing_report(funding, capacity, close_tx, spenders, funding_index)
    return record
