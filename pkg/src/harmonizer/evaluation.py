"""Gold-standard evaluation: micro-averaged pairwise precision/recall/F1 over
unordered record pairs, reduction rate, per-entity portfolio rows, and B-cubed
as a secondary view.

The record universe is the gold standard's: records the prediction lacks are
scored as predicted singletons, records only the prediction knows are ignored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Hashable, Mapping, Optional, Sequence

from .errors import InputError
from .ingest import AssigneeRecord, GoldLabel


@dataclass(frozen=True)
class PairwiseConfusion:
    tp: int
    fp: int
    fn: int


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float


def _pairs(count: int) -> int:
    return count * (count - 1) // 2


def _extended_prediction(
    pred: Mapping[str, Hashable], gold: Sequence[GoldLabel]
) -> dict[str, Hashable]:
    """Prediction restricted to the gold universe, missing records as singletons."""
    if not gold:
        raise InputError("gold standard is empty")
    gold_ids = {label.record_id for label in gold}
    if len(gold_ids) != len(gold):
        raise InputError("gold standard has duplicate record ids")
    if not gold_ids & set(pred):
        raise InputError("prediction and gold standard share no records")
    extended: dict[str, Hashable] = {}
    for rid in gold_ids:
        if rid in pred:
            extended[rid] = pred[rid]
        else:
            extended[rid] = ("__missing__", rid)
    return extended


def pairwise_confusion(pred: Mapping[str, Hashable], gold: Sequence[GoldLabel]) -> PairwiseConfusion:
    """Count agreeing/disagreeing unordered pairs without enumerating them.

    tp sums C(n, 2) over the sizes of (predicted cluster x gold entity)
    intersections; fp and fn follow from the predicted and gold pair totals.
    """
    extended = _extended_prediction(pred, gold)
    gold_of = {label.record_id: label.entity_id for label in gold}
    cell_sizes: dict[tuple[Hashable, str], int] = {}
    pred_sizes: dict[Hashable, int] = {}
    gold_sizes: dict[str, int] = {}
    for rid, cid in extended.items():
        eid = gold_of[rid]
        cell_sizes[(cid, eid)] = cell_sizes.get((cid, eid), 0) + 1
        pred_sizes[cid] = pred_sizes.get(cid, 0) + 1
        gold_sizes[eid] = gold_sizes.get(eid, 0) + 1
    tp = sum(_pairs(n) for n in cell_sizes.values())
    pred_pairs = sum(_pairs(n) for n in pred_sizes.values())
    gold_pairs = sum(_pairs(n) for n in gold_sizes.values())
    return PairwiseConfusion(tp=tp, fp=pred_pairs - tp, fn=gold_pairs - tp)


def compute_metrics(confusion: PairwiseConfusion) -> Metrics:
    """P/R/F1 with the degenerate cases pinned: an empty side is perfect only
    when the other side is empty too."""
    tp, fp, fn = confusion.tp, confusion.fp, confusion.fn
    if tp + fp == 0:
        precision = 1.0 if fn == 0 else 0.0
    else:
        precision = tp / (tp + fp)
    if tp + fn == 0:
        recall = 1.0 if fp == 0 else 0.0
    else:
        recall = tp / (tp + fn)
    if precision + recall == 0.0:
        f1 = 0.0
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    return Metrics(precision=precision, recall=recall, f1=f1)


def reduction_rate(n_before: int, n_after: int) -> float:
    """(names in - communities out) / names in."""
    if n_before <= 0:
        raise InputError(f"reduction rate undefined for n_before={n_before}")
    if n_after < 0 or n_after > n_before:
        raise InputError(f"n_after={n_after} must be in [0, n_before={n_before}]")
    return (n_before - n_after) / n_before


def bcubed(pred: Mapping[str, Hashable], gold: Sequence[GoldLabel]) -> Metrics:
    """Secondary, per-record view of the same comparison."""
    extended = _extended_prediction(pred, gold)
    gold_of = {label.record_id: label.entity_id for label in gold}
    pred_members: dict[Hashable, list[str]] = {}
    gold_members: dict[str, list[str]] = {}
    for rid, cid in extended.items():
        pred_members.setdefault(cid, []).append(rid)
        gold_members.setdefault(gold_of[rid], []).append(rid)
    precision_sum = 0.0
    recall_sum = 0.0
    for rid, cid in extended.items():
        eid = gold_of[rid]
        cluster = pred_members[cid]
        entity = gold_members[eid]
        overlap = sum(1 for other in cluster if gold_of[other] == eid)
        precision_sum += overlap / len(cluster)
        recall_sum += overlap / len(entity)
    n = len(extended)
    precision = precision_sum / n
    recall = recall_sum / n
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return Metrics(precision=precision, recall=recall, f1=f1)


@dataclass(frozen=True)
class PortfolioRow:
    record_id: str
    raw_name: str
    community_id: Optional[int]
    canonical_name: Optional[str]
    n_variants: int
    portfolio: int
    missing: bool = False


def portfolio_report(
    pred: Mapping[str, int],
    records: Mapping[str, AssigneeRecord],
    focus_ids: Sequence[str],
    canonical: Optional[Mapping[int, str]] = None,
) -> list[PortfolioRow]:
    """For each focus record: its community's variant count and summed patents.

    Focus ids absent from the prediction come back flagged rather than failing
    the whole report.
    """
    members_of: dict[int, list[str]] = {}
    for rid, cid in pred.items():
        members_of.setdefault(cid, []).append(rid)
    rows: list[PortfolioRow] = []
    for rid in focus_ids:
        record = records.get(rid)
        raw_name = record.raw_name if record is not None else ""
        if rid not in pred:
            rows.append(
                PortfolioRow(
                    record_id=rid, raw_name=raw_name, community_id=None, canonical_name=None,
                    n_variants=0, portfolio=0, missing=True,
                )
            )
            continue
        cid = pred[rid]
        members = members_of[cid]
        portfolio = sum(records[m].patent_count for m in members if m in records)
        rows.append(
            PortfolioRow(
                record_id=rid,
                raw_name=raw_name,
                community_id=cid,
                canonical_name=(canonical or {}).get(cid),
                n_variants=len(members),
                portfolio=portfolio,
                missing=False,
            )
        )
    return rows


@dataclass(frozen=True)
class EvalReport:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    n_records: int
    n_pred_communities: int
    n_gold_entities: int
    n_before: int
    n_after: int
    reduction: float
    bcubed_precision: float
    bcubed_recall: float
    bcubed_f1: float

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "n_records": self.n_records,
            "n_pred_communities": self.n_pred_communities,
            "n_gold_entities": self.n_gold_entities,
            "reduction": {"n_before": self.n_before, "n_after": self.n_after, "rate": self.reduction},
            "bcubed": {
                "precision": self.bcubed_precision,
                "recall": self.bcubed_recall,
                "f1": self.bcubed_f1,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def build_report(
    pred: Mapping[str, Hashable],
    gold: Sequence[GoldLabel],
    n_before: Optional[int] = None,
    n_after: Optional[int] = None,
) -> EvalReport:
    """Assemble the full evaluation report. Reduction counts default to the
    prediction's own record and community counts."""
    confusion = pairwise_confusion(pred, gold)
    metrics = compute_metrics(confusion)
    bc = bcubed(pred, gold)
    if n_before is None:
        n_before = len(pred)
    if n_after is None:
        n_after = len(set(pred.values()))
    gold_ids = {label.record_id for label in gold}
    return EvalReport(
        precision=metrics.precision,
        recall=metrics.recall,
        f1=metrics.f1,
        tp=confusion.tp,
        fp=confusion.fp,
        fn=confusion.fn,
        n_records=len(gold_ids),
        n_pred_communities=len(set(pred.values())),
        n_gold_entities=len({label.entity_id for label in gold}),
        n_before=n_before,
        n_after=n_after,
        reduction=reduction_rate(n_before, n_after),
        bcubed_precision=bc.precision,
        bcubed_recall=bc.recall,
        bcubed_f1=bc.f1,
    )
