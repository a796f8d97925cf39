"""Score evaluation: ROC construction, AUC, ASR, TPR at fixed FPR, reports.

Score orientation is uniform across attacks: larger score means predicted
member. All statistics are invariant under strictly increasing transforms of
the scores.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EvalDegenerateError, InvalidArgumentError
from . import svgplot


@dataclass(frozen=True)
class ScoredRecord:
    """One sample's membership score together with its provenance."""

    sample_id: int
    is_member: bool
    score: float
    queries: int
    attack_tag: str
    metric: str = ""
    config_hash: str = ""
    aggregation: float | None = None

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise InvalidArgumentError(f"score must be finite, got {self.score}")
        if self.queries < 0:
            raise InvalidArgumentError(f"queries must be >= 0, got {self.queries}")

    def to_json_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "is_member": self.is_member,
            "score": self.score,
            "metric": self.metric,
            "queries": self.queries,
            "config_hash": self.config_hash,
            "attack_tag": self.attack_tag,
            "aggregation": self.aggregation,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ScoredRecord":
        return cls(
            sample_id=int(doc["sample_id"]),
            is_member=bool(doc["is_member"]),
            score=float(doc["score"]),
            queries=int(doc["queries"]),
            attack_tag=str(doc["attack_tag"]),
            metric=str(doc.get("metric", "")),
            config_hash=str(doc.get("config_hash", "")),
            aggregation=doc.get("aggregation"),
        )


def write_records(records, path) -> None:
    """Write records as JSON lines (one object per line, stable key order)."""
    lines = [json.dumps(r.to_json_dict(), sort_keys=True) for r in records]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_records(path) -> list:
    records = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            records.append(ScoredRecord.from_json_dict(json.loads(line)))
    return records


def decide(score: float, tau: float) -> bool:
    """Membership decision: predicted member iff score >= tau."""
    return bool(score >= tau)


def _split_scores(records):
    members = np.asarray([r.score for r in records if r.is_member], dtype=np.float64)
    nonmembers = np.asarray([r.score for r in records if not r.is_member], dtype=np.float64)
    if members.size == 0 or nonmembers.size == 0:
        raise EvalDegenerateError(
            f"need both classes, got {members.size} members / {nonmembers.size} non-members"
        )
    return members, nonmembers


def _sweep_rates(members: np.ndarray, nonmembers: np.ndarray):
    """(threshold, FPR, TPR) per distinct score, thresholds descending."""
    thresholds = np.unique(np.concatenate([members, nonmembers]))[::-1]
    ms = np.sort(members)
    ns = np.sort(nonmembers)
    tpr = 1.0 - np.searchsorted(ms, thresholds, side="left") / members.size
    fpr = 1.0 - np.searchsorted(ns, thresholds, side="left") / nonmembers.size
    return thresholds, fpr, tpr


def roc_curve(records) -> list:
    """ROC points from a descending threshold sweep, ties grouped.

    Returns (FPR, TPR) pairs starting at (0, 0) and ending at (1, 1), with
    one point per distinct score and consecutive duplicates removed.
    """
    members, nonmembers = _split_scores(records)
    _, fpr, tpr = _sweep_rates(members, nonmembers)
    points = [(0.0, 0.0)]
    for x, y in zip(fpr, tpr):
        if (x, y) != points[-1]:
            points.append((float(x), float(y)))
    if points[-1] != (1.0, 1.0):
        points.append((1.0, 1.0))
    return points


def auc(records) -> float:
    """Trapezoidal area under the ROC curve.

    Equals the fraction of member/non-member pairs ordered correctly with
    ties counted as one half.
    """
    points = roc_curve(records)
    terms = [
        0.5 * (points[i + 1][0] - points[i][0]) * (points[i][1] + points[i + 1][1])
        for i in range(len(points) - 1)
    ]
    return float(math.fsum(terms))


def asr(records):
    """Best balanced accuracy over all thresholds, with the threshold.

    Candidate thresholds are midpoints between adjacent distinct scores plus
    minus/plus infinity; ties break toward the smallest threshold.
    """
    members, nonmembers = _split_scores(records)
    distinct = np.unique(np.concatenate([members, nonmembers]))
    taus = np.concatenate([[-np.inf], (distinct[:-1] + distinct[1:]) / 2.0, [np.inf]])
    ms = np.sort(members)
    ns = np.sort(nonmembers)
    tpr = 1.0 - np.searchsorted(ms, taus, side="left") / members.size
    fpr = 1.0 - np.searchsorted(ns, taus, side="left") / nonmembers.size
    balanced = 0.5 * (tpr + (1.0 - fpr))
    best = int(np.argmax(balanced))  # argmax returns the first, i.e. smallest tau
    return float(balanced[best]), float(taus[best])


def tpr_at_fpr(records, fpr_target: float) -> float:
    """Empirical TPR at the most permissive threshold with FPR <= target.

    No interpolation; returns 0 when no threshold qualifies.
    """
    if not 0.0 <= fpr_target <= 1.0:
        raise InvalidArgumentError(f"fpr_target must be in [0, 1], got {fpr_target}")
    members, nonmembers = _split_scores(records)
    _, fpr, tpr = _sweep_rates(members, nonmembers)
    admitted = tpr[fpr <= fpr_target]
    if admitted.size == 0:
        return 0.0
    return float(admitted.max())


@dataclass(frozen=True)
class EvalReport:
    """Aggregate attack metrics for one record stream."""

    attack_tag: str
    asr: float
    chosen_threshold: float
    auc: float
    tpr_at_fpr: dict
    n_members: int
    n_nonmembers: int
    mean_queries: float

    def __post_init__(self):
        for name, value in (("asr", self.asr), ("auc", self.auc)):
            if not 0.0 <= value <= 1.0:
                raise InvalidArgumentError(f"{name} must be in [0, 1], got {value}")
        targets = sorted(self.tpr_at_fpr)
        rates = [self.tpr_at_fpr[t] for t in targets]
        if any(not 0.0 <= r <= 1.0 for r in rates):
            raise InvalidArgumentError("tpr_at_fpr rates must be in [0, 1]")
        if any(b < a for a, b in zip(rates, rates[1:])):
            raise InvalidArgumentError("tpr_at_fpr must be nondecreasing in the FPR target")

    def to_json_dict(self) -> dict:
        return {
            "attack_tag": self.attack_tag,
            "asr": self.asr,
            "tau": self.chosen_threshold,
            "auc": self.auc,
            "tpr_at_fpr": {f"{t:g}": v for t, v in sorted(self.tpr_at_fpr.items())},
            "n_members": self.n_members,
            "n_nonmembers": self.n_nonmembers,
            "mean_queries": self.mean_queries,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "EvalReport":
        return cls(
            attack_tag=str(doc["attack_tag"]),
            asr=float(doc["asr"]),
            chosen_threshold=float(doc["tau"]),
            auc=float(doc["auc"]),
            tpr_at_fpr={float(k): float(v) for k, v in doc["tpr_at_fpr"].items()},
            n_members=int(doc["n_members"]),
            n_nonmembers=int(doc["n_nonmembers"]),
            mean_queries=float(doc["mean_queries"]),
        )


def evaluate_records(records, fpr_targets=(0.01, 0.001)) -> EvalReport:
    """Full metric set for one attack's record stream."""
    if not records:
        raise EvalDegenerateError("no records to evaluate")
    tags = sorted({r.attack_tag for r in records})
    if len(tags) != 1:
        raise InvalidArgumentError(f"records mix attack tags {tags}")
    members, nonmembers = _split_scores(records)
    best_acc, tau = asr(records)
    return EvalReport(
        attack_tag=tags[0],
        asr=best_acc,
        chosen_threshold=tau,
        auc=auc(records),
        tpr_at_fpr={float(t): tpr_at_fpr(records, float(t)) for t in fpr_targets},
        n_members=int(members.size),
        n_nonmembers=int(nonmembers.size),
        mean_queries=float(np.mean([r.queries for r in records])),
    )


def _report_table(reports) -> str:
    headers = ["attack", "ASR", "AUC", "TPR@1%", "TPR@0.1%", "queries", "n"]
    rows = []
    for rep in reports:
        rows.append(
            [
                rep.attack_tag,
                f"{rep.asr:.4f}",
                f"{rep.auc:.4f}",
                f"{rep.tpr_at_fpr.get(0.01, float('nan')):.4f}",
                f"{rep.tpr_at_fpr.get(0.001, float('nan')):.4f}",
                f"{rep.mean_queries:.1f}",
                f"{rep.n_members}+{rep.n_nonmembers}",
            ]
        )
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(headers)]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)),
        "  ".join("-" * w for w in widths),
    ]
    for r in rows:
        lines.append("  ".join(r[i].ljust(widths[i]) for i in range(len(headers))))
    return "\n".join(lines) + "\n"


def emit_report(reports, out_dir, config_hash: str = "") -> tuple:
    """Write report.json and report.txt into out_dir; byte-deterministic."""
    if not reports:
        raise EvalDegenerateError("no reports to emit")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {
        "config_hash": config_hash,
        "reports": [rep.to_json_dict() for rep in reports],
    }
    json_path = out_dir / "report.json"
    txt_path = out_dir / "report.txt"
    json_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    header = f"config_hash: {config_hash}\n" if config_hash else ""
    txt_path.write_text(header + _report_table(reports))
    return json_path, txt_path


def load_report(path) -> tuple:
    """Read back report.json as (config_hash, list of EvalReport)."""
    doc = json.loads(Path(path).read_text())
    return doc.get("config_hash", ""), [EvalReport.from_json_dict(d) for d in doc["reports"]]


def emit_plots(records, out_dir) -> list:
    """Standalone SVG plots per attack tag: ROC curve and score histogram."""
    if not records:
        raise EvalDegenerateError("no records to plot")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    tags = sorted({r.attack_tag for r in records})
    for tag in tags:
        tagged = [r for r in records if r.attack_tag == tag]
        points = roc_curve(tagged)
        fprs = [p[0] for p in points]
        tprs = [p[1] for p in points]
        roc_svg = svgplot.line_chart(
            [(tag, fprs, tprs), ("chance", [0.0, 1.0], [0.0, 1.0])],
            title=f"ROC: {tag}",
            xlabel="false positive rate",
            ylabel="true positive rate",
        )
        roc_path = out_dir / f"roc_{tag}.svg"
        roc_path.write_text(roc_svg)
        written.append(roc_path)

        member_scores = [r.score for r in tagged if r.is_member]
        nonmember_scores = [r.score for r in tagged if not r.is_member]
        hist_svg = svgplot.histogram_chart(
            [("members", member_scores), ("non-members", nonmember_scores)],
            title=f"score distribution: {tag}",
            xlabel="membership score",
            ylabel="count",
        )
        hist_path = out_dir / f"hist_{tag}.svg"
        hist_path.write_text(hist_svg)
        written.append(hist_path)
    return written
