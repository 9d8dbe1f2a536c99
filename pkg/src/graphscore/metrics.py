"""AUROC and FPR-at-TPR for ID-vs-OOD score vectors.

Conventions: in-distribution is the positive class and higher scores mean
more in-distribution. AUROC is the Mann-Whitney statistic with ties counted
as half, computed from integer pair counts so it matches an exhaustive
pairwise comparison bit for bit. FPR95 uses the largest threshold whose
"score >= threshold" rule keeps ID recall at or above the target, with no
interpolation between observed score values.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class EvalReport:
    auroc: float
    fpr95: float
    n_id: int
    n_ood: int
    method: str = ""
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.auroc <= 1.0:
            raise ValueError(f"auroc out of range: {self.auroc}")
        if not 0.0 <= self.fpr95 <= 1.0:
            raise ValueError(f"fpr95 out of range: {self.fpr95}")
        if self.n_id < 1 or self.n_ood < 1:
            raise ValueError("need at least one ID and one OOD sample")

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "auroc": self.auroc,
            "fpr95": self.fpr95,
            "n_id": self.n_id,
            "n_ood": self.n_ood,
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _check_inputs(scores, is_id):
    scores = np.asarray(scores, dtype=np.float64)
    is_id = np.asarray(is_id, dtype=bool)
    if scores.ndim != 1 or is_id.ndim != 1 or scores.size != is_id.size:
        raise ValueError("scores and is_id must be 1-D and the same length")
    if not np.isfinite(scores).all():
        raise ValueError("scores contain non-finite values")
    n_id = int(np.count_nonzero(is_id))
    n_ood = scores.size - n_id
    if n_id == 0 or n_ood == 0:
        raise ValueError("need at least one ID and one OOD sample")
    return scores, is_id, n_id, n_ood


def auroc(scores, is_id) -> float:
    """Probability a random ID sample outscores a random OOD sample, with
    ties credited 0.5. Exact: the pair counts are accumulated as integers."""
    scores, is_id, n_id, n_ood = _check_inputs(scores, is_id)
    order = np.argsort(scores, kind="mergesort")
    s = scores[order]
    ids = is_id[order]
    starts = np.nonzero(np.concatenate(([True], s[1:] != s[:-1])))[0]
    ends = np.append(starts[1:], s.size)
    id_cum = np.concatenate(([0], np.cumsum(ids)))
    id_per = id_cum[ends] - id_cum[starts]
    ood_per = (ends - starts) - id_per
    ood_below = np.concatenate(([0], np.cumsum(ood_per)))[:-1]
    wins = int(np.sum(id_per * ood_below))
    ties = int(np.sum(id_per * ood_per))
    return (wins + 0.5 * ties) / (n_id * n_ood)


def fpr_at_tpr(scores, is_id, tpr_target: float = 0.95) -> float:
    """False positive rate at the largest threshold keeping ID recall >= target."""
    scores, is_id, n_id, n_ood = _check_inputs(scores, is_id)
    if not 0.0 < tpr_target <= 1.0:
        raise ValueError(f"tpr_target must be in (0, 1], got {tpr_target}")
    id_scores = np.sort(scores[is_id])
    # smallest ID count whose recall reaches the target; the tiny slack keeps
    # exact products like 0.95 * 100 from rounding up past the true ceiling
    need = math.ceil(tpr_target * n_id - 1e-9)
    need = min(max(need, 1), n_id)
    threshold = id_scores[n_id - need]
    return float(np.count_nonzero(scores[~is_id] >= threshold)) / n_ood


def evaluate(scores, is_id, method: str = "", config: dict = None,
             tpr_target: float = 0.95) -> EvalReport:
    """Bundle both metrics into a report with a config echo."""
    scores, is_id, n_id, n_ood = _check_inputs(scores, is_id)
    return EvalReport(
        auroc=auroc(scores, is_id),
        fpr95=fpr_at_tpr(scores, is_id, tpr_target),
        n_id=n_id,
        n_ood=n_ood,
        method=method,
        config=dict(config or {}),
    )
