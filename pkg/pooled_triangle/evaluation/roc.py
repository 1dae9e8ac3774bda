# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
from sklearn.metrics import auc, roc_curve

from pooled_triangle.errors import ParameterError
from pooled_triangle.evaluation.pools import check_genuine, profile_images
from pooled_triangle.prnu_core import DenoiserConfig, FingerprintEstimate
from pooled_triangle.sensor_sim import Image
from pooled_triangle.triangle import (
    CandidateSet,
    InferenceLine,
    MomentKind,
    PooledStatistics,
    StatisticKind,
    deviations_for_profile,
    pooled_statistics,
)


logger = logging.getLogger("roc")


@dataclass(eq=False)
class RocReport:
    statistic_kind: StatisticKind
    h0_values: np.ndarray = field(repr=False)
    h1_values: np.ndarray = field(repr=False)
    fpr: np.ndarray = field(repr=False)
    tpr: np.ndarray = field(repr=False)
    P_d_at_target: float
    p_fa_target: float
    area: float

    @property
    def curve(self) -> List[Tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))

    def curve_rows(self) -> List[dict]:
        return [
            {"statistic": self.statistic_kind.value, "P_fa": f, "P_d": t}
            for f, t in self.curve
        ]

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic_kind.value,
            "n_h0": int(self.h0_values.size),
            "n_h1": int(self.h1_values.size),
            "P_d_at_target": self.P_d_at_target,
            "p_fa_target": self.p_fa_target,
            "auc": self.area,
        }


def roc_curve_points(
    h0_values: Sequence[float], h1_values: Sequence[float], statistic_kind
) -> Tuple[np.ndarray, np.ndarray]:
    """Empirical (P_fa, P_d) over every observed threshold, from (0, 0) to (1, 1)."""
    h0 = np.asarray(h0_values, dtype=np.float64)
    h1 = np.asarray(h1_values, dtype=np.float64)
    if h0.size == 0 or h1.size == 0:
        raise ParameterError("ROC needs both H0 and H1 values")
    scores = np.concatenate([h0, h1])
    # L flags a forgery when it is low
    if StatisticKind(statistic_kind) is StatisticKind.L:
        scores = -scores
    labels = np.concatenate([np.zeros(h0.size), np.ones(h1.size)])
    fpr, tpr, _ = roc_curve(labels, scores, drop_intermediate=False)
    return fpr, tpr


def area_under_curve(fpr: np.ndarray, tpr: np.ndarray) -> float:
    return float(auc(fpr, tpr))


def pd_at_pfa(fpr: np.ndarray, tpr: np.ndarray, p_fa_target: float) -> float:
    """P_d at P_fa = p_fa_target, linear between adjacent curve points."""
    if not 0 <= p_fa_target <= 1:
        raise ParameterError(f"p_fa_target must lie in [0, 1], got {p_fa_target}")
    fpr = np.asarray(fpr, dtype=np.float64)
    tpr = np.asarray(tpr, dtype=np.float64)
    below = fpr <= p_fa_target
    f_lo, t_lo = float(fpr[below].max()), float(tpr[below].max())
    above = np.flatnonzero(~below)
    if above.size == 0:
        return t_lo
    f_hi, t_hi = float(fpr[above[0]]), float(tpr[above[0]])
    return t_lo + (p_fa_target - f_lo) * (t_hi - t_lo) / (f_hi - f_lo)


def roc_report(
    h0_values: Sequence[float],
    h1_values: Sequence[float],
    statistic_kind,
    p_fa_target: float,
) -> RocReport:
    kind = StatisticKind(statistic_kind)
    fpr, tpr = roc_curve_points(h0_values, h1_values, kind)
    return RocReport(
        statistic_kind=kind,
        h0_values=np.asarray(h0_values, dtype=np.float64),
        h1_values=np.asarray(h1_values, dtype=np.float64),
        fpr=fpr,
        tpr=tpr,
        P_d_at_target=pd_at_pfa(fpr, tpr, p_fa_target),
        p_fa_target=float(p_fa_target),
        area=area_under_curve(fpr, tpr),
    )


def roc_from_statistics(
    h0_stats: Sequence[PooledStatistics],
    h1_stats: Sequence[PooledStatistics],
    p_fa_target: float,
    statistic_kinds: Sequence = (StatisticKind.L, StatisticKind.V),
) -> Dict[StatisticKind, RocReport]:
    reports = {}
    for kind in map(StatisticKind, statistic_kinds):
        reports[kind] = roc_report(
            [s.value(kind) for s in h0_stats],
            [s.value(kind) for s in h1_stats],
            kind,
            p_fa_target,
        )
        logger.info(
            f"Setup (b) {kind.value}: P_d={reports[kind].P_d_at_target:.4f}"
            f" at P_fa={p_fa_target}, AUC={reports[kind].area:.4f}"
        )
    return reports


def roc_setup_b(
    h1_images: Sequence[Image],
    h0_images: Sequence[Image],
    candidates: Sequence[Image],
    line: InferenceLine,
    K_a: FingerprintEstimate,
    config: DenoiserConfig,
    p_fa_target: float = 0.03,
    statistic_kinds: Sequence = (StatisticKind.L, StatisticKind.V),
    moment_kind=MomentKind.sample,
) -> Dict[StatisticKind, RocReport]:
    """ROC of the pooled statistics with k equal to the whole candidate set."""
    if len(h1_images) == 0 or len(h0_images) == 0:
        raise ParameterError("ROC needs both forged and genuine test images")
    check_genuine(h0_images)
    candidate_set = CandidateSet(profile_images(candidates, K_a, config))

    def statistics_of(images):
        deviation_sets = [
            deviations_for_profile(p, candidate_set, line)
            for p in profile_images(images, K_a, config)
        ]
        return [pooled_statistics(s, moment_kind) for s in deviation_sets]

    return roc_from_statistics(
        statistics_of(h0_images), statistics_of(h1_images), p_fa_target, statistic_kinds
    )
