# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

"""Setup (a): P_d of one test image by bootstrapping over k-subsets of candidates.

The statistic under H0 is modelled as Gaussian, with mean and standard deviation
taken from k-subsets of the deviations of genuine reference images. Every k-subset
of the test image's deviations then yields a one-sided p-value.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Sequence

import numpy as np
from scipy import stats

from pooled_triangle.errors import DegenerateH0Error, ParameterError
from pooled_triangle.evaluation.pools import (
    check_genuine,
    h0_deviation_sets,
    profile_images,
)
from pooled_triangle.prnu_core import DenoiserConfig, FingerprintEstimate
from pooled_triangle.sensor_sim import Image
from pooled_triangle.triangle import (
    STATISTICS,
    CandidateSet,
    DeviationMoments,
    InferenceLine,
    MomentKind,
    StatisticKind,
    deviations_for_profile,
    estimate_moments,
)
from pooled_triangle.utils.helpers import STREAM_SETUP_A, STREAM_SETUP_A_H0, derive_rng


logger = logging.getLogger("bootstrap")

CHUNK_REPS = 1024


@dataclass(eq=False)
class BootstrapReport:
    statistic_kind: StatisticKind
    reps: int
    p_values: np.ndarray = field(repr=False)
    P_d: float
    p_fa_target: float
    h0_mean: float
    h0_std: float
    k: int = 0

    def to_dict(self, include_p_values: bool = False) -> dict:
        d = {
            "statistic": self.statistic_kind.value,
            "reps": self.reps,
            "k": self.k,
            "P_d": self.P_d,
            "p_fa_target": self.p_fa_target,
            "h0_mean": self.h0_mean,
            "h0_std": self.h0_std,
            "median_p_value": float(np.median(self.p_values)),
        }
        if include_p_values:
            d["p_values"] = self.p_values.tolist()
        return d


def gaussian_p_value(value, mean: float, std: float, statistic_kind):
    """Upper tail for V, lower tail for L."""
    if not std > 0:
        raise DegenerateH0Error(f"H0 standard deviation must be > 0, got {std}")
    z = (np.asarray(value, dtype=np.float64) - mean) / std
    if StatisticKind(statistic_kind) is StatisticKind.V:
        return stats.norm.sf(z)
    return stats.norm.cdf(z)


def subset_indices(
    rng: np.random.Generator, n: int, k: int, reps: int
) -> Iterator[np.ndarray]:
    """Uniform k-subsets of range(n), `reps` rows yielded in chunks."""
    if not 1 <= k <= n:
        raise ParameterError(f"k must lie in [1, {n}], got {k}")
    done = 0
    while done < reps:
        m = min(CHUNK_REPS, reps - done)
        if k == n:
            yield np.tile(np.arange(n), (m, 1))
        else:
            # the k smallest of n iid uniforms are a uniform k-subset
            yield np.argpartition(rng.random((m, n)), k - 1, axis=1)[:, :k]
        done += m


def _h0_statistics(
    groups: np.ndarray,
    moments: DeviationMoments,
    k: int,
    reps: int,
    kinds: Sequence[StatisticKind],
    rng: np.random.Generator,
) -> Dict[StatisticKind, np.ndarray]:
    """H0 replicates, all evaluated with the test image's moments.

    `groups` must already be rescaled into the test image's frame, so the
    normalising term of L is the same for every replicate and for the test image.
    """
    n_groups, n = groups.shape
    values = {kind: [] for kind in kinds}
    for sub in subset_indices(rng, n, k, reps):
        g = rng.integers(n_groups, size=sub.shape[0])
        d = groups[g[:, None], sub]
        for kind in kinds:
            values[kind].append(STATISTICS[kind](d, moments.mu, moments.sigma))
    return {kind: np.concatenate(v) for kind, v in values.items()}


def rescale_groups(
    groups: np.ndarray, moments: DeviationMoments, moment_kind=MomentKind.sample
) -> np.ndarray:
    """Standardise each group by its own moments, then map it onto `moments`."""
    group_moments = [estimate_moments(g, moment_kind) for g in groups]
    mu = np.array([m.mu for m in group_moments])[:, None]
    sigma = np.array([m.sigma for m in group_moments])[:, None]
    return moments.mu + moments.sigma * (groups - mu) / sigma


def bootstrap_from_deviations(
    test_d: np.ndarray,
    h0_groups: Sequence[np.ndarray],
    k: int,
    reps: int,
    p_fa_target: float,
    statistic_kinds: Sequence = (StatisticKind.L, StatisticKind.V),
    seed: int = 0,
    stream: Sequence[int] = (),
    moment_kind=MomentKind.sample,
) -> Dict[StatisticKind, BootstrapReport]:
    """Bootstrap P_d given the deviations of the test image against all candidates.

    `h0_groups` holds one deviation array per genuine reference image, aligned with
    `test_d` on the same candidates. Each image is standardised by moments of its
    own full deviation vector, and every statistic is evaluated with the test
    image's moments.
    """
    test_d = np.asarray(test_d, dtype=np.float64)
    groups = np.stack([np.asarray(g, dtype=np.float64) for g in h0_groups])
    if groups.shape[1] != test_d.size:
        raise ParameterError(
            f"H0 groups have {groups.shape[1]} deviations, test image {test_d.size}"
        )
    if reps < 1:
        raise ParameterError(f"reps must be >= 1, got {reps}")
    if not 0 < p_fa_target < 1:
        raise ParameterError(f"p_fa_target must lie in (0, 1), got {p_fa_target}")
    kinds = [StatisticKind(s) for s in statistic_kinds]

    moments = estimate_moments(test_d, moment_kind)
    h0 = _h0_statistics(
        rescale_groups(groups, moments, moment_kind),
        moments,
        k,
        reps,
        kinds,
        derive_rng(seed, STREAM_SETUP_A_H0, *stream),
    )

    test_values = {kind: [] for kind in kinds}
    rng = derive_rng(seed, STREAM_SETUP_A, *stream)
    for sub in subset_indices(rng, test_d.size, k, reps):
        d = test_d[sub]
        for kind in kinds:
            test_values[kind].append(STATISTICS[kind](d, moments.mu, moments.sigma))

    reports = {}
    for kind in kinds:
        h0_mean = float(np.mean(h0[kind]))
        h0_std = float(np.std(h0[kind], ddof=1)) if reps > 1 else 0.0
        if not h0_std > 0:
            raise DegenerateH0Error(
                f"Bootstrap H0 of {kind.value} has zero spread over {reps} reps"
            )
        p_values = gaussian_p_value(
            np.concatenate(test_values[kind]), h0_mean, h0_std, kind
        )
        reports[kind] = BootstrapReport(
            statistic_kind=kind,
            reps=reps,
            p_values=p_values,
            P_d=float(np.mean(p_values < p_fa_target)),
            p_fa_target=float(p_fa_target),
            h0_mean=h0_mean,
            h0_std=h0_std,
            k=k,
        )
    return reports


def bootstrap_setup_a(
    J: Image,
    public_set: Sequence[Image],
    line: InferenceLine,
    K_a: FingerprintEstimate,
    config: DenoiserConfig,
    reference_images: Sequence[Image],
    k: int = 60,
    reps: int = 2000,
    p_fa_target: float = 1e-3,
    statistic_kinds: Sequence = (StatisticKind.L, StatisticKind.V),
    seed: int = 0,
    moment_kind=MomentKind.sample,
) -> Dict[StatisticKind, BootstrapReport]:
    if k > len(public_set):
        raise ParameterError(f"k={k} exceeds the public set size {len(public_set)}")
    check_genuine(reference_images)
    candidates = CandidateSet(profile_images(public_set, K_a, config))
    references = profile_images(reference_images, K_a, config)
    (test,) = profile_images([J], K_a, config)
    test_d = deviations_for_profile(test, candidates, line).d
    h0_groups = [s.d for s in h0_deviation_sets(references, candidates, line)]
    reports = bootstrap_from_deviations(
        test_d,
        h0_groups,
        k,
        reps,
        p_fa_target,
        statistic_kinds,
        seed=seed,
        moment_kind=moment_kind,
    )
    for kind, report in reports.items():
        logger.info(f"Setup (a) {J.image_id} {kind.value}: P_d={report.P_d:.4f}")
    return reports


def summarize_reports(reports: List[Dict[StatisticKind, BootstrapReport]]) -> dict:
    """Mean P_d per statistic over several test images."""
    if not reports:
        return {}
    kinds = reports[0].keys()
    return {
        kind.value: {
            "P_d_mean": float(np.mean([r[kind].P_d for r in reports])),
            "P_d_std": float(np.std([r[kind].P_d for r in reports])),
            "n_images": len(reports),
        }
        for kind in kinds
    }
