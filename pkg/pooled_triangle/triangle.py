# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

"""Pooled triangle test.

For a test image J and candidate images I_i of the public set, the measured residual
correlation c = corr(W_I, W_J) is compared with the prediction c_hat of an inference
line fitted on non-forged pairs. Deviations d = c - lambda * c_hat - eta are pooled
into the log-likelihood statistic L (two-sided, low values are evidence of a forgery)
or the signed statistic V (one-sided, high values are evidence of a forgery).
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
from scipy import stats

from pooled_triangle.errors import DegenerateInputError, ParameterError
from pooled_triangle.prnu_core import (
    DenoiserConfig,
    FingerprintEstimate,
    attribution_score,
    normalized_correlation,
    residual,
    score_residual,
)
from pooled_triangle.sensor_sim import Image


logger = logging.getLogger("triangle")

MAD_TO_SIGMA = 1.4826


class StatisticKind(Enum):
    L = "L"
    V = "V"


class MomentKind(Enum):
    sample = "sample"
    robust = "robust"


class Hypothesis(Enum):
    H0 = "H0"
    H1 = "H1"


@dataclass
class CorrelationPair:
    candidate_id: str
    c_hat: float
    c_true: float


@dataclass
class InferenceLine:
    lam: float
    eta: float
    n_fit: int
    residual_rms: float

    def predict(self, c_hat):
        return self.lam * np.asarray(c_hat) + self.eta

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "eta": self.eta,
            "n_fit": self.n_fit,
            "residual_rms": self.residual_rms,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InferenceLine":
        return cls(
            lam=float(d["lambda"]),
            eta=float(d["eta"]),
            n_fit=int(d["n_fit"]),
            residual_rms=float(d["residual_rms"]),
        )


@dataclass
class DeviationSample:
    candidate_id: str
    d: float
    c_hat: float = float("nan")
    c_true: float = float("nan")
    test_id: Optional[str] = None


@dataclass
class DeviationSet:
    """Deviations of one test image, ordered by candidate id."""

    test_id: Optional[str]
    samples: List[DeviationSample]
    skipped: int = 0

    @property
    def d(self) -> np.ndarray:
        return np.array([s.d for s in self.samples], dtype=np.float64)

    def rows(self) -> List[dict]:
        return [
            {
                "candidate_id": s.candidate_id,
                "c_hat": s.c_hat,
                "c_true": s.c_true,
                "d": s.d,
            }
            for s in self.samples
        ]


@dataclass
class DeviationMoments:
    mu: float
    sigma: float
    estimator_kind: MomentKind = MomentKind.sample

    def __post_init__(self):
        if not self.sigma > 0:
            raise DegenerateInputError(f"sigma must be > 0, got {self.sigma}")


@dataclass
class PooledStatistics:
    k: int
    L: float
    V: float
    moments: DeviationMoments
    skipped: int = 0

    def value(self, kind) -> float:
        return self.L if StatisticKind(kind) is StatisticKind.L else self.V

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "L": self.L,
            "V": self.V,
            "mu": self.moments.mu,
            "sigma": self.moments.sigma,
            "skipped": self.skipped,
        }


@dataclass(eq=False)
class ImageProfile:
    """Residual and detector score of one image, computed once per image."""

    image_id: str
    residual: np.ndarray = field(repr=False)
    score: float


def profile_image(
    image: Image, K_a: FingerprintEstimate, config: DenoiserConfig
) -> ImageProfile:
    if image.dims != K_a.dims:
        raise ParameterError(
            f"Image {image.image_id} dims {image.dims}"
            f" differ from fingerprint {K_a.dims}"
        )
    x = image.values
    w = residual(x, config).values
    score = score_residual(w, x, K_a)
    return ImageProfile(image_id=image.image_id, residual=w, score=score)


class CandidateSet:
    """Public candidate images as unit-norm, mean-removed residual rows.

    c_true for every candidate against one test residual is then a single
    matrix-vector product. Candidates with a constant residual are kept out and
    counted in `degenerate_ids`.
    """

    def __init__(self, profiles: Sequence[ImageProfile]):
        if len(profiles) == 0:
            raise ParameterError("Empty candidate set")
        profiles = sorted(profiles, key=lambda p: p.image_id)
        ids, rows, scores, degenerate = [], [], [], []
        for p in profiles:
            centered = p.residual.ravel() - p.residual.mean()
            norm = np.sqrt(np.sum(centered * centered))
            if norm == 0:
                degenerate.append(p.image_id)
                continue
            ids.append(p.image_id)
            rows.append(centered / norm)
            scores.append(p.score)
        if degenerate:
            logger.warning(f"{len(degenerate)} candidates have a constant residual")
        self.ids: List[str] = ids
        self.unit_residuals = np.stack(rows) if rows else np.zeros((0, 0))
        self.scores = np.asarray(scores, dtype=np.float64)
        self.degenerate_ids: List[str] = degenerate
        self.dims = tuple(profiles[0].residual.shape)

    def __len__(self):
        return len(self.ids)

    def correlations(self, test: ImageProfile):
        """(c_hat, c_true) arrays of every candidate against `test`."""
        if tuple(test.residual.shape) != self.dims:
            raise ParameterError(
                f"Test residual dims {test.residual.shape} differ from {self.dims}"
            )
        centered = test.residual.ravel() - test.residual.mean()
        norm = np.sqrt(np.sum(centered * centered))
        if norm == 0:
            raise DegenerateInputError(
                f"Test image {test.image_id} residual is constant"
            )
        c_true = np.clip(self.unit_residuals @ (centered / norm), -1.0, 1.0)
        c_hat = self.scores * test.score
        return c_hat, c_true


def true_pair_correlation(I: Image, J: Image, config: DenoiserConfig) -> float:
    if I.dims != J.dims:
        raise ParameterError(f"Image dims differ: {I.dims} vs {J.dims}")
    w_I = residual(I, config).values
    w_J = residual(J, config).values
    return normalized_correlation(w_I, w_J)


def estimate_pair_correlation(
    I: Image, J: Image, K_a: FingerprintEstimate, config: DenoiserConfig
) -> float:
    if I.dims != J.dims:
        raise ParameterError(f"Image dims differ: {I.dims} vs {J.dims}")
    return attribution_score(I, K_a, config).rho * attribution_score(J, K_a, config).rho


def pairs_for_profile(
    test: ImageProfile, candidates: CandidateSet
) -> List[CorrelationPair]:
    c_hat, c_true = candidates.correlations(test)
    return [
        CorrelationPair(candidate_id=cid, c_hat=float(h), c_true=float(c))
        for cid, h, c in zip(candidates.ids, c_hat, c_true)
    ]


def fit_inference_line(pairs: Sequence[CorrelationPair]) -> InferenceLine:
    if len(pairs) < 2:
        raise ParameterError(f"Need at least 2 pairs to fit a line, got {len(pairs)}")
    x = np.array([p.c_hat for p in pairs], dtype=np.float64)
    y = np.array([p.c_true for p in pairs], dtype=np.float64)
    if np.all(x == x[0]):
        raise ParameterError("Degenerate design: all c_hat values are equal")
    lam, eta = np.polyfit(x, y, 1)
    residuals = y - (lam * x + eta)
    line = InferenceLine(
        lam=float(lam),
        eta=float(eta),
        n_fit=len(pairs),
        residual_rms=float(np.sqrt(np.mean(residuals ** 2))),
    )
    logger.info(
        f"Inference line c = {line.lam:.6f} c_hat + {line.eta:.6f}"
        f" on {line.n_fit} pairs (rms {line.residual_rms:.3g})"
    )
    return line


def deviations_for_profile(
    test: ImageProfile, candidates: CandidateSet, line: InferenceLine
) -> DeviationSet:
    c_hat, c_true = candidates.correlations(test)
    d = c_true - line.predict(c_hat)
    samples = [
        DeviationSample(
            candidate_id=cid,
            d=float(di),
            c_hat=float(h),
            c_true=float(c),
            test_id=test.image_id,
        )
        for cid, di, h, c in zip(candidates.ids, d, c_hat, c_true)
    ]
    return DeviationSet(
        test_id=test.image_id,
        samples=samples,
        skipped=len(candidates.degenerate_ids),
    )


def deviations(
    J: Image,
    candidates: Sequence[Image],
    line: InferenceLine,
    K_a: FingerprintEstimate,
    config: DenoiserConfig,
) -> DeviationSet:
    if len(candidates) == 0:
        raise ParameterError("Empty candidate list")
    profiles = [profile_image(I, K_a, config) for I in candidates]
    test = profile_image(J, K_a, config)
    result = deviations_for_profile(test, CandidateSet(profiles), line)
    if result.skipped:
        logger.warning(
            f"Skipped {result.skipped} degenerate candidates for {J.image_id}"
        )
    return result


def _as_array(samples) -> np.ndarray:
    if isinstance(samples, DeviationSet):
        return samples.d
    if isinstance(samples, np.ndarray):
        return samples.astype(np.float64)
    return np.array(
        [s.d if isinstance(s, DeviationSample) else s for s in samples],
        dtype=np.float64,
    )


def estimate_moments(samples, kind=MomentKind.sample) -> DeviationMoments:
    d = _as_array(samples)
    kind = MomentKind(kind)
    if d.size < 2:
        raise ParameterError(f"Need at least 2 deviations, got {d.size}")
    if kind is MomentKind.sample:
        mu, sigma = float(np.mean(d)), float(np.std(d, ddof=1))
    else:
        mu = float(np.median(d))
        sigma = float(MAD_TO_SIGMA * stats.median_abs_deviation(d))
    if not sigma > 0:
        raise DegenerateInputError(
            f"Deviations have zero spread under the {kind.value} estimator"
        )
    return DeviationMoments(mu=mu, sigma=sigma, estimator_kind=kind)


def l_statistic(d: np.ndarray, mu: float, sigma: float) -> np.ndarray:
    """Gaussian log-likelihood of the deviations, reduced over the last axis."""
    d = np.asarray(d, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    z = (d - mu) / (np.sqrt(2.0) * sigma)
    # mu and sigma may carry one value per row, shaped (..., 1)
    log_norm = np.broadcast_to(0.5 * np.log(2.0 * np.pi * sigma ** 2), d.shape)
    return -np.sum(log_norm, axis=-1) - np.sum(z * z, axis=-1)


def v_statistic(d: np.ndarray, mu: float, sigma: float) -> np.ndarray:
    """Signed sum of squared standardized deviations, reduced over the last axis."""
    z = (np.asarray(d, dtype=np.float64) - mu) / sigma
    return np.sum(np.sign(z) * z * z, axis=-1)


STATISTICS = {
    StatisticKind.L: l_statistic,
    StatisticKind.V: v_statistic,
}


def pooled_L(samples, moments: DeviationMoments) -> float:
    return float(l_statistic(_as_array(samples), moments.mu, moments.sigma))


def pooled_V(samples, moments: DeviationMoments) -> float:
    return float(v_statistic(_as_array(samples), moments.mu, moments.sigma))


def decide(statistic_value: float, threshold: float, statistic_kind) -> Hypothesis:
    kind = StatisticKind(statistic_kind)
    if kind is StatisticKind.V:
        forged = statistic_value > threshold
    else:
        forged = statistic_value < threshold
    return Hypothesis.H1 if forged else Hypothesis.H0


def pooled_statistics(
    deviation_set: DeviationSet, moment_kind=MomentKind.sample
) -> PooledStatistics:
    d = deviation_set.d
    moments = estimate_moments(d, moment_kind)
    return PooledStatistics(
        k=int(d.size),
        L=float(l_statistic(d, moments.mu, moments.sigma)),
        V=float(v_statistic(d, moments.mu, moments.sigma)),
        moments=moments,
        skipped=deviation_set.skipped,
    )


def separation_counts(
    samples: Iterable[DeviationSample], used_ids: Iterable[str], mu: float
) -> Dict[str, int]:
    """How often d falls below mu among candidates used by the forger and the rest."""
    used_ids = set(used_ids)
    counts = {"used_below": 0, "used_total": 0, "unused_below": 0, "unused_total": 0}
    for s in samples:
        group = "used" if s.candidate_id in used_ids else "unused"
        counts[f"{group}_total"] += 1
        if s.d < mu:
            counts[f"{group}_below"] += 1
    return counts
