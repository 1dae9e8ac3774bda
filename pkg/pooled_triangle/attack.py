# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from pooled_triangle.errors import AttackInfeasibleError, ParameterError
from pooled_triangle.prnu_core import (
    DenoiserConfig,
    DetectorCalibration,
    FingerprintEstimate,
    attribution_score,
)
from pooled_triangle.sensor_sim import Image, quantize


logger = logging.getLogger("attack")


@dataclass
class AttackSearchConfig:
    alpha_max: float = 0.2
    tolerance: float = 1e-4

    def __post_init__(self):
        if not self.alpha_max > 0:
            raise ParameterError(f"alpha_max must be > 0, got {self.alpha_max}")
        if not self.tolerance > 0:
            raise ParameterError(f"tolerance must be > 0, got {self.tolerance}")


@dataclass(eq=False)
class AttackResult:
    forged: Image = field(repr=False)
    alpha: float
    rho_achieved: float
    n_source_images: int
    source_ids: List[str] = field(default_factory=list, repr=False)
    n_evaluations: int = 0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ParameterError(f"alpha must be > 0, got {self.alpha}")

    def record(self) -> dict:
        """JSON metadata stored next to the forged PGM."""
        return {
            "image_id": self.forged.image_id,
            "source_camera": self.forged.source_id,
            "alpha": self.alpha,
            "rho": self.rho_achieved,
            "n_sources": self.n_source_images,
            "source_ids": list(self.source_ids),
        }


def implant_fingerprint(J: Image, K_e: FingerprintEstimate, alpha: float) -> Image:
    if J.dims != K_e.dims:
        raise ParameterError(f"Image dims {J.dims} differ from fingerprint {K_e.dims}")
    if alpha < 0:
        raise ParameterError(f"alpha must be >= 0, got {alpha}")
    # Scale, clip, round: fixed order keeps the forgery bit-reproducible
    forged = quantize(J.values * (1.0 + alpha * K_e.values))
    return Image(
        pixels=forged,
        source_id=J.source_id,
        role_tag="forged",
        image_id=f"{J.image_id}-forged" if J.image_id else None,
    )


class _Predicate:
    """Detector predicate on the forged image, memoized per alpha."""

    def __init__(self, J, K_e, alice_fingerprint, calibration, config):
        self.J = J
        self.K_e = K_e
        self.alice_fingerprint = alice_fingerprint
        self.threshold = calibration.threshold
        self.config = config
        self.cache: Dict[float, float] = {}

    def rho(self, alpha: float) -> float:
        if alpha not in self.cache:
            forged = implant_fingerprint(self.J, self.K_e, alpha)
            self.cache[alpha] = attribution_score(
                forged, self.alice_fingerprint, self.config
            ).rho
        return self.cache[alpha]

    def __call__(self, alpha: float) -> bool:
        return self.rho(alpha) >= self.threshold


def minimum_alpha(
    J: Image,
    K_e: FingerprintEstimate,
    alice_fingerprint: FingerprintEstimate,
    calibration: DetectorCalibration,
    search: Optional[AttackSearchConfig] = None,
    config: Optional[DenoiserConfig] = None,
    source_ids: Optional[List[str]] = None,
) -> AttackResult:
    """Smallest alpha (within tolerance) for which the forgery passes the detector.

    Rounding makes the predicate only approximately monotone in alpha, so the
    bisection keeps the lowest passing alpha it has seen rather than trusting the
    final bracket, and re-verifies it before returning.
    """
    search = search or AttackSearchConfig()
    config = config or DenoiserConfig()
    passes = _Predicate(J, K_e, alice_fingerprint, calibration, config)

    if not passes(search.alpha_max):
        raise AttackInfeasibleError(
            J.image_id, search.alpha_max, passes.rho(search.alpha_max), passes.threshold
        )

    lo, hi = 0.0, search.alpha_max
    best = search.alpha_max
    while hi - lo > search.tolerance:
        mid = 0.5 * (lo + hi)
        if passes(mid):
            hi = mid
            best = min(best, mid)
        else:
            lo = mid

    forged = implant_fingerprint(J, K_e, best)
    rho = attribution_score(forged, alice_fingerprint, config).rho
    if rho < calibration.threshold:
        # Only reachable if the detector were non-deterministic
        raise AttackInfeasibleError(J.image_id, best, rho, calibration.threshold)
    logger.debug(
        f"Attack on {J.image_id}: alpha={best:.6f} rho={rho:.6f}"
        f" after {len(passes.cache)} detector evaluations"
    )
    return AttackResult(
        forged=forged,
        alpha=best,
        rho_achieved=rho,
        n_source_images=K_e.n_images,
        source_ids=list(source_ids or []),
        n_evaluations=len(passes.cache),
    )
