# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

import functools
import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from pooled_triangle.errors import ParameterError
from pooled_triangle.prnu_core import (
    DenoiserConfig,
    DetectorCalibration,
    FingerprintEstimate,
)
from pooled_triangle.sensor_sim import Image, SplitRole
from pooled_triangle.triangle import (
    CandidateSet,
    DeviationSample,
    DeviationSet,
    ImageProfile,
    InferenceLine,
    deviations_for_profile,
    profile_image,
)
from pooled_triangle.utils.computer import WorkerPool


logger = logging.getLogger("pools")


def profile_images(
    images: Sequence[Image],
    K_a: FingerprintEstimate,
    config: DenoiserConfig,
    pool: Optional[WorkerPool] = None,
    desc: str = "",
) -> List[ImageProfile]:
    fn = functools.partial(profile_image, K_a=K_a, config=config)
    if pool is None:
        return [fn(im) for im in images]
    return pool.map(fn, images, desc=desc)


def check_genuine(images: Sequence[Image]) -> None:
    for im in images:
        if im.role_tag == SplitRole.forged.value:
            raise ParameterError(
                f"Image {im.image_id} is tagged forged and can't model H0 deviations"
            )


def split_by_detector(
    profiles: Sequence[ImageProfile], calibration: DetectorCalibration
) -> Tuple[List[ImageProfile], List[ImageProfile]]:
    """Profiles the detector attributes to Alice's camera, and the rest."""
    passing = [p for p in profiles if p.score >= calibration.threshold]
    failing = [p for p in profiles if p.score < calibration.threshold]
    return passing, failing


def h0_deviation_sets(
    reference_profiles: Sequence[ImageProfile],
    candidates: CandidateSet,
    line: InferenceLine,
) -> List[DeviationSet]:
    """Deviations of every genuine reference image, one set per image."""
    if len(reference_profiles) == 0:
        raise ParameterError("Empty H0 reference list")
    if len(candidates) == 0:
        raise ParameterError("Empty candidate set")
    return [deviations_for_profile(p, candidates, line) for p in reference_profiles]


def h0_reference_pool(
    reference_images: Sequence[Image],
    candidates: Sequence[Image],
    line: InferenceLine,
    K_a: FingerprintEstimate,
    config: DenoiserConfig,
    calibration: DetectorCalibration,
) -> List[DeviationSample]:
    """Deviations of the genuine references that pass the detector, pooled."""
    if len(reference_images) == 0 or len(candidates) == 0:
        raise ParameterError("H0 pool needs reference images and candidates")
    check_genuine(reference_images)
    candidate_ids = {im.image_id for im in candidates}
    overlap = [im.image_id for im in reference_images if im.image_id in candidate_ids]
    if overlap:
        raise ParameterError(f"Reference images also in the candidate set: {overlap}")
    candidate_set = CandidateSet(profile_images(candidates, K_a, config))
    references, failing = split_by_detector(
        profile_images(reference_images, K_a, config), calibration
    )
    if failing:
        logger.warning(
            f"{len(failing)} reference images fail the detector and are left out:"
            f" {[p.image_id for p in failing]}"
        )
    if not references:
        raise ParameterError("No reference image passes the detector")
    pool = []
    for deviation_set in h0_deviation_sets(references, candidate_set, line):
        pool.extend(deviation_set.samples)
    d = np.array([s.d for s in pool])
    logger.info(
        f"H0 pool of {len(pool)} deviations: mean {d.mean():.3g}, std {d.std():.3g}"
    )
    return pool


def one_tail_separation(counts: Dict[str, int]) -> Dict[str, float]:
    """One-sided two-proportion z-test of Pr{d < mu | used} < Pr{d < mu | unused}."""
    n_used, n_unused = counts["used_total"], counts["unused_total"]
    if n_used == 0 or n_unused == 0:
        raise ParameterError("Both used and unused candidates are needed")
    p_used = counts["used_below"] / n_used
    p_unused = counts["unused_below"] / n_unused
    p_pooled = (counts["used_below"] + counts["unused_below"]) / (n_used + n_unused)
    spread = np.sqrt(p_pooled * (1 - p_pooled) * (1 / n_used + 1 / n_unused))
    if spread == 0:
        z, p_value = 0.0, 1.0
    else:
        z = (p_used - p_unused) / spread
        p_value = float(stats.norm.cdf(z))
    return {
        "p_below_used": p_used,
        "p_below_unused": p_unused,
        "z": float(z),
        "p_value": p_value,
        **counts,
    }
