# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

"""Pipeline stages shared by the subcommands and the experiment runner."""

import functools
import logging
import os
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from pooled_triangle.attack import AttackResult, AttackSearchConfig, minimum_alpha
from pooled_triangle.errors import (
    AttackInfeasibleError,
    CorruptArtifactError,
    MissingArtifactError,
)
from pooled_triangle.evaluation.manifest import Manifest
from pooled_triangle.prnu_core import (
    DenoiserConfig,
    DetectorCalibration,
    FingerprintEstimate,
    Owner,
    attribution_score,
    calibrate_threshold,
    estimate_from_residuals,
    residual,
)
from pooled_triangle.sensor_sim import Image, SplitRole
from pooled_triangle.triangle import (
    CandidateSet,
    CorrelationPair,
    Hypothesis,
    ImageProfile,
    InferenceLine,
    MomentKind,
    PooledStatistics,
    StatisticKind,
    decide,
    deviations_for_profile,
    fit_inference_line,
    pairs_for_profile,
    pooled_statistics,
)
from pooled_triangle.utils.computer import WorkerPool
from pooled_triangle.utils.helpers import read_json
from pooled_triangle.utils.io import read_matrix


logger = logging.getLogger("stages")


class RunLayout:
    """Where each subcommand reads and writes its artifacts under --out."""

    def __init__(self, out: str, dataset: Optional[str] = None):
        self.out = out
        self.dataset_manifest = dataset or os.path.join(out, "dataset", "manifest.csv")
        self.dataset_dir = os.path.dirname(self.dataset_manifest)
        self.calibration_dir = os.path.join(out, "calibration")
        self.fingerprint = os.path.join(self.calibration_dir, "fingerprint_alice.mat")
        self.calibration = os.path.join(self.calibration_dir, "calibration.json")
        self.line_dir = os.path.join(out, "line")
        self.line = os.path.join(self.line_dir, "inference_line.json")
        self.attack_dir = os.path.join(out, "attack")
        self.attack_manifest = os.path.join(self.attack_dir, "manifest.csv")
        self.attack_table = os.path.join(self.attack_dir, "attacks.csv")
        self.test_dir = os.path.join(out, "test")
        self.test_results = os.path.join(self.test_dir, "results.jsonl")
        self.experiment_dir = os.path.join(out, "experiment")

    def require(self, path: str, subcommand: str) -> str:
        if not os.path.exists(path):
            raise MissingArtifactError(path, subcommand)
        return path

    def _load_json(self, path: str, subcommand: str, parse):
        self.require(path, subcommand)
        try:
            return parse(read_json(path))
        except (KeyError, TypeError, ValueError) as e:
            raise CorruptArtifactError(path, subcommand, f"{type(e).__name__}: {e}")

    def load_fingerprint(self) -> FingerprintEstimate:
        values = read_matrix(self.require(self.fingerprint, "calibrate"))
        n_images = self._load_json(
            self.calibration, "calibrate", lambda d: int(d["n_flatfield"])
        )
        return FingerprintEstimate(values=values, n_images=n_images, owner=Owner.alice)

    def load_calibration(self) -> DetectorCalibration:
        return self._load_json(
            self.calibration, "calibrate", DetectorCalibration.from_dict
        )

    def load_line(self) -> InferenceLine:
        return self._load_json(self.line, "fit-line", InferenceLine.from_dict)


def _residual_values(image: Image, config: DenoiserConfig) -> np.ndarray:
    return residual(image, config).values


def _score(image: Image, K_a: FingerprintEstimate, config: DenoiserConfig) -> float:
    return attribution_score(image, K_a, config).rho


def fingerprint_from_images(
    images: Sequence[Image],
    config: DenoiserConfig,
    owner=Owner.alice,
    pool: Optional[WorkerPool] = None,
) -> FingerprintEstimate:
    pool = pool or WorkerPool(workers=1)
    residuals = pool.map(
        functools.partial(_residual_values, config=config), images, desc="fingerprint"
    )
    values = estimate_from_residuals(residuals, [im.values for im in images])
    return FingerprintEstimate(values=values, n_images=len(images), owner=Owner(owner))


def calibrate(
    manifest: Manifest,
    config: DenoiserConfig,
    target_tpr: float,
    crop_dims: Optional[Sequence[int]] = None,
    pool: Optional[WorkerPool] = None,
) -> Tuple[FingerprintEstimate, DetectorCalibration, List[dict]]:
    """Alice's fingerprint from the flat-fields and the detector threshold."""
    manifest.require([SplitRole.flatfield, SplitRole.calibration])
    pool = pool or WorkerPool(workers=1)
    flatfields = manifest.load_role(SplitRole.flatfield, crop_dims)
    K_a = fingerprint_from_images(flatfields, config, Owner.alice, pool)

    score = functools.partial(_score, K_a=K_a, config=config)
    same = manifest.load_role(SplitRole.calibration, crop_dims)
    other = manifest.load_role(SplitRole.attack_source, crop_dims)
    same_scores = pool.map(score, same, desc="calibration")
    other_scores = pool.map(score, other, desc="other camera")
    calibration = calibrate_threshold(same_scores, other_scores, target_tpr)
    rows = [
        {"image_id": im.image_id, "role": im.role_tag, "rho": rho}
        for im, rho in zip(same + other, same_scores + other_scores)
    ]
    return K_a, calibration, rows


def public_images(
    manifest: Manifest, crop_dims=None, n_c: Optional[int] = None
) -> List[Image]:
    manifest.require([SplitRole.public])
    images = manifest.load_role(SplitRole.public, crop_dims, limit=n_c)
    if n_c is not None and len(images) < n_c:
        logger.warning(
            f"Manifest has {len(images)} public images, fewer than n_c={n_c}"
        )
    return images


def fit_line(
    line_fit_profiles: Sequence[ImageProfile], candidates: CandidateSet
) -> Tuple[InferenceLine, List[CorrelationPair]]:
    pairs = []
    for profile in line_fit_profiles:
        pairs.extend(pairs_for_profile(profile, candidates))
    return fit_inference_line(pairs), pairs


def eve_fingerprint(
    public_profiles: Sequence[ImageProfile],
    public: Sequence[Image],
    n_used: int,
    rng: np.random.Generator,
) -> Tuple[FingerprintEstimate, List[str]]:
    """Eve's estimate from `n_used` random public images, reusing their residuals."""
    chosen = np.sort(rng.choice(len(public), size=n_used, replace=False))
    values = estimate_from_residuals(
        [public_profiles[i].residual for i in chosen],
        [public[i].values for i in chosen],
    )
    K_e = FingerprintEstimate(values=values, n_images=n_used, owner=Owner.eve)
    return K_e, [public[i].image_id for i in chosen]


def _attack_one(
    J: Image,
    K_e: FingerprintEstimate,
    K_a: FingerprintEstimate,
    calibration: DetectorCalibration,
    search: AttackSearchConfig,
    config: DenoiserConfig,
    source_ids: Sequence[str],
):
    try:
        return minimum_alpha(J, K_e, K_a, calibration, search, config, list(source_ids))
    except AttackInfeasibleError as e:
        return {"image_id": e.image_id, "rho_at_alpha_max": e.rho, "error": str(e)}


def attack_sources(
    sources: Sequence[Image],
    K_e: FingerprintEstimate,
    K_a: FingerprintEstimate,
    calibration: DetectorCalibration,
    search: AttackSearchConfig,
    config: DenoiserConfig,
    source_ids: Sequence[str] = (),
    pool: Optional[WorkerPool] = None,
) -> Tuple[List[AttackResult], List[dict]]:
    pool = pool or WorkerPool(workers=1)
    fn = functools.partial(
        _attack_one,
        K_e=K_e,
        K_a=K_a,
        calibration=calibration,
        search=search,
        config=config,
        source_ids=list(source_ids),
    )
    results, failures = [], []
    for outcome in pool.map(fn, sources, desc="attack"):
        if isinstance(outcome, AttackResult):
            results.append(outcome)
        else:
            logger.warning(outcome["error"])
            failures.append(outcome)
    if results:
        alphas = [r.alpha for r in results]
        logger.info(
            f"Forged {len(results)}/{len(sources)} images with N={K_e.n_images},"
            f" alpha in [{min(alphas):.4f}, {max(alphas):.4f}]"
        )
    return results, failures


def statistics_for(
    profiles: Sequence[ImageProfile],
    candidates: CandidateSet,
    line: InferenceLine,
    moment_kind=MomentKind.sample,
):
    deviation_sets = [deviations_for_profile(p, candidates, line) for p in profiles]
    return deviation_sets, [pooled_statistics(s, moment_kind) for s in deviation_sets]


def empirical_p_value(
    value: float, reference: Sequence[float], statistic_kind
) -> float:
    """(1 + #reference at least as extreme) / (1 + n), in the statistic's direction."""
    reference = np.asarray(reference, dtype=np.float64)
    if StatisticKind(statistic_kind) is StatisticKind.V:
        extreme = np.sum(reference >= value)
    else:
        extreme = np.sum(reference <= value)
    return float((1 + extreme) / (1 + reference.size))


def verdict_record(
    image_id: str,
    stats: PooledStatistics,
    kinds: Sequence[StatisticKind],
    thresholds: Dict[StatisticKind, Optional[float]],
    h0_reference: Dict[StatisticKind, Sequence[float]],
    p_fa_target: float,
) -> dict:
    """One JSON line of `test`: the statistics with a verdict per statistic."""
    record = {"image_id": image_id, **stats.to_dict()}
    p_values, verdicts = {}, {}
    for kind in kinds:
        value = stats.value(kind)
        if h0_reference.get(kind) is not None and len(h0_reference[kind]):
            p_values[kind.value] = empirical_p_value(value, h0_reference[kind], kind)
        if thresholds.get(kind) is not None:
            verdicts[kind.value] = decide(value, thresholds[kind], kind).value
        elif kind.value in p_values:
            forged = p_values[kind.value] < p_fa_target
            verdicts[kind.value] = (Hypothesis.H1 if forged else Hypothesis.H0).value
    record["p_values"] = p_values
    record["verdicts"] = verdicts
    return record
