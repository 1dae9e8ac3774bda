# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

"""Full comparative experiment: detector calibration, inference line, and for every
seed and every N the attack followed by setup (a) and setup (b) for L and V.
"""

import logging
import os
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from pooled_triangle.attack import AttackResult
from pooled_triangle.config import RunConfig, config_to_dict
from pooled_triangle.errors import ParameterError
from pooled_triangle.evaluation.bootstrap import bootstrap_from_deviations
from pooled_triangle.evaluation.manifest import Manifest
from pooled_triangle.evaluation.pools import (
    one_tail_separation,
    profile_images,
    split_by_detector,
)
from pooled_triangle.evaluation.roc import roc_from_statistics
from pooled_triangle.evaluation.stages import (
    attack_sources,
    calibrate,
    eve_fingerprint,
    fit_line,
    public_images,
    statistics_for,
)
from pooled_triangle.prnu_core import DetectorCalibration
from pooled_triangle.sensor_sim import SplitRole
from pooled_triangle.triangle import (
    CandidateSet,
    ImageProfile,
    MomentKind,
    separation_counts,
)
from pooled_triangle.utils.computer import WorkerPool
from pooled_triangle.utils.helpers import (
    STREAM_SUBSETS_EVE,
    derive_rng,
    write_csv_atomic,
    write_json_atomic,
)
from pooled_triangle.utils.io import write_matrix


logger = logging.getLogger("experiment")

REQUIRED_SPLITS = [
    SplitRole.public,
    SplitRole.line_fit,
    SplitRole.calibration,
    SplitRole.h0_test,
    SplitRole.flatfield,
    SplitRole.attack_source,
]

SUMMARY_METRICS = [
    "alpha_mean",
    "n_infeasible",
    "n_rejected",
    "setup_b_P_d_L",
    "setup_b_P_d_V",
    "setup_b_auc_L",
    "setup_b_auc_V",
    "setup_a_P_d_L",
    "setup_a_P_d_V",
    "separation_p_value",
]


class _Context:
    """Everything computed once per experiment and shared by all sweep points."""

    def __init__(self, config: RunConfig, manifest: Manifest, out_dir: str, pool):
        exp = config.experiment
        self.config = config
        self.out_dir = out_dir
        self.pool = pool
        self.kinds = exp.kinds
        self.moment_kind = MomentKind(exp.moment_kind)
        crop = exp.image_dims
        manifest.require(REQUIRED_SPLITS)

        self.K_a, self.calibration, score_rows = calibrate(
            manifest, config.denoiser, exp.target_tpr, crop, pool
        )
        write_matrix(os.path.join(out_dir, "fingerprint_alice.mat"), self.K_a.values)
        write_json_atomic(
            os.path.join(out_dir, "calibration.json"),
            {**self.calibration.to_dict(), "n_flatfield": self.K_a.n_images},
        )
        write_csv_atomic(os.path.join(out_dir, "detector_scores.csv"), score_rows)

        self.public = public_images(manifest, crop, exp.n_c)
        self.n_c = len(self.public)
        if max(exp.n_values) > self.n_c:
            raise ParameterError(
                f"N values {exp.n_values} exceed the public set size {self.n_c}"
            )
        if "a" in exp.setups and exp.k_setup_a > self.n_c:
            raise ParameterError(
                f"k={exp.k_setup_a} exceeds the public set size {self.n_c}"
            )
        self.public_profiles = self._profile(self.public, "public")
        self.candidates = CandidateSet(self.public_profiles)

        line_fit = manifest.load_role(SplitRole.line_fit, crop)
        self.line, pairs = fit_line(
            self._profile(line_fit, "line fit"), self.candidates
        )
        write_json_atomic(
            os.path.join(out_dir, "inference_line.json"), self.line.to_dict()
        )
        write_csv_atomic(
            os.path.join(out_dir, "line_pairs.csv"),
            [vars(p) for p in pairs],
            columns=["candidate_id", "c_hat", "c_true"],
        )

        # Genuine test images must pass the detector, as forgeries do
        h0_test = manifest.load_role(SplitRole.h0_test, crop)
        h0_profiles, _ = split_by_detector(
            self._profile(h0_test, "H0 test"), self.calibration
        )
        if not h0_profiles:
            raise ParameterError("No H0 test image passes the detector")
        self.n_h0_test = len(h0_test)
        self.h0_sets, self.h0_stats = statistics_for(
            h0_profiles, self.candidates, self.line, self.moment_kind
        )
        logger.info(
            f"{len(h0_profiles)}/{self.n_h0_test} H0 test images pass the detector"
        )
        write_csv_atomic(
            os.path.join(out_dir, "h0_statistics.csv"),
            _statistics_rows(self.h0_sets, self.h0_stats),
        )

        self.sources = manifest.load_role(
            SplitRole.attack_source, crop, limit=config.attack.max_images
        )

    def _profile(self, images, desc):
        return profile_images(
            images, self.K_a, self.config.denoiser, self.pool, desc=desc
        )


def _statistics_rows(deviation_sets, statistics) -> List[dict]:
    return [
        {"image_id": s.test_id, **st.to_dict()}
        for s, st in zip(deviation_sets, statistics)
    ]


def recheck_forgeries(
    results: Sequence[AttackResult],
    profiles: Sequence[ImageProfile],
    calibration: DetectorCalibration,
) -> Tuple[List[AttackResult], List[ImageProfile], List[dict]]:
    """Keeps the forgeries that still pass the detector, profiled as Alice sees them.

    Returns the kept results and profiles, aligned, and one failure record per
    dropped forgery.
    """
    if len(results) != len(profiles):
        raise ParameterError(f"{len(results)} attack results, {len(profiles)} profiles")
    kept, kept_profiles, rejected = [], [], []
    for result, profile in zip(results, profiles):
        if profile.score >= calibration.threshold:
            kept.append(result)
            kept_profiles.append(profile)
            continue
        error = (
            f"Forgery {profile.image_id} fails the detector at assembly:"
            f" rho={profile.score:.6f} < threshold {calibration.threshold:.6f}"
        )
        logger.error(error)
        rejected.append(
            {"image_id": profile.image_id, "rho": profile.score, "error": error}
        )
    return kept, kept_profiles, rejected


def _run_point(ctx: _Context, seed: int, n_used: int) -> dict:
    exp = ctx.config.experiment
    point_dir = os.path.join(ctx.out_dir, f"seed-{seed}", f"N-{n_used:05d}")
    record = {"seed": seed, "N": n_used, "N_over_N_c": n_used / ctx.n_c}

    rng = derive_rng(seed, STREAM_SUBSETS_EVE, n_used)
    K_e, used_ids = eve_fingerprint(ctx.public_profiles, ctx.public, n_used, rng)
    write_matrix(os.path.join(point_dir, "fingerprint_eve.mat"), K_e.values)
    write_json_atomic(os.path.join(point_dir, "eve_sources.json"), used_ids)

    results, failures = attack_sources(
        ctx.sources,
        K_e,
        ctx.K_a,
        ctx.calibration,
        ctx.config.attack.search,
        ctx.config.denoiser,
        used_ids,
        ctx.pool,
    )
    write_csv_atomic(
        os.path.join(point_dir, "attacks.csv"),
        [r.record() for r in results],
        columns=["image_id", "source_camera", "alpha", "rho", "n_sources"],
    )
    record["n_infeasible"] = len(failures)
    forged_profiles = ctx._profile([r.forged for r in results], "forged")
    results, forged_profiles, rejected = recheck_forgeries(
        results, forged_profiles, ctx.calibration
    )
    failures = failures + rejected
    record["n_forged"] = len(results)
    record["n_rejected"] = len(rejected)
    if failures:
        write_json_atomic(os.path.join(point_dir, "failures.json"), failures)
    if not results:
        logger.warning(f"seed={seed} N={n_used}: no feasible forgery")
        return record
    record["alpha_mean"] = float(np.mean([r.alpha for r in results]))

    forged_sets, forged_stats = statistics_for(
        forged_profiles, ctx.candidates, ctx.line, ctx.moment_kind
    )
    write_csv_atomic(
        os.path.join(point_dir, "statistics.csv"),
        _statistics_rows(forged_sets, forged_stats),
    )
    if exp.save_deviations:
        for s in forged_sets:
            write_csv_atomic(
                os.path.join(point_dir, "deviations", f"{s.test_id}.csv"), s.rows()
            )

    counts = {"used_below": 0, "used_total": 0, "unused_below": 0, "unused_total": 0}
    for s, st in zip(forged_sets, forged_stats):
        for key, n in separation_counts(s.samples, used_ids, st.moments.mu).items():
            counts[key] += n
    if counts["used_total"] and counts["unused_total"]:
        separation = one_tail_separation(counts)
        record["separation_p_below_used"] = separation["p_below_used"]
        record["separation_p_below_unused"] = separation["p_below_unused"]
        record["separation_p_value"] = separation["p_value"]

    if "b" in exp.setups:
        rocs = roc_from_statistics(
            ctx.h0_stats, forged_stats, exp.p_fa_target, ctx.kinds
        )
        rows = []
        for kind, roc in rocs.items():
            record[f"setup_b_P_d_{kind.value}"] = roc.P_d_at_target
            record[f"setup_b_auc_{kind.value}"] = roc.area
            rows.extend(roc.curve_rows())
        write_csv_atomic(os.path.join(point_dir, "roc.csv"), rows)

    if "a" in exp.setups and exp.setup_a_images > 0:
        h0_groups = [s.d for s in ctx.h0_sets]
        per_image = []
        P_d = {kind: [] for kind in ctx.kinds}
        for i, s in enumerate(forged_sets[: exp.setup_a_images]):
            reports = bootstrap_from_deviations(
                s.d,
                h0_groups,
                exp.k_setup_a,
                exp.bootstrap_reps,
                exp.bootstrap_p_fa_target,
                ctx.kinds,
                seed=seed,
                stream=(n_used, i),
                moment_kind=ctx.moment_kind,
            )
            entry = {"image_id": s.test_id}
            for kind, report in reports.items():
                entry[kind.value] = report.to_dict()
                P_d[kind].append(report.P_d)
            per_image.append(entry)
        for kind, values in P_d.items():
            record[f"setup_a_P_d_{kind.value}"] = float(np.mean(values))
        write_json_atomic(os.path.join(point_dir, "bootstrap.json"), per_image)

    logger.info(
        f"seed={seed} N={n_used}: "
        + ", ".join(
            f"{key}={record[key]:.4f}"
            for key in SUMMARY_METRICS
            if key.startswith("setup") and key in record
        )
    )
    return record


def summarize(records: List[dict]) -> List[dict]:
    """Mean and spread over seeds of every metric, one row per N."""
    by_n: Dict[int, List[dict]] = {}
    for r in records:
        by_n.setdefault(r["N"], []).append(r)
    summary = []
    for n_used in sorted(by_n):
        rows = by_n[n_used]
        row = {"N": n_used, "N_over_N_c": rows[0]["N_over_N_c"], "n_seeds": len(rows)}
        for key in SUMMARY_METRICS:
            values = [r[key] for r in rows if r.get(key) is not None]
            row[f"{key}_mean"] = float(np.mean(values)) if values else None
            row[f"{key}_std"] = float(np.std(values)) if values else None
        summary.append(row)
    return summary


def run_experiment(
    config: RunConfig,
    manifest: Manifest,
    out_dir: str,
    pool: Optional[WorkerPool] = None,
) -> dict:
    """Runs the whole sweep and returns the consolidated report.

    Every intermediate artifact is written under `out_dir`; the report itself is
    left to the caller. The report does not depend on the worker count.
    """
    exp = config.experiment
    pool = pool or WorkerPool(workers=1)
    ctx = _Context(config, manifest, out_dir, pool)

    records = []
    for seed_index in range(exp.n_seeds):
        seed = config.seed + seed_index
        for n_used in exp.n_values:
            records.append(_run_point(ctx, seed, n_used))

    summary = summarize(records)
    write_csv_atomic(os.path.join(out_dir, "sweep.csv"), records)
    write_csv_atomic(os.path.join(out_dir, "summary.csv"), summary)
    return {
        "seed": config.seed,
        "n_c": ctx.n_c,
        "experiment": config_to_dict(exp),
        "denoiser": config_to_dict(config.denoiser),
        "attack": config_to_dict(config.attack),
        "calibration": ctx.calibration.to_dict(),
        "line": ctx.line.to_dict(),
        "h0": {"n_h0_test": ctx.n_h0_test, "n_passing": len(ctx.h0_stats)},
        "n_failed_attacks": sum(r["n_infeasible"] + r["n_rejected"] for r in records),
        "points": records,
        "summary": summary,
    }
