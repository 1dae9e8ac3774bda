# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

# example usage:
# pooled-triangle synthesize --config pooled_triangle/conf/smoke.yaml --out runs/smoke
# pooled-triangle experiment --config pooled_triangle/conf/smoke.yaml --out runs/smoke
# pooled-triangle test --out runs/smoke test.threshold_V=40

import argparse
import datetime
import functools
import json
import logging
import os
import sys
from typing import List, Optional

from omegaconf import OmegaConf
from omegaconf.errors import OmegaConfBaseException

from pooled_triangle.config import RunConfig, load_config
from pooled_triangle.errors import ParameterError, TriangleTestError
from pooled_triangle.evaluation.experiment import run_experiment
from pooled_triangle.evaluation.manifest import (
    ManifestEntry,
    load_manifest,
    save_manifest,
)
from pooled_triangle.evaluation.pools import profile_images
from pooled_triangle.evaluation.stages import (
    RunLayout,
    attack_sources,
    calibrate,
    fingerprint_from_images,
    fit_line,
    public_images,
    statistics_for,
    verdict_record,
)
from pooled_triangle.evaluation.synthesis import synthesize_dataset
from pooled_triangle.prnu_core import Owner
from pooled_triangle.sensor_sim import SplitRole
from pooled_triangle.triangle import (
    CandidateSet,
    MomentKind,
    StatisticKind,
    deviations_for_profile,
    pooled_statistics,
    profile_image,
)
from pooled_triangle.utils.computer import WorkerPool
from pooled_triangle.utils.helpers import (
    STREAM_SUBSETS_EVE,
    atomic_path,
    derive_rng,
    dumps_json,
    write_csv_atomic,
    write_json_atomic,
)
from pooled_triangle.utils.io import write_matrix, write_pgm
from pooled_triangle.utils.logging import init_logger


logger = logging.getLogger("cli")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_PARTIAL = 2
EXIT_IO = 3

SUBCOMMANDS = ["synthesize", "calibrate", "fit-line", "attack", "test", "experiment"]


def parse_args(argv=None):
    parser = argparse.ArgumentParser(
        prog="pooled-triangle",
        description="Fingerprint-copy attack and its detection with the pooled "
        "triangle test",
    )
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument(
        "overrides",
        nargs="*",
        help="Config overrides as dotted key=value, e.g. experiment.bootstrap_reps=500",
    )
    parser.add_argument("--config", type=str, help="YAML config file")
    parser.add_argument("--seed", type=int, help="Master seed")
    parser.add_argument(
        "--workers", type=int, help="Worker processes (default: number of cores)"
    )
    parser.add_argument("--out", type=str, help="Artifact directory")
    parser.add_argument(
        "--dataset", type=str, help="Dataset manifest (default: <out>/dataset)"
    )
    parser.add_argument("--quiet", action="store_true", default=None)
    parser.add_argument(
        "--stdout",
        action="store_true",
        help="Also print the experiment report on standard output",
    )
    # options may sit between the subcommand and the overrides
    return parser.parse_intermixed_args(argv)


def _pool(config: RunConfig) -> WorkerPool:
    return WorkerPool(workers=config.workers, progress=not config.quiet)


def _crop(config: RunConfig):
    return config.experiment.image_dims


def _manifest(layout: RunLayout):
    return load_manifest(layout.require(layout.dataset_manifest, "synthesize"))


def cmd_synthesize(config: RunConfig) -> int:
    layout = RunLayout(config.out, config.dataset)
    manifest = synthesize_dataset(
        config.camera, config.synthesis, layout.dataset_dir, config.seed
    )
    logger.info(f"Dataset of {len(manifest)} images in {layout.dataset_dir}")
    return EXIT_OK


def cmd_calibrate(config: RunConfig) -> int:
    layout = RunLayout(config.out, config.dataset)
    manifest = _manifest(layout)
    with _pool(config) as pool:
        K_a, calibration, rows = calibrate(
            manifest,
            config.denoiser,
            config.experiment.target_tpr,
            _crop(config),
            pool,
        )
    write_matrix(layout.fingerprint, K_a.values)
    write_json_atomic(
        layout.calibration, {**calibration.to_dict(), "n_flatfield": K_a.n_images}
    )
    write_csv_atomic(os.path.join(layout.calibration_dir, "scores.csv"), rows)
    return EXIT_OK


def cmd_fit_line(config: RunConfig) -> int:
    layout = RunLayout(config.out, config.dataset)
    manifest = _manifest(layout)
    K_a = layout.load_fingerprint()
    manifest.require([SplitRole.line_fit])
    with _pool(config) as pool:
        public = public_images(manifest, _crop(config), config.experiment.n_c)
        candidates = CandidateSet(
            profile_images(public, K_a, config.denoiser, pool, desc="public")
        )
        line_fit = profile_images(
            manifest.load_role(SplitRole.line_fit, _crop(config)),
            K_a,
            config.denoiser,
            pool,
            desc="line fit",
        )
    line, pairs = fit_line(line_fit, candidates)
    write_json_atomic(layout.line, line.to_dict())
    write_csv_atomic(
        os.path.join(layout.line_dir, "pairs.csv"),
        [vars(p) for p in pairs],
        columns=["candidate_id", "c_hat", "c_true"],
    )
    return EXIT_OK


def cmd_attack(config: RunConfig) -> int:
    layout = RunLayout(config.out, config.dataset)
    manifest = _manifest(layout)
    K_a = layout.load_fingerprint()
    calibration = layout.load_calibration()
    manifest.require([SplitRole.attack_source])
    public = public_images(manifest, _crop(config), config.experiment.n_c)
    n_used = config.attack.n_used or config.experiment.n_values[0]
    if n_used > len(public):
        raise ParameterError(
            f"attack.n_used={n_used} exceeds {len(public)} public images"
        )

    rng = derive_rng(config.seed, STREAM_SUBSETS_EVE, n_used)
    chosen = sorted(rng.choice(len(public), size=n_used, replace=False))
    used = [public[i] for i in chosen]
    used_ids = [im.image_id for im in used]
    sources = manifest.load_role(
        SplitRole.attack_source, _crop(config), limit=config.attack.max_images
    )
    with _pool(config) as pool:
        K_e = fingerprint_from_images(used, config.denoiser, Owner.eve, pool)
        results, failures = attack_sources(
            sources,
            K_e,
            K_a,
            calibration,
            config.attack.search,
            config.denoiser,
            used_ids,
            pool,
        )

    write_matrix(os.path.join(layout.attack_dir, "fingerprint_eve.mat"), K_e.values)
    write_json_atomic(os.path.join(layout.attack_dir, "eve_sources.json"), used_ids)
    entries = []
    for r in results:
        rel_path = os.path.join("images", f"{r.forged.image_id}.pgm")
        write_pgm(os.path.join(layout.attack_dir, rel_path), r.forged.pixels)
        entries.append(
            ManifestEntry(
                r.forged.image_id, rel_path, SplitRole.forged.value, r.forged.source_id
            )
        )
    save_manifest(layout.attack_manifest, entries)
    write_csv_atomic(
        layout.attack_table,
        [r.record() for r in results],
        columns=["image_id", "source_camera", "alpha", "rho", "n_sources"],
    )
    write_json_atomic(os.path.join(layout.attack_dir, "failures.json"), failures)
    if failures:
        logger.error(f"{len(failures)}/{len(sources)} attacks infeasible")
        return EXIT_PARTIAL
    return EXIT_OK


def _safe_profile(entry, manifest, K_a, config, crop):
    try:
        return profile_image(manifest.load(entry, crop), K_a, config)
    except (TriangleTestError, ValueError, OSError) as e:
        return f"{type(e).__name__}: {e}"


def cmd_test(config: RunConfig) -> int:
    layout = RunLayout(config.out, config.dataset)
    manifest = _manifest(layout)
    K_a = layout.load_fingerprint()
    calibration = layout.load_calibration()
    line = layout.load_line()
    test_config = config.test
    kinds = [StatisticKind(k) for k in test_config.statistic_kinds]
    moment_kind = MomentKind(test_config.moment_kind)
    images_path = test_config.images or layout.require(layout.attack_manifest, "attack")
    to_test = load_manifest(images_path)

    with _pool(config) as pool:
        public = public_images(manifest, _crop(config), config.experiment.n_c)
        candidates = CandidateSet(
            profile_images(public, K_a, config.denoiser, pool, desc="public")
        )
        h0_reference = {}
        if manifest.by_role(SplitRole.h0_test):
            h0_profiles = [
                p
                for p in profile_images(
                    manifest.load_role(SplitRole.h0_test, _crop(config)),
                    K_a,
                    config.denoiser,
                    pool,
                    desc="H0 test",
                )
                if p.score >= calibration.threshold
            ]
            _, h0_stats = statistics_for(h0_profiles, candidates, line, moment_kind)
            h0_reference = {k: [s.value(k) for s in h0_stats] for k in kinds}
        profiles = pool.map(
            functools.partial(
                _safe_profile,
                manifest=to_test,
                K_a=K_a,
                config=config.denoiser,
                crop=_crop(config),
            ),
            to_test.entries,
            desc="test",
        )

    thresholds = {k: test_config.threshold(k) for k in kinds}
    n_failed = 0
    lines = []
    for entry, profile in zip(to_test.entries, profiles):
        try:
            if isinstance(profile, str):
                raise ParameterError(profile)
            stats = pooled_statistics(
                deviations_for_profile(profile, candidates, line), moment_kind
            )
            record = verdict_record(
                entry.image_id,
                stats,
                kinds,
                thresholds,
                h0_reference,
                test_config.p_fa_target,
            )
        except (TriangleTestError, ValueError) as e:
            logger.error(f"Test of {entry.image_id} failed: {e}")
            n_failed += 1
            record = {"image_id": entry.image_id, "error": str(e)}
        line_text = json.dumps(record, sort_keys=True)
        lines.append(line_text)
        print(line_text, flush=True)

    with atomic_path(layout.test_results) as f:
        f.write("".join(t + "\n" for t in lines))
    return EXIT_PARTIAL if n_failed else EXIT_OK


def cmd_experiment(config: RunConfig, to_stdout: bool = False) -> int:
    layout = RunLayout(config.out, config.dataset)
    manifest = _manifest(layout)
    started = datetime.datetime.now().isoformat(timespec="seconds")
    os.makedirs(layout.experiment_dir, exist_ok=True)
    OmegaConf.save(
        OmegaConf.structured(config), os.path.join(layout.experiment_dir, "config.yaml")
    )
    with _pool(config) as pool:
        report = run_experiment(config, manifest, layout.experiment_dir, pool)
        workers = pool.workers
    report_path = os.path.join(layout.experiment_dir, "report.json")
    write_json_atomic(report_path, report)
    write_json_atomic(
        os.path.join(layout.experiment_dir, "run_info.json"),
        {
            "started": started,
            "finished": datetime.datetime.now().isoformat(timespec="seconds"),
            "workers": workers,
            "argv": sys.argv,
        },
    )
    logger.info(f"Report written to {report_path}")
    if to_stdout:
        print(dumps_json(report))
    if report["n_failed_attacks"]:
        logger.error(
            f"{report['n_failed_attacks']} attacks infeasible or rejected at assembly"
        )
        return EXIT_PARTIAL
    return EXIT_OK


def run(argv: Optional[List[str]] = None) -> int:
    args = parse_args(argv)
    try:
        config = load_config(
            args.config,
            args.overrides,
            seed=args.seed,
            workers=args.workers,
            out=args.out,
            dataset=args.dataset,
            quiet=args.quiet,
        )
    except (TriangleTestError, ValueError, OmegaConfBaseException) as e:
        print(f"Invalid configuration: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as e:
        print(f"Can't read configuration: {e}", file=sys.stderr)
        return EXIT_IO

    init_logger(
        args.subcommand.replace("-", "_"),
        log_dir=config.out,
        level=logging.WARNING if config.quiet else logging.INFO,
    )
    commands = {
        "synthesize": cmd_synthesize,
        "calibrate": cmd_calibrate,
        "fit-line": cmd_fit_line,
        "attack": cmd_attack,
        "test": cmd_test,
        "experiment": functools.partial(cmd_experiment, to_stdout=args.stdout),
    }
    try:
        return commands[args.subcommand](config)
    except (TriangleTestError, ValueError) as e:
        logger.error(f"{args.subcommand}: {e}")
        return EXIT_VALIDATION
    except OSError as e:
        logger.error(f"{args.subcommand}: I/O error: {e}")
        return EXIT_IO


def main():
    sys.exit(run())
