# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

import logging
import os
from typing import List

from pooled_triangle.config import CameraConfig, SynthesisConfig
from pooled_triangle.evaluation.manifest import Manifest, ManifestEntry, save_manifest
from pooled_triangle.sensor_sim import ContentKind, SplitRole, make_camera, render_batch
from pooled_triangle.utils.helpers import STREAM_SYNTH, derive_seed, write_json_atomic
from pooled_triangle.utils.io import write_matrix, write_pgm


logger = logging.getLogger("synthesis")

# Stream keys of the synthetic dataset, one per camera and per split
CAMERA_KEYS = {"camera": 0, "other_camera": 1}
SPLIT_KEYS = {
    SplitRole.public: 10,
    SplitRole.line_fit: 11,
    SplitRole.calibration: 12,
    SplitRole.h0_test: 13,
    SplitRole.flatfield: 14,
    SplitRole.attack_source: 15,
}


def _split_sizes(synthesis: SynthesisConfig):
    return {
        SplitRole.public: synthesis.n_public,
        SplitRole.line_fit: synthesis.n_line_fit,
        SplitRole.calibration: synthesis.n_calibration,
        SplitRole.h0_test: synthesis.n_h0_test,
        SplitRole.flatfield: synthesis.n_flatfield,
        SplitRole.attack_source: synthesis.n_attack_source,
    }


def synthesize_dataset(
    camera_config: CameraConfig, synthesis: SynthesisConfig, out_dir: str, seed: int
) -> Manifest:
    """Renders every split, writes PGMs, ground-truth PRNUs and the manifest."""
    dims = tuple(synthesis.render_dims)
    camera = make_camera(
        camera_config.id,
        dims,
        sigma_k=camera_config.sigma_k,
        theta_sigma=camera_config.theta_sigma,
        seed=derive_seed(seed, STREAM_SYNTH, CAMERA_KEYS["camera"]),
    )
    other = make_camera(
        camera_config.other_id,
        dims,
        sigma_k=camera_config.sigma_k,
        theta_sigma=camera_config.theta_sigma,
        seed=derive_seed(seed, STREAM_SYNTH, CAMERA_KEYS["other_camera"]),
    )
    image_dir = os.path.join(out_dir, "images")
    os.makedirs(image_dir, exist_ok=True)

    entries: List[ManifestEntry] = []
    for role, n_images in _split_sizes(synthesis).items():
        if n_images == 0:
            continue
        source = other if role is SplitRole.attack_source else camera
        kind = synthesis.content_kind
        if role is SplitRole.flatfield:
            kind = ContentKind.flat
        images = render_batch(
            source,
            n_images,
            kind,
            seed=derive_seed(seed, STREAM_SYNTH, SPLIT_KEYS[role]),
            role_tag=role.value,
            id_prefix=role.value,
            level=synthesis.flat_level,
            smoothing_radius=synthesis.smoothing_radius,
        )
        for im in images:
            rel_path = os.path.join("images", f"{im.image_id}.pgm")
            write_pgm(os.path.join(out_dir, rel_path), im.pixels)
            entries.append(ManifestEntry(im.image_id, rel_path, role.value, source.id))
        logger.info(f"Wrote {n_images} {role.value} images from camera {source.id}")

    for cam in (camera, other):
        write_matrix(os.path.join(out_dir, f"prnu_{cam.id}.mat"), cam.prnu)
    write_json_atomic(
        os.path.join(out_dir, "synthesis.json"),
        {"seed": seed, "camera": camera_config, "synthesis": synthesis},
    )
    return save_manifest(os.path.join(out_dir, "manifest.csv"), entries)
