# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

"""Dataset manifest: one CSV row per image with its split role.

Columns are image_id, path (relative to the manifest directory), role, camera_id.
No image id or path may appear twice, so the splits never overlap.
"""

import logging
import os
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence

import pandas as pd

from pooled_triangle.errors import ManifestError
from pooled_triangle.sensor_sim import Image, SplitRole, central_crop
from pooled_triangle.utils.helpers import write_csv_atomic
from pooled_triangle.utils.io import read_pgm


logger = logging.getLogger("manifest")

COLUMNS = ["image_id", "path", "role", "camera_id"]


class ManifestEntry(NamedTuple):
    image_id: str
    path: str
    role: str
    camera_id: str = ""


class Manifest:
    def __init__(self, entries: Iterable[ManifestEntry], base_dir: str = "."):
        self.entries: List[ManifestEntry] = sorted(entries, key=lambda e: e.image_id)
        self.base_dir = base_dir
        self.validate()

    def validate(self) -> None:
        seen_ids: Dict[str, str] = {}
        seen_paths: Dict[str, str] = {}
        roles = {r.value for r in SplitRole}
        for e in self.entries:
            if not e.image_id:
                raise ManifestError(f"Entry with path {e.path!r} has no image_id")
            if e.role not in roles:
                raise ManifestError(f"Image {e.image_id} has unknown role {e.role!r}")
            if e.image_id in seen_ids:
                raise ManifestError(
                    f"Image {e.image_id} appears in more than one split"
                    f" ({seen_ids[e.image_id]}, {e.role})"
                )
            if e.path in seen_paths:
                raise ManifestError(
                    f"Path {e.path} is listed for both {seen_paths[e.path]}"
                    f" and {e.image_id}"
                )
            seen_ids[e.image_id] = e.role
            seen_paths[e.path] = e.image_id

    def __len__(self):
        return len(self.entries)

    def by_role(self, role) -> List[ManifestEntry]:
        role = SplitRole(role).value
        return [e for e in self.entries if e.role == role]

    def counts(self) -> Dict[str, int]:
        counts = {r.value: 0 for r in SplitRole}
        for e in self.entries:
            counts[e.role] += 1
        return {role: n for role, n in counts.items() if n}

    def require(self, roles: Sequence) -> None:
        missing = [SplitRole(r).value for r in roles if not self.by_role(r)]
        if missing:
            raise ManifestError(f"Manifest has no images for split(s) {missing}")

    def resolve(self, entry: ManifestEntry) -> str:
        if os.path.isabs(entry.path):
            return entry.path
        return os.path.join(self.base_dir, entry.path)

    def load(
        self, entry: ManifestEntry, crop_dims: Optional[Sequence[int]] = None
    ) -> Image:
        pixels = read_pgm(self.resolve(entry))
        image = Image(
            pixels=pixels,
            source_id=entry.camera_id or None,
            role_tag=entry.role,
            image_id=entry.image_id,
        )
        if crop_dims is not None:
            image = central_crop(image, crop_dims)
        return image

    def load_role(
        self,
        role,
        crop_dims: Optional[Sequence[int]] = None,
        limit: Optional[int] = None,
    ) -> List[Image]:
        entries = self.by_role(role)
        if limit is not None:
            entries = entries[:limit]
        return [self.load(e, crop_dims) for e in entries]


def load_manifest(path) -> Manifest:
    if not os.path.exists(path):
        raise FileNotFoundError(f"Manifest {path} does not exist")
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    missing = [c for c in COLUMNS if c not in df.columns]
    if missing:
        raise ManifestError(f"{path}: missing column(s) {missing}")
    entries = [
        ManifestEntry(r.image_id, r.path, r.role, r.camera_id)
        for r in df[COLUMNS].itertuples(index=False)
    ]
    manifest = Manifest(entries, base_dir=os.path.dirname(os.path.abspath(path)))
    logger.info(f"Loaded manifest {path}: {manifest.counts()}")
    return manifest


def save_manifest(path, entries: Iterable[ManifestEntry]) -> Manifest:
    manifest = Manifest(entries, base_dir=os.path.dirname(os.path.abspath(path)))
    write_csv_atomic(path, [e._asdict() for e in manifest.entries], columns=COLUMNS)
    return manifest
