# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

"""Synthetic cameras with a planted PRNU.

The forward model is I = round(clip(content * (1 + K) + theta, 0, 255)), so that the
noise residual of a rendered image behaves as W = I K + theta to first order.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from scipy import ndimage

from pooled_triangle.errors import ParameterError


logger = logging.getLogger("sensor_sim")

CONTENT_LOW = 0.2 * 255
CONTENT_HIGH = 0.8 * 255


class ContentKind(Enum):
    flat = "flat"
    smooth_random = "smooth-random"
    gradient = "gradient"


class SplitRole(Enum):
    public = "public"
    line_fit = "line_fit"
    calibration = "calibration"
    h0_test = "h0_test"
    flatfield = "flatfield"
    attack_source = "attack_source"
    forged = "forged"


@dataclass(frozen=True, eq=False)
class CameraProfile:
    id: str
    dims: Tuple[int, int]
    prnu: np.ndarray = field(repr=False)
    theta_sigma: float
    seed: int

    def __post_init__(self):
        if tuple(self.prnu.shape) != tuple(self.dims):
            raise ParameterError(
                f"Camera {self.id}: prnu shape {self.prnu.shape} != dims {self.dims}"
            )
        if self.theta_sigma < 0:
            raise ParameterError(f"Camera {self.id}: theta_sigma must be >= 0")


@dataclass(frozen=True, eq=False)
class Image:
    pixels: np.ndarray = field(repr=False)
    source_id: Optional[str] = None
    role_tag: Optional[str] = None
    image_id: Optional[str] = None

    def __post_init__(self):
        pixels = np.asarray(self.pixels)
        if pixels.ndim != 2:
            raise ParameterError(f"Image must be 2D, got shape {pixels.shape}")
        if pixels.size and (pixels.min() < 0 or pixels.max() > 255):
            raise ParameterError("Image pixels must lie in [0, 255]")
        if not np.array_equal(pixels, np.round(pixels)):
            raise ParameterError("Image pixels must be integer-valued")
        object.__setattr__(self, "pixels", pixels.astype(np.uint8))

    @property
    def dims(self) -> Tuple[int, int]:
        return tuple(self.pixels.shape)

    @property
    def values(self) -> np.ndarray:
        """Pixels as float64, the domain every correlation is computed in."""
        return self.pixels.astype(np.float64)


@dataclass(frozen=True, eq=False)
class ContentField:
    values: np.ndarray = field(repr=False)
    kind: ContentKind

    def __post_init__(self):
        if self.values.size and (self.values.min() < 0 or self.values.max() > 255):
            raise ParameterError("Content values must lie in [0, 255]")


def _check_dims(dims) -> Tuple[int, int]:
    try:
        rows, cols = (int(d) for d in dims)
    except (TypeError, ValueError):
        raise ParameterError(f"dims must be a (rows, cols) pair, got {dims!r}")
    if rows < 1 or cols < 1:
        raise ParameterError(f"dims must be positive, got {dims!r}")
    return rows, cols


def quantize(values: np.ndarray) -> np.ndarray:
    """Clip to [0, 255] then round half away from zero."""
    clipped = np.clip(values, 0.0, 255.0)
    return np.floor(clipped + 0.5).astype(np.uint8)


def generate_prnu(dims, sigma_k: float, seed: int) -> np.ndarray:
    rows, cols = _check_dims(dims)
    if not sigma_k > 0:
        raise ParameterError(f"sigma_k must be > 0, got {sigma_k}")
    rng = np.random.default_rng(seed)
    k = rng.normal(0.0, sigma_k, size=(rows, cols))
    if k.size > 1:
        k -= k.mean()
    return k


def generate_content(
    dims, kind, level: float = 128.0, seed: int = 0, smoothing_radius: float = 8.0
) -> ContentField:
    rows, cols = _check_dims(dims)
    try:
        kind = ContentKind(kind) if not isinstance(kind, ContentKind) else kind
    except ValueError:
        raise ParameterError(f"Unknown content kind {kind!r}")
    if not 0 <= level <= 255:
        raise ParameterError(f"level must lie in [0, 255], got {level}")

    if kind is ContentKind.flat:
        values = np.full((rows, cols), float(level))
    elif kind is ContentKind.gradient:
        ramp = np.linspace(0.0, float(level), cols)
        values = np.tile(ramp, (rows, 1))
    else:
        if not smoothing_radius > 0:
            raise ParameterError(
                f"smoothing_radius must be > 0, got {smoothing_radius}"
            )
        rng = np.random.default_rng(seed)
        noise = ndimage.gaussian_filter(
            rng.standard_normal((rows, cols)), smoothing_radius, mode="reflect"
        )
        low, high = noise.min(), noise.max()
        if high > low:
            values = CONTENT_LOW + (noise - low) * (CONTENT_HIGH - CONTENT_LOW) / (
                high - low
            )
        else:
            values = np.full((rows, cols), 0.5 * (CONTENT_LOW + CONTENT_HIGH))
        values = np.clip(values, CONTENT_LOW, CONTENT_HIGH)
    return ContentField(values=values, kind=kind)


def make_camera(
    camera_id: str, dims, sigma_k: float = 0.02, theta_sigma: float = 2.0, seed: int = 0
) -> CameraProfile:
    dims = _check_dims(dims)
    return CameraProfile(
        id=camera_id,
        dims=dims,
        prnu=generate_prnu(dims, sigma_k, seed),
        theta_sigma=float(theta_sigma),
        seed=seed,
    )


def render_image(
    camera: CameraProfile,
    content: ContentField,
    noise_seed: int,
    role_tag: Optional[str] = None,
    image_id: Optional[str] = None,
) -> Image:
    if tuple(content.values.shape) != tuple(camera.dims):
        raise ParameterError(
            f"Content dims {content.values.shape} differ from camera {camera.id}"
            f" dims {camera.dims}"
        )
    signal = content.values * (1.0 + camera.prnu)
    if camera.theta_sigma > 0:
        rng = np.random.default_rng(noise_seed)
        signal = signal + rng.normal(0.0, camera.theta_sigma, size=signal.shape)
    return Image(
        pixels=quantize(signal),
        source_id=camera.id,
        role_tag=role_tag,
        image_id=image_id,
    )


def central_crop(image: Image, target_dims) -> Image:
    rows, cols = image.dims
    target_rows, target_cols = _check_dims(target_dims)
    if target_rows > rows or target_cols > cols:
        raise ParameterError(
            f"Can't crop {image.dims} image to larger dims {(target_rows, target_cols)}"
        )
    # Odd margins drop the extra row/column from the bottom/right
    top = (rows - target_rows) // 2
    left = (cols - target_cols) // 2
    return Image(
        pixels=image.pixels[top : top + target_rows, left : left + target_cols].copy(),
        source_id=image.source_id,
        role_tag=image.role_tag,
        image_id=image.image_id,
    )


def render_batch(
    camera: CameraProfile,
    n_images: int,
    kind,
    seed: int,
    role_tag: Optional[str] = None,
    id_prefix: str = "img",
    level: float = 128.0,
    smoothing_radius: float = 8.0,
) -> List[Image]:
    """Renders `n_images` images of one camera, image i seeded from (seed, i)."""
    images = []
    for i in range(n_images):
        content_seed, noise_seed = np.random.SeedSequence([seed, i]).generate_state(2)
        content = generate_content(
            camera.dims,
            kind,
            level=level,
            seed=int(content_seed),
            smoothing_radius=smoothing_radius,
        )
        images.append(
            render_image(
                camera,
                content,
                int(noise_seed),
                role_tag=role_tag,
                image_id=f"{id_prefix}-{i:05d}",
            )
        )
    logger.debug(f"Rendered {n_images} {role_tag} images from camera {camera.id}")
    return images
