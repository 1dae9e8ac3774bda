# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence

import numpy as np
import pywt
from scipy import ndimage

from pooled_triangle.errors import DegenerateInputError, ParameterError
from pooled_triangle.sensor_sim import Image


logger = logging.getLogger("prnu_core")

# Relative guard of the fingerprint estimator's denominator
DEFAULT_EPS_SCALE = 1e-9


class DenoiserKind(Enum):
    wavelet_wiener = "wavelet-wiener"
    gaussian_blur = "gaussian-blur"


class Owner(Enum):
    eve = "eve"
    alice = "alice"


@dataclass
class DenoiserConfig:
    kind: str = DenoiserKind.wavelet_wiener.value
    levels: int = 4
    noise_variance: float = 4.0
    blur_sigma: float = 1.0
    wavelet: str = "db4"
    window_sizes: List[int] = field(default_factory=lambda: [3, 5, 7, 9])

    def __post_init__(self):
        try:
            DenoiserKind(self.kind)
        except ValueError:
            raise ParameterError(f"Unknown denoiser kind {self.kind!r}")
        if self.levels < 1:
            raise ParameterError(f"levels must be >= 1, got {self.levels}")
        if not self.noise_variance > 0:
            raise ParameterError(
                f"noise_variance must be > 0, got {self.noise_variance}"
            )
        if not self.blur_sigma > 0:
            raise ParameterError(f"blur_sigma must be > 0, got {self.blur_sigma}")
        if not self.window_sizes or min(self.window_sizes) < 1:
            raise ParameterError("window_sizes must be a non-empty list of sizes >= 1")

    @property
    def denoiser_kind(self) -> DenoiserKind:
        return DenoiserKind(self.kind)


@dataclass(eq=False)
class NoiseResidual:
    values: np.ndarray = field(repr=False)

    @property
    def dims(self):
        return tuple(self.values.shape)


@dataclass(eq=False)
class FingerprintEstimate:
    values: np.ndarray = field(repr=False)
    n_images: int
    owner: Owner

    def __post_init__(self):
        if self.values.ndim != 2:
            raise ParameterError("Fingerprint must be a 2D matrix")
        if not np.all(np.isfinite(self.values)):
            raise ParameterError("Fingerprint has non-finite entries")

    @property
    def dims(self):
        return tuple(self.values.shape)


@dataclass
class AttributionScore:
    rho: float


@dataclass
class DetectorCalibration:
    threshold: float
    target_tpr: float
    scores_used: int
    n_other: int = 0
    implied_fpr: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "target_tpr": self.target_tpr,
            "n_same": self.scores_used,
            "n_other": self.n_other,
            "implied_fpr": self.implied_fpr,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DetectorCalibration":
        return cls(
            threshold=float(d["threshold"]),
            target_tpr=float(d["target_tpr"]),
            scores_used=int(d["n_same"]),
            n_other=int(d.get("n_other", 0)),
            implied_fpr=d.get("implied_fpr"),
        )


def _pixels(image) -> np.ndarray:
    if isinstance(image, Image):
        return image.values
    return np.asarray(image, dtype=np.float64)


def excess_energy(wlet_coeff_energy_avg: np.ndarray, noise_var: float) -> np.ndarray:
    res = wlet_coeff_energy_avg - noise_var
    return (res + np.abs(res)) / 2


def local_signal_variance(
    coeff: np.ndarray, noise_var: float, window_sizes: Sequence[int]
) -> np.ndarray:
    """Minimum over windows of the locally estimated noise-free coefficient variance."""
    energy = coeff ** 2
    estimates = [
        excess_energy(ndimage.uniform_filter(energy, size, mode="constant"), noise_var)
        for size in window_sizes
    ]
    return np.min(estimates, axis=0)


def _wavelet_wiener(x: np.ndarray, config: DenoiserConfig) -> np.ndarray:
    rows, cols = x.shape
    if min(rows, cols) < 2 ** config.levels:
        raise ParameterError(
            f"Image of dims {x.shape} does not support {config.levels} wavelet levels"
        )
    noise_var = config.noise_variance
    wlet = pywt.wavedec2(x, config.wavelet, mode="periodization", level=config.levels)
    filtered = [wlet[0]]
    # Detail subbands only, the approximation stays in the denoised image
    for level_coeffs in wlet[1:]:
        level_filtered = []
        for coeff in level_coeffs:
            signal_var = local_signal_variance(coeff, noise_var, config.window_sizes)
            level_filtered.append(coeff * signal_var / (signal_var + noise_var))
        filtered.append(tuple(level_filtered))
    rec = pywt.waverec2(filtered, config.wavelet, mode="periodization")
    return rec[:rows, :cols]


def denoise(image, config: DenoiserConfig) -> np.ndarray:
    x = _pixels(image)
    if config.denoiser_kind is DenoiserKind.gaussian_blur:
        out = ndimage.gaussian_filter(x, config.blur_sigma, mode="reflect")
    else:
        out = _wavelet_wiener(x, config)
    if not np.all(np.isfinite(out)):
        raise DegenerateInputError("Denoiser produced non-finite values")
    return out


def residual(image, config: DenoiserConfig) -> NoiseResidual:
    x = _pixels(image)
    return NoiseResidual(values=x - denoise(x, config))


def estimate_from_residuals(
    residuals: Sequence[np.ndarray],
    images: Sequence[np.ndarray],
    eps_scale: float = DEFAULT_EPS_SCALE,
) -> np.ndarray:
    """K = sum(W_i I_i) / (sum(I_i^2) + eps), eps = eps_scale * max(sum(I_i^2), 1)."""
    if len(residuals) == 0 or len(residuals) != len(images):
        raise ParameterError("Need one residual per image and at least one image")
    dims = np.shape(images[0])
    numerator = np.zeros(dims)
    denominator = np.zeros(dims)
    for w, im in zip(residuals, images):
        w = np.asarray(w, dtype=np.float64)
        im = np.asarray(im, dtype=np.float64)
        if w.shape != dims or im.shape != dims:
            raise ParameterError(f"All images must share dims {dims}")
        numerator += w * im
        denominator += im ** 2
    denominator = denominator + eps_scale * np.maximum(denominator, 1.0)
    # All-dark pixels with eps_scale == 0 carry no information
    return np.divide(
        numerator, denominator, out=np.zeros(dims), where=denominator > 0
    )


def estimate_fingerprint(
    images: Sequence[Image],
    config: DenoiserConfig,
    owner=Owner.eve,
    eps_scale: float = DEFAULT_EPS_SCALE,
) -> FingerprintEstimate:
    if len(images) == 0:
        raise ParameterError("Cannot estimate a fingerprint from an empty image list")
    dims = images[0].dims
    for im in images:
        if im.dims != dims:
            raise ParameterError(
                f"Image {im.image_id} dims {im.dims} differ from {dims}"
            )
    pixels = [im.values for im in images]
    residuals = [residual(p, config).values for p in pixels]
    values = estimate_from_residuals(residuals, pixels, eps_scale)
    logger.debug(
        f"Estimated {Owner(owner).value} fingerprint from {len(images)} images"
    )
    return FingerprintEstimate(values=values, n_images=len(images), owner=Owner(owner))


def normalized_correlation(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ParameterError(f"Shapes differ: {a.shape} vs {b.shape}")
    a = a - a.mean()
    b = b - b.mean()
    norm_a = np.sqrt(np.sum(a * a))
    norm_b = np.sqrt(np.sum(b * b))
    if norm_a == 0 or norm_b == 0:
        raise DegenerateInputError("Correlation undefined for a constant input")
    rho = np.sum(a * b) / (norm_a * norm_b)
    return float(np.clip(rho, -1.0, 1.0))


def score_residual(
    residual_values: np.ndarray, pixels: np.ndarray, fingerprint: FingerprintEstimate
) -> float:
    return normalized_correlation(residual_values, pixels * fingerprint.values)


def attribution_score(
    image, fingerprint: FingerprintEstimate, config: DenoiserConfig
) -> AttributionScore:
    x = _pixels(image)
    if x.shape != fingerprint.dims:
        raise ParameterError(
            f"Image dims {x.shape} differ from fingerprint dims {fingerprint.dims}"
        )
    w = residual(x, config)
    return AttributionScore(rho=score_residual(w.values, x, fingerprint))


def calibrate_threshold(
    same_camera_scores: Sequence[float],
    other_camera_scores: Sequence[float],
    target_tpr: float,
) -> DetectorCalibration:
    same = np.asarray(same_camera_scores, dtype=np.float64)
    if same.size == 0:
        raise ParameterError("Empty calibration set")
    if not 0 < target_tpr < 1:
        raise ParameterError(f"target_tpr must lie in (0, 1), got {target_tpr}")
    thresh = float(np.quantile(same, 1.0 - target_tpr, method="linear"))
    other = np.asarray(other_camera_scores, dtype=np.float64)
    implied_fpr = float(np.mean(other >= thresh)) if other.size else None
    tpr = float(np.mean(same >= thresh))
    logger.info(
        f"Detector threshold {thresh:.6f}: TPR {tpr:.3f} on {same.size} images"
        + (f", FPR {implied_fpr:.3f} on {other.size} images" if other.size else "")
    )
    return DetectorCalibration(
        threshold=thresh,
        target_tpr=float(target_tpr),
        scores_used=int(same.size),
        n_other=int(other.size),
        implied_fpr=implied_fpr,
    )
