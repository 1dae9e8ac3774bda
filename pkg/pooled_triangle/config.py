# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

"""Run configuration.

Defaults live in the dataclasses below. A YAML file, dotlist overrides
(`experiment.bootstrap_reps=500`) and command-line flags are merged on top, in that
order, and the merged tree is instantiated back into the dataclasses so that every
`__post_init__` check runs before any work starts.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

from omegaconf import OmegaConf

from pooled_triangle.attack import AttackSearchConfig
from pooled_triangle.errors import ParameterError
from pooled_triangle.prnu_core import DenoiserConfig
from pooled_triangle.sensor_sim import ContentKind
from pooled_triangle.triangle import MomentKind, StatisticKind


def _check_choice(name, values, allowed):
    bad = [v for v in values if v not in allowed]
    if bad or not values:
        raise ParameterError(
            f"{name} must be a non-empty subset of {allowed}, got {values}"
        )


def _check_dims(name, dims):
    if dims is not None and (len(dims) != 2 or min(dims) < 1):
        raise ParameterError(f"{name} must be a [rows, cols] pair of positive ints")


@dataclass
class CameraConfig:
    id: str = "C1"
    # attack sources come from a second camera
    other_id: str = "C2"
    sigma_k: float = 0.02
    theta_sigma: float = 2.0

    def __post_init__(self):
        if not self.sigma_k > 0:
            raise ParameterError(f"camera.sigma_k must be > 0, got {self.sigma_k}")
        if self.theta_sigma < 0:
            raise ParameterError("camera.theta_sigma must be >= 0")
        if self.id == self.other_id:
            raise ParameterError("camera.id and camera.other_id must differ")


@dataclass
class SynthesisConfig:
    render_dims: List[int] = field(default_factory=lambda: [256, 256])
    content_kind: str = ContentKind.smooth_random.value
    smoothing_radius: float = 8.0
    flat_level: float = 128.0
    n_public: int = 200
    n_line_fit: int = 100
    n_calibration: int = 100
    n_h0_test: int = 100
    n_flatfield: int = 50
    n_attack_source: int = 50
    # Upper bound on images rendered from the attacked camera
    n_camera_images: Optional[int] = None

    def __post_init__(self):
        _check_dims("synthesis.render_dims", self.render_dims)
        try:
            ContentKind(self.content_kind)
        except ValueError:
            raise ParameterError(f"Unknown content kind {self.content_kind!r}")
        for name in ("n_line_fit", "n_calibration", "n_h0_test", "n_flatfield"):
            if getattr(self, name) < 1:
                raise ParameterError(f"synthesis.{name} must be >= 1")
        if self.n_public < 2:
            raise ParameterError("synthesis.n_public must be >= 2")
        if self.n_attack_source < 0:
            raise ParameterError("synthesis.n_attack_source must be >= 0")
        budget = self.n_camera_images
        if budget is not None and self.camera_total > budget:
            raise ParameterError(
                f"Split sizes need {self.camera_total} images from the camera,"
                f" more than n_camera_images={self.n_camera_images}"
            )

    @property
    def camera_total(self) -> int:
        return (
            self.n_public
            + self.n_line_fit
            + self.n_calibration
            + self.n_h0_test
            + self.n_flatfield
        )


@dataclass
class AttackConfig:
    alpha_max: float = 0.2
    tolerance: float = 1e-4
    # Size of Eve's public subset for the attack subcommand
    n_used: Optional[int] = None
    max_images: Optional[int] = None

    def __post_init__(self):
        AttackSearchConfig(alpha_max=self.alpha_max, tolerance=self.tolerance)
        if self.n_used is not None and self.n_used < 1:
            raise ParameterError(f"attack.n_used must be >= 1, got {self.n_used}")
        if self.max_images is not None and self.max_images < 1:
            raise ParameterError("attack.max_images must be >= 1")

    @property
    def search(self) -> AttackSearchConfig:
        return AttackSearchConfig(alpha_max=self.alpha_max, tolerance=self.tolerance)


@dataclass
class ExperimentConfig:
    # Public set size N_c; None takes every public image of the manifest
    n_c: Optional[int] = None
    n_values: List[int] = field(default_factory=lambda: [10, 50, 100, 180])
    image_dims: Optional[List[int]] = None
    target_tpr: float = 0.9
    k_setup_a: int = 60
    bootstrap_reps: int = 2000
    bootstrap_p_fa_target: float = 1e-3
    p_fa_target: float = 0.03
    n_seeds: int = 1
    statistic_kinds: List[str] = field(default_factory=lambda: ["L", "V"])
    setups: List[str] = field(default_factory=lambda: ["a", "b"])
    moment_kind: str = MomentKind.sample.value
    setup_a_images: int = 5
    save_deviations: bool = False

    def __post_init__(self):
        if not self.n_values or min(self.n_values) < 1:
            raise ParameterError(
                "experiment.n_values must be a non-empty list of N >= 1"
            )
        if self.n_c is not None and self.n_c < max(self.n_values):
            raise ParameterError(
                f"experiment.n_values must not exceed n_c={self.n_c}: {self.n_values}"
            )
        _check_dims("experiment.image_dims", self.image_dims)
        if not 0 < self.target_tpr < 1:
            raise ParameterError("experiment.target_tpr must lie in (0, 1)")
        if self.k_setup_a < 1:
            raise ParameterError("experiment.k_setup_a must be >= 1")
        if self.n_c is not None and self.k_setup_a > self.n_c:
            raise ParameterError(f"experiment.k_setup_a must not exceed n_c={self.n_c}")
        if self.bootstrap_reps < 1:
            raise ParameterError("experiment.bootstrap_reps must be >= 1")
        for name in ("bootstrap_p_fa_target", "p_fa_target"):
            if not 0 < getattr(self, name) < 1:
                raise ParameterError(f"experiment.{name} must lie in (0, 1)")
        if self.n_seeds < 1:
            raise ParameterError("experiment.n_seeds must be >= 1")
        _check_choice(
            "experiment.statistic_kinds",
            list(self.statistic_kinds),
            [k.value for k in StatisticKind],
        )
        _check_choice("experiment.setups", list(self.setups), ["a", "b"])
        MomentKind(self.moment_kind)
        if self.setup_a_images < 0:
            raise ParameterError("experiment.setup_a_images must be >= 0")

    @property
    def kinds(self) -> List[StatisticKind]:
        return [StatisticKind(k) for k in self.statistic_kinds]


@dataclass
class TestConfig:
    __test__ = False

    # Manifest of the images to test; defaults to the forgeries of `attack`
    images: Optional[str] = None
    statistic_kinds: List[str] = field(default_factory=lambda: ["L", "V"])
    moment_kind: str = MomentKind.sample.value
    threshold_L: Optional[float] = None
    threshold_V: Optional[float] = None
    p_fa_target: float = 1e-3

    def __post_init__(self):
        _check_choice(
            "test.statistic_kinds",
            list(self.statistic_kinds),
            [k.value for k in StatisticKind],
        )
        MomentKind(self.moment_kind)
        if not 0 < self.p_fa_target < 1:
            raise ParameterError("test.p_fa_target must lie in (0, 1)")

    def threshold(self, kind: StatisticKind) -> Optional[float]:
        return getattr(self, f"threshold_{kind.value}")


@dataclass
class RunConfig:
    seed: int = 0
    workers: Optional[int] = None
    out: str = "runs/default"
    # Dataset manifest; defaults to <out>/dataset/manifest.csv
    dataset: Optional[str] = None
    quiet: bool = False
    camera: CameraConfig = field(default_factory=CameraConfig)
    synthesis: SynthesisConfig = field(default_factory=SynthesisConfig)
    denoiser: DenoiserConfig = field(default_factory=DenoiserConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    test: TestConfig = field(default_factory=TestConfig)

    def __post_init__(self):
        if self.workers is not None and self.workers < 1:
            raise ParameterError(f"workers must be >= 1, got {self.workers}")


def load_config(
    path: Optional[str] = None,
    overrides: Sequence[str] = (),
    **flags,
) -> RunConfig:
    """Merges defaults, the YAML file at `path`, dotlist overrides and flags."""
    conf = OmegaConf.structured(RunConfig)
    if path is not None:
        conf = OmegaConf.merge(conf, OmegaConf.load(path))
    if overrides:
        conf = OmegaConf.merge(conf, OmegaConf.from_dotlist(list(overrides)))
    set_flags = {k: v for k, v in flags.items() if v is not None}
    if set_flags:
        conf = OmegaConf.merge(conf, OmegaConf.create(set_flags))
    return OmegaConf.to_object(conf)


def config_to_dict(config) -> dict:
    return OmegaConf.to_container(OmegaConf.structured(config), resolve=True)
