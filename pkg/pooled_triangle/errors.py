# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.


class TriangleTestError(Exception):
    """Base class of every error raised by pooled_triangle."""


class ParameterError(TriangleTestError, ValueError):
    """An argument is outside the range an operation accepts."""


class DegenerateInputError(TriangleTestError):
    """The inputs make the requested quantity undefined (zero norm, zero spread)."""


class DegenerateH0Error(TriangleTestError):
    """The bootstrap model of the statistic under H0 has zero spread."""


class AttackInfeasibleError(TriangleTestError):
    def __init__(self, image_id, alpha_max, rho, threshold):
        self.image_id = image_id
        self.alpha_max = alpha_max
        self.rho = rho
        self.threshold = threshold
        super().__init__(
            f"Attack on {image_id} infeasible: rho={rho:.6f} at alpha_max={alpha_max}"
            f" is below the detector threshold {threshold:.6f}"
        )


class ManifestError(TriangleTestError):
    """The dataset manifest violates the split/role contract."""


class MissingArtifactError(TriangleTestError):
    def __init__(self, path, subcommand):
        self.path = path
        self.subcommand = subcommand
        super().__init__(
            f"Missing {path}. Run `pooled-triangle {subcommand}` first to create it."
        )


class CorruptArtifactError(TriangleTestError):
    def __init__(self, path, subcommand, reason):
        self.path = path
        self.subcommand = subcommand
        super().__init__(
            f"Can't parse {path} ({reason}). Rerun `pooled-triangle {subcommand}`."
        )
