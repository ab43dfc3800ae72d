"""Generic fit-result container used by all fitting routines."""

from dataclasses import dataclass, field


@dataclass
class FitResult:
    """Parameter estimates with per-parameter uncertainties.

    params and stderr share keys; stderr entries are 1-sigma estimates from
    the fit covariance.  residual_norm is the (weighted) 2-norm of the final
    residual vector.
    """

    params: dict[str, float]
    stderr: dict[str, float] = field(default_factory=dict)
    residual_norm: float = 0.0
    n_points: int = 0

    def __post_init__(self):
        for k, v in self.stderr.items():
            if v < 0:
                raise ValueError(f"stderr[{k!r}] must be >= 0, got {v}")
        if self.n_points and self.n_points < len(self.params):
            raise ValueError("fewer points than parameters")

    def to_dict(self) -> dict:
        return {
            "params": dict(self.params),
            "stderr": dict(self.stderr),
            "residual_norm": self.residual_norm,
            "n_points": self.n_points,
        }
