"""Estimation procedures for arrival histograms and sweep series.

Window counting, background-subtracted storage efficiency, signal-to-
background ratio, the exponential coherence-time fit, the power-law fit of
the control-induced background, and the per-state summary report.

All estimators work on per-pulse normalized counts, so they are invariant
under a joint rescaling of trials.  Background subtraction may go negative
on noisy data; values are reported as-is (with a warning) to keep the
estimators unbiased.
"""

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, FitError, UndefinedRatioError
from .fitting import FitResult
from .memory_sim import ArrivalHistogram, SweepSeries
from .polarization import (
    CANONICAL_STATES,
    STATE_NAMES,
    StokesVector,
    apply_rotation,
    fidelity,
    fit_rotation,
    stokes_from_qubit,
)

_ALIGN_TOL = 1e-6


@dataclass(frozen=True)
class Window:
    """Half-open time window [start, end) in microseconds."""

    start: float
    end: float

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise ConfigError(f"window must satisfy 0 <= start < end, got [{self.start}, {self.end})")

    @property
    def duration(self) -> float:
        return self.end - self.start


def _bin_index(t: float, hist: ArrivalHistogram, what: str) -> int:
    x = (t - hist.t_start) / hist.bin_width
    i = round(x)
    if abs(x - i) > _ALIGN_TOL:
        raise DataError(f"{what} {t} is not aligned to the histogram bins")
    if not 0 <= i <= len(hist.counts):
        raise DataError(f"{what} {t} lies outside the histogram span")
    return i


def roi_counts(hist: ArrivalHistogram, w: Window) -> int:
    """Total counts inside a bin-aligned window."""
    i0 = _bin_index(w.start, hist, "window start")
    i1 = _bin_index(w.end, hist, "window end")
    return int(hist.counts[i0:i1].sum())


def storage_efficiency(
    storage: ArrivalHistogram, reference: ArrivalHistogram, roi: Window, bg: Window
) -> float:
    """Background-subtracted ROI counts over total reference counts.

    Both histograms are normalized per pulse first, so differing trial
    counts are handled.  A negative subtracted value is possible on noisy
    data and is returned unclamped (with a warning).
    """
    if abs(roi.duration - bg.duration) > 1e-9:
        raise ConfigError("ROI and background windows must have equal duration")
    ref_total = reference.total()
    if ref_total == 0:
        raise DataError("reference histogram is empty")
    net = roi_counts(storage, roi) - roi_counts(storage, bg)
    if net < 0:
        warnings.warn("negative background-subtracted counts; efficiency estimate is < 0")
    scale = reference.n_trials / storage.n_trials
    return net * scale / ref_total


def sbr(storage: ArrivalHistogram, roi: Window, bg: Window) -> float:
    """Signal-to-background ratio: (ROI − background-window)/(background-window)."""
    if abs(roi.duration - bg.duration) > 1e-9:
        raise ConfigError("ROI and background windows must have equal duration")
    n_bg = roi_counts(storage, bg)
    if n_bg == 0:
        raise UndefinedRatioError("background window holds zero counts; SBR undefined")
    return (roi_counts(storage, roi) - n_bg) / n_bg


def _sigma_or_unit(y_err: np.ndarray) -> np.ndarray:
    """Per-point sigma: measured errors where available, else unit."""
    return np.where(np.asarray(y_err) > 0, y_err, 1.0)


def fit_exponential_decay(series: SweepSeries) -> FitResult:
    """Weighted least-squares fit of y = A exp(-t/tau).

    Initialization is a weighted straight-line fit of ln y; one Gauss-Newton
    pass then refines (A, tau) on the nonlinear model.  Standard errors come
    from the Jacobian at the solution.
    """
    t = np.asarray(series.x, dtype=float)
    y = np.asarray(series.y, dtype=float)
    if len(t) < 3:
        raise DataError(f"need at least 3 points, got {len(t)}")
    if np.any(y <= 0):
        raise DataError("decay fit needs strictly positive values")
    sigma = _sigma_or_unit(series.y_err)

    # ln y = ln A - t/tau, weighted by the propagated log-error y/sigma
    w = y / sigma
    coef, *_ = np.linalg.lstsq(
        np.column_stack([w, w * t]), w * np.log(y), rcond=None
    )
    log_a, slope = coef
    if not np.isfinite(slope) or slope >= -1e-12 * max(abs(log_a), 1.0):
        raise FitError("no decay detected; 1/e time is unbounded")
    a, tau = math.exp(log_a), -1.0 / slope

    # one Gauss-Newton refinement on the nonlinear residuals
    model = a * np.exp(-t / tau)
    jac = np.column_stack([model / a, model * t / tau**2]) / sigma[:, None]
    r = (y - model) / sigma
    step, *_ = np.linalg.lstsq(jac, r, rcond=None)
    a, tau = a + step[0], tau + step[1]
    if not (np.isfinite(tau) and tau > 0 and np.isfinite(a) and a > 0):
        raise FitError(f"refinement left the model region (A={a}, tau={tau})")

    model = a * np.exp(-t / tau)
    jac = np.column_stack([model / a, model * t / tau**2]) / sigma[:, None]
    r = (y - model) / sigma
    cov = np.linalg.inv(jac.T @ jac)
    return FitResult(
        params={"amplitude": a, "tau": tau},
        stderr={"amplitude": math.sqrt(cov[0, 0]), "tau": math.sqrt(cov[1, 1])},
        residual_norm=float(np.linalg.norm(r)),
        n_points=len(t),
    )


def fit_sqrt_background(background: SweepSeries, technical: SweepSeries) -> FitResult:
    """Power-law fit of the technical-subtracted background vs. control power.

    Subtracts the technical series pointwise and fits y = a * P**c with the
    exponent free, so a square-root scaling is an outcome (c near 0.5), not
    an assumption.  Zero-power points carry no information on c and are
    skipped.
    """
    p = np.asarray(background.x, dtype=float)
    if len(p) != len(technical.x) or not np.allclose(p, technical.x, rtol=0, atol=1e-12):
        raise DataError("background and technical sweeps must share abscissas")
    if np.any(p < 0):
        raise DataError("powers must be >= 0")
    d = background.y - technical.y
    sigma = np.sqrt(background.y_err**2 + technical.y_err**2)
    sigma = np.where(sigma > 0, sigma, 1.0)
    if not np.any(d > 0):
        raise DataError("subtracted series has no positive values to fit")

    pos = (p > 0) & (d > 0)
    if pos.sum() < 2:
        raise FitError("need at least 2 positive subtracted points")
    w = d[pos] / sigma[pos]
    coef, *_ = np.linalg.lstsq(
        np.column_stack([w, w * np.log(p[pos])]), w * np.log(d[pos]), rcond=None
    )
    a, c = math.exp(coef[0]), coef[1]

    use = p > 0
    pw, dw, sw = p[use], d[use], sigma[use]
    model = a * pw**c
    jac = np.column_stack([model / a, model * np.log(pw)]) / sw[:, None]
    step, *_ = np.linalg.lstsq(jac, (dw - model) / sw, rcond=None)
    a, c = a + step[0], c + step[1]
    if not (np.isfinite(a) and a > 0 and np.isfinite(c)):
        raise FitError(f"power-law refinement diverged (a={a}, c={c})")

    model = a * pw**c
    jac = np.column_stack([model / a, model * np.log(pw)]) / sw[:, None]
    r = (dw - model) / sw
    cov = np.linalg.inv(jac.T @ jac)
    return FitResult(
        params={"a": a, "c": c},
        stderr={"a": math.sqrt(cov[0, 0]), "c": math.sqrt(cov[1, 1])},
        residual_norm=float(np.linalg.norm(r)),
        n_points=int(use.sum()),
    )


@dataclass(frozen=True)
class StateResult:
    sbr: float
    fidelity: float
    efficiency: float

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise DataError(f"efficiency {self.efficiency} outside [0, 1]")


@dataclass(frozen=True)
class StorageReport:
    """Per-state SBR / fidelity / efficiency plus averages with standard errors."""

    states: dict
    average: dict
    sem: dict

    def __post_init__(self):
        for key in ("sbr", "fidelity", "efficiency"):
            vals = [getattr(self.states[n], key) for n in self.states]
            if not math.isclose(self.average[key], float(np.mean(vals)), abs_tol=1e-12):
                raise DataError(f"average {key} does not match the per-state mean")

    def to_json(self) -> dict:
        return {
            "states": {
                name: {"sbr": r.sbr, "fidelity": r.fidelity, "efficiency": r.efficiency}
                for name, r in self.states.items()
            },
            "average": dict(self.average),
            "sem": dict(self.sem),
        }

    def to_text(self) -> str:
        lines = [f"{'state':<8}{'SBR':>8}{'fidelity':>10}{'efficiency':>12}"]
        for name, r in self.states.items():
            lines.append(f"{name:<8}{r.sbr:>8.3f}{r.fidelity:>10.4f}{r.efficiency:>12.4f}")
        lines.append(
            f"{'average':<8}{self.average['sbr']:>8.3f}"
            f"{self.average['fidelity']:>10.4f}{self.average['efficiency']:>12.4f}"
        )
        lines.append(
            f"{'sem':<8}{self.sem['sbr']:>8.3f}"
            f"{self.sem['fidelity']:>10.4f}{self.sem['efficiency']:>12.4f}"
        )
        return "\n".join(lines)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def build_report(
    storage: dict,
    reference: ArrivalHistogram,
    roi: Window,
    bg: Window,
    measured_stokes: dict,
) -> StorageReport:
    """Summary over the six canonical states.

    storage maps state name to its (analyzer-free) histogram; measured_stokes
    maps state name to the polarimetry-fitted Stokes vector of the retrieved
    light.  Fidelities follow the alignment procedure: fit the best rotation
    from ideal inputs to the measured directions, rotate the inputs, then
    compare each measured state against its rotated input.
    """
    for name, mapping in (("storage histogram", storage), ("measured Stokes", measured_stokes)):
        missing = [s for s in STATE_NAMES if s not in mapping]
        if missing:
            raise DataError(f"{name} missing for states {missing}")

    ideals = [stokes_from_qubit(CANONICAL_STATES[s]) for s in STATE_NAMES]
    measured = [measured_stokes[s].normalize() for s in STATE_NAMES]
    directions = [
        StokesVector(1.0, *(m.vec3 / m.dop)) if m.dop > 0 else m for m in measured
    ]
    rot = fit_rotation(ideals, directions)
    fids = [fidelity(apply_rotation(rot, i), m) for i, m in zip(ideals, measured)]

    states = {}
    for name, f in zip(STATE_NAMES, fids):
        states[name] = StateResult(
            sbr=sbr(storage[name], roi, bg),
            fidelity=f,
            efficiency=storage_efficiency(storage[name], reference, roi, bg),
        )

    average, sem = {}, {}
    for key in ("sbr", "fidelity", "efficiency"):
        vals = np.array([getattr(states[s], key) for s in STATE_NAMES])
        average[key] = float(vals.mean())
        sem[key] = float(vals.std(ddof=1) / math.sqrt(len(vals)))
    return StorageReport(states=states, average=average, sem=sem)
