"""Measurement pipeline: fringe fits, twisting fits, chi extraction and
zero-phase contours of position-resolved phase maps.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import tasklogger
from scipy import linalg, optimize
from sklearn.metrics import r2_score

from . import utils
from .exceptions import FitError, PreconditionError
from .floquet import fixed_points, meridian_theta

#: fringe contrast below which the fitted phase carries no information
UNDEFINED_PHASE_CONTRAST = 1e-6


@dataclass
class FitResult:
    """Parameter estimates with standard errors and goodness of fit.

    Estimates are accessible by name, e.g. ``result["Q"]``.
    """

    estimates: dict
    stderr: dict
    n_points: int
    dof: int
    residual: float
    r2: float = None
    flags: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.estimates[name]

    def to_dict(self):
        out = {
            "estimate": self.estimates,
            "stderr": self.stderr,
            "n_points": self.n_points,
            "dof": self.dof,
            "residual": self.residual,
        }
        if self.r2 is not None:
            out["r2"] = self.r2
        out.update(self.flags)
        return out


def wrap_phase(phi):
    """Map phases into (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(phi, dtype=float), 2 * np.pi)


def _fringe_model(alphas, contrast, phase):
    return 0.5 * (1 + contrast * np.cos(alphas - phase))


def _check_alpha_grid(alphas):
    wrapped = np.unique(np.round(np.mod(alphas, 2 * np.pi), 12))
    if len(wrapped) < 4:
        raise FitError(
            "Expected at least 4 distinct fringe phases, got {}".format(len(wrapped))
        )
    gaps = np.diff(np.concatenate([wrapped, [wrapped[0] + 2 * np.pi]]))
    span = 2 * np.pi - np.max(gaps)
    if span < np.pi - 1e-12:
        raise FitError(
            "Expected fringe phases spanning at least pi, got {:.4g}".format(span)
        )


def fit_fringe(alphas, p_up, shots=None):
    """Fit P_up(alpha) = 1/2 [1 + C cos(alpha - phi)].

    A linear least-squares solve on (cos alpha, sin alpha) seeds a
    nonlinear fit. Negative C is absorbed into phi.

    Parameters
    ----------
    alphas : array-like
        Readout phases; at least 4 distinct values spanning >= pi.
    p_up : array-like
        Measured or simulated |up> fractions.
    shots : int, optional
        Atoms per point. Enables binomial variance weights.

    Returns
    -------
    result : FitResult
        Estimates ``C`` and ``phi``, phi in (-pi, pi]. When C is
        indistinguishable from 0 the phase is flagged undefined with
        stderr pi.

    Raises
    ------
    FitError
        Degenerate phase grid.
    """
    alphas = np.asarray(alphas, dtype=float)
    p_up = np.asarray(p_up, dtype=float)
    if alphas.shape != p_up.shape:
        raise PreconditionError(
            "alphas and p_up must have equal shapes. Got {} and {}".format(
                alphas.shape, p_up.shape
            )
        )
    _check_alpha_grid(alphas)
    design = 0.5 * np.stack([np.cos(alphas), np.sin(alphas)], axis=1)
    (a, b), *_ = linalg.lstsq(design, p_up - 0.5)
    contrast, phase = np.hypot(a, b), np.arctan2(b, a)
    sigma = None
    if shots is not None:
        clipped = np.clip(p_up, 0.5 / shots, 1 - 0.5 / shots)
        sigma = np.sqrt(clipped * (1 - clipped) / shots)
    if contrast < UNDEFINED_PHASE_CONTRAST:
        tasklogger.log_warning(
            "Fringe contrast {:.3g} too small to define a phase".format(contrast),
            logger=utils.LOGGER,
        )
        residuals = p_up - _fringe_model(alphas, contrast, phase)
        return FitResult(
            estimates={"C": float(contrast), "phi": 0.0},
            stderr={"C": 0.0, "phi": np.pi},
            n_points=len(alphas),
            dof=len(alphas) - 2,
            residual=float(np.linalg.norm(residuals)),
            flags={"phase_defined": False},
        )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", optimize.OptimizeWarning)
        popt, pcov = optimize.curve_fit(
            _fringe_model,
            alphas,
            p_up,
            p0=[contrast, phase],
            sigma=sigma,
            absolute_sigma=sigma is not None,
        )
    contrast, phase = popt
    if contrast < 0:
        contrast, phase = -contrast, phase + np.pi
    errors = np.sqrt(np.abs(np.diag(pcov)))
    residuals = p_up - _fringe_model(alphas, contrast, phase)
    return FitResult(
        estimates={"C": float(contrast), "phi": float(wrap_phase(phase))},
        stderr={"C": float(errors[0]), "phi": float(errors[1])},
        n_points=len(alphas),
        dof=len(alphas) - 2,
        residual=float(np.linalg.norm(residuals)),
        flags={"phase_defined": True},
    )


def _linear_fit(design, values, sigma=None):
    """Weighted linear least squares returning estimates, covariance, RSS."""
    if sigma is not None:
        weights = 1 / np.asarray(sigma, dtype=float)
        design, values_w = design * weights[:, None], values * weights
    else:
        values_w = values
    coef, *_ = linalg.lstsq(design, values_w)
    rss = float(np.sum((values_w - design @ coef) ** 2))
    dof = design.shape[0] - design.shape[1]
    normal = linalg.inv(design.T @ design)
    if sigma is not None:
        covariance = normal
    elif dof > 0:
        covariance = normal * rss / dof
    else:
        covariance = np.full(normal.shape, np.nan)
    return coef, covariance, dof


def fit_twisting(thetas, phis, offset=False):
    """Fit phi(theta) = -Q cos(theta) (+ offset).

    Phases are unwrapped along theta before the fit, so adjacent samples
    must differ by less than pi.

    Parameters
    ----------
    thetas : array-like
        Initial tilts, at least 3.
    phis : array-like
        Measured phases.
    offset : bool, optional, default: False
        Include a constant phase offset as a free parameter.

    Returns
    -------
    result : FitResult
        Estimates ``Q`` and, with `offset`, ``offset``; R^2 included.
    """
    thetas = np.asarray(thetas, dtype=float)
    phis = np.unwrap(np.asarray(phis, dtype=float))
    n_params = 2 if offset else 1
    if len(thetas) < max(3, n_params + 1):
        raise FitError("Expected at least 3 tilt values, got {}".format(len(thetas)))
    regressor = -np.cos(thetas)
    if np.all(np.abs(regressor) < 1e-12):
        raise FitError("Twisting strength unidentifiable: every theta is pi/2")
    # the unwrapped branch is anchored where the twist vanishes
    equator = np.argmin(np.abs(regressor))
    phis = phis - 2 * np.pi * np.round(phis[equator] / (2 * np.pi))
    columns = [regressor] + ([np.ones_like(regressor)] if offset else [])
    design = np.stack(columns, axis=1)
    coef, covariance, dof = _linear_fit(design, phis)
    predicted = design @ coef
    estimates = {"Q": float(coef[0])}
    stderr = {"Q": float(np.sqrt(covariance[0, 0]))}
    if offset:
        estimates["offset"] = float(coef[1])
        stderr["offset"] = float(np.sqrt(covariance[1, 1]))
    return FitResult(
        estimates=estimates,
        stderr=stderr,
        n_points=len(thetas),
        dof=dof,
        residual=float(np.linalg.norm(phis - predicted)),
        r2=float(r2_score(phis, predicted)),
    )


def fit_chi(tau_r, q, stderr=None):
    """Mean-field shift chi as the slope of Q versus interaction time.

    Parameters
    ----------
    tau_r : array-like
        Interaction times in us, at least 2 distinct.
    q : array-like
        Fitted twisting strengths.
    stderr : array-like, optional
        Standard errors of `q`, used as weights.

    Returns
    -------
    result : FitResult
        Estimates ``chi`` (rad/us) and ``intercept``.
    """
    tau_r = np.asarray(tau_r, dtype=float)
    q = np.asarray(q, dtype=float)
    if len(np.unique(tau_r)) < 2:
        raise FitError("Chi unidentifiable from a single interaction time")
    if stderr is not None and np.any(np.asarray(stderr) <= 0):
        stderr = None
    design = np.stack([tau_r, np.ones_like(tau_r)], axis=1)
    coef, covariance, dof = _linear_fit(design, q, stderr)
    predicted = design @ coef
    return FitResult(
        estimates={"chi": float(coef[0]), "intercept": float(coef[1])},
        stderr={
            "chi": float(np.sqrt(covariance[0, 0])),
            "intercept": float(np.sqrt(covariance[1, 1])),
        },
        n_points=len(tau_r),
        dof=dof,
        residual=float(np.linalg.norm(q - predicted)),
        r2=float(r2_score(q, predicted)),
    )


def _exponential(t, amplitude, rate):
    return amplitude * np.exp(-rate * t)


def fit_decay(times, values):
    """Fit values(t) = A exp(-rate t), e.g. contrast or atom number.

    Returns
    -------
    result : FitResult
        Estimates ``amplitude`` and ``rate`` (1/us).
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(np.unique(times)) < 3:
        raise FitError("Expected at least 3 distinct times, got {}".format(len(times)))
    positive = values > 0
    if len(np.unique(times[positive])) < 2:
        raise FitError("Expected at least 2 positive values to start the fit")
    slope, intercept = np.polyfit(times[positive], np.log(values[positive]), 1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", optimize.OptimizeWarning)
        popt, pcov = optimize.curve_fit(
            _exponential, times, values, p0=[np.exp(intercept), -slope]
        )
    residuals = values - _exponential(times, *popt)
    errors = np.sqrt(np.abs(np.diag(pcov)))
    return FitResult(
        estimates={"amplitude": float(popt[0]), "rate": float(popt[1])},
        stderr={"amplitude": float(errors[0]), "rate": float(errors[1])},
        n_points=len(times),
        dof=len(times) - 2,
        residual=float(np.linalg.norm(residuals)),
    )


class PhaseMap(object):
    """Fitted phase and contrast over initial tilt and position.

    Parameters
    ----------
    thetas : array-like, shape=[n_theta]
        Strictly increasing initial tilts.
    positions : array-like, shape=[n_x]
        Strictly increasing positions in um.
    phase : array-like, shape=[n_theta, n_x]
    contrast : array-like, shape=[n_theta, n_x]
    lambda_eff : array-like, shape=[n_x], optional
        Predicted control ratio per column, used to classify contours.
    """

    def __init__(self, thetas, positions, phase, contrast, lambda_eff=None):
        self.thetas = np.asarray(thetas, dtype=float)
        self.positions = np.asarray(positions, dtype=float)
        self.phase = np.asarray(phase, dtype=float)
        self.contrast = np.asarray(contrast, dtype=float)
        shape = (len(self.thetas), len(self.positions))
        if self.phase.shape != shape or self.contrast.shape != shape:
            raise PreconditionError(
                "Expected phase and contrast grids of shape {}. Got {} and {}".format(
                    shape, self.phase.shape, self.contrast.shape
                )
            )
        for name, axis in (("thetas", self.thetas), ("positions", self.positions)):
            if np.any(np.diff(axis) <= 0):
                raise PreconditionError("{} must be strictly increasing".format(name))
        self.lambda_eff = None if lambda_eff is None else np.asarray(lambda_eff)

    @classmethod
    def from_fits(cls, thetas, positions, fits, lambda_eff=None):
        """Build from a [n_theta][n_x] nested list of fringe FitResults."""
        phase = np.array([[f["phi"] for f in row] for row in fits])
        contrast = np.array([[f["C"] for f in row] for row in fits])
        return cls(thetas, positions, phase, contrast, lambda_eff=lambda_eff)

    @property
    def shape(self):
        return self.phase.shape

    def to_frame(self):
        theta_grid, x_grid = np.meshgrid(self.thetas, self.positions, indexing="ij")
        return pd.DataFrame(
            {
                "theta": theta_grid.ravel(),
                "x_um": x_grid.ravel(),
                "phi": self.phase.ravel(),
                "C": self.contrast.ravel(),
            }
        )


def _column_roots(thetas, phase, valid):
    """Zero crossings between adjacent valid cells.

    A sign change across a jump larger than pi is the +-pi branch cut, not
    a root.
    """
    roots = []
    for i in range(len(phase)):
        if not valid[i]:
            continue
        following = i + 1 < len(phase) and valid[i + 1]
        if phase[i] == 0 and (i == 0 or not valid[i - 1] or phase[i - 1] != 0):
            roots.append(thetas[i])
        elif (
            following
            and phase[i] * phase[i + 1] < 0
            and abs(phase[i] - phase[i + 1]) < np.pi
        ):
            fraction = phase[i] / (phase[i] - phase[i + 1])
            roots.append(thetas[i] + fraction * (thetas[i + 1] - thetas[i]))
    return roots


@dataclass
class ContourResult:
    """Roots of phi(theta) = 0 per position column."""

    positions: np.ndarray
    roots: list
    gaps: list = field(default_factory=list)
    classification: list = field(default_factory=list)

    @property
    def n_roots(self):
        return np.array([len(r) for r in self.roots])

    def to_frame(self):
        rows = []
        for column, (x, roots) in enumerate(zip(self.positions, self.roots)):
            labels = (
                self.classification[column]
                if self.classification
                else [None] * len(roots)
            )
            for theta, label in zip(roots, labels):
                rows.append({"x_um": x, "theta": theta, "branch": label})
        return pd.DataFrame(rows, columns=["x_um", "theta", "branch"])


def _classify(roots, lambda_eff):
    points = fixed_points(lambda_eff)
    predicted = meridian_theta(points)
    if len(points) == 1:
        names = ["paramagnetic"]
    else:
        names = ["ferro_upper", "paramagnetic", "ferro_lower"]
    return [names[int(np.argmin(np.abs(predicted - theta)))] for theta in roots]


def zero_phase_contour(phase_map, min_contrast=1e-3):
    """Extract the phi = 0 contour of a PhaseMap column by column.

    Roots in theta are located at sign changes and refined by linear
    interpolation. Cells without a phase or with contrast below
    `min_contrast` carry no phase information and never bracket a root.
    Columns holding such cells, or with a root count other than 0, 1 or 3,
    are reported as gaps. When the map carries lambda_eff, each root is
    labelled with the nearest predicted fixed-point branch.

    Parameters
    ----------
    phase_map : PhaseMap
    min_contrast : float, optional, default: 1e-3

    Returns
    -------
    contour : ContourResult
    """
    with np.errstate(invalid="ignore"):
        valid = np.isfinite(phase_map.phase) & (phase_map.contrast >= min_contrast)
    roots, gaps, classification = [], [], []
    for column in range(phase_map.shape[1]):
        column_roots = _column_roots(
            phase_map.thetas, phase_map.phase[:, column], valid[:, column]
        )
        roots.append(column_roots)
        if not valid[:, column].all() or len(column_roots) not in (0, 1, 3):
            gaps.append(column)
        if phase_map.lambda_eff is not None:
            classification.append(
                _classify(column_roots, phase_map.lambda_eff[column])
            )
    if gaps:
        tasklogger.log_debug(
            "Zero-phase contour has unbracketed columns {}".format(gaps),
            logger=utils.LOGGER,
        )
    return ContourResult(
        positions=phase_map.positions,
        roots=roots,
        gaps=gaps,
        classification=classification,
    )
