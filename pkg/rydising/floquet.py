"""Effective transverse-field Ising model of the Floquet sequence.

Fixed points of the collective stroboscopic map, their stability, and the
position of the paramagnetic to ferromagnetic bifurcation across a cloud.
"""

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import tasklogger
from scipy import optimize
from scipy.spatial.transform import Rotation

from . import utils
from .exceptions import DomainError, FitError, PreconditionError, SearchError
from .spin import evolve_collective, stroboscopic_map, twist

#: per-cycle angle above which the static-model equivalence is unreliable
FLOQUET_ANGLE_LIMIT = 0.5


@dataclass(frozen=True)
class FloquetParams:
    """Per-cycle parameters of the Floquet sequence.

    Parameters
    ----------
    chi : float
        Mean-field shift in rad/us.
    tau_r : float
        Interaction time per cycle in us.
    h : float
        Transverse field in rad/us.
    tau_x : float
        Transverse-field time per cycle in us.
    contrast : float, optional, default: 1
        Collective contrast C in [0, 1].
    mode : {'effective', 'raw'}, optional, default: 'effective'
        'effective' twists by C chi tau_r and reports lam_eff as the control
        ratio; 'raw' ignores the contrast.
    """

    chi: float
    tau_r: float
    h: float
    tau_x: float
    contrast: float = 1.0
    mode: str = "effective"

    def __post_init__(self):
        if self.tau_r < 0 or self.tau_x < 0:
            raise DomainError(
                "Expected tau_r, tau_x >= 0, got {}, {}".format(self.tau_r, self.tau_x)
            )
        if not 0 <= self.contrast <= 1:
            raise DomainError(
                "Expected contrast in [0, 1], got {}".format(self.contrast)
            )
        if self.mode not in ("effective", "raw"):
            raise DomainError(
                "mode value {} not recognized. Choose from "
                "['effective', 'raw']".format(self.mode)
            )

    @classmethod
    def from_lambda(cls, lambda_, transverse_angle, contrast=1.0, mode="effective"):
        """Parameters with unit times and the given ratio and h tau_x."""
        return cls(
            chi=lambda_ * transverse_angle,
            tau_r=1.0,
            h=transverse_angle,
            tau_x=1.0,
            contrast=contrast,
            mode=mode,
        )

    @property
    def transverse_angle(self):
        return self.h * self.tau_x

    @property
    def lam(self):
        """Lambda = chi tau_r / (h tau_x)."""
        if self.transverse_angle == 0:
            return np.inf * np.sign(self.chi * self.tau_r) if self.chi else 0.0
        return self.chi * self.tau_r / self.transverse_angle

    @property
    def lam_eff(self):
        return self.contrast * self.lam

    @property
    def ratio(self):
        """Control ratio used for the bifurcation criterion."""
        return self.lam_eff if self.mode == "effective" else self.lam

    @property
    def twist_angle(self):
        """Collective twist per cycle, C chi tau_r (chi tau_r in raw mode)."""
        contrast = self.contrast if self.mode == "effective" else 1.0
        return contrast * self.chi * self.tau_r

    def to_dict(self):
        return {
            "chi": self.chi,
            "tau_r": self.tau_r,
            "h": self.h,
            "tau_x": self.tau_x,
            "contrast": self.contrast,
            "mode": self.mode,
            "lambda": self.lam,
            "lambda_eff": self.lam_eff,
        }


@dataclass
class FixedPoint:
    vector: np.ndarray
    stable: bool

    @property
    def theta(self):
        return float(np.arccos(np.clip(self.vector[2], -1, 1)))


@dataclass
class FixedPointSet:
    """Fixed points on the phi = 0 meridian, ordered by decreasing z.

    `degenerate` marks the pure-twist limit, where whole families of states
    are fixed and only representatives are listed. `floquet_deviation`
    marks per-cycle angles where the static model is unreliable.
    """

    points: list = field(default_factory=list)
    degenerate: bool = False
    floquet_deviation: bool = False

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    @property
    def vectors(self):
        return np.array([p.vector for p in self.points]).reshape(-1, 3)

    def stable(self):
        return [p for p in self.points if p.stable]

    def unstable(self):
        return [p for p in self.points if not p.stable]

    def to_frame(self):
        vectors = self.vectors
        return pd.DataFrame(
            {
                "x": vectors[:, 0],
                "y": vectors[:, 1],
                "z": vectors[:, 2],
                "theta": [p.theta for p in self.points],
                "stable": [p.stable for p in self.points],
            }
        )

    def to_dict(self):
        return {
            "points": [
                {"vector": p.vector, "theta": p.theta, "stable": bool(p.stable)}
                for p in self.points
            ],
            "degenerate": self.degenerate,
            "floquet_deviation": self.floquet_deviation,
        }


def _sorted(points, **kwargs):
    points = sorted(points, key=lambda p: -p.vector[2])
    return FixedPointSet(points, **kwargs)


def fixed_points(lambda_eff):
    """Fixed points of the static mean-field model H = -lambda s_z^2 / 2 - s_x.

    Parameters
    ----------
    lambda_eff : float
        Contrast-corrected interaction-to-drive ratio.

    Returns
    -------
    points : FixedPointSet
        (1, 0, 0) alone and stable for lambda_eff <= 1. Above threshold the
        two ferromagnetic points (1/lambda, 0, +-sqrt(1 - 1/lambda^2)) are
        stable and (1, 0, 0) is unstable.
    """
    if not np.isfinite(lambda_eff):
        raise PreconditionError("Expected finite lambda_eff, got {}".format(lambda_eff))
    paramagnetic = np.array([1.0, 0.0, 0.0])
    if lambda_eff <= 1:
        return FixedPointSet([FixedPoint(paramagnetic, True)])
    x = 1 / lambda_eff
    z = np.sqrt(1 - x ** 2)
    return _sorted(
        [
            FixedPoint(np.array([x, 0.0, z]), True),
            FixedPoint(paramagnetic, False),
            FixedPoint(np.array([x, 0.0, -z]), True),
        ]
    )


def cycle_map(vectors, params):
    """Apply one symmetric Floquet cycle to unit vectors."""
    return stroboscopic_map(
        vectors, params.twist_angle, params.transverse_angle, symmetric=True
    )


def _twist_jacobian(vector, angle):
    """Jacobian of s -> R_z(-angle s_z) s at `vector`."""
    rotated = twist(vector, angle)
    cos, sin = np.cos(-angle * vector[2]), np.sin(-angle * vector[2])
    rotation = np.array([[cos, -sin, 0.0], [sin, cos, 0.0], [0.0, 0.0, 1.0]])
    shear = -angle * np.outer(np.cross([0.0, 0.0, 1.0], rotated), [0.0, 0.0, 1.0])
    return rotation + shear


def tangent_map(vector, params):
    """Jacobian of the cycle map at `vector`, a 3x3 matrix."""
    half = params.twist_angle / 2
    transverse = Rotation.from_rotvec([-params.transverse_angle, 0.0, 0.0]).as_matrix()
    first = _twist_jacobian(vector, half)
    middle = transverse @ twist(vector, half)
    return _twist_jacobian(middle, half) @ transverse @ first


def _tangent_basis(vector):
    helper = np.array([0.0, 1.0, 0.0])
    if abs(vector @ helper) > 0.9:
        helper = np.array([1.0, 0.0, 0.0])
    e1 = np.cross(vector, helper)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(vector, e1)


def stability(vector, params, tol=1e-9):
    """Classify a fixed point of the cycle map.

    Parameters
    ----------
    vector : array-like, shape=[3]
        Fixed point; |map(s) - s| must be below 1e-6.
    params : FloquetParams
    tol : float, optional, default: 1e-9
        Band around the unit circle accepted as elliptic.

    Returns
    -------
    stable : bool
        True when both tangent-map eigenvalues have modulus <= 1 + tol.
    """
    vector = np.asarray(vector, dtype=float)
    residual = np.linalg.norm(cycle_map(vector, params) - vector)
    if residual >= 1e-6:
        raise PreconditionError(
            "Expected a fixed point (residual < 1e-6), got residual {:.3g}".format(
                residual
            )
        )
    e1, e2 = _tangent_basis(vector)
    jacobian = tangent_map(vector, params)
    basis = np.stack([e1, e2], axis=1)
    restricted = basis.T @ jacobian @ basis
    eigenvalues = np.linalg.eigvals(restricted)
    return bool(np.max(np.abs(eigenvalues)) <= 1 + tol)


def _meridian(theta):
    return np.stack([np.sin(theta), np.zeros_like(theta), np.cos(theta)], axis=-1)


def map_fixed_points(params, n_grid=2001, tol=1e-8):
    """Fixed points of the Floquet cycle map on the phi = 0 meridian.

    The symmetric cycle is reversible under the mirror y -> -y, so its
    meridian fixed points are the zeros of
    G(theta) = [R_x(h tau_x / 2) Tw(-C chi tau_r / 2) s(theta)]_y.
    Zeros are bracketed on a grid and refined by bisection.

    Parameters
    ----------
    params : FloquetParams
    n_grid : int, optional, default: 2001
        Bracketing grid over theta in [0, pi].
    tol : float, optional, default: 1e-8
        Largest accepted residual |map(s) - s|.

    Returns
    -------
    points : FixedPointSet

    Raises
    ------
    SearchError
        A bracketed root fails the residual check.
    """
    deviation = max(abs(params.twist_angle), params.transverse_angle) > (
        FLOQUET_ANGLE_LIMIT
    )
    if deviation:
        tasklogger.log_warning(
            "Per-cycle angles ({:.3g}, {:.3g}) exceed {}; the static model "
            "may not describe the map".format(
                params.twist_angle, params.transverse_angle, FLOQUET_ANGLE_LIMIT
            ),
            logger=utils.LOGGER,
        )
    if params.transverse_angle == 0:
        candidates = [_meridian(0.0), _meridian(np.pi / 2), _meridian(np.pi)]
        return _sorted(
            [FixedPoint(v, stability(v, params)) for v in candidates],
            degenerate=True,
            floquet_deviation=deviation,
        )
    half_transverse = Rotation.from_rotvec([params.transverse_angle / 2, 0.0, 0.0])

    def root_function(theta):
        return half_transverse.apply(twist(_meridian(theta), -params.twist_angle / 2))[
            ..., 1
        ]

    grid = np.linspace(0, np.pi, n_grid)
    values = root_function(grid)
    roots = list(grid[values == 0])
    brackets = np.flatnonzero(values[:-1] * values[1:] < 0)
    for i in brackets:
        roots.append(optimize.brentq(root_function, grid[i], grid[i + 1], xtol=1e-15))
    points = []
    for theta in roots:
        vector = _meridian(theta)
        residual = np.linalg.norm(cycle_map(vector, params) - vector)
        if residual >= tol:
            raise SearchError(
                "Fixed-point search at theta = {:.6f} stopped with residual "
                "{:.3g}".format(theta, residual)
            )
        points.append(FixedPoint(vector, stability(vector, params)))
    tasklogger.log_debug(
        "Found {} meridian fixed points at lambda_eff = {:.4g}".format(
            len(points), params.ratio
        ),
        logger=utils.LOGGER,
    )
    return _sorted(points, floquet_deviation=deviation)


def meridian_theta(points):
    """Initial tilts theta = arccos(z) of a FixedPointSet."""
    return np.array([p.theta for p in points])


def mean_field_energy(vectors, lambda_eff):
    """Classical energy per spin, -lambda_eff s_z^2 / 2 - s_x, of unit vectors."""
    vectors = np.asarray(vectors, dtype=float)
    return -lambda_eff * vectors[..., 2] ** 2 / 2 - vectors[..., 0]


@dataclass
class BifurcationResult:
    """Critical positions where C chi tau_r crosses h tau_x."""

    positions: np.ndarray
    lambda_eff: np.ndarray
    critical_positions: np.ndarray
    all_ferromagnetic: bool = False

    def to_frame(self):
        return pd.DataFrame({"x_um": self.positions, "lambda_eff": self.lambda_eff})

    def to_dict(self):
        return {
            "critical_positions_um": self.critical_positions,
            "all_ferromagnetic": self.all_ferromagnetic,
            "peak_lambda_eff": float(np.max(self.lambda_eff)),
        }


def bifurcation_scan(positions, chi, contrast, tau_r, transverse_angle):
    """Locate the paramagnetic to ferromagnetic boundary across a cloud.

    Parameters
    ----------
    positions : array-like, shape=[n_bins]
        Common, increasing position grid in um.
    chi : array-like, shape=[n_bins]
        Mean-field shift chi(x) in rad/us.
    contrast : array-like or float
        Contrast C(x).
    tau_r : float
        Interaction time per cycle in us.
    transverse_angle : float
        h tau_x per cycle, > 0.

    Returns
    -------
    result : BifurcationResult
        Grid-bracketed roots of C chi tau_r - h tau_x, linearly interpolated.
    """
    positions = np.asarray(positions, dtype=float)
    chi = np.asarray(chi, dtype=float)
    contrast = np.broadcast_to(np.asarray(contrast, dtype=float), chi.shape)
    if positions.shape != chi.shape:
        raise PreconditionError(
            "Expected chi and positions on a common grid, got shapes {} and {}".format(
                chi.shape, positions.shape
            )
        )
    if not transverse_angle > 0:
        raise PreconditionError(
            "Expected h*tau_x > 0, got {}".format(transverse_angle)
        )
    excess = contrast * chi * tau_r - transverse_angle
    critical = list(positions[excess == 0])
    for i in np.flatnonzero(excess[:-1] * excess[1:] < 0):
        fraction = excess[i] / (excess[i] - excess[i + 1])
        critical.append(positions[i] + fraction * (positions[i + 1] - positions[i]))
    return BifurcationResult(
        positions=positions,
        lambda_eff=contrast * chi * tau_r / transverse_angle,
        critical_positions=np.sort(critical),
        all_ferromagnetic=bool(np.all(excess > 0)),
    )


def overlay_curves(positions, lambda_eff):
    """Predicted fixed-point tilts versus position for phase-map overlays.

    Returns a frame with the paramagnetic branch at theta = pi/2 (and its
    stability) and the two ferromagnetic branches, NaN below threshold.
    """
    lambda_eff = np.asarray(lambda_eff, dtype=float)
    ferro = lambda_eff > 1
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(ferro, np.sqrt(1 - 1 / np.where(ferro, lambda_eff, 1) ** 2), np.nan)
    return pd.DataFrame(
        {
            "x_um": np.asarray(positions, dtype=float),
            "lambda_eff": lambda_eff,
            "theta_paramagnetic": np.full(lambda_eff.shape, np.pi / 2),
            "paramagnetic_stable": ~ferro,
            "theta_ferro_upper": np.arccos(z),
            "theta_ferro_lower": np.arccos(-z),
        }
    )


def fit_lambda(trajectory, transverse_angle, bounds=(-10.0, 10.0), n_grid=401):
    """Interaction-to-drive ratio that best reproduces measured trajectories.

    Parameters
    ----------
    trajectory : array-like, shape=[k + 1, n_states, 3]
        Normalized collective vectors S / (C S) after 0..k cycles.
    transverse_angle : float
        h tau_x per cycle.
    bounds : tuple, optional, default: (-10, 10)
    n_grid : int, optional, default: 401
        Coarse scan seeding the bounded refinement.

    Returns
    -------
    lambda_fit : float
    """
    trajectory = np.asarray(trajectory, dtype=float)
    k = trajectory.shape[0] - 1
    if k < 1:
        raise FitError("Lambda unidentifiable from a trajectory without cycles")

    def cost(lambda_):
        model = evolve_collective(lambda_, 1.0, transverse_angle, k, trajectory[0])
        return float(np.sum((model - trajectory) ** 2))

    grid = np.linspace(bounds[0], bounds[1], n_grid)
    best = int(np.argmin([cost(value) for value in grid]))
    lower, upper = grid[max(best - 1, 0)], grid[min(best + 1, n_grid - 1)]
    result = optimize.minimize_scalar(
        cost, bounds=(lower, upper), method="bounded", options={"xatol": 1e-10}
    )
    return float(result.x)
