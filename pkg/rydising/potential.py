"""Dressed pair potentials near a Forster resonance.

All frequencies are angular frequencies in rad/us and all lengths are in um.
"""

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import pandas as pd
import tasklogger
from scipy import optimize

from . import utils
from .exceptions import (
    BranchAmbiguityError,
    DomainError,
    NoRangeError,
    ResonanceError,
)

_BRANCH_STEPS = 64
_MIN_OVERLAP = 0.75


def isotropic(theta):
    """Default angular factor f(theta) = 1."""
    return np.ones_like(np.asarray(theta, dtype=float))


def calibrate_c3(interaction_range, detuning, forster_defect):
    """Dipole coupling C3 for which |V_R(r_c)| = |detuning|.

    Parameters
    ----------
    interaction_range : float
        Target r_c in um.
    detuning : float
        Dressing detuning in rad/us.
    forster_defect : float
        Forster defect in rad/us.

    Returns
    -------
    c3 : float
        Dipole coupling in rad um^3 / us.
    """
    detuning = abs(detuning)
    return interaction_range ** 3 * np.sqrt(detuning * (detuning + forster_defect))


def calibrated_range(dipole_coupling, detuning, forster_defect):
    """Isotropic interaction range of a dipole coupling, inverse of `calibrate_c3`."""
    detuning = abs(detuning)
    coupling = np.sqrt(detuning * (detuning + forster_defect))
    return (dipole_coupling / coupling) ** (1 / 3)


DEFAULT_FORSTER_DEFECT = float(utils.mhz_to_angular(42.0))
# with chi_calibration = 3.5 at 0.14 atoms/um^3 this gives chi = 2pi x 15 kHz
DEFAULT_INTERACTION_RANGE = 4.2
DEFAULT_C3 = float(
    calibrate_c3(
        DEFAULT_INTERACTION_RANGE, utils.mhz_to_angular(21.0), DEFAULT_FORSTER_DEFECT
    )
)


@dataclass(frozen=True)
class DressingParams:
    """Laser and atomic parameters defining the dressed potential.

    Parameters
    ----------
    rabi_frequency : float
        Rydberg Rabi frequency Omega in rad/us.
    detuning : float
        Signed detuning Delta in rad/us. Delta > 0 gives ferromagnetic J < 0.
    forster_defect : float, optional
        Forster defect Delta_F in rad/us.
    dipole_coupling : float, optional
        Effective C3 in rad um^3 / us.
    angular_factor : callable, optional
        f(theta) in [0, 1] of the polar angle between the pair axis and the
        quantization axis. Defaults to isotropic.
    """

    rabi_frequency: float
    detuning: float
    forster_defect: float = DEFAULT_FORSTER_DEFECT
    dipole_coupling: float = DEFAULT_C3
    angular_factor: Callable = field(default=isotropic, compare=False)

    def __post_init__(self):
        if not self.rabi_frequency > 0:
            raise DomainError(
                "Expected rabi_frequency > 0, got {}".format(self.rabi_frequency)
            )
        if self.detuning == 0 or not np.isfinite(self.detuning):
            raise DomainError(
                "Expected nonzero finite detuning, got {}".format(self.detuning)
            )
        if not self.forster_defect > 0:
            raise DomainError(
                "Expected forster_defect > 0, got {}".format(self.forster_defect)
            )
        if not self.dipole_coupling > 0:
            raise DomainError(
                "Expected dipole_coupling > 0, got {}".format(self.dipole_coupling)
            )
        f = np.asarray(self.angular_factor(np.linspace(0, np.pi, 181)), dtype=float)
        if np.any(~np.isfinite(f)) or np.any(f < 0) or np.any(f > 1):
            raise DomainError("angular_factor must map [0, pi] into [0, 1]")

    @classmethod
    def from_mhz(cls, rabi_frequency, detuning, forster_defect=42.0, **kwargs):
        """Build parameters from frequencies nu given in MHz (omega = 2 pi nu)."""
        return cls(
            rabi_frequency=float(utils.mhz_to_angular(rabi_frequency)),
            detuning=float(utils.mhz_to_angular(detuning)),
            forster_defect=float(utils.mhz_to_angular(forster_defect)),
            **kwargs
        )

    def with_rabi(self, rabi_frequency):
        return replace(self, rabi_frequency=rabi_frequency)

    def to_dict(self):
        return {
            "rabi_frequency": self.rabi_frequency,
            "detuning": self.detuning,
            "forster_defect": self.forster_defect,
            "dipole_coupling": self.dipole_coupling,
        }


@dataclass
class PairPotentialCurve:
    """Tabulated dressed interaction J(r)."""

    radii: np.ndarray
    values: np.ndarray
    method: str

    def __post_init__(self):
        self.radii = np.asarray(self.radii, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if np.any(np.diff(self.radii) <= 0):
            raise DomainError("radii must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise DomainError("J(r) must be finite at every tabulated radius")

    def to_frame(self):
        """Two-column table (r in um, J/2pi in kHz)."""
        return pd.DataFrame(
            {"r_um": self.radii, "J_over_2pi_kHz": utils.angular_to_khz(self.values)}
        )

    def to_text(self, path, config=None):
        return utils.write_table(self.to_frame(), path, config)


def _check_radius(r):
    r = np.asarray(r, dtype=float)
    if np.any(~(r > 0)):
        raise DomainError("Expected r > 0, got {}".format(r[~(r > 0)].min()))
    return r


def forster_pair_energy(r, theta, params):
    """Rydberg pair shift V_R(r, theta) of the two-channel Forster model.

    The branch connected to the PP pair state of [[0, c], [c, Delta_F]] with
    c = f(theta) C3 / r^3, written in a cancellation-free form.

    Parameters
    ----------
    r : float or array-like
        Interatomic distance in um.
    theta : float or array-like
        Polar angle of the pair axis.
    params : DressingParams

    Returns
    -------
    energy : float or np.ndarray
        V_R in rad/us, always <= 0.

    Raises
    ------
    DomainError
        If any r is not positive.
    """
    r = _check_radius(r)
    c = params.angular_factor(theta) * params.dipole_coupling / r ** 3
    delta_f = params.forster_defect
    energy = -2 * c ** 2 / (delta_f + np.sqrt(delta_f ** 2 + 4 * c ** 2))
    return energy if energy.ndim else float(energy)


def characteristic_strength(params):
    """Signed blockade plateau J0 = -Omega^4 / (8 Delta^3)."""
    return -params.rabi_frequency ** 4 / (8 * params.detuning ** 3)


def light_shift(rabi_frequency, detuning):
    """Single-atom ac Stark shift Omega^2 / (4 Delta) of |up>."""
    return np.asarray(rabi_frequency, dtype=float) ** 2 / (4 * detuning)


def single_atom_energy(rabi_frequency, detuning):
    """Dressed energy of |up> from [[0, Omega/2], [Omega/2, -Delta]]."""
    root = np.sign(detuning) * np.sqrt(detuning ** 2 + rabi_frequency ** 2)
    return rabi_frequency ** 2 / (2 * (detuning + root))


def _pair_hamiltonian(rabi_frequency, detuning, pair_shift):
    coupling = rabi_frequency / np.sqrt(2)
    return np.array(
        [
            [0.0, coupling, 0.0],
            [coupling, -detuning, coupling],
            [0.0, coupling, -2 * detuning + pair_shift],
        ]
    )


def _pair_energy(rabi_frequency, detuning, pair_shift):
    """Eigenvalue connected to |up, up> by continuation from pair_shift = 0."""
    if pair_shift == 0:
        return 2 * single_atom_energy(rabi_frequency, detuning)
    if np.sign(pair_shift - 2 * detuning) != np.sign(-2 * detuning):
        raise BranchAmbiguityError(
            "Pair shift {} crosses the anti-blockade resonance at 2*Delta = {}; "
            "the |up,up> branch is ambiguous".format(pair_shift, 2 * detuning)
        )
    target = abs(pair_shift) / (abs(pair_shift) + abs(detuning))
    steps = np.linspace(0, target, _BRANCH_STEPS + 1)
    shifts = np.sign(pair_shift) * steps * abs(detuning) / (1 - steps)
    shifts[-1] = pair_shift

    energies, vectors = np.linalg.eigh(
        _pair_hamiltonian(rabi_frequency, detuning, 0.0)
    )
    branch = np.argmax(np.abs(vectors[0]))
    previous = vectors[:, branch]
    for shift in shifts[1:]:
        energies, vectors = np.linalg.eigh(
            _pair_hamiltonian(rabi_frequency, detuning, shift)
        )
        overlaps = np.abs(previous @ vectors) ** 2
        branch = np.argmax(overlaps)
        if overlaps[branch] < _MIN_OVERLAP:
            raise BranchAmbiguityError(
                "Lost the |up,up> branch at V_R = {:.6g} rad/us "
                "(best overlap {:.3f})".format(shift, overlaps[branch])
            )
        previous = vectors[:, branch]
    return energies[branch]


def dressed_interaction_exact(r, theta, params):
    """Dressed interaction J(r) = E2(r) - 2 E1 by two-atom diagonalization.

    Parameters
    ----------
    r : float or array-like
        Interatomic distance in um.
    theta : float or array-like
        Polar angle of the pair axis.
    params : DressingParams

    Returns
    -------
    J : float or np.ndarray
        Interaction in rad/us.

    Raises
    ------
    DomainError
        If any r is not positive.
    BranchAmbiguityError
        If the |up,up>-connected eigenvalue cannot be followed to r.
    """
    shifts = np.asarray(forster_pair_energy(r, theta, params))
    single = single_atom_energy(params.rabi_frequency, params.detuning)
    out = np.empty(shifts.shape)
    for index, shift in np.ndenumerate(shifts):
        out[index] = (
            _pair_energy(params.rabi_frequency, params.detuning, shift) - 2 * single
        )
    return out if out.ndim else float(out)


def softcore_from_shift(pair_shift, rabi_frequency, detuning, guard=1e-3):
    """Soft-core closure J = J0 V / (V - 2 Delta) for known pair shifts.

    `rabi_frequency` may be an array broadcasting against `pair_shift`, which
    lets per-pair effective Rabi frequencies flow through unchanged.
    """
    pair_shift = np.asarray(pair_shift, dtype=float)
    distance = np.abs(pair_shift - 2 * detuning)
    if np.any(distance <= guard * abs(detuning)):
        raise ResonanceError(
            "V_R within {:g}|Delta| of the anti-blockade pole 2*Delta = {}".format(
                guard, 2 * detuning
            )
        )
    plateau = -np.asarray(rabi_frequency, dtype=float) ** 4 / (8 * detuning ** 3)
    return plateau * pair_shift / (pair_shift - 2 * detuning)


def dressed_interaction_softcore(r, theta, params, guard=1e-3):
    """Perturbative soft-core dressed interaction.

    Parameters
    ----------
    r : float or array-like
        Interatomic distance in um.
    theta : float or array-like
        Polar angle of the pair axis.
    params : DressingParams
    guard : float, optional, default: 1e-3
        Required relative distance |V_R - 2 Delta| / |Delta| from the pole.

    Returns
    -------
    J : float or np.ndarray
        Interaction in rad/us; plateaus at J0 for |V_R| >> |Delta|.

    Raises
    ------
    ResonanceError
        If any evaluation falls inside the pole guard band.
    """
    shifts = forster_pair_energy(r, theta, params)
    out = softcore_from_shift(shifts, params.rabi_frequency, params.detuning, guard)
    return out if np.ndim(out) else float(out)


def interaction_range(params, theta=0.0, rtol=1e-10):
    """Interaction range r_c solving |V_R(r_c, theta)| = |Delta|.

    Raises
    ------
    NoRangeError
        If the pair shift never reaches the detuning along `theta`.
    """
    strength = float(params.angular_factor(theta)) * params.dipole_coupling
    detuning = abs(params.detuning)
    if strength <= 0:
        raise NoRangeError(
            "Pair potential vanishes at theta = {}; no interaction range".format(theta)
        )

    def residual(r):
        return abs(forster_pair_energy(r, theta, params)) - detuning

    lower = 0.5 * (strength / (detuning + params.forster_defect)) ** (1 / 3)
    upper = (2 * strength / detuning) ** (1 / 3)
    if not (residual(lower) > 0 > residual(upper)):
        raise NoRangeError(
            "|V_R| = |Delta| = {} has no root in [{}, {}] um".format(
                detuning, lower, upper
            )
        )
    r_c = optimize.brentq(residual, lower, upper, rtol=rtol)
    tasklogger.log_debug(
        "r_c = {:.4f} um at |Delta| = {:.4g} rad/us".format(r_c, detuning),
        logger=utils.LOGGER,
    )
    return r_c


def potential_curve(params, radii, theta=0.0, method="softcore"):
    """Tabulate J(r) with the exact or soft-core method."""
    if method == "exact":
        values = dressed_interaction_exact(radii, theta, params)
    elif method == "softcore":
        values = dressed_interaction_softcore(radii, theta, params)
    else:
        raise ValueError(
            "method value {} not recognized. Choose from ['exact', 'softcore']".format(
                method
            )
        )
    return PairPotentialCurve(radii=radii, values=values, method=method)
