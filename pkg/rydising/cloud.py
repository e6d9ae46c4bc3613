"""Atom clouds, dressing-beam profiles and pairwise Ising couplings."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd
import tasklogger
from scipy import integrate
from sklearn.utils import check_random_state

from . import potential, utils
from .exceptions import DensityError, DomainError, GeometryError, IntegrationError

_MIN_SPACING = 0.01
_MIN_DISTANCE = 1e-3
_GEOMETRIES = ["box", "gaussian"]


@dataclass
class AtomCloud:
    """Frozen snapshot of atom positions.

    Attributes
    ----------
    positions : np.ndarray, shape=[n_atoms, 3]
        Coordinates in um. Axis 0 is the long axis of elongated clouds and
        the axis along which the dressing beam varies.
    density : float
        Stated (peak) density in atoms / um^3.
    geometry : str
        'box' or 'gaussian'.
    extent : np.ndarray, shape=[3]
        Box side lengths or Gaussian rms widths in um.
    periodic : bool
        Box clouds are periodically continued when True.
    temperature : float
        Metadata only, in uK.
    seed : int or None
    """

    positions: np.ndarray
    density: float
    geometry: str = "box"
    extent: Optional[np.ndarray] = None
    periodic: bool = False
    temperature: float = 23.0
    seed: Optional[int] = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        if self.positions.shape[0] < 1:
            raise DomainError("AtomCloud needs at least one atom")
        if not np.all(np.isfinite(self.positions)):
            raise GeometryError("Atom positions must be finite")
        if self.extent is not None:
            self.extent = np.broadcast_to(
                np.asarray(self.extent, dtype=float), (3,)
            ).copy()
        if self.periodic and (self.geometry != "box" or self.extent is None):
            raise GeometryError("Periodic distances need a box geometry with extent")

    @property
    def n_atoms(self):
        return self.positions.shape[0]

    def displacements(self):
        """Pair index arrays and separation vectors for every i < j."""
        i, j = np.triu_indices(self.n_atoms, k=1)
        separation = self.positions[i] - self.positions[j]
        if self.periodic:
            separation -= self.extent * np.round(separation / self.extent)
        return i, j, separation

    def image_shifts(self, cutoff=None):
        """Lattice translations whose images can lie within `cutoff` um.

        Non-periodic clouds, or no cutoff, give only the zero shift. The
        zero shift always comes first.
        """
        if not self.periodic or cutoff is None:
            return np.zeros((1, 3))
        reach = np.ceil(cutoff / self.extent + 0.5).astype(int)
        cells = np.stack(
            np.meshgrid(*[np.arange(-n, n + 1) for n in reach], indexing="ij"), -1
        ).reshape(-1, 3)
        # closest approach of an image of a minimum-image separation
        gap = np.maximum(np.abs(cells) - 0.5, 0) * self.extent
        cells = cells[np.linalg.norm(gap, axis=1) < cutoff]
        cells = cells[np.argsort(np.abs(cells).sum(axis=1), kind="stable")]
        return cells * self.extent

    def bin_positions(self, n_bins=41, axis=0, limits=None):
        """Assign every atom to one of `n_bins` equal bins along `axis`.

        Returns
        -------
        bins : np.ndarray, shape=[n_atoms]
            Bin index of each atom.
        centers : np.ndarray, shape=[n_bins]
            Bin centers in um.
        """
        coordinate = self.positions[:, axis]
        if limits is None:
            limits = (coordinate.min(), coordinate.max())
        edges = np.linspace(limits[0], limits[1], n_bins + 1)
        bins = np.clip(np.digitize(coordinate, edges[1:-1]), 0, n_bins - 1)
        return bins, 0.5 * (edges[1:] + edges[:-1])

    def to_frame(self, beam=None):
        """Snapshot table (id, x, y, z, local Rabi frequency)."""
        rabi = (
            beam.rabi(self.positions)
            if beam is not None
            else np.full(self.n_atoms, np.nan)
        )
        return pd.DataFrame(
            {
                "id": np.arange(self.n_atoms),
                "x_um": self.positions[:, 0],
                "y_um": self.positions[:, 1],
                "z_um": self.positions[:, 2],
                "rabi_rad_per_us": rabi,
            }
        )

    def to_text(self, path, beam=None, config=None):
        """Write the snapshot table with provenance headers."""
        return utils.write_table(self.to_frame(beam), path, config)

    @classmethod
    def from_frame(cls, frame, density, **kwargs):
        frame = frame.sort_values("id")
        return cls(
            positions=frame[["x_um", "y_um", "z_um"]].to_numpy(),
            density=density,
            **kwargs
        )


@dataclass(frozen=True)
class BeamProfile:
    """Gaussian-in-amplitude dressing beam, Omega(x) = Omega_0 exp(-x^2 / w^2).

    Parameters
    ----------
    peak_rabi : float
        Omega_0 in rad/us.
    waist : float, optional, default: 80
        w in um. An 80 um waist illuminates a region about 160 um wide.
    center : float, optional, default: 0
        Beam center along `axis` in um.
    axis : int, optional, default: 0
    """

    peak_rabi: float
    waist: float = 80.0
    center: float = 0.0
    axis: int = 0

    def __post_init__(self):
        if not self.peak_rabi > 0:
            raise DomainError("Expected peak_rabi > 0, got {}".format(self.peak_rabi))
        if not self.waist > 0:
            raise DomainError("Expected waist > 0, got {}".format(self.waist))

    def rabi_at(self, coordinate):
        """Local Rabi frequency at positions along the beam axis."""
        offset = np.asarray(coordinate, dtype=float) - self.center
        return self.peak_rabi * np.exp(-(offset ** 2) / self.waist ** 2)

    def rabi(self, positions):
        positions = np.asarray(positions, dtype=float).reshape(-1, 3)
        return self.rabi_at(positions[:, self.axis])


@dataclass
class CouplingMatrix:
    """Symmetric Ising couplings J_ij and single-atom light shifts delta_i."""

    couplings: np.ndarray
    light_shifts: np.ndarray = field(default=None)

    def __post_init__(self):
        self.couplings = np.atleast_2d(np.asarray(self.couplings, dtype=float))
        n = self.couplings.shape[0]
        if self.couplings.shape != (n, n):
            raise GeometryError(
                "couplings must be square. Got shape {}".format(self.couplings.shape)
            )
        if self.light_shifts is None:
            self.light_shifts = np.zeros(n)
        self.light_shifts = np.asarray(self.light_shifts, dtype=float).reshape(n)
        if not np.array_equal(self.couplings, self.couplings.T):
            raise GeometryError("couplings must be symmetric")
        if np.any(np.diag(self.couplings) != 0):
            raise GeometryError("couplings must have a zero diagonal")
        if np.any(self.couplings > 0) and np.any(self.couplings < 0):
            raise DomainError(
                "couplings change sign; the dressing is past the anti-blockade pole"
            )

    @property
    def n_atoms(self):
        return self.couplings.shape[0]

    def scaled(self, factor):
        return CouplingMatrix(self.couplings * factor, self.light_shifts)


def sample_cloud(
    geometry="box",
    density=0.14,
    n_atoms=None,
    extent=None,
    aspect=(1.0, 1.0, 1.0),
    periodic=None,
    temperature=23.0,
    seed=None,
):
    """Sample a frozen ideal-gas cloud.

    Parameters
    ----------
    geometry : {'box', 'gaussian'}, optional, default: 'box'
    density : float, optional, default: 0.14
        Uniform (box) or peak (gaussian) density in atoms / um^3.
    n_atoms : int, optional
        Atom number. The extent is then derived from density and `aspect`.
    extent : float or array-like, optional
        Box sides or Gaussian rms widths in um. The atom number is then
        Poisson distributed with mean density * volume.
    aspect : array-like, optional, default: (1, 1, 1)
        Relative extents used when only `n_atoms` is given.
    periodic : bool, optional
        Periodic continuation of the box. Defaults to True for boxes.
    temperature : float, optional, default: 23
        Metadata in uK.
    seed : int or None, optional

    Returns
    -------
    cloud : AtomCloud

    Raises
    ------
    DensityError
        If the mean spacing is below 0.01 um.
    """
    if geometry not in _GEOMETRIES:
        raise ValueError(
            "geometry value {} not recognized. Choose from {}".format(
                geometry, _GEOMETRIES
            )
        )
    if not density > 0:
        raise DomainError("Expected density > 0, got {}".format(density))
    if density ** (-1 / 3) < _MIN_SPACING:
        raise DensityError(
            "Mean spacing {:.3g} um is below {} um".format(
                density ** (-1 / 3), _MIN_SPACING
            )
        )
    if (n_atoms is None) == (extent is None):
        raise ValueError("Specify exactly one of n_atoms or extent")
    random_state = check_random_state(seed)
    aspect = np.asarray(aspect, dtype=float)

    if geometry == "box":
        unit_volume = np.prod(aspect)
    else:
        unit_volume = (2 * np.pi) ** 1.5 * np.prod(aspect)
    if extent is None:
        if n_atoms < 1:
            raise DomainError("Expected n_atoms >= 1, got {}".format(n_atoms))
        scale = (n_atoms / (density * unit_volume)) ** (1 / 3)
        extent = scale * aspect
    else:
        extent = np.broadcast_to(np.asarray(extent, dtype=float), (3,)).copy()
        volume = np.prod(extent) * unit_volume / np.prod(aspect)
        n_atoms = max(1, random_state.poisson(density * volume))

    if geometry == "box":
        positions = (random_state.uniform(size=(n_atoms, 3)) - 0.5) * extent
    else:
        positions = random_state.normal(size=(n_atoms, 3)) * extent
    if periodic is None:
        periodic = geometry == "box"
    tasklogger.log_debug(
        "Sampled {} atoms in a {} cloud of extent {}".format(
            n_atoms, geometry, np.round(extent, 3)
        ),
        logger=utils.LOGGER,
    )
    return AtomCloud(
        positions=positions,
        density=density,
        geometry=geometry,
        extent=extent,
        periodic=periodic,
        temperature=temperature,
        seed=seed,
    )


def coupling_matrix(
    cloud, params, beam=None, chi_calibration=1.0, guard=1e-3, image_cutoff=6.0
):
    """Pairwise soft-core couplings with local Rabi frequencies.

    J_ij uses Omega_eff = sqrt(Omega(x_i) Omega(x_j)) so that J scales as
    Omega_i^2 Omega_j^2, and delta_i = Omega(x_i)^2 / (4 Delta). In a
    periodic box J_ij sums over every image of atom j within the cutoff.

    Parameters
    ----------
    cloud : AtomCloud
    params : DressingParams
        Supplies the detuning and pair potential; its Rabi frequency is
        used everywhere when `beam` is None.
    beam : BeamProfile, optional
    chi_calibration : float, optional, default: 1
        Multiplier on every J_ij.
    guard : float, optional, default: 1e-3
        Pole guard band forwarded to the soft-core closure.
    image_cutoff : float or None, optional, default: 6
        Image-sum radius in units of the isotropic interaction range. None
        keeps the minimum image only.

    Returns
    -------
    couplings : CouplingMatrix

    Raises
    ------
    GeometryError
        If two atoms are closer than 1e-3 um.
    """
    if beam is None:
        rabi = np.full(cloud.n_atoms, params.rabi_frequency)
    else:
        rabi = beam.rabi(cloud.positions)
    couplings = np.zeros((cloud.n_atoms, cloud.n_atoms))
    if cloud.n_atoms > 1:
        i, j, separation = cloud.displacements()
        distance = np.linalg.norm(separation, axis=1)
        if np.any(distance < _MIN_DISTANCE):
            raise GeometryError(
                "Atoms closer than {} um: minimum distance {:.3g} um".format(
                    _MIN_DISTANCE, distance.min()
                )
            )
        rabi_eff = np.sqrt(rabi[i] * rabi[j])
        cutoff = None
        if image_cutoff is not None:
            cutoff = image_cutoff * potential.calibrated_range(
                params.dipole_coupling, params.detuning, params.forster_defect
            )
        values = np.zeros(len(i))
        for shift in cloud.image_shifts(cutoff):
            image = separation + shift
            distance = np.linalg.norm(image, axis=1)
            near = distance < cutoff if np.any(shift) else np.ones(len(i), bool)
            values[near] += _pair_couplings(
                image[near], distance[near], rabi_eff[near], params, guard
            )
        couplings[i, j] = chi_calibration * values
        couplings[j, i] = chi_calibration * values
    return CouplingMatrix(
        couplings, potential.light_shift(rabi, params.detuning)
    )


def _pair_couplings(separation, distance, rabi_eff, params, guard):
    theta = np.arccos(np.clip(separation[:, 2] / distance, -1, 1))
    shift = potential.forster_pair_energy(distance, theta, params)
    return potential.softcore_from_shift(shift, rabi_eff, params.detuning, guard)


def uniform_couplings(n_atoms, coupling, light_shift=0.0):
    """All-to-all couplings J_ij = `coupling` (one-axis twisting limit)."""
    couplings = np.full((n_atoms, n_atoms), float(coupling))
    np.fill_diagonal(couplings, 0)
    return CouplingMatrix(couplings, np.full(n_atoms, float(light_shift)))


def sampled_chi(couplings):
    """Mean-field shift -1/2 <sum_j J_ij> of one realization, in rad/us."""
    return -0.5 * np.mean(np.sum(couplings.couplings, axis=1))


def _angular_nodes(params, n_nodes=32):
    f = params.angular_factor(np.linspace(0, np.pi, 181))
    if np.allclose(f, f[0]):
        return np.array([np.pi / 2]), np.array([1.0])
    # Gauss-Legendre in cos(theta), weights normalized to the solid-angle average
    nodes, weights = np.polynomial.legendre.leggauss(n_nodes)
    return np.arccos(nodes), weights / 2


def meanfield_chi(density, params, method="quadrature", n_samples=100000, seed=None):
    """Mean-field shift chi_th = -(rho / 2) int J(r) d^3r.

    Parameters
    ----------
    density : float
        Atom density in atoms / um^3.
    params : DressingParams
    method : {'quadrature', 'montecarlo'}, optional, default: 'quadrature'
        Radial quadrature of 4 pi int J r^2 dr (averaged over the pair
        angle), or importance-sampled Monte Carlo over pair separations.
    n_samples : int, optional, default: 100000
        Monte Carlo sample count.
    seed : int or None, optional

    Returns
    -------
    chi : float
        chi_th in rad/us.

    Raises
    ------
    IntegrationError
        If the integral does not converge.
    """
    if not density > 0:
        raise DomainError("Expected density > 0, got {}".format(density))
    with tasklogger.log_task("chi_th ({})".format(method), logger=utils.LOGGER):
        if method == "quadrature":
            integral = _volume_integral_quadrature(params)
        elif method == "montecarlo":
            integral = _volume_integral_montecarlo(params, n_samples, seed)
        else:
            raise ValueError(
                "method value {} not recognized. "
                "Choose from ['quadrature', 'montecarlo']".format(method)
            )
    if not np.isfinite(integral):
        raise IntegrationError("Volume integral of J(r) is not finite")
    return -0.5 * density * integral


def _volume_integral_quadrature(params):
    thetas, weights = _angular_nodes(params)
    total = 0.0
    for theta, weight in zip(thetas, weights):
        if params.angular_factor(theta) == 0:
            continue
        r_c = potential.interaction_range(params, theta)

        def integrand(r):
            return potential.dressed_interaction_softcore(r, theta, params) * r ** 2

        radial = 0.0
        for lower, upper in [(0, r_c), (r_c, 10 * r_c), (10 * r_c, np.inf)]:
            result = integrate.quad(integrand, lower, upper, full_output=1, limit=200)
            if len(result) > 3:
                raise IntegrationError(
                    "Radial quadrature failed on [{}, {}] um: {}".format(
                        lower, upper, result[3]
                    )
                )
            radial += result[0]
        total += weight * 4 * np.pi * radial
    return total


def _volume_integral_montecarlo(params, n_samples, seed):
    random_state = check_random_state(seed)
    scale = potential.interaction_range(params, np.pi / 2)
    # Cauchy-like radial proposal p(r) = 2 / (pi s (1 + (r/s)^2)) on (0, inf]
    u = random_state.uniform(size=n_samples)
    r = scale * np.tan(0.5 * np.pi * (1 - u))
    theta = np.arccos(random_state.uniform(-1, 1, size=n_samples))
    proposal = 2 / (np.pi * scale * (1 + (r / scale) ** 2))
    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
        values = potential.dressed_interaction_softcore(r, theta, params)
        samples = np.where(values == 0, 0.0, 4 * np.pi * values * r ** 2 / proposal)
    if not np.all(np.isfinite(samples)):
        raise IntegrationError("Monte Carlo integrand produced non-finite samples")
    return np.mean(samples)


def interaction_sphere_count(density, interaction_range):
    """Mean atom number N_c = rho (4/3) pi r_c^3 inside one interaction sphere."""
    if not density > 0:
        raise DomainError("Expected density > 0, got {}".format(density))
    if not interaction_range > 0:
        raise DomainError(
            "Expected interaction_range > 0, got {}".format(interaction_range)
        )
    return density * 4 / 3 * np.pi * interaction_range ** 3
