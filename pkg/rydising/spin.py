# Spin dynamics under Rydberg-dressed Ising interactions.
#
# Three interchangeable backends execute a PulseSequence: per-spin mean-field
# Bloch vectors, the exact 2^N state vector, and a single collective spin.

from dataclasses import dataclass

import graphtools.utils
import numpy as np
import pandas as pd
import tasklogger
from graphtools.estimator import attribute
from scipy import integrate
from sklearn.base import BaseEstimator
from sklearn.utils import check_random_state

from . import utils
from .exceptions import CapacityError, DomainError, PreconditionError, StiffnessError
from .sequence import Dress, Readout, Rotate

_PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
}


@dataclass(frozen=True)
class DecoherenceModel:
    """Phenomenological contrast and atom-number decay during dressing.

    Parameters
    ----------
    contrast_decay_rate : float, optional, default: 0
        Transverse coherence decays as exp(-rate * dressing time), 1/us.
    atom_loss_rate : float, optional, default: 0
        Surviving fraction is exp(-rate * dressing time), 1/us.
    """

    contrast_decay_rate: float = 0.0
    atom_loss_rate: float = 0.0

    def __post_init__(self):
        if self.contrast_decay_rate < 0 or self.atom_loss_rate < 0:
            raise DomainError("Decoherence rates must be >= 0")

    def contrast(self, dressing_time):
        return np.exp(-self.contrast_decay_rate * np.asarray(dressing_time))

    def atom_fraction(self, dressing_time):
        return np.exp(-self.atom_loss_rate * np.asarray(dressing_time))


class SpinConfiguration(object):
    """Common interface of the three spin representations."""

    def mean_spin(self):
        """Normalized collective spin <S>/S, whose length is the contrast."""
        raise NotImplementedError

    def contrast(self):
        return float(np.linalg.norm(self.mean_spin()))

    def phase(self):
        return float(utils.bloch_phase(self.mean_spin()))


class BlochSet(SpinConfiguration):
    """Per-spin Bloch vectors of norm <= 1."""

    def __init__(self, vectors):
        self.vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
        if np.any(np.linalg.norm(self.vectors, axis=1) > 1 + 1e-9):
            raise DomainError("Bloch vectors must have norm <= 1")

    @property
    def n_atoms(self):
        return self.vectors.shape[0]

    def mean_spin(self):
        return self.vectors.mean(axis=0)


class StateVector(SpinConfiguration):
    """Normalized 2^N amplitudes, |up> = index 0 on every spin.

    `coherence` multiplies single-spin transverse expectation values and
    carries the phenomenological contrast decay.
    """

    def __init__(self, amplitudes, coherence=1.0):
        amplitudes = np.asarray(amplitudes, dtype=complex)
        n_atoms = int(round(np.log2(amplitudes.size)))
        if 2 ** n_atoms != amplitudes.size:
            raise DomainError("State vector length must be a power of two")
        norm = np.linalg.norm(amplitudes)
        if abs(norm - 1) > 1e-12:
            raise DomainError("State vector norm {} differs from 1".format(norm))
        self.amplitudes = amplitudes.reshape((2,) * n_atoms)
        self.coherence = coherence

    @property
    def n_atoms(self):
        return self.amplitudes.ndim

    def single_spin_expectations(self):
        """Array [n_atoms, 3] of <sigma_x>, <sigma_y>, <sigma_z> per spin."""
        out = np.empty((self.n_atoms, 3))
        for i in range(self.n_atoms):
            reduced = np.moveaxis(self.amplitudes, i, 0).reshape(2, -1)
            overlap = np.vdot(reduced[0], reduced[1])
            out[i] = [
                2 * overlap.real * self.coherence,
                2 * overlap.imag * self.coherence,
                np.sum(np.abs(reduced[0]) ** 2) - np.sum(np.abs(reduced[1]) ** 2),
            ]
        return out

    def mean_spin(self):
        return self.single_spin_expectations().mean(axis=0)


class Collective(SpinConfiguration):
    """Single unit vector with a separate contrast C in [0, 1]."""

    def __init__(self, vector, contrast=1.0):
        vector = np.asarray(vector, dtype=float)
        self.vector = vector / np.linalg.norm(vector)
        if not 0 <= contrast <= 1:
            raise DomainError("Expected contrast in [0, 1], got {}".format(contrast))
        self._contrast = contrast

    def mean_spin(self):
        return self._contrast * self.vector


def initial_configuration(kind, n_atoms=1, theta=0.0, phi=0.0):
    """Product state |theta, phi> in the requested representation.

    Parameters
    ----------
    kind : {'meanfield', 'exact', 'collective'}
    n_atoms : int, optional, default: 1
    theta, phi : float, optional
    """
    graphtools.utils.check_in(["meanfield", "exact", "collective"], kind=kind)
    vector = utils.bloch_vector(theta, phi)
    if kind == "collective":
        return Collective(vector)
    if kind == "meanfield":
        return BlochSet(np.tile(vector, (n_atoms, 1)))
    single = np.array([np.exp(1j * phi) * np.cos(theta / 2), np.sin(theta / 2)])
    amplitudes = single
    for _ in range(n_atoms - 1):
        amplitudes = np.kron(amplitudes, single)
    return StateVector(amplitudes)


@dataclass
class Trajectory:
    """Records at every event boundary plus the final configuration."""

    records: pd.DataFrame
    final: SpinConfiguration
    readout_phase: float = None

    def to_frame(self):
        return self.records


class _Recorder(object):
    def __init__(self, decoherence):
        self.decoherence = decoherence
        self.rows = []

    def record(self, index, time, configuration):
        spin = configuration.mean_spin()
        self.rows.append(
            {
                "event": index,
                "time_us": time,
                "Sx": spin[0],
                "Sy": spin[1],
                "Sz": spin[2],
                "C": np.linalg.norm(spin),
                "atom_fraction": float(self.decoherence.atom_fraction(time)),
            }
        )

    def finish(self, configuration, sequence):
        readout = sequence.readout
        return Trajectory(
            records=pd.DataFrame(self.rows),
            final=configuration,
            readout_phase=None if readout is None else readout.phase,
        )


class _Evolver(BaseEstimator):
    """Base pulse-sequence evolver: `fit` couplings, then `transform` a sequence."""

    def __init__(self, decoherence=None, include_linear=True, verbose=False):
        self.decoherence = decoherence
        self.include_linear = include_linear
        self.verbose = verbose
        self.couplings = None

    def fit(self, couplings):
        self.couplings = couplings
        return self

    def _check_fit(self):
        if self.couplings is None:
            raise ValueError("Evolver must be `fit` before running `transform`.")

    def _decoherence(self):
        return DecoherenceModel() if self.decoherence is None else self.decoherence

    def fit_transform(self, couplings, sequence):
        return self.fit(couplings).transform(sequence)

    def transform(self, sequence):
        self._check_fit()
        tasklogger.set_level(int(self.verbose), logger=utils.LOGGER)
        decoherence = self._decoherence()
        recorder = _Recorder(decoherence)
        state = self._initial_state()
        time = 0.0
        recorder.record(0, time, self._configuration(state, time))
        for index, event in enumerate(sequence, start=1):
            if isinstance(event, Dress):
                state = self._dress(state, event.duration, time)
                time += event.duration
            elif isinstance(event, Rotate):
                state = self._rotate(state, event.axis_phase, event.angle)
            elif isinstance(event, Readout):
                continue
            recorder.record(index, time, self._configuration(state, time))
        return recorder.finish(self._configuration(state, time), sequence)


class MeanFieldEvolver(_Evolver):
    """Per-spin mean-field precession integrated with fixed-step RK4.

    During dressing each spin precesses about z with
    B_i = sum_j J_ij (z_j + 1) / 2 + delta_i.

    Parameters
    ----------
    decoherence : DecoherenceModel, optional
    include_linear : bool, optional, default: True
        Keep the s^z-linear parts of the dressed Hamiltonian and the light
        shifts. False evolves under sum J_ij s^z_i s^z_j only.
    max_step_angle : float, optional, default: 0.01
        Largest precession angle per RK4 step.
    max_steps : int, optional, default: 10**6
        Steps allowed per dressing event.
    verbose : bool, optional, default: False
    """

    max_step_angle = attribute(
        "max_step_angle",
        default=0.01,
        doc="Largest precession angle per RK4 step",
        on_set=graphtools.utils.check_positive,
    )
    max_steps = attribute(
        "max_steps",
        default=10 ** 6,
        doc="Steps allowed per dressing event",
        on_set=[graphtools.utils.check_int, graphtools.utils.check_positive],
    )

    def __init__(
        self,
        decoherence=None,
        include_linear=True,
        max_step_angle=0.01,
        max_steps=10 ** 6,
        verbose=False,
    ):
        self.max_step_angle = max_step_angle
        self.max_steps = max_steps
        super().__init__(
            decoherence=decoherence, include_linear=include_linear, verbose=verbose
        )

    def _initial_state(self):
        vectors = np.zeros((self.couplings.n_atoms, 3))
        vectors[:, 2] = 1
        return vectors

    def _configuration(self, state, time):
        return BlochSet(state)

    def _field(self, vectors):
        z = vectors[:, 2]
        if self.include_linear:
            return self.couplings.couplings @ ((z + 1) / 2) + self.couplings.light_shifts
        return self.couplings.couplings @ (z / 2)

    def _dress(self, vectors, duration, time):
        if duration == 0:
            return vectors
        field = self._field(vectors)
        largest = np.max(np.abs(field))
        n_steps = max(20, int(np.ceil(largest * duration / self.max_step_angle)))
        if n_steps > self.max_steps:
            raise StiffnessError(
                "Dressing for {} us at max|B| = {:.4g} rad/us needs {} RK4 steps "
                "(max_steps = {})".format(duration, largest, n_steps, self.max_steps)
            )
        step = duration / n_steps

        def derivative(s):
            return field[:, None] * np.stack(
                [-s[:, 1], s[:, 0], np.zeros(len(s))], axis=1
            )

        for _ in range(n_steps):
            k1 = derivative(vectors)
            k2 = derivative(vectors + 0.5 * step * k1)
            k3 = derivative(vectors + 0.5 * step * k2)
            k4 = derivative(vectors + step * k3)
            vectors = vectors + step / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(vectors)):
            raise StiffnessError(
                "RK4 produced non-finite Bloch vectors (step {:.3g} us)".format(step)
            )
        tasklogger.log_debug(
            "Dressed {} us in {} RK4 steps".format(duration, n_steps),
            logger=utils.LOGGER,
        )
        damping = self._decoherence().contrast(duration)
        vectors = vectors.copy()
        vectors[:, :2] *= damping
        return vectors

    def _rotate(self, vectors, axis_phase, angle):
        return utils.rotate(vectors, utils.axis_vector(axis_phase), angle)


class ExactEvolver(_Evolver):
    """Exact state-vector evolution.

    Dressing is diagonal in the z basis, so it reduces to per-basis-state
    phase accumulation; microwave pulses act identically on every spin.

    Parameters
    ----------
    decoherence : DecoherenceModel, optional
    include_linear : bool, optional, default: True
        Evolve under sum J_ij n_i n_j + sum delta_i n_i with n = s^z + 1/2,
        or under sum J_ij s^z_i s^z_j only when False.
    max_atoms : int, optional, default: 14
    verbose : bool, optional, default: False
    """

    max_atoms = attribute(
        "max_atoms",
        default=14,
        doc="Largest spin count the state vector may hold",
        on_set=[graphtools.utils.check_int, graphtools.utils.check_positive],
    )

    def __init__(
        self, decoherence=None, include_linear=True, max_atoms=14, verbose=False
    ):
        self.max_atoms = max_atoms
        super().__init__(
            decoherence=decoherence, include_linear=include_linear, verbose=verbose
        )

    def fit(self, couplings):
        if couplings.n_atoms > self.max_atoms:
            raise CapacityError(
                "Exact backend holds at most {} atoms. Got {}".format(
                    self.max_atoms, couplings.n_atoms
                )
            )
        super().fit(couplings)
        self.energies_ = self._diagonal_energies()
        return self

    def _diagonal_energies(self):
        n = self.couplings.n_atoms
        basis = np.arange(2 ** n)[:, None]
        bits = (basis >> np.arange(n - 1, -1, -1)) & 1
        occupation = 1.0 - bits
        if not self.include_linear:
            occupation = occupation - 0.5
        energies = 0.5 * np.einsum(
            "bi,ij,bj->b", occupation, self.couplings.couplings, occupation
        )
        if self.include_linear:
            energies += occupation @ self.couplings.light_shifts
        return energies.reshape((2,) * n)

    def _initial_state(self):
        amplitudes = np.zeros((2,) * self.couplings.n_atoms, dtype=complex)
        amplitudes[(0,) * self.couplings.n_atoms] = 1
        return amplitudes

    def _configuration(self, state, time):
        return StateVector(state, coherence=float(self._decoherence().contrast(time)))

    def _dress(self, amplitudes, duration, time):
        return amplitudes * np.exp(-1j * self.energies_ * duration)

    def _rotate(self, amplitudes, axis_phase, angle):
        generator = np.cos(axis_phase) * _PAULI["x"] + np.sin(axis_phase) * _PAULI["y"]
        unitary = np.cos(angle / 2) * np.eye(2) - 1j * np.sin(angle / 2) * generator
        for i in range(amplitudes.ndim):
            amplitudes = np.moveaxis(
                np.tensordot(unitary, amplitudes, axes=([1], [i])), 0, i
            )
        return amplitudes


class CollectiveEvolver(_Evolver):
    """Single collective spin of a uniform all-to-all system.

    Each spin sees B = -chi (C u_z + 1) + light_shift during dressing, so
    an echo block twists by -chi tau u_z C about z.

    Parameters
    ----------
    chi : float
        Mean-field shift chi = -1/2 sum_j J_ij in rad/us.
    light_shift : float, optional, default: 0
    decoherence : DecoherenceModel, optional
    include_linear : bool, optional, default: True
    """

    def __init__(self, chi, light_shift=0.0, decoherence=None, include_linear=True):
        self.chi = chi
        self.light_shift = light_shift
        super().__init__(decoherence=decoherence, include_linear=include_linear)

    def _check_fit(self):
        pass

    def _initial_state(self):
        return np.array([0.0, 0.0, 1.0]), 1.0

    def _configuration(self, state, time):
        vector, contrast = state
        return Collective(vector, contrast)

    def _dress(self, state, duration, time):
        vector, contrast = state
        z = contrast * vector[2]
        if self.include_linear:
            field = -self.chi * (z + 1) + self.light_shift
        else:
            field = -self.chi * z
        vector = utils.rotate_z(vector, field * duration)
        # transverse damping shortens <S> and tilts the unit vector toward z
        spin = contrast * vector
        spin[:2] *= self._decoherence().contrast(duration)
        length = np.linalg.norm(spin)
        if length == 0:
            return vector, 0.0
        return spin / length, min(1.0, length)

    def _rotate(self, state, axis_phase, angle):
        vector, contrast = state
        return utils.rotate(vector, utils.axis_vector(axis_phase), angle), contrast


def evolve_meanfield(couplings, sequence, decoherence=None, **kwargs):
    """Mean-field trajectory of a pulse sequence. See MeanFieldEvolver."""
    return MeanFieldEvolver(decoherence=decoherence, **kwargs).fit_transform(
        couplings, sequence
    )


def evolve_exact(couplings, sequence, decoherence=None, **kwargs):
    """Exact state-vector trajectory of a pulse sequence. See ExactEvolver."""
    return ExactEvolver(decoherence=decoherence, **kwargs).fit_transform(
        couplings, sequence
    )


def twist(vectors, angle):
    """One-axis twist: rotate about z by -angle * s_z."""
    vectors = np.asarray(vectors, dtype=float)
    return utils.rotate_z(vectors, -angle * vectors[..., 2])


def transverse_rotation(vectors, angle):
    """Step generated by H_X = -h s^x: rotation by -angle about +x."""
    return utils.rotate(vectors, [1.0, 0.0, 0.0], -angle)


def stroboscopic_map(vectors, twist_angle, transverse_angle, contrast=1.0, symmetric=True):
    """One Floquet cycle on unit vectors.

    With `symmetric` the cycle is Tw(a/2) X Tw(a/2), matching the split
    first interaction interval of the Floquet sequence; otherwise X Tw(a).
    The twist angle is a = C * chi * tau_r.
    """
    angle = contrast * twist_angle
    if symmetric:
        vectors = twist(vectors, angle / 2)
        vectors = transverse_rotation(vectors, transverse_angle)
        return twist(vectors, angle / 2)
    return transverse_rotation(twist(vectors, angle), transverse_angle)


def evolve_collective(
    lambda_,
    contrast,
    transverse_angle,
    k,
    initial,
    symmetric=True,
    chi_decay_per_cycle=0.0,
):
    """Collective stroboscopic trajectory of k Floquet cycles.

    Parameters
    ----------
    lambda_ : float
        Interaction-to-drive ratio chi tau_r / (h tau_x).
    contrast : float
        C in [0, 1]; the twist per cycle is C * lambda_ * transverse_angle.
    transverse_angle : float
        h tau_x per cycle.
    k : int
        Number of cycles.
    initial : array-like, shape=[..., 3]
        Initial unit vectors.
    symmetric : bool, optional, default: True
    chi_decay_per_cycle : float, optional, default: 0
        Fractional loss of interaction strength per cycle.

    Returns
    -------
    trajectory : np.ndarray, shape=[k + 1, ..., 3]
    """
    if not np.isfinite(lambda_):
        raise PreconditionError("Expected finite lambda, got {}".format(lambda_))
    if not 0 <= contrast <= 1:
        raise DomainError("Expected contrast in [0, 1], got {}".format(contrast))
    vectors = np.asarray(initial, dtype=float)
    norms = np.linalg.norm(vectors, axis=-1)
    if np.any(np.abs(norms - 1) > 1e-9):
        raise PreconditionError("Collective vectors must be unit vectors")
    trajectory = [vectors]
    for cycle in range(k):
        strength = (1 - chi_decay_per_cycle) ** cycle
        vectors = stroboscopic_map(
            vectors,
            strength * lambda_ * transverse_angle,
            transverse_angle,
            contrast=contrast,
            symmetric=symmetric,
        )
        trajectory.append(vectors)
    return np.stack(trajectory)


def flow_lines(lambda_eff, initial, duration=2 * np.pi, n_points=200):
    """Continuous mean-field flow ds/dt = b x s with b = (-1, 0, -lambda_eff s_z).

    Time is in units of 1 / (h tau_x) per cycle, so `duration` = 2 pi is one
    free precession period. Returns an array [n_lines, n_points, 3].
    """
    initial = np.atleast_2d(np.asarray(initial, dtype=float))

    def derivative(t, s):
        b = np.array([-1.0, 0.0, -lambda_eff * s[2]])
        return np.cross(b, s)

    times = np.linspace(0, duration, n_points)
    lines = []
    for start in initial:
        solution = integrate.solve_ivp(
            derivative,
            (0, duration),
            start,
            t_eval=times,
            method="DOP853",
            rtol=1e-10,
            atol=1e-12,
        )
        lines.append(solution.y.T)
    return np.stack(lines)


@dataclass
class FringeSamples:
    """Ramsey fringe P_up(alpha), optionally with shot counts."""

    alphas: np.ndarray
    p_up: np.ndarray
    shots: int = None

    def to_frame(self):
        return pd.DataFrame({"alpha": self.alphas, "p_up": self.p_up})


def fringe_probability(mean_spin, alphas):
    """P_up(alpha) = 1/2 [1 + x cos(alpha) - y sin(alpha)]."""
    alphas = np.asarray(alphas, dtype=float)
    return 0.5 * (1 + mean_spin[0] * np.cos(alphas) - mean_spin[1] * np.sin(alphas))


def simulate_fringe(configuration, alphas, shots=None, seed=None):
    """Ramsey fringe of a final configuration.

    Parameters
    ----------
    configuration : SpinConfiguration or array-like, shape=[3]
        Final configuration or its mean spin <S>/S.
    alphas : array-like
        Readout phases.
    shots : int, optional
        Atoms detected per phase point. Noiseless when None.
    seed : int or None, optional

    Returns
    -------
    fringe : FringeSamples
    """
    if isinstance(configuration, SpinConfiguration):
        spin = configuration.mean_spin()
    else:
        spin = np.asarray(configuration, dtype=float)
    alphas = np.asarray(alphas, dtype=float)
    p_up = fringe_probability(spin, alphas)
    if shots is None:
        return FringeSamples(alphas, p_up)
    if not (isinstance(shots, (int, np.integer)) and shots > 0):
        raise PreconditionError("Expected shots > 0, got {}".format(shots))
    random_state = check_random_state(seed)
    counts = random_state.binomial(shots, np.clip(p_up, 0, 1))
    return FringeSamples(alphas, counts / shots, shots=shots)
