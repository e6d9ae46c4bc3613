"""Pulse sequences for spin-echo Ramsey and Floquet experiments.

Every sequence starts from all atoms in |up>; the first event prepares the
tilted state. Microwave pulses are instantaneous rotations about an
equatorial axis.
"""

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .exceptions import PreconditionError


@dataclass(frozen=True)
class Dress:
    """Dressing light on for `duration` us."""

    duration: float

    def __post_init__(self):
        if not self.duration >= 0:
            raise PreconditionError(
                "Expected duration >= 0, got {}".format(self.duration)
            )


@dataclass(frozen=True)
class Rotate:
    """Right-handed rotation by `angle` about the equatorial axis at `axis_phase`."""

    axis_phase: float
    angle: float
    label: str = "pulse"


@dataclass(frozen=True)
class Readout:
    """Final pi/2 analysis pulse of fringe phase `phase`."""

    phase: float = 0.0


Event = Union[Dress, Rotate, Readout]


@dataclass
class PulseSequence:
    """Ordered events plus the protocol parameters that generated them."""

    events: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        readouts = [i for i, e in enumerate(self.events) if isinstance(e, Readout)]
        if len(readouts) > 1 or (readouts and readouts[0] != len(self.events) - 1):
            raise PreconditionError("A sequence may end in at most one Readout")

    def __len__(self):
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    @property
    def readout(self):
        if self.events and isinstance(self.events[-1], Readout):
            return self.events[-1]
        return None

    @property
    def dressing_time(self):
        return sum(e.duration for e in self.events if isinstance(e, Dress))

    def rotations(self, label=None):
        return [
            e
            for e in self.events
            if isinstance(e, Rotate) and (label is None or e.label == label)
        ]

    def total_rotation(self, label):
        return sum(abs(e.angle) for e in self.rotations(label))

    def echo_parity(self):
        """Number of echo pi pulses modulo 2."""
        return len(self.rotations("echo")) % 2

    def check_fringe(self):
        if self.readout is None:
            raise PreconditionError("Fringe analysis needs a sequence ending in Readout")


def prepare(theta, phi=0.0):
    """Rotation taking |up> to |theta, phi>."""
    return Rotate(axis_phase=np.pi / 2 - phi, angle=theta, label="prepare")


def echo_block(duration, echo_pulses=1):
    """Dressing interval with `echo_pulses` equally spaced pi pulses about +x.

    CPMG spacing (tau/2n, tau/n, ..., tau/2n) makes every s^z-linear shift
    cancel within the block.
    """
    if echo_pulses == 0:
        return [Dress(duration)]
    events = [Dress(duration / (2 * echo_pulses))]
    for pulse in range(echo_pulses):
        events.append(Rotate(axis_phase=0.0, angle=np.pi, label="echo"))
        spacing = 2 if pulse == echo_pulses - 1 else 1
        events.append(Dress(duration / (spacing * echo_pulses)))
    return events


def build_spin_echo_sequence(theta, tau_r, alpha=0.0):
    """Ramsey sequence with a single spin echo.

    Prepare |theta>, dress tau_r / 2, pi pulse, dress tau_r / 2, read out
    with fringe phase `alpha`.

    Parameters
    ----------
    theta : float
        Initial tilt in [0, pi].
    tau_r : float
        Total dressing time in us.
    alpha : float, optional, default: 0
        Phase of the final pi/2 pulse.

    Returns
    -------
    sequence : PulseSequence
    """
    if not 0 <= theta <= np.pi:
        raise PreconditionError("Expected theta in [0, pi], got {}".format(theta))
    if not tau_r >= 0:
        raise PreconditionError("Expected tau_r >= 0, got {}".format(tau_r))
    events = [prepare(theta)] + echo_block(tau_r, 1) + [Readout(alpha)]
    return PulseSequence(
        events,
        metadata={"kind": "spin_echo", "theta": theta, "tau_r": tau_r, "alpha": alpha},
    )


def build_floquet_sequence(
    theta,
    phi0,
    k,
    tau_r,
    tau_x,
    h,
    alpha=0.0,
    echo_pulses=1,
    refocus=False,
):
    """Floquet emulation of the transverse-field Ising model.

    The first interaction interval is split in two halves placed around the
    cycle train::

        E(tau_r/2) X E(tau_r) X ... E(tau_r) X E(tau_r/2)

    with `k` transverse steps X. Each E is an echo block, and X is generated
    by H_X = -h sum s^x, i.e. a rotation by h tau_x about -x. The symmetric
    split keeps the fixed points of the cycle map on the phi = 0 meridian.

    Parameters
    ----------
    theta, phi0 : float
        Initial state |theta, phi0>.
    k : int
        Number of Floquet cycles, >= 1.
    tau_r, tau_x : float
        Interaction and transverse-field times per cycle in us.
    h : float
        Transverse field in rad/us; h * tau_x must lie in [0, pi/2).
    alpha : float, optional, default: 0
        Readout fringe phase.
    echo_pulses : int, optional, default: 1
        Echo pi pulses per interaction interval (0 disables the echo).
    refocus : bool, optional, default: False
        With echoes on, a closing pi pulse fixes the number of echo pulses.
        By default the count is odd, so at h = 0 the sequence reduces to the
        single spin echo of total time k tau_r (one net flip). With `refocus`
        the count is even and the sequence equals k symmetric cycles with no
        net flip, i.e. the spin echo followed by a pi pulse about x.

    Returns
    -------
    sequence : PulseSequence
    """
    if not (isinstance(k, (int, np.integer)) and k >= 1):
        raise PreconditionError("Expected integer k >= 1, got {}".format(k))
    if not (tau_r >= 0 and tau_x >= 0):
        raise PreconditionError("Expected tau_r, tau_x >= 0")
    if not 0 <= h * tau_x < np.pi / 2:
        raise PreconditionError(
            "Expected h*tau_x in [0, pi/2), got {}".format(h * tau_x)
        )
    transverse = Rotate(axis_phase=np.pi, angle=h * tau_x, label="transverse")
    events = [prepare(theta, phi0)] + echo_block(tau_r / 2, echo_pulses)
    for cycle in range(k):
        events.append(transverse)
        events += echo_block(tau_r if cycle < k - 1 else tau_r / 2, echo_pulses)
    parity = PulseSequence(events).echo_parity()
    if echo_pulses > 0 and parity != (0 if refocus else 1):
        events.append(Rotate(axis_phase=0.0, angle=np.pi, label="echo"))
    events.append(Readout(alpha))
    return PulseSequence(
        events,
        metadata={
            "kind": "floquet",
            "theta": theta,
            "phi0": phi0,
            "k": int(k),
            "tau_r": tau_r,
            "tau_x": tau_x,
            "h": h,
            "alpha": alpha,
            "echo_pulses": echo_pulses,
            "refocus": refocus,
        },
    )
