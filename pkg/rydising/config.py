"""Experiment configuration: JSON schema, defaults and validation.

Every physical key carries its unit as a suffix. Frequencies are given in
MHz as nu and converted to angular frequencies omega = 2 pi nu in rad/us.
"""

import copy
import json
import numbers
from functools import partial

import graphtools.utils
import numpy as np

from . import utils
from .cloud import BeamProfile
from .exceptions import ConfigError
from .potential import DEFAULT_C3, DressingParams, calibrate_c3
from .spin import DecoherenceModel

BACKENDS = ["meanfield", "exact", "collective"]


def _number(**params):
    for name, value in params.items():
        if isinstance(value, bool) or not isinstance(value, numbers.Real):
            raise ValueError("Expected {} to be a number, got {!r}".format(name, value))
        if not np.isfinite(value):
            raise ValueError("Expected {} to be finite, got {}".format(name, value))


def _nonnegative(**params):
    _number(**params)
    for name, value in params.items():
        if value < 0:
            raise ValueError("Expected {} >= 0, got {}".format(name, value))


def _positive(**params):
    _number(**params)
    graphtools.utils.check_positive(**params)


def _count(**params):
    for name, value in params.items():
        if isinstance(value, bool):
            raise ValueError("Expected {} to be an integer, got {!r}".format(name, value))
    graphtools.utils.check_int(**params)
    graphtools.utils.check_positive(**params)


def _nonnegative_int(**params):
    _nonnegative(**params)
    for name, value in params.items():
        if not isinstance(value, numbers.Integral):
            raise ValueError("Expected {} to be an integer, got {!r}".format(name, value))


def _optional(check, **params):
    graphtools.utils.check_if_not(None, check, **params)


def _listed(check, minimum=1, **params):
    for name, value in params.items():
        if not isinstance(value, list) or len(value) < minimum:
            raise ValueError(
                "Expected {} to be a list of at least {} values, got {!r}".format(
                    name, minimum, value
                )
            )
        for item in value:
            check(**{name: item})


def _string(**params):
    for name, value in params.items():
        if not isinstance(value, str):
            raise ValueError("Expected {} to be a string, got {!r}".format(name, value))


#: section -> key -> (default, validator)
SCHEMA = {
    "dressing": {
        "rabi_frequency_MHz": (1.9, _positive),
        "detuning_MHz": (21.0, _number),
        "forster_defect_MHz": (42.0, _positive),
        "dipole_coupling_MHz_um3": (None, partial(_optional, _positive)),
        "interaction_range_um": (None, partial(_optional, _positive)),
    },
    "cloud": {
        "geometry": ("box", partial(graphtools.utils.check_in, ["box", "gaussian"])),
        "density_um3": (0.14, _nonnegative),
        "n_atoms_meanfield": (200, _count),
        "n_atoms_exact": (10, _count),
        "temperature_uK": (23.0, _nonnegative),
        "chi_calibration": (1.0, _nonnegative),
        "n_bins": (41, _count),
    },
    "beam": {
        "waist_um": (80.0, _positive),
        "center_um": (0.0, _number),
    },
    "decoherence": {
        "contrast_decay_rate_per_us": (0.0, _nonnegative),
        "atom_loss_rate_per_us": (0.0, _nonnegative),
    },
    "twist": {
        "theta_points": (16, _count),
        "alpha_points": (21, _count),
        "tau_r_us": ([10.0, 20.0, 30.0, 40.0], partial(_listed, _nonnegative, 3)),
        "shots": (None, partial(_optional, _count)),
    },
    "floquet": {
        "lambda_eff": ([0.0, 1.2, 1.8, 2.7], partial(_listed, _number, 1)),
        "transverse_angle": (0.12, _positive),
        "k": (4, _nonnegative_int),
        "tau_r_us": (10.0, _positive),
        "tau_x_us": (1.0, _positive),
        "initial_thetas": (
            [0.3, 0.6, 0.9, 1.2, 1.5708, 1.9, 2.2, 2.5, 2.8],
            partial(_listed, _nonnegative, 1),
        ),
        "initial_phis": ([0.0], partial(_listed, _number, 1)),
        "echo_pulses": (1, _nonnegative_int),
        "flow_points": (200, _count),
    },
    "bifurcation": {
        "transverse_angles": ([0.0, 0.14], partial(_listed, _nonnegative, 1)),
        "k": (4, _count),
        "tau_r_us": (10.0, _positive),
        "tau_x_us": (1.0, _positive),
        "theta_points": (16, _count),
        "peak_twist": (None, partial(_optional, _positive)),
        "extent_um": (160.0, _positive),
        "cut_positions_um": ([], partial(_listed, _number, 0)),
    },
    "run": {
        "backend": ("meanfield", partial(graphtools.utils.check_in, BACKENDS)),
        "seed": (0, partial(_optional, graphtools.utils.check_int)),
        "output_directory": ("out", _string),
    },
}


class ExperimentConfig(object):
    """Validated, fully resolved experiment configuration.

    Parameters
    ----------
    document : dict, optional
        Nested sections as in the JSON file; missing keys take defaults.

    Raises
    ------
    ConfigError
        Unknown sections or keys, wrong types or out-of-range values.
    """

    def __init__(self, document=None):
        document = {} if document is None else document
        if not isinstance(document, dict):
            raise ConfigError("Configuration must be a JSON object")
        unknown = sorted(set(document) - set(SCHEMA))
        if unknown:
            raise ConfigError(
                "Unknown configuration sections {}. Choose from {}".format(
                    unknown, sorted(SCHEMA)
                )
            )
        self._values = {}
        for section, keys in SCHEMA.items():
            given = document.get(section, {})
            if not isinstance(given, dict):
                raise ConfigError("Section '{}' must be a JSON object".format(section))
            unknown = sorted(set(given) - set(keys))
            if unknown:
                raise ConfigError(
                    "Unknown keys {} in section '{}'. Choose from {}".format(
                        unknown, section, sorted(keys)
                    )
                )
            resolved = {}
            for key, (default, check) in keys.items():
                value = copy.deepcopy(given.get(key, default))
                try:
                    check(**{key: value})
                except ValueError as e:
                    raise ConfigError("{}.{}: {}".format(section, key, e))
                resolved[key] = value
            self._values[section] = resolved
        self._check_consistency()

    def _check_consistency(self):
        dressing = self["dressing"]
        if dressing["detuning_MHz"] == 0:
            raise ConfigError("dressing.detuning_MHz: Expected nonzero detuning")
        if (
            dressing["dipole_coupling_MHz_um3"] is not None
            and dressing["interaction_range_um"] is not None
        ):
            raise ConfigError(
                "dressing: give at most one of dipole_coupling_MHz_um3 and "
                "interaction_range_um"
            )
        floquet = self["floquet"]
        if not floquet["transverse_angle"] < np.pi / 2:
            raise ConfigError("floquet.transverse_angle: Expected a value below pi/2")
        for angle in self["bifurcation"]["transverse_angles"]:
            if not angle < np.pi / 2:
                raise ConfigError(
                    "bifurcation.transverse_angles: Expected values below pi/2"
                )
        if self["twist"]["theta_points"] < 8:
            raise ConfigError("twist.theta_points: Expected at least 8 tilt values")
        if self["twist"]["alpha_points"] < 4:
            raise ConfigError("twist.alpha_points: Expected at least 4 fringe phases")

    @classmethod
    def from_file(cls, path):
        try:
            with open(path) as handle:
                document = json.load(handle)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError("Could not read configuration {}: {}".format(path, e))
        return cls(document)

    def __getitem__(self, section):
        return self._values[section]

    def to_dict(self):
        return copy.deepcopy(self._values)

    def updated(self, section, **values):
        """Copy with keys of one section replaced, validated again."""
        document = self.to_dict()
        document[section].update(values)
        return ExperimentConfig(document)

    @property
    def backend(self):
        return self["run"]["backend"]

    @property
    def seed(self):
        return self["run"]["seed"]

    def dressing_params(self):
        dressing = self["dressing"]
        detuning = float(utils.mhz_to_angular(dressing["detuning_MHz"]))
        forster_defect = float(utils.mhz_to_angular(dressing["forster_defect_MHz"]))
        if dressing["dipole_coupling_MHz_um3"] is not None:
            dipole_coupling = float(
                utils.mhz_to_angular(dressing["dipole_coupling_MHz_um3"])
            )
        elif dressing["interaction_range_um"] is not None:
            dipole_coupling = float(
                calibrate_c3(dressing["interaction_range_um"], detuning, forster_defect)
            )
        else:
            dipole_coupling = DEFAULT_C3
        return DressingParams(
            rabi_frequency=float(utils.mhz_to_angular(dressing["rabi_frequency_MHz"])),
            detuning=detuning,
            forster_defect=forster_defect,
            dipole_coupling=dipole_coupling,
        )

    def beam(self):
        return BeamProfile(
            peak_rabi=self.dressing_params().rabi_frequency,
            waist=self["beam"]["waist_um"],
            center=self["beam"]["center_um"],
        )

    def decoherence(self):
        values = self["decoherence"]
        return DecoherenceModel(
            contrast_decay_rate=values["contrast_decay_rate_per_us"],
            atom_loss_rate=values["atom_loss_rate_per_us"],
        )
