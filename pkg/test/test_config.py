import json
import os
import tempfile

import numpy as np
import rydising
from parameterized import parameterized
from rydising import potential, utils
from rydising.config import SCHEMA, ExperimentConfig
from utils import assert_raises_message


def test_defaults():
    config = ExperimentConfig()
    for section, keys in SCHEMA.items():
        for key, (default, _) in keys.items():
            assert config[section][key] == default
    assert config.backend == "meanfield"
    assert config.seed == 0


def test_dressing_params():
    params = ExperimentConfig().dressing_params()
    np.testing.assert_allclose(params.rabi_frequency, utils.mhz_to_angular(1.9))
    np.testing.assert_allclose(params.detuning, utils.mhz_to_angular(21.0))
    assert params.dipole_coupling == potential.DEFAULT_C3
    config = ExperimentConfig({"dressing": {"interaction_range_um": 4.0}})
    np.testing.assert_allclose(
        potential.interaction_range(config.dressing_params()), 4.0, rtol=1e-8
    )
    config = ExperimentConfig({"dressing": {"dipole_coupling_MHz_um3": 3000.0}})
    np.testing.assert_allclose(
        config.dressing_params().dipole_coupling, utils.mhz_to_angular(3000.0)
    )


def test_beam_and_decoherence():
    config = ExperimentConfig(
        {
            "beam": {"waist_um": 60.0},
            "decoherence": {"contrast_decay_rate_per_us": 0.01},
        }
    )
    beam = config.beam()
    assert beam.waist == 60.0
    np.testing.assert_allclose(beam.peak_rabi, utils.mhz_to_angular(1.9))
    np.testing.assert_allclose(config.decoherence().contrast(100.0), np.exp(-1.0))


@parameterized.expand(
    [
        ({"laser": {}}, "Unknown configuration sections ['laser']"),
        ({"cloud": {"atoms": 3}}, "Unknown keys ['atoms'] in section 'cloud'"),
        ({"cloud": {"n_bins": "many"}}, "cloud.n_bins"),
        ({"cloud": {"n_bins": True}}, "cloud.n_bins"),
        ({"cloud": {"density_um3": -1}}, "cloud.density_um3: Expected density_um3 >= 0"),
        ({"cloud": {"geometry": "ring"}}, "cloud.geometry"),
        ({"dressing": {"detuning_MHz": 0}}, "Expected nonzero detuning"),
        (
            {
                "dressing": {
                    "dipole_coupling_MHz_um3": 3000.0,
                    "interaction_range_um": 5.0,
                }
            },
            "give at most one of dipole_coupling_MHz_um3 and interaction_range_um",
        ),
        ({"twist": {"tau_r_us": [10.0, 20.0]}}, "twist.tau_r_us"),
        ({"twist": {"theta_points": 4}}, "Expected at least 8 tilt values"),
        ({"twist": {"alpha_points": 3}}, "Expected at least 4 fringe phases"),
        ({"floquet": {"transverse_angle": 2.0}}, "Expected a value below pi/2"),
        ({"floquet": {"k": 1.5}}, "floquet.k"),
        ({"run": {"backend": "gpu"}}, "run.backend"),
        ({"run": {"seed": "zero"}}, "run.seed"),
        ([1, 2], "Configuration must be a JSON object"),
    ]
)
def test_invalid_config(document, message):
    assert_raises_message(
        rydising.exceptions.ConfigError, message, ExperimentConfig, document
    )


def test_optional_values():
    config = ExperimentConfig({"twist": {"shots": 200}, "run": {"seed": None}})
    assert config["twist"]["shots"] == 200
    assert config.seed is None
    assert_raises_message(
        rydising.exceptions.ConfigError,
        "twist.shots",
        ExperimentConfig,
        {"twist": {"shots": 0}},
    )


def test_updated():
    config = ExperimentConfig()
    updated = config.updated("run", backend="exact", seed=3)
    assert updated.backend == "exact"
    assert updated.seed == 3
    assert config.backend == "meanfield"
    assert_raises_message(
        rydising.exceptions.ConfigError,
        "run.backend",
        config.updated,
        "run",
        backend="quantum",
    )


def test_from_file():
    with tempfile.TemporaryDirectory() as directory:
        path = os.path.join(directory, "config.json")
        with open(path, "w") as handle:
            json.dump({"cloud": {"n_bins": 21}}, handle)
        config = ExperimentConfig.from_file(path)
        assert config["cloud"]["n_bins"] == 21
        assert config.to_dict()["cloud"]["n_bins"] == 21
        with open(path, "w") as handle:
            handle.write("{not json")
        assert_raises_message(
            rydising.exceptions.ConfigError,
            "Could not read configuration",
            ExperimentConfig.from_file,
            path,
        )
    assert_raises_message(
        rydising.exceptions.ConfigError,
        "Could not read configuration",
        ExperimentConfig.from_file,
        "/nonexistent/config.json",
    )
