import json
import os
import tempfile

import numpy as np
import pandas as pd
from parameterized import parameterized
from rydising import analysis, cli
from rydising.exceptions import NumericalError
from utils import assert_raises_message

SMALL = {
    "cloud": {"n_atoms_meanfield": 30, "n_atoms_exact": 6, "n_bins": 21},
    "twist": {"theta_points": 8, "alpha_points": 8, "tau_r_us": [10.0, 20.0, 30.0]},
    "floquet": {"lambda_eff": [0.0, 2.7], "initial_thetas": [0.4, 1.2, 2.0]},
    "bifurcation": {"theta_points": 12},
}


def _run(command, document=None, *args):
    directory = tempfile.mkdtemp()
    argv = [command, "--out", directory]
    if document is not None:
        path = os.path.join(directory, "config.json")
        with open(path, "w") as handle:
            json.dump(document, handle)
        argv += ["--config", path]
    return cli.main(argv + list(args)), directory


def _load(directory, name):
    with open(os.path.join(directory, name)) as handle:
        return json.load(handle)


def _table(directory, name):
    return pd.read_csv(os.path.join(directory, name), sep="\t", comment="#")


def test_potential():
    code, directory = _run("potential")
    assert code == cli.EXIT_OK
    summary = _load(directory, "potential.json")
    np.testing.assert_allclose(summary["interaction_range_um"], 4.2, rtol=1e-8)
    np.testing.assert_allclose(summary["J0_over_2pi_kHz"], -0.1759, rtol=1e-3)
    np.testing.assert_allclose(summary["N_c"], 43.45, atol=0.1)
    assert summary["provenance"]["config"]["dressing"]["detuning_MHz"] == 21.0
    table = _table(directory, "potential.tsv")
    assert list(table.columns) == [
        "r_um",
        "J_exact_over_2pi_kHz",
        "J_softcore_over_2pi_kHz",
        "V_R_over_2pi_MHz",
    ]
    assert len(table) == 200


@parameterized.expand([("meanfield",), ("exact",), ("collective",)])
def test_twist(backend):
    code, directory = _run("twist", SMALL, "--backend", backend, "--seed", "1")
    assert code == cli.EXIT_OK
    summary = _load(directory, "twist.json")
    assert summary["backend"] == backend
    assert summary["chi"]["r2"] > 0.99
    fits = _table(directory, "twist_fits.tsv")
    assert len(fits) == 3
    assert np.all(fits["Q"] > 0)
    phases = _table(directory, "twist_phases.tsv")
    assert len(phases) == 24


def test_twist_collective_recovers_chi_th():
    code, directory = _run("twist", SMALL, "--backend", "collective")
    assert code == cli.EXIT_OK
    summary = _load(directory, "twist.json")
    np.testing.assert_allclose(summary["chi_over_chi_th"], 1.0, rtol=1e-6)


def test_twist_decay_fits():
    document = dict(
        SMALL,
        decoherence={
            "contrast_decay_rate_per_us": 0.01,
            "atom_loss_rate_per_us": 0.005,
        },
    )
    code, directory = _run("twist", document, "--backend", "collective")
    assert code == cli.EXIT_OK
    summary = _load(directory, "twist.json")
    atom_decay = summary["atom_decay"]["estimate"]
    np.testing.assert_allclose(atom_decay["rate"], 0.005, rtol=1e-6)
    np.testing.assert_allclose(atom_decay["amplitude"], 1.0, rtol=1e-6)
    assert summary["contrast_decay"]["estimate"]["rate"] > 0
    fits = _table(directory, "twist_fits.tsv")
    np.testing.assert_allclose(
        fits["atom_fraction"], np.exp(-0.005 * fits["tau_r_us"])
    )


def test_twist_deterministic():
    directory = tempfile.mkdtemp()
    argv = ["twist", "--out", directory, "--seed", "5"]
    path = os.path.join(directory, "config.json")
    with open(path, "w") as handle:
        json.dump(SMALL, handle)
    argv += ["--config", path]
    outputs = []
    for _ in range(2):
        assert cli.main(argv) == cli.EXIT_OK
        with open(os.path.join(directory, "twist_phases.tsv"), "rb") as handle:
            outputs.append(handle.read())
    assert outputs[0] == outputs[1]


@parameterized.expand([("collective",), ("meanfield",)])
def test_floquet(backend):
    code, directory = _run("floquet", SMALL, "--backend", backend)
    assert code == cli.EXIT_OK
    summary = _load(directory, "floquet.json")
    runs = summary["runs"]
    assert [run["lambda_eff"] for run in runs] == [0.0, 2.7]
    np.testing.assert_allclose(runs[1]["lambda_fit"], 2.7, atol=1e-4)
    assert runs[0]["relative_discrepancy"] is None
    assert len(runs[0]["map"]["points"]) == 1
    assert len(runs[1]["map"]["points"]) == 3
    assert [p["stable"] for p in runs[1]["predicted"]["points"]] == [True, False, True]
    trajectories = _table(directory, "floquet_trajectories.tsv")
    # 2 ratios x 3 states x (k + 1) cycles
    assert len(trajectories) == 2 * 3 * 5
    np.testing.assert_allclose(trajectories["C"], 1.0, atol=1e-6)
    flow = _table(directory, "floquet_flow.tsv")
    assert len(flow) == 2 * 3 * 200


@parameterized.expand([(3,), (4,)])
def test_bifurcation_collective(k):
    document = dict(SMALL, bifurcation={"theta_points": 12, "k": k})
    code, directory = _run("bifurcation", document, "--backend", "collective")
    assert code == cli.EXIT_OK
    summary = _load(directory, "bifurcation.json")
    assert len(summary["runs"]) == 1
    run = summary["runs"][0]
    predicted = run["predicted"]["critical_positions_um"]
    measured = run["measured"]["critical_positions_um"]
    assert len(predicted) == 2
    np.testing.assert_allclose(measured, predicted, atol=160.0 / 21)
    np.testing.assert_allclose(predicted[0], -predicted[1], atol=1e-8)
    maps = _table(directory, "bifurcation_maps.tsv")
    assert len(maps) == 2 * 12 * 21
    calibration = _table(directory, "bifurcation_calibration.tsv")
    np.testing.assert_allclose(
        calibration["chi_tau_r"], calibration["chi_tau_r_model"], rtol=1e-6
    )
    contours = _table(directory, "bifurcation_contours.tsv")
    assert set(contours["branch"]) <= {"paramagnetic", "ferro_upper", "ferro_lower"}


def test_calibrate_profile():
    thetas = np.linspace(0.2, 2.9, 12)
    centers = np.array([-1.0, 0.0, 1.0])
    phase = -0.5 * np.cos(thetas)[:, None] * np.array([1.0, 2.0, 1.0])
    maps = {0: analysis.PhaseMap(thetas, centers, phase, np.ones_like(phase))}
    frame = cli._calibrate_profile(
        maps, thetas, centers, 4, np.full(3, 0.01), np.ones(3), 10.0, False
    )
    np.testing.assert_allclose(frame["chi_tau_r"], [0.125, 0.25, 0.125])
    np.testing.assert_allclose(frame["chi_tau_r_model"], 0.1)


def test_calibrate_profile_negative_twist():
    # phi = +Q cos(theta): the h = 0 map carries the wrong echo sign
    thetas = np.linspace(0.2, 2.9, 12)
    centers = np.array([-1.0, 0.0, 1.0])
    phase = np.repeat(0.5 * np.cos(thetas)[:, None], 3, axis=1)
    maps = {0: analysis.PhaseMap(thetas, centers, phase, np.ones_like(phase))}
    assert_raises_message(
        NumericalError,
        "Negative twisting strength Q = -0.5 at x = -1 um",
        cli._calibrate_profile,
        maps,
        thetas,
        centers,
        4,
        np.full(3, 0.01),
        np.ones(3),
        10.0,
        False,
    )


def test_bifurcation_peak_twist():
    document = dict(SMALL, bifurcation={"theta_points": 12, "peak_twist": 0.28})
    document["bifurcation"]["transverse_angles"] = [0.14]
    code, directory = _run("bifurcation", document, "--backend", "collective")
    assert code == cli.EXIT_OK
    run = _load(directory, "bifurcation.json")["runs"][0]
    expected = 80.0 * np.sqrt(np.log(2)) / 2
    np.testing.assert_allclose(
        np.abs(run["predicted"]["critical_positions_um"]), expected, atol=160.0 / 21
    )


def test_config_error_exit_code():
    code, _ = _run("potential", {"cloud": {"unknown": 1}})
    assert code == cli.EXIT_CONFIG
    code, _ = _run("bifurcation", SMALL, "--backend", "exact")
    assert code == cli.EXIT_CONFIG


def test_numerical_error_exit_code():
    # red detuning drives the exact pair branch through the anti-blockade pole
    code, _ = _run("potential", {"dressing": {"detuning_MHz": -21.0}})
    assert code == cli.EXIT_NUMERICAL


def test_parser():
    args = cli.build_parser().parse_args(["twist", "--backend", "exact", "-vv"])
    assert args.command == "twist"
    assert args.backend == "exact"
    assert args.verbose == 2
    config = cli.load_config(args)
    assert config.backend == "exact"
    assert config.seed == 0
