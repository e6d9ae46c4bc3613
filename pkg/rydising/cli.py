"""Command line entry point reproducing each experiment at desk scale.

Subcommands ``potential``, ``twist``, ``floquet``, ``bifurcation`` and
``selftest`` write tab-separated tables and JSON summaries to the output
directory. Exit codes: 0 success, 2 configuration error, 3 numerical
failure (or a failed self-test).
"""

import argparse
import os
import sys

import numpy as np
import pandas as pd
import tasklogger
from sklearn.utils import check_random_state

from . import analysis, cloud, floquet, potential, sequence, spin, utils
from .config import BACKENDS, ExperimentConfig
from .exceptions import ConfigError, FitError, NumericalError, RydisingError
from .version import __version__

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _tilt_grid(n_points):
    """Initial tilts strictly inside (0, pi)."""
    return np.linspace(0, np.pi, n_points + 2)[1:-1]


def _chi_th(config, params):
    density = config["cloud"]["density_um3"]
    if density == 0:
        return 0.0
    return config["cloud"]["chi_calibration"] * cloud.meanfield_chi(density, params)


def _sampled_couplings(config, params, n_atoms, beam=None, extent=None, seed=None):
    """Couplings of one cloud realization, or zeros for an empty cloud."""
    settings = config["cloud"]
    if settings["density_um3"] == 0:
        return None, cloud.uniform_couplings(n_atoms, 0.0)
    atoms = cloud.sample_cloud(
        geometry=settings["geometry"],
        density=settings["density_um3"],
        n_atoms=None if extent is not None else n_atoms,
        extent=extent,
        temperature=settings["temperature_uK"],
        seed=seed,
    )
    couplings = cloud.coupling_matrix(
        atoms, params, beam=beam, chi_calibration=settings["chi_calibration"]
    )
    return atoms, couplings


def _evolver(config, backend, couplings=None, chi=None):
    decoherence = config.decoherence()
    if backend == "collective":
        return spin.CollectiveEvolver(chi=chi, decoherence=decoherence)
    if backend == "exact":
        return spin.ExactEvolver(decoherence=decoherence).fit(couplings)
    return spin.MeanFieldEvolver(decoherence=decoherence).fit(couplings)


def cmd_potential(config, out):
    """Dressed potential curves and the interaction-range summary."""
    params = config.dressing_params()
    r_c = potential.interaction_range(params)
    radii = np.geomspace(0.2 * r_c, 5 * r_c, 200)
    with tasklogger.log_task("potential curves", logger=utils.LOGGER):
        exact = potential.potential_curve(params, radii, method="exact").to_frame()
        softcore = potential.potential_curve(params, radii, method="softcore").to_frame()
    table = pd.DataFrame(
        {
            "r_um": radii,
            "J_exact_over_2pi_kHz": exact["J_over_2pi_kHz"],
            "J_softcore_over_2pi_kHz": softcore["J_over_2pi_kHz"],
            "V_R_over_2pi_MHz": utils.angular_to_mhz(
                potential.forster_pair_energy(radii, 0.0, params)
            ),
        }
    )
    j0 = potential.characteristic_strength(params)
    density = config["cloud"]["density_um3"]
    summary = {
        "interaction_range_um": r_c,
        "J0_over_2pi_kHz": float(utils.angular_to_khz(j0)),
        "C3_over_2pi_MHz_um3": float(utils.angular_to_mhz(params.dipole_coupling)),
        "C6_over_2pi_MHz_um6": float(
            utils.angular_to_mhz(params.dipole_coupling ** 2 / params.forster_defect)
        ),
        "light_shift_over_2pi_kHz": float(
            utils.angular_to_khz(
                potential.light_shift(params.rabi_frequency, params.detuning)
            )
        ),
        "chi_th_over_2pi_kHz": float(utils.angular_to_khz(_chi_th(config, params))),
        "N_c": (
            float(cloud.interaction_sphere_count(density, r_c)) if density > 0 else 0.0
        ),
    }
    resolved = config.to_dict()
    utils.write_table(table, os.path.join(out, "potential.tsv"), resolved)
    utils.write_json(summary, os.path.join(out, "potential.json"), resolved)
    return summary


def _final_spin(evolver, seq):
    return evolver.transform(seq).final


def _decay_fit(times, values, name):
    """Exponential decay fit as a summary entry, None when unidentifiable."""
    try:
        return analysis.fit_decay(times, values).to_dict()
    except FitError as e:
        tasklogger.log_warning(
            "Skipping {} decay fit: {}".format(name, e), logger=utils.LOGGER
        )
        return None


def cmd_twist(config, out):
    """Spin-echo twisting: phi(theta) per interaction time, Q fits and chi."""
    params = config.dressing_params()
    settings = config["twist"]
    backend = config.backend
    random_state = check_random_state(config.seed)
    thetas = _tilt_grid(settings["theta_points"])
    decoherence = config.decoherence()
    alphas = np.linspace(0, 2 * np.pi, settings["alpha_points"], endpoint=False)
    chi_th = _chi_th(config, params)
    summary = {"backend": backend, "chi_th_over_2pi_kHz": utils.angular_to_khz(chi_th)}
    if backend == "collective":
        evolver = _evolver(config, backend, chi=chi_th)
        summary["n_atoms"] = None
    else:
        n_atoms = config["cloud"]["n_atoms_" + backend]
        _, couplings = _sampled_couplings(
            config, params, n_atoms, seed=random_state.randint(2 ** 31)
        )
        evolver = _evolver(config, backend, couplings=couplings)
        summary["n_atoms"] = couplings.n_atoms
        summary["chi_sampled_over_2pi_kHz"] = utils.angular_to_khz(
            cloud.sampled_chi(couplings)
        )

    phase_rows, fit_rows = [], []
    with tasklogger.log_task("twist ({})".format(backend), logger=utils.LOGGER):
        for tau_r in settings["tau_r_us"]:
            phis, contrasts = [], []
            for theta in thetas:
                final = _final_spin(
                    evolver, sequence.build_spin_echo_sequence(theta, tau_r)
                )
                fringe = spin.simulate_fringe(
                    final, alphas, shots=settings["shots"], seed=random_state
                )
                fit = analysis.fit_fringe(alphas, fringe.p_up, shots=settings["shots"])
                phis.append(fit["phi"])
                contrasts.append(final.contrast())
                phase_rows.append(
                    {
                        "tau_r_us": tau_r,
                        "theta": theta,
                        "phi": fit["phi"],
                        "phi_stderr": fit.stderr["phi"],
                        "fringe_contrast": fit["C"],
                        "C": final.contrast(),
                    }
                )
            twisting = analysis.fit_twisting(thetas, phis)
            fit_rows.append(
                {
                    "tau_r_us": tau_r,
                    "Q": twisting["Q"],
                    "Q_stderr": twisting.stderr["Q"],
                    "r2": twisting.r2,
                    "C_mean": float(np.mean(contrasts)),
                    "atom_fraction": float(decoherence.atom_fraction(tau_r)),
                }
            )
    fits = pd.DataFrame(fit_rows)
    stderr = fits["Q_stderr"].to_numpy()
    chi = analysis.fit_chi(
        fits["tau_r_us"], fits["Q"], stderr if np.all(stderr > 0) else None
    )
    summary.update(
        {
            "chi": chi.to_dict(),
            "chi_over_2pi_kHz": float(utils.angular_to_khz(chi["chi"])),
            "chi_over_chi_th": (
                chi["chi"] / chi_th if chi_th != 0 else None
            ),
            "contrast_decay": _decay_fit(
                fits["tau_r_us"], fits["C_mean"], "contrast"
            ),
            "atom_decay": _decay_fit(
                fits["tau_r_us"], fits["atom_fraction"], "atom number"
            ),
        }
    )
    resolved = config.to_dict()
    utils.write_table(
        pd.DataFrame(phase_rows), os.path.join(out, "twist_phases.tsv"), resolved
    )
    utils.write_table(fits, os.path.join(out, "twist_fits.tsv"), resolved)
    utils.write_json(summary, os.path.join(out, "twist.json"), resolved)
    return summary


def _floquet_trajectories(config, backend, lambda_, initial):
    """Normalized vectors S / (C S) and contrasts after 0..k cycles."""
    settings = config["floquet"]
    k = settings["k"]
    angle = settings["transverse_angle"]
    if backend == "collective":
        vectors = spin.evolve_collective(lambda_, 1.0, angle, k, initial)
        return vectors, np.ones(vectors.shape[:2])
    tau_r, tau_x = settings["tau_r_us"], settings["tau_x_us"]
    chi = lambda_ * angle / tau_r
    n_atoms = config["cloud"]["n_atoms_" + backend]
    if n_atoms < 2:
        raise ConfigError("cloud.n_atoms_{}: Expected at least 2 atoms".format(backend))
    couplings = cloud.uniform_couplings(n_atoms, -2 * chi / (n_atoms - 1))
    evolver = _evolver(config, backend, couplings=couplings)
    vectors = np.empty((k + 1,) + initial.shape)
    contrasts = np.ones((k + 1, len(initial)))
    vectors[0] = initial
    for index, start in enumerate(initial):
        theta = float(np.arccos(np.clip(start[2], -1, 1)))
        phi0 = float(utils.bloch_phase(start))
        for cycles in range(1, k + 1):
            seq = sequence.build_floquet_sequence(
                theta,
                phi0,
                cycles,
                tau_r,
                tau_x,
                angle / tau_x,
                echo_pulses=settings["echo_pulses"],
                refocus=True,
            )
            mean = _final_spin(evolver, seq).mean_spin()
            contrasts[cycles, index] = np.linalg.norm(mean)
            vectors[cycles, index] = mean / np.linalg.norm(mean)
    return vectors, contrasts


def cmd_floquet(config, out):
    """Floquet trajectories, flow lines and fixed points per interaction ratio."""
    settings = config["floquet"]
    backend = config.backend
    angle = settings["transverse_angle"]
    grid = np.array(
        [(t, p) for t in settings["initial_thetas"] for p in settings["initial_phis"]]
    )
    initial = utils.bloch_vector(grid[:, 0], grid[:, 1])
    trajectory_rows, flow_rows, summaries = [], [], []
    for lambda_ in settings["lambda_eff"]:
        with tasklogger.log_task(
            "floquet lambda_eff = {}".format(lambda_), logger=utils.LOGGER
        ):
            vectors, contrasts = _floquet_trajectories(config, backend, lambda_, initial)
            for cycle in range(vectors.shape[0]):
                for index, (theta, phi0) in enumerate(grid):
                    trajectory_rows.append(
                        {
                            "lambda_eff": lambda_,
                            "state": index,
                            "theta0": theta,
                            "phi0": phi0,
                            "cycle": cycle,
                            "Sx": vectors[cycle, index, 0],
                            "Sy": vectors[cycle, index, 1],
                            "Sz": vectors[cycle, index, 2],
                            "C": contrasts[cycle, index],
                        }
                    )
            lines = spin.flow_lines(lambda_, initial, n_points=settings["flow_points"])
            for index, line in enumerate(lines):
                for point, (x, y, z) in enumerate(line):
                    flow_rows.append(
                        {
                            "lambda_eff": lambda_,
                            "line": index,
                            "point": point,
                            "x": x,
                            "y": y,
                            "z": z,
                        }
                    )
            params = floquet.FloquetParams.from_lambda(lambda_, angle)
            lambda_fit = (
                floquet.fit_lambda(vectors, angle) if vectors.shape[0] > 1 else None
            )
            summaries.append(
                {
                    "lambda_eff": lambda_,
                    "lambda_fit": lambda_fit,
                    "relative_discrepancy": (
                        abs(lambda_fit - lambda_) / abs(lambda_)
                        if lambda_fit is not None and lambda_ != 0
                        else None
                    ),
                    "final_contrast_mean": float(np.mean(contrasts[-1])),
                    "predicted": floquet.fixed_points(lambda_).to_dict(),
                    "map": floquet.map_fixed_points(params).to_dict(),
                }
            )
    resolved = config.to_dict()
    utils.write_table(
        pd.DataFrame(trajectory_rows),
        os.path.join(out, "floquet_trajectories.tsv"),
        resolved,
    )
    utils.write_table(
        pd.DataFrame(flow_rows), os.path.join(out, "floquet_flow.tsv"), resolved
    )
    summary = {"backend": backend, "runs": summaries}
    utils.write_json(summary, os.path.join(out, "floquet.json"), resolved)
    return summary


def _collective_columns(thetas, twist_profile, contrast_profile, angle, k):
    """Final vectors [n_theta, n_x, 3] of the Floquet sequence per column."""
    vectors = np.repeat(
        utils.bloch_vector(thetas)[:, None, :], len(twist_profile), axis=1
    )
    for _ in range(k):
        vectors = spin.twist(vectors, contrast_profile * twist_profile / 2)
        vectors = spin.transverse_rotation(vectors, angle)
        vectors = spin.twist(vectors, contrast_profile * twist_profile / 2)
    # the echo train leaves one net pi rotation about x
    vectors = vectors * np.array([1.0, -1.0, -1.0])
    return vectors


def cmd_bifurcation(config, out):
    """Position-resolved phase maps, chi calibration and critical positions."""
    params = config.dressing_params()
    settings = config["bifurcation"]
    backend = config.backend
    if backend == "exact":
        raise ConfigError(
            "run.backend: the bifurcation map needs 'meanfield' or 'collective'"
        )
    k, tau_r = settings["k"], settings["tau_r_us"]
    n_bins = config["cloud"]["n_bins"]
    length = settings["extent_um"]
    beam = config.beam()
    thetas = _tilt_grid(settings["theta_points"])
    edges = np.linspace(-length / 2, length / 2, n_bins + 1)
    centers = 0.5 * (edges[1:] + edges[:-1])
    # soft-core couplings scale as Omega^4, so chi follows the beam profile
    shape = (beam.rabi_at(centers) / beam.peak_rabi) ** 4
    if settings["peak_twist"] is not None:
        chi_model = settings["peak_twist"] / tau_r * shape
    else:
        chi_model = _chi_th(config, params) * shape
    contrast_model = np.full(n_bins, float(config.decoherence().contrast(k * tau_r)))

    density = config["cloud"]["density_um3"]
    if backend == "meanfield" and density > 0:
        n_atoms = config["cloud"]["n_atoms_meanfield"]
        width = np.sqrt(n_atoms / (density * length))
        atoms, couplings = _sampled_couplings(
            config,
            params,
            n_atoms,
            beam=beam,
            extent=(length, width, width),
            seed=config.seed,
        )
        if settings["peak_twist"] is not None:
            couplings = couplings.scaled(chi_model.max() / _chi_th(config, params))
        bins, _ = atoms.bin_positions(
            n_bins, axis=0, limits=(-length / 2, length / 2)
        )
        evolver = _evolver(config, backend, couplings=couplings)
    else:
        if backend == "meanfield":
            tasklogger.log_info(
                "Empty cloud: using the collective model", logger=utils.LOGGER
            )
        backend = "collective"

    map_rows, maps = [], {}
    for angle in settings["transverse_angles"]:
        with tasklogger.log_task(
            "bifurcation map h*tau_x = {}".format(angle), logger=utils.LOGGER
        ):
            if backend == "collective":
                vectors = _collective_columns(
                    thetas, chi_model * tau_r, contrast_model, angle, k
                )
                phase = utils.bloch_phase(vectors)
                contrast = np.broadcast_to(contrast_model, phase.shape).copy()
            else:
                phase, contrast = _meanfield_bins(
                    evolver, settings, thetas, angle, bins, n_bins
                )
            lambda_eff = (
                contrast_model * chi_model * tau_r / angle if angle > 0 else None
            )
            phase_map = analysis.PhaseMap(
                thetas, centers, phase, contrast, lambda_eff=lambda_eff
            )
            maps[angle] = phase_map
            frame = phase_map.to_frame()
            frame.insert(0, "h_tau_x", angle)
            map_rows.append(frame)

    calibration = _calibrate_profile(
        maps,
        thetas,
        centers,
        k,
        chi_model,
        contrast_model,
        tau_r,
        contrast_in_twist=backend == "collective",
    )
    contour_rows, overlay_rows, runs = [], [], []
    for angle, phase_map in maps.items():
        if angle == 0:
            continue
        contour = analysis.zero_phase_contour(phase_map)
        frame = contour.to_frame()
        frame.insert(0, "h_tau_x", angle)
        contour_rows.append(frame)
        measured = floquet.bifurcation_scan(
            centers,
            calibration["chi_tau_r"] / tau_r,
            calibration["C"],
            tau_r,
            angle,
        )
        predicted = floquet.bifurcation_scan(
            centers, chi_model, contrast_model, tau_r, angle
        )
        overlay = floquet.overlay_curves(centers, predicted.lambda_eff)
        overlay.insert(0, "h_tau_x", angle)
        overlay_rows.append(overlay)
        runs.append(
            {
                "h_tau_x": angle,
                "measured": measured.to_dict(),
                "predicted": predicted.to_dict(),
                "contour_roots_per_column": contour.n_roots,
                "contour_gaps": contour.gaps,
                "cuts": _cuts(phase_map, settings["cut_positions_um"]),
            }
        )
    resolved = config.to_dict()
    utils.write_table(
        pd.concat(map_rows, ignore_index=True),
        os.path.join(out, "bifurcation_maps.tsv"),
        resolved,
    )
    utils.write_table(
        calibration, os.path.join(out, "bifurcation_calibration.tsv"), resolved
    )
    if contour_rows:
        utils.write_table(
            pd.concat(contour_rows, ignore_index=True),
            os.path.join(out, "bifurcation_contours.tsv"),
            resolved,
        )
        utils.write_table(
            pd.concat(overlay_rows, ignore_index=True),
            os.path.join(out, "bifurcation_overlay.tsv"),
            resolved,
        )
    summary = {"backend": backend, "runs": runs}
    utils.write_json(summary, os.path.join(out, "bifurcation.json"), resolved)
    return summary


def _meanfield_bins(evolver, settings, thetas, angle, bins, n_bins):
    phase = np.full((len(thetas), n_bins), np.nan)
    contrast = np.full((len(thetas), n_bins), np.nan)
    for row, theta in enumerate(thetas):
        seq = sequence.build_floquet_sequence(
            theta,
            0.0,
            settings["k"],
            settings["tau_r_us"],
            settings["tau_x_us"],
            angle / settings["tau_x_us"],
        )
        vectors = _final_spin(evolver, seq).vectors
        for column in range(n_bins):
            members = bins == column
            if np.any(members):
                mean = vectors[members].mean(axis=0)
                phase[row, column] = utils.bloch_phase(mean)
                contrast[row, column] = np.linalg.norm(mean)
    return phase, contrast


def _calibrate_profile(
    maps, thetas, centers, k, chi_model, contrast_model, tau_r, contrast_in_twist
):
    """chi tau_r(x) and C(x) from the h = 0 map, else the model profile.

    The collective model twists by C chi tau_r, so its fitted Q is divided
    by C to keep the two profiles separate.
    """
    frame = pd.DataFrame(
        {
            "x_um": centers,
            "chi_tau_r_model": chi_model * tau_r,
            "C_model": contrast_model,
        }
    )
    if 0 not in maps:
        frame["chi_tau_r"] = chi_model * tau_r
        frame["C"] = contrast_model
        return frame
    phase_map = maps[0]
    equator = int(np.argmin(np.abs(thetas - np.pi / 2)))
    contrast = phase_map.contrast[equator]
    chi_tau_r = []
    for column in range(len(centers)):
        phis = phase_map.phase[:, column]
        if np.all(np.isfinite(phis)):
            twist = analysis.fit_twisting(thetas, phis)["Q"]
            if twist < -1e-9:
                raise NumericalError(
                    "Negative twisting strength Q = {:.4g} at x = {:.4g} um; "
                    "chi must be positive for ferromagnetic couplings".format(
                        twist, centers[column]
                    )
                )
            chi_tau_r.append(twist / k)
        else:
            chi_tau_r.append(np.nan)
    chi_tau_r = np.array(chi_tau_r)
    if contrast_in_twist:
        with np.errstate(divide="ignore", invalid="ignore"):
            chi_tau_r = chi_tau_r / contrast
    frame["chi_tau_r"] = chi_tau_r
    frame["C"] = contrast
    return frame


def _cuts(phase_map, positions):
    cuts = []
    for position in positions:
        column = int(np.argmin(np.abs(phase_map.positions - position)))
        cuts.append(
            {
                "x_um": float(phase_map.positions[column]),
                "theta": phase_map.thetas,
                "phi": phase_map.phase[:, column],
                "C": phase_map.contrast[:, column],
            }
        )
    return cuts


def cmd_selftest(config, out):
    from .selftest import run_selftest

    report = run_selftest(seed=config.seed)
    utils.write_json(report, os.path.join(out, "selftest.json"), config.to_dict())
    return report


COMMANDS = {
    "potential": cmd_potential,
    "twist": cmd_twist,
    "floquet": cmd_floquet,
    "bifurcation": cmd_bifurcation,
    "selftest": cmd_selftest,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rydising",
        description="Rydberg-dressed Ising simulator and analysis pipeline.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("command", choices=sorted(COMMANDS), help="experiment to run")
    parser.add_argument("--config", help="JSON experiment configuration")
    parser.add_argument("--seed", type=int, default=None, help="random seed")
    parser.add_argument(
        "--backend", choices=BACKENDS, default=None, help="spin dynamics backend"
    )
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument(
        "--verbose", "-v", action="count", default=0, help="increase log verbosity"
    )
    return parser


def load_config(args):
    config = (
        ExperimentConfig.from_file(args.config)
        if args.config
        else ExperimentConfig()
    )
    overrides = {
        "seed": args.seed,
        "backend": args.backend,
        "output_directory": args.out,
    }
    overrides = {key: value for key, value in overrides.items() if value is not None}
    if overrides:
        config = config.updated("run", **overrides)
    return config


def main(argv=None):
    args = build_parser().parse_args(argv)
    tasklogger.set_level(min(args.verbose + 1, 2), logger=utils.LOGGER)
    try:
        config = load_config(args)
        out = config["run"]["output_directory"]
        os.makedirs(out, exist_ok=True)
        result = COMMANDS[args.command](config, out)
    except NumericalError as e:
        tasklogger.log_error(str(e), logger=utils.LOGGER)
        return EXIT_NUMERICAL
    except RydisingError as e:
        tasklogger.log_error(str(e), logger=utils.LOGGER)
        return EXIT_CONFIG
    if args.command == "selftest" and not result["passed"]:
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
