import os
import tempfile

import numpy as np
import pandas as pd
import rydising
from parameterized import parameterized
from rydising import cloud, potential, utils
from scipy import stats
from utils import assert_raises_message, random_couplings

PARAMS = potential.DressingParams.from_mhz(1.9, 21.0)


@parameterized.expand([("box",), ("gaussian",)])
def test_sample_cloud_deterministic(geometry):
    first = cloud.sample_cloud(geometry, 0.14, n_atoms=50, seed=42)
    second = cloud.sample_cloud(geometry, 0.14, n_atoms=50, seed=42)
    np.testing.assert_array_equal(first.positions, second.positions)
    assert first.n_atoms == 50
    third = cloud.sample_cloud(geometry, 0.14, n_atoms=50, seed=43)
    assert not np.array_equal(first.positions, third.positions)


def test_sample_cloud_poisson_number():
    # <N> = rho V = 140 for a 10 um box at 0.14 / um^3
    counts = [
        cloud.sample_cloud("box", 0.14, extent=10.0, seed=seed).n_atoms
        for seed in range(200)
    ]
    np.testing.assert_allclose(np.mean(counts), 140, atol=3)


def test_sample_cloud_extent():
    atoms = cloud.sample_cloud("box", 0.14, n_atoms=140, aspect=(4, 1, 1), seed=0)
    np.testing.assert_allclose(np.prod(atoms.extent) * 0.14, 140)
    np.testing.assert_allclose(atoms.extent[0] / atoms.extent[1], 4)
    assert np.all(np.abs(atoms.positions) <= atoms.extent / 2)
    assert atoms.periodic


def test_box_pair_distances():
    # independent pairs; minimum-image distances below L / 2 follow (2r / L)^3
    atoms = cloud.sample_cloud("box", 0.14, n_atoms=20000, seed=7)
    side = atoms.extent[0]
    separation = atoms.positions[0::2] - atoms.positions[1::2]
    separation -= atoms.extent * np.round(separation / atoms.extent)
    distance = np.linalg.norm(separation, axis=1)
    inside = distance[distance < side / 2]
    assert len(inside) > 5000
    result = stats.kstest(inside, lambda r: np.clip(2 * r / side, 0, 1) ** 3)
    assert result.pvalue > 0.01


def test_sample_cloud_errors():
    assert_raises_message(
        ValueError,
        "geometry value ring not recognized. Choose from ['box', 'gaussian']",
        cloud.sample_cloud,
        "ring",
        0.14,
        n_atoms=10,
    )
    assert_raises_message(
        ValueError,
        "Specify exactly one of n_atoms or extent",
        cloud.sample_cloud,
        "box",
        0.14,
        n_atoms=10,
        extent=5.0,
    )
    assert_raises_message(
        rydising.exceptions.DensityError,
        "is below 0.01 um",
        cloud.sample_cloud,
        "box",
        1e7,
        n_atoms=10,
    )
    assert_raises_message(
        rydising.exceptions.DomainError,
        "Expected density > 0, got 0",
        cloud.sample_cloud,
        "box",
        0,
        n_atoms=10,
    )


def test_single_atom():
    atoms = cloud.sample_cloud("box", 0.14, n_atoms=1, seed=0)
    couplings = cloud.coupling_matrix(atoms, PARAMS)
    assert couplings.couplings.shape == (1, 1)
    assert couplings.couplings[0, 0] == 0
    assert cloud.sampled_chi(couplings) == 0


def test_coupling_matrix():
    atoms = cloud.sample_cloud("box", 0.14, n_atoms=60, seed=1)
    couplings = cloud.coupling_matrix(atoms, PARAMS, image_cutoff=None)
    np.testing.assert_array_equal(couplings.couplings, couplings.couplings.T)
    np.testing.assert_array_equal(np.diag(couplings.couplings), 0)
    assert np.all(couplings.couplings <= 0)
    assert np.all(
        couplings.couplings >= potential.characteristic_strength(PARAMS) * (1 + 1e-12)
    )
    np.testing.assert_allclose(
        couplings.light_shifts,
        potential.light_shift(PARAMS.rabi_frequency, PARAMS.detuning),
    )
    doubled = cloud.coupling_matrix(
        atoms, PARAMS, chi_calibration=2.0, image_cutoff=None
    )
    np.testing.assert_allclose(doubled.couplings, 2 * couplings.couplings)
    np.testing.assert_allclose(
        cloud.sampled_chi(doubled), 2 * cloud.sampled_chi(couplings)
    )
    # periodic images only add ferromagnetic couplings
    summed = cloud.coupling_matrix(atoms, PARAMS)
    assert np.all(summed.couplings <= couplings.couplings)


def test_coupling_matrix_beam_locality():
    beam = cloud.BeamProfile(peak_rabi=PARAMS.rabi_frequency, waist=80.0)
    positions = [[0, 0, 0], [0, 3, 0], [80, 0, 0], [80, 3, 0]]
    atoms = cloud.AtomCloud(positions=positions, density=0.14, geometry="box")
    couplings = cloud.coupling_matrix(atoms, PARAMS, beam=beam)
    # J ~ Omega_i^2 Omega_j^2 and Omega(w) = Omega_0 / e
    np.testing.assert_allclose(
        couplings.couplings[2, 3] / couplings.couplings[0, 1], np.exp(-4)
    )
    np.testing.assert_allclose(
        couplings.light_shifts[2] / couplings.light_shifts[0], np.exp(-2)
    )
    np.testing.assert_allclose(beam.rabi_at(80.0), PARAMS.rabi_frequency / np.e)


def test_coincident_atoms():
    atoms = cloud.AtomCloud(positions=np.zeros((2, 3)), density=0.14)
    assert_raises_message(
        rydising.exceptions.GeometryError,
        "Atoms closer than 0.001 um",
        cloud.coupling_matrix,
        atoms,
        PARAMS,
    )


def test_coupling_matrix_validation():
    assert_raises_message(
        rydising.exceptions.GeometryError,
        "couplings must be symmetric",
        cloud.CouplingMatrix,
        np.array([[0, -1.0], [-2.0, 0]]),
    )
    assert_raises_message(
        rydising.exceptions.GeometryError,
        "couplings must have a zero diagonal",
        cloud.CouplingMatrix,
        -np.ones((2, 2)),
    )
    assert_raises_message(
        rydising.exceptions.DomainError,
        "couplings change sign",
        cloud.CouplingMatrix,
        np.array([[0, -1.0, 1.0], [-1.0, 0, 0], [1.0, 0, 0]]),
    )
    couplings = random_couplings(5, seed=0)
    np.testing.assert_allclose(couplings.scaled(3).couplings, 3 * couplings.couplings)


def test_uniform_couplings():
    couplings = cloud.uniform_couplings(11, -0.2, light_shift=0.5)
    np.testing.assert_allclose(cloud.sampled_chi(couplings), 1.0)
    np.testing.assert_allclose(couplings.light_shifts, 0.5)


def test_periodic_displacements():
    atoms = cloud.AtomCloud(
        positions=[[-4.5, 0, 0], [4.5, 0, 0]],
        density=0.14,
        extent=10.0,
        periodic=True,
    )
    _, _, separation = atoms.displacements()
    np.testing.assert_allclose(separation, [[1.0, 0, 0]])
    np.testing.assert_array_equal(atoms.image_shifts(), np.zeros((1, 3)))
    shifts = atoms.image_shifts(12.0)
    assert shifts.shape == (27, 3)
    np.testing.assert_array_equal(shifts[0], 0)
    assert len(atoms.image_shifts(4.0)) == 1


def test_periodic_image_sum():
    atoms = cloud.AtomCloud(
        positions=[[-4.5, 0, 0], [4.5, 0, 0]],
        density=0.14,
        extent=10.0,
        periodic=True,
    )
    minimum = cloud.coupling_matrix(atoms, PARAMS, image_cutoff=None)
    np.testing.assert_allclose(
        minimum.couplings[0, 1],
        potential.dressed_interaction_softcore(1.0, 0.0, PARAMS),
    )
    cutoff = 6 * potential.interaction_range(PARAMS)
    cells = np.arange(-4, 5)
    images = np.stack(np.meshgrid(cells, cells, cells), -1).reshape(-1, 3) * 10.0
    distance = np.linalg.norm(images + [1.0, 0, 0], axis=1)
    expected = np.sum(
        potential.dressed_interaction_softcore(distance[distance < cutoff], 0.0, PARAMS)
    )
    summed = cloud.coupling_matrix(atoms, PARAMS)
    np.testing.assert_allclose(summed.couplings[0, 1], expected, rtol=1e-10)
    assert summed.couplings[0, 1] < minimum.couplings[0, 1]
    free = cloud.AtomCloud(positions=atoms.positions, density=0.14)
    np.testing.assert_allclose(
        cloud.coupling_matrix(free, PARAMS).couplings[0, 1],
        potential.dressed_interaction_softcore(9.0, 0.0, PARAMS),
    )


def test_meanfield_chi():
    chi = cloud.meanfield_chi(0.14, PARAMS)
    # 3.5 times chi_th is the measured 2pi x 15 kHz
    np.testing.assert_allclose(3.5 * utils.angular_to_khz(chi), 15.0, rtol=0.1)
    np.testing.assert_allclose(cloud.meanfield_chi(0.28, PARAMS), 2 * chi)
    montecarlo = cloud.meanfield_chi(
        0.14, PARAMS, method="montecarlo", n_samples=200000, seed=0
    )
    np.testing.assert_allclose(montecarlo, chi, rtol=0.02)


def test_meanfield_chi_plateau_estimate():
    # tail beyond r_c outweighs the softened core
    r_c = potential.interaction_range(PARAMS)
    sphere = 0.5 * 0.14 * 4 / 3 * np.pi * r_c ** 3
    sphere *= abs(potential.characteristic_strength(PARAMS))
    chi = cloud.meanfield_chi(0.14, PARAMS)
    assert sphere < chi < 2 * sphere


def test_meanfield_chi_errors():
    assert_raises_message(
        rydising.exceptions.DomainError,
        "Expected density > 0, got 0",
        cloud.meanfield_chi,
        0,
        PARAMS,
    )
    assert_raises_message(
        ValueError,
        "method value grid not recognized",
        cloud.meanfield_chi,
        0.14,
        PARAMS,
        method="grid",
    )


def test_sampled_chi_matches_meanfield():
    atoms = cloud.sample_cloud("box", 0.14, n_atoms=2000, seed=3)
    couplings = cloud.coupling_matrix(atoms, PARAMS)
    np.testing.assert_allclose(
        cloud.sampled_chi(couplings), cloud.meanfield_chi(0.14, PARAMS), rtol=0.1
    )


def test_calibrated_chi_matches_measurement():
    atoms = cloud.sample_cloud("box", 0.14, n_atoms=200, seed=0)
    couplings = cloud.coupling_matrix(atoms, PARAMS, chi_calibration=3.5)
    np.testing.assert_allclose(
        utils.angular_to_khz(cloud.sampled_chi(couplings)), 15.0, rtol=0.1
    )


def test_interaction_sphere_count():
    np.testing.assert_allclose(cloud.interaction_sphere_count(0.14, 5.0), 73.3, atol=0.1)
    r_c = potential.interaction_range(PARAMS)
    np.testing.assert_allclose(
        cloud.interaction_sphere_count(0.14, r_c), 43.45, atol=0.1
    )


def test_bin_positions():
    atoms = cloud.sample_cloud("box", 0.14, n_atoms=200, aspect=(8, 1, 1), seed=0)
    bins, centers = atoms.bin_positions(n_bins=10, limits=(-20, 20))
    assert bins.min() >= 0 and bins.max() <= 9
    np.testing.assert_allclose(centers, np.linspace(-18, 18, 10))


def test_cloud_frame():
    atoms = cloud.sample_cloud("gaussian", 0.14, n_atoms=30, seed=0)
    beam = cloud.BeamProfile(peak_rabi=1.0)
    frame = atoms.to_frame(beam)
    assert list(frame.columns) == ["id", "x_um", "y_um", "z_um", "rabi_rad_per_us"]
    assert np.all(frame["rabi_rad_per_us"] <= 1.0)
    restored = cloud.AtomCloud.from_frame(frame.iloc[::-1], density=0.14)
    np.testing.assert_array_equal(restored.positions, atoms.positions)


def test_cloud_text_export():
    atoms = cloud.sample_cloud("box", 0.14, n_atoms=20, seed=1)
    with tempfile.TemporaryDirectory() as directory:
        path = atoms.to_text(os.path.join(directory, "cloud.tsv"), config={"seed": 1})
        restored = cloud.AtomCloud.from_frame(
            pd.read_csv(path, sep="\t", comment="#"), density=0.14
        )
    np.testing.assert_allclose(restored.positions, atoms.positions, rtol=1e-9)
