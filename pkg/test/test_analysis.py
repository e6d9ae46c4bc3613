import numpy as np
import rydising
from parameterized import parameterized
from rydising import analysis, spin
from utils import assert_raises_message

ALPHAS = np.linspace(0, 2 * np.pi, 21, endpoint=False)


@parameterized.expand([(0.7, 1.2), (0.3, -2.5), (1.0, 0.0)])
def test_fit_fringe(contrast, phase):
    p_up = 0.5 * (1 + contrast * np.cos(ALPHAS - phase))
    fit = analysis.fit_fringe(ALPHAS, p_up)
    np.testing.assert_allclose(fit["C"], contrast, atol=1e-8)
    np.testing.assert_allclose(analysis.wrap_phase(fit["phi"] - phase), 0, atol=1e-8)
    assert fit.flags["phase_defined"]
    assert fit.n_points == 21
    assert fit.dof == 19


def test_fit_fringe_negative_contrast():
    p_up = 0.5 * (1 - 0.5 * np.cos(ALPHAS))
    fit = analysis.fit_fringe(ALPHAS, p_up)
    np.testing.assert_allclose(fit["C"], 0.5, atol=1e-8)
    np.testing.assert_allclose(np.abs(fit["phi"]), np.pi, atol=1e-8)


def test_fit_fringe_from_mean_spin():
    mean_spin = np.array([0.8 * np.cos(0.4), -0.8 * np.sin(0.4), 0.1])
    fringe = spin.simulate_fringe(mean_spin, ALPHAS)
    fit = analysis.fit_fringe(fringe.alphas, fringe.p_up)
    np.testing.assert_allclose(fit["phi"], 0.4, atol=1e-8)
    np.testing.assert_allclose(fit["C"], 0.8, atol=1e-8)


def test_fit_fringe_without_contrast():
    fit = analysis.fit_fringe(ALPHAS, np.full(len(ALPHAS), 0.5))
    assert not fit.flags["phase_defined"]
    assert fit.stderr["phi"] == np.pi
    assert fit["C"] < 1e-6


def test_fit_fringe_shot_noise():
    fringe = spin.simulate_fringe([0.6, 0.0, 0.0], ALPHAS, shots=500, seed=0)
    fit = analysis.fit_fringe(ALPHAS, fringe.p_up, shots=500)
    assert abs(fit["C"] - 0.6) < 5 * fit.stderr["C"]
    assert abs(analysis.wrap_phase(fit["phi"])) < 5 * fit.stderr["phi"]
    assert 0 < fit.stderr["phi"] < 0.1


def test_fit_fringe_errors():
    assert_raises_message(
        rydising.exceptions.FitError,
        "Expected at least 4 distinct fringe phases, got 3",
        analysis.fit_fringe,
        [0.0, 1.0, 2.0, 2 * np.pi],
        [0.5, 0.6, 0.7, 0.5],
    )
    alphas = np.linspace(0, 1, 6)
    assert_raises_message(
        rydising.exceptions.FitError,
        "Expected fringe phases spanning at least pi",
        analysis.fit_fringe,
        alphas,
        0.5 * (1 + np.cos(alphas)),
    )
    assert_raises_message(
        rydising.exceptions.PreconditionError,
        "alphas and p_up must have equal shapes",
        analysis.fit_fringe,
        ALPHAS,
        np.ones(3),
    )


def test_wrap_phase():
    np.testing.assert_allclose(
        analysis.wrap_phase([0.0, np.pi, -np.pi, 3 * np.pi / 2, 2 * np.pi]),
        [0.0, np.pi, np.pi, -np.pi / 2, 0.0],
        atol=1e-12,
    )


def test_fit_twisting():
    thetas = np.linspace(0, np.pi, 18)[1:-1]
    fit = analysis.fit_twisting(thetas, -0.8 * np.cos(thetas))
    np.testing.assert_allclose(fit["Q"], 0.8)
    np.testing.assert_allclose(fit.r2, 1.0)
    assert "offset" not in fit.estimates


def test_fit_twisting_wrapped_phases():
    # Q = 5 wraps the phase near the poles
    thetas = np.linspace(0, np.pi, 18)[1:-1]
    phis = analysis.wrap_phase(-5.0 * np.cos(thetas))
    fit = analysis.fit_twisting(thetas, phis)
    np.testing.assert_allclose(fit["Q"], 5.0)


def test_fit_twisting_offset():
    thetas = np.linspace(0.2, 2.9, 12)
    fit = analysis.fit_twisting(thetas, -0.4 * np.cos(thetas) + 0.1, offset=True)
    np.testing.assert_allclose(fit["Q"], 0.4)
    np.testing.assert_allclose(fit["offset"], 0.1)
    assert fit.dof == 10


def test_fit_twisting_errors():
    assert_raises_message(
        rydising.exceptions.FitError,
        "Expected at least 3 tilt values, got 2",
        analysis.fit_twisting,
        [0.5, 1.0],
        [0.1, 0.2],
    )
    assert_raises_message(
        rydising.exceptions.FitError,
        "Twisting strength unidentifiable: every theta is pi/2",
        analysis.fit_twisting,
        np.full(3, np.pi / 2),
        [0.1, 0.2, 0.3],
    )


def test_fit_chi():
    tau_r = np.array([10.0, 20.0, 30.0, 40.0])
    fit = analysis.fit_chi(tau_r, 0.01 * tau_r + 0.002)
    np.testing.assert_allclose(fit["chi"], 0.01)
    np.testing.assert_allclose(fit["intercept"], 0.002, atol=1e-12)
    weighted = analysis.fit_chi(tau_r, 0.01 * tau_r, stderr=[0.01, 0.01, 0.02, 0.02])
    np.testing.assert_allclose(weighted["chi"], 0.01)
    document = fit.to_dict()
    assert document["estimate"]["chi"] == fit["chi"]
    assert "r2" in document
    assert_raises_message(
        rydising.exceptions.FitError,
        "Chi unidentifiable from a single interaction time",
        analysis.fit_chi,
        [10.0, 10.0],
        [0.1, 0.1],
    )


def test_fit_decay():
    times = np.linspace(0, 50, 11)
    fit = analysis.fit_decay(times, 0.9 * np.exp(-0.02 * times))
    np.testing.assert_allclose(fit["rate"], 0.02, rtol=1e-6)
    np.testing.assert_allclose(fit["amplitude"], 0.9, rtol=1e-6)
    assert_raises_message(
        rydising.exceptions.FitError,
        "Expected at least 2 positive values",
        analysis.fit_decay,
        times,
        np.where(times > 0, 0.0, 1.0),
    )


def _phase_map(columns, lambda_eff=None):
    thetas = np.linspace(0.1, 3.0, 30)
    phase = np.stack([column(thetas) for column in columns], axis=1)
    return analysis.PhaseMap(
        thetas,
        np.arange(len(columns), dtype=float),
        phase,
        np.ones(phase.shape),
        lambda_eff=lambda_eff,
    )


def test_zero_phase_contour():
    phase_map = _phase_map(
        [
            lambda t: t - np.pi / 2,
            lambda t: -(t - 0.6) * (t - np.pi / 2) * (t - 2.5),
            lambda t: (t - 1.05) * (t - 2.05),
            lambda t: np.ones_like(t),
        ],
        lambda_eff=np.array([0.5, 2.0, 2.0, 0.5]),
    )
    contour = analysis.zero_phase_contour(phase_map)
    np.testing.assert_array_equal(contour.n_roots, [1, 3, 2, 0])
    assert contour.gaps == [2]
    np.testing.assert_allclose(contour.roots[0], [np.pi / 2], atol=1e-12)
    np.testing.assert_allclose(contour.roots[1], [0.6, np.pi / 2, 2.5], atol=0.01)
    assert contour.classification[0] == ["paramagnetic"]
    assert contour.classification[1] == ["ferro_upper", "paramagnetic", "ferro_lower"]
    frame = contour.to_frame()
    assert list(frame.columns) == ["x_um", "theta", "branch"]
    assert len(frame) == 6


def test_zero_phase_contour_missing_bins():
    phase_map = _phase_map([lambda t: np.where(t > 2.0, np.nan, t - 1.25)])
    contour = analysis.zero_phase_contour(phase_map)
    np.testing.assert_allclose(contour.roots[0], [1.25], atol=1e-12)
    assert contour.classification == []
    assert contour.gaps == [0]


def test_zero_phase_contour_wrapped_phase():
    # -4 cos(theta) wraps through +-pi twice; only theta = pi / 2 is a root
    thetas = np.linspace(0.0, np.pi, 40)
    phase = analysis.wrap_phase(-4 * np.cos(thetas))[:, None]
    phase_map = analysis.PhaseMap(thetas, [0.0], phase, np.ones(phase.shape))
    contour = analysis.zero_phase_contour(phase_map)
    np.testing.assert_array_equal(contour.n_roots, [1])
    np.testing.assert_allclose(contour.roots[0], [np.pi / 2], atol=1e-2)
    assert contour.gaps == []


def test_zero_phase_contour_low_contrast():
    # fully dephased cells report phi = 0 and must not count as roots
    thetas = np.linspace(0.1, 3.0, 30)
    phase = np.stack([thetas - np.pi / 2, np.zeros_like(thetas)], axis=1)
    contrast = np.stack([np.ones_like(thetas), np.full_like(thetas, 1e-8)], axis=1)
    phase_map = analysis.PhaseMap(thetas, [0.0, 1.0], phase, contrast)
    contour = analysis.zero_phase_contour(phase_map)
    np.testing.assert_array_equal(contour.n_roots, [1, 0])
    assert contour.gaps == [1]
    relaxed = analysis.zero_phase_contour(phase_map, min_contrast=0.0)
    np.testing.assert_array_equal(relaxed.n_roots, [1, 1])


def test_phase_map():
    thetas = [0.5, 1.5, 2.5]
    positions = [-1.0, 1.0]
    fits = [
        [
            analysis.fit_fringe(ALPHAS, 0.5 * (1 + c * np.cos(ALPHAS - p)))
            for c in (0.5, 0.9)
        ]
        for p in (0.1, 0.0, -0.1)
    ]
    phase_map = analysis.PhaseMap.from_fits(thetas, positions, fits)
    assert phase_map.shape == (3, 2)
    np.testing.assert_allclose(phase_map.phase[:, 0], [0.1, 0.0, -0.1], atol=1e-8)
    np.testing.assert_allclose(phase_map.contrast[0], [0.5, 0.9], atol=1e-8)
    frame = phase_map.to_frame()
    assert list(frame.columns) == ["theta", "x_um", "phi", "C"]
    assert len(frame) == 6
    assert_raises_message(
        rydising.exceptions.PreconditionError,
        "Expected phase and contrast grids of shape (3, 2)",
        analysis.PhaseMap,
        thetas,
        positions,
        np.zeros((2, 3)),
        np.zeros((2, 3)),
    )
    assert_raises_message(
        rydising.exceptions.PreconditionError,
        "positions must be strictly increasing",
        analysis.PhaseMap,
        thetas,
        [1.0, -1.0],
        np.zeros((3, 2)),
        np.zeros((3, 2)),
    )
