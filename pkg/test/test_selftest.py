import numpy as np
from parameterized import parameterized
from rydising.selftest import SelfTest


@parameterized.expand(
    [
        ("check_blockade_limit",),
        ("check_softcore_agreement",),
        ("check_twisting_law",),
        ("check_product_formula",),
        ("check_backend_consistency",),
        ("check_echo_cancellation",),
        ("check_fixed_points",),
        ("check_orbit_center",),
        ("check_bifurcation",),
        ("check_fringe_statistics",),
    ]
)
def test_check(name):
    result = getattr(SelfTest(seed=42), name)()
    results = result if isinstance(result, list) else [result]
    for record in results:
        assert record["passed"], record
        assert np.isfinite(record["value"])


def test_set_seed():
    selftest = SelfTest()
    assert selftest.set_seed(3) == 3
    first = selftest.check_fringe_statistics(n_trials=5)
    selftest.set_seed(3)
    assert selftest.check_fringe_statistics(n_trials=5) == first


def test_report():
    report = SelfTest(seed=0).run()
    assert report["passed"]
    names = [record["name"] for record in report["checks"]]
    assert len(names) == 13
    assert "bifurcation" in names
    assert "twisting_anchor" in names


def test_twisting_anchor():
    records = SelfTest(seed=1).check_twisting_law()
    anchor = [record for record in records if record["name"] == "twisting_anchor"]
    assert len(anchor) == 1
    assert anchor[0]["passed"], anchor[0]
    assert anchor[0]["tolerance"] == 0.1
