import dataclasses
import json

import numpy as np
import pytest

from stochfi.construct import SdeSystem
from stochfi.integral import FirstIntegral
from stochfi.verify import Domain, check_conditions, residuals_at, sample_points

BOX = Domain.box((0, 1), (-1, 1), (0.5, 2))


@pytest.fixture(scope="module")
def report(example_system, example_fi):
    return check_conditions(example_system, example_fi, BOX, 1000, 1e-8)


def test_example_passes(report):
    assert report.passed
    for c in ("wiener", "drift", "jump"):
        assert report[c].max_residual <= 1e-8
        assert report[c].n_errors == 0


def test_report_json(report):
    d = json.loads(report.to_json())
    assert d["passed"] is True
    assert set(d["conditions"]) == {"wiener", "drift", "jump"}
    assert "ok" in str(report)


def test_drift_perturbation_detected(example_system, example_fi):
    bad = example_system.with_drift(lambda t, x: example_system.drift(t, x) + np.array([0.1, 0.0]))
    rep = check_conditions(bad, example_fi, BOX, 200, 1e-8)
    assert rep["drift"].max_residual >= 0.01
    assert rep["wiener"].passed and rep["jump"].passed and not rep["drift"].passed


def test_jump_perturbation_flips_only_jump(example_system, example_fi):
    bad = dataclasses.replace(example_system, jump=lambda t, x, g: example_system.jump(t, x, g) + np.array([0.0, 0.1 * g]))
    rep = check_conditions(bad, example_fi, BOX, 200, 1e-8)
    assert not rep["jump"].passed
    assert rep["wiener"].passed and rep["drift"].passed


def test_diffusion_perturbation_flips_wiener(example_system, example_fi):
    bad = dataclasses.replace(
        example_system, diffusion=lambda t, x: example_system.diffusion(t, x) + np.array([[0.1], [0.0]]), diffusion_exprs=None
    )
    rep = check_conditions(bad, example_fi, BOX, 200, 1e-8)
    assert not rep["wiener"].passed
    assert rep["jump"].passed


def test_trivial_system_exact_zero():
    fi = FirstIntegral.from_string("x1*x2", 2)
    sys = SdeSystem.from_exprs(2, ["0", "0"], [["0", "0"]])
    rep = check_conditions(sys, fi, BOX, 100)
    assert all(rep[c].max_residual == 0.0 for c in ("wiener", "drift", "jump"))


def test_domain_errors_counted():
    fi = FirstIntegral.from_string("sqrt(x1)", 2)
    sys = SdeSystem.from_exprs(2, ["0", "0"], [["0", "0"]])
    rep = check_conditions(sys, fi, Domain.box((0, 1), (-1, 1), (0, 1)), 100)
    assert rep.warnings > 0
    assert rep["wiener"].n_errors > 0 and rep["wiener"].max_residual == 0.0


def test_sampling_deterministic_and_inside():
    a = sample_points(BOX, 64, (0, 1))
    assert np.array_equal(a, sample_points(BOX, 64, (0, 1)))
    lo = np.array([0, -1, 0.5, 0])
    hi = np.array([1, 1, 2, 1])
    assert np.all((a >= lo) & (a <= hi))


def test_residuals_at_manual(example_system, example_fi):
    r = residuals_at(example_system, example_fi, 0.0, [0.0, 1.0])
    assert r["wiener"] <= 1e-15 and r["drift"] <= 1e-15
