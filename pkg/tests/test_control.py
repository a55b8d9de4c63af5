import math

import numpy as np
import pytest

from stochfi.control import ControlledSystem, ProgramControl, SingularGainError, residual_report, synthesize
from stochfi.integral import FreeFamily

P_EX = ["x1 + x2 + exp(-t)", "x1*x2 + exp(-2*t)"]
I2 = [["1", "0"], ["0", "1"]]
FAM = FreeFamily.from_strings("diffusion", ["x1"], 2)
GRID = [(t, np.array([x1, x2])) for t in (0.0, 0.5, 1.0) for x1 in np.linspace(-1, 1, 5) for x2 in np.linspace(0.5, 2, 5)]


@pytest.fixture(scope="module")
def example_control(example_fi):
    cs = ControlledSystem.from_exprs(2, P_EX, I2)
    pc, target = synthesize(cs, example_fi, FAM, FreeFamily("jump", ()), points=GRID, anchor=(0.0, [0.0, 1.0]))
    return cs, pc, target


def test_example_control_formula(example_control):
    cs, pc, target = example_control
    for t, x in GRID:
        a = target.drift(t, x)
        s = pc(t, x)
        assert s[0] == pytest.approx(a[0] - x[0] - x[1] - math.exp(-t), abs=1e-14)
        assert s[1] == pytest.approx(a[1] - x[0] * x[1] - math.exp(-2 * t), abs=1e-14)
        # with h3 = x1 the constructed drift is (-exp(-4 x1), 0)
        assert a == pytest.approx([-math.exp(-4 * x[0]), 0.0], rel=1e-13)


def test_identity_residual(example_control):
    cs, pc, target = example_control
    rep = residual_report(pc, cs, GRID)
    scale = max(1.0, max(np.abs(target.drift(t, x)).max() for t, x in GRID))
    assert rep.max <= 1e-10 * scale
    assert rep.to_dict()["n_points"] == len(GRID)


def test_perturbed_control_residual(example_control):
    cs, pc, target = example_control
    Q = [["2", "0"], ["1", "3"]]
    cs2 = ControlledSystem.from_exprs(2, P_EX, Q)
    pc2 = ProgramControl(cs2, target)
    bumped = lambda t, x: pc2(t, x) + np.array([1.0, 0.0])  # noqa: E731
    rep = residual_report(bumped, cs2, GRID, target=target)
    assert rep.residuals == pytest.approx(np.full(len(GRID), 2.0))  # ||Q[:, 0]||_inf


def test_empty_points(example_control):
    cs, pc, _ = example_control
    rep = residual_report(pc, cs, [])
    assert rep.max == 0.0 and rep.argmax is None


def test_zero_control_when_already_conserving(example_fi):
    cs = ControlledSystem.from_exprs(2, ["-exp(-4*x1)", "0"], I2)
    pc, _ = synthesize(cs, example_fi, FAM, FreeFamily("jump", ()))
    for t, x in GRID:
        assert np.all(np.abs(pc(t, x)) <= 1e-10)


def test_singular_gain_named(example_fi):
    cs = ControlledSystem.from_exprs(2, P_EX, [["1", "0"], ["0", "x1"]])
    with pytest.raises(SingularGainError) as info:
        synthesize(cs, example_fi, FAM, points=[(0.0, [1.0, 1.0]), (0.0, [0.0, 1.0])])
    assert info.value.x == [0.0, 1.0]


def test_closed_loop_matches_target(example_control):
    cs, pc, target = example_control
    cl = pc.closed_loop()
    for t, x in GRID[:10]:
        assert cl.drift(t, x) == pytest.approx(target.drift(t, x), abs=1e-14)
        assert np.array_equal(cl.diffusion(t, x), target.diffusion(t, x))
    assert cl.summary["control"]["P"] == ["x1+x2+exp(-t)", "x1*x2+exp(-2*t)"]
