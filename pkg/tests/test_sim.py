import math

import numpy as np
import pytest

from stochfi.construct import SdeSystem
from stochfi.integral import FirstIntegral
from stochfi.sim import BlowUpError, MarkLaw, monte_carlo, path_seed, simulate, time_grid

LAW = MarkLaw.uniform(0.0, 1.0, intensity=2.0)


def _frozen():
    fi = FirstIntegral.from_string("x1 + x2", 2)
    return SdeSystem.from_exprs(2, ["0", "0"], [["0", "0"]], integral=fi)


def test_frozen_dynamics():
    p = simulate(_frozen(), [1.0, 2.0], 1.0, 0.01, MarkLaw.uniform(intensity=0.0), seed=3)
    assert np.all(p.states == [1.0, 2.0])
    assert np.all(p.invariant == 3.0)
    assert p.max_deviation() == 0.0 and p.jumps == []


def test_time_grid():
    g = time_grid(1.0, 0.3)
    assert g == pytest.approx([0.0, 0.3, 0.6, 0.9, 1.0])
    assert time_grid(1.0, 0.25).tolist() == [0.0, 0.25, 0.5, 0.75, 1.0]


def test_example_path_conserves(small_system, example_fi):
    p = simulate(small_system, [0.0, 1.0], 1.0, 1e-3, LAW, seed=path_seed(0, 0), integral=example_fi)
    assert p.max_deviation() <= 0.05
    for ev in p.jumps:
        assert abs(ev.u_after - ev.u_before) <= 1e-8


def test_determinism(small_system, example_fi):
    a = simulate(small_system, [0.0, 1.0], 0.2, 1e-3, LAW, seed=11, integral=example_fi)
    b = simulate(small_system, [0.0, 1.0], 0.2, 1e-3, LAW, seed=11, integral=example_fi)
    assert a.csv_text() == b.csv_text()
    c = simulate(small_system, [0.0, 1.0], 0.2, 1e-3, LAW, seed=12, integral=example_fi)
    assert a.csv_text() != c.csv_text()


def test_single_path_monte_carlo_matches_simulate(small_system, example_fi):
    st = monte_carlo(small_system, [0.0, 1.0], 0.5, 1e-3, LAW, 1, seed=4, integral=example_fi)
    p = simulate(small_system, [0.0, 1.0], 0.5, 1e-3, LAW, seed=path_seed(4, 0), integral=example_fi)
    assert st.max_deviation[0] == p.max_deviation()
    assert st.jump_residual[0] == p.jump_residual
    assert st.n_jumps[0] == len(p.jumps)


def test_many_jumps_are_exact(small_system, example_fi):
    law = MarkLaw.uniform(0.0, 1.0, intensity=50.0)
    st = monte_carlo(small_system, [0.0, 1.0], 0.2, 1e-3, law, 5, seed=1, integral=example_fi)
    assert st.n_failed == 0
    assert st.n_jumps.sum() > 20
    assert np.all(st.jump_residual <= 1e-6 * np.maximum(st.n_jumps, 1))


def test_brownian_coupling():
    # pure Brownian motion: x(T) = x0 + W(T) whatever the step
    fi = FirstIntegral.from_string("x1", 2)
    sys = SdeSystem.from_exprs(2, ["0", "0"], [["1", "0"]], integral=fi)
    law = MarkLaw.uniform(intensity=0.0)
    ends = [simulate(sys, [0.0, 0.0], 1.0, dt, law, seed=5, brownian_dt=1e-3).states[-1, 0] for dt in (1e-3, 2e-3, 4e-3)]
    assert ends[0] == pytest.approx(ends[1], abs=1e-12) and ends[0] == pytest.approx(ends[2], abs=1e-12)


def test_brownian_step_must_divide():
    with pytest.raises(ValueError):
        simulate(_frozen(), [0.0, 0.0], 1.0, 1.5e-3, LAW, seed=0, brownian_dt=1e-3)


def test_jump_counts_are_poisson():
    st = monte_carlo(_frozen(), [0.0, 0.0], 1.0, 0.1, LAW, 400, seed=2)
    # mean lambda*T = 2, standard error sqrt(2/400) ~ 0.07
    assert st.n_jumps.mean() == pytest.approx(2.0, abs=0.3)
    assert st.n_jumps.var() == pytest.approx(2.0, abs=0.6)


def test_mark_law_support_checked():
    with pytest.raises(ValueError):
        simulate(_frozen(), [0.0, 0.0], 1.0, 0.1, MarkLaw.exponential(1.0), seed=0)
    with pytest.raises(ValueError):
        MarkLaw("gaussian")


def test_blowup_recorded_not_fatal():
    fi = FirstIntegral.from_string("x1", 2)
    sys = SdeSystem.from_exprs(2, ["x1^2", "0"], [["0", "0"]], integral=fi)
    law = MarkLaw.uniform(intensity=0.0)
    with pytest.raises(BlowUpError) as info:
        simulate(sys, [100.0, 0.0], 1.0, 0.1, law, seed=0)
    assert 0.0 < info.value.time <= 1.0
    st = monte_carlo(sys, [100.0, 0.0], 1.0, 0.1, law, 3, seed=0, bound=0.05)
    assert st.n_failed == 3 and not st.passed
    assert math.isnan(st.max) and st.to_dict()["per_path_max_deviation"] == [None] * 3


def test_rk4_exact_drift_flow(example_fi):
    # B = 0, A = R for h3 = x1 - t: the drift flow lies on u = const
    from stochfi.construct import construct_system
    from stochfi.integral import FreeFamily

    fam = FreeFamily.from_strings("diffusion", ["x1 - t"], 2)
    sys = construct_system(example_fi, fam, FreeFamily("jump", ()), q00="0", anchor=(0.0, [0.0, 1.0]))
    p = simulate(sys, [0.0, 1.0], 1.0, 1e-2, LAW, seed=0, integral=example_fi, scheme="rk4")
    assert p.max_deviation() <= 1e-8
    e = simulate(sys, [0.0, 1.0], 1.0, 1e-2, LAW, seed=0, integral=example_fi)
    assert e.max_deviation() > 1e-4


def test_csv_layout(tmp_path, small_system, example_fi):
    p = simulate(small_system, [0.0, 1.0], 0.05, 1e-2, LAW, seed=0, integral=example_fi)
    p.to_csv(tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "t,x1,x2,u,is_jump"
    assert len(lines) == 1 + p.times.size


def test_stats_json(small_system, example_fi):
    st = monte_carlo(small_system, [0.0, 1.0], 0.1, 1e-2, LAW, 3, seed=0, integral=example_fi, bound=0.05)
    d = st.to_dict()
    assert d["n_paths"] == 3 and d["passed"] is True and d["fraction_within_bound"] == 1.0
    assert set(d["quantiles"]) == {"0.5", "0.9", "0.99"}
