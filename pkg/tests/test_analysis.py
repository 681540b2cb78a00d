import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from afqm.analysis import (
    RESULT_COLUMNS, evaluate_point, fit_points, fit_power_law, noise_resilience_curve, read_results,
    reference_csv, results_csv, sweep,
)
from afqm.policy import InverseScalingPolicy, StateKind
from afqm.trialsim import NoiseConfig, estimate_cost

GOOD = InverseScalingPolicy(1.0, (1.6, -0.3, 0.4, 0.0), n_trained=16)


def test_fit_exact_log_linear():
    fit = fit_power_law([(10, 10**-0.7), (100, 10**-1.4), (1000, 10**-2.1)])
    assert fit.alpha == pytest.approx(0.7, abs=1e-12)
    assert fit.residual < 1e-12
    assert fit.points == 3


def test_fit_constant():
    fit = fit_power_law([(8, 0.3), (16, 0.3), (64, 0.3)])
    assert abs(fit.alpha) < 1e-12


@settings(max_examples=50)
@given(alpha=st.floats(-2, 2), pre=st.floats(1e-3, 1e3), ns=st.lists(st.integers(1, 10**5), min_size=3, max_size=8, unique=True))
def test_fit_recovers_planted_exponent(alpha, pre, ns):
    fit = fit_power_law([(n, pre * n**-alpha) for n in ns])
    assert fit.alpha == pytest.approx(alpha, abs=1e-9)
    assert fit.residual < 1e-12


def test_fit_rejects_bad_input():
    with pytest.raises(ValueError):
        fit_power_law([(1, 1), (2, 0.5)])
    with pytest.raises(ValueError):
        fit_power_law([(1, 1), (2, 0.0), (4, 0.2)])
    with pytest.raises(ValueError):
        fit_power_law([(1, 1), (2, -1), (4, 0.2)])


def test_weighted_fit_prefers_heavy_points():
    pts = [(10, 1.0), (20, 0.5), (40, 0.25), (80, 1.0)]
    heavy = fit_power_law(pts, weights=[1e6, 1e6, 1e6, 1e-6])
    assert heavy.alpha == pytest.approx(1.0, abs=1e-4)
    with pytest.raises(ValueError):
        fit_power_law(pts, weights=[1, 1, 1])


def test_zero_policy_sweep_is_flat():
    # no feedback: the estimate is the initial guess, whose draws do not depend on N
    pts = sweep(InverseScalingPolicy.zero(), [8, 16, 32, 64], trials=20000, seed=4)
    d = [p.imprecision for p in pts]
    assert len(set(d)) == 1
    assert d[0] > 10
    assert abs(fit_points(pts).alpha) < 1e-12


def test_sweep_validates_grid():
    with pytest.raises(ValueError):
        sweep(GOOD, [])
    with pytest.raises(ValueError):
        sweep(GOOD, [16, 8])


def test_sweep_flags_trained_point_and_reproduces():
    a = sweep(GOOD, [8, 16, 24], trials=2000, seed=3)
    b = sweep(GOOD, [8, 16, 24], trials=2000, seed=3)
    assert [p.trained_here for p in a] == [False, True, False]
    assert results_csv(a) == results_csv(b)


def test_sweep_retrain_source():
    calls = []

    def source(n):
        calls.append(n)
        return GOOD

    pts = sweep(source, [4, 6], trials=500)
    assert calls == [4, 6]
    assert all(p.trained_here for p in pts)


def test_sss_sweep_inherits_squeeze_coeff():
    pol = InverseScalingPolicy(1.0, (1.5, 0, 0, 0), StateKind.SSS, 0.6)
    pts = sweep(pol, [8, 27], trials=1000, seed=1)
    direct = estimate_cost(pol, 27, trials=1000, seed_base=1)
    assert pts[1].cost.holevo_variance == direct.holevo_variance


def test_noise_curve_zero_point_matches_noiseless():
    curve = noise_resilience_curve(GOOD, 16, "loss_eta", [0.0, 0.1], trials=4000, seed=2)
    plain = estimate_cost(GOOD, 16, trials=4000, seed_base=2)
    assert curve[0].cost.holevo_variance == plain.holevo_variance
    assert curve[0].cost.sharpness == plain.sharpness
    assert all(math.isfinite(p.cost.imprecision_stderr) for p in curve)


def test_noise_curve_rejects_unknown_parameter():
    with pytest.raises(ValueError):
        noise_resilience_curve(GOOD, 8, "temperature", [0.1])


def test_results_csv_round_trip(tmp_path):
    pts = [evaluate_point(GOOD, n, NoiseConfig(0.05, 0.1), 1500, 7) for n in (8, 12, 16)]
    path = tmp_path / "r.csv"
    path.write_text(results_csv(pts))
    rows = read_results(path)
    assert path.read_text().splitlines()[0] == ",".join(RESULT_COLUMNS)
    assert [r["n"] for r in rows] == [8, 12, 16]
    assert rows[1]["dphi"] == pts[1].imprecision
    assert rows[0]["eta"] == 0.05


def test_read_results_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("n,dphi\n8,0.1\n")
    with pytest.raises(ValueError):
        read_results(path)


def test_reference_curves():
    lines = reference_csv([4, 16]).splitlines()
    assert lines[0] == "n,sql,hl"
    assert lines[1] == "4,0.5,0.25"
    assert lines[2] == "16,0.25,0.0625"


def test_scaling_point_references():
    p = evaluate_point(GOOD, 25, trials=500)
    assert p.sql == pytest.approx(0.2) and p.hl == pytest.approx(0.04)
    np.testing.assert_equal(p.row()["K"], 500)
