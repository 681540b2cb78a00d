import math

import numpy as np
import pytest

from afqm import oracle
from afqm.dicke import Axis, SymmetricState, build_css, build_sine, build_sss, rotate
from afqm.policy import InverseScalingPolicy
from afqm.trialsim import NOISELESS, NoiseConfig, TrialDraws, run_trial


def test_symmetrize_basis_states():
    assert np.allclose(oracle.symmetrize(SymmetricState([1, 0])).amps, [1, 0])
    # |up down> and |down up> are indices 1 and 2
    assert np.allclose(oracle.symmetrize(SymmetricState([0, 1, 0])).amps, [0, 1 / math.sqrt(2), 1 / math.sqrt(2), 0])


def test_symmetrize_is_isometry():
    rng = np.random.default_rng(0)
    a, b = (rng.normal(size=7) + 1j * rng.normal(size=7) for _ in range(2))
    a, b = SymmetricState(a / np.linalg.norm(a)), SymmetricState(b / np.linalg.norm(b))
    fa, fb = oracle.symmetrize(a), oracle.symmetrize(b)
    assert abs(np.linalg.norm(fa.amps) - 1) < 1e-12
    assert abs(np.vdot(fa.amps, fb.amps) - a.overlap(b)) < 1e-12
    assert np.allclose(oracle.project_symmetric(fa).amps, a.amps)


def test_single_qubit_pi_flip():
    s = oracle.FullState(np.array([1, 0, 0, 0], dtype=complex))
    out = oracle.full_rotate(s, Axis.Y, math.pi, qubit=1)
    assert abs(abs(out.amps[1]) - 1) < 1e-12


def test_zero_rotation_identity():
    s = oracle.symmetrize(build_sine(4))
    assert np.allclose(oracle.full_rotate(s, Axis.X, 0.0).amps, s.amps)


@pytest.mark.parametrize("axis", list(Axis))
def test_collective_rotation_commutes_with_symmetrize(axis):
    s = build_sss(5, 0.3)
    a = oracle.full_rotate(oracle.symmetrize(s), axis, 0.81).amps
    b = oracle.symmetrize(rotate(s, axis, 0.81)).amps
    assert np.allclose(a, b, atol=1e-10)


def test_measure_up_state():
    out, p, _ = oracle.full_measure_qubit(oracle.FullState(np.array([1, 0], dtype=complex)), 0, 0.99)
    assert out == 0.5 and p == 1.0


def test_measure_bell_like():
    s = oracle.symmetrize(SymmetricState([0, 1, 0]))
    _, p, post = oracle.full_measure_qubit(s, 0, 0.1)
    assert p == pytest.approx(0.5)
    assert np.allclose(np.abs(post.amps), [0, 1, 0, 0])


def test_cap():
    with pytest.raises(ValueError):
        oracle.symmetrize(build_css(13))


@pytest.mark.parametrize("state_fn", [build_sine, build_css, lambda n: build_sss(n, 0.4)])
@pytest.mark.parametrize("noise", [NOISELESS, NoiseConfig(0.3, 0.4)])
def test_lockstep_n4(state_fn, noise):
    rng = np.random.default_rng(1)
    pol = InverseScalingPolicy(1.1, (1.3, 0.2, -0.6, 0.1))
    state = state_fn(4)
    for _ in range(10):
        d = TrialDraws.sample(rng, 4)
        a = run_trial(state, pol, noise, draws=d)
        b = oracle.run_trial_full(oracle.symmetrize(state), pol, noise, draws=d)
        assert a.branch_codes == b.branch_codes
        assert a.estimate == pytest.approx(b.estimate, abs=1e-12)


def test_random_cases_pass():
    reports = oracle.check_random_cases(range(2, 7), 30, seed=3)
    assert all(r.passed() for r in reports)
    assert {r.state_kind for r in reports} == {"sine", "sss", "css"}


def test_check_refuses_large():
    with pytest.raises(ValueError):
        oracle.check_random_cases([13], 1, 0)
