"""Brute-force reference simulator on the full 2^N qubit space.

Used only to validate the Dicke-basis engine.  Qubit q is tensor factor q of
the reshaped ``(2,) * n`` amplitude array; index 0 on a factor is spin up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .dicke import Axis, SymmetricState
from .policy import InverseScalingPolicy, delta_table, update_compensation
from .trialsim import NOISELESS, NoiseConfig, TrialDraws, TrialRecord

MAX_QUBITS = 12

_PAULI = {
    Axis.X: np.array([[0, 1], [1, 0]], dtype=complex),
    Axis.Y: np.array([[0, -1j], [1j, 0]], dtype=complex),
    Axis.Z: np.array([[1, 0], [0, -1]], dtype=complex),
}


@dataclass(frozen=True)
class FullState:
    amps: np.ndarray

    @property
    def n(self) -> int:
        return int(round(math.log2(self.amps.size)))

    def tensor(self) -> np.ndarray:
        return self.amps.reshape((2,) * self.n)


def _check_size(n: int) -> None:
    if n > MAX_QUBITS:
        raise ValueError(f"oracle is capped at {MAX_QUBITS} qubits, got {n}")


def symmetrize(state: SymmetricState) -> FullState:
    """Spread Dicke amplitude k evenly over all strings with k down spins."""
    n = state.m
    _check_size(n)
    out = np.zeros(2**n, dtype=complex)
    for k in range(n + 1):
        weight = state.amps[k] / math.sqrt(math.comb(n, k))
        for downs in combinations(range(n), k):
            # most significant bit is qubit 0
            idx = sum(1 << (n - 1 - q) for q in downs)
            out[idx] = weight
    return FullState(out)


def project_symmetric(state: FullState) -> SymmetricState:
    """Inverse of :func:`symmetrize` for permutation-symmetric states."""
    n = state.n
    counts = np.array([bin(i).count("1") for i in range(2**n)])
    amps = np.array([state.amps[counts == k].sum() / math.sqrt(math.comb(n, k)) for k in range(n + 1)])
    return SymmetricState(amps)


def qubit_rotation(axis: Axis | str, angle: float) -> np.ndarray:
    """``exp(-i * angle * sigma_axis / 2)``."""
    p = _PAULI[Axis(axis)]
    return math.cos(angle / 2) * np.eye(2) - 1j * math.sin(angle / 2) * p


def _apply(state: FullState, q: int, gate: np.ndarray) -> FullState:
    t = np.tensordot(gate, state.tensor(), axes=([1], [q]))
    return FullState(np.moveaxis(t, 0, q).reshape(-1))


def full_rotate(state: FullState, axis: Axis | str, angle: float, qubit: int | None = None) -> FullState:
    """Rotate one qubit, or every qubit (collective rotation) when ``qubit`` is None."""
    gate = qubit_rotation(axis, angle)
    targets = range(state.n) if qubit is None else [qubit]
    for q in targets:
        state = _apply(state, q, gate)
    return state


def qubit_up_probability(state: FullState, qubit: int) -> float:
    t = np.moveaxis(state.tensor(), qubit, 0)
    return float(np.sum(np.abs(t[0]) ** 2))


def project_qubit(state: FullState, qubit: int, outcome: float) -> FullState:
    t = np.moveaxis(state.tensor(), qubit, 0).copy()
    t[1 if outcome > 0 else 0] = 0
    t /= np.linalg.norm(t)
    return FullState(np.moveaxis(t, 0, qubit).reshape(-1))


def full_measure_qubit(state: FullState, qubit: int, rng_draw: float) -> tuple[float, float, FullState]:
    """Projective z-measurement; up iff ``rng_draw < prob_up``."""
    p_up = qubit_up_probability(state, qubit)
    outcome = 0.5 if rng_draw < p_up else -0.5
    return outcome, p_up, project_qubit(state, qubit, outcome)


def run_trial_full(
    state: FullState,
    policy: InverseScalingPolicy,
    noise: NoiseConfig = NOISELESS,
    draws: TrialDraws | None = None,
) -> TrialRecord:
    """Same protocol as ``trialsim.run_trial``, qubit i measured at step i."""
    n = state.n
    deltas = delta_table(policy, n)
    rec = TrialRecord(phase=draws.phase, guess=draws.guess)
    phi_cur = draws.guess
    for i in range(n):
        eps = noise.phase_sigma * (draws.noise[0] if noise.common_phase_noise else draws.noise[i])
        theta = draws.phase + eps - phi_cur
        state = full_rotate(state, Axis.Y, theta, qubit=i)
        outcome, _, state = full_measure_qubit(state, i, draws.meas[i])
        if draws.loss[i] < noise.loss_eta:
            rec.lost += 1
            rec.branch_codes.append(int(4 * outcome))
            continue
        rec.outcomes.append(outcome)
        rec.branch_codes.append(int(2 * outcome))
        idx = i if noise.index_by_position else len(rec.outcomes) - 1
        phi_cur = update_compensation(phi_cur, outcome, deltas[idx])
        rec.compensations.append(phi_cur)
    rec.estimate = phi_cur
    return rec


def enumerate_full(
    state: FullState,
    policy: InverseScalingPolicy,
    draws: TrialDraws,
    noise: NoiseConfig = NOISELESS,
) -> dict[tuple[int, ...], tuple[float, float]]:
    """Exact branch-code distribution, computed on the full space."""
    n = state.n
    deltas = delta_table(policy, n)
    out = {}

    def walk(st, i, detected, phi_cur, prob, codes):
        if i == n:
            out[codes] = (prob, phi_cur)
            return
        eps = noise.phase_sigma * (draws.noise[0] if noise.common_phase_noise else draws.noise[i])
        st = full_rotate(st, Axis.Y, draws.phase + eps - phi_cur, qubit=i)
        p_up = qubit_up_probability(st, i)
        lost = draws.loss[i] < noise.loss_eta
        for outcome, p in ((0.5, p_up), (-0.5, 1.0 - p_up)):
            if p <= 0.0:
                continue
            nxt = project_qubit(st, i, outcome)
            if lost:
                walk(nxt, i + 1, detected, phi_cur, prob * p, codes + (int(4 * outcome),))
            else:
                idx = i if noise.index_by_position else detected
                walk(nxt, i + 1, detected + 1, update_compensation(phi_cur, outcome, deltas[idx]),
                     prob * p, codes + (int(2 * outcome),))

    walk(state, 0, 0, draws.guess, 1.0, ())
    return out


def total_variation(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, (0.0,))[0] - q.get(k, (0.0,))[0]) for k in keys)


# -- randomized equivalence check ----------------------------------------------

@dataclass(frozen=True)
class CaseReport:
    n: int
    state_kind: str
    noise: NoiseConfig
    outcomes_match: bool
    max_deviation: float
    total_variation: float

    def passed(self, tol: float = 1e-9) -> bool:
        return self.outcomes_match and self.max_deviation < tol and self.total_variation < tol


def random_case(rng: np.random.Generator, n: int):
    """A random (input state, policy, noise, draws) tuple at ``n`` qubits."""
    from .policy import StateKind
    from .trialsim import policy_input

    kinds = [StateKind.SINE, StateKind.CSS] + ([StateKind.SSS] if n >= 2 else [])
    kind = kinds[int(rng.integers(len(kinds)))]
    policy = InverseScalingPolicy(
        rng.uniform(0, 5), tuple(rng.uniform(-5, 5, 4)), kind,
        rng.uniform(0, 2 * n ** (1 / 6)) if kind is StateKind.SSS else None,
    )
    noise = NoiseConfig(
        loss_eta=float(rng.choice([0.0, 0.0, 0.2, 0.5])),
        phase_sigma=float(rng.choice([0.0, 0.0, 0.3, 0.5])),
        common_phase_noise=bool(rng.integers(2)),
        index_by_position=bool(rng.integers(2)),
    )
    return policy_input(policy, n), policy, noise, TrialDraws.sample(rng, n)


def _angle_gap(a: float, b: float) -> float:
    return abs(math.remainder(a - b, 2 * math.pi))


def check_case(state: SymmetricState, policy: InverseScalingPolicy, noise: NoiseConfig,
               draws: TrialDraws) -> CaseReport:
    """Compare the Dicke reference path, the compiled batch path and this oracle."""
    from .trialsim import DrawBlock, enumerate_outcomes, final_estimates, run_trial

    n = state.m
    full = symmetrize(state)
    dicke_rec = run_trial(state, policy, noise, draws=draws)
    full_rec = run_trial_full(full, policy, noise, draws=draws)
    est, codes = final_estimates([state], delta_table(policy, n)[None, :], DrawBlock.from_rows([draws]),
                                 noise, record=True)
    match = dicke_rec.branch_codes == full_rec.branch_codes == [int(c) for c in codes[0, 0]]
    dev = max(_angle_gap(dicke_rec.estimate, full_rec.estimate), _angle_gap(float(est[0, 0]), full_rec.estimate))
    dist_dicke = enumerate_outcomes(state, policy, draws, noise)
    dist_full = enumerate_full(full, policy, draws, noise)
    tv = total_variation(dist_dicke, dist_full)
    for key in dist_dicke.keys() & dist_full.keys():
        dev = max(dev, _angle_gap(dist_dicke[key][1], dist_full[key][1]))
    return CaseReport(n, policy.state_kind.value, noise, match, dev, tv)


def check_random_cases(n_values, cases: int, seed: int) -> list[CaseReport]:
    """``cases`` random comparisons, cycling through ``n_values``."""
    n_values = list(n_values)
    if any(n > MAX_QUBITS for n in n_values):
        raise ValueError(f"oracle is capped at {MAX_QUBITS} qubits")
    rng = np.random.default_rng(seed)
    return [check_case(*random_case(rng, n_values[i % len(n_values)])) for i in range(cases)]
