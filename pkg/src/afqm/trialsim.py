"""Adaptive-feedback trials and the Monte-Carlo sharpness cost.

One trial: draw a true phase and an initial guess uniformly in [-pi, pi),
then send the N qubits through the interferometer one at a time.  Qubit i is
rotated by ``theta = phase + eps_i - phi_current`` about y and measured in z;
a detection with outcome s moves the compensation by ``-2 s delta_n``.  A lost
qubit is traced out and leaves the compensation untouched.

Random draws for a trial are laid out as (phase, guess, noise[N], loss[N],
meas[N]).  Trials are grouped in chunks of ``CHUNK``; chunk c is generated
from ``SeedSequence(seed_base, spawn_key=(c,))``, so trial k's draws depend
only on (seed_base, k, N) and never on batching or thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernel
from .dicke import SymmetricState, build_css, build_sine, build_sss, split, split_measure
from .policy import InverseScalingPolicy, StateKind, delta_table, squeeze_time, update_compensation, wrap_phase

CHUNK = 1024
_SLAB_CHUNKS = 16


@dataclass(frozen=True)
class NoiseConfig:
    loss_eta: float = 0.0
    phase_sigma: float = 0.0
    # one fluctuation per trial instead of one per qubit
    common_phase_noise: bool = False
    # advance the feedback index per physical qubit instead of per detection
    index_by_position: bool = False

    def __post_init__(self):
        if not 0.0 <= self.loss_eta <= 1.0:
            raise ValueError(f"loss_eta must lie in [0, 1], got {self.loss_eta}")
        if not (self.phase_sigma >= 0.0 and math.isfinite(self.phase_sigma)):
            raise ValueError(f"phase_sigma must be finite and >= 0, got {self.phase_sigma}")

    @property
    def noiseless(self) -> bool:
        return self.loss_eta == 0.0 and self.phase_sigma == 0.0


NOISELESS = NoiseConfig()


@dataclass(frozen=True)
class TrialDraws:
    """Random inputs of one trial (a row of a :class:`DrawBlock`)."""

    phase: float
    guess: float
    noise: np.ndarray
    loss: np.ndarray
    meas: np.ndarray

    @classmethod
    def sample(cls, rng: np.random.Generator, n_qubits: int) -> "TrialDraws":
        phase, guess = -np.pi + 2 * np.pi * rng.random(2)
        return cls(
            float(phase), float(guess),
            rng.standard_normal(n_qubits), rng.random(n_qubits), rng.random(n_qubits),
        )

    def shifted(self, offset: float) -> "TrialDraws":
        """Same draws with phase and guess both moved by ``offset`` (wrapped)."""
        return TrialDraws(
            wrap_phase(self.phase + offset), wrap_phase(self.guess + offset),
            self.noise, self.loss, self.meas,
        )


@dataclass(frozen=True)
class DrawBlock:
    """Draws for trials ``start .. start + K - 1`` at a fixed qubit count."""

    phase: np.ndarray
    guess: np.ndarray
    noise: np.ndarray
    loss: np.ndarray
    meas: np.ndarray

    @property
    def trials(self) -> int:
        return self.phase.size

    def row(self, t: int) -> TrialDraws:
        return TrialDraws(
            float(self.phase[t]), float(self.guess[t]),
            self.noise[t], self.loss[t], self.meas[t],
        )

    @classmethod
    def from_rows(cls, rows: list[TrialDraws]) -> "DrawBlock":
        return cls(
            np.array([r.phase for r in rows]), np.array([r.guess for r in rows]),
            np.array([r.noise for r in rows]), np.array([r.loss for r in rows]),
            np.array([r.meas for r in rows]),
        )


def _chunk(seed_base: int, n_qubits: int, c: int):
    rng = np.random.default_rng(np.random.SeedSequence(seed_base, spawn_key=(c,)))
    pg = -np.pi + 2 * np.pi * rng.random((CHUNK, 2))
    noise = rng.standard_normal((CHUNK, n_qubits))
    loss = rng.random((CHUNK, n_qubits))
    meas = rng.random((CHUNK, n_qubits))
    return pg, noise, loss, meas


def draw_block(seed_base: int, n_qubits: int, trials: int, start: int = 0) -> DrawBlock:
    if trials < 1:
        raise ValueError("need at least one trial")
    stop = start + trials
    parts = [_chunk(seed_base, n_qubits, c) for c in range(start // CHUNK, (stop - 1) // CHUNK + 1)]
    lo = start - (start // CHUNK) * CHUNK
    pg, noise, loss, meas = (np.concatenate(x)[lo:lo + trials] for x in zip(*parts))
    return DrawBlock(
        np.ascontiguousarray(pg[:, 0]), np.ascontiguousarray(pg[:, 1]),
        np.ascontiguousarray(noise), np.ascontiguousarray(loss), np.ascontiguousarray(meas),
    )


# -- input states -----------------------------------------------------------

def build_input(kind: StateKind | str, n_qubits: int, squeeze: float | None = None) -> SymmetricState:
    kind = StateKind(kind)
    if kind is StateKind.SINE:
        return build_sine(n_qubits)
    if kind is StateKind.CSS:
        return build_css(n_qubits)
    if squeeze is None:
        raise ValueError("sss input needs a squeezing time")
    return build_sss(n_qubits, squeeze)


def policy_input(policy: InverseScalingPolicy, n_qubits: int) -> SymmetricState:
    """Input state for ``policy`` at ``n_qubits``; SSS rescales T_s from c_s."""
    if policy.state_kind is StateKind.SSS:
        return build_input(StateKind.SSS, n_qubits, squeeze_time(policy, n_qubits))
    return build_input(policy.state_kind, n_qubits)


# -- single trial, reference path --------------------------------------------

@dataclass
class TrialRecord:
    phase: float
    guess: float
    outcomes: list[float] = field(default_factory=list)
    compensations: list[float] = field(default_factory=list)
    lost: int = 0
    estimate: float = 0.0
    # +1/-1 detected, +2/-2 lost (the unrecorded sample), per physical qubit
    branch_codes: list[int] = field(default_factory=list)

    @property
    def error(self) -> float:
        return wrap_phase(self.phase - self.estimate)


def run_trial(
    state: SymmetricState,
    policy: InverseScalingPolicy,
    noise: NoiseConfig = NOISELESS,
    rng: np.random.Generator | None = None,
    draws: TrialDraws | None = None,
) -> TrialRecord:
    """Simulate one trial with explicit Dicke-basis operations."""
    n = state.m
    if n < 1:
        raise ValueError("input state must hold at least one qubit")
    if draws is None:
        if rng is None:
            raise ValueError("give either rng or draws")
        draws = TrialDraws.sample(rng, n)
    deltas = delta_table(policy, n)
    rec = TrialRecord(phase=draws.phase, guess=draws.guess)
    phi_cur = draws.guess
    for i in range(n):
        eps = noise.phase_sigma * (draws.noise[0] if noise.common_phase_noise else draws.noise[i])
        theta = draws.phase + eps - phi_cur
        if draws.loss[i] < noise.loss_eta:
            outcome, _, state = split_measure(state, theta, draws.meas[i])
            rec.lost += 1
            rec.branch_codes.append(int(4 * outcome))
            continue
        outcome, _, state = split_measure(state, theta, draws.meas[i])
        rec.outcomes.append(outcome)
        rec.branch_codes.append(int(2 * outcome))
        idx = i if noise.index_by_position else len(rec.outcomes) - 1
        phi_cur = update_compensation(phi_cur, outcome, deltas[idx])
        rec.compensations.append(phi_cur)
    rec.estimate = phi_cur
    return rec


def enumerate_outcomes(
    state: SymmetricState,
    policy: InverseScalingPolicy,
    draws: TrialDraws,
    noise: NoiseConfig = NOISELESS,
) -> dict[tuple[int, ...], tuple[float, float]]:
    """Exact distribution over branch-code strings for fixed phase, guess and noise.

    Maps each string (codes as in :class:`TrialRecord`) to its probability and
    final estimate.  Loss flags are taken from ``draws``; the measurement draws
    are ignored.
    """
    n = state.m
    deltas = delta_table(policy, n)
    out: dict[tuple[int, ...], tuple[float, float]] = {}

    def walk(st, i, detected, phi_cur, prob, codes):
        if prob == 0.0:
            return
        if i == n:
            out[codes] = (prob, phi_cur)
            return
        eps = noise.phase_sigma * (draws.noise[0] if noise.common_phase_noise else draws.noise[i])
        p_up, up_state, down_state = split(st, draws.phase + eps - phi_cur)
        lost = draws.loss[i] < noise.loss_eta
        for outcome, p, nxt in ((0.5, p_up, up_state), (-0.5, 1.0 - p_up, down_state)):
            if nxt is None:
                continue
            if lost:
                walk(nxt, i + 1, detected, phi_cur, prob * p, codes + (int(4 * outcome),))
            else:
                idx = i if noise.index_by_position else detected
                walk(nxt, i + 1, detected + 1, update_compensation(phi_cur, outcome, deltas[idx]),
                     prob * p, codes + (int(2 * outcome),))

    walk(state, 0, 0, draws.guess, 1.0, ())
    return out


# -- batched evaluation --------------------------------------------------------

def _real_form(amps: np.ndarray) -> tuple[np.ndarray, bool]:
    """Remove the global phase; report whether the result is real."""
    k = int(np.argmax(np.abs(amps)))
    rotated = amps * np.exp(-1j * np.angle(amps[k]))
    return rotated, bool(np.max(np.abs(rotated.imag)) <= 1e-13 * np.abs(rotated[k]))


def final_estimates(
    states: list[SymmetricState] | np.ndarray,
    deltas: np.ndarray,
    block: DrawBlock,
    noise: NoiseConfig = NOISELESS,
    record: bool = False,
):
    """Final compensations, shape (agents, trials), for each state/delta row."""
    amps = np.array([s.amps if isinstance(s, SymmetricState) else s for s in states], dtype=np.complex128)
    deltas = np.ascontiguousarray(np.atleast_2d(deltas), dtype=float)
    if amps.shape[0] != deltas.shape[0] or deltas.shape[1] != amps.shape[1] - 1:
        raise ValueError("states and delta tables disagree in shape")
    forms = [_real_form(a) for a in amps]
    rotated = np.array([f[0] for f in forms])
    is_complex = not all(f[1] for f in forms)
    half = (block.phase - block.guess) / 2.0
    out, rec = _kernel.simulate_batch(
        np.ascontiguousarray(rotated.real), np.ascontiguousarray(rotated.imag) if is_complex
        else np.zeros_like(rotated.real),
        is_complex, deltas, float(noise.loss_eta), float(noise.phase_sigma),
        bool(noise.common_phase_noise), bool(noise.index_by_position),
        block.guess, half, block.noise, block.loss, block.meas, record,
    )
    return (out, rec) if record else out


@dataclass(frozen=True)
class CostEstimate:
    sharpness: float
    holevo_variance: float
    trials: int
    sentinel: bool = False
    variance_stderr: float = float("nan")
    imprecision_stderr: float = float("nan")

    @property
    def imprecision(self) -> float:
        return math.sqrt(self.holevo_variance) if self.holevo_variance >= 0 else float("nan")


def holevo_from_sharpness(s: float) -> tuple[float, bool]:
    """``1/S^2 - 1`` with a flagged +inf sentinel when S underflows."""
    s = min(float(s), 1.0)
    if s <= 0.0:
        return math.inf, True
    try:
        v = 1.0 / (s * s) - 1.0
    except (OverflowError, ZeroDivisionError):
        return math.inf, True
    if not math.isfinite(v):
        return math.inf, True
    return v, False


def sharpness(errors: np.ndarray) -> float:
    """``|mean exp(i * error)|`` over the last axis."""
    return float(np.abs(np.mean(np.exp(1j * np.asarray(errors)))))


def cost_from_errors(errors: np.ndarray, bootstrap_seed: int | None = None,
                     n_blocks: int = 50, n_resamples: int = 200) -> CostEstimate:
    errors = np.asarray(errors, dtype=float)
    s = sharpness(errors)
    v, flagged = holevo_from_sharpness(s)
    v_se = dphi_se = float("nan")
    if bootstrap_seed is not None and errors.size >= 2:
        v_se, dphi_se = block_bootstrap(errors, bootstrap_seed, n_blocks, n_resamples)
    return CostEstimate(s, v, int(errors.size), flagged, v_se, dphi_se)


def block_bootstrap(errors: np.ndarray, seed: int, n_blocks: int = 50, n_resamples: int = 200):
    """Standard errors of V and sqrt(V) from resampling contiguous trial blocks."""
    z = np.exp(1j * errors)
    blocks = np.array_split(z, min(n_blocks, z.size))
    sums = np.array([b.sum() for b in blocks])
    counts = np.array([b.size for b in blocks], dtype=float)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0xB007,)))
    pick = rng.integers(0, len(blocks), size=(n_resamples, len(blocks)))
    s = np.minimum(np.abs(sums[pick].sum(axis=1)) / counts[pick].sum(axis=1), 1.0)
    with np.errstate(divide="ignore"):
        v = 1.0 / s**2 - 1.0
    v = v[np.isfinite(v)]
    if v.size < 2:
        return float("inf"), float("inf")
    return float(np.std(v, ddof=1)), float(np.std(np.sqrt(v), ddof=1))


def default_trial_count(n_qubits: int) -> int:
    if n_qubits < 1:
        raise ValueError("n_qubits must be >= 1")
    return 10 * n_qubits * n_qubits


def trial_errors(
    policy: InverseScalingPolicy,
    n_qubits: int,
    noise: NoiseConfig = NOISELESS,
    trials: int | None = None,
    seed_base: int = 0,
    state_builder=None,
) -> np.ndarray:
    """Per-trial ``phase - estimate`` in trial-index order."""
    k_total = default_trial_count(n_qubits) if trials is None else int(trials)
    if k_total < 1:
        raise ValueError("need at least one trial")
    state = state_builder(n_qubits) if state_builder is not None else policy_input(policy, n_qubits)
    deltas = delta_table(policy, n_qubits)[None, :]
    slab = CHUNK * _SLAB_CHUNKS
    errors = np.empty(k_total)
    for lo in range(0, k_total, slab):
        block = draw_block(seed_base, n_qubits, min(slab, k_total - lo), start=lo)
        final = final_estimates([state], deltas, block, noise)[0]
        errors[lo:lo + block.trials] = block.phase - final
    return errors


def estimate_cost(
    policy: InverseScalingPolicy,
    n_qubits: int,
    noise: NoiseConfig = NOISELESS,
    trials: int | None = None,
    seed_base: int = 0,
    state_builder=None,
    stderr: bool = False,
) -> CostEstimate:
    """Sharpness and Holevo variance of ``policy`` over K trials.

    ``state_builder(n)`` overrides the input state implied by the policy.
    With ``stderr=True`` the error bars come from a block bootstrap.
    """
    errors = trial_errors(policy, n_qubits, noise, trials, seed_base, state_builder)
    return cost_from_errors(errors, bootstrap_seed=seed_base if stderr else None)
