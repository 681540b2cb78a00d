"""Population optimizers (global-best PSO, DE/rand/1/bin) for policy training."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .dicke import SymmetricState
from .policy import InverseScalingPolicy, SearchBox, StateKind, default_box, delta_table, DEFAULT_TERMS
from .trialsim import (
    NOISELESS, NoiseConfig, build_input, cost_from_errors, default_trial_count, draw_block,
    final_estimates, holevo_from_sharpness, policy_input, estimate_cost,
)

log = logging.getLogger(__name__)

HELDOUT_FACTOR = 4


@dataclass(frozen=True)
class PSOParams:
    inertia: float = 0.7298
    cognitive: float = 1.49618
    social: float = 1.49618
    # max speed per dimension as a fraction of the box width
    velocity_clamp: float = 0.2


@dataclass(frozen=True)
class DEParams:
    weight: float = 0.7
    crossover: float = 0.9


@dataclass
class OptimizerConfig:
    algo: str = "pso"
    agents: int | None = None
    iterations: int = 300
    box: SearchBox | None = None
    pso: PSOParams = field(default_factory=PSOParams)
    de: DEParams = field(default_factory=DEParams)
    seed: int = 0
    trials_per_eval: int | None = None
    n_terms: int = DEFAULT_TERMS
    common_random_numbers: bool = True
    noise: NoiseConfig = NOISELESS

    def resolved(self, state_kind: StateKind | str, n_qubits: int) -> "OptimizerConfig":
        """Copy with the N-dependent defaults filled in."""
        box = self.box or default_box(state_kind, n_qubits, self.n_terms)
        agents = self.agents if self.agents is not None else 20 * box.dim
        trials = self.trials_per_eval if self.trials_per_eval is not None else default_trial_count(n_qubits)
        cfg = OptimizerConfig(
            self.algo, agents, self.iterations, box, self.pso, self.de, self.seed, trials,
            self.n_terms, self.common_random_numbers, self.noise,
        )
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.algo not in ("pso", "de"):
            raise ValueError(f"unknown algorithm {self.algo!r}")
        if self.agents is not None and self.agents < 4:
            raise ValueError("need at least 4 agents")
        if self.iterations < 1:
            raise ValueError("need at least one iteration")

    def echo(self) -> dict:
        d = {
            "algo": self.algo, "agents": self.agents, "iterations": self.iterations,
            "seed": self.seed, "trials_per_eval": self.trials_per_eval, "n_terms": self.n_terms,
            "common_random_numbers": self.common_random_numbers,
            "pso": asdict(self.pso), "de": asdict(self.de), "noise": asdict(self.noise),
        }
        if self.box is not None:
            d["box"] = {nm: [float(lo), float(hi)] for nm, lo, hi in zip(self.box.names, self.box.low, self.box.high)}
        return d


# -- PSO ------------------------------------------------------------------------

@dataclass
class Swarm:
    position: np.ndarray
    velocity: np.ndarray
    best_position: np.ndarray
    best_cost: np.ndarray
    global_position: np.ndarray
    global_cost: float


def init_swarm(box: SearchBox, agents: int, rng: np.random.Generator, params: PSOParams) -> Swarm:
    x = box.low + rng.random((agents, box.dim)) * box.width
    v = (2 * rng.random((agents, box.dim)) - 1) * params.velocity_clamp * box.width
    return Swarm(x, v, x.copy(), np.full(agents, np.inf), x[0].copy(), np.inf)


def pso_step(swarm: Swarm, rng: np.random.Generator, params: PSOParams, box: SearchBox) -> Swarm:
    """Move every particle; positions are clamped and the offending velocity reflected."""
    shape = swarm.position.shape
    r1 = rng.random(shape)
    r2 = rng.random(shape)
    v = (
        params.inertia * swarm.velocity
        + params.cognitive * r1 * (swarm.best_position - swarm.position)
        + params.social * r2 * (swarm.global_position - swarm.position)
    )
    vmax = params.velocity_clamp * box.width
    v = np.clip(v, -vmax, vmax)
    x = swarm.position + v
    outside = (x < box.low) | (x > box.high)
    x = np.clip(x, box.low, box.high)
    v = np.where(outside, -v, v)
    return Swarm(x, v, swarm.best_position, swarm.best_cost, swarm.global_position, swarm.global_cost)


def pso_record(swarm: Swarm, costs: np.ndarray) -> Swarm:
    """Fold freshly evaluated costs into the personal and global bests."""
    better = costs < swarm.best_cost
    best_pos = np.where(better[:, None], swarm.position, swarm.best_position)
    best_cost = np.where(better, costs, swarm.best_cost)
    g = int(np.argmin(best_cost))
    if best_cost[g] < swarm.global_cost:
        gpos, gcost = best_pos[g].copy(), float(best_cost[g])
    else:
        gpos, gcost = swarm.global_position, swarm.global_cost
    return Swarm(swarm.position, swarm.velocity, best_pos, best_cost, gpos, gcost)


# -- DE -----------------------------------------------------------------------

def de_propose(pop: np.ndarray, rng: np.random.Generator, params: DEParams, box: SearchBox) -> np.ndarray:
    """DE/rand/1/bin trial vectors; out-of-box components are redrawn uniformly."""
    n, dim = pop.shape
    if n < 4:
        raise ValueError("DE needs a population of at least 4")
    trials = np.empty_like(pop)
    for i in range(n):
        others = rng.choice(n - 1, size=3, replace=False)
        a, b, c = np.where(others >= i, others + 1, others)
        mutant = pop[a] + params.weight * (pop[b] - pop[c])
        cross = rng.random(dim) < params.crossover
        cross[rng.integers(dim)] = True
        trial = np.where(cross, mutant, pop[i])
        bad = (trial < box.low) | (trial > box.high)
        if bad.any():
            trial[bad] = box.low[bad] + rng.random(int(bad.sum())) * box.width[bad]
        trials[i] = trial
    return trials


def de_select(pop, costs, trials, trial_costs):
    """Greedy replacement; incumbents survive ties."""
    take = trial_costs < costs
    return np.where(take[:, None], trials, pop), np.where(take, trial_costs, costs)


def de_step(pop, costs, objective: Callable[[np.ndarray], np.ndarray], rng, params: DEParams, box: SearchBox):
    trials = de_propose(pop, rng, params, box)
    return de_select(pop, costs, trials, np.asarray(objective(trials), dtype=float))


# -- driver -------------------------------------------------------------------

@dataclass
class MinimizeResult:
    x: np.ndarray
    cost: float
    trace: list[float]
    evaluations: int


def minimize(objective, box: SearchBox, algo: str = "pso", agents: int = 100, iterations: int = 300,
             seed: int = 0, pso: PSOParams = PSOParams(), de: DEParams = DEParams(),
             callback=None) -> MinimizeResult:
    """Minimize ``objective(X, iteration) -> costs`` over ``box``.

    The trace holds the best cost seen after each iteration (the initial
    population counts as iteration 0 of DE and is evaluated before the loop).
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0x0B7,)))
    trace = []
    evaluations = 0
    if algo == "pso":
        swarm = init_swarm(box, agents, rng, pso)
        for it in range(iterations):
            if it > 0:
                swarm = pso_step(swarm, rng, pso, box)
            costs = np.asarray(objective(swarm.position, it), dtype=float)
            evaluations += agents
            swarm = pso_record(swarm, costs)
            trace.append(swarm.global_cost)
            if callback:
                callback(it, swarm.global_cost, swarm.global_position)
        return MinimizeResult(swarm.global_position, swarm.global_cost, trace, evaluations)
    if algo == "de":
        if agents < 4:
            raise ValueError("DE needs a population of at least 4")
        pop = box.low + rng.random((agents, box.dim)) * box.width
        costs = np.asarray(objective(pop, 0), dtype=float)
        evaluations += agents
        for it in range(iterations):
            if it > 0:
                trials = de_propose(pop, rng, de, box)
                pop, costs = de_select(pop, costs, trials, np.asarray(objective(trials, it), dtype=float))
                evaluations += agents
            g = int(np.argmin(costs))
            best = min(costs[g], trace[-1]) if trace else costs[g]
            trace.append(float(best))
            if callback:
                callback(it, trace[-1], pop[g])
        g = int(np.argmin(costs))
        return MinimizeResult(pop[g].copy(), float(costs[g]), trace, evaluations)
    raise ValueError(f"unknown algorithm {algo!r}")


class PolicyObjective:
    """Holevo variance of a batch of policy vectors on a shared draw block."""

    def __init__(self, state_kind: StateKind | str, n_qubits: int, trials: int, seed: int,
                 noise: NoiseConfig = NOISELESS, common_random_numbers: bool = True):
        self.kind = StateKind(state_kind)
        self.n = n_qubits
        self.trials = trials
        self.seed = seed
        self.noise = noise
        self.crn = common_random_numbers
        self._fixed_state = None if self.kind is StateKind.SSS else build_input(self.kind, n_qubits)

    def policies(self, X: np.ndarray) -> list[InverseScalingPolicy]:
        return [InverseScalingPolicy.from_vector(x, self.kind, self.n) for x in X]

    def states(self, pols) -> list[SymmetricState]:
        if self._fixed_state is not None:
            return [self._fixed_state] * len(pols)
        return [policy_input(p, self.n) for p in pols]

    def iteration_seed(self, iteration: int, agent: int = 0) -> tuple[int, ...]:
        return (self.seed, 0, iteration) if self.crn else (self.seed, 0, iteration, agent + 1)

    def __call__(self, X: np.ndarray, iteration: int = 0) -> np.ndarray:
        pols = self.policies(X)
        states = self.states(pols)
        deltas = np.array([delta_table(p, self.n) for p in pols])
        if self.crn:
            block = draw_block(self.iteration_seed(iteration), self.n, self.trials)
            final = final_estimates(states, deltas, block, self.noise)
            errors = block.phase[None, :] - final
        else:
            errors = np.empty((len(pols), self.trials))
            for a in range(len(pols)):
                block = draw_block(self.iteration_seed(iteration, a), self.n, self.trials)
                errors[a] = block.phase - final_estimates([states[a]], deltas[a:a + 1], block, self.noise)[0]
        s = np.abs(np.mean(np.exp(1j * errors), axis=1))
        return np.array([holevo_from_sharpness(v)[0] for v in s])


@dataclass
class TrainingRun:
    policy: InverseScalingPolicy
    cost: float
    train_cost: float
    trace: list[float]
    wall_time: float
    config: dict
    heldout_trials: int
    heldout_seed: int

    def to_record(self) -> dict:
        from .policy import to_record
        return {
            "policy": to_record(self.policy),
            "heldout_cost": self.cost,
            "train_cost": self.train_cost,
            "heldout_trials": self.heldout_trials,
            "heldout_seed": self.heldout_seed,
            "wall_time": self.wall_time,
            "config": self.config,
            "trace": list(self.trace),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "TrainingRun":
        from .policy import from_record
        return cls(from_record(rec["policy"]), rec["heldout_cost"], rec["train_cost"], rec["trace"],
                   rec["wall_time"], rec["config"], rec["heldout_trials"], rec["heldout_seed"])


def train(state_kind: StateKind | str, n_qubits: int, config: OptimizerConfig | None = None,
          progress: bool = False) -> TrainingRun:
    """Search the policy box; the winner is re-scored on ``HELDOUT_FACTOR * K`` fresh trials."""
    kind = StateKind(state_kind)
    if n_qubits < 1:
        raise ValueError("n_qubits must be >= 1")
    if kind is StateKind.SSS and n_qubits < 2:
        raise ValueError("sss input needs at least 2 qubits")
    cfg = (config or OptimizerConfig()).resolved(kind, n_qubits)
    objective = PolicyObjective(kind, n_qubits, cfg.trials_per_eval, cfg.seed, cfg.noise, cfg.common_random_numbers)

    def report(it, best, x):
        if progress and (it % 10 == 0 or it == cfg.iterations - 1):
            log.info("iter %d best V=%.6g x=%s", it, best, np.array2string(np.asarray(x), precision=4))

    t0 = time.perf_counter()
    result = minimize(objective, cfg.box, cfg.algo, cfg.agents, cfg.iterations, cfg.seed, cfg.pso, cfg.de, report)
    heldout_trials = HELDOUT_FACTOR * cfg.trials_per_eval
    candidate = InverseScalingPolicy.from_vector(result.x, kind, n_qubits)
    est = estimate_cost(candidate, n_qubits, cfg.noise, heldout_trials, seed_base=cfg.seed)
    wall = time.perf_counter() - t0
    policy = InverseScalingPolicy.from_vector(
        result.x, kind, n_qubits, seed=cfg.seed, cost=est.holevo_variance,
        extra={"algo": cfg.algo, "heldout_trials": heldout_trials},
    )
    return TrainingRun(policy, est.holevo_variance, result.cost, result.trace, wall, cfg.echo(),
                       heldout_trials, cfg.seed)
