"""Scaling sweeps, power-law fits, transfer checks and noise-resilience curves."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .policy import InverseScalingPolicy, policy_id
from .trialsim import NOISELESS, CostEstimate, NoiseConfig, cost_from_errors, trial_errors

RESULT_COLUMNS = ("n", "state", "policy_id", "eta", "phase_sigma", "K", "S", "V", "dphi", "dphi_stderr", "seed")
RESULT_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ScalingPoint:
    n_qubits: int
    cost: CostEstimate
    noise: NoiseConfig
    policy_id: str
    state: str
    trained_here: bool
    seed: int

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be >= 1")

    @property
    def imprecision(self) -> float:
        return self.cost.imprecision

    @property
    def sql(self) -> float:
        return 1.0 / math.sqrt(self.n_qubits)

    @property
    def hl(self) -> float:
        return 1.0 / self.n_qubits

    def row(self) -> dict:
        c = self.cost
        return {
            "n": self.n_qubits, "state": self.state, "policy_id": self.policy_id,
            "eta": self.noise.loss_eta, "phase_sigma": self.noise.phase_sigma, "K": c.trials,
            "S": c.sharpness, "V": c.holevo_variance, "dphi": c.imprecision,
            "dphi_stderr": c.imprecision_stderr, "seed": self.seed,
        }


@dataclass(frozen=True)
class PowerLawFit:
    """``dphi ~ prefactor * N ** -alpha``; residual is the RMS log-space misfit."""

    alpha: float
    prefactor: float
    residual: float
    points: int

    def predict(self, n) -> np.ndarray:
        return self.prefactor * np.asarray(n, dtype=float) ** -self.alpha


def fit_power_law(points: Iterable[tuple[float, float]], weights: Sequence[float] | None = None) -> PowerLawFit:
    pts = [(float(n), float(d)) for n, d in points]
    if len(pts) < 3:
        raise ValueError(f"power-law fit needs at least 3 points, got {len(pts)}")
    n = np.array([p[0] for p in pts])
    d = np.array([p[1] for p in pts])
    if np.any(n <= 0) or not np.all(np.isfinite(d)) or np.any(d <= 0):
        raise ValueError("power-law fit needs positive, finite N and imprecision values")
    x, y = np.log(n), np.log(d)
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != x.shape or np.any(w <= 0):
        raise ValueError("weights must be positive, one per point")
    design = np.stack([np.ones_like(x), x], axis=1) * np.sqrt(w)[:, None]
    coef, *_ = np.linalg.lstsq(design, y * np.sqrt(w), rcond=None)
    intercept, slope = coef
    resid = y - (intercept + slope * x)
    rms = float(np.sqrt(np.sum(w * resid**2) / np.sum(w)))
    alpha = -float(slope)
    return PowerLawFit(0.0 if alpha == 0 else alpha, float(math.exp(intercept)), rms, len(pts))


def fit_points(points: Iterable[ScalingPoint], weighted: bool = False) -> PowerLawFit:
    pts = list(points)
    weights = None
    if weighted:
        # inverse variance in log space: var(log d) ~ (se / d)^2
        weights = [(p.imprecision / p.cost.imprecision_stderr) ** 2 for p in pts]
    return fit_power_law([(p.n_qubits, p.imprecision) for p in pts], weights)


def evaluate_point(policy: InverseScalingPolicy, n: int, noise: NoiseConfig = NOISELESS,
                   trials: int | None = None, seed: int = 0, trained_here: bool | None = None) -> ScalingPoint:
    errors = trial_errors(policy, n, noise, trials, seed)
    cost = cost_from_errors(errors, bootstrap_seed=seed)
    here = (policy.n_trained == n) if trained_here is None else trained_here
    return ScalingPoint(n, cost, noise, policy_id(policy), policy.state_kind.value, here, seed)


PolicySource = InverseScalingPolicy | Callable[[int], InverseScalingPolicy]


def sweep(source: PolicySource, n_list: Sequence[int], noise: NoiseConfig = NOISELESS,
          trials: int | Callable[[int], int] | None = None, seed: int = 0) -> list[ScalingPoint]:
    """Evaluate a fixed policy, or one obtained per N from ``source(n)``, over ``n_list``.

    A fixed squeezed-state policy keeps its ``c_s``; the squeezing time follows
    from it at each N.
    """
    ns = [int(n) for n in n_list]
    if not ns:
        raise ValueError("empty N list")
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise ValueError("N list must be strictly ascending")
    if ns[0] < 1:
        raise ValueError("N must be >= 1")
    fixed = isinstance(source, InverseScalingPolicy)
    out = []
    for n in ns:
        policy = source if fixed else source(n)
        k = trials(n) if callable(trials) else trials
        out.append(evaluate_point(policy, n, noise, k, seed, trained_here=None if fixed else True))
    return out


def retrain_source(state_kind, config=None) -> Callable[[int], InverseScalingPolicy]:
    """Per-N training source for :func:`sweep`."""
    from .optimizer import train

    def source(n: int) -> InverseScalingPolicy:
        return train(state_kind, n, config).policy

    return source


NOISE_PARAMETERS = ("loss_eta", "phase_sigma")


def noise_resilience_curve(policy: InverseScalingPolicy, n: int, parameter: str, grid: Sequence[float],
                           trials: int | None = None, seed: int = 0,
                           base: NoiseConfig = NOISELESS) -> list[ScalingPoint]:
    """V and its bootstrap error at each grid value of one noise parameter, same seeds throughout."""
    if parameter not in NOISE_PARAMETERS:
        raise ValueError(f"noise parameter must be one of {NOISE_PARAMETERS}")
    return [evaluate_point(policy, n, replace(base, **{parameter: float(g)}), trials, seed) for g in grid]


# -- tables -----------------------------------------------------------------

def reference_curves(n_list: Iterable[int]) -> list[dict]:
    return [{"n": int(n), "sql": 1.0 / math.sqrt(n), "hl": 1.0 / n} for n in n_list]


def _cell(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def results_csv(points: Iterable[ScalingPoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for p in points:
        r = p.row()
        w.writerow([_cell(r[c]) for c in RESULT_COLUMNS])
    return buf.getvalue()


def reference_csv(n_list: Iterable[int]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("n", "sql", "hl"))
    for r in reference_curves(n_list):
        w.writerow([_cell(r["n"]), _cell(r["sql"]), _cell(r["hl"])])
    return buf.getvalue()


def read_results(path: str | Path) -> list[dict]:
    """Rows of a results CSV; raises ValueError on a wrong header."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != RESULT_COLUMNS:
            raise ValueError(f"{path}: expected header {','.join(RESULT_COLUMNS)}")
        rows = []
        for i, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(RESULT_COLUMNS):
                raise ValueError(f"{path}: line {i} has {len(rec)} fields")
            row = dict(zip(RESULT_COLUMNS, rec))
            try:
                row["n"] = int(row["n"])
                for key in ("dphi", "dphi_stderr", "V", "S", "eta", "phase_sigma"):
                    row[key] = float(row[key])
            except ValueError as exc:
                raise ValueError(f"{path}: line {i}: {exc}") from None
            rows.append(row)
    return rows
