"""Inverse-scaling feedback policies.

The feedback adjustment after the n-th detection is

    delta_n = sum_l c_l * pi / (n + 1) ** (wp + l)

and the compensation moves by ``-2 * s_n * delta_n``.  The policy carries a
fixed number of coefficients, so it can be evaluated for any ensemble size.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_TERMS = 4
FORMAT_VERSION = 1


class StateKind(str, enum.Enum):
    SINE = "sine"
    SSS = "sss"
    CSS = "css"


class PolicyFormatError(ValueError):
    """Malformed policy record; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def wrap_phase(x):
    """Wrap angles into [-pi, pi); scalars in, scalars out."""
    if np.ndim(x) == 0:
        return _wrap_scalar(float(x))
    y = (np.asarray(x, dtype=float) + np.pi) % (2 * np.pi) - np.pi
    return np.where(y >= np.pi, -np.pi, y)


def _wrap_scalar(x: float) -> float:
    y = (x + math.pi) % (2 * math.pi) - math.pi
    # float rounding can land exactly on +pi
    return -math.pi if y >= math.pi else y


@dataclass(frozen=True)
class SearchBox:
    names: tuple[str, ...]
    low: np.ndarray
    high: np.ndarray

    def __post_init__(self):
        low = np.asarray(self.low, dtype=float)
        high = np.asarray(self.high, dtype=float)
        if low.shape != high.shape or low.shape != (len(self.names),):
            raise ValueError("bounds and names must have matching length")
        if not np.all(low < high):
            bad = [n for n, lo, hi in zip(self.names, low, high) if not lo < hi]
            raise ValueError(f"degenerate search box for {bad}")
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "high", high)

    @property
    def dim(self) -> int:
        return len(self.names)

    @property
    def width(self) -> np.ndarray:
        return self.high - self.low

    def contains(self, x) -> bool:
        x = np.asarray(x)
        return bool(np.all((x >= self.low) & (x <= self.high)))


def squeeze_coeff_bound(n_qubits: int) -> float:
    """Upper bound on c_s equivalent to T_s <= 2/sqrt(N)."""
    return 2.0 * n_qubits ** (1.0 / 6.0)


def default_box(state_kind: StateKind | str, n_qubits: int, n_terms: int = DEFAULT_TERMS) -> SearchBox:
    kind = StateKind(state_kind)
    if n_terms < 1:
        raise ValueError("need at least one coefficient")
    names = ["wp"] + [f"c{i}" for i in range(n_terms)]
    low = [0.0] + [-5.0] * n_terms
    high = [5.0] + [5.0] * n_terms
    if kind is StateKind.SSS:
        names.append("cs")
        low.append(0.0)
        high.append(squeeze_coeff_bound(n_qubits))
    return SearchBox(tuple(names), np.array(low), np.array(high))


@dataclass(frozen=True)
class InverseScalingPolicy:
    wp: float
    coeffs: tuple[float, ...]
    state_kind: StateKind = StateKind.SINE
    squeeze_coeff: float | None = None
    n_trained: int | None = None
    seed: int | None = None
    cost: float | None = None
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "state_kind", StateKind(self.state_kind))
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        object.__setattr__(self, "wp", float(self.wp))
        if len(self.coeffs) < 1:
            raise ValueError("policy needs at least one coefficient")
        if (self.squeeze_coeff is not None) != (self.state_kind is StateKind.SSS):
            raise ValueError("squeeze_coeff must be given exactly when state_kind is sss")
        if self.squeeze_coeff is not None:
            object.__setattr__(self, "squeeze_coeff", float(self.squeeze_coeff))

    @property
    def n_terms(self) -> int:
        return len(self.coeffs)

    def to_vector(self) -> np.ndarray:
        v = [self.wp, *self.coeffs]
        if self.squeeze_coeff is not None:
            v.append(self.squeeze_coeff)
        return np.array(v)

    @classmethod
    def from_vector(cls, x, state_kind: StateKind | str, n_trained: int | None = None, **meta):
        kind = StateKind(state_kind)
        x = [float(v) for v in np.asarray(x, dtype=float)]
        if kind is StateKind.SSS:
            return cls(x[0], tuple(x[1:-1]), kind, x[-1], n_trained, **meta)
        return cls(x[0], tuple(x[1:]), kind, None, n_trained, **meta)

    @classmethod
    def zero(cls, state_kind: StateKind | str = StateKind.SINE, n_terms: int = DEFAULT_TERMS):
        """The no-feedback policy: the estimate stays at the initial guess."""
        kind = StateKind(state_kind)
        return cls(1.0, (0.0,) * n_terms, kind, 0.0 if kind is StateKind.SSS else None)


def delta(policy: InverseScalingPolicy, n: int) -> float:
    """Feedback adjustment after the n-th detection (n >= 1)."""
    if n < 1:
        raise ValueError("step index starts at 1")
    base = n + 1.0
    return sum(c * math.pi / base ** (policy.wp + ell) for ell, c in enumerate(policy.coeffs))


def delta_table(policy: InverseScalingPolicy, n_steps: int) -> np.ndarray:
    """``[delta_1, ..., delta_n_steps]`` as an array."""
    base = np.arange(2, n_steps + 2, dtype=float)
    out = np.zeros(n_steps)
    for ell, c in enumerate(policy.coeffs):
        out += c * np.pi / base ** (policy.wp + ell)
    return out


def update_compensation(prev: float, outcome: float, adj: float) -> float:
    return _wrap_scalar(prev - 2.0 * outcome * adj)


def squeeze_time(policy: InverseScalingPolicy, n_qubits: int) -> float:
    """Squeezing time T_s = c_s / N^(2/3), clamped to [0, 2/sqrt(N)]."""
    if policy.state_kind is not StateKind.SSS:
        raise ValueError(f"squeeze time is undefined for a {policy.state_kind.value} policy")
    t = policy.squeeze_coeff / n_qubits ** (2.0 / 3.0)
    return min(max(t, 0.0), 2.0 / math.sqrt(n_qubits))


# -- text records ---------------------------------------------------------

_RECORD_FIELDS = {
    "format_version", "wp", "coeffs", "squeeze_coeff", "state_kind",
    "n_trained", "n_terms", "seed", "cost", "extra",
}


def to_record(policy: InverseScalingPolicy) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "state_kind": policy.state_kind.value,
        "wp": policy.wp,
        "coeffs": list(policy.coeffs),
        "n_terms": policy.n_terms,
        "squeeze_coeff": policy.squeeze_coeff,
        "n_trained": policy.n_trained,
        "seed": policy.seed,
        "cost": policy.cost,
        "extra": dict(policy.extra),
    }


def _number(rec: dict, key: str, optional: bool = False) -> float | None:
    if key not in rec:
        if optional:
            return None
        raise PolicyFormatError(key, "missing required field")
    v = rec[key]
    if v is None and optional:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise PolicyFormatError(key, f"expected a number, got {type(v).__name__}")
    return float(v)


def _integer(rec: dict, key: str) -> int | None:
    v = rec.get(key)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, int):
        raise PolicyFormatError(key, f"expected an integer, got {v!r}")
    return v


def from_record(rec: dict) -> InverseScalingPolicy:
    if not isinstance(rec, dict):
        raise PolicyFormatError("<root>", "policy record must be an object")
    unknown = sorted(set(rec) - _RECORD_FIELDS)
    if unknown:
        raise PolicyFormatError(unknown[0], "unknown field")
    version = rec.get("format_version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise PolicyFormatError("format_version", f"unsupported version {version!r}")
    if "state_kind" not in rec:
        raise PolicyFormatError("state_kind", "missing required field")
    try:
        kind = StateKind(rec["state_kind"])
    except ValueError:
        raise PolicyFormatError("state_kind", f"unknown state kind {rec['state_kind']!r}") from None
    wp = _number(rec, "wp")
    if "coeffs" not in rec:
        raise PolicyFormatError("coeffs", "missing required field")
    coeffs = rec["coeffs"]
    if not isinstance(coeffs, list) or not coeffs:
        raise PolicyFormatError("coeffs", "expected a non-empty list")
    parsed = []
    for i, c in enumerate(coeffs):
        if isinstance(c, bool) or not isinstance(c, (int, float)):
            raise PolicyFormatError(f"coeffs[{i}]", "expected a number")
        parsed.append(float(c))
    n_terms = _integer(rec, "n_terms")
    if n_terms is not None and n_terms != len(parsed):
        raise PolicyFormatError("n_terms", f"{n_terms} does not match {len(parsed)} coefficients")
    cs = _number(rec, "squeeze_coeff", optional=True)
    if (cs is not None) != (kind is StateKind.SSS):
        raise PolicyFormatError("squeeze_coeff", f"must be present exactly when state_kind is sss (got {kind.value})")
    extra = rec.get("extra") or {}
    if not isinstance(extra, dict):
        raise PolicyFormatError("extra", "expected an object")
    return InverseScalingPolicy(
        wp=wp,
        coeffs=tuple(parsed),
        state_kind=kind,
        squeeze_coeff=cs,
        n_trained=_integer(rec, "n_trained"),
        seed=_integer(rec, "seed"),
        cost=_number(rec, "cost", optional=True),
        extra=extra,
    )


def dumps(policy: InverseScalingPolicy) -> str:
    return json.dumps(to_record(policy), indent=2, sort_keys=True) + "\n"


def loads(text: str) -> InverseScalingPolicy:
    try:
        rec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PolicyFormatError("<root>", f"invalid JSON: {exc}") from None
    return from_record(rec)


def save(policy: InverseScalingPolicy, path: str | Path) -> None:
    Path(path).write_text(dumps(policy))


def load(path: str | Path) -> InverseScalingPolicy:
    return loads(Path(path).read_text())


def policy_id(policy: InverseScalingPolicy) -> str:
    """Short content hash of the trainable parameters and input kind."""
    body = json.dumps({"kind": policy.state_kind.value, "x": [float(v) for v in policy.to_vector()]}, sort_keys=True)
    return f"{policy.state_kind.value}-{hashlib.sha256(body.encode()).hexdigest()[:10]}"
