"""Permutation-symmetric qubit register in the Dicke z-basis.

Index convention used throughout the package: ``amps[k]`` is the amplitude of
the Dicke state with ``k`` qubits in the spin-down z-eigenstate, i.e. the
collective eigenvalue is ``mu = m/2 - k`` and ``amps[0]`` is the all-up state.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

NORM_TOL = 1e-10


class Axis(str, enum.Enum):
    X = "X"
    Y = "Y"
    Z = "Z"


class StateExhausted(ValueError):
    """Raised when a qubit is requested from an empty register."""


@dataclass(frozen=True)
class SymmetricState:
    amps: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amps, dtype=np.complex128)
        if amps.ndim != 1 or amps.size < 1:
            raise ValueError("amps must be a non-empty 1-D vector")
        amps = amps.copy()
        amps.setflags(write=False)
        object.__setattr__(self, "amps", amps)

    @property
    def m(self) -> int:
        return self.amps.size - 1

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def overlap(self, other: "SymmetricState") -> complex:
        return complex(np.vdot(self.amps, other.amps))


def empty_state() -> SymmetricState:
    """The zero-qubit register (a single scalar amplitude)."""
    return SymmetricState(np.ones(1))


def _check_count(n_qubits: int, minimum: int = 1) -> int:
    if int(n_qubits) != n_qubits or n_qubits < minimum:
        raise ValueError(f"n_qubits must be an integer >= {minimum}, got {n_qubits!r}")
    return int(n_qubits)


def mu_values(m: int) -> np.ndarray:
    return m / 2 - np.arange(m + 1)


def generator(m: int, axis: Axis | str) -> np.ndarray:
    """Matrix of the collective spin component ``J_axis`` on ``m`` qubits."""
    axis = Axis(axis)
    if axis is Axis.Z:
        return np.diag(mu_values(m)).astype(np.complex128)
    k = np.arange(m)
    # <k|J+|k+1>: raising removes one down spin
    ladder = np.sqrt((k + 1) * (m - k))
    j_plus = np.diag(ladder, 1).astype(np.complex128)
    if axis is Axis.X:
        return 0.5 * (j_plus + j_plus.T)
    return (j_plus - j_plus.T) / 2j


@lru_cache(maxsize=256)
def _eig(m: int, axis: Axis) -> tuple[np.ndarray, np.ndarray]:
    w, v = np.linalg.eigh(generator(m, axis))
    w.setflags(write=False)
    v.setflags(write=False)
    return w, v


def eigenbasis(m: int, axis: Axis | str) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and eigenvectors (columns) of ``J_axis``."""
    return _eig(m, Axis(axis))


def rotate(state: SymmetricState, axis: Axis | str, angle: float) -> SymmetricState:
    """Apply ``exp(-i * angle * J_axis)``."""
    if not math.isfinite(angle):
        raise ValueError(f"rotation angle must be finite, got {angle!r}")
    axis = Axis(axis)
    m = state.m
    if axis is Axis.Z:
        return SymmetricState(np.exp(-1j * angle * mu_values(m)) * state.amps)
    w, v = _eig(m, axis)
    return SymmetricState(v @ (np.exp(-1j * angle * w) * (v.conj().T @ state.amps)))


def build_css(n_qubits: int) -> SymmetricState:
    """Coherent spin state with every qubit along +x."""
    n = _check_count(n_qubits)
    k = np.arange(n + 1)
    log_binom = (
        math.lgamma(n + 1)
        - np.array([math.lgamma(i + 1) for i in k])
        - np.array([math.lgamma(n - i + 1) for i in k])
    )
    return SymmetricState(np.exp(0.5 * log_binom - 0.5 * n * math.log(2.0)))


def sine_coefficients(n_qubits: int) -> np.ndarray:
    """Sine-profile weights on ``|j mu>_y``, ordered like the z index (mu = j - k)."""
    n = _check_count(n_qubits)
    j = n / 2
    mu = mu_values(n)
    return np.sin((mu + j + 1) * np.pi / (2 * (j + 1))) / math.sqrt(j + 1)


def y_basis_rotation(state: SymmetricState) -> SymmetricState:
    """Map z-Dicke coordinates onto the ``J_y`` eigenbasis via ``exp(i pi/2 J_x)``.

    ``exp(i pi/2 J_x) J_z exp(-i pi/2 J_x) = J_y``, so the image of ``|j mu>_z``
    is an eigenvector of ``J_y`` with the same eigenvalue ``mu``.
    """
    return rotate(state, Axis.X, -np.pi / 2)


def build_sine(n_qubits: int) -> SymmetricState:
    return y_basis_rotation(SymmetricState(sine_coefficients(n_qubits)))


def squeeze_alignment(n_qubits: int, squeeze_time: float) -> float:
    """Rotation angle that aligns the one-axis-twisted ellipse (``delta_adj``)."""
    n = n_qubits
    t = squeeze_time
    a = 1.0 - math.cos(2 * t) ** (n - 2)
    b = 4.0 * math.sin(t) * math.cos(t) ** (n - 2)
    if a == 0.0 and b == 0.0:
        return 0.0
    return 0.5 * math.atan2(b, a)


def build_sss(n_qubits: int, squeeze_time: float) -> SymmetricState:
    """One-axis-twisted coherent state, rotated so ``J_z`` is the squeezed quadrature."""
    n = _check_count(n_qubits, minimum=2)
    if not (squeeze_time >= 0 and math.isfinite(squeeze_time)):
        raise ValueError(f"squeeze_time must be finite and >= 0, got {squeeze_time!r}")
    css = build_css(n)
    mu = mu_values(n)
    twisted = SymmetricState(np.exp(-1j * mu**2 * squeeze_time) * css.amps)
    return rotate(twisted, Axis.X, -squeeze_alignment(n, squeeze_time))


def _split_branches(amps: np.ndarray, theta: float) -> tuple[np.ndarray, np.ndarray]:
    m = amps.size - 1
    k = np.arange(m)
    up = np.sqrt((m - k) / m) * amps[:-1]
    down = np.sqrt((k + 1) / m) * amps[1:]
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return c * up - s * down, s * up + c * down


def split(state: SymmetricState, qubit_rotation: float) -> tuple[float, SymmetricState | None, SymmetricState | None]:
    """Both z-outcome branches after rotating one extracted qubit by ``exp(-i theta s_y)``.

    Returns ``(prob_up, up_state, down_state)``; a branch with zero probability
    is returned as ``None``.
    """
    if state.m < 1:
        raise StateExhausted("no qubit left to measure")
    if not math.isfinite(qubit_rotation):
        raise ValueError(f"qubit rotation must be finite, got {qubit_rotation!r}")
    up, down = _split_branches(state.amps, qubit_rotation)
    p_up = float(np.vdot(up, up).real)
    p_down = float(np.vdot(down, down).real)
    total = p_up + p_down
    p_up /= total
    p_down = 1.0 - p_up
    up_state = SymmetricState(up / math.sqrt(p_up * total)) if p_up > 0 else None
    down_state = SymmetricState(down / math.sqrt(p_down * total)) if p_down > 0 else None
    return p_up, up_state, down_state


def split_measure(
    state: SymmetricState, qubit_rotation: float, rng_draw: float
) -> tuple[float, float, SymmetricState]:
    """Measure one qubit in z after its single-qubit rotation.

    The outcome is spin up (``s = +1/2``) iff ``rng_draw < prob_up``.
    Returns ``(s, prob_up, collapsed)`` where ``collapsed`` holds ``m - 1`` qubits.
    """
    p_up, up_state, down_state = split(state, qubit_rotation)
    if rng_draw < p_up:
        return 0.5, p_up, up_state
    return -0.5, p_up, down_state


def trace_out_one(state: SymmetricState, qubit_rotation: float, rng_draw: float) -> SymmetricState:
    """Discard one qubit by sampling an unrecorded z-measurement."""
    return split_measure(state, qubit_rotation, rng_draw)[2]


def reduced_density_matrix(state: SymmetricState, n_traced: int = 1) -> np.ndarray:
    """Exact partial trace over ``n_traced`` qubits, in the Dicke basis of the rest."""
    rho = np.outer(state.amps, state.amps.conj())
    for _ in range(n_traced):
        m = rho.shape[0] - 1
        if m < 1:
            raise StateExhausted("no qubit left to trace out")
        k = np.arange(m)
        up = np.sqrt((m - k) / m)
        down = np.sqrt((k + 1) / m)
        rho = (
            up[:, None] * rho[:-1, :-1] * up[None, :]
            + down[:, None] * rho[1:, 1:] * down[None, :]
        )
    return rho


def collective_moments(state: SymmetricState) -> dict[str, float]:
    """Means and variances of ``J_x, J_y, J_z``."""
    out = {}
    for axis in Axis:
        g = generator(state.m, axis)
        mean = float(np.vdot(state.amps, g @ state.amps).real)
        second = float(np.vdot(state.amps, g @ (g @ state.amps)).real)
        out[f"J{axis.value.lower()}"] = mean
        out[f"var_J{axis.value.lower()}"] = second - mean**2
    return out
