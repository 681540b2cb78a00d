"""Compiled inner loop for batches of adaptive-feedback trials.

Trials are processed in blocks of ``BLOCK`` that advance in lockstep, so the
inner loops run over the trial axis and vectorize.  Each block keeps a state
matrix ``A[k, t]`` (Dicke index ``k``, trial ``t``) and, per trial, the cosine
and sine of half the current interrogation angle without feedback noise.
Because a detection moves the compensation by exactly ``-2 s delta``, that
half angle is advanced by a rotation with ``cos/sin(delta/2)`` tables, so the
hot loop needs no transcendental calls.  The compensation itself is summed
unwrapped and wrapped once at the end.

Amplitudes are never renormalized in the loop: the split coefficients carry
the ``1/sqrt(m)`` factor, which makes the two branch norms sum to the old
norm, and the Born probability is their ratio.  Columns whose norm drops
towards underflow are rescaled.

Results agree with the pure-Python ``trialsim.run_trial`` to rounding.
"""

import math

import numpy as np
from numba import config, njit, prange

# the system TBB is too old for numba; skip it instead of warning
config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

BLOCK = 32
# reassociation lets the trial-axis loops vectorize; results stay
# deterministic for a given build since the loop shape is fixed
_FAST = {"reassoc", "contract", "nsz", "arcp"}
_RESCALE_BELOW = 1e-120


@njit(cache=True)
def wrap(x):
    y = (x + math.pi) % (2.0 * math.pi) - math.pi
    if y >= math.pi:
        y = -math.pi
    return y


@njit(cache=True, fastmath=_FAST, inline="always")
def _stats(a0, a1, w0, w1, c, s, pu, pd):
    for t in range(a0.size):
        x = w0 * a0[t]
        y = w1 * a1[t]
        u = c[t] * x - s[t] * y
        d = s[t] * x + c[t] * y
        pu[t] += u * u
        pd[t] += d * d


@njit(cache=True, fastmath=_FAST, inline="always")
def _collapse(a0, a1, w0, w1, alpha, beta):
    for t in range(a0.size):
        a0[t] = alpha[t] * (w0 * a0[t]) + beta[t] * (w1 * a1[t])


@njit(cache=True, fastmath=_FAST, inline="always")
def _stats_c(r0, r1, i0, i1, w0, w1, c, s, pu, pd):
    for t in range(r0.size):
        xr = w0 * r0[t]
        yr = w1 * r1[t]
        xi = w0 * i0[t]
        yi = w1 * i1[t]
        ur = c[t] * xr - s[t] * yr
        ui = c[t] * xi - s[t] * yi
        dr = s[t] * xr + c[t] * yr
        di = s[t] * xi + c[t] * yi
        pu[t] += ur * ur + ui * ui
        pd[t] += dr * dr + di * di


@njit(cache=True, fastmath=_FAST, inline="always")
def _angles(i, inv, noisy, common_noise, cos_eps, sin_eps, cc, ss, c, s, pu, pd):
    for t in range(cc.size):
        if noisy:
            j = 0 if common_noise else i
            ce = cos_eps[t, j]
            se = sin_eps[t, j]
            c[t] = (cc[t] * ce - ss[t] * se) * inv
            s[t] = (ss[t] * ce + cc[t] * se) * inv
        else:
            c[t] = cc[t] * inv
            s[t] = ss[t] * inv
        pu[t] = 0.0
        pd[t] = 0.0


@njit(cache=True, fastmath=_FAST, inline="always")
def _decide(i, deltas, cos_hd, sin_hd, eta, position_index, loss, meas,
            pu, pd, alpha, beta, cc, ss, c, s, phi, detected, rec, record):
    for t in range(cc.size):
        up = meas[t, i] * (pu[t] + pd[t]) < pu[t]
        if up:
            alpha[t] = c[t]
            beta[t] = -s[t]
            nrm = pu[t]
        else:
            alpha[t] = s[t]
            beta[t] = c[t]
            nrm = pd[t]
        if nrm < _RESCALE_BELOW:
            scale = 1.0 / math.sqrt(nrm)
            alpha[t] *= scale
            beta[t] *= scale
        if record:
            rec[t, i] = 1 if up else -1
        if loss[t, i] < eta:
            if record:
                rec[t, i] *= 2
            continue
        detected[t] += 1
        idx = i if position_index else detected[t] - 1
        ch = cos_hd[idx]
        sh = sin_hd[idx]
        if up:
            phi[t] -= deltas[idx]
            x = cc[t] * ch - ss[t] * sh
            ss[t] = ss[t] * ch + cc[t] * sh
        else:
            phi[t] += deltas[idx]
            x = cc[t] * ch + ss[t] * sh
            ss[t] = ss[t] * ch - cc[t] * sh
        cc[t] = x


@njit(cache=True, fastmath=_FAST)
def _block(is_complex, re0, im0, deltas, cos_hd, sin_hd, eta, noisy, common_noise,
           position_index, guess, cos_h0, sin_h0, cos_eps, sin_eps, loss, meas,
           sq, ar, ai, pu, pd, alpha, beta, cc, ss, c, s, phi, detected,
           out, rec, record):
    n = re0.size - 1
    nt = guess.size
    for k in range(n + 1):
        for t in range(nt):
            ar[k, t] = re0[k]
            ai[k, t] = im0[k]
    for t in range(nt):
        cc[t] = cos_h0[t]
        ss[t] = sin_h0[t]
        phi[t] = 0.0
        detected[t] = 0

    for i in range(n):
        m = n - i
        _angles(i, 1.0 / sq[m], noisy, common_noise, cos_eps, sin_eps, cc, ss, c, s, pu, pd)
        # separate loops per case: a branch inside them blocks vectorization
        if is_complex:
            for k in range(m):
                _stats_c(ar[k], ar[k + 1], ai[k], ai[k + 1], sq[m - k], sq[k + 1], c, s, pu, pd)
        else:
            for k in range(m):
                _stats(ar[k], ar[k + 1], sq[m - k], sq[k + 1], c, s, pu, pd)
        _decide(i, deltas, cos_hd, sin_hd, eta, position_index, loss, meas,
                pu, pd, alpha, beta, cc, ss, c, s, phi, detected, rec, record)
        if is_complex:
            for k in range(m):
                _collapse(ar[k], ar[k + 1], sq[m - k], sq[k + 1], alpha, beta)
                _collapse(ai[k], ai[k + 1], sq[m - k], sq[k + 1], alpha, beta)
        else:
            for k in range(m):
                _collapse(ar[k], ar[k + 1], sq[m - k], sq[k + 1], alpha, beta)
    for t in range(nt):
        out[t] = wrap(guess[t] + phi[t])


@njit(cache=True, parallel=True)
def simulate_batch(re0, im0, is_complex, deltas, eta, sigma, common_noise, position_index,
                   guess, half_angle, noise, loss, meas, record):
    """Final compensations for every (agent, trial) pair.

    re0, im0      (A, n+1) input amplitudes
    deltas        (A, n)   adjustment tables, ``deltas[a, i] = delta_{i+1}``
    guess         (K,)     initial compensations
    half_angle    (K,)     ``(phase - guess) / 2``
    noise         (K, n)   standard normal draws, scaled by ``sigma``
    loss, meas    (K, n)   uniform draws
    Returns ``(phi_final (A, K), outcomes (A, K, n) or empty)``.  Recorded
    outcomes are +1/-1 for detected up/down and +2/-2 for lost qubits.
    """
    n_agents = re0.shape[0]
    n = re0.shape[1] - 1
    n_trials = guess.size
    out = np.empty((n_agents, n_trials))
    if record:
        rec = np.zeros((n_agents, n_trials, n), dtype=np.int8)
    else:
        rec = np.zeros((n_agents, 1, 1), dtype=np.int8)
    sq = np.sqrt(np.arange(n + 1).astype(np.float64))
    cos_hd = np.cos(deltas / 2.0)
    sin_hd = np.sin(deltas / 2.0)
    noisy = sigma != 0.0
    if noisy:
        cos_eps = np.cos(sigma * noise / 2.0)
        sin_eps = np.sin(sigma * noise / 2.0)
    else:
        cos_eps = np.ones((1, 1))
        sin_eps = np.zeros((1, 1))
    cos_h0 = np.cos(half_angle)
    sin_h0 = np.sin(half_angle)
    n_blocks = (n_trials + BLOCK - 1) // BLOCK
    for task in prange(n_agents * n_blocks):
        a = task // n_blocks
        b = task - a * n_blocks
        lo = b * BLOCK
        hi = min(n_trials, lo + BLOCK)
        nt = hi - lo
        ar = np.empty((n + 1, nt))
        ai = np.zeros((n + 1, nt))
        scratch = np.empty((9, nt))
        detected = np.empty(nt, dtype=np.int64)
        if record:
            rview = rec[a, lo:hi]
        else:
            rview = rec[a]
        if noisy:
            ce = cos_eps[lo:hi]
            se = sin_eps[lo:hi]
        else:
            ce = cos_eps
            se = sin_eps
        _block(
            is_complex, re0[a], im0[a], deltas[a], cos_hd[a], sin_hd[a], eta, noisy,
            common_noise, position_index, guess[lo:hi], cos_h0[lo:hi], sin_h0[lo:hi],
            ce, se,
            loss[lo:hi], meas[lo:hi], sq, ar, ai,
            scratch[0], scratch[1], scratch[2], scratch[3], scratch[4], scratch[5],
            scratch[6], scratch[7], scratch[8], detected, out[a, lo:hi], rview, record,
        )
    return out, rec
