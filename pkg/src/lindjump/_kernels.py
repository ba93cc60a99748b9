"""Compiled inner loops for the two trajectory samplers.

Both samplers are resumable: they write into caller-owned buffers and return
when a buffer fills (before drawing any number for the next step), the stop
criterion is met, or an error is hit.  The
caller's ``numpy.random.Generator`` is advanced in place, so a chunked run
draws exactly the same numbers as an uninterrupted one.
"""

import numpy as np
from numba import njit

OK = 0
EVENTS_FULL = 1
GRID_FULL = 2
DARK = 3
STEP_TOO_LARGE = 4
NEGATIVE_RATE = 5

RATE_CLIP = 1e-12
BISECT_P_TOL = 1e-10
BISECT_TAU_TOL = 1e-9
BRACKET_START = 0.1
K_MIN = -44


@njit(cache=True)
def trace_of(v):
    s = 0.0
    for i in range(0, v.size, 4):
        s += v[i].real + v[i + 3].real
    return s


@njit(cache=True)
def _record(v, norm, upper_out, pops_out, g):
    r_max = v.size // 4
    up = 0.0
    for r in range(r_max):
        up += v[4 * r].real
        pops_out[g, r] = (v[4 * r].real + v[4 * r + 3].real) / norm
    upper_out[g] = up / norm


@njit(cache=True)
def _channel_rates(Js, v, rates):
    n_ch = Js.shape[0]
    n = v.size
    total = 0.0
    for c in range(n_ch):
        s = 0.0
        for i in range(0, n, 4):
            acc0 = 0j
            acc3 = 0j
            for j in range(n):
                acc0 += Js[c, i, j] * v[j]
                acc3 += Js[c, i + 3, j] * v[j]
            s += acc0.real + acc3.real
        if s < 0.0:
            if s < -RATE_CLIP:
                return -1.0
            s = 0.0
        rates[c] = s
        total += s
    return total


@njit(cache=True)
def _choose(rates, total, u):
    target = u * total
    acc = 0.0
    last = -1
    for c in range(rates.size):
        if rates[c] > 0.0:
            last = c
            acc += rates[c]
            if target < acc:
                return c
    return last


@njit(cache=True)
def _jump(Js, c, v, rate, out):
    n = v.size
    for i in range(n):
        acc = 0j
        for j in range(n):
            acc += Js[c, i, j] * v[j]
        out[i] = acc / rate


def dyadic_levels(tau_cap):
    """Exponents ``k`` such that the table holds exp(D * 0.1 * 2**k).

    The top level reaches the time cap; the bottom one resolves ~1e-13.
    """
    k_max = max(0, int(np.ceil(np.log2(tau_cap / BRACKET_START))))
    return np.arange(K_MIN, k_max + 1)


@njit(cache=True)
def _matvec(A, v, out):
    n = v.size
    for i in range(n):
        acc = 0j
        for j in range(n):
            acc += A[i, j] * v[j]
        out[i] = acc


@njit(cache=True)
def dyadic_apply(E, tau, v, out):
    """``out = exp(D tau) v`` by the binary expansion of tau on the table ``E``."""
    n = v.size
    cur = v.copy()
    tmp = np.empty(n, dtype=np.complex128)
    for lvl in range(E.shape[0] - 1, -1, -1):
        step = BRACKET_START * 2.0 ** (lvl + K_MIN)
        if tau >= step:
            _matvec(E[lvl], cur, tmp)
            for i in range(n):
                cur[i] = tmp[i]
            tau -= step
    for i in range(n):
        out[i] = cur[i]


@njit(cache=True)
def coarse_run(E, Js, v, t, rng,
               ev_times, ev_chan, ev_weights, ev_states, store_states, e0,
               max_events, max_time, tau_cap):
    """Survival-inversion sampler on the dyadic exponential table ``E``.

    Level ``l`` of ``E`` is exp(D * 0.1 * 2**(l + K_MIN)).  The waiting time
    is bracketed by doubling from 0.1 and bisected; every trial point is a
    dyadic multiple of 0.1, so each step costs one matrix-vector product.
    Returns ``(status, t, n_events_written, residual)``; ``v`` is updated in
    place to the current post-event state.
    """
    n = v.size
    r_max = n // 4
    n_ch = Js.shape[0]
    top = E.shape[0] - 1
    zero = -K_MIN
    rates = np.empty(n_ch)
    w_lo = np.empty(n, dtype=np.complex128)
    w_hi = np.empty(n, dtype=np.complex128)
    w_mid = np.empty(n, dtype=np.complex128)
    e = e0
    while True:
        if max_events >= 0 and e >= max_events:
            return OK, t, e, 0.0
        if e >= ev_times.size:
            return EVENTS_FULL, t, e, 0.0
        r = 1.0 - rng.random()
        for i in range(n):
            w_lo[i] = v[i]
        lo = 0.0
        hi = BRACKET_START
        lvl = zero
        _matvec(E[lvl], v, w_hi)
        p_hi = trace_of(w_hi)
        while p_hi >= r and hi < tau_cap and lvl < top:
            lo = hi
            for i in range(n):
                w_lo[i] = w_hi[i]
            _matvec(E[lvl], w_lo, w_hi)
            hi *= 2.0
            lvl += 1
            p_hi = trace_of(w_hi)
        if p_hi > r:
            if max_time >= 0.0 and max_time <= t + hi:
                return OK, max_time, e, 0.0
            return DARK, t, e, p_hi
        if lo > 0.0:
            lvl -= 1
        # now hi - lo == 0.1 * 2**(lvl + K_MIN); w_lo holds exp(D lo) v
        done = False
        while hi - lo > BISECT_TAU_TOL and lvl > 0:
            lvl -= 1
            mid = lo + BRACKET_START * 2.0 ** (lvl + K_MIN)
            _matvec(E[lvl], w_lo, w_mid)
            p = trace_of(w_mid)
            if abs(p - r) < BISECT_P_TOL:
                lo = mid
                for i in range(n):
                    w_lo[i] = w_mid[i]
                done = True
                break
            if p > r:
                lo = mid
                for i in range(n):
                    w_lo[i] = w_mid[i]
            else:
                hi = mid
        if done:
            tau = lo
        else:
            lvl -= 1
            tau = lo + BRACKET_START * 2.0 ** (lvl + K_MIN)
            _matvec(E[lvl], w_lo, w_mid)
            for i in range(n):
                w_lo[i] = w_mid[i]
        if max_time >= 0.0 and t + tau > max_time:
            return OK, max_time, e, 0.0
        norm = trace_of(w_lo)
        for i in range(n):
            w_lo[i] /= norm
        total = _channel_rates(Js, w_lo, rates)
        if total < 0.0:
            return NEGATIVE_RATE, t, e, total
        c = _choose(rates, total, rng.random())
        _jump(Js, c, w_lo, rates[c], v)
        t = t + tau
        ev_times[e] = t
        ev_chan[e] = c
        for r_ in range(r_max):
            ev_weights[e, r_] = v[4 * r_].real + v[4 * r_ + 3].real
        if store_states:
            for i in range(n):
                ev_states[e, i] = v[i]
        e += 1


@njit(cache=True)
def dyadic_traces(E, v0, times, states, grid, upper, pops):
    """Conditional traces on ``grid`` from post-jump states (right-continuous)."""
    n = v0.size
    u = np.empty(n, dtype=np.complex128)
    cur = v0.copy()
    t_ref = 0.0
    e = 0
    for g in range(grid.size):
        while e < times.size and times[e] <= grid[g]:
            t_ref = times[e]
            for i in range(n):
                cur[i] = states[e, i]
            e += 1
        dyadic_apply(E, grid[g] - t_ref, cur, u)
        _record(u, trace_of(u), upper, pops, g)


@njit(cache=True)
def fine_run(D, Js, v, t, step, rng, grid_dt, g0,
             ev_times, ev_chan, ev_weights, e0,
             upper, pops, max_events, max_time, tau_cap, last_event):
    """First-order fixed-step sampler.

    Returns ``(status, t, n_events_written, next_grid_index, last_event_time)``.
    """
    n = v.size
    r_max = n // 4
    n_ch = Js.shape[0]
    rates = np.empty(n_ch)
    w = np.empty(n, dtype=np.complex128)
    e = e0
    g = g0
    while True:
        while grid_dt > 0.0 and g * grid_dt <= t + 0.5 * step:
            if g >= upper.size:
                return GRID_FULL, t, e, g, last_event
            _record(v, trace_of(v), upper, pops, g)
            g += 1
        if max_events >= 0 and e >= max_events:
            return OK, t, e, g, last_event
        if max_time >= 0.0 and t + 0.5 * step >= max_time:
            return OK, t, e, g, last_event
        if e >= ev_times.size:
            return EVENTS_FULL, t, e, g, last_event
        if t - last_event > tau_cap:
            return DARK, t, e, g, last_event
        total = _channel_rates(Js, v, rates)
        if total < 0.0:
            return NEGATIVE_RATE, t, e, g, last_event
        dp = step * total
        if dp >= 0.1:
            return STEP_TOO_LARGE, t, e, g, dp
        u = rng.random()
        if u < dp:
            c = _choose(rates, total, rng.random())
            _jump(Js, c, v, rates[c], w)
            for i in range(n):
                v[i] = w[i]
            t += step
            last_event = t
            ev_times[e] = t
            ev_chan[e] = c
            for r in range(r_max):
                ev_weights[e, r] = v[4 * r].real + v[4 * r + 3].real
            e += 1
        else:
            trd = 0.0
            for i in range(n):
                acc = 0j
                for j in range(n):
                    acc += D[i, j] * v[j]
                w[i] = v[i] + step * acc
            trd = trace_of(w)
            for i in range(n):
                v[i] = w[i] / trd
            t += step
