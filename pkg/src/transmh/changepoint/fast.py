"""Compiled hot loop for the changepoint benchmark.

Mirrors the move set of :mod:`transmh.changepoint.moves` in a numba
kernel so that 1e7-iteration runs finish in seconds.  Randomness is
pregenerated in fixed-size blocks from the same PCG64 stream the rest of
the library uses; every iteration consumes four uniforms and two
normals, whichever move runs, so the stream layout is deterministic.
The block policy (min(1e6, 20000*thin) iterations per block) is part of
the reproducibility contract: identical (seed, config, data, variant)
gives identical output.

Equality of this kernel's log ratios with the pure-Python ratio
functions is pinned by tests; the Python side in turn is certified by
the enumeration oracle.
"""

from __future__ import annotations

import math
import time
from typing import Callable, List, Optional, Tuple

import numpy as np
from numba import njit

from ..kernel import ChainConfig, ChainReport
from ..rng import make_rng
from .model import ChangepointState, Dataset, ModelParams
from .moves import to_mixture

LOG_2PI = math.log(2.0 * math.pi)

VARIANT_CODES = {"plain": 0, "adhoc": 1, "posthoc": 2}


@njit(cache=True)
def _sched(k, n):
    """(p_death, p_birth, p_shift); adjust takes the rest."""
    if k == 0:
        return 0.0, 0.75, 0.0
    if k == n - 1:
        return 0.5, 0.0, 0.25
    return 0.25, 0.25, 0.25


@njit(cache=True)
def _seg_loglik(p1, p2, a, b, h, obs_var):
    m = b - a
    s1 = p1[b - 1] - p1[a - 1]
    s2 = p2[b - 1] - p2[a - 1]
    return -0.5 * m * (LOG_2PI + math.log(obs_var)) - (
        s2 - 2.0 * h * s1 + m * h * h
    ) / (2.0 * obs_var)


@njit(cache=True)
def _lnorm(x, mu, var):
    d = x - mu
    return -0.5 * (LOG_2PI + math.log(var) + d * d / var)


@njit(cache=True)
def _death_lr(variant, n, k, a, i, b, h, h1, h2, p1, p2, q, hv, ov, tau2):
    """Death log ratio from a k-changepoint state; mirrors moves._death_ratio."""
    lr = math.log1p(-q) - math.log(q)
    lr += math.log(k) - math.log(n - k)
    pd_before = _sched(k, n)[0]
    pb_after = _sched(k - 1, n)[1]
    lr += math.log(pb_after) - math.log(pd_before)
    lr += (
        _seg_loglik(p1, p2, a, b, h, ov)
        - _seg_loglik(p1, p2, a, i, h1, ov)
        - _seg_loglik(p1, p2, i, b, h2, ov)
    )
    if variant == 0:
        return lr
    lr += _lnorm(h, 0.0, hv) - _lnorm(h1, 0.0, hv) - _lnorm(h2, 0.0, hv)
    m_ib = (p1[b - 1] - p1[i - 1]) / (b - i)
    if variant == 1:
        m_ai = (p1[i - 1] - p1[a - 1]) / (i - a)
        m_ab = (p1[b - 1] - p1[a - 1]) / (b - a)
        lr += _lnorm(h1, m_ai, tau2) + _lnorm(h2, m_ib, tau2) - _lnorm(h, m_ab, tau2)
    else:
        n1 = i - a
        n2 = b - i
        lr += _lnorm(h2, m_ib, tau2) + math.log(n1 / (n1 + n2))
    return lr


@njit(cache=True)
def _run_block(
    variant,
    n,
    q,
    hv,
    ov,
    av,
    tau2,
    p1,
    p2,
    u,
    z,
    it0,
    burnin,
    thin,
    cps,
    heights,
    freelist,
    pos_slot,
    k0,
    prop,
    acc,
    count_hist,
    record,
    tr_iter,
    tr_k,
    tr_cps,
    tr_h,
):
    k = k0
    m = u.shape[0]
    sd_prior = math.sqrt(hv)
    sd_adj = math.sqrt(av)
    tau = math.sqrt(tau2)
    nsamp = 0
    fcps = 0
    fh = 0
    for t in range(m):
        it = it0 + t + 1
        u_pick = u[t, 1]
        pd, pb, ps = _sched(k, n)
        u_move = u[t, 0]
        if u_move < pd:
            mv = 0
        elif u_move < pd + pb:
            mv = 1
        elif u_move < pd + pb + ps:
            mv = 2
        else:
            mv = 3
        prop[mv] += 1

        if mv == 0:  # death
            ci = int(u_pick * k)
            if ci >= k:
                ci = k - 1
            i = cps[ci]
            a = cps[ci - 1] if ci > 0 else 1
            b = cps[ci + 1] if ci < k - 1 else n + 1
            h1 = heights[ci]
            h2 = heights[ci + 1]
            if variant == 0:
                h = sd_prior * z[t, 0]
            elif variant == 1:
                h = (p1[b - 1] - p1[a - 1]) / (b - a) + tau * z[t, 0]
            else:
                n1 = i - a
                n2 = b - i
                h = (n1 * h1 + n2 * h2) / (n1 + n2)
            lr = _death_lr(variant, n, k, a, i, b, h, h1, h2, p1, p2, q, hv, ov, tau2)
            if math.log(u[t, 3]) < lr:
                acc[0] += 1
                for jdx in range(ci, k - 1):
                    cps[jdx] = cps[jdx + 1]
                heights[ci] = h
                for jdx in range(ci + 1, k):
                    heights[jdx] = heights[jdx + 1]
                free = (n - 1) - k
                freelist[free] = i
                pos_slot[i] = free
                k -= 1

        elif mv == 1:  # birth
            free = (n - 1) - k
            fi = int(u_pick * free)
            if fi >= free:
                fi = free - 1
            i = freelist[fi]
            # insertion index in the sorted changepoint array
            lo = 0
            hi = k
            while lo < hi:
                mid = (lo + hi) >> 1
                if cps[mid] < i:
                    lo = mid + 1
                else:
                    hi = mid
            ci = lo
            a = cps[ci - 1] if ci > 0 else 1
            b = cps[ci] if ci < k else n + 1
            h_old = heights[ci]
            n1 = i - a
            n2 = b - i
            if variant == 0:
                h1 = sd_prior * z[t, 0]
                h2 = sd_prior * z[t, 1]
                h_ref = h_old
            elif variant == 1:
                h1 = (p1[i - 1] - p1[a - 1]) / (i - a) + tau * z[t, 0]
                h2 = (p1[b - 1] - p1[i - 1]) / (b - i) + tau * z[t, 1]
                h_ref = h_old
            else:
                u_draw = (p1[b - 1] - p1[i - 1]) / (b - i) + tau * z[t, 0]
                h2 = u_draw
                h1 = ((n1 + n2) * h_old - n2 * u_draw) / n1
                h_ref = (n1 * h1 + n2 * h2) / (n1 + n2)
            lr = -_death_lr(
                variant, n, k + 1, a, i, b, h_ref, h1, h2, p1, p2, q, hv, ov, tau2
            )
            if math.log(u[t, 3]) < lr:
                acc[1] += 1
                last = freelist[free - 1]
                freelist[fi] = last
                pos_slot[last] = fi
                pos_slot[i] = -1
                for jdx in range(k, ci, -1):
                    cps[jdx] = cps[jdx - 1]
                cps[ci] = i
                for jdx in range(k + 1, ci + 1, -1):
                    heights[jdx] = heights[jdx - 1]
                heights[ci] = h1
                heights[ci + 1] = h2
                k += 1

        elif mv == 2:  # shift
            ci = int(u_pick * k)
            if ci >= k:
                ci = k - 1
            i = cps[ci]
            a = cps[ci - 1] if ci > 0 else 1
            b = cps[ci + 1] if ci < k - 1 else n + 1
            width = b - a - 1
            j = a + 1 + int(u[t, 2] * width)
            if j >= b:
                j = b - 1
            h1 = heights[ci]
            h2 = heights[ci + 1]
            lr = (
                _seg_loglik(p1, p2, a, j, h1, ov)
                + _seg_loglik(p1, p2, j, b, h2, ov)
                - _seg_loglik(p1, p2, a, i, h1, ov)
                - _seg_loglik(p1, p2, i, b, h2, ov)
            )
            if math.log(u[t, 3]) < lr:
                acc[2] += 1
                if j != i:
                    slot = pos_slot[j]
                    freelist[slot] = i
                    pos_slot[i] = slot
                    pos_slot[j] = -1
                    cps[ci] = j

        else:  # adjust
            si = int(u_pick * (k + 1))
            if si >= k + 1:
                si = k
            a = cps[si - 1] if si > 0 else 1
            b = cps[si] if si < k else n + 1
            h_old = heights[si]
            h_new = h_old + sd_adj * z[t, 0]
            lr = (
                _lnorm(h_new, 0.0, hv)
                - _lnorm(h_old, 0.0, hv)
                + _seg_loglik(p1, p2, a, b, h_new, ov)
                - _seg_loglik(p1, p2, a, b, h_old, ov)
            )
            if math.log(u[t, 3]) < lr:
                acc[3] += 1
                heights[si] = h_new

        if it > burnin and (it - burnin) % thin == 0:
            count_hist[k] += 1
            tr_iter[nsamp] = it
            tr_k[nsamp] = k
            if record:
                for jdx in range(k):
                    tr_cps[fcps + jdx] = cps[jdx]
                fcps += k
                for jdx in range(k + 1):
                    tr_h[fh + jdx] = heights[jdx]
                fh += k + 1
            nsamp += 1

    return k, nsamp, fcps, fh


def run_fast_chain(
    data: Dataset,
    params: ModelParams,
    variant: str,
    cfg: ChainConfig,
    sink: Optional[Callable[[int, int, tuple], None]] = None,
    init: Optional[ChangepointState] = None,
    rng: Optional[np.random.Generator] = None,
    return_counts: bool = False,
) -> Tuple[ChainReport, np.ndarray]:
    """Run one benchmark chain; returns the report and the thinned-sample
    histogram over changepoint counts.

    With ``return_counts`` the third return value is the full thinned
    changepoint-count series (for autocorrelation-aware error bars)."""
    if variant not in VARIANT_CODES:
        raise ValueError(f"variant must be one of {tuple(VARIANT_CODES)}")
    code = VARIANT_CODES[variant]
    n = data.n
    if n < 2:
        raise ValueError("the changepoint move structure needs n >= 2")
    y = data.y
    p1 = np.concatenate(([0.0], np.cumsum(y)))
    p2 = np.concatenate(([0.0], np.cumsum(y * y)))
    rng = make_rng(cfg.seed) if rng is None else rng

    state = init if init is not None else ChangepointState((), (0.0,))
    k = state.count
    cps = np.zeros(n + 1, dtype=np.int64)
    heights = np.zeros(n + 1, dtype=np.float64)
    cps[:k] = state.cps
    heights[: k + 1] = state.heights
    pos_slot = np.full(n + 2, -1, dtype=np.int64)
    freelist = np.zeros(max(n - 1, 1), dtype=np.int64)
    taken = set(state.cps)
    free = 0
    for p in range(2, n + 1):
        if p not in taken:
            freelist[free] = p
            pos_slot[p] = free
            free += 1

    prop = np.zeros(4, dtype=np.int64)
    acc = np.zeros(4, dtype=np.int64)
    count_hist = np.zeros(n, dtype=np.int64)

    block = int(min(1_000_000, 20_000 * cfg.thin))
    record = sink is not None
    samples_cap = block // cfg.thin + 2
    tr_iter = np.zeros(samples_cap, dtype=np.int64)
    tr_k = np.zeros(samples_cap, dtype=np.int64)
    if record:
        tr_cps = np.zeros(samples_cap * (n + 1), dtype=np.int64)
        tr_h = np.zeros(samples_cap * (n + 1), dtype=np.float64)
    else:
        tr_cps = np.zeros(1, dtype=np.int64)
        tr_h = np.zeros(1, dtype=np.float64)
    count_chunks: List[np.ndarray] = []

    t0 = time.perf_counter()
    done = 0
    while done < cfg.iterations:
        m = min(block, cfg.iterations - done)
        u = rng.random((m, 4))
        z = rng.standard_normal((m, 2))
        k, nsamp, fcps, fh = _run_block(
            code, n, params.q, params.height_prior_var, params.obs_var,
            params.adjust_var, params.adhoc_var, p1, p2, u, z,
            done, cfg.burnin, cfg.thin, cps, heights, freelist, pos_slot, k,
            prop, acc, count_hist, record, tr_iter, tr_k, tr_cps, tr_h,
        )
        if return_counts and nsamp:
            count_chunks.append(tr_k[:nsamp].copy())
        if record and nsamp:
            off_c = 0
            off_h = 0
            for s in range(nsamp):
                kk = int(tr_k[s])
                coords = tuple(int(v) for v in tr_cps[off_c : off_c + kk]) + tuple(
                    tr_h[off_h : off_h + kk + 1]
                )
                sink(int(tr_iter[s]), kk, coords)
                off_c += kk
                off_h += kk + 1
        done += m
    wall = time.perf_counter() - t0

    final = ChangepointState(
        tuple(int(p) for p in cps[:k]), tuple(float(h) for h in heights[: k + 1])
    )
    report = ChainReport(
        per_move_proposed=prop,
        per_move_accepted=acc,
        wall_time_seconds=wall,
        final_state=to_mixture(final),
        iterations=cfg.iterations,
        seed=cfg.seed,
    )
    if return_counts:
        series = (
            np.concatenate(count_chunks) if count_chunks else np.zeros(0, np.int64)
        )
        return report, count_hist, series
    return report, count_hist
