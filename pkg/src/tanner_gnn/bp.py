"""Normalised min-sum belief propagation for syndrome decoding.

Messages live on a padded ``(num_checks, max_check_degree)`` table. The
check-to-variable update is

    r[c -> v] = alpha * (-1)**s_c * prod_{v' != v} sign(q[v' -> c]) * min_{v' != v} |q[v' -> c]|

and the posterior LLR is ``Q_v = prior_v + sum_c r[c -> v]``. Hard decisions
are ``Q_v < 0`` (an exact zero decodes to 0).

``serial`` sweeps the checks in ascending row order and updates posteriors
in place after each check (layered schedule); ``flooding`` updates every
check from the previous iteration's posteriors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._accel import USE_NUMBA, njit

SCHEDULES = ("serial", "flooding")


@dataclass(frozen=True)
class BpConfig:
    max_iterations: int = 100
    schedule: str = "serial"
    scaling_factor: float = 1.0
    channel_prior: float = 0.05
    # stop as soon as the hard decision satisfies the syndrome; when False
    # every run lasts max_iterations (messages reach their fixed point)
    early_stop: bool = True

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}, got {self.schedule!r}")
        if not 0 < self.scaling_factor <= 1:
            raise ValueError("scaling_factor must lie in (0, 1]")
        prior = np.asarray(self.channel_prior, dtype=np.float64)
        if np.any(prior <= 0) or np.any(prior >= 1):
            raise ValueError("channel_prior must lie strictly between 0 and 1")


@dataclass
class BpResult:
    hard_decision: np.ndarray
    converged: bool
    iterations_used: int
    soft_llrs: np.ndarray


def depolarizing_marginal(p: float) -> float:
    """Probability that the X (or Z) component of a depolarising error is set."""
    return 2.0 * p / 3.0


def check_table(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Padded check -> variable table (pads are -1) and check degrees."""
    h = np.asarray(h, dtype=np.uint8)
    deg = h.sum(axis=1).astype(np.int64)
    width = max(1, int(deg.max()) if deg.size else 1)
    table = np.full((h.shape[0], width), -1, dtype=np.int64)
    for c in range(h.shape[0]):
        idx = np.flatnonzero(h[c])
        table[c, : len(idx)] = idx
    return table, deg


@njit(cache=True)
def _syndrome_ok(table, deg, hard, syndrome):
    for c in range(table.shape[0]):
        par = 0
        for k in range(deg[c]):
            par ^= hard[table[c, k]]
        if par != syndrome[c]:
            return False
    return True


@njit(cache=True)
def _min_sum_numba(table, deg, syndrome, prior, alpha, max_iter, serial, early):
    m, width = table.shape
    n = prior.shape[0]
    r = np.zeros((m, width))
    q = np.zeros((m, width))
    post = prior.copy()
    hard = np.zeros(n, dtype=np.uint8)
    if early and _syndrome_ok(table, deg, hard, syndrome):
        return hard, True, 0, post
    for it in range(1, max_iter + 1):
        if serial:
            for c in range(m):
                sgn = -1.0 if syndrome[c] else 1.0
                min1 = np.inf
                min2 = np.inf
                amin = -1
                for k in range(deg[c]):
                    v = table[c, k]
                    qk = post[v] - r[c, k]
                    q[c, k] = qk
                    if qk < 0:
                        sgn = -sgn
                    a = abs(qk)
                    if a < min1:
                        min2 = min1
                        min1 = a
                        amin = k
                    elif a < min2:
                        min2 = a
                for k in range(deg[c]):
                    mag = min2 if k == amin else min1
                    s = -sgn if q[c, k] < 0 else sgn
                    rk = alpha * s * mag
                    r[c, k] = rk
                    post[table[c, k]] = q[c, k] + rk
        else:
            for c in range(m):
                for k in range(deg[c]):
                    q[c, k] = post[table[c, k]] - r[c, k]
            for c in range(m):
                sgn = -1.0 if syndrome[c] else 1.0
                min1 = np.inf
                min2 = np.inf
                amin = -1
                for k in range(deg[c]):
                    qk = q[c, k]
                    if qk < 0:
                        sgn = -sgn
                    a = abs(qk)
                    if a < min1:
                        min2 = min1
                        min1 = a
                        amin = k
                    elif a < min2:
                        min2 = a
                for k in range(deg[c]):
                    mag = min2 if k == amin else min1
                    s = -sgn if q[c, k] < 0 else sgn
                    r[c, k] = alpha * s * mag
            for v in range(n):
                post[v] = prior[v]
            for c in range(m):
                for k in range(deg[c]):
                    post[table[c, k]] += r[c, k]
        for v in range(n):
            hard[v] = 1 if post[v] < 0 else 0
        if (early or it == max_iter) and _syndrome_ok(table, deg, hard, syndrome):
            return hard, True, it, post
    return hard, False, max_iter, post


def _check_update_numpy(q, valid, syndrome, alpha):
    # q: (rows, width) with pads masked by `valid`
    neg = (q < 0) & valid
    total_sign = np.where((neg.sum(axis=1) + syndrome) % 2 == 1, -1.0, 1.0)
    mags = np.where(valid, np.abs(q), np.inf)
    order = np.argsort(mags, axis=1, kind="stable")
    amin = order[:, 0]
    rows = np.arange(q.shape[0])
    min1 = mags[rows, amin]
    min2 = mags[rows, order[:, 1]] if q.shape[1] > 1 else np.full(q.shape[0], np.inf)
    mag = np.broadcast_to(min1[:, None], q.shape).copy()
    mag[rows, amin] = min2
    own = np.where(neg, -1.0, 1.0)
    return np.where(valid, alpha * total_sign[:, None] * own * mag, 0.0)


def _min_sum_numpy(table, deg, syndrome, prior, alpha, max_iter, serial, early):
    m, width = table.shape
    n = prior.shape[0]
    valid = table >= 0
    safe = np.where(valid, table, 0)
    r = np.zeros((m, width))
    post = prior.copy()
    hard = np.zeros(n, dtype=np.uint8)

    def ok(hard):
        return np.array_equal(np.where(valid, hard[safe], 0).sum(axis=1) % 2, syndrome)

    if early and ok(hard):
        return hard, True, 0, post
    for it in range(1, max_iter + 1):
        if serial:
            for c in range(m):
                vs = table[c, : deg[c]]
                qc = post[vs] - r[c, : deg[c]]
                rc = _check_update_numpy(qc[None, :], np.ones((1, deg[c]), bool), syndrome[c:c + 1], alpha)[0]
                r[c, : deg[c]] = rc
                post[vs] = qc + rc
        else:
            q = np.where(valid, post[safe] - r, 0.0)
            r = _check_update_numpy(q, valid, syndrome, alpha)
            post = prior + np.bincount(safe[valid], weights=r[valid], minlength=n)
        hard = (post < 0).astype(np.uint8)
        if (early or it == max_iter) and ok(hard):
            return hard, True, it, post
    return hard, False, max_iter, post


class BpDecoder:
    """Min-sum decoder bound to one parity-check matrix; reusable across syndromes."""

    def __init__(self, h: np.ndarray, config: BpConfig | None = None):
        self.h = np.asarray(h, dtype=np.uint8)
        self.config = config or BpConfig()
        self.table, self.deg = check_table(self.h)

    def prior_llr(self, channel_prior=None) -> np.ndarray:
        p = self.config.channel_prior if channel_prior is None else channel_prior
        p = np.broadcast_to(np.asarray(p, dtype=np.float64), (self.h.shape[1],))
        return np.log((1.0 - p) / p)

    def decode(self, syndrome, channel_prior=None) -> BpResult:
        syndrome = np.asarray(syndrome, dtype=np.uint8).reshape(-1)
        if syndrome.shape[0] != self.h.shape[0]:
            raise ValueError(f"syndrome has length {syndrome.shape[0]}, H has {self.h.shape[0]} rows")
        cfg = self.config
        kernel = _min_sum_numba if USE_NUMBA else _min_sum_numpy
        hard, conv, its, post = kernel(self.table, self.deg, syndrome, self.prior_llr(channel_prior),
                                       float(cfg.scaling_factor), int(cfg.max_iterations),
                                       cfg.schedule == "serial", bool(cfg.early_stop))
        return BpResult(np.asarray(hard, dtype=np.uint8), bool(conv), int(its), np.asarray(post))


def min_sum_decode(h: np.ndarray, syndrome, config: BpConfig | None = None) -> BpResult:
    """One-shot min-sum decode of ``syndrome`` against ``h``."""
    return BpDecoder(h, config).decode(syndrome)
