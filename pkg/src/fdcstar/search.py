"""Batched derivative-free local search used by every optimisation in the package.

The local method is a generalised pattern search: each iteration polls
``x +- h q_i`` along a freshly drawn random orthonormal basis ``q_1..q_d``
(all ``2d`` points evaluated as one batch). The poll values double as a
central-difference gradient estimate, which drives a short search step
along the estimated descent direction with Polyak-type lengths
``f(x)/|g|``. A poll or search success expands ``h``; a failed iteration
contracts it. Iterates always stay feasible through the caller's retraction.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError

STEP_SCHEDULES = {
    # name: (contraction on failure, expansion on success)
    "halving": (0.5, 2.0),
    "gentle": (0.75, 1.5),
}


@dataclass(frozen=True)
class OptConfig:
    """Optimiser settings shared by the evaluator and the distance searches.

    ``tolerance`` is the target accuracy of reported values; the mesh size
    stops shrinking at ``1e-3 * tolerance``. ``inner_restarts`` and
    ``inner_iters_fraction`` set the budget of recursively nested searches
    (quantifiers that cannot be merged with the enclosing one).
    """

    restarts: int = 8
    max_iters: int = 1000
    tolerance: float = 1e-6
    seed: int = 0
    step_schedule: str = "halving"
    certify: bool = False
    inner_restarts: int = 2
    inner_iters_fraction: float = 0.1

    def __post_init__(self):
        if not isinstance(self.restarts, int) or self.restarts < 1:
            raise ConfigError("restarts must be a positive integer")
        if not isinstance(self.max_iters, int) or self.max_iters < 1:
            raise ConfigError("max_iters must be a positive integer")
        if not (self.tolerance > 0 and np.isfinite(self.tolerance)):
            raise ConfigError("tolerance must be a positive real")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.step_schedule not in STEP_SCHEDULES:
            raise ConfigError(f"unknown step_schedule {self.step_schedule!r}")
        if not isinstance(self.inner_restarts, int) or self.inner_restarts < 1:
            raise ConfigError("inner_restarts must be a positive integer")
        if not 0 < self.inner_iters_fraction <= 1:
            raise ConfigError("inner_iters_fraction must lie in (0, 1]")

    def inner(self):
        """Budget for a nested search."""
        return replace(
            self,
            restarts=self.inner_restarts,
            max_iters=max(1, int(self.max_iters * self.inner_iters_fraction)),
            certify=False,
        )


@dataclass
class LocalResult:
    x: np.ndarray
    value: float
    converged: bool
    iterations: int
    evaluations: int


def restart_rng(seed, *stream):
    """Generator for one restart; identical for identical (seed, stream)."""
    return np.random.default_rng(np.random.SeedSequence([seed, *stream]))


def thread_count():
    try:
        return max(1, int(os.environ.get("CSTAR_THREADS", "1")))
    except ValueError:
        return 1


def pattern_search_many(fun, x0s, *, retract, h0, h_min, max_iters, rngs,
                        f_floor=-np.inf, schedule="halving", h_max=None):
    """Run ``len(x0s)`` independent minimisations in lockstep.

    ``fun(theta, rows)`` receives a ``(n, P, d)`` array of candidate points
    for the searches listed in ``rows`` and returns their ``(n, P)`` values.
    Search ``i`` draws its poll bases from ``rngs[i]`` only, so its
    trajectory does not depend on which other searches run beside it.
    """
    contract, expand = STEP_SCHEDULES[schedule]
    h_max = h0 if h_max is None else h_max
    x0s = np.asarray(x0s, dtype=float)
    n_runs, d = x0s.shape
    X = retract(x0s)
    fX = np.asarray(fun(X[:, None, :], np.arange(n_runs))[:, 0], dtype=float)
    h = np.full(n_runs, float(h0))
    iters = np.zeros(n_runs, dtype=int)
    evals = np.ones(n_runs, dtype=int)
    if d == 0:
        return [LocalResult(X[i], float(fX[i]), True, 0, 1) for i in range(n_runs)]
    for _ in range(max_iters):
        rows = np.flatnonzero((fX > f_floor) & (h >= h_min))
        if rows.size == 0:
            break
        n = rows.size
        iters[rows] += 1
        g = np.stack([rngs[i].standard_normal((d, d)) for i in rows])
        q, r = np.linalg.qr(g)
        q = q * np.sign(np.diagonal(r, axis1=1, axis2=2))[:, None, :]
        dirs = np.swapaxes(q, 1, 2)                      # (n, d, d), rows are directions
        x, fx, hh = X[rows], fX[rows], h[rows]
        step = hh[:, None, None] * dirs
        poll = np.concatenate([x[:, None, :] + step, x[:, None, :] - step], axis=1)
        poll = retract(poll.reshape(-1, d)).reshape(n, 2 * d, d)
        vals = fun(poll, rows)
        grad = np.einsum("nd,nde->ne", (vals[:, :d] - vals[:, d:]) / (2.0 * hh[:, None]), dirs)
        gnorm = np.linalg.norm(grad, axis=1)
        ok = (gnorm > 0) & np.isfinite(gnorm)
        safe = np.where(ok, gnorm, 1.0)
        u = np.where(ok[:, None], grad / safe[:, None], 0.0)
        polyak = np.maximum(fx, 0.0) / safe
        lengths = np.stack([polyak, 0.5 * polyak, 0.25 * polyak, hh, 4 * hh, 16 * hh], axis=1)
        lengths = np.where(ok[:, None] & np.isfinite(lengths), lengths, 0.0)
        extra = x[:, None, :] - lengths[:, :, None] * u[:, None, :]
        extra = retract(extra.reshape(-1, d)).reshape(n, -1, d)
        cand = np.concatenate([poll, extra], axis=1)
        cvals = np.concatenate([vals, fun(extra, rows)], axis=1)
        evals[rows] += cand.shape[1]
        j = np.argmin(cvals, axis=1)
        best = cvals[np.arange(n), j]
        better = best < fx
        moved = np.linalg.norm(cand[np.arange(n), j] - x, axis=1)
        for t in np.flatnonzero(better):
            i = rows[t]
            X[i] = cand[t, j[t]]
            fX[i] = best[t]
            h[i] = min(max(h[i] * expand, moved[t]), h_max)
        h[rows[~better]] *= contract
    return [LocalResult(X[i].copy(), float(fX[i]), bool(fX[i] <= f_floor or h[i] < h_min),
                        int(iters[i]), int(evals[i])) for i in range(n_runs)]


def pattern_search(fun, x0, *, retract, h0, h_min, max_iters, rng,
                   f_floor=-np.inf, schedule="halving", h_max=None):
    """Minimise ``fun`` (batched: ``(B, d) -> (B,)``) from ``x0``.

    Returns the best point seen; its value is exactly ``fun`` at that point,
    so for a minimisation it is an upper bound on the true infimum.
    """
    x0 = np.asarray(x0, dtype=float)

    def many(theta, rows):
        n, p, d = theta.shape
        return np.asarray(fun(theta.reshape(n * p, d))).reshape(n, p)

    return pattern_search_many(
        many, x0[None, :], retract=retract, h0=h0, h_min=h_min, max_iters=max_iters,
        rngs=[rng], f_floor=f_floor, schedule=schedule, h_max=h_max)[0]


def _weak_wolfe(fg, x, f, g, p, c1=1e-4, c2=0.9, max_evals=40):
    """Bisection line search for the weak Wolfe conditions.

    Returns ``(x, f, g, evals, wolfe)``; when the conditions cannot be met
    the best decreasing point seen is returned with ``wolfe=False``, or
    the start point if nothing decreased.
    """
    d0 = float(g @ p)
    lo, hi, t = 0.0, np.inf, 1.0
    best = (x, f, g)
    for n in range(1, max_evals + 1):
        xt = x + t * p
        ft, gt = fg(xt)
        if ft < best[1]:
            best = (xt, ft, gt)
        if not np.isfinite(ft) or ft > f + c1 * t * d0:
            hi = t
        elif float(gt @ p) < c2 * d0:
            lo = t
        else:
            return xt, ft, gt, n, True
        t = 2.0 * lo if hi == np.inf else 0.5 * (lo + hi)
        if hi - lo < 1e-16 * max(1.0, t):
            break
    return best[0], best[1], best[2], n, False


def bfgs_search(fg, x0, *, h0, max_iters, f_floor=-np.inf, x_tol=1e-13):
    """Minimise ``f`` given ``fg(x) -> (f, subgradient)`` by BFGS with a weak Wolfe line search.

    BFGS with an inexact Wolfe search is effective on nonsmooth, piecewise
    smooth objectives such as the ones built from norms and max. The
    inverse Hessian estimate is reset whenever the search stalls; two
    stalls in a row from a fresh reset end the run. The first step (and
    every step after a reset) has length ``h0``.
    """
    x = np.asarray(x0, dtype=float).copy()
    f, g = fg(x)
    evals = 1
    d = x.size
    H = None
    it = 0
    fresh_fail = 0
    while it < max_iters:
        if f <= f_floor:
            break
        gn = float(np.linalg.norm(g))
        if gn == 0 or not np.isfinite(gn):
            break
        it += 1
        p = None
        if H is not None:
            p = -H @ g
            if float(p @ g) >= 0:
                H, p = None, None
        if p is None:
            p = -g * (h0 / gn)
        xn, fn, gnew, ne, wolfe = _weak_wolfe(fg, x, f, g, p)
        evals += ne
        if not fn < f:
            if H is None:
                fresh_fail += 1
                if fresh_fail >= 2:
                    break
                h0 *= 0.1
            H = None
            continue
        fresh_fail = 0
        s = xn - x
        y = gnew - g
        sy = float(s @ y)
        if sy > 1e-300:
            if H is None:
                H = np.eye(d) * (sy / float(y @ y))
            rho = 1.0 / sy
            Hy = H @ y
            H = H - rho * (np.outer(s, Hy) + np.outer(Hy, s)) + \
                (rho * rho * float(y @ Hy) + rho) * np.outer(s, s)
        elif not wolfe:
            H = None
        x, f, g = xn, fn, gnew
        if float(np.linalg.norm(s)) < x_tol:
            H = None
    return LocalResult(x, float(f), bool(f <= f_floor or it < max_iters), it, evals)


def multistart(run, n):
    """Run ``run(i)`` for restart indices ``0..n-1``; results in index order."""
    workers = min(thread_count(), n)
    if workers <= 1:
        return [run(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, range(n)))


def best_index(values, maximize=False):
    """Lexicographically smallest index attaining the min (or max)."""
    arr = np.asarray(values, dtype=float)
    target = arr.max() if maximize else arr.min()
    return int(np.flatnonzero(arr == target)[0])
