"""Distances to copies of finite-dimensional algebras and realization margins of the LM/LF types.

Copies of ``F = M_k1 + ... + M_kr`` inside ``A = M_v1 + ... + M_vs`` are
classified up to unitary conjugacy by multiplicity matrices ``mu``
(``mu[l][j]`` copies of ``M_kl`` sit in block ``j``). The canonical copy
puts ``kron(c_l, 1_mu[l][j])`` for each ``l`` along the diagonal of block
``j`` and pads with zeros. A distance search then runs jointly over a
unitary ``U = exp(iH)`` per block and the coefficients ``c``, minimising
``max_i ||U^* a_i U - c^(i)||``.

The search value is an upper bound on the distance. A certified lower
bound comes from singular values: conjugation does not move them and
``|s_t(a) - s_t(b)| <= ||a - b||`` for every index ``t``.
"""

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product

import numpy as np

from . import kernels
from .algebra import Element, norm, random_ball_element
from .errors import BindingError, ConfigError, InvalidArg
from .search import OptConfig, pattern_search_many, restart_rng

INF = float("inf")
BALL_SLACK = 1e-12


def _multiplicity_rows(k, caps, exact):
    """Vectors ``m`` with ``k * m_j <= caps_j`` (or ``==`` when exact), lexicographic."""
    ranges = []
    for c in caps:
        if exact:
            if c % k:
                return []
            ranges.append([c // k])
        else:
            ranges.append(range(c // k + 1))
    return [tuple(m) for m in product(*ranges)]


def multiplicity_matrices(block_sizes, algebra_blocks, unital=False):
    """Admissible ``mu`` (one row per block of F), each F-block embedded at least once."""
    ks = list(block_sizes)
    vs = list(algebra_blocks)
    out = []

    def rec(l, caps, acc):
        if l == len(ks):
            if not unital or all(c == 0 for c in caps):
                out.append(tuple(acc))
            return
        for row in _multiplicity_rows(ks[l], caps, False):
            if sum(row) == 0:
                continue
            rec(l + 1, [c - ks[l] * m for c, m in zip(caps, row)], acc + [row])

    rec(0, vs, [])
    return out


def _canonical(cs, ks, mu, vs):
    """Per A-block arrays ``(N, v, v)`` of the canonical copy of the coefficients ``cs``.

    ``cs[l]`` has shape ``(N, k_l, k_l)``.
    """
    N = cs[0].shape[0]
    out = []
    for j, v in enumerate(vs):
        blk = np.zeros((N, v, v), dtype=complex)
        o = 0
        for l, k in enumerate(ks):
            m = mu[l][j]
            if m:
                blk[:, o:o + k * m, o:o + k * m] = np.einsum(
                    "nab,st->nasbt", cs[l], np.eye(m)).reshape(N, k * m, k * m)
            o += k * m
        out.append(blk)
    return out


def _compress(mats, ks, mu, vs):
    """Average of the diagonal sub-blocks that the canonical copy of ``mu`` occupies."""
    N = mats[0].shape[0]
    cs = []
    for l, k in enumerate(ks):
        acc = np.zeros((N, k, k), dtype=complex)
        count = 0
        for j, v in enumerate(vs):
            o = sum(ks[t] * mu[t][j] for t in range(l))
            m = mu[l][j]
            for s in range(m):
                idx = o + s + m * np.arange(k)
                acc += mats[j][:, idx[:, None], idx[None, :]]
                count += 1
        cs.append(acc / max(count, 1))
    return cs


def _expi(h):
    """``exp(i h)`` for a stack of hermitian matrices."""
    w, vec = np.linalg.eigh(h)
    return (vec * np.exp(1j * w)[:, None, :]) @ np.conj(np.swapaxes(vec, 1, 2))


def _haar(rng, v):
    z = rng.normal(size=(v, v)) + 1j * rng.normal(size=(v, v))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


class _CopySearch:
    """Objective ``max_i ||U^* a_i U - canon(c_i)||`` over real parameters (H, c).

    Each search row ``r`` has its own base unitaries and ``U = base_r exp(iH)``,
    so every search starts at ``H = 0``.
    """

    FROB_ITERS = 300

    def __init__(self, A, tup, ks, mu):
        self.vs = list(A.blocks)
        self.ks = list(ks)
        self.mu = mu
        self.a = [[m[None] for m in e.blocks] for e in tup]
        self.n_h = sum(v * v for v in self.vs)
        self.n_c = 2 * sum(k * k for k in self.ks)
        self.dim = self.n_h + len(tup) * self.n_c
        self.base = None

    def unitaries(self, theta, rows=None):
        N = theta.shape[0]
        out, o = [], 0
        for j, v in enumerate(self.vs):
            p = theta[:, o:o + v * v]
            o += v * v
            h = np.zeros((N, v, v), dtype=complex)
            iu = np.triu_indices(v, 1)
            nd = len(iu[0])
            h[:, np.arange(v), np.arange(v)] = p[:, :v]
            h[:, iu[0], iu[1]] = p[:, v:v + nd] + 1j * p[:, v + nd:v + 2 * nd]
            h = h + np.conj(np.swapaxes(np.triu(h, 1), 1, 2))
            u = _expi(h)
            if self.base is not None and rows is not None:
                u = self.base[j][rows] @ u
            out.append(u)
        return out

    def coeffs(self, theta, i):
        N = theta.shape[0]
        o = self.n_h + i * self.n_c
        cs = []
        for k in self.ks:
            n = k * k
            cs.append((theta[:, o:o + n] + 1j * theta[:, o + n:o + 2 * n]).reshape(N, k, k))
            o += 2 * n
        return cs

    def pack_coeffs(self, cs_per_i):
        parts = []
        for cs in cs_per_i:
            for c in cs:
                parts += [c.real.reshape(c.shape[0], -1), c.imag.reshape(c.shape[0], -1)]
        return np.concatenate(parts, axis=1)

    def rotated(self, us, i):
        return [np.conj(np.swapaxes(u, 1, 2)) @ a @ u for u, a in zip(us, self.a[i])]

    def __call__(self, theta, rows=None):
        us = self.unitaries(theta, rows)
        best = np.zeros(theta.shape[0])
        for i in range(len(self.a)):
            canon = _canonical(self.coeffs(theta, i), self.ks, self.mu, self.vs)
            for r, c in zip(self.rotated(us, i), canon):
                best = np.maximum(best, kernels.opnorms(r - c))
        return best

    def _frobenius(self, us):
        """Squared Frobenius residual after the best (compression) coefficients, and
        its gradient in ``H`` (one hermitian matrix per block)."""
        val = 0.0
        grads = [np.zeros((v, v), dtype=complex) for v in self.vs]
        for i in range(len(self.a)):
            rot = self.rotated(us, i)
            canon = _canonical(_compress(rot, self.ks, self.mu, self.vs), self.ks, self.mu,
                               self.vs)
            for j, (r, c) in enumerate(zip(rot, canon)):
                e, r = (r - c)[0], r[0]
                val += float(np.sum(np.abs(e) ** 2))
                # d||P(R)||^2 along dR = i[R, H] is Re tr(M H) with M = 2i (E^* R - R E^*);
                # the gradient is the hermitian part of M
                m = 1j * (e.conj().T @ r - r @ e.conj().T)
                grads[j] += m + m.conj().T
        return val, grads

    def polish(self, us, iters=None):
        """Riemannian gradient descent of the Frobenius residual from the unitaries ``us``.

        The residual vanishes exactly on copies, so this finds the rotation
        of an exact (or nearly exact) copy quickly; the operator-norm
        search then starts from there.
        """
        iters = self.FROB_ITERS if iters is None else iters
        f, g = self._frobenius(us)
        t = 1.0
        for _ in range(iters):
            gn = sum(float(np.sum(np.abs(x) ** 2)) for x in g)
            if f < 1e-30 or gn < 1e-30:
                break
            while t > 1e-12:
                trial = [u @ _expi((-t * x)[None]) for u, x in zip(us, g)]
                ft, gt = self._frobenius(trial)
                if ft <= f - 1e-4 * t * gn:
                    us, f, g = trial, ft, gt
                    t *= 2.0
                    break
                t *= 0.5
            else:
                break
        return us

    def start(self, rng, first):
        """(base unitaries, parameters) of one restart: identity or Haar, then polished."""
        if first:
            us = [np.eye(v, dtype=complex)[None] for v in self.vs]
        else:
            us = [_haar(rng, v)[None] for v in self.vs]
        us = self.polish(us)
        cs = [_compress(self.rotated(us, i), self.ks, self.mu, self.vs)
              for i in range(len(self.a))]
        theta = np.concatenate([np.zeros((1, self.n_h)), self.pack_coeffs(cs)], axis=1)[0]
        return [u[0] for u in us], theta


def _check_tuple(A, tup):
    tup = list(tup)
    for e in tup:
        if not isinstance(e, Element) or e.parent != A:
            raise InvalidArg("tuple elements must belong to the algebra")
        if norm(e) > 1 + BALL_SLACK:
            raise InvalidArg("tuple elements must lie in the unit ball")
    return tup


def _dist_for_mu(A, tup, ks, mu, cfg):
    obj = _CopySearch(A, tup, ks, mu)
    rngs = [restart_rng(cfg.seed, 0xC0B1, i) for i in range(cfg.restarts)]
    starts = [obj.start(g, i == 0) for i, g in enumerate(rngs)]
    obj.base = [np.stack([s[0][j] for s in starts]) for j in range(len(obj.vs))]
    x0s = np.stack([s[1] for s in starts])

    def fun(theta, rows):
        n, p, d = theta.shape
        return obj(theta.reshape(n * p, d), np.repeat(rows, p)).reshape(n, p)

    results = pattern_search_many(
        fun, x0s, retract=lambda t: t, h0=0.25, h_min=1e-3 * cfg.tolerance,
        max_iters=cfg.max_iters, rngs=rngs, f_floor=1e-15,
        schedule=cfg.step_schedule, h_max=2.0)
    return min(r.value for r in results)


def _sorted_sv(m):
    return np.linalg.svd(m, compute_uv=False)


def _spectral_bound_mu(svals, ks, mu):
    """Certified lower bound on ``inf_c max_j ||a_j - canon(c)_j||`` up to conjugation.

    In block ``j`` the canonical copy's singular values are those of each
    ``c_l`` repeated ``mu[l][j]`` times, followed by zeros, so the a-values
    past the covered slots must all be matched by 0. For a single matrix
    block the slot of every ``s_q(c)`` is fixed as well; the smallest
    feasible deviation is then found by bisection with a greedy check of
    the decreasing sequence. For several blocks only the zero slots are
    used (a weaker but still valid bound).
    """
    zero_part = 0.0
    for j, s in enumerate(svals):
        used = sum(k * mu[l][j] for l, k in enumerate(ks))
        if used < len(s):
            zero_part = max(zero_part, float(s[used]))
    if len(ks) != 1:
        return zero_part
    k = ks[0]
    bands = []
    for j, s in enumerate(svals):
        m = mu[0][j]
        if m:
            bands.append([(float(s[q * m]), float(s[(q + 1) * m - 1])) for q in range(k)])

    def feasible(eps):
        cur = np.inf
        for q in range(k):
            # every a-value in slot q (largest b[q][0], smallest b[q][1]) is within eps of s_q
            lo = max(max(b[q][0] for b in bands) - eps, 0.0)
            hi = min(b[q][1] for b in bands) + eps
            val = min(hi, cur)
            if val < lo:
                return False
            cur = val
        return True

    lo, hi = 0.0, 1.0 + max(float(s.max(initial=0.0)) for s in svals)
    if feasible(0.0):
        return zero_part
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return max(lo, zero_part)


def spectral_lower_bound(A, tup, block_sizes, unital=False):
    """Certified lower bound on the distance of the tuple to copies of F (None if no copy)."""
    tup = _check_tuple(A, tup)
    ks = list(block_sizes)
    mus = multiplicity_matrices(ks, A.blocks, unital)
    if not mus:
        return None
    svals = [[_sorted_sv(m) for m in e.blocks] for e in tup]
    return min(max(_spectral_bound_mu(sv, ks, mu) for sv in svals) for mu in mus)


def dist_to_fd_copy(A, tup, block_sizes, unital=False, cfg=None):
    """Best-found ``min_C max_i dist(a_i, C)`` over copies C of F, or None (no copy)."""
    cfg = OptConfig() if cfg is None else cfg
    if not isinstance(cfg, OptConfig):
        raise ConfigError("cfg must be an OptConfig")
    tup = _check_tuple(A, tup)
    ks = [int(k) for k in block_sizes]
    if not ks or any(k < 1 for k in ks):
        raise InvalidArg("block sizes must be positive integers")
    mus = multiplicity_matrices(ks, A.blocks, unital)
    if not mus:
        return None
    if not tup:
        return 0.0
    return float(min(_dist_for_mu(A, tup, ks, mu, cfg) for mu in mus))


def dist_to_matrix_copy(A, tup, k, unital=False, cfg=None):
    return dist_to_fd_copy(A, tup, [k], unital, cfg)


# ------------------------------------------------------------------ reports


def _enc(x):
    if x is None:
        return "NoCopy"
    if x == INF:
        return "inf"
    return x


@dataclass
class OmissionReport:
    schema: str            # "t" (LM) | "s" (LF)
    m: int
    n: int
    table: list            # rows {"copy": [...], "distance": float | None, "lower_bound": ...}
    margin: float
    verdict: str           # "realizes" | "omits" | "unknown"
    certified_side: str    # "upper" | "both"
    truncated: bool = False
    unital: bool = False
    notes: list = field(default_factory=list)

    def to_json(self):
        return {
            "schema": self.schema, "m": self.m, "n": self.n, "unital": self.unital,
            "table": [{"copy": r["copy"], "distance": _enc(r["distance"]),
                       "lower_bound": _enc(r["lower_bound"]) if r["lower_bound"] is not None
                       or r["distance"] is None else None}
                      for r in self.table],
            "margin": _enc(self.margin), "verdict": self.verdict,
            "certified_side": self.certified_side, "truncated": self.truncated,
            "notes": list(self.notes),
        }


def _report(schema, m, n, rows, cfg, truncated, unital, certify, notes):
    thr = float(Fraction(1, m))
    dists = [INF if r["distance"] is None else r["distance"] for r in rows]
    margin = min(dists, default=INF)
    if any(d < thr - cfg.tolerance for d in dists):
        verdict = "omits"
    elif truncated:
        verdict = "unknown"
        notes.append("copy sizes truncated; realization cannot be certified")
    elif all(r["distance"] is None or (r["lower_bound"] is not None and
                                       r["lower_bound"] >= thr - cfg.tolerance) for r in rows):
        verdict = "realizes"
    else:
        verdict = "unknown"
    side = "both" if certify else "upper"
    return OmissionReport(schema, m, n, rows, margin, verdict, side, truncated, unital, notes)


def _validate(m, n, tup):
    if isinstance(m, bool) or not isinstance(m, int) or m < 1:
        raise InvalidArg("m must be a positive integer")
    if len(tup) != n:
        raise BindingError(f"expected a {n}-tuple, got {len(tup)} elements")


def lm_margin(A, tup, m, n, k_max=None, cfg=None, unital=False, certify=None):
    """Distances to copies of M_k for 2 <= k <= k_max and the t_{m,n} verdict.

    ``k_max`` defaults to the largest block size (no copy of a larger M_k
    exists); a smaller value truncates the table and blocks a realizes
    verdict.
    """
    cfg = OptConfig() if cfg is None else cfg
    certify = cfg.certify if certify is None else certify
    tup = _check_tuple(A, tup)
    _validate(m, n, tup)
    top = max(A.blocks)
    k_max = top if k_max is None else int(k_max)
    if k_max < 2:
        raise InvalidArg("k_max must be at least 2")
    truncated = k_max < top
    rows = []
    for k in range(2, k_max + 1):
        d = dist_to_matrix_copy(A, tup, k, unital, cfg) if k <= top else None
        lb = spectral_lower_bound(A, tup, [k], unital) if certify and d is not None else None
        rows.append({"copy": [k], "distance": d, "lower_bound": lb})
    notes = []
    if k_max > top:
        notes.append(f"k > {top} has no copies in this algebra")
    return _report("t", m, n, rows, cfg, truncated, unital, certify, notes)


def block_multisets(dim_max):
    """Nonincreasing block lists with sum of squares <= dim_max, in a fixed order."""
    out = []

    def rec(max_k, left, acc):
        if acc:
            out.append(tuple(acc))
        for k in range(min(max_k, int(np.sqrt(left))), 0, -1):
            if k * k <= left:
                rec(k, left - k * k, acc + [k])

    rec(int(np.sqrt(dim_max)), dim_max, [])
    return sorted(out, key=lambda f: (sum(k * k for k in f), f))


def lf_margin(A, tup, m, n, dim_max=None, cfg=None, unital=False, certify=None):
    """Distances to copies of every F with dim F <= dim_max and the s_{m,n} verdict."""
    cfg = OptConfig() if cfg is None else cfg
    certify = cfg.certify if certify is None else certify
    tup = _check_tuple(A, tup)
    _validate(m, n, tup)
    dim_max = A.dim if dim_max is None else int(dim_max)
    if dim_max < 1:
        raise InvalidArg("dim_max must be positive")
    truncated = dim_max < A.dim
    rows = []
    for F in block_multisets(min(dim_max, A.dim)):
        d = dist_to_fd_copy(A, tup, F, unital, cfg)
        if d is None:
            continue
        lb = spectral_lower_bound(A, tup, F, unital) if certify else None
        rows.append({"copy": list(F), "distance": d, "lower_bound": lb})
    return _report("s", m, n, rows, cfg, truncated, unital, certify, [])


@dataclass
class ScanReport:
    schema: str
    m: int
    n: int
    samples: int
    max_margin: float
    worst_sample: int
    verdicts: dict

    def to_json(self):
        return {"schema": self.schema, "m": self.m, "n": self.n, "samples": self.samples,
                "max_margin": _enc(self.max_margin), "worst_sample": self.worst_sample,
                "verdicts": dict(self.verdicts)}


def sample_tuple(A, n, seed, index):
    return [random_ball_element(A, 1.0, int(np.random.SeedSequence([seed, 0x5CA9, index, i])
                                            .generate_state(1)[0]))
            for i in range(n)]


def omission_scan(A, schema, m, n, samples, cfg=None, bound=None, unital=False):
    """Run the margin op on seeded unit-ball tuples; report the largest margin found."""
    cfg = OptConfig() if cfg is None else cfg
    if schema not in ("t", "s"):
        raise InvalidArg("schema must be 't' or 's'")
    verdicts = {"realizes": 0, "omits": 0, "unknown": 0}
    best, worst = -1.0, -1
    for s in range(samples):
        tup = sample_tuple(A, n, cfg.seed, s)
        rep = (lm_margin(A, tup, m, n, bound, cfg, unital) if schema == "t"
               else lf_margin(A, tup, m, n, bound, cfg, unital))
        verdicts[rep.verdict] += 1
        if rep.margin > best:
            best, worst = rep.margin, s
    return ScanReport(schema, m, n, samples, best, worst, verdicts)
