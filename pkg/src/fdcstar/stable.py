"""Explicit stable formulas, correction routines for them and an empirical stability prober.

Variable layout: the matrix-unit candidate ``x_ij`` of a ``k x k`` block
uses index ``offset + (i - 1) * k + j``; for a list of blocks the groups
are laid out one after the other.
"""

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .algebra import Element, norm
from .errors import CorrectionFailed, InvalidArg, NoSpectralGap, NotProbeable
from .evaluator import eval_qf
from .formula import (
    Adj, Conn, CVar, Mul, Norm, Quant, QuantC, Scalar, Sub, Unit, Var, big, term_sum,
)
from .search import OptConfig

DELTA0 = 0.01         # precondition bound on alpha_k for correct_matrix_units
C_UNITS = 50.0        # documented distance constant of correct_matrix_units
GAP = 0.05            # spectral gap required around 1/2 by correct_projection
POLAR_CUT = 0.25
EXACT = 1e-13         # defects below this are treated as already exact


# ----------------------------------------------------------------- builders


def _check_blocks(block_sizes):
    try:
        ks = [int(k) for k in block_sizes]
    except (TypeError, ValueError):
        raise InvalidArg("block sizes must be integers") from None
    if not ks or any(k < 1 or k != b for k, b in zip(ks, block_sizes)):
        raise InvalidArg(f"invalid block list {block_sizes!r}")
    return ks


def unit_index(i, j, k, offset=0):
    """Variable index of ``x_ij`` (1-based i, j) in a ``k x k`` group."""
    return offset + (i - 1) * k + j


def _rho_of(t):
    return Conn("add", Norm(Sub(t, Adj(t))), Norm(Sub(Mul(t, t), t)))


def rho_p(var=1):
    """``norm(x - x^*) + norm(x x - x)``; its zero set is the projections."""
    return _rho_of(Var(var))


def _alpha_k(k, offset):
    x = lambda i, j: Var(unit_index(i, j, k, offset))
    parts = []
    rng = range(1, k + 1)
    for i in rng:
        for j in rng:
            for kk in rng:
                for l in rng:
                    prod = Mul(x(i, kk), x(l, j))
                    rel = Sub(x(i, j), prod) if kk == l else prod
                    parts.append(Conn("add", Norm(rel), Norm(Sub(x(i, j), Adj(x(j, i))))))
    return Conn("add", big("max", parts), Conn("absdiff", Norm(x(1, 1)), Norm(Unit())))


def _diag_sum(ks, offset):
    terms, off = [], offset
    for k in ks:
        terms += [Var(unit_index(i, i, k, off)) for i in range(1, k + 1)]
        off += k * k
    return term_sum(terms)


def alpha_matrix_units(k, unital=False, offset=0):
    """Matrix-unit formula in the ``k^2`` variables ``x_ij``.

    The maximum runs over ``(i, j, k, l)`` of the two relation norms; the
    normalisation ``| ||x_11|| - 1 |`` is added once. The unital variant is
    the max with ``||1 - sum_i x_ii||``.
    """
    if isinstance(k, bool) or not isinstance(k, int) or k < 1:
        raise InvalidArg("k must be a positive integer")
    f = _alpha_k(k, offset)
    if unital:
        f = Conn("max", f, Norm(Sub(Unit(), _diag_sum([k], offset))))
    return f


def alpha_F(block_sizes, unital=False, offset=0):
    ks = _check_blocks(block_sizes)
    groups, off = [], offset
    for k in ks:
        groups.append(_alpha_k(k, off))
        off += k * k
    f = Conn("add", big("max", groups), _rho_of(_diag_sum(ks, offset)))
    if unital:
        f = Conn("max", f, Norm(Sub(Unit(), _diag_sum(ks, offset))))
    return f


def _alpha_any(ks, unital, offset):
    if len(ks) == 1 and not unital:
        return _alpha_k(ks[0], offset)
    if len(ks) == 1:
        return alpha_matrix_units(ks[0], True, offset)
    return alpha_F(ks, unital, offset)


def _quantify_all(kind, sort_cls, indices, bound, body):
    for i in reversed(indices):
        body = sort_cls(kind, i, Fraction(bound), body)
    return body


def beta0(block_sizes, m, unital=False):
    """``inf_x (alpha(x) + inf_lambda max_l ||y_l - sum lambda^l_ij x_ij||)``.

    ``y_1..y_m`` are the free variables ``x1..xm``; the unit candidates get
    the indices after them and the coordinates ``lambda`` are the scalar
    variables ``z1, z2, ...`` (``m`` groups of ``dim F``), all bounded by 1.
    For a single block the plain matrix-unit formula is used.
    """
    ks = _check_blocks(block_sizes)
    if isinstance(m, bool) or not isinstance(m, int) or m < 1:
        raise InvalidArg("m must be a positive integer")
    dim = sum(k * k for k in ks)
    xs = list(range(m + 1, m + 1 + dim))
    zs = list(range(1, m * dim + 1))
    dists = []
    for l in range(m):
        comb = term_sum([Mul(CVar(zs[l * dim + t]), Var(xs[t])) for t in range(dim)])
        dists.append(Norm(Sub(Var(l + 1), comb)))
    inner = _quantify_all("inf", QuantC, zs, 1, big("max", dists))
    body = Conn("add", _alpha_any(ks, unital, m), inner)
    return _quantify_all("inf", Quant, xs, 1, body)


def _exact(z):
    return Scalar(Fraction(float(z.real)), Fraction(float(z.imag)))


def gamma(block_sizes, bs, unital=True):
    """``inf_x (alpha^u(x) + sum_l ||y_l - sum lambda^l_ij x_ij||)`` with ``b_l``'s coordinates fixed.

    ``bs`` are elements of ``F = M_k1 + ... + M_kn``; their coordinates in
    the canonical matrix units are embedded exactly as rational literals.
    """
    ks = _check_blocks(block_sizes)
    bs = list(bs)
    if not bs:
        raise InvalidArg("gamma needs at least one element")
    for b in bs:
        if not isinstance(b, Element) or list(b.parent.blocks) != ks:
            raise InvalidArg(f"every b_l must be an element of {ks}")
        if norm(b) > 1 + 1e-12:
            raise InvalidArg("every b_l must lie in the unit ball")
    m = len(bs)
    dim = sum(k * k for k in ks)
    xs = list(range(m + 1, m + 1 + dim))
    dists = []
    for l, b in enumerate(bs):
        terms, t = [], 0
        for mat in b.blocks:
            for z in mat.ravel():
                if z != 0:
                    terms.append(Mul(_exact(z), Var(xs[t])))
                t += 1
        target = Var(l + 1) if not terms else Sub(Var(l + 1), term_sum(terms))
        dists.append(Norm(target))
    body = Conn("add", _alpha_any(ks, unital, m), big("add", dists))
    return _quantify_all("inf", Quant, xs, 1, body)


def canonical_units(A, block=None):
    """Matrix units of ``A`` itself in the builder layout (all blocks, or one)."""
    out = []
    blocks = range(len(A.blocks)) if block is None else [block]
    for l in blocks:
        k = A.blocks[l]
        out += [A.matrix_unit(l, i, j) for i in range(k) for j in range(k)]
    return out


# -------------------------------------------------------------- corrections


def _proj_block(m):
    h = 0.5 * (m + m.conj().T)
    w, v = np.linalg.eigh(h)
    if np.any(np.abs(w - 0.5) < GAP):
        raise NoSpectralGap(
            f"eigenvalue {w[np.argmin(np.abs(w - 0.5))]:.4g} of the hermitian part is within "
            f"{GAP} of 1/2")
    keep = v[:, w > 0.5]
    return keep @ keep.conj().T


def correct_projection(A, x):
    """Nearest-by-functional-calculus projection: cut the hermitian part's spectrum at 1/2.

    Satisfies ``||p - x|| <= 4 rho_p(x)`` whenever ``rho_p(x) <= 0.1``.
    """
    if x.parent != A:
        raise InvalidArg("element does not belong to the algebra")
    if eval_qf(rho_p(), A, [x]) <= EXACT:
        return x
    return Element(A, [_proj_block(m) for m in x.blocks])


def _polar_cols(w, rank):
    """``w (w^* w)^{-1/2}`` on the spectral part above POLAR_CUT."""
    g = w.conj().T @ w
    mu, u = np.linalg.eigh(0.5 * (g + g.conj().T))
    big_ = mu > POLAR_CUT
    if int(big_.sum()) != rank:
        raise CorrectionFailed("degenerate polar step: rank changed")
    s = (u[:, big_] / np.sqrt(mu[big_])) @ u[:, big_].conj().T
    return w @ s


def correct_matrix_units(A, xs, unital=False):
    """Exact matrix units near an approximate ``k^2``-tuple (row-major ``x_ij``).

    Requires ``alpha_k(xs) <= DELTA0``; the output satisfies the relations
    to machine precision and ``max ||e_ij - x_ij|| <= C_UNITS * alpha_k(xs)``.
    """
    xs = list(xs)
    k = int(round(np.sqrt(len(xs))))
    if k < 1 or k * k != len(xs):
        raise InvalidArg("need k^2 elements")
    for x in xs:
        if x.parent != A:
            raise InvalidArg("element does not belong to the algebra")
    defect = eval_qf(alpha_matrix_units(k, unital), A, xs)
    if defect <= EXACT:
        return xs
    if defect > DELTA0:
        raise CorrectionFailed(f"defect {defect:.4g} exceeds the precondition bound {DELTA0}")
    X = lambda i, j: xs[(i - 1) * k + j - 1]
    try:
        e11 = correct_projection(A, X(1, 1))
    except NoSpectralGap as exc:
        raise CorrectionFailed(str(exc)) from None
    out_blocks = []
    for l, n in enumerate(A.blocks):
        p = e11.blocks[l]
        rank = int(round(np.trace(p).real))
        cols = [p]
        used = p.copy()
        for i in range(2, k + 1):
            q = np.eye(n) - used
            w = q @ X(i, 1).blocks[l] @ p
            v = _polar_cols(w, rank)
            cols.append(v)
            used = used + v @ v.conj().T
        out_blocks.append([[cols[i] @ cols[j].conj().T for j in range(k)] for i in range(k)])
    es = [Element(A, [out_blocks[l][i][j] for l in range(len(A.blocks))])
          for i in range(k) for j in range(k)]
    if unital:
        rest = A.unit()
        for i in range(k):
            rest = rest - es[i * k + i]
        if rest.norm() > 1e-9:
            raise CorrectionFailed("corrected units do not sum to the unit")
    return es


# ------------------------------------------------------------------- probes


@dataclass
class StabilityReport:
    formula_id: str
    rows: list                    # (delta, worst epsilon, samples, failures)
    modulus: tuple = field(default=())   # fitted PL breakpoints (Fraction, Fraction)

    def to_json(self):
        return {
            "formula_id": self.formula_id,
            "rows": [{"delta": d, "worst_eps": e, "samples": s, "failures": f}
                     for d, e, s, f in self.rows],
            "modulus": [[str(x), str(y)] for x, y in self.modulus],
        }


def _random_unitary(rng, n):
    q, r = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def _sample_projection(A, rng):
    mats = []
    for n in A.blocks:
        u = _random_unitary(rng, n)
        d = np.diag((rng.uniform(size=n) < 0.5).astype(float))
        mats.append(u @ d @ u.conj().T)
    return [Element(A, mats)]


def _unit_sampler(k):
    def sample(A, rng):
        fits = [l for l, n in enumerate(A.blocks) if n >= k]
        if not fits:
            raise NotProbeable(f"{A} has no copy of M_{k}")
        l = fits[int(rng.integers(len(fits)))]
        n = A.blocks[l]
        u = _random_unitary(rng, n)
        out = []
        for i in range(k):
            for j in range(k):
                mats = [np.zeros((b, b), dtype=complex) for b in A.blocks]
                mats[l] = np.outer(u[:, i], u[:, j].conj())
                out.append(Element(A, mats))
        return out
    return sample


_REGISTRY = {}


def register_probe(f, name, sampler, corrector):
    """Make ``f`` probeable: ``sampler(A, rng)`` gives a zero-set tuple,
    ``corrector(A, tuple)`` maps near-zero tuples back into the zero set."""
    _REGISTRY[f] = (name, sampler, corrector)


register_probe(rho_p(), "rho_p", _sample_projection, lambda A, t: [correct_projection(A, t[0])])
for _k in range(1, 7):
    register_probe(alpha_matrix_units(_k), f"alpha{_k}", _unit_sampler(_k),
                   lambda A, t: correct_matrix_units(A, t))


def probe_entry(f):
    try:
        return _REGISTRY[f]
    except (KeyError, TypeError):
        raise NotProbeable("no zero-set sampler or correction registered for this formula") from None


def _perturb_to(f, A, zero, delta, rng):
    """Perturbation of ``zero`` along a random direction with formula value <= delta."""
    dirs = []
    for _ in zero:
        mats = [rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)) for n in A.blocks]
        d = Element(A, mats)
        dirs.append((1.0 / norm(d)) * d)
    at = lambda t: [z + t * d for z, d in zip(zero, dirs)]
    if delta <= 0:
        return zero
    lo, hi = 0.0, 1.0
    while eval_qf(f, A, at(hi)) <= delta and hi < 8:
        lo, hi = hi, 2 * hi
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        if eval_qf(f, A, at(mid)) <= delta:
            lo = mid
        else:
            hi = mid
    return at(lo)


def stability_probe(f, A, n_samples, deltas, cfg=None):
    """Worst correction distance over sampled points with ``f <= delta``, per delta.

    The worst-epsilon column is made nondecreasing (a point with value at
    most ``delta`` also has value at most any larger delta), and the fitted
    modulus interpolates it piecewise linearly from ``(0, 0)``.
    """
    cfg = OptConfig() if cfg is None else cfg
    name, sampler, corrector = probe_entry(f)
    if n_samples < 1:
        raise InvalidArg("n_samples must be positive")
    deltas = sorted(float(d) for d in deltas)
    if any(d < 0 for d in deltas):
        raise InvalidArg("deltas must be nonnegative")
    rows = []
    running = 0.0
    for r, delta in enumerate(deltas):
        worst, failures = 0.0, 0
        for s in range(n_samples):
            rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x57AB, r, s]))
            zero = sampler(A, rng)
            x = _perturb_to(f, A, zero, delta, rng)
            try:
                fixed = corrector(A, x)
            except (CorrectionFailed, NoSpectralGap):
                failures += 1
                continue
            worst = max(worst, max(norm(a - b) for a, b in zip(fixed, x)))
        eps = float("inf") if failures else worst
        running = max(running, eps)
        rows.append((delta, running, n_samples, failures))
    pts = [(Fraction(0), Fraction(0))]
    for delta, eps, _, _ in rows:
        # decimal reprs keep the breakpoints readable
        if delta > 0 and np.isfinite(eps) and Fraction(repr(delta)) > pts[-1][0]:
            pts.append((Fraction(repr(delta)), max(Fraction(repr(eps)), pts[-1][1])))
    return StabilityReport(name, rows, tuple(pts) if len(pts) > 1 else ())
