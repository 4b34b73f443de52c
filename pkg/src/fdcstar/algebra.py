"""Finite-dimensional C*-algebras ``M_k1 + ... + M_kn`` and their elements.

Structure is exact (block sizes, blockwise arithmetic); norms are computed
numerically by the Jacobi kernel in :mod:`fdcstar.kernels`.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import AlgebraMismatch, ConfigError, InvalidAlgebra, InvalidArg, NumericError
from .search import OptConfig, multistart, pattern_search, restart_rng


@dataclass(frozen=True)
class FiniteDimAlgebra:
    blocks: tuple

    def __post_init__(self):
        blocks = tuple(self.blocks)
        if not blocks:
            raise InvalidAlgebra("an algebra needs at least one block")
        for k in blocks:
            if isinstance(k, bool) or int(k) != k or k < 1:
                raise InvalidAlgebra(f"block sizes must be positive integers, got {k!r}")
        object.__setattr__(self, "blocks", tuple(int(k) for k in blocks))

    @property
    def dim(self):
        """Complex dimension, the sum of squared block sizes."""
        return sum(k * k for k in self.blocks)

    @property
    def real_dim(self):
        return 2 * self.dim

    def __str__(self):
        return " + ".join(f"M_{k}" for k in self.blocks)

    def unit(self):
        return Element(self, [np.eye(k, dtype=complex) for k in self.blocks])

    def zero(self):
        return Element(self, [np.zeros((k, k), dtype=complex) for k in self.blocks])

    def matrix_unit(self, block, i, j):
        """``e_ij`` (0-based indices) of the given block, zero elsewhere."""
        mats = [np.zeros((k, k), dtype=complex) for k in self.blocks]
        mats[block][i, j] = 1.0
        return Element(self, mats)

    def element(self, *mats):
        return Element(self, mats)

    def from_real(self, vec):
        """Inverse of :meth:`Element.to_real`."""
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.real_dim,):
            raise AlgebraMismatch(f"expected {self.real_dim} real coordinates")
        mats, off = [], 0
        for k in self.blocks:
            n = k * k
            re = vec[off:off + n]
            im = vec[off + n:off + 2 * n]
            mats.append((re + 1j * im).reshape(k, k))
            off += 2 * n
        return Element(self, mats)

    def to_json(self):
        return {"blocks": list(self.blocks)}

    @classmethod
    def from_json(cls, data):
        try:
            return cls(tuple(data["blocks"]))
        except (KeyError, TypeError) as exc:
            raise InvalidAlgebra(f"malformed algebra JSON: {exc}") from None


def make_algebra(block_sizes):
    return FiniteDimAlgebra(tuple(block_sizes))


class Element:
    """Immutable member of a :class:`FiniteDimAlgebra`."""

    __slots__ = ("parent", "blocks")

    def __init__(self, parent, mats):
        mats = tuple(np.array(m, dtype=np.complex128) for m in mats)
        if len(mats) != len(parent.blocks):
            raise AlgebraMismatch(
                f"{parent} has {len(parent.blocks)} blocks, got {len(mats)}")
        for m, k in zip(mats, parent.blocks):
            if m.shape != (k, k):
                raise AlgebraMismatch(f"block of shape {m.shape} where {k}x{k} expected")
            m.flags.writeable = False
        object.__setattr__(self, "parent", parent)
        object.__setattr__(self, "blocks", mats)

    def __setattr__(self, name, value):
        raise AttributeError("Element is immutable")

    def __repr__(self):
        return f"Element({self.parent}, {[m.tolist() for m in self.blocks]})"

    def _check(self, other):
        if not isinstance(other, Element):
            raise TypeError(f"expected Element, got {type(other).__name__}")
        if other.parent != self.parent:
            raise AlgebraMismatch(f"{self.parent} vs {other.parent}")

    def __add__(self, other):
        self._check(other)
        return Element(self.parent, [a + b for a, b in zip(self.blocks, other.blocks)])

    def __sub__(self, other):
        self._check(other)
        return Element(self.parent, [a - b for a, b in zip(self.blocks, other.blocks)])

    def __neg__(self):
        return Element(self.parent, [-a for a in self.blocks])

    def __mul__(self, other):
        if isinstance(other, Element):
            self._check(other)
            return Element(self.parent, [a @ b for a, b in zip(self.blocks, other.blocks)])
        if isinstance(other, (int, float, complex, np.number)):
            return Element(self.parent, [complex(other) * a for a in self.blocks])
        return NotImplemented

    def __rmul__(self, other):
        if isinstance(other, (int, float, complex, np.number)):
            return Element(self.parent, [complex(other) * a for a in self.blocks])
        return NotImplemented

    def adjoint(self):
        return Element(self.parent, [a.conj().T for a in self.blocks])

    @property
    def H(self):
        return self.adjoint()

    def norm(self):
        return norm(self)

    def to_real(self):
        """Real coordinates: per block, the row-major real parts then imaginary parts."""
        parts = []
        for m in self.blocks:
            parts.append(m.real.ravel())
            parts.append(m.imag.ravel())
        return np.concatenate(parts)

    def allclose(self, other, atol=1e-12):
        self._check(other)
        return all(np.allclose(a, b, rtol=0, atol=atol)
                   for a, b in zip(self.blocks, other.blocks))

    def equal(self, other):
        self._check(other)
        return all(np.array_equal(a, b) for a, b in zip(self.blocks, other.blocks))

    def to_json(self):
        return [[[[float(z.real), float(z.imag)] for z in row] for row in m]
                for m in self.blocks]

    @classmethod
    def from_json(cls, parent, data):
        mats = []
        try:
            for block, k in zip(data, parent.blocks):
                arr = np.array(block, dtype=float)
                if arr.ndim == 2:  # flat row-major list of [re, im]
                    arr = arr.reshape(k, k, 2)
                mats.append(arr[..., 0] + 1j * arr[..., 1])
        except (TypeError, ValueError) as exc:
            raise AlgebraMismatch(f"malformed element JSON: {exc}") from None
        return cls(parent, mats)


def add(a, b):
    return a + b


def sub(a, b):
    return a - b


def mul(a, b):
    return a * b


def adjoint(a):
    return a.adjoint()


def scalar_mul(lam, a):
    return complex(lam) * a


def block_norms(mats):
    """Operator norms of a ``(n, k, k)`` stack."""
    return kernels.opnorms(mats)


def batch_norm(blocks):
    """Norms of a batch given as one ``(B, k, k)`` array per block."""
    out = None
    for m in blocks:
        m = np.asarray(m)
        if m.shape[1] == 0:
            continue
        v = kernels.opnorms(m)
        out = v if out is None else np.maximum(out, v)
    return out


def norm(a):
    """Operator norm: the largest singular value over all blocks."""
    for m in a.blocks:
        if not np.all(np.isfinite(m)):
            raise NumericError("element has non-finite entries")
    return float(max(kernels.opnorms(m[None, :, :])[0] for m in a.blocks))


def dist(a, b):
    return norm(a - b)


@dataclass(frozen=True)
class Subspace:
    parent: FiniteDimAlgebra
    span: tuple

    def __post_init__(self):
        span = tuple(self.span)
        for s in span:
            if not isinstance(s, Element) or s.parent != self.parent:
                raise AlgebraMismatch("spanning elements must belong to the parent algebra")
        object.__setattr__(self, "span", span)

    def combination(self, coeffs):
        acc = self.parent.zero()
        for c, s in zip(coeffs, self.span):
            acc = acc + complex(c) * s
        return acc


def _stack_blocks(elements):
    """Per block, a ``(len(elements), k, k)`` array."""
    return [np.stack([e.blocks[l] for e in elements])
            for l in range(len(elements[0].parent.blocks))]


def dist_to_subspace(a, S, cfg=None):
    """Best-found ``inf_lambda ||a - sum_j lambda_j s_j||`` (an upper bound).

    Starts from the Frobenius least-squares coefficients, which are exact
    when ``a`` lies in the span, then refines with the pattern search over
    the ``2|S|`` real coordinates. Further restarts perturb that start.
    """
    cfg = OptConfig() if cfg is None else cfg
    if not isinstance(cfg, OptConfig):
        raise ConfigError("cfg must be an OptConfig")
    if a.parent != S.parent:
        raise AlgebraMismatch("element and subspace live in different algebras")
    target = norm(a)
    n = len(S.span)
    if n == 0:
        return target
    a_vec = np.concatenate([m.ravel() for m in a.blocks])
    basis = np.stack([np.concatenate([m.ravel() for m in s.blocks]) for s in S.span], axis=1)
    lam0, *_ = np.linalg.lstsq(basis, a_vec, rcond=None)
    a_stack = [m[None] for m in a.blocks]
    s_stack = _stack_blocks(S.span)

    def objective(theta):
        lam = theta[:, :n] + 1j * theta[:, n:]
        resid = [a_b - np.einsum("bj,jkl->bkl", lam, s_b)
                 for a_b, s_b in zip(a_stack, s_stack)]
        return batch_norm(resid)

    x0 = np.concatenate([lam0.real, lam0.imag])
    scale = max(1.0, float(np.abs(lam0).max(initial=0.0)))

    def run(i):
        rng = restart_rng(cfg.seed, 0x5B5, i)
        start = x0 if i == 0 else x0 + rng.standard_normal(2 * n) * 0.5 * scale
        return pattern_search(
            objective, start, retract=lambda t: t, h0=0.5 * scale,
            h_min=1e-3 * cfg.tolerance, max_iters=cfg.max_iters, rng=rng,
            f_floor=1e-15, schedule=cfg.step_schedule, h_max=4 * scale)

    results = multistart(run, cfg.restarts)
    return float(min(min(r.value for r in results), target))


def random_ball_element(A, radius, seed):
    """Seeded sample from the ball of the given radius.

    Entries have independent N(0, radius^2 / (4 k_max)) real and imaginary
    parts (k_max the largest block size); the draw is then retracted by
    ``x -> x * min(1, radius / ||x||)``. Roughly half the samples land on
    the sphere and half strictly inside.
    """
    if not radius > 0:
        raise InvalidArg("radius must be positive")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xBA11]))
    sigma = radius / (2.0 * np.sqrt(max(A.blocks)))
    mats = [rng.normal(scale=sigma, size=(k, k)) + 1j * rng.normal(scale=sigma, size=(k, k))
            for k in A.blocks]
    return retract_to_ball(Element(A, mats), radius)


def retract_to_ball(x, radius):
    """``x * min(1, radius/||x||)``, nudged so the result norm is <= radius."""
    nx = norm(x)
    if nx <= radius:
        return x
    y = (radius / nx) * x
    shrink = 1.0
    while norm(y) > radius:
        shrink *= 1.0 - 2.0**-50
        y = (shrink * radius / nx) * x
    return y
