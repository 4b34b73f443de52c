"""Evaluation of formulas in finite-dimensional C*-algebras.

Quantifier-free formulas are evaluated exactly (up to floating point) by a
compiled, batched program. Quantified formulas are evaluated by multi-start
pattern search over the real coordinates of the quantified variables:

* Quantifiers reachable from the root through monotone connective positions
  are merged into one joint search (``inf_x (a + inf_y b) = inf_{x,y} (a + b)``;
  under the antitone argument of ``tsub`` an ``inf`` turns into a ``sup``).
  The merged kind decides the sidedness of the result: an ``inf`` search
  returns an upper bound of the true value, a ``sup`` search a lower bound.
* Any remaining quantifier is evaluated recursively, one nested search per
  outer candidate point, with the reduced budget ``OptConfig.inner()``.
  Sidedness is only guaranteed when no such nested alternation is left.

In certificate mode a grid over the quantified variables, combined with the
formula's Lipschitz modulus, gives the missing side at small dimensions.
"""

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from . import kernels
from .algebra import Element, norm
from .errors import AlgebraMismatch, BallViolation, BindingError, ConfigError, NumericError
from .formula import (
    CONNECTIVES, PL, Add, Adj, CVar, Conn, Mul, Norm, Quant, QuantC, Scalar, Scale, Sub, Unit,
    Var, all_var_indices, free_scalar_vars, free_vars, is_quantifier_free, lipschitz_modulus,
    substitute_cvar, substitute_var,
)
from .search import (
    OptConfig, bfgs_search, best_index, multistart, pattern_search_many, restart_rng,
)

__all__ = [
    "OptConfig", "EvalResult", "ConditionResult", "Program", "eval_qf", "evaluate",
    "check_condition", "prenex",
]

CERT_MAX_REAL_DIM = 6
CERT_MAX_POINTS = 200_000
BALL_SLACK = 1e-12
ZERO_FLOOR = 1e-14


# ------------------------------------------------------------------ program


class Program:
    """A formula compiled into straight-line batched numpy code.

    Common subterms and repeated atomic norms are shared. All atomic norms
    are computed by a single kernel call per block size.
    """

    def __init__(self, formula, algebra):
        self.algebra = algebra
        self.formula = formula
        self.tcode = []      # (op, arg slots...) per term slot
        self._tslot = {}
        self.atoms = []      # term slot per atomic norm
        self._aslot = {}
        self.fcode = []      # formula instructions
        self.root = self._compile(formula)

    def _term(self, t):
        slot = self._tslot.get(t)
        if slot is not None:
            return slot
        if isinstance(t, Var):
            ins = ("var", t.index)
        elif isinstance(t, CVar):
            ins = ("cvar", t.index)
        elif isinstance(t, Unit):
            ins = ("unit",)
        elif isinstance(t, Scalar):
            ins = ("scalar", t.value)
        elif isinstance(t, Adj):
            ins = ("adj", self._term(t.term))
        elif isinstance(t, (Add, Sub, Mul)):
            name = {Add: "add", Sub: "sub", Mul: "mul"}[type(t)]
            ins = (name, self._term(t.left), self._term(t.right))
        else:
            raise TypeError(f"not a term: {t!r}")
        self.tcode.append(ins)
        slot = len(self.tcode) - 1
        self._tslot[t] = slot
        return slot

    def _emit(self, ins):
        self.fcode.append(ins)
        return len(self.fcode) - 1

    def _compile(self, f):
        if isinstance(f, Norm):
            ts = self._term(f.term)
            a = self._aslot.get(ts)
            if a is None:
                self.atoms.append(ts)
                a = self._aslot[ts] = len(self.atoms) - 1
            return self._emit(("atom", a))
        if isinstance(f, Conn):
            if f.op not in CONNECTIVES:
                raise ConfigError(f"unknown connective {f.op!r}")
            return self._emit(("conn", f.op, self._compile(f.left), self._compile(f.right)))
        if isinstance(f, Scale):
            return self._emit(("scale", float(f.factor), self._compile(f.body)))
        if isinstance(f, PL):
            xs = np.array([float(x) for x, _ in f.points])
            ys = np.array([float(y) for _, y in f.points])
            return self._emit(("pl", xs, ys, self._compile(f.body)))
        if isinstance(f, (Quant, QuantC)):
            return self._emit(("nested", _Search(f, self.algebra)))
        raise TypeError(f"not a formula: {f!r}")

    def run(self, env, batch, cfg=None, depth=0):
        """Values at ``batch`` points; ``env`` maps ('x'|'z', i) to batched values."""
        return self._forward(env, batch, cfg, depth)[0]

    def _forward(self, env, batch, cfg=None, depth=0, keep=False):
        blocks = self.algebra.blocks
        vals = [None] * len(self.tcode)
        for slot, ins in enumerate(self.tcode):
            op = ins[0]
            if op == "var":
                v = env.get(("x", ins[1]))
                if v is None:
                    raise BindingError(f"no value bound to x{ins[1]}")
                vals[slot] = ("e", v)
            elif op == "cvar":
                v = env.get(("z", ins[1]))
                if v is None:
                    raise BindingError(f"no value bound to z{ins[1]}")
                vals[slot] = ("s", v)
            elif op == "unit":
                vals[slot] = ("e", [np.eye(k, dtype=complex)[None] for k in blocks])
            elif op == "scalar":
                vals[slot] = ("s", np.array([ins[1]], dtype=complex))
            elif op == "adj":
                s, v = vals[ins[1]]
                vals[slot] = (s, np.conj(v) if s == "s" else
                              [np.conj(np.swapaxes(m, -1, -2)) for m in v])
            else:
                vals[slot] = _binary(op, vals[ins[1]], vals[ins[2]], blocks)

        norms, per_block, elem = self._norms(vals, batch)
        out = [None] * len(self.fcode)
        for i, ins in enumerate(self.fcode):
            op = ins[0]
            if op == "atom":
                out[i] = norms[ins[1]]
            elif op == "conn":
                a, b = out[ins[2]], out[ins[3]]
                name = ins[1]
                if name == "add":
                    out[i] = a + b
                elif name == "max":
                    out[i] = np.maximum(a, b)
                elif name == "min":
                    out[i] = np.minimum(a, b)
                elif name == "tsub":
                    out[i] = np.maximum(a - b, 0.0)
                else:
                    out[i] = np.abs(a - b)
            elif op == "scale":
                out[i] = ins[1] * out[ins[2]]
            elif op == "pl":
                out[i] = np.interp(out[ins[3]], ins[1], ins[2])
            else:
                inner = (cfg or OptConfig()).inner()
                out[i] = ins[1].run(env, batch, inner, depth + 1)[0]
        res = np.broadcast_to(out[self.root], (batch,)).astype(float)
        if not np.all(np.isfinite(res)):
            raise NumericError("non-finite formula value")
        if keep:
            return res, (vals, norms, per_block, elem, out)
        return res, None

    def _norms(self, vals, batch):
        n_atoms = len(self.atoms)
        result = np.zeros((n_atoms, batch))
        elem = [a for a, ts in enumerate(self.atoms) if vals[ts][0] == "e"]
        per_block = []
        for a, ts in enumerate(self.atoms):
            if vals[ts][0] == "s":
                result[a] = np.broadcast_to(np.abs(vals[ts][1]), (batch,))
        if elem:
            for l, k in enumerate(self.algebra.blocks):
                stack = np.concatenate(
                    [np.broadcast_to(vals[self.atoms[a]][1][l], (batch, k, k)) for a in elem])
                if not np.all(np.isfinite(stack)):
                    raise NumericError("non-finite intermediate value")
                nb = kernels.opnorms(stack).reshape(len(elem), batch)
                per_block.append((stack, nb))
                result[elem] = np.maximum(result[elem], nb)
        return result, per_block, elem

    @property
    def differentiable(self):
        return not any(ins[0] == "nested" for ins in self.fcode)

    def value_and_grad(self, env, batch, keys):
        """Values and one subgradient per point with respect to the variables in ``keys``.

        Element gradients are ``(B, k, k)`` arrays ``G`` per block with
        ``df = Re sum conj(G) dX``; scalar gradients ``g`` with
        ``df = Re(conj(g) dz)``. Active branches of max/min and the block
        and singular pair attaining each norm select the subgradient.
        """
        if not self.differentiable:
            raise ConfigError("formula has nested quantifiers; no subgradient available")
        res, (vals, norms, per_block, elem, out) = self._forward(env, batch, keep=True)
        fbar = [None] * len(self.fcode)
        fbar[self.root] = np.ones(batch)

        def facc(j, v):
            fbar[j] = v if fbar[j] is None else fbar[j] + v

        abar = np.zeros((len(self.atoms), batch))
        for i in range(len(self.fcode) - 1, -1, -1):
            bar = fbar[i]
            if bar is None:
                continue
            ins = self.fcode[i]
            op = ins[0]
            if op == "atom":
                abar[ins[1]] += bar
            elif op == "scale":
                facc(ins[2], ins[1] * bar)
            elif op == "pl":
                xs, ys = ins[1], ins[2]
                t = out[ins[3]]
                seg = np.clip(np.searchsorted(xs, t, side="right") - 1, 0, len(xs) - 1)
                slope = np.zeros_like(t, dtype=float)
                inside = seg < len(xs) - 1
                nxt = np.minimum(seg + 1, len(xs) - 1)
                dx = np.where(inside, xs[nxt] - xs[seg], 1.0)
                slope = np.where(inside, (ys[nxt] - ys[seg]) / dx, 0.0)
                facc(ins[3], slope * bar)
            else:
                name, a, b = ins[1], ins[2], ins[3]
                va, vb = out[a], out[b]
                if name == "add":
                    facc(a, bar)
                    facc(b, bar)
                elif name in ("max", "min"):
                    pick = va >= vb if name == "max" else va <= vb
                    facc(a, bar * pick)
                    facc(b, bar * ~pick)
                elif name == "tsub":
                    on = (va - vb) > 0
                    facc(a, bar * on)
                    facc(b, -bar * on)
                else:
                    sg = np.sign(va - vb)
                    facc(a, bar * sg)
                    facc(b, -bar * sg)

        tbar = [None] * len(self.tcode)

        def tacc(slot, g):
            if tbar[slot] is None:
                tbar[slot] = g
            elif isinstance(g, list):
                tbar[slot] = [x + y for x, y in zip(tbar[slot], g)]
            else:
                tbar[slot] = tbar[slot] + g

        nb_blocks = len(self.algebra.blocks)
        for a, ts in enumerate(self.atoms):
            if vals[ts][0] == "s":
                z = np.broadcast_to(vals[ts][1], (batch,))
                mag = np.abs(z)
                unit = np.where(mag > 0, z / np.where(mag > 0, mag, 1.0), 0.0)
                tacc(ts, unit * abar[a])
        if elem:
            taken = np.zeros((len(elem), batch), dtype=bool)
            contrib = {a: [None] * nb_blocks for a in elem}
            for l, (stack, nb) in enumerate(per_block):
                k = self.algebra.blocks[l]
                hit = (nb >= norms[elem]) & ~taken
                taken |= hit
                w = abar[elem] * hit
                if not np.any(w):
                    for t, a in enumerate(elem):
                        contrib[a][l] = np.zeros((batch, k, k), dtype=complex)
                    continue
                u, _, vh = np.linalg.svd(stack)
                g = (u[:, :, :1] @ vh[:, :1, :]).reshape(len(elem), batch, k, k)
                g = g * w[:, :, None, None]
                for t, a in enumerate(elem):
                    contrib[a][l] = g[t]
            for a in elem:
                tacc(self.atoms[a], contrib[a])

        grads = {}
        blocks = self.algebra.blocks
        for slot in range(len(self.tcode) - 1, -1, -1):
            g = tbar[slot]
            if g is None:
                continue
            ins = self.tcode[slot]
            op = ins[0]
            sort = vals[slot][0]
            if op in ("var", "cvar"):
                key = ("x" if op == "var" else "z", ins[1])
                if key in grads:
                    grads[key] = ([x + y for x, y in zip(grads[key], g)]
                                  if isinstance(g, list) else grads[key] + g)
                else:
                    grads[key] = g
            elif op in ("unit", "scalar"):
                continue
            elif op == "adj":
                tacc(ins[1], np.conj(g) if sort == "s" else
                     [np.conj(np.swapaxes(m, -1, -2)) for m in g])
            elif op in ("add", "sub"):
                for child, sign in ((ins[1], 1.0), (ins[2], 1.0 if op == "add" else -1.0)):
                    if sort == "e" and vals[child][0] == "s":
                        tacc(child, sign * sum(np.trace(m, axis1=-2, axis2=-1) for m in g))
                    else:
                        tacc(child, [sign * m for m in g] if sort == "e" else sign * g)
            else:
                (sa, va), (sb, vb) = vals[ins[1]], vals[ins[2]]
                if sa == "s" and sb == "s":
                    tacc(ins[1], np.conj(vb) * g)
                    tacc(ins[2], np.conj(va) * g)
                elif sa == "s":
                    tacc(ins[1], sum(np.sum(np.conj(e) * m, axis=(-2, -1)) for e, m in zip(vb, g)))
                    tacc(ins[2], [np.conj(va)[:, None, None] * m for m in g])
                elif sb == "s":
                    tacc(ins[2], sum(np.sum(np.conj(e) * m, axis=(-2, -1)) for e, m in zip(va, g)))
                    tacc(ins[1], [np.conj(vb)[:, None, None] * m for m in g])
                else:
                    tacc(ins[1], [m @ np.conj(np.swapaxes(e, -1, -2)) for m, e in zip(g, vb)])
                    tacc(ins[2], [np.conj(np.swapaxes(e, -1, -2)) @ m for m, e in zip(g, va)])

        out_grads = {}
        for key in keys:
            g = grads.get(key)
            if key[0] == "z":
                out_grads[key] = (np.zeros(batch, dtype=complex) if g is None
                                  else np.broadcast_to(g, (batch,)).astype(complex))
            else:
                out_grads[key] = [np.zeros((batch, k, k), dtype=complex) if g is None
                                  else np.broadcast_to(m, (batch, k, k)).astype(complex)
                                  for k, m in zip(blocks, g or [None] * len(blocks))]
        return res, out_grads


def _binary(op, x, y, blocks):
    (sx, vx), (sy, vy) = x, y
    if sx == "s" and sy == "s":
        return ("s", vx + vy if op == "add" else vx - vy if op == "sub" else vx * vy)
    if op == "mul":
        if sx == "s":
            return ("e", [vx[:, None, None] * m for m in vy])
        if sy == "s":
            return ("e", [m * vy[:, None, None] for m in vx])
        return ("e", [a @ b for a, b in zip(vx, vy)])
    # promote scalars to multiples of the unit
    if sx == "s":
        vx = [vx[:, None, None] * np.eye(k) for k in blocks]
    if sy == "s":
        vy = [vy[:, None, None] * np.eye(k) for k in blocks]
    if op == "add":
        return ("e", [a + b for a, b in zip(vx, vy)])
    return ("e", [a - b for a, b in zip(vx, vy)])


# ------------------------------------------------------------------ binding


def _bind(f, algebra, tup, scalars=None):
    """Batch-1 environment from a tuple (x1, x2, ...) or a mapping index -> Element.

    Scalars likewise come as a sequence (z1, z2, ...) or a mapping.
    """
    env = {}
    items = tup.items() if isinstance(tup, dict) else enumerate(tup or (), start=1)
    for i, e in items:
        if not isinstance(e, Element):
            raise BindingError(f"x{i} must be bound to an Element")
        if e.parent != algebra:
            raise AlgebraMismatch(f"x{i} lives in {e.parent}, not {algebra}")
        env[("x", int(i))] = [m[None] for m in e.blocks]
    scalars = scalars or {}
    zitems = scalars.items() if isinstance(scalars, dict) else enumerate(scalars, start=1)
    for i, z in zitems:
        env[("z", int(i))] = np.array([complex(z)])
    missing = sorted(i for i in free_vars(f) if ("x", i) not in env)
    if missing:
        raise BindingError(f"free variables without values: {['x%d' % i for i in missing]}")
    zmissing = sorted(i for i in free_scalar_vars(f) if ("z", i) not in env)
    if zmissing:
        raise BindingError(f"free scalar variables without values: {['z%d' % i for i in zmissing]}")
    return env


def eval_qf(f, algebra, tup=(), scalars=None):
    """Exact value of a quantifier-free formula at the given tuple."""
    if not is_quantifier_free(f):
        raise ConfigError("eval_qf needs a quantifier-free formula; use evaluate")
    env = _bind(f, algebra, tup, scalars)
    return float(Program(f, algebra).run(env, 1)[0])


# ------------------------------------------------------------------- prenex


def prenex(f):
    """Pull mergeable quantifiers to the front.

    Returns ``(kind, qvars, matrix)`` where ``kind`` is "inf", "sup" or None,
    ``qvars`` lists ``(sort, index, bound)`` of the merged variables (bound
    variables renamed apart where needed) and ``matrix`` is the remaining
    formula, which may still contain unmerged quantifiers.
    """
    used_x, used_z = all_var_indices(f)
    taken = {("x", i) for i in free_vars(f)} | {("z", i) for i in free_scalar_vars(f)}
    counters = {"x": max(used_x, default=0), "z": max(used_z, default=0)}
    qvars = []
    state = {"kind": None}

    def fresh(sort):
        counters[sort] += 1
        return counters[sort]

    def rec(g, pol):
        if isinstance(g, (Quant, QuantC)):
            if pol == 0:
                return g
            eff = g.kind if pol == 1 else ("sup" if g.kind == "inf" else "inf")
            if state["kind"] is None:
                state["kind"] = eff
            if eff != state["kind"]:
                return g
            sort = "x" if isinstance(g, Quant) else "z"
            idx, body = g.var, g.body
            if (sort, idx) in taken:
                new = fresh(sort)
                body = (substitute_var if sort == "x" else substitute_cvar)(body, idx, new)
                idx = new
            taken.add((sort, idx))
            qvars.append((sort, idx, g.bound))
            return rec(body, pol)
        if isinstance(g, Conn):
            ml, mr = CONNECTIVES[g.op]["monotone"]
            return Conn(g.op, rec(g.left, pol * ml), rec(g.right, pol * mr))
        if isinstance(g, Scale):
            return Scale(g.factor, rec(g.body, pol))
        if isinstance(g, PL):
            return PL(g.points, rec(g.body, pol))
        return g

    matrix = rec(f, 1)
    return state["kind"], qvars, matrix


# ------------------------------------------------------------------- search


class _Space:
    """Real parameterisation of the quantified variables, with ball retraction."""

    def __init__(self, algebra, qvars):
        self.algebra = algebra
        self.qvars = qvars
        self.segments = []
        off = 0
        for sort, idx, bound in qvars:
            size = algebra.real_dim if sort == "x" else 2
            self.segments.append((sort, idx, float(bound), off, size))
            off += size
        self.dim = off

    def decode(self, theta):
        env = {}
        batch = theta.shape[0]
        for sort, idx, _, off, size in self.segments:
            seg = theta[:, off:off + size]
            if sort == "z":
                env[(sort, idx)] = seg[:, 0] + 1j * seg[:, 1]
                continue
            mats, o = [], 0
            for k in self.algebra.blocks:
                n = k * k
                mats.append((seg[:, o:o + n] + 1j * seg[:, o + n:o + 2 * n]).reshape(batch, k, k))
                o += 2 * n
            env[(sort, idx)] = mats
        return env

    def retract(self, theta):
        theta = np.array(theta, dtype=float, copy=True)
        for sort, idx, bound, off, size in self.segments:
            seg = theta[:, off:off + size]
            if sort == "z":
                r = np.hypot(seg[:, 0], seg[:, 1])
            else:
                r = np.zeros(theta.shape[0])
                o = 0
                for k in self.algebra.blocks:
                    n = k * k
                    m = (seg[:, o:o + n] + 1j * seg[:, o + n:o + 2 * n]).reshape(-1, k, k)
                    r = np.maximum(r, kernels.opnorms(m))
                    o += 2 * n
            over = r > bound
            if over.any():
                seg[over] *= (bound / r[over] * (1.0 - 1e-15))[:, None]
        return theta

    def value_and_grad(self, prog, env, theta, sign):
        """``sign * f(R(theta))`` and its subgradient in the unretracted coordinates."""
        y = self.retract(theta[None])
        full = dict(env)
        full.update(self.decode(y))
        keys = [(s, i) for s, i, _, _, _ in self.segments]
        val, grads = prog.value_and_grad(full, 1, keys)
        out = np.empty(self.dim)
        for sort, idx, bound, off, size in self.segments:
            g = grads[(sort, idx)]
            seg = theta[off:off + size]
            if sort == "z":
                gy = np.array([g[0].real, g[0].imag])
                n = float(np.hypot(seg[0], seg[1]))
                gn = seg / n if n > 0 else seg
            else:
                gy = np.concatenate([np.concatenate([m[0].real.ravel(), m[0].imag.ravel()])
                                     for m in g])
                n, gn = _opnorm_and_grad(seg, self.algebra.blocks)
            if n > bound:
                gy = (bound / n) * gy - (bound / n**2) * float(seg @ gy) * gn
            out[off:off + size] = gy
        return sign * float(val[0]), sign * out

    def random_point(self, rng):
        parts = []
        kmax = max(self.algebra.blocks)
        for sort, _, bound, _, size in self.segments:
            if sort == "z":
                r = bound * np.sqrt(rng.uniform())
                phi = rng.uniform(0, 2 * np.pi)
                parts.append(np.array([r * np.cos(phi), r * np.sin(phi)]))
            else:
                parts.append(rng.normal(scale=bound / (2.0 * np.sqrt(kmax)), size=size))
        x = np.concatenate(parts) if parts else np.zeros(0)
        return self.retract(x[None])[0]

    def witnesses(self, x):
        env = self.decode(x[None])
        out = {}
        for sort, idx, _, _, _ in self.segments:
            v = env[(sort, idx)]
            if sort == "z":
                out[f"z{idx}"] = complex(v[0])
            else:
                out[f"x{idx}"] = Element(self.algebra, [m[0] for m in v])
        return out


def _opnorm_and_grad(seg, blocks):
    """Operator norm of a real-coordinate element and a subgradient in those coordinates."""
    best, where, o = -1.0, None, 0
    for k in blocks:
        n = k * k
        m = (seg[o:o + n] + 1j * seg[o + n:o + 2 * n]).reshape(k, k)
        u, sv, vh = np.linalg.svd(m)
        if sv[0] > best:
            best, where = float(sv[0]), (o, n, np.outer(u[:, 0], vh[0]))
        o += 2 * n
    g = np.zeros_like(seg)
    o, n, gm = where
    g[o:o + n] = gm.real.ravel()
    g[o + n:o + 2 * n] = gm.imag.ravel()
    return best, g


@dataclass
class EvalResult:
    value: float
    witnesses: dict = field(default_factory=dict)
    converged: bool = True
    spread: float = 0.0
    kind: str = None          # "inf" | "sup" | None (quantifier-free)
    restart_values: list = field(default_factory=list)
    matrix: object = None     # formula left after pulling merged quantifiers out
    lower_bound: float = None  # certified bounds, when available
    upper_bound: float = None
    certified: bool = False

    def bindings(self):
        """(element bindings, scalar bindings) of the witnesses, keyed by index."""
        xs, zs = {}, {}
        for name, v in self.witnesses.items():
            (xs if name[0] == "x" else zs)[int(name[1:])] = v
        return xs, zs

    def to_json(self):
        def enc(v):
            if isinstance(v, Element):
                return v.to_json()
            return [v.real, v.imag]

        return {
            "value": self.value,
            "kind": self.kind,
            "converged": self.converged,
            "spread": self.spread,
            "restart_values": list(self.restart_values),
            "witnesses": {k: enc(v) for k, v in sorted(self.witnesses.items())},
            "lower_bound": self.lower_bound,
            "upper_bound": self.upper_bound,
            "certified": self.certified,
        }


class _Search:
    """Merged quantifier block of a formula, ready for batched multi-start search."""

    def __init__(self, f, algebra):
        self.kind, self.qvars, self.matrix = prenex(f)
        self.program = Program(self.matrix, algebra)
        self.space = _Space(algebra, self.qvars) if self.kind else None
        self.sign = -1.0 if self.kind == "sup" else 1.0

    def run(self, env, batch, cfg, depth=0):
        """Best values per outer point, plus the local results of every restart.

        Restart ``i`` at every outer point uses the generator
        ``(seed, depth, i)``, so the value at a point depends only on it.
        """
        if self.kind is None:
            return self.program.run(env, batch, cfg, depth), None
        space, prog, sign = self.space, self.program, self.sign
        n_restarts = cfg.restarts
        rngs = [restart_rng(cfg.seed, depth, i)
                for _ in range(batch) for i in range(n_restarts)]
        x0s = np.stack([space.random_point(g) for g in rngs])
        bounds = [float(b) for _, _, b in self.qvars]

        def fun(theta, rows):
            n, p, d = theta.shape
            outer = rows // n_restarts
            sub = {}
            for key, v in env.items():
                if key[0] == "z":
                    sub[key] = v if v.shape[0] == 1 else np.repeat(v[outer], p, axis=0)
                else:
                    sub[key] = [m if m.shape[0] == 1 else np.repeat(m[outer], p, axis=0)
                                for m in v]
            sub.update(space.decode(theta.reshape(n * p, d)))
            return sign * prog.run(sub, n * p, cfg, depth).reshape(n, p)

        if batch == 1 and prog.differentiable:
            def local(i):
                res = bfgs_search(
                    lambda th: space.value_and_grad(prog, env, th, sign), x0s[i],
                    h0=0.5 * max(bounds), max_iters=cfg.max_iters,
                    f_floor=ZERO_FLOOR if sign > 0 else -np.inf)
                res.x = space.retract(res.x[None])[0]
                return res

            results = multistart(local, n_restarts)
            vals = sign * np.array([r.value for r in results]).reshape(1, n_restarts)
            best = vals.min(axis=1) if sign > 0 else vals.max(axis=1)
            return best, results
        results = pattern_search_many(
            fun, x0s, retract=space.retract, h0=0.5 * max(bounds),
            h_min=1e-3 * cfg.tolerance, max_iters=cfg.max_iters, rngs=rngs,
            f_floor=ZERO_FLOOR if sign > 0 else -np.inf,
            schedule=cfg.step_schedule, h_max=2 * max(bounds))
        vals = sign * np.array([r.value for r in results]).reshape(batch, n_restarts)
        best = vals.min(axis=1) if sign > 0 else vals.max(axis=1)
        return best, results


def _optimize(f, algebra, env, cfg):
    search = _Search(f, algebra)
    best, results = search.run(env, 1, cfg)
    if results is None:
        return EvalResult(float(best[0]), matrix=search.matrix), search
    values = [search.sign * r.value for r in results]
    j = best_index(values, maximize=(search.kind == "sup"))
    res = EvalResult(
        value=values[j],
        witnesses=search.space.witnesses(results[j].x),
        converged=results[j].converged,
        spread=float(max(values) - min(values)),
        kind=search.kind,
        restart_values=values,
        matrix=search.matrix,
    )
    return res, search


def evaluate(f, algebra, tup=(), cfg=None, scalars=None):
    """Value of ``f`` at the tuple, with witnesses and optimiser diagnostics.

    For a quantifier-free ``f`` this is exactly :func:`eval_qf`. Otherwise
    the result's ``kind`` tells the sidedness: "inf" values are upper
    bounds and "sup" values lower bounds of the true value.
    """
    cfg = OptConfig() if cfg is None else cfg
    if not isinstance(cfg, OptConfig):
        raise ConfigError("cfg must be an OptConfig")
    env = _bind(f, algebra, tup, scalars)
    if is_quantifier_free(f):
        return EvalResult(float(Program(f, algebra).run(env, 1)[0]), matrix=f,
                          lower_bound=None, upper_bound=None)
    res, search = _optimize(f, algebra, env, cfg)
    if cfg.certify and search.kind is not None:
        _certify(res, search.space, search.program, env, cfg, search.sign)
    return res


def _certify(res, space, prog, env, cfg, sign):
    """Grid bound on the side the search cannot certify (small dimensions only)."""
    if space.dim > CERT_MAX_REAL_DIM or not is_quantifier_free(res.matrix):
        return
    per_dim = max(2, int(CERT_MAX_POINTS ** (1.0 / space.dim)))
    axes = []
    for sort, idx, bound, off, size in space.segments:
        axes += [np.linspace(-bound, bound, per_dim)] * size
    step = max(float(a[1] - a[0]) for a in axes)
    grid = np.array(list(product(*axes)), dtype=float)
    grid = space.retract(grid)
    vals = np.concatenate([
        prog.run({**env, **space.decode(grid[i:i + 20000])}, len(grid[i:i + 20000]))
        for i in range(0, len(grid), 20000)])
    # covering radius in operator norm per variable (Frobenius bound), doubled for the retraction
    rho = max(step * np.sqrt(size) / 2.0 for _, _, _, _, size in space.segments) * 2.0
    moving = {(s, i) for s, i, _ in space.qvars}
    radii = {i: float(b) for s, i, b in space.qvars if s == "x"}
    zradii = {i: float(b) for s, i, b in space.qvars if s == "z"}
    lip = lipschitz_modulus(res.matrix, radii=radii, scalar_radii=zradii, moving=moving)
    slack = lip * rho
    if sign > 0:
        res.lower_bound = float(vals.min() - slack)
        res.upper_bound = float(min(res.value, vals.min()))
    else:
        res.upper_bound = float(vals.max() + slack)
        res.lower_bound = float(max(res.value, vals.max()))
    res.certified = True


# --------------------------------------------------------------- conditions


@dataclass
class ConditionResult:
    verdict: str     # "sat" | "unsat" | "unknown"
    margin: float    # |value - r|
    value: float
    exact: bool      # quantifier-free evaluation

    def to_json(self):
        return {"verdict": self.verdict, "margin": self.margin, "value": self.value,
                "exact": self.exact}


def check_condition(c, algebra, tup, cfg=None):
    """Three-valued check of ``phi <= r`` / ``phi >= r`` at a unit-ball tuple.

    Quantifier-free conditions get exact verdicts. For quantified formulas
    only the side the search certifies is trusted: an inf-search value is an
    upper bound, so it can prove ``phi <= r`` and refute ``phi >= r``; a
    certified lower bound (certificate mode) proves the other direction.
    """
    items = tup.values() if isinstance(tup, dict) else tup
    for e in items:
        if norm(e) > 1.0 + BALL_SLACK:
            raise BallViolation(f"tuple element of norm {norm(e):.6g} outside the unit ball")
    res = evaluate(c.formula, algebra, tup, cfg)
    r = float(c.r)
    v = res.value
    margin = abs(v - r)
    if res.kind is None:
        ok = v <= r if c.rel == "le" else v >= r
        return ConditionResult("sat" if ok else "unsat", margin, v, True)
    lo = res.lower_bound if res.certified else None
    hi = res.upper_bound if res.certified else None
    if res.kind == "inf":
        hi = v if hi is None else min(hi, v)
    else:
        lo = v if lo is None else max(lo, v)
    if c.rel == "le":
        if hi is not None and hi <= r:
            verdict = "sat"
        elif lo is not None and lo > r:
            verdict = "unsat"
        else:
            verdict = "unknown"
    else:
        if lo is not None and lo >= r:
            verdict = "sat"
        elif hi is not None and hi < r:
            verdict = "unsat"
        else:
            verdict = "unknown"
    return ConditionResult(verdict, margin, v, False)
