"""Bratteli diagrams, their finite stages and bounded-depth comparison of AF algebras.

A diagram lists explicit levels ``v_0, v_1, ...`` (block sizes) and
multiplicity matrices ``M_n`` (shape ``|v_{n+1}| x |v_n|``). With
``repeat_from = r`` the maps ``M_r, M_{r+1}, ...`` repeat forever and the
levels past the explicit ones follow ``v_{n+1} = M_n v_n``; without it
the diagram stabilises at its last level (identity maps from there on).
"""

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product

import numpy as np

from .algebra import Element, FiniteDimAlgebra
from .errors import AlgebraMismatch, InvalidArg, InvalidLevel, NotUhfDiagram
from .uhf import INF, Supernatural, factorize

EQUIVALENT = "equivalent"
DISTINGUISHED = "distinguished"
UNKNOWN = "unknown"


def _int_vec(v):
    return tuple(int(x) for x in v)


@dataclass(frozen=True)
class BratteliDiagram:
    levels: tuple
    maps: tuple
    unital: bool = True
    repeat_from: int = None

    def __post_init__(self):
        try:
            levels = tuple(_int_vec(v) for v in self.levels)
            maps = tuple(tuple(_int_vec(row) for row in m) for m in self.maps)
        except (TypeError, ValueError):
            raise InvalidArg("levels and maps must be integer arrays") from None
        if not levels:
            raise InvalidArg("a diagram needs at least one level")
        if self.repeat_from is not None and not 0 <= self.repeat_from < len(maps):
            raise InvalidArg("repeat_from must index one of the maps")
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "maps", maps)
        object.__setattr__(self, "unital", bool(self.unital))

    # ---------------------------------------------------------- unrolling

    @property
    def infinite(self):
        return self.repeat_from is not None

    def map_at(self, n):
        """Multiplicity matrix from level ``n`` to ``n + 1`` as an integer array."""
        if n < 0:
            raise InvalidLevel(f"level {n} out of range")
        if n < len(self.maps):
            return np.array(self.maps[n], dtype=object)
        if self.repeat_from is None:
            r = len(self.level_sizes(n))
            return np.array([[int(i == j) for j in range(r)] for i in range(r)], dtype=object)
        per = len(self.maps) - self.repeat_from
        return np.array(self.maps[self.repeat_from + (n - self.repeat_from) % per], dtype=object)

    def level_sizes(self, n):
        if n < 0:
            raise InvalidLevel(f"level {n} out of range")
        if n < len(self.levels):
            return self.levels[n]
        if self.repeat_from is None and n >= len(self.maps) + 1:
            return self.level_sizes(len(self.maps))
        v = np.array(self.level_sizes(n - 1), dtype=object)
        return _int_vec(self.map_at(n - 1).dot(v))

    def to_json(self):
        out = {"unital": self.unital, "levels": [list(v) for v in self.levels],
               "maps": [[list(r) for r in m] for m in self.maps]}
        if self.repeat_from is not None:
            out["repeat_from"] = self.repeat_from
        return out

    @classmethod
    def from_json(cls, data):
        try:
            return cls(tuple(data["levels"]), tuple(data.get("maps", ())),
                       data.get("unital", True), data.get("repeat_from"))
        except (KeyError, TypeError) as exc:
            raise InvalidArg(f"malformed diagram JSON: {exc}") from None


def car_diagram():
    return BratteliDiagram(((1,),), (((2,),),), True, 0)


def uhf_diagram(period, prefix=()):
    """Single-vertex diagram ``1 -> k_1 -> k_1 k_2 -> ...``."""
    mults = list(prefix) + list(period)
    if not mults:
        raise InvalidArg("need at least one multiplicity")
    maps = tuple((((int(k),),)) for k in mults)
    return BratteliDiagram(((1,),), maps, True, len(prefix) if period else None)


def fibonacci_diagram():
    return BratteliDiagram(((1, 1),), (((1, 1), (1, 0)),), True, 0)


def validate_diagram(D):
    """Violations of the diagram invariants on the explicit data (empty list: valid)."""
    out = []
    n_levels = max(len(D.levels), len(D.maps) + 1)
    for n, v in enumerate(D.levels):
        if not v:
            out.append({"level": n, "problem": "empty level"})
        elif any(x < 1 for x in v):
            out.append({"level": n, "problem": "block sizes must be positive"})
    if len(D.levels) > len(D.maps) + 1:
        out.append({"level": len(D.maps) + 1, "problem": "level without incoming map"})
    for n, m in enumerate(D.maps):
        if n + 1 >= n_levels:
            break
        try:
            src = D.level_sizes(n)
            dst = D.level_sizes(n + 1)
        except InvalidLevel:
            break
        if len(m) != len(dst) or any(len(row) != len(src) for row in m):
            out.append({"level": n, "problem": f"map shape must be {len(dst)}x{len(src)}"})
            continue
        if any(x < 0 for row in m for x in row):
            out.append({"level": n, "problem": "negative multiplicity"})
            continue
        image = [sum(a * b for a, b in zip(row, src)) for row in m]
        for j, (got, want) in enumerate(zip(image, dst)):
            if D.unital and got != want:
                out.append({"level": n, "problem": f"block {j}: M v = {got} but v' = {want}"})
            elif not D.unital and got > want:
                out.append({"level": n, "problem": f"block {j}: M v = {got} exceeds v' = {want}"})
    return out


def _checked(D):
    bad = validate_diagram(D)
    if bad:
        raise InvalidArg(f"invalid diagram: {bad[0]}")
    return D


def _level_bound(D, n):
    if n < 0 or (not D.infinite and n > len(D.maps)):
        raise InvalidLevel(f"level {n} out of range for this diagram")


def level_algebra(D, n):
    _level_bound(D, n)
    return FiniteDimAlgebra(D.level_sizes(n))


def embed(D, n, a):
    """Block-diagonal multiplicity embedding of level ``n`` into level ``n + 1``."""
    A = level_algebra(D, n)
    B = level_algebra(D, n + 1)
    if not isinstance(a, Element) or a.parent != A:
        raise AlgebraMismatch(f"element must belong to {A}")
    M = D.map_at(n)
    mats = []
    for j, size in enumerate(B.blocks):
        parts = []
        for i in range(len(A.blocks)):
            parts += [a.blocks[i]] * int(M[j][i])
        used = sum(p.shape[0] for p in parts)
        if used > size:
            raise AlgebraMismatch("multiplicities exceed the target block")
        out = np.zeros((size, size), dtype=complex)
        o = 0
        for p in parts:
            k = p.shape[0]
            out[o:o + k, o:o + k] = p
            o += k
        mats.append(out)
    return Element(B, mats)


@dataclass(frozen=True)
class K0Stage:
    n: int
    rank: int
    order_unit: tuple
    forward_map: tuple

    def to_json(self):
        return {"level": self.n, "rank": self.rank, "unit": list(self.order_unit),
                "forward_map": [list(r) for r in self.forward_map]}


def k0_stage(D, n):
    _level_bound(D, n)
    v = D.level_sizes(n)
    M = tuple(tuple(int(x) for x in row) for row in D.map_at(n))
    return K0Stage(n, len(v), v, M)


def generalized_integer(D):
    """Supernatural ``v_0 * prod M_n`` of a single-vertex diagram."""
    if any(len(v) != 1 for v in D.levels) or any(len(m) != 1 or len(m[0]) != 1 for m in D.maps):
        raise NotUhfDiagram("every level must have a single vertex")
    exps = dict(factorize(D.levels[0][0]))
    stop = D.repeat_from if D.infinite else len(D.maps)
    for m in D.maps[:stop]:
        for p, e in factorize(m[0][0]).items():
            exps[p] = exps.get(p, 0) + e
    if D.infinite:
        for m in D.maps[D.repeat_from:]:
            for p in factorize(m[0][0]):
                exps[p] = INF
    return Supernatural(exps)


def _rank(rows):
    """Rank of a matrix of Fractions (exact Gaussian elimination)."""
    m = [list(map(Fraction, r)) for r in rows]
    rank, cols = 0, len(m[0]) if m else 0
    for c in range(cols):
        piv = next((i for i in range(rank, len(m)) if m[i][c] != 0), None)
        if piv is None:
            continue
        m[rank], m[piv] = m[piv], m[rank]
        for i in range(len(m)):
            if i != rank and m[i][c] != 0:
                f = m[i][c] / m[rank][c]
                m[i] = [a - f * b for a, b in zip(m[i], m[rank])]
        rank += 1
    return rank


def rational_rank(D):
    """Dimension of ``K_0 (x) Q``: the stable rank of long products of the maps."""
    if not D.infinite:
        return len(D.level_sizes(len(D.maps)))
    start = D.repeat_from
    per = len(D.maps) - start
    r = len(D.level_sizes(start))
    prod_ = np.identity(r, dtype=object)
    for n in range(start, start + per * (r + 1)):
        prod_ = D.map_at(n).dot(prod_)
    return _rank(prod_.tolist())


@dataclass
class CompareResult:
    verdict: str
    certificate: list = field(default_factory=list)
    witness: dict = None
    reason: str = ""

    def to_json(self):
        return {"verdict": self.verdict, "certificate": self.certificate,
                "witness": self.witness, "reason": self.reason}


def _rows(src_unit, target, window, row_constraint=None, left=None):
    """Nonnegative integer rows ``x`` (entries <= window) with ``x . src_unit = target``.

    With ``left`` (a matrix) also ``x @ left == row_constraint``. Lexicographic order.
    """
    r = len(src_unit)
    out = []
    x = [0] * r

    def rec(i, acc, partial):
        if i == r:
            if acc == target and (left is None or partial == list(row_constraint)):
                out.append(tuple(x))
            return
        for val in range(0, window + 1):
            nacc = acc + val * src_unit[i]
            if nacc > target:
                break
            if left is not None:
                np_ = [p + val * int(c) for p, c in zip(partial, left[i])]
                if any(p > q for p, q in zip(np_, row_constraint)):
                    break
            else:
                np_ = partial
            x[i] = val
            rec(i + 1, nacc, np_)
        x[i] = 0

    rec(0, 0, [0] * (len(left[0]) if left is not None else 0))
    return out


def _matmul(a, b):
    return [[sum(a[i][t] * b[t][j] for t in range(len(b))) for j in range(len(b[0]))]
            for i in range(len(a))]


def _connecting(D, n, m):
    """Composite multiplicity matrix from level n to level m >= n."""
    r = len(D.level_sizes(n))
    acc = [[int(i == j) for j in range(r)] for i in range(r)]
    for t in range(n, m):
        acc = _matmul([list(map(int, row)) for row in D.map_at(t)], acc)
    return acc


class _Budget(Exception):
    pass


def compare_diagrams(D1, D2, depth, window=20, horizon=4, node_limit=200_000):
    """Bounded search for a commuting zigzag of unit-preserving positive K_0 maps.

    ``depth`` counts maps in the zigzag. Distinguished verdicts rest only on
    sound invariants (generalized integers of unital single-vertex diagrams,
    rational rank of K_0); a failed search is Unknown, never Distinguished.
    """
    if isinstance(depth, bool) or not isinstance(depth, int) or depth < 1:
        raise InvalidArg("depth must be a positive integer")
    _checked(D1)
    _checked(D2)
    witness = _invariant_witness(D1, D2)
    if witness is not None:
        return CompareResult(DISTINGUISHED, witness=witness, reason=witness["invariant"])
    if not (D1.unital and D2.unital):
        return CompareResult(UNKNOWN, reason="intertwining search needs unital diagrams")
    diagrams = {"a": D1, "b": D2}
    other = {"a": "b", "b": "a"}
    nodes = [0]

    def levels_after(D, n):
        lo = n + 1 if n is not None else 0
        hi = lo + horizon
        if not D.infinite:
            hi = min(hi, len(D.maps) + 1 + horizon)
        return range(lo, hi)

    def search(side, level, last, cur_level_other, chain):
        # extend ``chain`` with a map from (side, level) to the other diagram
        if len(chain) == depth:
            return chain
        src, dst = diagrams[side], diagrams[other[side]]
        src_unit = src.level_sizes(level)
        for tgt in levels_after(dst, cur_level_other):
            tgt_unit = dst.level_sizes(tgt)
            if last is None:
                row_sets = [_rows(src_unit, t, window) for t in tgt_unit]
            else:
                # last: map (other side, cur_level_other) -> (side, level); the new map
                # composed with it must equal the connecting map of the other diagram
                conn = _connecting(dst, cur_level_other, tgt)
                row_sets = [_rows(src_unit, t, window, conn[j], last)
                            for j, t in enumerate(tgt_unit)]
            if any(not rs for rs in row_sets):
                continue
            for mat in product(*row_sets):
                nodes[0] += 1
                if nodes[0] > node_limit:
                    raise _Budget
                step = {"from": side, "level": level, "to_level": tgt,
                        "matrix": [list(r) for r in mat]}
                found = search(other[side], tgt, [list(r) for r in mat], level, chain + [step])
                if found:
                    return found
        return None

    try:
        for start in ("a", "b"):
            D = diagrams[start]
            for level in levels_after(D, None):
                found = search(start, level, None, None, [])
                if found:
                    return CompareResult(EQUIVALENT, certificate=found,
                                         reason=f"commuting intertwining of depth {depth}")
    except _Budget:
        return CompareResult(UNKNOWN, reason="search budget exhausted")
    return CompareResult(UNKNOWN, reason=f"no intertwining within depth {depth}, window {window}")


def _single_vertex(D):
    return all(len(v) == 1 for v in D.levels) and all(
        len(m) == 1 and len(m[0]) == 1 for m in D.maps)


def _invariant_witness(D1, D2):
    if D1.unital and D2.unital and _single_vertex(D1) and _single_vertex(D2):
        g1, g2 = generalized_integer(D1), generalized_integer(D2)
        if g1 != g2:
            return {"invariant": "generalized_integer", "a": g1.to_json(), "b": g2.to_json()}
        return None
    r1, r2 = rational_rank(D1), rational_rank(D2)
    if r1 != r2:
        return {"invariant": "rational_rank", "a": r1, "b": r2}
    return None
