"""Supernatural numbers and unital UHF algebras given by eventually periodic factor sequences."""

import math
import re
from dataclasses import dataclass

from .errors import InvalidArg

INF = math.inf

ISOMORPHIC = "isomorphic_and_elementarily_equivalent"
NEITHER = "neither"


def factorize(n):
    """Prime factorisation of a positive integer as {p: e}."""
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise InvalidArg(f"expected a positive integer, got {n!r}")
    n = int(n)
    out = {}
    p = 2
    while p * p <= n:
        while n % p == 0:
            out[p] = out.get(p, 0) + 1
            n //= p
        p += 1 if p == 2 else 2
    if n > 1:
        out[n] = out.get(n, 0) + 1
    return out


def _is_prime(p):
    return p >= 2 and factorize(p) == {p: 1}


class Supernatural:
    """Formal product of prime powers with exponents in N or infinity."""

    __slots__ = ("_exps",)

    def __init__(self, exps=None):
        clean = {}
        for p, e in dict(exps or {}).items():
            p = int(p)
            if not _is_prime(p):
                raise InvalidArg(f"{p} is not prime")
            if e != INF and (int(e) != e or e < 0):
                raise InvalidArg(f"exponent of {p} must be a natural number or infinity")
            if e:
                clean[p] = INF if e == INF else int(e)
        self._exps = tuple(sorted(clean.items()))

    @classmethod
    def of_int(cls, n):
        return cls(factorize(n))

    @property
    def exps(self):
        return dict(self._exps)

    def exponent(self, p):
        return self.exps.get(p, 0)

    def is_finite(self):
        return all(e != INF for _, e in self._exps)

    def __eq__(self, other):
        return isinstance(other, Supernatural) and self._exps == other._exps

    def __hash__(self):
        return hash(self._exps)

    def __mul__(self, other):
        if isinstance(other, int):
            other = Supernatural.of_int(other)
        out = self.exps
        for p, e in other._exps:
            out[p] = out.get(p, 0) + e
        return Supernatural(out)

    __rmul__ = __mul__

    def divides(self, other):
        if isinstance(other, int):
            other = Supernatural.of_int(other)
        theirs = other.exps
        return all(e <= theirs.get(p, 0) for p, e in self._exps)

    def __repr__(self):
        return f"Supernatural({str(self)})"

    def __str__(self):
        if not self._exps:
            return "1"
        return "*".join(f"{p}^inf" if e == INF else (f"{p}" if e == 1 else f"{p}^{e}")
                        for p, e in self._exps)

    def to_json(self):
        return [{"p": p, "e": "inf" if e == INF else e} for p, e in self._exps]

    @classmethod
    def from_json(cls, data):
        return cls({d["p"]: INF if d["e"] == "inf" else d["e"] for d in data})


def sn_mul(a, b):
    return a * b


def sn_divides(a, b):
    return a.divides(b)


def sn_eq(a, b):
    return a == b


@dataclass(frozen=True)
class UhfPresentation:
    """``M_k1 (x) M_k2 (x) ...``: a finite prefix followed by a repeated period.

    An empty period means a finite tensor product (a single matrix algebra).
    """

    prefix: tuple = ()
    period: tuple = ()

    def __post_init__(self):
        for name in ("prefix", "period"):
            seq = tuple(getattr(self, name))
            for k in seq:
                if isinstance(k, bool) or int(k) != k or k < 1:
                    raise InvalidArg(f"factors must be positive integers, got {k!r}")
            object.__setattr__(self, name, tuple(int(k) for k in seq))
        if not self.prefix and not self.period:
            raise InvalidArg("a presentation needs at least one factor")

    @property
    def infinite(self):
        return bool(self.period) and any(k > 1 for k in self.period)

    def factors(self, n):
        """The first ``n`` factors."""
        out = list(self.prefix[:n])
        i = 0
        while len(out) < n and self.period:
            out.append(self.period[i % len(self.period)])
            i += 1
        return out

    def tensor(self, other):
        """Tensor product; factors of an infinite product may be regrouped freely."""
        return UhfPresentation(self.prefix + other.prefix, self.period + other.period)

    def __str__(self):
        parts = [str(k) for k in self.prefix]
        if self.period:
            per = str(self.period[0]) if len(self.period) == 1 else \
                "(" + ",".join(map(str, self.period)) + ")"
            parts.append(per + "*")
        return ",".join(parts)

    def to_json(self):
        return {"prefix": list(self.prefix), "period": list(self.period)}

    @classmethod
    def from_json(cls, data):
        if isinstance(data, str):
            return parse_presentation(data)
        return cls(tuple(data.get("prefix", ())), tuple(data.get("period", ())))


_ITEM = re.compile(r"\s*(?:\((?P<group>[0-9,\s]+)\)|(?P<num>[0-9]+))\s*(?P<star>\*)?\s*")


def parse_presentation(text):
    """Parse ``"2*"``, ``"(2,3)*"``, ``"2,3,5*"``, ``"4,(2,3)*"`` or a finite ``"2,3"``.

    A starred item is the repeated period and must come last.
    """
    prefix, period = [], []
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _ITEM.match(text, pos)
        if not m or m.end() == pos:
            raise InvalidArg(f"cannot parse presentation {text!r} at offset {pos}")
        if period:
            raise InvalidArg("the repeated period must be the last item")
        items = ([int(x) for x in m.group("group").split(",") if x.strip()]
                 if m.group("group") else [int(m.group("num"))])
        if m.group("star"):
            period = items
        elif m.group("group"):
            raise InvalidArg("parenthesised groups must be starred")
        else:
            prefix += items
        pos = m.end()
        if pos < len(text):
            if text[pos] != ",":
                raise InvalidArg(f"expected ',' at offset {pos} of {text!r}")
            pos += 1
    return UhfPresentation(tuple(prefix), tuple(period))


def _as_presentation(p):
    if isinstance(p, UhfPresentation):
        return p
    if isinstance(p, str):
        return parse_presentation(p)
    return UhfPresentation.from_json(p)


def supernatural_of(p):
    """Generalized integer: exponents summed over all factors, infinite along the period."""
    p = _as_presentation(p)
    exps = {}
    for k in p.prefix:
        for q, e in factorize(k).items():
            exps[q] = exps.get(q, 0) + e
    for k in p.period:
        for q in factorize(k):
            exps[q] = INF
    return Supernatural(exps)


def uhf_equivalent(p1, p2):
    """Both notions coincide for unital UHF algebras: compare generalized integers."""
    return ISOMORPHIC if supernatural_of(p1) == supernatural_of(p2) else NEITHER


def unital_copy_exists(p, k):
    if isinstance(k, bool) or int(k) != k or k < 1:
        raise InvalidArg("k must be a positive integer")
    return Supernatural.of_int(k).divides(supernatural_of(p))
