"""Formulas of continuous logic for C*-algebras: AST, parser and printer.

Concrete grammar (whitespace is insignificant)::

    formula  := "norm(" term ")" | conn | quant ;
    conn     := ("max"|"min"|"add"|"tsub"|"absdiff") "(" formula "," formula ")"
              | rational "*" formula
              | "pl[" breakpoints "]" "(" formula ")" ;
    quant    := ("inf"|"sup") "{" var ":" rational "}" formula
              | ("infc"|"supc") "{" cvar ":" rational "}" formula ;
    term     := var | cvar | "1" | complexRational | term "+" term
              | term "-" term | term "*" term | term "^*" | "(" term ")" ;
    var      := "x" digits ;            cvar := "z" digits ;
    rational := ["-"] digits ["/" digits] ;
    complexRational := rational | "<" rational "," rational ">" ;
    breakpoints := rational ":" rational { ";" rational ":" rational } ;

In terms, ``*`` binds tighter than ``+``/``-`` (both left associative) and the
postfix adjoint ``^*`` binds tightest. The bare numeral ``1`` is the unit;
every other numeral is a real scalar. Scalars and scalar variables act as
multiples of the unit when they meet algebra elements.
"""

import re
from dataclasses import dataclass
from fractions import Fraction

from .errors import InvalidArg, ParseError

# --------------------------------------------------------------------- terms


@dataclass(frozen=True)
class Var:
    index: int


@dataclass(frozen=True)
class CVar:
    index: int


@dataclass(frozen=True)
class Unit:
    pass


@dataclass(frozen=True)
class Scalar:
    re: Fraction
    im: Fraction = Fraction(0)

    @property
    def value(self):
        return complex(float(self.re), float(self.im))


@dataclass(frozen=True)
class Add:
    left: object
    right: object


@dataclass(frozen=True)
class Sub:
    left: object
    right: object


@dataclass(frozen=True)
class Mul:
    left: object
    right: object


@dataclass(frozen=True)
class Adj:
    term: object


TERM_TYPES = (Var, CVar, Unit, Scalar, Add, Sub, Mul, Adj)

# ------------------------------------------------------------------ formulas


@dataclass(frozen=True)
class Norm:
    term: object


@dataclass(frozen=True)
class Conn:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Scale:
    factor: Fraction
    body: object


@dataclass(frozen=True)
class PL:
    """Monotone piecewise-linear connective through ``points``, constant beyond the last."""

    points: tuple
    body: object


@dataclass(frozen=True)
class Quant:
    kind: str  # "inf" | "sup"
    var: int
    bound: Fraction
    body: object


@dataclass(frozen=True)
class QuantC:
    kind: str  # "inf" | "sup", over the disk |z| <= bound
    var: int
    bound: Fraction
    body: object


FORMULA_TYPES = (Norm, Conn, Scale, PL, Quant, QuantC)

# Per-argument Lipschitz constants of the binary connectives and how they
# combine under the max metric on the argument pair.
CONNECTIVES = {
    "add": {"modulus": (1, 1), "combine": "sum", "monotone": (1, 1)},
    "max": {"modulus": (1, 1), "combine": "max", "monotone": (1, 1)},
    "min": {"modulus": (1, 1), "combine": "max", "monotone": (1, 1)},
    "tsub": {"modulus": (1, 1), "combine": "sum", "monotone": (1, -1)},
    "absdiff": {"modulus": (1, 1), "combine": "sum", "monotone": (0, 0)},
}


def apply_connective(op, a, b):
    if op == "add":
        return a + b
    if op == "max":
        return max(a, b)
    if op == "min":
        return min(a, b)
    if op == "tsub":
        return max(a - b, 0.0)
    if op == "absdiff":
        return abs(a - b)
    raise InvalidArg(f"unknown connective {op!r}")


def _frac(x):
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(x)
    return Fraction(x)


def validate_breakpoints(points):
    pts = tuple((_frac(x), _frac(y)) for x, y in points)
    if not pts:
        raise InvalidArg("piecewise-linear connective needs at least one breakpoint")
    if pts[0][0] != 0:
        raise InvalidArg("first breakpoint must be at 0")
    for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
        if x1 <= x0:
            raise InvalidArg("breakpoint abscissae must increase strictly")
        if y1 < y0:
            raise InvalidArg("piecewise-linear connectives must be nondecreasing")
    if any(y < 0 for _, y in pts):
        raise InvalidArg("piecewise-linear connectives must be nonnegative")
    return pts


def pl_slope(points):
    slopes = [(y1 - y0) / (x1 - x0) for (x0, y0), (x1, y1) in zip(points, points[1:])]
    return max(slopes, default=Fraction(0))


def pl_eval(points, t):
    if t <= points[0][0]:
        return float(points[0][1])
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        if t <= x1:
            return float(y0) + float(y1 - y0) * (t - float(x0)) / float(x1 - x0)
    return float(points[-1][1])


# ------------------------------------------------------------ small builders


def norm(term):
    return Norm(term)


def big(op, formulas):
    """Balanced binary tree of a connective over a nonempty list."""
    formulas = list(formulas)
    if not formulas:
        raise InvalidArg("empty connective list")
    while len(formulas) > 1:
        nxt = [Conn(op, a, b) for a, b in zip(formulas[::2], formulas[1::2])]
        if len(formulas) % 2:
            nxt.append(formulas[-1])
        formulas = nxt
    return formulas[0]


def term_sum(terms):
    terms = list(terms)
    acc = terms[0]
    for t in terms[1:]:
        acc = Add(acc, t)
    return acc


def truncate(f, c):
    """``min(f, c)`` realised as a piecewise-linear connective."""
    c = _frac(c)
    return PL(((Fraction(0), Fraction(0)), (c, c)), f)


def quantify(kind, variables, bound, body):
    for v in reversed(list(variables)):
        body = Quant(kind, v, _frac(bound), body)
    return body


def quantify_scalars(kind, variables, bound, body):
    for v in reversed(list(variables)):
        body = QuantC(kind, v, _frac(bound), body)
    return body


# -------------------------------------------------------------------- parser

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r]+) | (?P<nl>\n) | (?P<adj>\^\*) |
    (?P<name>[A-Za-z_][A-Za-z0-9_]*) | (?P<num>[0-9]+) |
    (?P<sym>[()\[\]{},:;+\-*/<>])
""", re.VERBOSE)

_VAR_RE = re.compile(r"x([1-9][0-9]*)$")
_CVAR_RE = re.compile(r"z([1-9][0-9]*)$")


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text):
    toks, pos, line, col = [], 0, 1, 1
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        s = m.group()
        if kind == "nl":
            line, col = line + 1, 1
        else:
            if kind != "ws":
                toks.append(_Tok(kind, s, line, col))
            col += len(s)
        pos = m.end()
    return toks


class _Parser:
    def __init__(self, text):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self, offset=0):
        j = self.i + offset
        return self.toks[j] if j < len(self.toks) else None

    def error(self, message):
        tok = self.peek()
        if tok is None:
            if self.toks:
                last = self.toks[-1]
                raise ParseError(f"unexpected end of input after {last.text!r}: {message}",
                                 last.line, last.col)
            raise ParseError(f"empty input: {message}", 1, 1)
        raise ParseError(f"{message}, found {tok.text!r}", tok.line, tok.col)

    def next(self):
        tok = self.peek()
        if tok is None:
            self.error("more input expected")
        self.i += 1
        return tok

    def expect(self, text):
        tok = self.peek()
        if tok is None or tok.text != text:
            self.error(f"expected {text!r}")
        self.i += 1
        return tok

    def at(self, text):
        tok = self.peek()
        return tok is not None and tok.text == text

    def rational(self):
        neg = False
        if self.at("-"):
            self.next()
            neg = True
        tok = self.peek()
        if tok is None or tok.kind != "num":
            self.error("expected a rational number")
        self.next()
        value = Fraction(int(tok.text))
        if self.at("/"):
            self.next()
            den = self.peek()
            if den is None or den.kind != "num":
                self.error("expected a denominator")
            self.next()
            if int(den.text) == 0:
                raise ParseError("zero denominator", den.line, den.col)
            value /= int(den.text)
        return -value if neg else value

    # formulas
    def formula(self):
        tok = self.peek()
        if tok is None:
            self.error("expected a formula")
        if tok.kind == "num":
            c = self.rational()
            self.expect("*")
            return Scale(c, self.formula())
        if tok.kind != "name":
            self.error("expected a formula")
        name = tok.text
        if name == "norm":
            self.next()
            self.expect("(")
            t = self.term()
            self.expect(")")
            return Norm(t)
        if name in CONNECTIVES:
            self.next()
            self.expect("(")
            a = self.formula()
            self.expect(",")
            b = self.formula()
            self.expect(")")
            return Conn(name, a, b)
        if name == "pl":
            self.next()
            self.expect("[")
            pts = [self.point()]
            while self.at(";"):
                self.next()
                pts.append(self.point())
            close = self.expect("]")
            try:
                pts = validate_breakpoints(pts)
            except InvalidArg as exc:
                raise ParseError(str(exc), close.line, close.col) from None
            self.expect("(")
            body = self.formula()
            self.expect(")")
            return PL(pts, body)
        if name in ("inf", "sup", "infc", "supc"):
            self.next()
            self.expect("{")
            vtok = self.next()
            pattern = _CVAR_RE if name.endswith("c") else _VAR_RE
            m = pattern.match(vtok.text) if vtok.kind == "name" else None
            if m is None:
                kind = "scalar variable" if name.endswith("c") else "variable"
                raise ParseError(f"expected a {kind}, found {vtok.text!r}", vtok.line, vtok.col)
            self.expect(":")
            btok = self.peek()
            bound = self.rational()
            if bound <= 0:
                raise ParseError("quantifier bound must be positive", btok.line, btok.col)
            self.expect("}")
            body = self.formula()
            if name.endswith("c"):
                return QuantC(name[:-1], int(m.group(1)), bound, body)
            return Quant(name, int(m.group(1)), bound, body)
        raise ParseError(f"unknown connective {name!r}", tok.line, tok.col)

    def point(self):
        x = self.rational()
        self.expect(":")
        return (x, self.rational())

    # terms
    def term(self):
        left = self.product()
        while self.at("+") or self.at("-"):
            op = self.next().text
            right = self.product()
            left = Add(left, right) if op == "+" else Sub(left, right)
        return left

    def product(self):
        left = self.postfix()
        while self.at("*"):
            self.next()
            left = Mul(left, self.postfix())
        return left

    def postfix(self):
        t = self.atom()
        while self.peek() is not None and self.peek().kind == "adj":
            self.next()
            t = Adj(t)
        return t

    def atom(self):
        tok = self.peek()
        if tok is None:
            self.error("expected a term")
        if tok.text == "(":
            self.next()
            t = self.term()
            self.expect(")")
            return t
        if tok.text == "<":
            self.next()
            re_ = self.rational()
            self.expect(",")
            im_ = self.rational()
            self.expect(">")
            return Scalar(re_, im_)
        if tok.kind == "num":
            nxt = self.peek(1)
            if tok.text == "1" and not (nxt is not None and nxt.text == "/"):
                self.next()
                return Unit()
            return Scalar(self.rational())
        if tok.kind == "name":
            m = _VAR_RE.match(tok.text)
            if m:
                self.next()
                return Var(int(m.group(1)))
            m = _CVAR_RE.match(tok.text)
            if m:
                self.next()
                return CVar(int(m.group(1)))
        self.error("expected a term")


def parse(text):
    """Parse formula text; raises :class:`ParseError` with a 1-based location."""
    p = _Parser(text)
    f = p.formula()
    if p.peek() is not None:
        p.error("trailing input")
    return f


def parse_term(text):
    p = _Parser(text)
    t = p.term()
    if p.peek() is not None:
        p.error("trailing input")
    return t


# ------------------------------------------------------------------- printer

_PREC = {Add: 1, Sub: 1, Mul: 2}


def _term_str(t, ctx=0):
    if isinstance(t, Var):
        return f"x{t.index}"
    if isinstance(t, CVar):
        return f"z{t.index}"
    if isinstance(t, Unit):
        return "1"
    if isinstance(t, Scalar):
        return f"<{t.re},{t.im}>"
    if isinstance(t, Adj):
        inner = _term_str(t.term, 3)
        return f"{inner}^*"
    if isinstance(t, (Add, Sub, Mul)):
        prec = _PREC[type(t)]
        op = {Add: " + ", Sub: " - ", Mul: "*"}[type(t)]
        s = _term_str(t.left, prec) + op + _term_str(t.right, prec + 1)
        return f"({s})" if prec < ctx else s
    raise TypeError(f"not a term: {t!r}")


def to_text(f):
    """Canonical text; ``parse(to_text(f)) == f``."""
    if isinstance(f, Norm):
        return f"norm({_term_str(f.term)})"
    if isinstance(f, Conn):
        return f"{f.op}({to_text(f.left)}, {to_text(f.right)})"
    if isinstance(f, Scale):
        return f"{f.factor}*{to_text(f.body)}"
    if isinstance(f, PL):
        pts = ";".join(f"{x}:{y}" for x, y in f.points)
        return f"pl[{pts}]({to_text(f.body)})"
    if isinstance(f, Quant):
        return f"{f.kind}{{x{f.var}:{f.bound}}} {to_text(f.body)}"
    if isinstance(f, QuantC):
        return f"{f.kind}c{{z{f.var}:{f.bound}}} {to_text(f.body)}"
    raise TypeError(f"not a formula: {f!r}")


term_to_text = _term_str

# ------------------------------------------------------------------ analysis


def term_vars(t):
    """(element variable indices, scalar variable indices) occurring in a term."""
    xs, zs, stack = set(), set(), [t]
    while stack:
        t = stack.pop()
        if isinstance(t, Var):
            xs.add(t.index)
        elif isinstance(t, CVar):
            zs.add(t.index)
        elif isinstance(t, (Add, Sub, Mul)):
            stack += [t.left, t.right]
        elif isinstance(t, Adj):
            stack.append(t.term)
    return xs, zs


def _free(f):
    if isinstance(f, Norm):
        return term_vars(f.term)
    if isinstance(f, Conn):
        a, b = _free(f.left), _free(f.right)
        return a[0] | b[0], a[1] | b[1]
    if isinstance(f, (Scale, PL)):
        return _free(f.body)
    if isinstance(f, Quant):
        xs, zs = _free(f.body)
        return xs - {f.var}, zs
    if isinstance(f, QuantC):
        xs, zs = _free(f.body)
        return xs, zs - {f.var}
    raise TypeError(f"not a formula: {f!r}")


def free_vars(f):
    """Indices of free element variables."""
    return _free(f)[0]


def free_scalar_vars(f):
    return _free(f)[1]


def is_quantifier_free(f):
    if isinstance(f, Norm):
        return True
    if isinstance(f, Conn):
        return is_quantifier_free(f.left) and is_quantifier_free(f.right)
    if isinstance(f, (Scale, PL)):
        return is_quantifier_free(f.body)
    return False


def uses_pl(f):
    """True when the formula contains a user-supplied piecewise-linear connective."""
    if isinstance(f, PL):
        return True
    if isinstance(f, Conn):
        return uses_pl(f.left) or uses_pl(f.right)
    if isinstance(f, (Scale, Quant, QuantC)):
        return uses_pl(f.body)
    return False


def _term_lip(t, xr, zr, moving):
    """(Lipschitz constant, norm bound) of a term over the given radii."""
    if isinstance(t, Var):
        return (1.0 if ("x", t.index) in moving else 0.0), xr(t.index)
    if isinstance(t, CVar):
        return (1.0 if ("z", t.index) in moving else 0.0), zr(t.index)
    if isinstance(t, Unit):
        return 0.0, 1.0
    if isinstance(t, Scalar):
        return 0.0, abs(t.value)
    if isinstance(t, Adj):
        return _term_lip(t.term, xr, zr, moving)
    la, ba = _term_lip(t.left, xr, zr, moving)
    lb, bb = _term_lip(t.right, xr, zr, moving)
    if isinstance(t, (Add, Sub)):
        return la + lb, ba + bb
    return la * bb + ba * lb, ba * bb


def lipschitz_modulus(f, radii=None, scalar_radii=None, moving=None, default_radius=1.0):
    """Lipschitz constant of ``f`` in the max metric over its variables.

    Free variables range over balls of the given radii (default 1); bound
    variables over their quantifier bounds. ``moving`` restricts the
    constant to the listed ``("x", i)`` / ``("z", i)`` variables. Composite
    moduli follow the connective table: products along compositions, sums
    or maxima across arguments.
    """
    radii = dict(radii or {})
    scalar_radii = dict(scalar_radii or {})

    def rec(g, xrad, zrad, mov):
        if isinstance(g, Norm):
            return _term_lip(g.term, lambda i: xrad.get(i, default_radius),
                             lambda i: zrad.get(i, default_radius), mov)[0]
        if isinstance(g, Conn):
            la = rec(g.left, xrad, zrad, mov)
            lb = rec(g.right, xrad, zrad, mov)
            ma, mb = CONNECTIVES[g.op]["modulus"]
            if CONNECTIVES[g.op]["combine"] == "max":
                return max(ma * la, mb * lb)
            return ma * la + mb * lb
        if isinstance(g, Scale):
            return float(g.factor) * rec(g.body, xrad, zrad, mov)
        if isinstance(g, PL):
            return float(pl_slope(g.points)) * rec(g.body, xrad, zrad, mov)
        if isinstance(g, Quant):
            inner = dict(xrad)
            inner[g.var] = float(g.bound)
            return rec(g.body, inner, zrad, mov - {("x", g.var)})
        if isinstance(g, QuantC):
            inner = dict(zrad)
            inner[g.var] = float(g.bound)
            return rec(g.body, xrad, inner, mov - {("z", g.var)})
        raise TypeError(f"not a formula: {g!r}")

    if moving is None:
        xs, zs = _free(f)
        moving = {("x", i) for i in xs} | {("z", i) for i in zs}
    return rec(f, radii, scalar_radii, frozenset(moving))


def substitute_var(f, old, new):
    """Rename free occurrences of element variable ``old`` to ``new``."""

    def term(t):
        if isinstance(t, Var):
            return Var(new) if t.index == old else t
        if isinstance(t, (Add, Sub, Mul)):
            return type(t)(term(t.left), term(t.right))
        if isinstance(t, Adj):
            return Adj(term(t.term))
        return t

    def rec(g):
        if isinstance(g, Norm):
            return Norm(term(g.term))
        if isinstance(g, Conn):
            return Conn(g.op, rec(g.left), rec(g.right))
        if isinstance(g, Scale):
            return Scale(g.factor, rec(g.body))
        if isinstance(g, PL):
            return PL(g.points, rec(g.body))
        if isinstance(g, Quant):
            if g.var == old:
                return g
            return Quant(g.kind, g.var, g.bound, rec(g.body))
        if isinstance(g, QuantC):
            return QuantC(g.kind, g.var, g.bound, rec(g.body))
        raise TypeError(f"not a formula: {g!r}")

    return rec(f)


def substitute_cvar(f, old, new):
    """Rename free occurrences of scalar variable ``old`` to ``new``."""

    def term(t):
        if isinstance(t, CVar):
            return CVar(new) if t.index == old else t
        if isinstance(t, (Add, Sub, Mul)):
            return type(t)(term(t.left), term(t.right))
        if isinstance(t, Adj):
            return Adj(term(t.term))
        return t

    def rec(g):
        if isinstance(g, Norm):
            return Norm(term(g.term))
        if isinstance(g, Conn):
            return Conn(g.op, rec(g.left), rec(g.right))
        if isinstance(g, (Scale, PL)):
            return type(g)(g.factor if isinstance(g, Scale) else g.points, rec(g.body))
        if isinstance(g, QuantC):
            if g.var == old:
                return g
            return QuantC(g.kind, g.var, g.bound, rec(g.body))
        if isinstance(g, Quant):
            return Quant(g.kind, g.var, g.bound, rec(g.body))
        raise TypeError(f"not a formula: {g!r}")

    return rec(f)


def all_var_indices(f):
    """Every element and scalar index used anywhere, bound or free."""
    xs, zs = set(), set()

    def rec(g):
        if isinstance(g, Norm):
            a, b = term_vars(g.term)
            xs.update(a)
            zs.update(b)
        elif isinstance(g, Conn):
            rec(g.left)
            rec(g.right)
        elif isinstance(g, (Scale, PL)):
            rec(g.body)
        elif isinstance(g, Quant):
            xs.add(g.var)
            rec(g.body)
        elif isinstance(g, QuantC):
            zs.add(g.var)
            rec(g.body)

    rec(f)
    return xs, zs


# ----------------------------------------------------------- conditions/types


@dataclass(frozen=True)
class Condition:
    formula: object
    rel: str  # "le" | "ge"
    r: Fraction

    def __post_init__(self):
        if self.rel not in ("le", "ge"):
            raise InvalidArg("relation must be 'le' or 'ge'")
        r = _frac(self.r)
        if r < 0:
            raise InvalidArg("condition threshold must be nonnegative")
        object.__setattr__(self, "r", r)

    def to_json(self):
        return {"formula": to_text(self.formula), "rel": self.rel, "r": str(self.r)}

    @classmethod
    def from_json(cls, data):
        return cls(parse(data["formula"]), data["rel"], Fraction(data["r"]))


def ball_condition(i, radius=1):
    return Condition(Norm(Var(i)), "le", _frac(radius))


@dataclass(frozen=True)
class TypeSchema:
    """A named family of conditions in variables ``x1..x_arity``.

    ``generator(index)`` produces the member indexed by ``index`` (from
    ``first_index`` on); the unit-ball conditions on every variable are
    always included.
    """

    name: str
    arity: int
    generator: object
    first_index: int = 1

    def conditions(self, up_to):
        out = [ball_condition(i) for i in range(1, self.arity + 1)]
        for idx in range(self.first_index, up_to + 1):
            c = self.generator(idx)
            extra = free_vars(c.formula) - set(range(1, self.arity + 1))
            if extra:
                raise InvalidArg(f"member {idx} has variables outside the arity: {sorted(extra)}")
            out.append(c)
        return out
