"""Command line entry point: ``fdcstar <command> ...``, JSON on stdout.

Exit codes: 0 success, 1 domain error, 2 usage error (including formula
syntax errors, which report their line and column).
"""

import argparse
import json
import math
import sys
from dataclasses import asdict, dataclass, fields
from fractions import Fraction

import numpy as np

from . import af, formula, omission, stable, uhf
from .algebra import Element, FiniteDimAlgebra
from .errors import FdcstarError, ParseError
from .evaluator import check_condition, evaluate
from .search import OptConfig


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    tolerance: float = 1e-6
    restarts: int = 8
    max_iters: int = 1000
    certify: bool = False
    output: str = None

    def opt(self):
        return OptConfig(restarts=self.restarts, max_iters=self.max_iters,
                         tolerance=self.tolerance, seed=self.seed, certify=self.certify)


_CONFIG_KEYS = {f.name for f in fields(RunConfig)}


def load_config(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError("config must be a JSON object")
    unknown = set(data) - _CONFIG_KEYS
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    return data


def run_config(args):
    """Defaults, then the config file, then explicit flags."""
    merged = asdict(RunConfig())
    if getattr(args, "config", None):
        merged.update(load_config(args.config))
    for key in _CONFIG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    cfg = RunConfig(**merged)
    cfg.opt()  # validates
    return cfg


# ------------------------------------------------------------------ encoding


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if math.isnan(x):
            return "nan"
        return x
    if isinstance(x, Fraction):
        return str(x)
    return x


def dumps(obj, pretty=False):
    if pretty:
        return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False)
    return json.dumps(_clean(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)


def _load_json(arg, what):
    text = arg.strip()
    if text[:1] in "[{":
        src = text
    else:
        try:
            with open(arg) as fh:
                src = fh.read()
        except OSError as exc:
            raise UsageError(f"cannot read {what} {arg}: {exc}") from None
    try:
        return json.loads(src)
    except json.JSONDecodeError as exc:
        raise UsageError(f"malformed {what} JSON: {exc}") from None


def _blocks(text):
    try:
        return tuple(int(t) for t in text.replace("[", "").replace("]", "").split(",") if t.strip())
    except ValueError:
        raise UsageError(f"block list must be comma separated integers, got {text!r}") from None


def _tuple(A, arg):
    if arg is None:
        return []
    data = _load_json(arg, "tuple")
    if isinstance(data, dict):
        data = data.get("tuple", [])
    return [Element.from_json(A, e) for e in data]


def _scalars(arg):
    if arg is None:
        return None
    data = _load_json(arg, "scalars")
    return [complex(re, im) for re, im in data]


def _diagram(arg):
    """Built-in name (``car``, ``fibonacci``, ``uhf:<presentation>``) or a JSON file."""
    if arg == "car":
        return af.car_diagram()
    if arg == "fibonacci":
        return af.fibonacci_diagram()
    if arg.startswith("uhf:"):
        p = uhf.parse_presentation(arg[4:])
        return af.uhf_diagram(p.period, p.prefix)
    return af.BratteliDiagram.from_json(_load_json(arg, "diagram"))


def _formula_info(f):
    return {"text": formula.to_text(f),
            "free_vars": sorted(formula.free_vars(f)),
            "free_scalar_vars": sorted(formula.free_scalar_vars(f)),
            "quantifier_free": formula.is_quantifier_free(f),
            "modulus": formula.lipschitz_modulus(f)}


# ------------------------------------------------------------------ commands


def cmd_eval(args):
    cfg = run_config(args).opt()
    f = formula.parse(args.formula)
    A = FiniteDimAlgebra(_blocks(args.algebra))
    tup = _tuple(A, args.tuple)
    out = evaluate(f, A, tup, cfg, _scalars(args.scalars)).to_json()
    out["formula"] = formula.to_text(f)
    if args.rel:
        if args.r is None:
            raise UsageError("--rel needs --r")
        c = formula.Condition(f, args.rel, Fraction(args.r))
        out["condition"] = check_condition(c, A, tup, cfg).to_json()
    return out


def cmd_formula_parse(args):
    return _formula_info(formula.parse(args.text))


def cmd_formula_build(args):
    name = args.name
    blocks = _blocks(args.blocks) if args.blocks else None
    if name == "rho_p":
        f = stable.rho_p()
    elif name == "alpha":
        f = stable.alpha_matrix_units(args.k, args.unital)
    elif name == "alpha_F":
        f = stable.alpha_F(_need(blocks, "--blocks"), args.unital)
    elif name == "beta0":
        f = stable.beta0(_need(blocks, "--blocks"), args.m, args.unital)
    else:  # gamma
        F = FiniteDimAlgebra(_need(blocks, "--blocks"))
        bs = _tuple(F, _need(args.elements, "--elements"))
        f = stable.gamma(F.blocks, bs, args.unital)
    return _formula_info(f)


def _need(val, flag):
    if val is None:
        raise UsageError(f"{flag} is required here")
    return val


def _probe_formula(name):
    if name == "rho_p":
        return stable.rho_p()
    if name.startswith("alpha") and name[5:].isdigit():
        return stable.alpha_matrix_units(int(name[5:]))
    raise UsageError(f"unknown probe formula {name!r}; use rho_p or alpha<k>")


def cmd_probe(args):
    cfg = run_config(args).opt()
    A = FiniteDimAlgebra(_blocks(args.algebra))
    try:
        deltas = [float(d) for d in args.deltas.split(",")]
    except ValueError:
        raise UsageError("--deltas must be comma separated numbers") from None
    return stable.stability_probe(_probe_formula(args.formula), A, args.samples, deltas,
                                  cfg).to_json()


def cmd_uhf_compare(args):
    return {"verdict": uhf.uhf_equivalent(args.a, args.b),
            "a": uhf.supernatural_of(args.a).to_json(),
            "b": uhf.supernatural_of(args.b).to_json()}


def cmd_uhf_invariant(args):
    p = uhf.parse_presentation(args.p)
    sn = uhf.supernatural_of(p)
    return {"presentation": str(p), "supernatural": sn.to_json(), "text": str(sn)}


def cmd_uhf_copy(args):
    p = uhf.parse_presentation(args.p)
    return {"presentation": str(p), "k": args.k, "unital_copy": uhf.unital_copy_exists(p, args.k)}


def cmd_af_k0(args):
    return af.k0_stage(_diagram(args.diagram), args.level).to_json()


def cmd_af_compare(args):
    return af.compare_diagrams(_diagram(args.d1), _diagram(args.d2), args.depth,
                               args.window).to_json()


def cmd_af_validate(args):
    bad = af.validate_diagram(_diagram(args.diagram))
    return {"ok": not bad, "violations": bad}


def cmd_omission_margin(args):
    cfg = run_config(args).opt()
    A = FiniteDimAlgebra(_blocks(args.algebra))
    tup = _tuple(A, _need(args.tuple, "--tuple"))
    op = omission.lm_margin if args.schema == "t" else omission.lf_margin
    return op(A, tup, args.m, len(tup), args.bound, cfg, args.unital).to_json()


def cmd_omission_scan(args):
    cfg = run_config(args).opt()
    A = FiniteDimAlgebra(_blocks(args.algebra))
    return omission.omission_scan(A, args.schema, args.m, args.n, args.samples, cfg,
                                  args.bound, args.unital).to_json()


def cmd_selftest(args):
    from .selftest import run_selftest

    return run_selftest(run_config(args).opt())


# ------------------------------------------------------------------- parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _run_flags(p):
    p.add_argument("--seed", type=int)
    p.add_argument("--tolerance", type=float)
    p.add_argument("--restarts", type=int)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--certify", action="store_true", default=None)
    p.add_argument("--config", help="JSON file with seed/tolerance/restarts/max_iters/certify/output")


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--pretty", action="store_true", help="indented output")
    common.add_argument("--output", help="write the JSON here instead of stdout")

    top = _Parser(prog="fdcstar", description="Finite-dimensional C*-algebra workbench")
    sub = top.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, func, parent=sub, **kw):
        p = parent.add_parser(name, parents=[common], **kw)
        p.set_defaults(func=func)
        return p

    p = add("eval", cmd_eval, help="evaluate a formula")
    p.add_argument("--formula", required=True)
    p.add_argument("--algebra", required=True, help="block sizes, e.g. 2,3")
    p.add_argument("--tuple", help="JSON list of elements (file or inline)")
    p.add_argument("--scalars", help="JSON list of [re, im] values for z1, z2, ...")
    p.add_argument("--rel", choices=["le", "ge"])
    p.add_argument("--r")
    _run_flags(p)

    fp = sub.add_parser("formula", help="parse or build formulas")
    fsub = fp.add_subparsers(dest="action", parser_class=_Parser)
    fsub.required = True
    p = add("parse", cmd_formula_parse, fsub)
    p.add_argument("--text", required=True)
    p = add("build", cmd_formula_build, fsub)
    p.add_argument("--name", required=True, choices=["rho_p", "alpha", "alpha_F", "beta0", "gamma"])
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--blocks")
    p.add_argument("--elements", help="gamma: JSON list of elements of F")
    p.add_argument("--unital", action="store_true")

    p = add("probe", cmd_probe, help="empirical stability modulus")
    p.add_argument("--formula", required=True, help="rho_p or alpha<k>")
    p.add_argument("--algebra", required=True)
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--deltas", default="0,0.001,0.01")
    _run_flags(p)

    up = sub.add_parser("uhf", help="UHF invariants")
    usub = up.add_subparsers(dest="action", parser_class=_Parser)
    usub.required = True
    p = add("compare", cmd_uhf_compare, usub)
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p = add("invariant", cmd_uhf_invariant, usub)
    p.add_argument("--p", required=True)
    p = add("copy", cmd_uhf_copy, usub)
    p.add_argument("--p", required=True)
    p.add_argument("--k", type=int, required=True)

    ap = sub.add_parser("af", help="Bratteli diagrams")
    asub = ap.add_subparsers(dest="action", parser_class=_Parser)
    asub.required = True
    p = add("k0", cmd_af_k0, asub)
    p.add_argument("--diagram", required=True)
    p.add_argument("--level", type=int, required=True)
    p = add("compare", cmd_af_compare, asub)
    p.add_argument("--d1", required=True)
    p.add_argument("--d2", required=True)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--window", type=int, default=20)
    p = add("validate", cmd_af_validate, asub)
    p.add_argument("--diagram", required=True)

    op = sub.add_parser("omission", help="copy distances and type margins")
    osub = op.add_subparsers(dest="action", parser_class=_Parser)
    osub.required = True
    for name, func in (("margin", cmd_omission_margin), ("scan", cmd_omission_scan)):
        p = add(name, func, osub)
        p.add_argument("--algebra", required=True)
        p.add_argument("--schema", choices=["t", "s"], default="t")
        p.add_argument("--m", type=int, required=True)
        p.add_argument("--bound", type=int, help="k_max (schema t) or dim_max (schema s)")
        p.add_argument("--unital", action="store_true")
        _run_flags(p)
        if name == "margin":
            p.add_argument("--tuple")
        else:
            p.add_argument("--n", type=int, default=1)
            p.add_argument("--samples", type=int, default=10)

    p = add("selftest", cmd_selftest, help="run the built-in example suite")
    _run_flags(p)
    return top


def dispatch(argv):
    """Run one command; returns (exit code, JSON text, output path or None)."""
    try:
        args = build_parser().parse_args(argv)
        if not getattr(args, "func", None):
            raise UsageError("a command is required: eval, formula, probe, uhf, af, omission, selftest")
        out = args.func(args)
        code = 0
        if args.command == "selftest" and out["failed"]:
            code = 1
    except UsageError as exc:
        return 2, dumps({"error": "usage", "message": str(exc)}), None
    except ParseError as exc:
        err = {"error": "ParseError", "message": str(exc)}
        if exc.line is not None:
            err["line"], err["column"] = exc.line, exc.column
        return 2, dumps(err), None
    except FdcstarError as exc:
        return 1, dumps({"error": type(exc).__name__, "message": str(exc)}), None
    dest = getattr(args, "output", None)
    if dest is None and getattr(args, "config", None):
        dest = load_config(args.config).get("output")
    return code, dumps(out, args.pretty), dest


def main(argv=None):
    code, text, dest = dispatch(sys.argv[1:] if argv is None else argv)
    if dest:
        with open(dest, "w") as fh:
            fh.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
