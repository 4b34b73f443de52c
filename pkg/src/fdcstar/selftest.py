"""Small deterministic example suite behind ``fdcstar selftest``."""

from dataclasses import replace
from fractions import Fraction

import numpy as np

from . import af, formula, omission, stable, uhf
from .algebra import (Element, FiniteDimAlgebra, Subspace, adjoint, dist_to_subspace, mul, norm,
                      random_ball_element, scalar_mul)
from .errors import CorrectionFailed, InvalidAlgebra, NoSpectralGap, NotUhfDiagram, ParseError
from .evaluator import check_condition, eval_qf, evaluate

TOL = 1e-9


def _raises(fn, exc):
    try:
        fn()
    except exc:
        return True
    return False


def _cases(cfg):
    M2 = FiniteDimAlgebra([2])
    M3 = FiniteDimAlgebra([3])
    M23 = FiniteDimAlgebra([2, 3])
    CC = FiniteDimAlgebra([1, 1])
    e11, e12, e21 = M2.matrix_unit(0, 0, 0), M2.matrix_unit(0, 0, 1), M2.matrix_unit(0, 1, 0)
    a = random_ball_element(M23, 1.0, cfg.seed)
    x = random_ball_element(M2, 1.0, cfg.seed + 1)
    rho = stable.rho_p()
    cases = {
        "algebra.dim [2]": lambda: M2.dim == 4,
        "algebra.dim [2,3]": lambda: M23.dim == 13,
        "algebra.empty": lambda: _raises(lambda: FiniteDimAlgebra([]), InvalidAlgebra),
        "algebra.unit_law": lambda: mul(M23.unit(), a).allclose(a, TOL),
        "algebra.adjoint_e12": lambda: adjoint(e12).allclose(e21, TOL),
        "algebra.adjoint_scalar": lambda: adjoint(scalar_mul(1j, x)).allclose(
            scalar_mul(-1j, adjoint(x)), TOL),
        "algebra.norm_unit": lambda: abs(norm(M3.unit()) - 1) < TOL,
        "algebra.norm_blocks": lambda: abs(norm(Element(M23, [np.diag([1, -1]),
                                                              np.zeros((3, 3))])) - 1) < TOL,
        "algebra.span_member": lambda: dist_to_subspace(
            e11 + scalar_mul(2, e12), Subspace(M2, [e11, e12]), cfg) < TOL,
        "algebra.ball_retraction": lambda: norm(random_ball_element(M23, 0.5, cfg.seed)) <= 0.5 + 1e-12,
        "algebra.sampling_determinism": lambda: random_ball_element(M23, 1.0, 7).equal(
            random_ball_element(M23, 1.0, 7)),
        "formula.parse_atomic": lambda: formula.parse("norm(x1*x1 - x1)") == formula.Norm(
            formula.Sub(formula.Mul(formula.Var(1), formula.Var(1)), formula.Var(1))),
        "formula.parse_quantifier": lambda: isinstance(
            formula.parse("inf{x2:1} norm(x1 - x2*x2)"), formula.Quant),
        "formula.parse_error_column": lambda: _parse_error_at("norm(x1 +", 9),
        "formula.round_trip_builders": lambda: all(
            formula.parse(formula.to_text(f)) == f for f in _builders()),
        "formula.free_vars": lambda: formula.free_vars(formula.parse("norm(x1*x3)")) == {1, 3}
        and formula.free_vars(formula.parse("inf{x1:1} norm(x1 - x2)")) == {2}
        and formula.free_vars(formula.parse("inf{x1:1} norm(x1)")) == set(),
        "formula.alpha2_free_vars": lambda: formula.free_vars(formula.parse(formula.to_text(
            stable.alpha_matrix_units(2)))) == {1, 2, 3, 4},
        "eval.rho_p_projection": lambda: eval_qf(rho, M2, [e11]) < TOL,
        "eval.rho_p_half": lambda: abs(eval_qf(rho, M2, [scalar_mul(0.5, e11)]) - 0.25) < TOL,
        "eval.alpha2_units": lambda: eval_qf(stable.alpha_matrix_units(2), M2,
                                             stable.canonical_units(M2)) < TOL,
        "eval.alpha2_zero": lambda: eval_qf(stable.alpha_matrix_units(2), M2,
                                            [M2.zero()] * 4) >= 1 - TOL,
        "eval.inf_norm": lambda: evaluate(formula.parse("inf{x1:1} norm(x1)"), M2, (),
                                          cfg).value < 1e-6,
        "eval.inf_norm_unit": lambda: evaluate(formula.parse("inf{x1:1} norm(x1 - 1)"), M2, (),
                                               cfg).value < 1e-6,
        "eval.condition_sat": lambda: check_condition(
            formula.ball_condition(1), M23, [a], cfg).verdict == "sat",
        "eval.condition_unsat": lambda: _unsat_margin(rho, M2, e11, cfg),
        "stable.alpha_F_units": lambda: eval_qf(stable.alpha_F([2, 3]), M23,
                                                stable.canonical_units(M23)) < TOL,
        "stable.projection_fixed": lambda: stable.correct_projection(M2, e11).allclose(e11, TOL),
        "stable.projection_half": lambda: _raises(
            lambda: stable.correct_projection(M2, scalar_mul(0.5, M2.unit())), NoSpectralGap),
        "stable.units_fixed": lambda: all(u.allclose(v, TOL) for u, v in zip(
            stable.correct_matrix_units(M2, stable.canonical_units(M2)),
            stable.canonical_units(M2))),
        "stable.units_zero": lambda: _raises(
            lambda: stable.correct_matrix_units(M2, [M2.zero()] * 4), CorrectionFailed),
        "stable.probe_delta0": lambda: stable.stability_probe(
            rho, M2, 3, [0.0], cfg).rows[0][1] == 0.0,
        "uhf.car": lambda: str(uhf.supernatural_of("2*")) == "2^inf",
        "uhf.six": lambda: str(uhf.supernatural_of("6*")) == "2^inf*3^inf",
        "uhf.prefix": lambda: str(uhf.supernatural_of("2,3,5*")) == "2*3*5^inf",
        "uhf.divides": lambda: uhf.sn_divides(uhf.Supernatural({2: uhf.INF, 3: 1}),
                                              uhf.supernatural_of("6*")),
        "uhf.mul_absorbs": lambda: uhf.sn_mul(uhf.supernatural_of("2*"), uhf.Supernatural.of_int(2))
        == uhf.supernatural_of("2*"),
        "uhf.eq": lambda: uhf.sn_eq(uhf.Supernatural({2: uhf.INF, 3: uhf.INF}),
                                    uhf.supernatural_of("6*")),
        "uhf.2_vs_4": lambda: uhf.uhf_equivalent("2*", "4*") == uhf.ISOMORPHIC,
        "uhf.2_vs_3": lambda: uhf.uhf_equivalent("2*", "3*") == uhf.NEITHER,
        "uhf.23_vs_6": lambda: uhf.uhf_equivalent("(2,3)*", "6*") == uhf.ISOMORPHIC,
        "uhf.copy_8": lambda: uhf.unital_copy_exists("2*", 8),
        "uhf.copy_6": lambda: not uhf.unital_copy_exists("2*", 6),
        "uhf.copy_30": lambda: uhf.unital_copy_exists("2,3,5*", 30),
        "af.valid": lambda: af.validate_diagram(af.BratteliDiagram(
            ((1,), (2,), (4,)), ((((2,),)), (((2,),))))) == [],
        "af.invalid": lambda: [v["level"] for v in af.validate_diagram(
            af.BratteliDiagram(((1,), (3,)), (((2,),),)))] == [0],
        "af.level3": lambda: af.level_algebra(af.car_diagram(), 3).blocks == (8,),
        "af.level0": lambda: af.level_algebra(af.car_diagram(), 0).blocks == (1,),
        "af.embed_diag": lambda: _embed_diag(cfg),
        "af.embed_unit": lambda: af.embed(af.car_diagram(), 1, FiniteDimAlgebra([2]).unit())
        .allclose(FiniteDimAlgebra([4]).unit(), TOL),
        "af.k0_uhf": lambda: af.k0_stage(af.uhf_diagram((3,)), 2).to_json()["unit"] == [9],
        "af.compare_self": lambda: af.compare_diagrams(af.car_diagram(), af.car_diagram(),
                                                       3).verdict == af.EQUIVALENT,
        "af.gi_car": lambda: str(af.generalized_integer(af.car_diagram())) == "2^inf",
        "af.gi_six": lambda: str(af.generalized_integer(af.uhf_diagram((6,)))) == "2^inf*3^inf",
        "af.gi_fibonacci": lambda: _raises(lambda: af.generalized_integer(af.fibonacci_diagram()),
                                           NotUhfDiagram),
        "omission.identity_copy": lambda: omission.dist_to_matrix_copy(
            M2, [e11], 2, True, cfg) < 1e-6,
        "omission.no_copy": lambda: omission.dist_to_matrix_copy(M23, [a], 2, True, cfg) is None,
        "omission.F1_projection": lambda: omission.dist_to_fd_copy(M2, [e11], [1], False,
                                                                   cfg) < 1e-6,
        "omission.F_is_A": lambda: omission.dist_to_fd_copy(M23, [M23.unit()], [2, 3], True,
                                                            cfg) < 1e-6,
        "omission.F22_in_M3": lambda: omission.dist_to_fd_copy(
            M3, [M3.unit()], [2, 2], True, cfg) is None,
        "omission.M3_omits": lambda: omission.lm_margin(
            M3, [random_ball_element(M3, 1.0, cfg.seed)], 2, 1, 3, cfg).verdict == "omits",
        "omission.commutative_realizes": lambda: omission.lm_margin(
            CC, [Element(CC, [np.eye(1), np.zeros((1, 1))])], 3, 1, 4, cfg).verdict == "realizes",
        "omission.lf_truncated": lambda: omission.lf_margin(
            M23, [Element(M23, [np.eye(2), np.zeros((3, 3))])], 2, 1, 3, cfg).truncated,
    }
    return cases


def _builders():
    M1 = FiniteDimAlgebra([1])
    return [stable.rho_p(), stable.alpha_matrix_units(2), stable.alpha_matrix_units(3, True),
            stable.alpha_F([1, 2]), stable.beta0([2], 1), stable.beta0([1, 1], 2, True),
            stable.gamma([1], [M1.unit()])]


def _parse_error_at(text, column):
    try:
        formula.parse(text)
    except ParseError as exc:
        return exc.column == column
    return False


def _unsat_margin(rho, A, p, cfg):
    res = check_condition(formula.Condition(rho, "ge", Fraction(1, 10)), A, [p], cfg)
    return res.verdict == "unsat" and abs(res.margin - 0.1) < TOL


def _embed_diag(cfg):
    M2 = FiniteDimAlgebra([2])
    a = random_ball_element(M2, 1.0, cfg.seed)
    b = af.embed(af.car_diagram(), 1, a)
    want = np.zeros((4, 4), dtype=complex)
    want[:2, :2] = want[2:, 2:] = a.blocks[0]
    return np.allclose(b.blocks[0], want, atol=TOL)


def run_selftest(cfg):
    """Run every case; the budget is capped so the suite stays quick."""
    cfg = replace(cfg, restarts=min(cfg.restarts, 4), max_iters=min(cfg.max_iters, 300))
    out = []
    for name, fn in _cases(cfg).items():
        try:
            ok = bool(fn())
            detail = ""
        except Exception as exc:  # a crashing case is a failing case
            ok = False
            detail = f"{type(exc).__name__}: {exc}"
        row = {"name": name, "ok": ok}
        if detail:
            row["detail"] = detail
        out.append(row)
    passed = sum(r["ok"] for r in out)
    return {"passed": passed, "failed": len(out) - passed, "cases": out}
