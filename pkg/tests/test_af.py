import numpy as np
import pytest

from fdcstar.af import (DISTINGUISHED, EQUIVALENT, UNKNOWN, BratteliDiagram, car_diagram,
                        compare_diagrams, embed, fibonacci_diagram, generalized_integer, k0_stage,
                        level_algebra, rational_rank, uhf_diagram, validate_diagram)
from fdcstar.algebra import FiniteDimAlgebra, norm, random_ball_element
from fdcstar.errors import AlgebraMismatch, InvalidArg, InvalidLevel, NotUhfDiagram


def connecting(D, n, m):
    acc = np.identity(len(D.level_sizes(n)), dtype=object)
    for t in range(n, m):
        acc = D.map_at(t).dot(acc)
    return acc


def check_certificate(D1, D2, cert):
    """Independent check: unit-preserving positive maps whose zigzag composites
    equal the connecting maps of the diagrams."""
    ds = {"a": D1, "b": D2}
    other = {"a": "b", "b": "a"}
    for s in cert:
        M = np.array(s["matrix"], dtype=object)
        src = np.array(ds[s["from"]].level_sizes(s["level"]), dtype=object)
        tgt = ds[other[s["from"]]].level_sizes(s["to_level"])
        assert (M >= 0).all()
        assert tuple(M.dot(src)) == tuple(tgt)
    for s, t in zip(cert, cert[1:]):
        assert t["from"] == other[s["from"]] and t["level"] == s["to_level"]
        comp = np.array(t["matrix"], dtype=object).dot(np.array(s["matrix"], dtype=object))
        want = connecting(ds[s["from"]], s["level"], t["to_level"])
        assert comp.tolist() == want.tolist()
        assert t["to_level"] > s["level"]


def test_validate():
    ok = BratteliDiagram(((1,), (2,), (4,)), (((2,),), ((2,),)))
    assert validate_diagram(ok) == []
    bad = BratteliDiagram(((1,), (3,)), (((2,),),))
    assert [v["level"] for v in validate_diagram(bad)] == [0]
    shape = BratteliDiagram(((1,), (2, 2)), (((2,),),))
    assert validate_diagram(shape)[0]["problem"].startswith("map shape")
    nonunital = BratteliDiagram(((1,), (3,)), (((2,),),), unital=False)
    assert validate_diagram(nonunital) == []


def test_constructor_errors():
    with pytest.raises(InvalidArg):
        BratteliDiagram((), ())
    with pytest.raises(InvalidArg):
        BratteliDiagram(((1,),), (((2,),),), True, 3)
    with pytest.raises(InvalidArg):
        BratteliDiagram((("a",),), ())


def test_levels():
    car = car_diagram()
    assert level_algebra(car, 3).blocks == (8,)
    assert level_algebra(car, 0).blocks == (1,)
    fib = fibonacci_diagram()
    assert [fib.level_sizes(n) for n in range(5)] == [(1, 1), (2, 1), (3, 2), (5, 3), (8, 5)]
    with pytest.raises(InvalidLevel):
        level_algebra(car, -1)


def test_finite_diagram_stabilises():
    D = BratteliDiagram(((1,), (2,)), (((2,),),))
    assert D.level_sizes(5) == (2,)
    assert D.map_at(4).tolist() == [[1]]
    with pytest.raises(InvalidLevel):
        level_algebra(D, 2)


def test_embed_car():
    car = car_diagram()
    a = random_ball_element(FiniteDimAlgebra([2]), 1.0, 1)
    b = embed(car, 1, a)
    assert np.allclose(b.blocks[0][:2, :2], a.blocks[0])
    assert np.allclose(b.blocks[0][2:, 2:], a.blocks[0])
    assert np.allclose(b.blocks[0][:2, 2:], 0)


def test_embed_is_unital_isometric_homomorphism():
    fib = fibonacci_diagram()
    A = level_algebra(fib, 2)
    assert embed(fib, 2, A.unit()).allclose(level_algebra(fib, 3).unit())
    for s in range(50):
        a, b = random_ball_element(A, 1.0, s), random_ball_element(A, 1.0, 1000 + s)
        ea, eb = embed(fib, 2, a), embed(fib, 2, b)
        assert norm(ea) == pytest.approx(norm(a), abs=1e-12)
        assert embed(fib, 2, a * b).allclose(ea * eb, 1e-12)
        assert embed(fib, 2, a.adjoint()).allclose(ea.adjoint(), 1e-12)


def test_embed_mismatch():
    with pytest.raises(AlgebraMismatch):
        embed(car_diagram(), 1, FiniteDimAlgebra([3]).unit())


def test_k0():
    st = k0_stage(car_diagram(), 3)
    assert (st.rank, st.order_unit) == (1, (8,))
    assert k0_stage(uhf_diagram((3,)), 2).to_json()["unit"] == [9]
    fib = k0_stage(fibonacci_diagram(), 2)
    assert fib.rank == 2 and fib.order_unit == (3, 2)
    assert fib.forward_map == ((1, 1), (1, 0))


def test_generalized_integer():
    assert str(generalized_integer(car_diagram())) == "2^inf"
    assert str(generalized_integer(uhf_diagram((6,)))) == "2^inf*3^inf"
    assert str(generalized_integer(uhf_diagram((5,), (2, 3)))) == "2*3*5^inf"
    with pytest.raises(NotUhfDiagram):
        generalized_integer(fibonacci_diagram())


def test_rational_rank():
    assert rational_rank(car_diagram()) == 1
    assert rational_rank(fibonacci_diagram()) == 2
    # a rank-one map collapses K_0 (x) Q to one dimension
    D = BratteliDiagram(((1, 1),), (((1, 1), (1, 1)),), True, 0)
    assert rational_rank(D) == 1


def test_diagram_json():
    D = fibonacci_diagram()
    assert BratteliDiagram.from_json(D.to_json()) == D
    with pytest.raises(InvalidArg):
        BratteliDiagram.from_json({"maps": []})


def test_compare_self():
    res = compare_diagrams(car_diagram(), car_diagram(), 3)
    assert res.verdict == EQUIVALENT
    check_certificate(car_diagram(), car_diagram(), res.certificate)


def test_compare_regrouped():
    a, b = uhf_diagram((2, 3)), uhf_diagram((6,))
    res = compare_diagrams(a, b, 3, window=20)
    assert res.verdict == EQUIVALENT and len(res.certificate) == 3
    check_certificate(a, b, res.certificate)


def test_compare_telescoped():
    a = car_diagram()
    b = uhf_diagram((4,))
    res = compare_diagrams(a, b, 4)
    assert res.verdict == EQUIVALENT
    check_certificate(a, b, res.certificate)


def test_compare_fibonacci_self():
    fib = fibonacci_diagram()
    res = compare_diagrams(fib, fib, 3)
    assert res.verdict == EQUIVALENT
    check_certificate(fib, fib, res.certificate)


def test_compare_distinguished():
    res = compare_diagrams(car_diagram(), uhf_diagram((3,)), 3)
    assert res.verdict == DISTINGUISHED
    assert res.witness["invariant"] == "generalized_integer"
    res = compare_diagrams(fibonacci_diagram(), car_diagram(), 3)
    assert res.verdict == DISTINGUISHED
    assert res.witness["invariant"] == "rational_rank"


def test_compare_budget_is_unknown():
    # same invariants, but the tiny window cannot fit the multiplicities
    res = compare_diagrams(uhf_diagram((2,)), uhf_diagram((4,)), 3, window=1)
    assert res.verdict == UNKNOWN
    res = compare_diagrams(uhf_diagram((2, 3)), uhf_diagram((6,)), 3, node_limit=1)
    assert res.verdict == UNKNOWN


def test_compare_rejects_invalid():
    bad = BratteliDiagram(((1,), (3,)), (((2,),),))
    with pytest.raises(InvalidArg):
        compare_diagrams(bad, car_diagram(), 2)
    with pytest.raises(InvalidArg):
        compare_diagrams(car_diagram(), car_diagram(), 0)
