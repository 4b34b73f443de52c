import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdcstar.errors import InvalidArg
from fdcstar.uhf import (INF, ISOMORPHIC, NEITHER, Supernatural, UhfPresentation, factorize,
                         parse_presentation, sn_divides, sn_eq, sn_mul, supernatural_of,
                         uhf_equivalent, unital_copy_exists)


def test_factorize():
    assert factorize(1) == {}
    assert factorize(360) == {2: 3, 3: 2, 5: 1}
    assert factorize(97) == {97: 1}
    for bad in (0, -4, 2.5, True):
        with pytest.raises(InvalidArg):
            factorize(bad)


def test_invariants_of_presentations():
    assert str(supernatural_of("2*")) == "2^inf"
    assert str(supernatural_of("6*")) == "2^inf*3^inf"
    assert str(supernatural_of("2,3,5*")) == "2*3*5^inf"
    assert str(supernatural_of("4,2")) == "2^3"
    assert str(supernatural_of("1*")) == "1"


def test_lattice_operations():
    a = Supernatural({2: INF, 3: 1})
    assert sn_divides(a, supernatural_of("6*"))
    assert not sn_divides(supernatural_of("6*"), a)
    assert sn_mul(supernatural_of("2*"), Supernatural.of_int(2)) == supernatural_of("2*")
    assert sn_mul(Supernatural.of_int(2), 3) == Supernatural.of_int(6)
    assert sn_eq(Supernatural({2: INF, 3: INF}), supernatural_of("6*"))


def test_supernatural_validation():
    with pytest.raises(InvalidArg):
        Supernatural({4: 1})
    with pytest.raises(InvalidArg):
        Supernatural({2: -1})
    with pytest.raises(InvalidArg):
        Supernatural({2: 0.5})
    assert Supernatural({2: 0}) == Supernatural()


def test_supernatural_json():
    s = supernatural_of("2,3,5*")
    assert s.to_json() == [{"p": 2, "e": 1}, {"p": 3, "e": 1}, {"p": 5, "e": "inf"}]
    assert Supernatural.from_json(s.to_json()) == s


@pytest.mark.parametrize("a,b,want", [
    ("2*", "4*", ISOMORPHIC),
    ("2*", "3*", NEITHER),
    ("(2,3)*", "6*", ISOMORPHIC),
    ("3,2*", "2*", NEITHER),
    ("2,2*", "8*", ISOMORPHIC),
    ("(2,9)*", "(6,3)*", ISOMORPHIC),
    ("2,3", "6", ISOMORPHIC),
    ("2,3", "4", NEITHER),
])
def test_equivalence(a, b, want):
    assert uhf_equivalent(a, b) == want


def test_unital_copies():
    assert unital_copy_exists("2*", 8)
    assert not unital_copy_exists("2*", 6)
    assert unital_copy_exists("2,3,5*", 30)
    assert not unital_copy_exists("2,3,5*", 4)
    with pytest.raises(InvalidArg):
        unital_copy_exists("2*", 0)


@pytest.mark.parametrize("text,prefix,period", [
    ("2*", (), (2,)),
    ("(2,3)*", (), (2, 3)),
    ("2,3,5*", (2, 3), (5,)),
    ("4, (2, 3)*", (4,), (2, 3)),
    ("2,3", (2, 3), ()),
])
def test_parse(text, prefix, period):
    p = parse_presentation(text)
    assert (p.prefix, p.period) == (prefix, period)
    assert parse_presentation(str(p)) == p


@pytest.mark.parametrize("text", ["", "2*,3", "(2,3)", "a*", "2;3", "0*", "2,,3"])
def test_parse_errors(text):
    with pytest.raises(InvalidArg):
        parse_presentation(text)


def test_presentation_factors_and_tensor():
    p = UhfPresentation((5,), (2, 3))
    assert p.factors(6) == [5, 2, 3, 2, 3, 2]
    q = p.tensor(UhfPresentation((), (7,)))
    assert supernatural_of(q) == supernatural_of(p) * supernatural_of("7*")
    assert UhfPresentation.from_json(p.to_json()) == p


presentations = st.builds(
    UhfPresentation,
    st.lists(st.integers(1, 30), max_size=4).map(tuple),
    st.lists(st.integers(1, 30), min_size=1, max_size=3).map(tuple))


@settings(max_examples=100, deadline=None)
@given(presentations, presentations)
def test_tensor_is_multiplicative(p, q):
    assert supernatural_of(p.tensor(q)) == supernatural_of(p) * supernatural_of(q)


@settings(max_examples=100, deadline=None)
@given(presentations, st.integers(1, 4))
def test_unrolling_the_period_is_invariant(p, reps):
    unrolled = UhfPresentation(p.prefix + p.period * reps, p.period * 2)
    assert uhf_equivalent(p, unrolled) == ISOMORPHIC
