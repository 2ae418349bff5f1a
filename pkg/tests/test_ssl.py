"""SSL IR tests: assertion algebra, emission, parsing, and equivalence."""

import pathlib

import pytest
from hypothesis import given, strategies as st

from pikac import ssl

GOLDEN = sorted(pathlib.Path(__file__).parent.joinpath("golden").glob("*.sus"))


def A(pure=(), spatial=()):
    return ssl.SslAssertion.make(tuple(pure), tuple(spatial))


EMPTY = A()


def test_otimes_identity():
    assert ssl.conj_otimes(EMPTY, EMPTY) == EMPTY


def test_otimes_unit_laws():
    a = A(pure=[ssl.PEq(ssl.PVar("v"), ssl.PInt(7))])
    b = A(spatial=[ssl.PointsTo("x", 0, ssl.PVar("v"))])
    combined = ssl.conj_otimes(a, b)
    assert combined.pure == a.pure
    assert combined.spatial == b.spatial


def test_otimes_general():
    a = A(pure=[ssl.PEq(ssl.PVar("v"), ssl.PInt(1))],
          spatial=[ssl.PointsTo("x", 0, ssl.PVar("v"))])
    b = A(pure=[ssl.PLt(ssl.PVar("v"), ssl.PVar("w"))],
          spatial=[ssl.PointsTo("y", 0, ssl.PVar("w"))])
    combined = ssl.conj_otimes(a, b)
    assert combined.pure == a.pure + b.pure
    assert combined.spatial == a.spatial + b.spatial


_vars = st.sampled_from(["a", "b", "c", "d"])
_pures = st.builds(ssl.PEq, _vars.map(ssl.PVar),
                   st.integers(0, 5).map(ssl.PInt))
_cells = st.builds(lambda base, off, v: ssl.PointsTo(base, off, ssl.PInt(v)),
                   st.sampled_from(["p", "q", "r", "s"]),
                   st.integers(0, 3), st.integers(0, 5))


def _assertions():
    return st.builds(
        lambda pure, cells: ssl.SslAssertion.make(
            tuple(pure),
            tuple({(c.base, c.offset): c for c in cells}.values())),
        st.lists(_pures, max_size=3), st.lists(_cells, max_size=3))


@given(_assertions(), _assertions(), _assertions())
def test_otimes_associative(a, b, c):
    try:
        left = ssl.conj_otimes(ssl.conj_otimes(a, b), c)
        right = ssl.conj_otimes(a, ssl.conj_otimes(b, c))
    except ValueError:
        return    # duplicate cells across operands: not a valid composition
    assert sorted(map(repr, left.pure)) == sorted(map(repr, right.pure))
    assert sorted(map(repr, left.spatial)) == sorted(map(repr, right.spatial))


@given(_assertions())
def test_otimes_two_sided_identity(a):
    assert ssl.conj_otimes(a, EMPTY) == a
    assert ssl.conj_otimes(EMPTY, a) == a


def test_emit_singleton_listing():
    pred = ssl.PredicateDef(
        "singleton", (("p", "int"), ("r", "loc")),
        (ssl.Branch(ssl.TRUE, A(spatial=[
            ssl.PointsTo("r", 0, ssl.PVar("p")),
            ssl.PointsTo("r", 1, ssl.PInt(0)),
            ssl.Block("r", 2)])),))
    text = ssl.emit_predicate(pred)
    assert "predicate singleton(int p, loc r)" in text
    assert "{ r :-> p ** (r+1) :-> 0 ** [r,2] }" in text


def test_emit_fold_parameter_list():
    pred = ssl.PredicateDef(
        "fold_List", (("i1", "int"), ("x", "loc"), ("i2", "int")),
        (ssl.Branch(ssl.TRUE, EMPTY),))
    assert ssl.emit_predicate(pred).startswith(
        "predicate fold_List(int i1, loc x, int i2)")


def test_emit_true_emp_branch():
    pred = ssl.PredicateDef("p", (("x", "loc"),),
                            (ssl.Branch(ssl.TRUE, EMPTY),))
    assert "| true => { emp }" in ssl.emit_predicate(pred)


def test_emit_goal_spec_shape():
    goal = ssl.GoalSpec(
        "filterLt9", (("loc", "x1"), ("loc", "r")),
        A(spatial=[ssl.PredApply("Sll", (ssl.PVar("x1"),)),
                   ssl.PointsTo("r", 0, ssl.PInt(0))]),
        A(spatial=[ssl.PredApply("filterLt9", (ssl.PVar("x1"), ssl.PVar("r0"))),
                   ssl.PointsTo("r", 0, ssl.PVar("r0"))]))
    text = ssl.emit_goal_spec(goal)
    assert "void filterLt9(loc x1, loc r)" in text
    assert "{ Sll(x1) ** r :-> 0 }" in text
    assert "{ filterLt9(x1, r0) ** r :-> r0 }" in text
    assert "{ ?? }" in text


def test_emit_goal_spec_map_shape():
    goal = ssl.GoalSpec(
        "mapAdd1", (("loc", "x"), ("loc", "y")),
        A(spatial=[ssl.PredApply("sll", (ssl.PVar("x"),)),
                   ssl.PointsTo("y", 0, ssl.PInt(0))]),
        A(spatial=[ssl.PointsTo("y", 0, ssl.PVar("r")),
                   ssl.PredApply("mapAdd1", (ssl.PVar("x"), ssl.PVar("r")))]))
    text = ssl.emit_goal_spec(goal)
    assert "{ sll(x) ** y :-> 0 }" in text
    assert "{ y :-> r ** mapAdd1(x, r) }" in text


def test_emit_goal_spec_degenerate():
    goal = ssl.GoalSpec("f", (("loc", "output"),),
                        A(spatial=[ssl.PointsTo("output", 0, ssl.PInt(0))]),
                        A(spatial=[ssl.PointsTo("output", 0, ssl.PVar("r0"))]))
    text = ssl.emit_goal_spec(goal)
    assert text.startswith("void f(loc output)")
    assert "{ output :-> 0 }" in text


def test_goal_round_trip():
    goal = ssl.GoalSpec(
        "f", (("loc", "x1"), ("loc", "r")),
        A(spatial=[ssl.PredApply("Sll", (ssl.PVar("x1"),)),
                   ssl.PointsTo("r", 0, ssl.PInt(0))]),
        A(spatial=[ssl.PredApply("f", (ssl.PVar("x1"), ssl.PVar("r0"))),
                   ssl.PointsTo("r", 0, ssl.PVar("r0"))]))
    back = ssl.parse_goal_spec(ssl.emit_goal_spec(goal))
    assert ssl.goal_structural_equiv(goal, back)


def test_structural_equiv_renaming():
    a = ssl.parse_predicate("""
predicate singleton(int p, loc r) {
| true => { r :-> p ** (r+1) :-> 0 ** [r,2] }
}""")
    b = ssl.parse_predicate("""
predicate singleton(int p, loc __r_x) {
| true => { __r_x :-> p ** (__r_x+1) :-> 0 ** [__r_x,2] }
}""")
    assert ssl.structural_equiv(a, b)


def test_structural_equiv_requires_injective_renaming():
    a = ssl.parse_predicate("""
predicate p(loc x) {
| true => { x :-> a ** (x+1) :-> b }
}""")
    b = ssl.parse_predicate("""
predicate p(loc x) {
| true => { x :-> c ** (x+1) :-> c }
}""")
    assert not ssl.structural_equiv(a, b)


def test_structural_equiv_branch_count():
    a = ssl.parse_predicate(
        "predicate p(loc x) { | true => { emp } }")
    b = ssl.parse_predicate(
        "predicate p(loc x) { | x == 0 => { emp } | true => { emp } }")
    assert not ssl.structural_equiv(a, b)


def test_structural_equiv_parameter_order_significant():
    a = ssl.parse_predicate(
        "predicate p(loc x, int i) { | true => { x :-> i } }")
    b = ssl.parse_predicate(
        "predicate p(int i, loc x) { | true => { x :-> i } }")
    assert not ssl.structural_equiv(a, b)


@pytest.mark.parametrize("path", GOLDEN, ids=lambda p: p.stem)
def test_emit_reparse_idempotent_on_golden(path):
    pred = ssl.parse_predicate(path.read_text())
    again = ssl.parse_predicate(ssl.emit_predicate(pred))
    assert ssl.structural_equiv(pred, again)
    assert ssl.structural_equiv(again, pred)


def test_structural_equiv_is_equivalence_on_golden():
    preds = [ssl.parse_predicate(p.read_text()) for p in GOLDEN]
    for p in preds:
        assert ssl.structural_equiv(p, p)
    # distinct golden predicates describe distinct functions
    for i, p in enumerate(preds):
        for q in preds[i + 1:]:
            if ssl.structural_equiv(p, q):
                assert ssl.structural_equiv(q, p)


def test_duplicate_points_to_rejected():
    with pytest.raises(ValueError):
        ssl.SslAssertion((), (ssl.PointsTo("x", 0, ssl.PInt(1)),
                              ssl.PointsTo("x", 0, ssl.PInt(2))))
