"""Model checker tests: pure evaluation, satisfaction, pairing, soundness."""

import pathlib
import random

import pytest

from pikac import errors as E
from pikac import ssl
from pikac.interp import IntVal, LocVal, Model, eval_expr
from pikac.modelcheck import (
    CoreSignature, PredicateEnv, Sat, Unsat, build_predicate_env,
    check_otimes, check_soundness, eval_pure, eval_pure_bool, gen_core_expr,
    satisfies, shrink_core_expr,
)
from pikac.syntax import parse_expr_text, parse_source
from pikac.translate import translate_expr_core, translate_layout_predicate
from pikac.types import build_global_env, infer_expr

SIG = pathlib.Path(__file__).parent / "corpus" / "soundness_sig.pika"


@pytest.fixture(scope="module")
def genv():
    return build_global_env(parse_source(SIG.read_text()))


@pytest.fixture(scope="module")
def sig(genv):
    return CoreSignature.from_env(genv)


def P(text):
    """Parse a pure term via the predicate parser."""
    pred = ssl.parse_predicate(
        "predicate p(loc z) { | " + text + " => { emp } }")
    return pred.branches[0].cond


# -- pure evaluation --

def test_eval_pure_equality():
    assert eval_pure_bool({"r": IntVal(7)}, P("r == 7"))


def test_eval_pure_null_test():
    assert not eval_pure_bool({"x": IntVal(0)}, P("not (x == 0)"))


def test_eval_pure_ternary():
    binding = {"i": IntVal(3), "x": IntVal(5)}
    assert eval_pure_bool(binding, P("((i < x) ? x : i) == 5"))


def test_eval_pure_loc_equality_is_numeric():
    assert eval_pure_bool({"x": LocVal(5)}, P("x == 5"))
    assert not eval_pure_bool({"x": LocVal(5)}, P("x == 0"))


def test_eval_pure_unbound():
    with pytest.raises(E.UnboundVariable):
        eval_pure({}, ssl.PVar("missing"))


def test_eval_pure_sort_mismatch():
    with pytest.raises(E.SortMismatch):
        eval_pure({"b": IntVal(1)}, ssl.PNot(ssl.PVar("b")))


# -- satisfaction --

def _sll_env(genv):
    return PredicateEnv(
        {"Sll": translate_layout_predicate(genv.layouts["Sll"])})


def test_satisfies_pure_only(genv):
    model = Model({"r": IntVal(7)}, {})
    a = ssl.SslAssertion.make((P("r == 7"),), ())
    assert isinstance(satisfies(model, a, _sll_env(genv)), Sat)


def test_satisfies_null_encoded_list(genv):
    model = Model({"x": LocVal(5)}, {5: IntVal(1), 6: IntVal(0)})
    a = ssl.SslAssertion.make((), (ssl.PredApply("Sll", (ssl.PVar("x"),)),))
    assert isinstance(satisfies(model, a, _sll_env(genv)), Sat)


def test_satisfies_incomplete_heap_rejected(genv):
    model = Model({"x": LocVal(5)}, {5: IntVal(1)})
    a = ssl.SslAssertion.make((), (ssl.PredApply("Sll", (ssl.PVar("x"),)),))
    assert isinstance(satisfies(model, a, _sll_env(genv)), Unsat)


def test_satisfies_machine_built_list(genv):
    e = parse_expr_text("lower Sll (Cons 7 (lower Sll (Nil)))")
    val, store, heap, fs, r = eval_expr(genv, e)
    core = translate_expr_core(genv, e, result_var=r)
    env = build_predicate_env(genv, exprs=[e], fsstore=fs)
    assert isinstance(satisfies(Model(store, heap), core.assertion(), env),
                      Sat)


def test_satisfies_whole_heap_semantics(genv):
    e = parse_expr_text("lower Sll (Cons 7 (lower Sll (Nil)))")
    val, store, heap, fs, r = eval_expr(genv, e)
    core = translate_expr_core(genv, e, result_var=r)
    env = build_predicate_env(genv, exprs=[e], fsstore=fs)
    framed = dict(heap)
    framed[max(heap) + 17] = IntVal(99)
    result = satisfies(Model(store, framed), core.assertion(), env)
    assert isinstance(result, Unsat)


def test_satisfies_monotone_in_depth(genv):
    e = parse_expr_text(
        "instantiate [Sll] Sll incAll (lower Sll (Cons 1 (lower Sll "
        "(Cons 2 (lower Sll (Nil))))))")
    val, store, heap, fs, r = eval_expr(genv, e)
    core = translate_expr_core(genv, e, result_var=r)
    env = build_predicate_env(genv, exprs=[e], fsstore=fs)
    model = Model(store, heap)
    sat_depths = [d for d in range(1, 16)
                  if isinstance(satisfies(model, core.assertion(), env, d),
                                Sat)]
    assert sat_depths
    first = sat_depths[0]
    assert sat_depths == list(range(first, 16))


# -- soundness --

def test_soundness_addition(genv):
    assert isinstance(check_soundness(genv, parse_expr_text("3 + 4")).result,
                      Sat)


def test_soundness_four_cell_list(genv):
    e = parse_expr_text(
        "lower Sll (Cons 1 (lower Sll (Cons 2 (lower Sll (Nil)))))")
    report = check_soundness(genv, e)
    assert isinstance(report.result, Sat)
    assert len(report.model.heap) == 4


def test_soundness_single_case_function(genv):
    e = parse_expr_text("instantiate [Sll] Sll idList (lower Sll (Nil))")
    assert isinstance(check_soundness(genv, e).result, Sat)


def test_soundness_detects_broken_translation(genv, monkeypatch):
    import pikac.modelcheck as mc

    real = mc.translate_fn_def_core

    def broken(env, fn, layout, result_ref):
        pred = real(env, fn, layout, result_ref)
        # drop one heaplet from every non-empty branch
        branches = []
        for b in pred.branches:
            spatial = b.body.spatial[1:] if b.body.spatial else ()
            branches.append(ssl.Branch(b.cond,
                                       ssl.SslAssertion.make(b.body.pure,
                                                             spatial),
                                       ctor=b.ctor))
        return ssl.PredicateDef(pred.name, pred.params, tuple(branches))

    monkeypatch.setattr(mc, "translate_fn_def_core", broken)
    e = parse_expr_text(
        "instantiate [Sll] Sll idList (instantiate [Sll] Sll idList "
        "(lower Sll (Cons 5 (lower Sll (Nil)))))")
    report = check_soundness(genv, e)
    assert not isinstance(report.result, Sat)
    assert report.trace


# -- generation --

def test_generator_smallest_form(sig):
    e = gen_core_expr(sig, seed=0, budget=1)
    from pikac import syntax as S
    assert isinstance(e, S.IntLit)


def test_generator_outputs_well_typed(genv, sig):
    for seed in range(300):
        e = gen_core_expr(sig, seed, budget=8)
        infer_expr(genv, {}, e)


def test_generator_deterministic(sig):
    assert gen_core_expr(sig, 42, 12) == gen_core_expr(sig, 42, 12)


def test_shrink_preserves_typing(genv, sig):
    for seed in range(40):
        e = gen_core_expr(sig, seed, budget=10)
        for cand in shrink_core_expr(e):
            infer_expr(genv, {}, cand)


# -- pairing --

def _points_to_model(rng, offset, n_cells, var_prefix):
    store, heap, pure, spatial = {}, {}, [], []
    for i in range(n_cells):
        loc = offset + 2 * i
        v = rng.randint(0, 9)
        name = f"{var_prefix}{i}"
        store[name] = LocVal(loc)
        heap[loc] = IntVal(v)
        spatial.append(ssl.PointsTo(name, 0, ssl.PInt(v)))
    if n_cells == 0 and rng.random() < 0.5:
        name = f"{var_prefix}p"
        store[name] = IntVal(rng.randint(0, 9))
        pure.append(ssl.PEq(ssl.PVar(name), ssl.PInt(store[name].value)))
    return store, heap, ssl.SslAssertion.make(pure, spatial)


def test_otimes_pairing_simple():
    ma = Model({"v": IntVal(7)}, {})
    mb = Model({"v": IntVal(7), "x": LocVal(3)}, {3: IntVal(1)})
    pa = ssl.SslAssertion.make((ssl.PEq(ssl.PVar("v"), ssl.PInt(7)),), ())
    pb = ssl.SslAssertion.make((), (ssl.PointsTo("x", 0, ssl.PInt(1)),))
    assert check_otimes(ma, mb, pa, pb)


def test_otimes_two_disjoint_cells():
    ma = Model({"x": LocVal(1)}, {1: IntVal(4)})
    mb = Model({"x": LocVal(1), "y": LocVal(5)}, {5: IntVal(6)})
    pa = ssl.SslAssertion.make((), (ssl.PointsTo("x", 0, ssl.PInt(4)),))
    pb = ssl.SslAssertion.make((), (ssl.PointsTo("y", 0, ssl.PInt(6)),))
    assert check_otimes(ma, mb, pa, pb)


def test_otimes_overlap_rejected():
    ma = Model({"x": LocVal(1)}, {1: IntVal(4)})
    mb = Model({"x": LocVal(1)}, {1: IntVal(4)})
    pa = ssl.SslAssertion.make((), (ssl.PointsTo("x", 0, ssl.PInt(4)),))
    with pytest.raises(E.PreconditionViolated):
        check_otimes(ma, mb, pa, pa)


def test_otimes_store_containment_required():
    ma = Model({"v": IntVal(7)}, {})
    mb = Model({"v": IntVal(8)}, {})
    empty = ssl.SslAssertion.make((), ())
    with pytest.raises(E.PreconditionViolated):
        check_otimes(ma, mb, empty, empty)


def test_otimes_random_pairs():
    rng = random.Random(7)
    for _ in range(200):
        sa, ha, pa = _points_to_model(rng, 1, rng.randint(0, 3), "a")
        sb, hb, pb = _points_to_model(rng, 101, rng.randint(0, 3), "b")
        sb = {**sa, **sb}
        assert check_otimes(Model(sa, ha), Model(sb, hb), pa, pb)
