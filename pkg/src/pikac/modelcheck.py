"""Concrete-model satisfaction for SSL assertions and the soundness harness.

``satisfies`` checks a (store, heap) model against an assertion under a
predicate environment: points-to heaplets consume single cells, predicate
applications unfold structurally (preferring the location-to-constructor
witness table, falling back to branch-condition evaluation, and trying all
branches for existentially quantified roots), and the whole heap must be
consumed.  Existential variables introduced by unfolding are solved by
unification against cells and by propagating pure equalities.

``check_soundness`` ties the machine to the translation: it evaluates an
expression from the empty state, translates the same expression targeting
the machine's result variable, and checks the final machine model against
the translated assertion.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional, Union

from . import ssl
from . import syntax as S
from .errors import PreconditionViolated, SortMismatch, UnboundVariable
from .interp import BoolVal, ConstructorVal, IntVal, LocVal, Model, Val, eval_expr
from .translate import (
    translate_expr_core, translate_fn_def_core, translate_layout_predicate,
)
from .types import GlobalEnv


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Sat:
    def __bool__(self): return True


@dataclass(frozen=True)
class Unsat:
    reason: str

    def __bool__(self): return False


@dataclass(frozen=True)
class Unknown:
    reason: str

    def __bool__(self): return False


SatResult = Union[Sat, Unsat, Unknown]


@dataclass
class PredicateEnv:
    preds: dict
    fsstore: dict = field(default_factory=dict)   # loc -> constructor name

    def merged_with(self, other: "PredicateEnv") -> "PredicateEnv":
        preds = dict(self.preds)
        preds.update(other.preds)
        fs = dict(self.fsstore)
        fs.update(other.fsstore)
        return PredicateEnv(preds, fs)


# ---------------------------------------------------------------------------
# Pure evaluation
# ---------------------------------------------------------------------------

def _num(v: Val) -> int:
    if isinstance(v, IntVal):
        return v.value
    if isinstance(v, LocVal):
        return v.loc
    raise SortMismatch(f"expected a numeric value, found {v}")


def eval_pure(binding: dict, t: ssl.PureTerm) -> Val:
    """Evaluate a pure term to a value under a complete binding."""
    if isinstance(t, ssl.PInt):
        return IntVal(t.value)
    if isinstance(t, ssl.PBool):
        return BoolVal(t.value)
    if isinstance(t, ssl.PVar):
        if t.name not in binding:
            raise UnboundVariable(f"unbound variable {t.name} in pure term")
        return binding[t.name]
    if isinstance(t, ssl.PEq):
        lv = eval_pure(binding, t.lhs)
        rv = eval_pure(binding, t.rhs)
        if isinstance(lv, BoolVal) != isinstance(rv, BoolVal):
            raise SortMismatch(f"comparing {lv} with {rv}")
        if isinstance(lv, BoolVal):
            return BoolVal(lv.value == rv.value)
        return BoolVal(_num(lv) == _num(rv))
    if isinstance(t, ssl.PLt):
        return BoolVal(_num(eval_pure(binding, t.lhs))
                       < _num(eval_pure(binding, t.rhs)))
    if isinstance(t, ssl.PAdd):
        return IntVal(_num(eval_pure(binding, t.lhs))
                      + _num(eval_pure(binding, t.rhs)))
    if isinstance(t, ssl.PSub):
        return IntVal(_num(eval_pure(binding, t.lhs))
                      - _num(eval_pure(binding, t.rhs)))
    if isinstance(t, ssl.PMod):
        return IntVal(_num(eval_pure(binding, t.lhs))
                      % _num(eval_pure(binding, t.rhs)))
    if isinstance(t, ssl.PAnd):
        lv = eval_pure(binding, t.lhs)
        rv = eval_pure(binding, t.rhs)
        if not isinstance(lv, BoolVal) or not isinstance(rv, BoolVal):
            raise SortMismatch("conjunction of non-booleans")
        return BoolVal(lv.value and rv.value)
    if isinstance(t, ssl.PNot):
        v = eval_pure(binding, t.arg)
        if not isinstance(v, BoolVal):
            raise SortMismatch("negation of a non-boolean")
        return BoolVal(not v.value)
    if isinstance(t, ssl.PTernary):
        c = eval_pure(binding, t.cond)
        if not isinstance(c, BoolVal):
            raise SortMismatch("ternary condition is not boolean")
        return eval_pure(binding, t.then if c.value else t.els)
    raise SortMismatch(f"unknown pure term {t!r}")


def eval_pure_bool(binding: dict, t: ssl.PureTerm) -> bool:
    v = eval_pure(binding, t)
    if not isinstance(v, BoolVal):
        raise SortMismatch(f"pure term {ssl.render_pure(t)} is not boolean")
    return v.value


def _term_unknowns(t: ssl.PureTerm, binding: dict) -> set:
    return {v for v in ssl._pure_vars(t) if v not in binding}


def _try_ground(binding: dict, t: ssl.PureTerm) -> Optional[Val]:
    if _term_unknowns(t, binding):
        return None
    return eval_pure(binding, t)


def _solve_eq(binding: dict, eq: ssl.PEq) -> bool:
    """Bind a single unknown from an equality when the other side and all
    other leaves are ground.  Returns True when a binding was added."""
    for lhs, rhs in ((eq.lhs, eq.rhs), (eq.rhs, eq.lhs)):
        rv = _try_ground(binding, rhs)
        if rv is None:
            continue
        unknowns = _term_unknowns(lhs, binding)
        if len(unknowns) != 1:
            continue
        (u,) = unknowns
        if isinstance(lhs, ssl.PVar):
            binding[u] = rv
            return True
        # invert a single-occurrence unknown through +/- chains
        target = rv
        term = lhs
        ok = True
        while not isinstance(term, ssl.PVar):
            if isinstance(term, ssl.PAdd):
                a, b = term.lhs, term.rhs
            elif isinstance(term, ssl.PSub):
                a, b = term.lhs, term.rhs
            else:
                ok = False
                break
            if u in _term_unknowns(a, binding):
                other = _try_ground(binding, b)
                if other is None:
                    ok = False
                    break
                n = _num(target)
                m = _num(other)
                target = IntVal(n - m if isinstance(term, ssl.PAdd) else n + m)
                term = a
            else:
                other = _try_ground(binding, a)
                if other is None:
                    ok = False
                    break
                n = _num(target)
                m = _num(other)
                target = IntVal(n - m if isinstance(term, ssl.PAdd) else m - n)
                term = b
        if ok and isinstance(term, ssl.PVar):
            binding[u] = target
            return True
    return False


# ---------------------------------------------------------------------------
# Satisfaction
# ---------------------------------------------------------------------------

class _Checker:
    def __init__(self, model: Model, env: PredicateEnv, depth: int):
        self.cells = dict(model.heap)
        self.env = env
        self.depth = depth
        self.hit_depth = False
        self.failure = "no failure recorded"
        self._fresh = 0

    def rename_fresh(self, names) -> dict:
        out = {}
        for n in names:
            self._fresh += 1
            out[n] = f"{n}?{self._fresh}"
        return out

    def check(self, assertion: ssl.SslAssertion, binding: dict) -> SatResult:
        items = [(h, self.depth) for h in assertion.spatial]
        ok = self._search(items, list(assertion.pure), frozenset(), dict(binding))
        if ok:
            return Sat()
        if self.hit_depth:
            return Unknown("unfolding depth bound exhausted")
        return Unsat(self.failure)

    # the search returns True on the first completed path

    def _search(self, items, pures, consumed, binding) -> bool:
        binding = dict(binding)
        pures = list(pures)
        # propagate solvable equalities
        changed = True
        while changed:
            changed = False
            for p in pures:
                if isinstance(p, ssl.PEq) and _term_unknowns(p, binding):
                    if _solve_eq(binding, p):
                        changed = True
        items = list(items)
        if not items:
            return self._finish(pures, consumed, binding)

        # ground points-to first
        for i, (h, d) in enumerate(items):
            if isinstance(h, ssl.PointsTo) and h.base in binding:
                return self._match_points_to(h, i, items, pures, consumed,
                                             binding)
        # ground predicate applications next
        for i, (h, d) in enumerate(items):
            if isinstance(h, (ssl.PredApply, ssl.RoApply)):
                args_ground = all(not _term_unknowns(a, binding)
                                  for a in h.args)
                if args_ground:
                    return self._unfold(h, d, i, items, pures, consumed,
                                        binding, ground=True)
        # blocks are bookkeeping: defer until only blocks remain nonground?
        non_block = [(i, h, d) for i, (h, d) in enumerate(items)
                     if not isinstance(h, (ssl.Block, ssl.HeapEmp))]
        if not non_block:
            return self._finish_blocks(items, pures, consumed, binding)
        # backtracking: nonground points-to against candidate cells
        for i, h, d in non_block:
            if isinstance(h, ssl.PointsTo):
                unknown_base = h.base not in binding
                if unknown_base:
                    for loc in sorted(set(self.cells) - set(consumed)):
                        trial = dict(binding)
                        trial[h.base] = LocVal(loc - h.offset)
                        rest = items[:i] + items[i + 1:]
                        if self._match_points_to(h, 0, [(h, d)] + rest, pures,
                                                 consumed, trial):
                            return True
                    self.failure = (f"no cell matches "
                                    f"{ssl.render_heaplet(h)}")
                    return False
        # nonground predicate application: try all branches
        for i, h, d in non_block:
            if isinstance(h, (ssl.PredApply, ssl.RoApply)):
                return self._unfold(h, d, i, items, pures, consumed, binding,
                                    ground=False)
        for i, h, d in non_block:
            if isinstance(h, (ssl.FuncApply, ssl.TempLoc)):
                self.failure = (f"{ssl.render_heaplet(h)} has no concrete "
                                "model semantics")
                return False
        return self._finish_blocks(items, pures, consumed, binding)

    def _match_points_to(self, h, i, items, pures, consumed, binding) -> bool:
        base = binding[h.base]
        if not isinstance(base, (LocVal, IntVal)):
            self.failure = f"{h.base} is not a location"
            return False
        loc = _num(base) + h.offset
        if loc not in self.cells:
            self.failure = f"missing cell {loc} for {ssl.render_heaplet(h)}"
            return False
        if loc in consumed:
            self.failure = f"cell {loc} claimed twice"
            return False
        actual = self.cells[loc]
        unknowns = _term_unknowns(h.value, binding)
        new_pures = list(pures)
        trial = dict(binding)
        if not unknowns:
            try:
                expected = eval_pure(trial, h.value)
            except (SortMismatch, UnboundVariable) as exc:
                self.failure = str(exc)
                return False
            if isinstance(expected, BoolVal) != isinstance(actual, BoolVal):
                self.failure = f"cell {loc} sort mismatch"
                return False
            if isinstance(expected, BoolVal):
                if expected.value != actual.value:
                    self.failure = (f"cell {loc} holds {actual}, "
                                    f"expected {expected}")
                    return False
            elif _num(expected) != _num(actual):
                self.failure = (f"cell {loc} holds {actual}, expected "
                                f"{expected}")
                return False
        elif isinstance(h.value, ssl.PVar):
            trial[h.value.name] = actual
        else:
            lit = (ssl.PBool(actual.value) if isinstance(actual, BoolVal)
                   else ssl.PInt(_num(actual)))
            new_pures.append(ssl.PEq(h.value, lit))
        rest = items[:i] + items[i + 1:]
        return self._search(rest, new_pures, consumed | {loc}, trial)

    def _unfold(self, h, d, i, items, pures, consumed, binding,
                ground: bool) -> bool:
        pred = self.env.preds.get(h.name)
        if pred is None:
            self.failure = f"unknown predicate {h.name}"
            return False
        if d <= 0:
            self.hit_depth = True
            return False
        if len(h.args) != len(pred.params):
            self.failure = f"arity mismatch applying {h.name}"
            return False
        rest = items[:i] + items[i + 1:]
        branches = list(pred.branches)
        if ground:
            args = [eval_pure(binding, a) for a in h.args]
            root = None
            for (pname, sort), val in zip(pred.params, args):
                if sort == "loc":
                    root = val
                    break
            chosen = None
            if root is not None and isinstance(root, LocVal) \
                    and root.loc in self.env.fsstore:
                ctor = self.env.fsstore[root.loc]
                tagged = [b for b in branches if b.ctor == ctor]
                if tagged:
                    chosen = tagged
            if chosen is None:
                chosen = []
                param_binding = {pname: val for (pname, _), val
                                 in zip(pred.params, args)}
                for b in branches:
                    try:
                        if eval_pure_bool(param_binding, b.cond):
                            chosen.append(b)
                    except (SortMismatch, UnboundVariable):
                        chosen.append(b)
            branches = chosen
            if not branches:
                self.failure = (f"no branch of {h.name} matches "
                                f"{[str(a) for a in args]}")
                return False
        for branch in branches:
            body_vars = ssl.assertion_vars(branch.body) | ssl._pure_vars(branch.cond)
            param_names = {p for p, _ in pred.params}
            fresh = self.rename_fresh(sorted(body_vars - param_names))
            param_map = {p: a for (p, _), a in zip(pred.params, h.args)}
            new_items = list(rest)
            for bh in branch.body.spatial:
                new_items.append((_subst_heaplet(bh, fresh, param_map), d - 1))
            new_pures = list(pures)
            new_pures.append(_subst_pure(branch.cond, fresh, param_map))
            for bp in branch.body.pure:
                new_pures.append(_subst_pure(bp, fresh, param_map))
            if self._search(new_items, new_pures, consumed, binding):
                return True
        return False

    def _finish_blocks(self, items, pures, consumed, binding) -> bool:
        blocks = []
        for h, _ in items:
            if isinstance(h, ssl.HeapEmp):
                continue
            if not isinstance(h, ssl.Block):
                self.failure = f"unresolved heaplet {ssl.render_heaplet(h)}"
                return False
            if h.base not in binding:
                self.failure = f"block base {h.base} is unresolved"
                return False
            blocks.append((_num(binding[h.base]), h.size))
        return self._finish(pures, consumed, binding, blocks)

    def _finish(self, pures, consumed, binding, blocks=()) -> bool:
        leftover = set(self.cells) - set(consumed)
        if leftover:
            self.failure = f"heap cells {sorted(leftover)} are not consumed"
            return False
        for base, size in blocks:
            for loc in range(base, base + size):
                if loc not in consumed:
                    self.failure = (f"block [{base},{size}] covers cell {loc} "
                                    "claimed by no points-to")
                    return False
        # final propagation, then every conjunct must evaluate true
        binding = dict(binding)
        changed = True
        while changed:
            changed = False
            for p in pures:
                if isinstance(p, ssl.PEq) and _term_unknowns(p, binding):
                    if _solve_eq(binding, p):
                        changed = True
        ground_pures = []
        residual = []
        for p in pures:
            (residual if _term_unknowns(p, binding) else ground_pures).append(p)
        for p in ground_pures:
            try:
                if not eval_pure_bool(binding, p):
                    self.failure = f"pure conjunct {ssl.render_pure(p)} is false"
                    return False
            except (SortMismatch, UnboundVariable) as exc:
                self.failure = str(exc)
                return False
        if not residual:
            return True
        # remaining unknowns are existentially quantified and constrained
        # only by pure terms; search a small witness domain
        unknowns = sorted(set().union(*[_term_unknowns(p, binding)
                                        for p in residual]))
        if len(unknowns) > 6:
            self.failure = f"too many residual existentials: {unknowns}"
            return False
        candidates = [IntVal(0), IntVal(1), IntVal(2)]
        candidates += [LocVal(loc) for loc in sorted(self.cells)]
        for v in self.cells.values():
            if isinstance(v, IntVal) and all(_num(c) != v.value
                                             for c in candidates):
                candidates.append(v)

        def assign(idx: int, bnd: dict) -> bool:
            changed = True
            while changed:
                changed = False
                for p in residual:
                    if isinstance(p, ssl.PEq) and _term_unknowns(p, bnd):
                        if _solve_eq(bnd, p):
                            changed = True
            for p in residual:
                if not _term_unknowns(p, bnd):
                    try:
                        if not eval_pure_bool(bnd, p):
                            return False
                    except (SortMismatch, UnboundVariable):
                        return False
            todo = [u for u in unknowns if u not in bnd]
            if not todo:
                return True
            u = todo[0]
            for cand in candidates:
                trial = dict(bnd)
                trial[u] = cand
                if assign(idx + 1, trial):
                    return True
            return False

        if assign(0, dict(binding)):
            return True
        self.failure = (f"no witness for residual existentials {unknowns}")
        return False


def _subst_pure(t: ssl.PureTerm, fresh: dict, params: dict) -> ssl.PureTerm:
    if isinstance(t, ssl.PVar):
        if t.name in params:
            return params[t.name]
        return ssl.PVar(fresh.get(t.name, t.name))
    if isinstance(t, (ssl.PInt, ssl.PBool)):
        return t
    if isinstance(t, ssl.PNot):
        return ssl.PNot(_subst_pure(t.arg, fresh, params))
    if isinstance(t, ssl.PTernary):
        return ssl.PTernary(_subst_pure(t.cond, fresh, params),
                            _subst_pure(t.then, fresh, params),
                            _subst_pure(t.els, fresh, params))
    return type(t)(_subst_pure(t.lhs, fresh, params),
                   _subst_pure(t.rhs, fresh, params))


def _subst_heaplet(h: ssl.Heaplet, fresh: dict, params: dict) -> ssl.Heaplet:
    def var(name: str) -> str:
        if name in params:
            term = params[name]
            if isinstance(term, ssl.PVar):
                return term.name
            raise SortMismatch(f"location parameter bound to {term}")
        return fresh.get(name, name)

    if isinstance(h, ssl.PointsTo):
        return ssl.PointsTo(var(h.base), h.offset,
                            _subst_pure(h.value, fresh, params))
    if isinstance(h, ssl.Block):
        return ssl.Block(var(h.base), h.size)
    if isinstance(h, ssl.PredApply):
        return ssl.PredApply(h.name, tuple(_subst_pure(a, fresh, params)
                                           for a in h.args), ctor=h.ctor)
    if isinstance(h, ssl.RoApply):
        return ssl.RoApply(h.name, tuple(_subst_pure(a, fresh, params)
                                         for a in h.args))
    if isinstance(h, ssl.FuncApply):
        return ssl.FuncApply(h.name, tuple(_subst_pure(a, fresh, params)
                                           for a in h.args))
    if isinstance(h, ssl.TempLoc):
        return ssl.TempLoc(var(h.var))
    return h


def satisfies(model: Model, assertion: ssl.SslAssertion, env: PredicateEnv,
              depth: int = 64) -> SatResult:
    """Whole-heap satisfaction: Sat iff the heap partitions across the
    spatial conjuncts and the pure part evaluates true."""
    checker = _Checker(model, env, depth)
    return checker.check(assertion, dict(model.store))


# ---------------------------------------------------------------------------
# Predicate environments for the harness
# ---------------------------------------------------------------------------

def _instantiations_in(e: S.Expr, acc: set):
    if isinstance(e, S.Instantiate):
        if len(e.arg_layouts) == 1 and isinstance(e.arg_layouts[0],
                                                  S.NamedLayout):
            acc.add((e.fn, e.arg_layouts[0].name,
                     e.result_layout.name
                     if isinstance(e.result_layout, S.NamedLayout) else None))
        for a in e.args:
            _instantiations_in(a, acc)
    elif isinstance(e, (S.ConstructorApp, S.App)):
        for a in e.args:
            _instantiations_in(a, acc)
    elif isinstance(e, S.BinOp):
        _instantiations_in(e.lhs, acc)
        _instantiations_in(e.rhs, acc)
    elif isinstance(e, S.Not):
        _instantiations_in(e.arg, acc)
    elif isinstance(e, S.Lower):
        _instantiations_in(e.arg, acc)
    elif isinstance(e, (S.Let, S.IfThenElse)):
        for sub in ([e.bound, e.body] if isinstance(e, S.Let)
                    else [e.cond, e.then, e.els]):
            _instantiations_in(sub, acc)


def build_predicate_env(genv: GlobalEnv, exprs=(), fsstore=None) -> PredicateEnv:
    """Layout predicates for every layout plus function predicates for every
    instantiation reachable from the given expressions."""
    preds = {}
    for layout in genv.layouts.values():
        p = translate_layout_predicate(layout)
        preds[p.name] = p
    work = set()
    for e in exprs:
        _instantiations_in(e, work)
    done = set()
    while work:
        fn, arg_layout_name, result_name = work.pop()
        key = (fn, arg_layout_name, result_name)
        if key in done or fn not in genv.fn_defs:
            continue
        done.add(key)
        result_ref = (S.NamedLayout(result_name) if result_name
                      else S.IntLayout())
        pred = translate_fn_def_core(genv, fn, genv.layouts[arg_layout_name],
                                     result_ref)
        preds[pred.name] = pred
        for case in genv.fn_defs[fn]:
            for _, body in case.guarded_bodies:
                _instantiations_in(body, work)
    fs = {}
    for loc, val in (fsstore or {}).items():
        if isinstance(val, ConstructorVal):
            fs[loc] = val.name
    return PredicateEnv(preds, fs)


# ---------------------------------------------------------------------------
# Soundness harness
# ---------------------------------------------------------------------------

@dataclass
class SoundnessReport:
    result: SatResult
    expr: S.Expr
    model: Model
    assertion: ssl.SslAssertion
    trace: str


def check_soundness(genv: GlobalEnv, e: S.Expr, depth: int = 64) -> SoundnessReport:
    val, store, heap, fs, r = eval_expr(genv, e)
    core = translate_expr_core(genv, e, free_vars=(), result_var=r)
    assertion = core.assertion()
    env = build_predicate_env(genv, exprs=[e], fsstore=fs)
    model = Model(store, heap)
    result = satisfies(model, assertion, env, depth)
    trace = ""
    if not isinstance(result, Sat):
        trace = "\n".join([
            f"expression: {S.render_expr(e)}",
            f"value: {val}",
            f"result variable: {r}",
            f"assertion: {ssl.render_assertion(assertion)}",
            model.render(),
            f"verdict: {result}",
        ])
    return SoundnessReport(result, e, model, assertion, trace)


# ---------------------------------------------------------------------------
# Core expression generation
# ---------------------------------------------------------------------------

@dataclass
class CoreSignature:
    """The pool the generator draws from: layouts by ADT plus the
    single-argument core functions grouped by (argument ADT, result ADT)."""
    genv: GlobalEnv
    layout_of: dict
    pool: list                      # [(fn, arg layout, result layout)]

    @staticmethod
    def from_env(genv: GlobalEnv) -> "CoreSignature":
        layout_of = {}
        for layout in genv.layouts.values():
            layout_of.setdefault(layout.adt, layout.name)
        pool = []
        for fn, cases in genv.fn_defs.items():
            if not all(len(c.patterns) == 1 and c.patterns[0].ctor is not None
                       and len(c.guarded_bodies) == 1
                       and c.guarded_bodies[0][0] is None
                       for c in cases):
                continue
            sig = genv.fn_sigs.get(fn)
            if sig is None or not isinstance(sig, S.TFn):
                continue
            arg, res = sig.arg, sig.res
            if isinstance(arg, S.TName) and isinstance(res, S.TName) \
                    and arg.name in layout_of and res.name in layout_of:
                pool.append((fn, layout_of[arg.name], layout_of[res.name]))
        return CoreSignature(genv, layout_of, sorted(pool))


def gen_core_expr(sig: CoreSignature, seed: int, budget: int) -> S.Expr:
    """A closed, well-typed core expression; deterministic in the seed."""
    rng = random.Random(seed)
    adts = sorted(sig.layout_of)
    kind = rng.choice(["int"] + ["adt"] * 3) if adts else "int"
    if kind == "int" or budget <= 1:
        return _gen_int(rng, budget)
    adt = rng.choice(adts)
    return _gen_adt(sig, rng, adt, budget)


def _gen_int(rng, budget) -> S.Expr:
    if budget <= 1 or rng.random() < 0.4:
        return S.IntLit(rng.randint(-3, 9))
    left = budget // 2
    return S.BinOp("+", _gen_int(rng, left), _gen_int(rng, budget - left))


def _gen_adt(sig: CoreSignature, rng, adt: str, budget: int) -> S.Expr:
    layout_name = sig.layout_of[adt]
    fns = [p for p in sig.pool if sig.genv.layouts[p[2]].adt == adt]
    if budget > 2 and fns and rng.random() < 0.5:
        fn, arg_layout, res_layout = rng.choice(fns)
        arg_adt = sig.genv.layouts[arg_layout].adt
        inner_fns = [p for p in sig.pool
                     if sig.genv.layouts[p[2]].name == arg_layout]
        if budget > 5 and inner_fns and rng.random() < 0.35:
            arg = _gen_adt(sig, rng, arg_adt, budget - 2)
            if not isinstance(arg, S.Instantiate):
                arg = S.Lower(S.NamedLayout(arg_layout), arg) \
                    if isinstance(arg, S.ConstructorApp) else arg
        else:
            arg = _gen_lower(sig, rng, arg_layout, budget - 2)
        return S.Instantiate((S.NamedLayout(arg_layout),),
                             S.NamedLayout(res_layout), fn, [arg])
    return _gen_lower(sig, rng, layout_name, budget)


def _gen_lower(sig: CoreSignature, rng, layout_name: str, budget: int) -> S.Expr:
    layout = sig.genv.layouts[layout_name]
    empties = [p for p, hs in layout.branches
               if all(isinstance(h, S.HEmp) for h in hs)]
    non_empties = [p for p, hs in layout.branches
                   if not all(isinstance(h, S.HEmp) for h in hs)]
    if budget <= 2 or not non_empties or (empties and rng.random() < 0.25):
        pat = rng.choice(empties or non_empties)
    else:
        pat = rng.choice(non_empties)
    ctor = pat.ctor
    field_tys, _ = sig.genv.ctors[ctor]
    applies = {h.arg: h.layout for h in layout.branch_for(ctor)
               if isinstance(h, S.HApply)}
    args = []
    share = max(1, (budget - 1) // max(1, len(field_tys))) if field_tys else 0
    for var, fty in zip(pat.vars, field_tys):
        if isinstance(fty, S.TName):
            sub_layout = applies.get(var, sig.layout_of.get(fty.name))
            args.append(_gen_lower(sig, rng, sub_layout, share))
        else:
            args.append(_gen_int(rng, min(share, 3)))
    return S.Lower(S.NamedLayout(layout_name),
                   S.ConstructorApp(ctor, args))


def shrink_core_expr(e: S.Expr) -> list:
    """Structure-preserving shrink candidates, all well-typed by
    construction."""
    out = []
    if isinstance(e, S.BinOp):
        out += [e.lhs, e.rhs]
        for c in shrink_core_expr(e.lhs):
            out.append(S.BinOp(e.op, c, e.rhs))
        for c in shrink_core_expr(e.rhs):
            out.append(S.BinOp(e.op, e.lhs, c))
    if isinstance(e, S.IntLit) and e.value != 0:
        out.append(S.IntLit(0))
    if isinstance(e, S.Instantiate):
        for c in shrink_core_expr(e.args[0]):
            out.append(S.Instantiate(e.arg_layouts, e.result_layout, e.fn, [c]))
        arg = e.args[0]
        if isinstance(arg, (S.Lower, S.Instantiate)):
            res = e.result_layout
            if isinstance(arg, S.Lower) and arg.layout == res:
                out.append(arg)
            if isinstance(arg, S.Instantiate) and arg.result_layout == res:
                out.append(arg)
    if isinstance(e, S.Lower) and isinstance(e.arg, S.ConstructorApp):
        for i, a in enumerate(e.arg.args):
            for c in shrink_core_expr(a):
                new_args = list(e.arg.args)
                new_args[i] = c
                out.append(S.Lower(e.layout,
                                   S.ConstructorApp(e.arg.name, new_args)))
    return out


# ---------------------------------------------------------------------------
# Assertion pairing
# ---------------------------------------------------------------------------

def check_otimes(model_a: Model, model_b: Model, pa: ssl.SslAssertion,
                 pb: ssl.SslAssertion, env: Optional[PredicateEnv] = None,
                 depth: int = 64) -> bool:
    """Check the pairing property: two compatible satisfying models combine
    into a model of the conjoined assertion."""
    env = env or PredicateEnv({})
    for k, v in model_a.store.items():
        if k not in model_b.store or model_b.store[k] != v:
            raise PreconditionViolated(
                f"store of the first model is not contained in the second "
                f"({k})")
    if set(model_a.heap) & set(model_b.heap):
        raise PreconditionViolated("heaps overlap")
    if not isinstance(satisfies(model_a, pa, env, depth), Sat):
        raise PreconditionViolated("first model does not satisfy its assertion")
    if not isinstance(satisfies(model_b, pb, env, depth), Sat):
        raise PreconditionViolated("second model does not satisfy its assertion")
    combined = Model(dict(model_b.store),
                     {**model_a.heap, **model_b.heap})
    return isinstance(satisfies(combined, ssl.conj_otimes(pa, pb), env, depth),
                      Sat)
