"""Translation to SSL: the production pipeline and the formal core.

The production pipeline turns an elaborated function and its directive into
an inductive predicate (plus auxiliary layout / read-only / copy
predicates and a synthesis goal) through the staged passes:

  2. empty-branch constructors become null constraints,
  3. pattern matches are unfolded into layout heaplets,
  4. copy predicate applications are inserted for returned arguments,
  5. lets become equality constraints,
  6. constructor applications and calls are unfolded into heaplets,
  7. branch conditions are generated and the predicate is assembled.

``translate_expr_core`` / ``translate_fn_def_core`` implement the small
formal translation used by the soundness harness: every rule is a function
of the expression and the seed variable set, so translation is total and
deterministic on the restricted subset.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from . import syntax as S
from . import ssl
from .errors import (
    AmbiguousBranches, NonConstructibleBody, NoSuchBranch, UnboundVariable,
    UnsupportedConstruct,
)
from .types import (
    ElabArg, ElabFn, GlobalEnv, ResolvedLayout, TypedProgram,
    elaborate_fn_at, resolve_layout_ref, uncurry,
)


# ---------------------------------------------------------------------------
# Branch discrimination
# ---------------------------------------------------------------------------

def _branch_is_empty(heaplets) -> bool:
    return all(isinstance(h, S.HEmp) for h in heaplets)


def cond(layout: S.LayoutDef, ctor: str, var: Optional[str] = None,
         allow_guarded: bool = False) -> ssl.PureTerm:
    """The Boolean discriminator for a layout branch under the null
    encoding: empty branches test the root against 0, non-empty branches
    test it against non-0.  Raises when the layout has a branch set the
    encoding cannot discriminate."""
    heaplets = layout.branch_for(ctor)
    if heaplets is None:
        raise NoSuchBranch(f"layout {layout.name} has no branch for {ctor}")
    var = var or layout.ssl_params[0]
    if len(layout.branches) == 1:
        return ssl.TRUE
    empties = [p.ctor for p, hs in layout.branches if _branch_is_empty(hs)]
    non_empties = [p.ctor for p, hs in layout.branches if not _branch_is_empty(hs)]
    if len(empties) > 1 or (len(non_empties) > 1 and not allow_guarded):
        raise AmbiguousBranches(
            f"layout {layout.name} has indistinguishable branches "
            f"({', '.join(empties + non_empties)})")
    root_null = ssl.PEq(ssl.PVar(var), ssl.PInt(0))
    if _branch_is_empty(heaplets):
        return root_null
    return ssl.PNot(root_null)


def layout_cell_count(layout: S.LayoutDef, ctor: str) -> int:
    offsets = [h.offset for h in layout.branch_for(ctor)
               if isinstance(h, S.HPointsTo)]
    return max(offsets) + 1 if offsets else 0


# ---------------------------------------------------------------------------
# Layout, read-only, and copy predicates
# ---------------------------------------------------------------------------

def translate_layout_predicate(layout: S.LayoutDef,
                               name: Optional[str] = None,
                               ro: bool = False) -> ssl.PredicateDef:
    """A layout as a data-structure predicate: one branch per constructor,
    destructuring heaplets plus a block and recursive applications."""
    pred_name = name or (f"ro_{layout.name}" if ro else layout.name)
    root = layout.ssl_params[0]
    branches = []
    for pat, heaplets in layout.branches:
        c = cond(layout, pat.ctor)
        spatial = []
        for h in heaplets:
            if isinstance(h, S.HPointsTo):
                spatial.append(ssl.PointsTo(h.base, h.offset, ssl.PVar(h.payload)))
        n = layout_cell_count(layout, pat.ctor)
        if n:
            spatial.append(ssl.Block(root, n))
        for h in heaplets:
            if isinstance(h, S.HApply):
                target = f"ro_{h.layout}" if ro else h.layout
                cls = ssl.RoApply if ro else ssl.PredApply
                spatial.append(cls(target, (ssl.PVar(h.arg),)))
        branches.append(ssl.Branch(c, ssl.SslAssertion.make((), spatial),
                                   ctor=pat.ctor))
    return ssl.PredicateDef(pred_name, ((root, "loc"),), tuple(branches))


def copy_predicate(env: GlobalEnv, layout: S.LayoutDef,
                   registry: dict) -> ssl.PredicateDef:
    """A structural deep-copy predicate ``<Layout>__copy(src, dst)``."""
    name = f"{layout.name}__copy"
    if name in registry:
        return registry[name]
    branches = []
    for pat, heaplets in layout.branches:
        c = cond(layout, pat.ctor, var="src")
        if _branch_is_empty(heaplets):
            body = ssl.SslAssertion.make(
                (ssl.PEq(ssl.PVar("dst"), ssl.PInt(0)),), ())
            branches.append(ssl.Branch(c, body, ctor=pat.ctor))
            continue
        spatial = []
        dst_sub = {}
        applies = {h.arg: h.layout for h in heaplets if isinstance(h, S.HApply)}
        for h in heaplets:
            if isinstance(h, S.HPointsTo):
                spatial.append(ssl.PointsTo("src", h.offset, ssl.PVar(h.payload)))
        n = layout_cell_count(layout, pat.ctor)
        spatial.append(ssl.Block("src", n))
        for h in heaplets:
            if isinstance(h, S.HPointsTo):
                if h.payload in applies:
                    copy_var = f"{h.payload}1"
                    dst_sub[h.payload] = copy_var
                    spatial.append(ssl.PointsTo("dst", h.offset,
                                                ssl.PVar(copy_var)))
                else:
                    spatial.append(ssl.PointsTo("dst", h.offset,
                                                ssl.PVar(h.payload)))
        spatial.append(ssl.Block("dst", n))
        for var, lname in applies.items():
            sub_layout = env.layouts[lname]
            sub_name = f"{sub_layout.name}__copy"
            if sub_name not in registry:
                registry[sub_name] = None      # reserve against recursion
                registry[sub_name] = copy_predicate(env, sub_layout, registry)
            spatial.append(ssl.FuncApply(sub_name,
                                         (ssl.PVar(var), ssl.PVar(dst_sub[var]))))
        branches.append(ssl.Branch(c, ssl.SslAssertion.make((), spatial),
                                   ctor=pat.ctor))
    pred = ssl.PredicateDef(name, (("src", "loc"), ("dst", "loc")),
                            tuple(branches))
    registry[name] = pred
    return pred


# ---------------------------------------------------------------------------
# Name mangling
# ---------------------------------------------------------------------------

def mangle(fn: str, arg_layouts, result_layout: ResolvedLayout) -> str:
    tags = [result_layout.tag(result=True)] + [a.tag() for a in arg_layouts]
    return "__".join([fn] + tags)


# ---------------------------------------------------------------------------
# Core translation (restricted subset)
# ---------------------------------------------------------------------------

@dataclass
class CoreTranslationResult:
    pure: tuple                 # conjuncts
    spatial: tuple
    used_vars: frozenset
    result_var: str

    @property
    def pure_term(self) -> ssl.PureTerm:
        return ssl.pand_all(self.pure)

    def assertion(self) -> ssl.SslAssertion:
        return ssl.SslAssertion.make(self.pure, self.spatial)


class _CoreTx:
    def __init__(self, env: GlobalEnv, seed_vars):
        self.env = env
        self.seed = frozenset(seed_vars)
        self.used = set(seed_vars)
        self._n = 0

    def fresh(self, loc: bool) -> str:
        while True:
            self._n += 1
            name = (f"x{self._n}" if loc else f"v{self._n}")
            if name not in self.used:
                self.used.add(name)
                return name

    def adt_layout(self, ref: S.LayoutRef, span=None) -> ResolvedLayout:
        resolved = resolve_layout_ref(self.env, ref, span)
        if not resolved.is_adt:
            raise UnsupportedConstruct("base-type layout in core translation",
                                       span)
        return resolved

    def tx(self, e: S.Expr):
        """Returns (pure conjuncts, spatial heaplets, result var)."""
        if isinstance(e, S.IntLit):
            v = self.fresh(loc=False)
            return [ssl.PEq(ssl.PVar(v), ssl.PInt(e.value))], [], v
        if isinstance(e, S.BoolLit):
            v = self.fresh(loc=False)
            return [ssl.PEq(ssl.PVar(v), ssl.PBool(e.value))], [], v
        if isinstance(e, S.Var):
            self.used.add(e.name)
            return [], [], e.name
        if isinstance(e, S.BinOp) and e.op == "+":
            p1, s1, v1 = self.tx(e.lhs)
            p2, s2, v2 = self.tx(e.rhs)
            v = self.fresh(loc=False)
            eq = ssl.PEq(ssl.PVar(v), ssl.PAdd(ssl.PVar(v1), ssl.PVar(v2)))
            return [eq] + p1 + p2, s1 + s2, v
        if isinstance(e, S.Lower):
            resolved = self.adt_layout(e.layout, e.span)
            arg = e.arg
            if isinstance(arg, S.ConstructorApp):
                return self.tx_lower_ctor(resolved.layout, arg)
            if isinstance(arg, S.Var):
                self.used.add(arg.name)
                if arg.name in self.seed:
                    pred = ssl.PredApply(resolved.layout.name,
                                         (ssl.PVar(arg.name),))
                    return [], [pred], arg.name
                # structure already described where the variable was bound
                return [], [], arg.name
            if isinstance(arg, S.Instantiate):
                return self.tx(arg)
            raise UnsupportedConstruct(
                f"cannot lower {type(arg).__name__} in the core subset", e.span)
        if isinstance(e, S.Instantiate):
            return self.tx_instantiate(e)
        raise UnsupportedConstruct(
            f"{type(e).__name__} is outside the core subset",
            getattr(e, "span", None))

    def tx_lower_ctor(self, layout: S.LayoutDef, ctor: S.ConstructorApp):
        branch = layout.branch_for(ctor.name)
        pat = layout.branch_pattern(ctor.name)
        if branch is None:
            raise NoSuchBranch(
                f"layout {layout.name} has no branch for {ctor.name}",
                ctor.span)
        pures, spatials, vals = [], [], {}
        for var, sub in zip(pat.vars, ctor.args):
            p, s, v = self.tx(sub)
            pures += p
            spatials += s
            vals[var] = v
        root = self.fresh(loc=True)
        out = []
        for h in branch:
            if isinstance(h, S.HPointsTo):
                out.append(ssl.PointsTo(root, h.offset,
                                        ssl.PVar(vals[h.payload])))
            elif isinstance(h, S.HApply):
                v = vals.get(h.arg)
                if v is not None and v in self.seed:
                    out.append(ssl.PredApply(h.layout, (ssl.PVar(v),)))
        return pures, out + spatials, root

    def tx_instantiate(self, e: S.Instantiate):
        if len(e.args) != 1 or len(e.arg_layouts) != 1:
            raise UnsupportedConstruct(
                "core instantiation is single-argument", e.span)
        arg_layout = self.adt_layout(e.arg_layouts[0], e.span)
        res_layout = resolve_layout_ref(self.env, e.result_layout, e.span)
        arg = e.args[0]
        if isinstance(arg, S.Lower):
            inner = arg.arg
            if isinstance(inner, (S.ConstructorApp, S.Var)):
                arg = inner
        if isinstance(arg, S.Var):
            self.used.add(arg.name)
            r = self.fresh(loc=res_layout.is_adt or res_layout.kind == "ptr")
            pred = ssl.PredApply(self._pred_name(e.fn, arg_layout, res_layout),
                                 (ssl.PVar(arg.name), ssl.PVar(r)))
            return [], [pred], r
        if isinstance(arg, S.ConstructorApp):
            return self._inst_ctor(e.fn, arg_layout, res_layout, arg, e.span)
        if isinstance(arg, S.Instantiate):
            p1, s1, r1 = self.tx(arg)
            r2 = self.fresh(loc=res_layout.is_adt or res_layout.kind == "ptr")
            pred = ssl.PredApply(self._pred_name(e.fn, arg_layout, res_layout),
                                 (ssl.PVar(r1), ssl.PVar(r2)))
            return p1, s1 + [pred], r2
        raise UnsupportedConstruct(
            f"cannot instantiate on {type(arg).__name__}", e.span)

    def _pred_name(self, fn, arg_layout, res_layout) -> str:
        return mangle(fn, [arg_layout], res_layout)

    def _inst_ctor(self, fn, arg_layout, res_layout, ctor: S.ConstructorApp,
                   span):
        cases = self.env.fn_defs.get(fn)
        if not cases:
            raise UnboundVariable(f"unknown function {fn}", span,
                                  rule="T-FN-GLOBAL")
        case = None
        for c in cases:
            if len(c.patterns) == 1 and c.patterns[0].ctor == ctor.name:
                case = c
                break
        if case is None:
            raise NoSuchBranch(f"{fn} has no case for {ctor.name}", span)
        if len(case.guarded_bodies) != 1 or case.guarded_bodies[0][0] is not None:
            raise UnsupportedConstruct(f"{fn} uses guards", span)
        pures, spatials, vals = [], [], []
        for sub in ctor.args:
            p, s, v = self.tx(sub)
            pures += p
            spatials += s
            vals.append(v)
        sub_map = dict(zip(case.patterns[0].vars, vals))
        body = _subst_expr_vars(case.guarded_bodies[0][1], sub_map)
        if isinstance(body, S.ConstructorApp):
            body = S.Lower(S.NamedLayout(res_layout.layout.name)
                           if res_layout.is_adt else S.IntLayout(), body)
        p, s, r = self.tx(body)
        return p + pures, s + spatials, r


def _subst_expr_vars(e: S.Expr, sub: dict) -> S.Expr:
    if isinstance(e, S.Var):
        return S.Var(sub.get(e.name, e.name), span=e.span)
    if isinstance(e, (S.IntLit, S.BoolLit)):
        return e
    if isinstance(e, S.BinOp):
        return S.BinOp(e.op, _subst_expr_vars(e.lhs, sub),
                       _subst_expr_vars(e.rhs, sub), span=e.span)
    if isinstance(e, S.ConstructorApp):
        return S.ConstructorApp(e.name, [_subst_expr_vars(a, sub)
                                         for a in e.args], span=e.span)
    if isinstance(e, S.Lower):
        return S.Lower(e.layout, _subst_expr_vars(e.arg, sub), span=e.span)
    if isinstance(e, S.Instantiate):
        return S.Instantiate(e.arg_layouts, e.result_layout, e.fn,
                             [_subst_expr_vars(a, sub) for a in e.args],
                             span=e.span)
    raise UnsupportedConstruct(f"{type(e).__name__} in core substitution")


def translate_expr_core(env: GlobalEnv, e: S.Expr, free_vars=(),
                        result_var: Optional[str] = None) -> CoreTranslationResult:
    """Translate a core expression relative to the seed variable set.

    ``result_var``, when given, renames the naturally chosen result
    variable (a bijective rename of one fresh name)."""
    tx = _CoreTx(env, free_vars)
    if result_var is not None:
        tx.used.add(result_var)
    pure, spatial, r = tx.tx(e)
    if result_var is not None and r != result_var:
        if r in tx.seed:
            raise UnsupportedConstruct(
                "cannot retarget a seed variable result")
        ren = {r: result_var}
        pure = [_rename_pure(p, ren) for p in pure]
        spatial = [_rename_heaplet(h, ren) for h in spatial]
        r = result_var
    return CoreTranslationResult(tuple(pure), tuple(spatial),
                                 frozenset(tx.used), r)


def _rename_pure(t: ssl.PureTerm, ren: dict) -> ssl.PureTerm:
    if isinstance(t, ssl.PVar):
        return ssl.PVar(ren.get(t.name, t.name))
    if isinstance(t, (ssl.PInt, ssl.PBool)):
        return t
    if isinstance(t, ssl.PNot):
        return ssl.PNot(_rename_pure(t.arg, ren))
    if isinstance(t, ssl.PTernary):
        return ssl.PTernary(_rename_pure(t.cond, ren),
                            _rename_pure(t.then, ren),
                            _rename_pure(t.els, ren))
    return type(t)(_rename_pure(t.lhs, ren), _rename_pure(t.rhs, ren))


def _rename_heaplet(h: ssl.Heaplet, ren: dict) -> ssl.Heaplet:
    if isinstance(h, ssl.PointsTo):
        return ssl.PointsTo(ren.get(h.base, h.base), h.offset,
                            _rename_pure(h.value, ren))
    if isinstance(h, ssl.Block):
        return ssl.Block(ren.get(h.base, h.base), h.size)
    if isinstance(h, ssl.PredApply):
        return ssl.PredApply(h.name, tuple(_rename_pure(a, ren)
                                           for a in h.args), ctor=h.ctor)
    if isinstance(h, ssl.FuncApply):
        return ssl.FuncApply(h.name, tuple(_rename_pure(a, ren)
                                           for a in h.args))
    if isinstance(h, ssl.RoApply):
        return ssl.RoApply(h.name, tuple(_rename_pure(a, ren) for a in h.args))
    if isinstance(h, ssl.TempLoc):
        return ssl.TempLoc(ren.get(h.var, h.var))
    return h


def translate_fn_def_core(env: GlobalEnv, fn: str, arg_layout: S.LayoutDef,
                          result_ref: S.LayoutRef) -> ssl.PredicateDef:
    """The function-definition translation: one predicate branch per case,
    discriminated by the layout condition on the argument root."""
    cases = env.fn_defs.get(fn)
    if not cases:
        raise UnboundVariable(f"unknown function {fn}", rule="T-FN-GLOBAL")
    res_layout = resolve_layout_ref(env, result_ref)
    a_res = ResolvedLayout("adt", arg_layout, "readonly")
    x = arg_layout.ssl_params[0]
    r = "r" if x != "r" else "r0"
    branches = []
    for case in cases:
        if len(case.patterns) != 1 or case.patterns[0].ctor is None:
            raise UnsupportedConstruct(
                f"{fn} is not a single-argument pattern-matching function")
        ctor = case.patterns[0].ctor
        c = cond(arg_layout, ctor, var=x)
        params = [f"p{i + 1}" for i in range(len(case.patterns[0].vars))]
        call = S.Instantiate(
            (S.NamedLayout(arg_layout.name),), result_ref, fn,
            [S.ConstructorApp(ctor, [S.Var(p) for p in params])])
        tx = _CoreTx(env, ())
        tx.used.update([x, r] + params)
        pure, spatial, rv = tx.tx(call)
        if rv != r:
            ren = {rv: r}
            pure = [_rename_pure(p, ren) for p in pure]
            spatial = [_rename_heaplet(h, ren) for h in spatial]
        branches.append(ssl.Branch(c, ssl.SslAssertion.make(pure, spatial),
                                   ctor=ctor))
    name = mangle(fn, [a_res], replace(res_layout, mode="mutable")
                  if res_layout.is_adt else res_layout)
    return ssl.PredicateDef(name, ((x, "loc"), (r, res_layout.sort)),
                            tuple(branches))


# ---------------------------------------------------------------------------
# Production pipeline
# ---------------------------------------------------------------------------

@dataclass
class _NullPtr:
    """Stage-2 marker: an empty-branch constructor value, encoded as 0."""
    span: object = None


@dataclass
class _CopyCall:
    """Stage-4 marker: result produced by copying an argument structure."""
    src: str
    layout: S.LayoutDef
    span: object = None


@dataclass
class _Arm:
    args: list
    guard: Optional[S.Expr]
    lets: list                      # [(binder, bound expr)] in order
    body: S.Expr
    result_name: str
    result_layout: ResolvedLayout
    destructure: list = field(default_factory=list)   # spatial heaplets
    ro_needed: set = field(default_factory=set)
    copy_needed: set = field(default_factory=set)
    pure: list = field(default_factory=list)
    calls: list = field(default_factory=list)
    result_cells: list = field(default_factory=list)
    temps: list = field(default_factory=list)
    guard_term: Optional[ssl.PureTerm] = None
    cond: ssl.PureTerm = ssl.TRUE


@dataclass
class CompileResult:
    name: str
    predicate: ssl.PredicateDef
    layout_preds: list
    ro_preds: list
    copy_preds: list
    extra_preds: list
    goal: ssl.GoalSpec

    def all_predicates(self) -> list:
        return (self.layout_preds + self.ro_preds + self.copy_preds
                + self.extra_preds + [self.predicate])

    def render(self, with_goal: bool = False) -> str:
        parts = [ssl.emit_predicate(p) for p in self.all_predicates()]
        if with_goal:
            parts.append(ssl.emit_goal_spec(self.goal))
        return "\n".join(parts)


def _expr_vars(e: Optional[S.Expr]) -> set:
    if e is None:
        return set()
    if isinstance(e, S.Var):
        return {e.name}
    if isinstance(e, (S.IntLit, S.BoolLit, _NullPtr)):
        return set()
    if isinstance(e, S.Addr):
        return {e.var}
    if isinstance(e, S.Not):
        return _expr_vars(e.arg)
    if isinstance(e, S.BinOp):
        return _expr_vars(e.lhs) | _expr_vars(e.rhs)
    if isinstance(e, S.IfThenElse):
        return _expr_vars(e.cond) | _expr_vars(e.then) | _expr_vars(e.els)
    if isinstance(e, S.Let):
        return _expr_vars(e.bound) | (_expr_vars(e.body) - {e.name})
    if isinstance(e, (S.ConstructorApp, S.App, S.Instantiate)):
        out = set()
        for a in e.args:
            out |= _expr_vars(a)
        return out
    if isinstance(e, S.Lower):
        return _expr_vars(e.arg)
    if isinstance(e, _CopyCall):
        return {e.src}
    return set()


def _direct_call_args(e: Optional[S.Expr], fn: str, recursive: bool) -> set:
    """Variables passed directly as arguments to calls; ``recursive``
    selects self-calls, otherwise calls of other functions."""
    out = set()
    if e is None:
        return out
    if isinstance(e, S.Instantiate):
        if (e.fn == fn) == recursive:
            for a in e.args:
                if isinstance(a, S.Var):
                    out.add(a.name)
        for a in e.args:
            out |= _direct_call_args(a, fn, recursive)
        return out
    if isinstance(e, (S.ConstructorApp, S.App)):
        for a in e.args:
            out |= _direct_call_args(a, fn, recursive)
        return out
    if isinstance(e, S.BinOp):
        return (_direct_call_args(e.lhs, fn, recursive)
                | _direct_call_args(e.rhs, fn, recursive))
    if isinstance(e, (S.Not,)):
        return _direct_call_args(e.arg, fn, recursive)
    if isinstance(e, S.Lower):
        return _direct_call_args(e.arg, fn, recursive)
    if isinstance(e, S.IfThenElse):
        return (_direct_call_args(e.cond, fn, recursive)
                | _direct_call_args(e.then, fn, recursive)
                | _direct_call_args(e.els, fn, recursive))
    if isinstance(e, S.Let):
        return (_direct_call_args(e.bound, fn, recursive)
                | _direct_call_args(e.body, fn, recursive))
    return out


class _FnTranslator:
    """Translates one elaborated function; shared fresh-name counters."""

    def __init__(self, prog: TypedProgram, elab: ElabFn, registry=None):
        self.prog = prog
        self.env = prog.env
        self.elab = elab
        self.fn = elab.name
        self.counter = elab.fresh_base
        self.temp_counter = 0
        self.pred_name = mangle(elab.name, elab.arg_layouts, elab.result_layout)
        self.ro_layouts: set = set()
        self.copy_layouts: set = set()
        self.extra_fns: dict = registry if registry is not None else {}
        self.arms = [
            _Arm(case.args, case.guard, [], case.body, case.result_name,
                 case.result_layout)
            for case in elab.cases
        ]

    # -- stage 2 --

    def stage2(self):
        for arm in self.arms:
            arm.body = self._null_empty(arm.body)

    def _null_empty(self, e: S.Expr) -> S.Expr:
        if isinstance(e, S.Lower) and isinstance(e.arg, S.ConstructorApp):
            resolved = resolve_layout_ref(self.env, e.layout)
            if resolved.is_adt:
                branch = resolved.layout.branch_for(e.arg.name)
                if branch is not None and _branch_is_empty(branch) \
                        and not e.arg.args:
                    return _NullPtr(span=e.span)
            return S.Lower(e.layout, self._null_empty(e.arg), span=e.span)
        if isinstance(e, S.ConstructorApp):
            return S.ConstructorApp(e.name, [self._null_empty(a)
                                             for a in e.args], span=e.span)
        if isinstance(e, S.Instantiate):
            return S.Instantiate(e.arg_layouts, e.result_layout, e.fn,
                                 [self._null_empty(a) for a in e.args],
                                 span=e.span)
        if isinstance(e, S.Let):
            return S.Let(e.name, self._null_empty(e.bound),
                         self._null_empty(e.body), span=e.span)
        if isinstance(e, S.IfThenElse):
            return S.IfThenElse(self._null_empty(e.cond),
                                self._null_empty(e.then),
                                self._null_empty(e.els), span=e.span)
        if isinstance(e, S.BinOp):
            return S.BinOp(e.op, self._null_empty(e.lhs),
                           self._null_empty(e.rhs), span=e.span)
        if isinstance(e, S.Not):
            return S.Not(self._null_empty(e.arg), span=e.span)
        return e

    # -- stage 3 --

    def stage3(self):
        for arm in self.arms:
            used = _expr_vars(arm.body) | _expr_vars(arm.guard)
            fn_args = _direct_call_args(arm.body, self.fn, recursive=False)
            for arg in arm.args:
                arm.destructure.extend(self._destructure(arg, used, fn_args))

    def _destructure(self, arg: ElabArg, used: set, fn_args: set) -> list:
        if arg.pattern is None or not arg.layout.is_adt:
            return []
        layout = arg.layout.layout
        ctor, pat_vars = arg.pattern
        branch = layout.branch_for(ctor)
        if branch is None or _branch_is_empty(branch):
            return []
        if not (set(pat_vars) & used) and arg.layout.mode == "readonly":
            # matched but unused: assert the whole structure read-only
            self.ro_layouts.add(layout.name)
            return [ssl.RoApply(f"ro_{layout.name}", (ssl.PVar(arg.ssl_name),))]
        out = []
        for var, off in arg.offsets.items():
            out.append(ssl.PointsTo(arg.ssl_name, off, ssl.PVar(var)))
        n = layout_cell_count(layout, ctor)
        if n:
            out.append(ssl.Block(arg.ssl_name, n))
        for lname, var in arg.applies:
            # a nested structure keeps a read-only assertion only when it
            # flows opaquely into another function's argument
            if var not in fn_args:
                continue
            self.ro_layouts.add(lname)
            out.append(ssl.RoApply(f"ro_{lname}", (ssl.PVar(var),)))
        return out

    # -- stage 4 --

    def stage4(self):
        for arm in self.arms:
            if isinstance(arm.body, S.Lower) and isinstance(arm.body.arg, S.Var):
                resolved = resolve_layout_ref(self.env, arm.body.layout)
                if resolved.is_adt:
                    self.copy_layouts.add(resolved.layout.name)
                    arm.body = _CopyCall(arm.body.arg.name, resolved.layout,
                                         span=arm.body.span)

    # -- stage 5 --

    def stage5(self):
        for arm in self.arms:
            body = arm.body
            while isinstance(body, S.Let):
                arm.lets.append((body.name, body.bound))
                body = body.body
            arm.body = body

    # -- stage 6 --

    def stage6(self):
        for arm in self.arms:
            _ArmTx(self, arm).run()

    # -- stage 7 --

    def stage7(self) -> ssl.PredicateDef:
        branches = []
        for arm in self.arms:
            parts = []
            empties, non_empties = [], []
            ctor_tag = None
            for arg in arm.args:
                if arg.pattern is None or not arg.layout.is_adt:
                    continue
                layout = arg.layout.layout
                ctor, _ = arg.pattern
                ctor_tag = ctor_tag or ctor
                c = cond(layout, ctor, var=arg.ssl_name,
                         allow_guarded=arm.guard is not None)
                if c == ssl.TRUE:
                    continue
                (empties if isinstance(c, ssl.PEq) else non_empties).append(c)
            parts = empties + non_empties
            if arm.guard_term is not None:
                parts.append(arm.guard_term)
            branch_cond = ssl.pand_all(parts)
            body = ssl.SslAssertion.make(
                tuple(arm.pure),
                tuple(arm.destructure) + tuple(arm.calls)
                + tuple(arm.result_cells) + tuple(arm.temps))
            branches.append(ssl.Branch(branch_cond, body, ctor=ctor_tag))
        params = tuple((a.ssl_name, a.layout.sort) for a in self.elab.cases[0].args) \
            + ((self.elab.cases[0].result_name, self.elab.result_layout.sort),)
        return ssl.PredicateDef(self.pred_name, params, tuple(branches))

    def run(self) -> ssl.PredicateDef:
        self.stage2()
        self.stage3()
        self.stage4()
        self.stage5()
        self.stage6()
        return self.stage7()

    # -- helpers shared with the arm translator --

    def fresh_value(self, sort_loc_adt: str) -> str:
        n = self.counter
        self.counter += 1
        return f"__p_x{n}" if sort_loc_adt == "adt" else f"__p_{n}"

    def fresh_temp(self) -> str:
        t = f"__temp_{self.temp_counter}"
        self.temp_counter += 1
        return t


class _ArmTx:
    """Stage-6 ANF translation of one arm."""

    def __init__(self, fn_tx: _FnTranslator, arm: _Arm):
        self.t = fn_tx
        self.env = fn_tx.env
        self.arm = arm
        self.adt_alias: dict = {}        # let binder -> ANF variable
        self.let_binders: set = set()
        self.produced: dict = {}         # ANF var -> loc-sorted call output?
        self.consumed_by_call: set = set()
        self.pure_lets: list = []
        self.pure_result: list = []
        self.pure_fields: list = []
        self.pure_temps: list = []

    def run(self):
        arm = self.arm
        if arm.guard is not None:
            if _has_calls(arm.guard):
                raise UnsupportedConstruct("calls in guards are not supported",
                                           getattr(arm.guard, "span", None))
            arm.guard_term = self.pure_of(arm.guard)
        for binder, bound in arm.lets:
            self.let_binders.add(binder)
            term = self.value_of(bound, spatial_adt=False)
            self.pure_lets.append(ssl.PEq(ssl.PVar(binder), term))
            if isinstance(term, ssl.PVar) and term.name in self.produced \
                    and self.produced[term.name]:
                self.adt_alias[binder] = term.name
        self.tx_result(arm.body)
        cell_vars = set()
        for h in arm.result_cells:
            if isinstance(h, ssl.PointsTo):
                cell_vars |= ssl._pure_vars(h.value)
        for var, loc_sorted in self.produced.items():
            if loc_sorted and var in self.consumed_by_call \
                    and var not in cell_vars:
                arm.temps.append(ssl.TempLoc(var))
        arm.pure = (self.pure_lets + self.pure_result + self.pure_fields
                    + self.pure_temps)

    # -- result position --

    def tx_result(self, e: S.Expr):
        arm = self.arm
        result = arm.result_name
        rl = arm.result_layout
        if isinstance(e, _NullPtr):
            self.pure_result.append(ssl.PEq(ssl.PVar(result), ssl.PInt(0)))
            return
        if isinstance(e, _CopyCall):
            name = f"{e.layout.name}__copy"
            arm.calls.append(ssl.FuncApply(name, (ssl.PVar(e.src),
                                                  ssl.PVar(result))))
            return
        if isinstance(e, S.Lower) and isinstance(e.arg, S.ConstructorApp):
            resolved = resolve_layout_ref(self.env, e.layout)
            if not resolved.is_adt:
                raise NonConstructibleBody("lowering at a base layout",
                                           e.span)
            self.build_ctor(resolved.layout, e.arg, result)
            return
        if isinstance(e, S.Instantiate):
            out = self.emit_call(e, out_var=result)
            if out is not None:             # the call inlined to a pure term
                self.tx_result_pure(out)
            return
        if isinstance(e, (S.IntLit, S.BoolLit, S.Var, S.BinOp, S.Not,
                          S.IfThenElse, S.Addr)):
            self.tx_result_pure(self.value_of(e, spatial_adt=False))
            return
        raise NonConstructibleBody(
            f"arm result is not constructible at the result layout "
            f"({type(e).__name__})", getattr(e, "span", None))

    def tx_result_pure(self, term: ssl.PureTerm):
        arm = self.arm
        if arm.result_layout.kind == "ptr":
            arm.result_cells.append(ssl.PointsTo(arm.result_name, 0, term))
        else:
            self.pure_result.append(ssl.PEq(ssl.PVar(arm.result_name), term))

    def build_ctor(self, layout: S.LayoutDef, ctor: S.ConstructorApp,
                   root: str):
        arm = self.arm
        pat = layout.branch_pattern(ctor.name)
        branch = layout.branch_for(ctor.name)
        if branch is None:
            raise NoSuchBranch(f"layout {layout.name} has no branch for "
                               f"{ctor.name}", ctor.span)
        offsets = {}
        for h in branch:
            if isinstance(h, S.HPointsTo):
                offsets[h.payload] = h.offset
        cells = []
        for var, sub in zip(pat.vars, ctor.args):
            off = offsets.get(var)
            if off is None:
                raise NonConstructibleBody(
                    f"field {var} of {ctor.name} has no cell in layout "
                    f"{layout.name}", ctor.span)
            value = self.field_value(sub, root, off)
            if value is not None:
                cells.append(ssl.PointsTo(root, off, value))
        cells.append(ssl.Block(root, layout_cell_count(layout, ctor.name)))
        if root == arm.result_name:
            arm.result_cells.extend(cells)
        else:
            arm.calls.extend(cells)

    def field_value(self, e: S.Expr, root: str, off: int):
        """The cell payload for a constructor field; None when the field is
        connected through a pure output-location equality instead."""
        if isinstance(e, S.Instantiate):
            out = self.emit_call(e)
            if isinstance(out, ssl.PVar) and out.name in self.produced \
                    and self.produced_kind.get(out.name) == "func":
                loc_term = ssl.PVar(root) if off == 0 \
                    else ssl.PAdd(ssl.PVar(root), ssl.PInt(off))
                self.pure_fields.append(ssl.PEq(loc_term, out))
                return None
            return out
        return self.value_of(e, spatial_adt=True)

    # -- value positions --

    def value_of(self, e: S.Expr, spatial_adt: bool) -> ssl.PureTerm:
        if isinstance(e, _NullPtr):
            return ssl.PInt(0)
        if isinstance(e, S.IntLit):
            return ssl.PInt(e.value)
        if isinstance(e, S.BoolLit):
            return ssl.PBool(e.value)
        if isinstance(e, S.Var):
            if spatial_adt and e.name in self.adt_alias:
                return ssl.PVar(self.adt_alias[e.name])
            return ssl.PVar(e.name)
        if isinstance(e, S.Addr):
            return self.addr_term(e)
        if isinstance(e, S.BinOp):
            ops = {"+": ssl.PAdd, "-": ssl.PSub, "%": ssl.PMod,
                   "<": ssl.PLt, "==": ssl.PEq}
            if e.op in ops:
                return ops[e.op](self.value_of(e.lhs, False),
                                 self.value_of(e.rhs, False))
            if e.op == "&&":
                return ssl.PAnd(self.value_of(e.lhs, False),
                                self.value_of(e.rhs, False))
            if e.op == "||":
                # a || b  ==  not (not a && not b); emitted syntax has no ||
                return ssl.PNot(ssl.PAnd(ssl.PNot(self.value_of(e.lhs, False)),
                                         ssl.PNot(self.value_of(e.rhs, False))))
        if isinstance(e, S.Not):
            return ssl.PNot(self.value_of(e.arg, False))
        if isinstance(e, S.IfThenElse):
            return ssl.PTernary(self.value_of(e.cond, False),
                                self.value_of(e.then, False),
                                self.value_of(e.els, False))
        if isinstance(e, S.Instantiate):
            out = self.emit_call(e)
            return out
        if isinstance(e, S.Lower):
            if isinstance(e.arg, S.ConstructorApp):
                resolved = resolve_layout_ref(self.env, e.layout)
                root = self.t.fresh_value("adt")
                self.produced[root] = False   # materialised, not a call output
                self.build_ctor(resolved.layout, e.arg, root)
                return ssl.PVar(root)
            return self.value_of(e.arg, spatial_adt)
        raise NonConstructibleBody(
            f"cannot translate {type(e).__name__} in value position",
            getattr(e, "span", None))

    def pure_of(self, e: S.Expr) -> ssl.PureTerm:
        return self.value_of(e, spatial_adt=False)

    def addr_term(self, e: S.Addr) -> ssl.PureTerm:
        for arg in self.arm.args:
            if e.var in arg.offsets:
                off = arg.offsets[e.var]
                if off == 0:
                    return ssl.PVar(arg.ssl_name)
                return ssl.PAdd(ssl.PVar(arg.ssl_name), ssl.PInt(off))
        raise NonConstructibleBody(
            f"addr {e.var}: variable has no heap cell", e.span)

    # -- calls --

    @property
    def produced_kind(self) -> dict:
        if not hasattr(self, "_produced_kind"):
            self._produced_kind = {}
        return self._produced_kind

    def emit_call(self, e: S.Instantiate, out_var: Optional[str] = None):
        env = self.env
        arg_layouts = [resolve_layout_ref(env, r, e.span)
                       for r in e.arg_layouts]
        res_layout = resolve_layout_ref(env, e.result_layout, e.span)
        recursive = e.fn == self.t.fn
        if not recursive:
            inline = self._inlinable(e.fn)
            if inline is not None:
                sub_terms = [self.value_of(a, False) for a in e.args]
                return _inline_pure(inline, sub_terms)
            if e.fn in self.t.prog.specialisations:
                self._ensure_extra(e.fn, e.arg_layouts, e.result_layout)

        slot = len(self.arm.calls)
        self.arm.calls.append(None)
        args = []
        for a, lay in zip(e.args, arg_layouts):
            if lay.sort == "loc" and lay.is_adt:
                term = self.value_of(a, spatial_adt=True)
            else:
                term = self.value_of(a, spatial_adt=False)
            if isinstance(term, ssl.PVar) and term.name in self.produced:
                self.consumed_by_call.add(term.name)
            args.append(term)

        if out_var is not None:
            out = out_var
        else:
            loc_sorted = res_layout.sort == "loc"
            out = self.t.fresh_value("adt" if res_layout.is_adt
                                     else ("ptr" if loc_sorted else "int"))
            self.produced[out] = loc_sorted
        if recursive:
            name = self.t.pred_name
            if out_var is None and res_layout.sort == "int":
                temp = self.t.fresh_temp()
                self.pure_temps.append(ssl.PEq(ssl.PVar(temp), ssl.PVar(out)))
                heaplet = ssl.PredApply(name, tuple(args) + (ssl.PVar(temp),))
            else:
                heaplet = ssl.PredApply(name, tuple(args) + (ssl.PVar(out),))
            self.produced_kind[out] = "pred"
        else:
            result_res = replace(res_layout, mode="mutable") \
                if res_layout.is_adt else res_layout
            name = mangle(e.fn, arg_layouts, result_res)
            heaplet = ssl.FuncApply(name, tuple(args) + (ssl.PVar(out),))
            self.produced_kind[out] = "func"
        self.arm.calls[slot] = heaplet
        if out_var is not None:
            return None
        return ssl.PVar(out)

    def _inlinable(self, fn: str):
        """The substituted body of an all-base-type defined function, or
        None when the call must stay abstract."""
        if fn not in self.env.fn_defs or fn not in self.env.fn_sigs:
            return None
        params, result = uncurry(self.env.fn_sigs[fn])
        if any(isinstance(p, (S.TName, S.TFn)) for p in params) \
                or isinstance(result, (S.TName, S.TFn)):
            return None
        cases = self.env.fn_defs[fn]
        if len(cases) != 1:
            return None
        case = cases[0]
        if any(p.ctor is not None for p in case.patterns):
            return None
        if len(case.guarded_bodies) != 1 or case.guarded_bodies[0][0] is not None:
            return None
        body = case.guarded_bodies[0][1]
        if _has_calls(body):
            return None
        return (case, [p.var for p in case.patterns])

    def _ensure_extra(self, fn, arg_refs, result_ref):
        key = mangle(fn, [resolve_layout_ref(self.env, r) for r in arg_refs],
                     replace(resolve_layout_ref(self.env, result_ref),
                             mode="mutable"))
        if key in self.t.extra_fns:
            return
        self.t.extra_fns[key] = None
        elab = elaborate_fn_at(self.env, fn, arg_refs, result_ref)
        sub = _FnTranslator(self.t.prog, elab, registry=self.t.extra_fns)
        pred = sub.run()
        self.t.ro_layouts |= sub.ro_layouts
        self.t.copy_layouts |= sub.copy_layouts
        self.t.extra_fns[key] = pred


def _has_calls(e: S.Expr) -> bool:
    if isinstance(e, (S.App, S.Instantiate)):
        return True
    if isinstance(e, S.BinOp):
        return _has_calls(e.lhs) or _has_calls(e.rhs)
    if isinstance(e, S.Not):
        return _has_calls(e.arg)
    if isinstance(e, S.IfThenElse):
        return _has_calls(e.cond) or _has_calls(e.then) or _has_calls(e.els)
    if isinstance(e, S.Let):
        return _has_calls(e.bound) or _has_calls(e.body)
    if isinstance(e, (S.ConstructorApp,)):
        return any(_has_calls(a) for a in e.args)
    if isinstance(e, S.Lower):
        return _has_calls(e.arg)
    return False


def _inline_pure(inline, arg_terms) -> ssl.PureTerm:
    case, param_names = inline
    sub = dict(zip(param_names, arg_terms))

    def go(e: S.Expr) -> ssl.PureTerm:
        if isinstance(e, S.IntLit):
            return ssl.PInt(e.value)
        if isinstance(e, S.BoolLit):
            return ssl.PBool(e.value)
        if isinstance(e, S.Var):
            if e.name in sub:
                return sub[e.name]
            return ssl.PVar(e.name)
        if isinstance(e, S.BinOp):
            ops = {"+": ssl.PAdd, "-": ssl.PSub, "%": ssl.PMod,
                   "<": ssl.PLt, "==": ssl.PEq, "&&": ssl.PAnd}
            return ops[e.op](go(e.lhs), go(e.rhs))
        if isinstance(e, S.Not):
            return ssl.PNot(go(e.arg))
        if isinstance(e, S.IfThenElse):
            return ssl.PTernary(go(e.cond), go(e.then), go(e.els))
        raise UnsupportedConstruct("inlined body is not a pure expression")

    return go(case.guarded_bodies[0][1])


# ---------------------------------------------------------------------------
# Directive compilation
# ---------------------------------------------------------------------------

def compile_directive(prog: TypedProgram, fn: str) -> CompileResult:
    if fn not in prog.fns:
        raise UnboundVariable(f"{fn} was not elaborated (missing directive?)")
    elab = prog.fns[fn]
    tx = _FnTranslator(prog, elab)
    predicate = tx.run()
    env = prog.env

    layout_preds = []
    seen = set()
    for lay in elab.arg_layouts:
        if lay.is_adt and lay.layout.name not in seen:
            seen.add(lay.layout.name)
            layout_preds.append(translate_layout_predicate(lay.layout))
    ro_preds = [translate_layout_predicate(env.layouts[name], ro=True)
                for name in sorted(tx.ro_layouts)]
    registry: dict = {}
    for name in sorted(tx.copy_layouts):
        copy_predicate(env, env.layouts[name], registry)
    copy_preds = [p for p in registry.values() if p is not None]
    extra = [p for p in tx.extra_fns.values() if p is not None]
    goal = make_goal_spec(elab, predicate.name)
    return CompileResult(predicate.name, predicate, layout_preds, ro_preds,
                         copy_preds, extra, goal)


def make_goal_spec(elab: ElabFn, pred_name: str) -> ssl.GoalSpec:
    params = []
    pre = []
    post = []
    pred_args = []
    for i, lay in enumerate(elab.arg_layouts):
        pname = f"x{i + 1}"
        params.append(("loc", pname))
        if lay.is_adt:
            pre.append(ssl.PredApply(lay.layout.name, (ssl.PVar(pname),)))
            pred_args.append(ssl.PVar(pname))
        else:
            content = f"v{i + 1}"
            pre.append(ssl.PointsTo(pname, 0, ssl.PVar(content)))
            post.append(ssl.PointsTo(pname, 0, ssl.PVar(content)))
            pred_args.append(ssl.PVar(content))
    params.append(("loc", "r"))
    pre.append(ssl.PointsTo("r", 0, ssl.PInt(0)))
    post.insert(0, ssl.PredApply(pred_name, tuple(pred_args) + (ssl.PVar("r0"),)))
    post.append(ssl.PointsTo("r", 0, ssl.PVar("r0")))
    return ssl.GoalSpec(elab.name, tuple(params),
                        ssl.SslAssertion.make((), pre),
                        ssl.SslAssertion.make((), post))


# ---------------------------------------------------------------------------
# Stage snapshots
# ---------------------------------------------------------------------------

STAGE_TITLES = [
    "Type checking and elaboration.",
    "Unfold empty constructors.",
    "Unfold pattern matches using layouts.",
    "Insert copying predicate applications.",
    "Translate lets.",
    "Unfold constructor applications.",
    "Generation.",
]


def _render_marker_expr(e) -> str:
    if isinstance(e, _NullPtr):
        return "0"
    if isinstance(e, _CopyCall):
        return f"func {e.layout.name}__copy({e.src}, ...)"
    if isinstance(e, S.Lower):
        inner = _render_marker_expr(e.arg)
        return f"lower {S.render_layout_ref(e.layout)} {inner}" \
            if isinstance(e.arg, (_NullPtr, _CopyCall)) else S.render_expr(e)
    return S.render_expr(e)


def _render_pattern_ann(arg: ElabArg) -> str:
    if arg.pattern is None:
        return arg.source_name or arg.ssl_name
    ctor, vars_ = arg.pattern
    pat = f"({ctor} {' '.join(vars_)})" if vars_ else f"({ctor})"
    if arg.layout.is_adt:
        return f"({arg.layout.layout.name}[{arg.layout.mode} ; " \
               f"{arg.ssl_name}] {pat})"
    return pat


def _render_arm_head(fn: str, arm: _Arm, annotated: bool) -> str:
    parts = [fn]
    for arg in arm.args:
        if annotated:
            parts.append(_render_pattern_ann(arg))
        elif arg.pattern is None:
            parts.append(arg.source_name or arg.ssl_name)
        else:
            ctor, vars_ = arg.pattern
            parts.append(f"({ctor} {' '.join(vars_)})" if vars_
                         else f"({ctor})")
    return " ".join(parts)


def _layout_annotation(arm: _Arm) -> str:
    """The stage-3 heaplet annotation, written over the layout binders."""
    chunks = []
    for arg in arm.args:
        if arg.pattern is None or not arg.layout.is_adt:
            continue
        layout = arg.layout.layout
        ctor, pat_vars = arg.pattern
        branch = layout.branch_for(ctor)
        if branch is None or _branch_is_empty(branch):
            continue
        branch_pat = layout.branch_pattern(ctor)
        sub = dict(zip(branch_pat.vars, pat_vars))
        arrow = ":=>" if arg.layout.mode == "readonly" else ":->"
        for h in branch:
            if isinstance(h, S.HPointsTo):
                loc = h.base if h.offset == 0 else f"({h.base}+{h.offset})"
                chunks.append(f"{loc} {arrow} {sub.get(h.payload, h.payload)}")
    if not chunks:
        return f"{arm.result_name} == 0 ; emp"
    return ", ".join(chunks)


def _render_arms(fn, arms, annotated_pattern, with_layout_ann, body_of) -> str:
    lines = []
    for arm in arms:
        head = _render_arm_head(fn, arm, annotated_pattern)
        body = body_of(arm)
        if with_layout_ann:
            ann = _layout_annotation(arm)
            body = f"layout{{ {ann} }}\n    & {body}"
        if arm.guard is not None:
            lines.append(head)
            lines.append(f"  | {S.render_expr(arm.guard)} := {body};")
        else:
            lines.append(f"{head} := {body};")
    return "\n".join(lines)


def dump_stages(prog: TypedProgram, fn: str) -> list:
    """Textual snapshots of the seven translation stages for one function."""
    if fn not in prog.fns:
        raise UnboundVariable(f"{fn} was not elaborated (missing directive?)")
    elab = prog.fns[fn]
    tx = _FnTranslator(prog, elab)
    out = []

    out.append((STAGE_TITLES[0],
                _render_arms(fn, tx.arms, True, False,
                             lambda arm: _render_marker_expr(arm.body))))
    tx.stage2()
    out.append((STAGE_TITLES[1],
                _render_arms(fn, tx.arms, True, False,
                             lambda arm: _render_marker_expr(arm.body))))
    tx.stage3()
    out.append((STAGE_TITLES[2],
                _render_arms(fn, tx.arms, False, True,
                             lambda arm: _render_marker_expr(arm.body))))
    before = [arm.body for arm in tx.arms]
    tx.stage4()
    if any(isinstance(arm.body, _CopyCall) for arm in tx.arms):
        out.append((STAGE_TITLES[3],
                    _render_arms(fn, tx.arms, False, True,
                                 lambda arm: _render_marker_expr(arm.body))))
    else:
        out.append((STAGE_TITLES[3], "Not applicable."))
    tx.stage5()
    if any(arm.lets for arm in tx.arms):
        def render_lets(arm):
            eqs = [f"{b} == ({S.render_expr(e)})" for b, e in arm.lets]
            return ", ".join(eqs + [_render_marker_expr(arm.body)])
        out.append((STAGE_TITLES[4],
                    _render_arms(fn, tx.arms, False, True, render_lets)))
    else:
        out.append((STAGE_TITLES[4], "Not applicable."))
    tx.stage6()

    def render_translated(arm):
        body = ssl.SslAssertion.make(
            tuple(arm.pure),
            tuple(arm.destructure) + tuple(arm.calls)
            + tuple(arm.result_cells) + tuple(arm.temps))
        return f"layout{{ {ssl.render_assertion(body)} }}"

    lines = []
    for arm in tx.arms:
        head = _render_arm_head(fn, arm, False)
        if arm.guard is not None:
            lines.append(head)
            lines.append(f"  | {S.render_expr(arm.guard)} := "
                         f"{render_translated(arm)};")
        else:
            lines.append(f"{head} := {render_translated(arm)};")
    out.append((STAGE_TITLES[5], "\n".join(lines)))

    predicate = tx.stage7()
    chunks = []
    seen = set()
    for lay in elab.arg_layouts:
        if lay.is_adt and lay.layout.name not in seen:
            seen.add(lay.layout.name)
            chunks.append(ssl.emit_predicate(
                translate_layout_predicate(lay.layout)))
    for name in sorted(tx.ro_layouts):
        chunks.append(ssl.emit_predicate(
            translate_layout_predicate(prog.env.layouts[name], ro=True)))
    registry: dict = {}
    for name in sorted(tx.copy_layouts):
        copy_predicate(prog.env, prog.env.layouts[name], registry)
    for p in registry.values():
        if p is not None:
            chunks.append(ssl.emit_predicate(p))
    chunks.append(ssl.emit_predicate(predicate))
    out.append((STAGE_TITLES[6], "\n".join(chunks)))
    return out
