"""Reduction, typing, definitional equality, and first-order unification.

Reduction is weak-head only: beta (lambda application), delta (unfolding
reducible definitions, fuel-limited), and iota (projection of a constructor
field).  Eta for structures is not a reduction; it lives inside the equality
check as a comparison rule, tried only after both sides are in weak head
normal form and exactly one of them is a constructor.  Two independent flags
control it: ``eta_kernel`` for definitional equality and ``eta_unifier`` for
unification during instance search.
"""
from __future__ import annotations

from dataclasses import dataclass

from .declarations import Environment, StructDecl
from .terms import (
    App, Binder, BoundVar, Const, FreeVar, Lam, Meta, Mk, Pi, Proj, Sort,
    SORT, Telescope, Term, abstract1, apps, fresh_name, instantiate,
    metas_in, pp_term, subst_frees, unfold_apps, zonk,
)

DEFAULT_UNFOLD_DEPTH = 256


@dataclass(frozen=True)
class DefEqConfig:
    """Switches for the equality checker and the unifier."""

    eta_kernel: bool = True
    eta_unifier: bool = False
    unfold_depth: int = DEFAULT_UNFOLD_DEPTH

    def __post_init__(self) -> None:
        if self.unfold_depth <= 0:
            raise ValueError("unfold_depth must be positive")


DEFAULT_CONFIG = DefEqConfig()


class KernelError(Exception):
    pass


class FuelExhausted(KernelError):
    """Raised when delta-unfolding exceeds the configured depth."""


class IllTyped(KernelError):
    """Raised when a term does not typecheck."""


class UnifyError(KernelError):
    pass


class OccursCheck(UnifyError):
    """Raised when a meta would be assigned a term containing itself."""

    def __init__(self, mid: int, term: Term) -> None:
        super().__init__(f"occurs check failed: ?{mid} in {pp_term(term)}")
        self.mid = mid
        self.term = term


class Mismatch(UnifyError):
    """Raised when two rigid head-normal terms cannot be unified."""

    def __init__(self, lhs: Term, rhs: Term) -> None:
        super().__init__(f"cannot unify {pp_term(lhs)} with {pp_term(rhs)}")
        self.lhs = lhs
        self.rhs = rhs


class _NotDefEq(Exception):
    """Internal signal: the compared terms are not definitionally equal."""

    def __init__(self, lhs: Term, rhs: Term) -> None:
        self.lhs = lhs
        self.rhs = rhs


class Trace:
    """An indented step log shared by whnf, defeq, unify, and resolution."""

    def __init__(self) -> None:
        self.lines: list[str] = []
        self._depth = 0

    def step(self, message: str) -> None:
        self.lines.append("  " * self._depth + message)

    def push(self) -> None:
        self._depth += 1

    def pop(self) -> None:
        self._depth -= 1

    def render(self) -> str:
        return "\n".join(self.lines)


class _Fuel:
    def __init__(self, amount: int) -> None:
        self.remaining = amount

    def spend(self, name: str) -> None:
        self.remaining -= 1
        if self.remaining < 0:
            raise FuelExhausted(f"unfold depth exhausted while unfolding {name!r}")


class MetaCtx:
    """Allocates metavariables and remembers their types when known."""

    def __init__(self) -> None:
        self._next = 0
        self.types: dict[int, Term] = {}

    def fresh(self, ty: Term | None = None) -> Meta:
        mid = self._next
        self._next += 1
        if ty is not None:
            self.types[mid] = ty
        return Meta(mid)


def _whnf(env: Environment, t: Term, fuel: _Fuel, trace: Trace | None) -> Term:
    while True:
        head, args = unfold_apps(t)
        if isinstance(head, Lam) and args:
            while isinstance(head, Lam) and args:
                head = instantiate(head.body, args.pop(0))
            if trace is not None:
                trace.step("beta")
            t = apps(head, *args)
            continue
        if isinstance(head, Const):
            value = env.unfolding(head.name)
            if value is None:
                return t
            fuel.spend(head.name)
            if trace is not None:
                trace.step(f"delta {head.name}")
            t = apps(value, *args)
            continue
        if isinstance(head, Proj):
            target = _whnf(env, head.target, fuel, trace)
            if isinstance(target, Mk):
                decl = env.struct(head.struct)
                idx = decl.field_index(head.field)
                if trace is not None:
                    trace.step(f"iota {head.struct}.{head.field}")
                t = apps(target.fields[idx], *args)
                continue
            # Stuck projection: return the original form, not the reduced
            # target, so callers (and meta assignments) keep declared names.
            return t
        return t


def whnf(env: Environment, config: DefEqConfig, ctx: Telescope, t: Term,
         trace: Trace | None = None) -> Term:
    """Reduce to weak head normal form by beta, delta, and iota only."""
    del ctx  # context variables have no definitions to unfold
    return _whnf(env, t, _Fuel(config.unfold_depth), trace)


def infer_type(env: Environment, ctx: Telescope, t: Term,
               meta_types: dict[int, Term] | None = None) -> Term:
    """Synthesize the type of t.

    Argument compatibility is not rechecked here; ``check_type`` does the
    full job.  Raises IllTyped on structural impossibilities such as applying
    a non-function or projecting a non-structure.
    """
    fuel = _Fuel(DEFAULT_UNFOLD_DEPTH)
    ctx_types = {b.name: b.ty for b in ctx}
    return _infer(env, ctx_types, t, fuel, meta_types)


def _infer(env: Environment, ctx_types: dict[str, Term], t: Term, fuel: _Fuel,
           meta_types: dict[int, Term] | None) -> Term:
    if isinstance(t, Sort):
        return SORT
    if isinstance(t, Const):
        if t.name not in env:
            raise IllTyped(f"unknown constant {t.name!r}")
        return env.decl_type(t.name)
    if isinstance(t, FreeVar):
        ty = ctx_types.get(t.name)
        if ty is None:
            raise IllTyped(f"unknown free variable {t.name!r}")
        return ty
    if isinstance(t, Meta):
        ty = (meta_types or {}).get(t.mid)
        if ty is None:
            raise IllTyped(f"cannot infer the type of metavariable ?{t.mid}")
        return ty
    if isinstance(t, BoundVar):
        raise IllTyped("loose bound variable")
    if isinstance(t, App):
        fn_ty = _whnf(env, _infer(env, ctx_types, t.fn, fuel, meta_types), fuel, None)
        if not isinstance(fn_ty, Pi):
            raise IllTyped(f"applied non-function of type {pp_term(fn_ty)}")
        return instantiate(fn_ty.body, t.arg)
    if isinstance(t, Lam):
        name = fresh_name(t.binder or "x", set(ctx_types))
        body = instantiate(t.body, FreeVar(name))
        body_ty = _infer(env, {**ctx_types, name: t.ty}, body, fuel, meta_types)
        return Pi(t.binder, t.ty, abstract1(body_ty, name))
    if isinstance(t, Pi):
        return SORT
    if isinstance(t, Mk):
        decl = env.struct(t.struct)
        if len(t.params) != len(decl.params) or len(t.fields) != len(decl.fields):
            raise IllTyped(f"constructor of {t.struct!r} applied to the wrong arity")
        return apps(Const(t.struct), *t.params)
    if isinstance(t, Proj):
        target_ty = _whnf(env, _infer(env, ctx_types, t.target, fuel, meta_types), fuel, None)
        head, args = unfold_apps(target_ty)
        if not (isinstance(head, Const) and head.name == t.struct):
            raise IllTyped(
                f"projection {t.struct}.{t.field} applied to a value of type {pp_term(target_ty)}")
        decl = env.struct(t.struct)
        if len(args) != len(decl.params):
            raise IllTyped(f"structure type {t.struct!r} not fully applied")
        mapping = {b.name: a for b, a in zip(decl.params, args)}
        for fb in decl.fields:
            if fb.name == t.field:
                return subst_frees(fb.ty, mapping)
            mapping[fb.name] = Proj(t.struct, fb.name, t.target)
        raise IllTyped(f"structure {t.struct!r} has no field {t.field!r}")
    raise IllTyped(f"cannot infer type of {t!r}")


def check_type(env: Environment, config: DefEqConfig, ctx: Telescope, t: Term,
               expected: Term | None = None) -> Term:
    """Fully typecheck t, verifying every application and constructor."""
    ty = _check(env, config, list(ctx), t)
    if expected is not None and not defeq(env, config, ctx, ty, expected):
        raise IllTyped(
            f"type mismatch: inferred {pp_term(ty)}, expected {pp_term(expected)}")
    return ty


def _check(env: Environment, config: DefEqConfig, ctx: list[Binder], t: Term) -> Term:
    fuel = _Fuel(config.unfold_depth)
    if isinstance(t, App):
        fn_ty = _whnf(env, _check(env, config, ctx, t.fn), fuel, None)
        if not isinstance(fn_ty, Pi):
            raise IllTyped(f"applied non-function of type {pp_term(fn_ty)}")
        arg_ty = _check(env, config, ctx, t.arg)
        if not defeq(env, config, tuple(ctx), arg_ty, fn_ty.ty):
            raise IllTyped(
                f"argument type {pp_term(arg_ty)} does not match {pp_term(fn_ty.ty)}")
        return instantiate(fn_ty.body, t.arg)
    if isinstance(t, Lam):
        _check(env, config, ctx, t.ty)
        name = fresh_name(t.binder or "x", {b.name for b in ctx})
        body = instantiate(t.body, FreeVar(name))
        body_ty = _check(env, config, ctx + [Binder(name, t.ty)], body)
        return Pi(t.binder, t.ty, abstract1(body_ty, name))
    if isinstance(t, Pi):
        _check(env, config, ctx, t.ty)
        name = fresh_name(t.binder or "x", {b.name for b in ctx})
        _check(env, config, ctx + [Binder(name, t.ty)], instantiate(t.body, FreeVar(name)))
        return SORT
    if isinstance(t, Mk):
        decl = env.struct(t.struct)
        if len(t.params) != len(decl.params) or len(t.fields) != len(decl.fields):
            raise IllTyped(f"constructor of {t.struct!r} applied to the wrong arity")
        mapping: dict[str, Term] = {}
        for binder, value in zip(decl.params + decl.fields, t.params + t.fields):
            expected = subst_frees(binder.ty, mapping)
            got = _check(env, config, ctx, value)
            if not defeq(env, config, tuple(ctx), got, expected):
                raise IllTyped(
                    f"constructor component {binder.name!r} has type {pp_term(got)}, "
                    f"expected {pp_term(expected)}")
            mapping[binder.name] = value
        return apps(Const(t.struct), *t.params)
    if isinstance(t, Proj):
        _check(env, config, ctx, t.target)
        return infer_type(env, tuple(ctx), t)
    return infer_type(env, tuple(ctx), t)


class _Comparator:
    """Shared engine behind defeq (rigid) and unify (meta-solving)."""

    def __init__(self, env: Environment, config: DefEqConfig, ctx: list[Binder],
                 eta: bool, subst: dict[int, Term] | None,
                 meta_types: dict[int, Term] | None, trace: Trace | None) -> None:
        self.env = env
        self.config = config
        self.ctx = ctx
        self.eta = eta
        self.subst = subst
        self.meta_types = meta_types
        self.fuel = _Fuel(config.unfold_depth)
        self.trace = trace

    def whnf(self, t: Term) -> Term:
        return _whnf(self.env, t, self.fuel, self.trace)

    def compare(self, a: Term, b: Term) -> None:
        if self.subst is not None:
            a = zonk(a, self.subst)
            b = zonk(b, self.subst)
        if a == b:
            return
        if self.subst is not None and (isinstance(a, Meta) or isinstance(b, Meta)):
            # Assign before reducing so solutions keep their declared form.
            self._solve_meta(a, b)
            return
        aw = self.whnf(a)
        bw = self.whnf(b)
        if aw == bw:
            return
        if self.subst is not None and (isinstance(aw, Meta) or isinstance(bw, Meta)):
            self._solve_meta(aw, bw)
            return
        if isinstance(aw, Sort) and isinstance(bw, Sort):
            return
        if isinstance(aw, Lam) and isinstance(bw, Lam):
            self.compare(aw.ty, bw.ty)
            self._compare_open(aw.binder, aw.ty, aw.body, bw.body)
            return
        if isinstance(aw, Pi) and isinstance(bw, Pi):
            self.compare(aw.ty, bw.ty)
            self._compare_open(aw.binder, aw.ty, aw.body, bw.body)
            return
        if isinstance(aw, Mk) and isinstance(bw, Mk):
            if aw.struct != bw.struct or len(aw.fields) != len(bw.fields):
                raise _NotDefEq(aw, bw)
            for x, y in zip(aw.params, bw.params):
                self.compare(x, y)
            for x, y in zip(aw.fields, bw.fields):
                self.compare(x, y)
            return
        if isinstance(aw, Mk) or isinstance(bw, Mk):
            if self.eta:
                mk, other = (aw, bw) if isinstance(aw, Mk) else (bw, aw)
                self._compare_eta(mk, other)
                return
            raise _NotDefEq(aw, bw)
        self._compare_neutral(aw, bw)

    def _compare_open(self, hint: str, ty: Term, body_a: Term, body_b: Term) -> None:
        taken = {b.name for b in self.ctx}
        name = fresh_name(hint or "x", taken)
        self.ctx.append(Binder(name, ty))
        try:
            self.compare(instantiate(body_a, FreeVar(name)),
                         instantiate(body_b, FreeVar(name)))
        finally:
            self.ctx.pop()

    def _compare_neutral(self, aw: Term, bw: Term) -> None:
        head_a, args_a = unfold_apps(aw)
        head_b, args_b = unfold_apps(bw)
        if len(args_a) != len(args_b):
            raise _NotDefEq(aw, bw)
        if isinstance(head_a, FreeVar) and isinstance(head_b, FreeVar):
            if head_a.name != head_b.name:
                raise _NotDefEq(aw, bw)
        elif isinstance(head_a, Const) and isinstance(head_b, Const):
            if head_a.name != head_b.name:
                raise _NotDefEq(aw, bw)
        elif isinstance(head_a, BoundVar) and isinstance(head_b, BoundVar):
            if head_a.index != head_b.index:
                raise _NotDefEq(aw, bw)
        elif isinstance(head_a, Meta) and isinstance(head_b, Meta):
            if head_a.mid != head_b.mid:
                raise _NotDefEq(aw, bw)
        elif isinstance(head_a, Proj) and isinstance(head_b, Proj):
            if head_a.struct != head_b.struct or head_a.field != head_b.field:
                raise _NotDefEq(aw, bw)
            self.compare(head_a.target, head_b.target)
        else:
            raise _NotDefEq(aw, bw)
        for x, y in zip(args_a, args_b):
            self.compare(x, y)

    def _compare_eta(self, mk: Mk, other: Term) -> None:
        """Structural eta: compare a constructor against field projections."""
        try:
            other_ty = infer_type(self.env, tuple(self.ctx), other, self.meta_types)
        except IllTyped:
            raise _NotDefEq(mk, other) from None
        ty_w = self.whnf(other_ty)
        head, args = unfold_apps(ty_w)
        if not (isinstance(head, Const) and head.name == mk.struct):
            raise _NotDefEq(mk, other)
        decl = self.env.struct(mk.struct)
        if len(args) != len(mk.params) or len(decl.fields) != len(mk.fields):
            raise _NotDefEq(mk, other)
        if self.trace is not None:
            self.trace.step(f"eta {mk.struct}")
            self.trace.push()
        try:
            for x, y in zip(mk.params, args):
                self.compare(x, y)
            for name, value in zip(decl.field_names(), mk.fields):
                self.compare(value, Proj(mk.struct, name, other))
        finally:
            if self.trace is not None:
                self.trace.pop()

    def _solve_meta(self, aw: Term, bw: Term) -> None:
        assert self.subst is not None
        if isinstance(aw, Meta) and isinstance(bw, Meta) and aw.mid == bw.mid:
            return
        if isinstance(aw, Meta):
            self._assign(aw, bw)
        else:
            assert isinstance(bw, Meta)
            self._assign(bw, aw)

    def _assign(self, meta: Meta, value: Term) -> None:
        assert self.subst is not None
        if meta.mid in metas_in(value):
            raise OccursCheck(meta.mid, value)
        self.subst[meta.mid] = value
        if self.trace is not None:
            self.trace.step(f"assign ?{meta.mid} := {pp_term(value)}")


def defeq(env: Environment, config: DefEqConfig, ctx: Telescope, a: Term, b: Term,
          trace: Trace | None = None) -> bool:
    """Definitional equality with structural eta gated by config.eta_kernel."""
    cmp = _Comparator(env, config, list(ctx), eta=config.eta_kernel,
                      subst=None, meta_types=None, trace=trace)
    try:
        cmp.compare(a, b)
        return True
    except _NotDefEq as e:
        if trace is not None:
            trace.step(f"stuck: {pp_term(e.lhs)} vs {pp_term(e.rhs)}")
        return False


def unify(env: Environment, config: DefEqConfig, ctx: Telescope, a: Term, b: Term,
          subst: dict[int, Term] | None = None, meta_types: dict[int, Term] | None = None,
          trace: Trace | None = None) -> dict[int, Term]:
    """First-order unification; metas are holes, free variables are rigid.

    Returns the extended substitution on success.  Raises Mismatch or
    OccursCheck on failure, leaving the input substitution untouched.
    Structural eta participates only when config.eta_unifier is set.
    """
    work = dict(subst) if subst else {}
    cmp = _Comparator(env, config, list(ctx), eta=config.eta_unifier,
                      subst=work, meta_types=meta_types, trace=trace)
    try:
        cmp.compare(a, b)
    except _NotDefEq as e:
        if trace is not None:
            trace.step(f"mismatch: {pp_term(e.lhs)} vs {pp_term(e.rhs)}")
        raise Mismatch(e.lhs, e.rhs) from None
    return work
