"""Instance resolution: depth-first search over registered instances.

A goal is a class application in some context.  Candidates are, in order:

1. context binders marked instance-implicit, most recent first;
2. registered global instances targeting the goal's class, highest priority
   first, most recently declared first within a priority.

Applying a global candidate means allocating a fresh metavariable per
binder, unifying the candidate's result type against the goal, and then
solving each still-open instance-implicit argument as a subgoal in binder
order.  A branch is pruned when its goal is alpha-equal to a goal already
on the path (after substitution), which keeps cyclic instance graphs from
looping.  The search depth is capped; exceeding the cap aborts the whole
search rather than backtracking, since a too-deep branch usually means a
runaway loop the guard cannot see.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

from .declarations import DefDecl, Environment
from .kernel import (
    DefEqConfig, DEFAULT_CONFIG, MetaCtx, Mismatch, OccursCheck, Trace, unify,
)
from .terms import (
    Binder, Const, FreeVar, Meta, Telescope, Term, apps, metas_in, pp_term,
    subst_frees, unfold_apps, zonk,
)

MAX_DEPTH = 32


class ResolutionError(Exception):
    pass


class NotFound(ResolutionError):
    def __init__(self, goal: Term) -> None:
        super().__init__(f"no instance found for {pp_term(goal)}")
        self.goal = goal


class DepthExceeded(ResolutionError):
    def __init__(self, depth: int) -> None:
        super().__init__(f"instance search exceeded depth {depth}")
        self.depth = depth


class InstanceLike(Protocol):
    """What the search needs to know about a registered instance."""

    decl_name: str
    to_class: str
    priority: int


@dataclass
class _State:
    env: Environment
    instances: Sequence[InstanceLike]
    ctx: Telescope
    config: DefEqConfig
    max_depth: int
    trace: Trace
    metas: MetaCtx


def resolve(env: Environment, instances: Sequence[InstanceLike], ctx: Telescope,
            target: Term, *, config: DefEqConfig = DEFAULT_CONFIG,
            max_depth: int = MAX_DEPTH,
            trace: Trace | None = None) -> tuple[Term, Trace]:
    """Find a term of the goal type, or raise NotFound / DepthExceeded."""
    trace = trace if trace is not None else Trace()
    state = _State(env, instances, ctx, config, max_depth, trace, MetaCtx())
    target = _saturate_goal(state, target)
    result = _solve(state, target, {}, 0, ())
    if result is None:
        raise NotFound(target)
    term, subst = result
    term = zonk(term, subst)
    if metas_in(term):
        raise NotFound(target)
    return term, trace


def _saturate_goal(state: _State, target: Term) -> Term:
    """Extend an under-applied class goal with fresh metas for the missing
    trailing parameters, so `add_monoid` can be asked about directly."""
    head, args = unfold_apps(target)
    if not isinstance(head, Const):
        return target
    decl = state.env.get(head.name)
    from .declarations import StructDecl
    if not isinstance(decl, StructDecl) or len(args) >= len(decl.params):
        return target
    extra = []
    mapping: dict[str, Term] = {b.name: a for b, a in zip(decl.params, args)}
    for binder in decl.params[len(args):]:
        m = state.metas.fresh(subst_frees(binder.ty, mapping))
        mapping[binder.name] = m
        extra.append(m)
    return apps(head, *(tuple(args) + tuple(extra)))


def _goal_class(target: Term) -> str | None:
    head, _ = unfold_apps(target)
    return head.name if isinstance(head, Const) else None


def _candidates(state: _State, cls: str | None) -> list[tuple[str, object]]:
    out: list[tuple[str, object]] = []
    for binder in reversed(state.ctx):
        if binder.instance_implicit:
            out.append(("local", binder))
    ranked = [(inst.priority, idx, inst)
              for idx, inst in enumerate(state.instances)
              if cls is None or inst.to_class == cls]
    ranked.sort(key=lambda t: (-t[0], -t[1]))
    out.extend(("global", inst) for _, _, inst in ranked)
    return out


def _solve(state: _State, target: Term, subst: dict[int, Term], depth: int,
           path: tuple[Term, ...]) -> tuple[Term, dict[int, Term]] | None:
    if depth > state.max_depth:
        raise DepthExceeded(state.max_depth)
    target = zonk(target, subst)
    trace = state.trace
    trace.step(f"goal: {pp_term(target)}")
    if any(seen == target for seen in path):
        trace.step("failed: goal already on path")
        return None
    path = path + (target,)
    trace.push()
    try:
        for kind, cand in _candidates(state, _goal_class(target)):
            if kind == "local":
                result = _try_local(state, cand, target, subst)
            else:
                result = _try_global(state, cand, target, subst, depth, path)
            if result is not None:
                term, new_subst = result
                trace.step(f"solved {pp_term(target)} := {pp_term(zonk(term, new_subst))}")
                return term, new_subst
        trace.step(f"failed: {pp_term(target)}")
        return None
    finally:
        trace.pop()


def _try_local(state: _State, binder: Binder, target: Term,
               subst: dict[int, Term]) -> tuple[Term, dict[int, Term]] | None:
    state.trace.step(f"try {binder.name} : {pp_term(binder.ty)}")
    try:
        new = unify(state.env, state.config, state.ctx, binder.ty, target,
                    subst=subst, meta_types=state.metas.types)
    except (Mismatch, OccursCheck):
        return None
    return FreeVar(binder.name), new


def _try_global(state: _State, inst: InstanceLike, target: Term,
                subst: dict[int, Term], depth: int,
                path: tuple[Term, ...]) -> tuple[Term, dict[int, Term]] | None:
    decl = state.env.get(inst.decl_name)
    if not isinstance(decl, DefDecl):
        return None
    state.trace.step(f"try {inst.decl_name} (priority {inst.priority})")
    mapping: dict[str, Term] = {}
    arg_metas: list[Meta] = []
    for binder in decl.binders:
        m = state.metas.fresh(subst_frees(binder.ty, mapping))
        mapping[binder.name] = m
        arg_metas.append(m)
    result_ty = subst_frees(decl.result_type, mapping)
    try:
        new = unify(state.env, state.config, state.ctx, result_ty, target,
                    subst=subst, meta_types=state.metas.types)
    except (Mismatch, OccursCheck):
        return None
    for binder, m in zip(decl.binders, arg_metas):
        if not binder.instance_implicit:
            continue
        current = zonk(m, new)
        if not isinstance(current, Meta):
            continue  # determined by unification with the goal
        sub_ty = zonk(state.metas.types[m.mid], new)
        sub_result = _solve(state, sub_ty, new, depth + 1, path)
        if sub_result is None:
            return None
        sub_term, new = sub_result
        new = dict(new)
        new[current.mid] = zonk(sub_term, new)
    value = zonk(apps(Const(decl.name), *arg_metas), new)
    if metas_in(value):
        state.trace.step("failed: unsolved arguments remain")
        return None
    return value, new
