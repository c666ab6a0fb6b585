"""Compiling surface classes into structures, instances, and goals.

Three encodings of ``extends`` are implemented:

- flat: every class stores all leaf fields directly (duplicates merged at
  first occurrence); one constructor-rebuilding forgetful instance per
  direct parent, priority 1000.
- nested: parents are processed in order; a parent sharing no field name
  with what was already collected becomes a substructure field ``to_<parent>``
  whose projection is registered as a preferred instance (priority 1000); an
  overlapping parent contributes only its missing leaf fields, and a
  synthesized constructor instance (priority 100) rebuilds it, filling
  substructure fields through the shortest preferred-projection path or a
  recursively built constructor, and leaf fields through their origin paths.
- flat_hack: an empty class is prepended to every extends list and the
  nested rules run; the shared empty substructure makes every real parent
  overlap, so no preferred edge between real classes survives.

The overlap test uses the parent's complete transitive field-name set
(substructure names included), which is exactly what makes flat_hack work.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Mapping

from .declarations import DefDecl, Environment, OpaqueDecl, StructDecl
from .kernel import DefEqConfig, DEFAULT_CONFIG
from .surface import (
    ClassItem, DefeqItem, GoalItem, InstanceItem, Pos, SOpaque, SurfaceModule,
    VariablesItem, resolve_expr,
)
from .terms import (
    Binder, Const, FreeVar, Mk, Proj, Telescope, Term, apps, subst_frees,
    unfold_apps,
)

FLAT_HACK_CLASS = "flat_hack"

PREFERRED = "preferred-projection"
SYNTHESIZED = "synthesized-constructor"
FLAT = "flat-constructor"
USER = "user-declared"

PRIORITY_PREFERRED = 1000
PRIORITY_SYNTHESIZED = 100


class ElabError(Exception):
    def __init__(self, message: str, pos: Pos | None = None) -> None:
        if pos is not None:
            message = f"{pos.line}:{pos.col}: {message}"
        super().__init__(message)
        self.pos = pos


class FieldTypeClash(ElabError):
    """The same leaf field is inherited with two non-alpha-equal types."""

    def __init__(self, field: str, class_a: str, class_b: str, pos: Pos | None = None) -> None:
        super().__init__(
            f"field {field!r} is inherited from {class_a} and {class_b} "
            f"with clashing types", pos)
        self.field = field


@dataclass(frozen=True)
class EncodingStrategy:
    """Which extends-encoding to use, plus per-class parent-order overrides."""

    kind: str = "nested"  # flat | nested | flat_hack
    parent_order: Mapping[str, tuple[str, ...]] = dc_field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in ("flat", "nested", "flat_hack"):
            raise ValueError(f"unknown encoding {self.kind!r}")

    def with_first_parent(self, overrides: Mapping[str, str]) -> "EncodingStrategy":
        """Derive a strategy that moves the named parent first for each class."""
        merged = dict(self.parent_order)
        for cls, parent in overrides.items():
            merged[cls] = ("!first", parent)  # resolved against declared order later
        return EncodingStrategy(self.kind, merged)


@dataclass(frozen=True)
class InstanceInfo:
    """One registered instance: a graph edge or a user declaration."""

    decl_name: str
    from_class: str | None
    to_class: str
    priority: int
    kind: str  # preferred-projection | synthesized-constructor | flat-constructor | user-declared


@dataclass(frozen=True)
class LayoutField:
    """One stored field of an elaborated class."""

    name: str
    ty: Term  # over the class parameters (and earlier layout fields)
    parent: str | None = None  # set for substructure fields
    parent_args: tuple[Term, ...] = ()


@dataclass
class ClassInfo:
    name: str
    params: Telescope
    parents: tuple[tuple[str, tuple[Term, ...]], ...]
    own_fields: tuple[tuple[str, Term], ...]
    layout: tuple[LayoutField, ...] = ()
    leaf_types: dict[str, Term] = dc_field(default_factory=dict)
    leaf_origins: dict[str, tuple[tuple[str, str], ...]] = dc_field(default_factory=dict)
    all_names: frozenset[str] = frozenset()

    @property
    def self_type(self) -> Term:
        return apps(Const(self.name), *(FreeVar(b.name) for b in self.params))


@dataclass
class Elaboration:
    """Everything produced from one surface module under one strategy.

    ``variables`` holds the telescope after the last ``variables`` block;
    goals and defeqs each capture the telescope in effect where they appear,
    since a later ``variables`` block replaces the ambient context.
    """

    strategy: EncodingStrategy
    env: Environment
    instances: list[InstanceInfo]
    classes: dict[str, ClassInfo]
    variables: Telescope
    goals: list[tuple[str, Telescope, Term]]
    defeqs: list[tuple[str, Telescope, Term, Term]]

    def instance_decl(self, name: str) -> DefDecl:
        decl = self.env[name]
        assert isinstance(decl, DefDecl)
        return decl


def flatten_fields(classes: Mapping[str, ClassInfo], name: str) -> list[tuple[str, Term]]:
    """The flat leaf-field view of a class: parents first (duplicates merged
    at first occurrence, alpha-equal types required), then own fields."""
    info = classes[name]
    merged: dict[str, Term] = {}
    sources: dict[str, str] = {}
    for parent, args in info.parents:
        mapping = _param_map(classes[parent], args)
        for leaf, ty in flatten_fields(classes, parent):
            ty = subst_frees(ty, mapping)
            if leaf in merged:
                if merged[leaf] != ty:
                    raise FieldTypeClash(leaf, sources[leaf], parent)
            else:
                merged[leaf] = ty
                sources[leaf] = parent
    for leaf, ty in info.own_fields:
        if leaf in merged:
            if merged[leaf] != ty:
                raise FieldTypeClash(leaf, sources[leaf], name)
        else:
            merged[leaf] = ty
            sources[leaf] = name
    return list(merged.items())


def _param_map(info: ClassInfo, args: tuple[Term, ...]) -> dict[str, Term]:
    return {b.name: a for b, a in zip(info.params, args)}


def elaborate(module: SurfaceModule, strategy: EncodingStrategy,
              config: DefEqConfig = DEFAULT_CONFIG) -> Elaboration:
    """Elaborate a parsed module under the given encoding strategy.

    Deterministic: the same module and strategy produce the same environment,
    declaration by declaration.
    """
    elab = Elaboration(strategy=strategy, env=Environment(), instances=[],
                       classes={}, variables=(), goals=[], defeqs=[])
    if strategy.kind == "flat_hack":
        _declare_class(elab, ClassItem(FLAT_HACK_CLASS, (), (), (), Pos(0, 0)))
    for item in module.items:
        if isinstance(item, ClassItem):
            _declare_class(elab, item)
        elif isinstance(item, InstanceItem):
            _declare_instance(elab, item, config)
        elif isinstance(item, VariablesItem):
            elab.variables = _resolve_binders(item.binders, (), elab.env)
        elif isinstance(item, GoalItem):
            elab.goals.append((item.label, elab.variables,
                               resolve_expr(item.target, elab.variables, elab.env)))
        elif isinstance(item, DefeqItem):
            elab.defeqs.append((item.label, elab.variables,
                                resolve_expr(item.lhs, elab.variables, elab.env),
                                resolve_expr(item.rhs, elab.variables, elab.env)))
    unused = sorted(set(strategy.parent_order) - set(elab.classes))
    if unused:
        raise ElabError(f"parent-order override names unknown class {unused[0]!r}")
    return elab


def preferred_edges(elab: Elaboration) -> frozenset[tuple[str, str]]:
    """The (from, to) pairs of all preferred-projection instances."""
    return frozenset((i.from_class, i.to_class) for i in elab.instances
                     if i.kind == PREFERRED and i.from_class is not None)


# ---------------------------------------------------------------------------
# Classes

def _declare_class(elab: Elaboration, item: ClassItem) -> None:
    if item.name in elab.classes:
        raise ElabError(f"duplicate class {item.name!r}", item.pos)
    params = _resolve_binders(item.binders, (), elab.env)
    parents = _resolve_parents(elab, item, params)
    own_scope = params
    own_fields: list[tuple[str, Term]] = []
    for f in item.fields:
        ty = resolve_expr(f.ty, own_scope, elab.env)
        own_fields.append((f.name, ty))
        own_scope = own_scope + (Binder(f.name, ty),)

    info = ClassInfo(item.name, params, parents, tuple(own_fields))
    elab.classes[item.name] = info
    try:
        if elab.strategy.kind == "flat":
            _layout_flat(elab, info)
        else:
            _layout_nested(elab, info, item.pos)
    except Exception:
        del elab.classes[item.name]
        raise

    struct = StructDecl(
        info.name, info.params,
        tuple(Binder(f.name, f.ty) for f in info.layout),
        f"{info.name}.mk")
    elab.env.add(struct)
    _declare_constructor(elab, info)
    _declare_projections(elab, info)
    _declare_forgetful_instances(elab, info)


def _resolve_binders(binders, scope: Telescope, env: Environment) -> Telescope:
    out = tuple(scope)
    for b in binders:
        ty = resolve_expr(b.ty, out, env)
        out = out + (Binder(b.name, ty, b.instance_implicit),)
    return out[len(scope):]


def _resolve_parents(elab: Elaboration, item: ClassItem,
                     params: Telescope) -> tuple[tuple[str, tuple[Term, ...]], ...]:
    declared: list[tuple[str, tuple[Term, ...]]] = []
    for parent_expr in item.parents:
        term = resolve_expr(parent_expr, params, elab.env)
        head, args = unfold_apps(term)
        if not isinstance(head, Const) or head.name not in elab.classes:
            raise ElabError(f"parent of {item.name!r} is not a declared class", item.pos)
        parent = elab.classes[head.name]
        if len(args) != len(parent.params):
            raise ElabError(
                f"parent {head.name!r} of {item.name!r} must be applied to all "
                f"{len(parent.params)} parameters", item.pos)
        if any(head.name == p for p, _ in declared):
            raise ElabError(f"duplicate parent {head.name!r} in {item.name!r}", item.pos)
        declared.append((head.name, tuple(args)))
    ordered = _apply_parent_order(elab.strategy, item.name, declared, item.pos)
    if elab.strategy.kind == "flat_hack" and item.name != FLAT_HACK_CLASS:
        ordered = [(FLAT_HACK_CLASS, ())] + ordered
    return tuple(ordered)


def _apply_parent_order(strategy: EncodingStrategy, name: str,
                        declared: list[tuple[str, tuple[Term, ...]]],
                        pos: Pos) -> list[tuple[str, tuple[Term, ...]]]:
    override = strategy.parent_order.get(name)
    if override is None:
        return declared
    by_name = {p: (p, a) for p, a in declared}
    if override and override[0] == "!first":
        first = override[1]
        if first not in by_name:
            raise ElabError(f"{name!r} has no parent {first!r} to put first", pos)
        return [by_name[first]] + [pa for pa in declared if pa[0] != first]
    if sorted(override) != sorted(by_name):
        raise ElabError(
            f"parent-order override for {name!r} must be a permutation of its "
            f"declared parents", pos)
    return [by_name[p] for p in override]


def _layout_flat(elab: Elaboration, info: ClassInfo) -> None:
    leaves = flatten_fields(elab.classes, info.name)
    info.layout = tuple(LayoutField(n, ty) for n, ty in leaves)
    info.leaf_types = dict(leaves)
    info.leaf_origins = {n: ((info.name, n),) for n, _ in leaves}
    info.all_names = frozenset(info.leaf_types)


def _layout_nested(elab: Elaboration, info: ClassInfo, pos: Pos) -> None:
    layout: list[LayoutField] = []
    collected: set[str] = set()
    leaf_types: dict[str, Term] = {}
    leaf_sources: dict[str, str] = {}
    origins: dict[str, tuple[tuple[str, str], ...]] = {}
    overlapping: list[tuple[str, tuple[Term, ...]]] = []

    for parent, args in info.parents:
        pinfo = elab.classes[parent]
        mapping = _param_map(pinfo, args)
        sub_name = f"to_{parent}"
        parent_names = pinfo.all_names | {sub_name}
        if not (parent_names & collected):
            layout.append(LayoutField(sub_name, apps(Const(parent), *args),
                                      parent=parent, parent_args=args))
            collected |= parent_names
            for leaf, path in pinfo.leaf_origins.items():
                origins[leaf] = ((info.name, sub_name),) + path
                leaf_types[leaf] = subst_frees(pinfo.leaf_types[leaf], mapping)
                leaf_sources[leaf] = parent
        else:
            overlapping.append((parent, args))
            for leaf, ty in flatten_fields(elab.classes, parent):
                ty = subst_frees(ty, mapping)
                if leaf in leaf_types:
                    if leaf_types[leaf] != ty:
                        raise FieldTypeClash(leaf, leaf_sources[leaf], parent, pos)
                    continue
                layout.append(LayoutField(leaf, ty))
                collected.add(leaf)
                leaf_types[leaf] = ty
                leaf_sources[leaf] = parent
                origins[leaf] = ((info.name, leaf),)

    for leaf, ty in info.own_fields:
        if leaf in leaf_types:
            if leaf_types[leaf] != ty:
                raise FieldTypeClash(leaf, leaf_sources[leaf], info.name, pos)
            continue
        if leaf in collected:
            raise ElabError(f"field name {leaf!r} collides with an inherited "
                            f"substructure field", pos)
        layout.append(LayoutField(leaf, ty))
        collected.add(leaf)
        leaf_types[leaf] = ty
        leaf_sources[leaf] = info.name
        origins[leaf] = ((info.name, leaf),)

    info.layout = tuple(layout)
    info.leaf_types = leaf_types
    info.leaf_origins = origins
    names = set(collected)
    for f in layout:
        names.add(f.name)
    info.all_names = frozenset(names)
    info.__dict__["_overlapping"] = tuple(overlapping)


def _declare_constructor(elab: Elaboration, info: ClassInfo) -> None:
    binders = info.params + tuple(Binder(f.name, f.ty) for f in info.layout)
    body = Mk(info.name,
              tuple(FreeVar(b.name) for b in info.params),
              tuple(FreeVar(f.name) for f in info.layout))
    elab.env.add(DefDecl(f"{info.name}.mk", binders, info.self_type, body))


def _declare_projections(elab: Elaboration, info: ClassInfo) -> None:
    # The value argument is instance-implicit so substructure projections
    # can serve directly as forgetful instances during resolution.
    self_binder = Binder("self", info.self_type, instance_implicit=True)
    mapping: dict[str, Term] = {}
    for f in info.layout:
        ty = subst_frees(f.ty, mapping)
        elab.env.add(DefDecl(f"{info.name}.{f.name}",
                             info.params + (self_binder,), ty,
                             Proj(info.name, f.name, FreeVar("self"))))
        mapping[f.name] = Proj(info.name, f.name, FreeVar("self"))


def _declare_forgetful_instances(elab: Elaboration, info: ClassInfo) -> None:
    if elab.strategy.kind == "flat":
        for parent, args in info.parents:
            _synthesize_flat_instance(elab, info, parent, args)
        return
    for f in info.layout:
        if f.parent is not None:
            elab.instances.append(InstanceInfo(
                f"{info.name}.{f.name}", info.name, f.parent,
                PRIORITY_PREFERRED, PREFERRED))
    for parent, args in getattr(info, "_overlapping", ()):
        _synthesize_nested_instance(elab, info, parent, args)


def _forgetful_binders(info: ClassInfo) -> tuple[Telescope, Term]:
    binders = info.params + (Binder("i", info.self_type, instance_implicit=True),)
    return binders, FreeVar("i")


def _synthesize_flat_instance(elab: Elaboration, info: ClassInfo,
                              parent: str, args: tuple[Term, ...]) -> None:
    binders, self_var = _forgetful_binders(info)
    fields = tuple(Proj(info.name, leaf, self_var)
                   for leaf, _ in flatten_fields(elab.classes, parent))
    decl_name = f"{info.name}.to_{parent}"
    elab.env.add(DefDecl(decl_name, binders, apps(Const(parent), *args),
                         Mk(parent, args, fields)))
    elab.instances.append(InstanceInfo(decl_name, info.name, parent,
                                       PRIORITY_PREFERRED, FLAT))


def _synthesize_nested_instance(elab: Elaboration, info: ClassInfo,
                                parent: str, args: tuple[Term, ...]) -> None:
    binders, self_var = _forgetful_binders(info)
    body = _build_parent_value(elab, info, parent, args, self_var)
    decl_name = f"{info.name}.to_{parent}"
    elab.env.add(DefDecl(decl_name, binders, apps(Const(parent), *args), body))
    elab.instances.append(InstanceInfo(decl_name, info.name, parent,
                                       PRIORITY_SYNTHESIZED, SYNTHESIZED))


def _build_parent_value(elab: Elaboration, info: ClassInfo, target: str,
                        args: tuple[Term, ...], self_var: Term) -> Term:
    """Rebuild a value of target from a derived value: substructure fields
    go through the shortest preferred-projection path when one exists (ties
    toward the earliest-declared parent) or a recursive constructor
    otherwise; leaf fields follow their recorded origin paths."""
    tinfo = elab.classes[target]
    mapping = _param_map(tinfo, args)
    fields: list[Term] = []
    for f in tinfo.layout:
        if f.parent is not None:
            sub_args = tuple(subst_frees(a, mapping) for a in f.parent_args)
            path = _preferred_path(elab, info.name, f.parent)
            if path is not None:
                value = self_var
                for cls, fname in path:
                    value = Proj(cls, fname, value)
            else:
                value = _build_parent_value(elab, info, f.parent, sub_args, self_var)
            fields.append(value)
        else:
            value = self_var
            for cls, fname in info.leaf_origins[f.name]:
                value = Proj(cls, fname, value)
            fields.append(value)
    return Mk(target, args, tuple(fields))


def _preferred_path(elab: Elaboration, source: str,
                    target: str) -> tuple[tuple[str, str], ...] | None:
    """Breadth-first search over substructure projections, layout order."""
    if source == target:
        return ()
    queue: list[tuple[str, tuple[tuple[str, str], ...]]] = [(source, ())]
    seen = {source}
    while queue:
        cls, path = queue.pop(0)
        for f in elab.classes[cls].layout:
            if f.parent is None or f.parent in seen:
                continue
            step = path + ((cls, f.name),)
            if f.parent == target:
                return step
            seen.add(f.parent)
            queue.append((f.parent, step))
    return None


# ---------------------------------------------------------------------------
# Instances

def _declare_instance(elab: Elaboration, item: InstanceItem, config: DefEqConfig) -> None:
    binders = _resolve_binders(item.binders, (), elab.env)
    target = resolve_expr(item.target, binders, elab.env)
    head, args = unfold_apps(target)
    if not isinstance(head, Const) or head.name not in elab.classes:
        raise ElabError(f"instance {item.name!r} must target a declared class", item.pos)
    cinfo = elab.classes[head.name]
    full_args = _fill_instance_args(elab, item, cinfo, tuple(args), binders, config)
    target = apps(Const(cinfo.name), *full_args)

    leaves = [(leaf, subst_frees(ty, _param_map(cinfo, full_args)))
              for leaf, ty in flatten_fields(elab.classes, cinfo.name)]
    expected = {leaf for leaf, _ in leaves}
    assigned: dict[str, Term] = {}
    for a in item.assignments:
        if a.name not in expected:
            raise ElabError(
                f"{item.name!r} assigns {a.name!r}, which is not a leaf field "
                f"of {cinfo.name!r}", a.pos)
        if a.name in assigned:
            raise ElabError(f"{item.name!r} assigns {a.name!r} twice", a.pos)
        assigned[a.name] = a.value
    missing = [leaf for leaf, _ in leaves if leaf not in assigned]
    if missing:
        raise ElabError(f"{item.name!r} is missing fields {missing}", item.pos)

    values: dict[str, Term] = {}
    for leaf, leaf_ty in leaves:
        raw = assigned[leaf]
        if isinstance(raw, SOpaque):
            opaque_name = f"{item.name}.{leaf}"
            elab.env.add(OpaqueDecl(opaque_name, binders, leaf_ty))
            values[leaf] = apps(Const(opaque_name),
                                *(FreeVar(b.name) for b in binders))
        else:
            values[leaf] = resolve_expr(raw, binders, elab.env)

    body = _pack_value(elab, cinfo.name, full_args, values)
    elab.env.add(DefDecl(item.name, binders, target, body))
    priority = item.priority if item.priority is not None else PRIORITY_PREFERRED
    elab.instances.append(InstanceInfo(item.name, None, cinfo.name, priority, USER))


def _fill_instance_args(elab: Elaboration, item: InstanceItem, cinfo: ClassInfo,
                        args: tuple[Term, ...], binders: Telescope,
                        config: DefEqConfig) -> tuple[Term, ...]:
    """Complete an under-applied class target by resolving the missing
    instance-implicit parameters in the instance's binder context."""
    if len(args) > len(cinfo.params):
        raise ElabError(f"instance {item.name!r} applies {cinfo.name!r} to too "
                        f"many arguments", item.pos)
    if len(args) == len(cinfo.params):
        return args
    from .resolution import ResolutionError, resolve
    full = list(args)
    for param in cinfo.params[len(args):]:
        mapping = {b.name: a for b, a in zip(cinfo.params, full)}
        if not param.instance_implicit:
            raise ElabError(
                f"instance {item.name!r} leaves explicit parameter "
                f"{param.name!r} of {cinfo.name!r} unapplied", item.pos)
        subgoal = subst_frees(param.ty, mapping)
        try:
            term, _trace = resolve(elab.env, elab.instances, binders, subgoal,
                                   config=config)
        except ResolutionError as exc:
            raise ElabError(
                f"cannot synthesize argument [{param.name} : "
                f"{subgoal}] of instance {item.name!r}: {exc}", item.pos) from None
        full.append(term)
    return tuple(full)


def _pack_value(elab: Elaboration, cls: str, args: tuple[Term, ...],
                values: dict[str, Term]) -> Term:
    """Pack leaf values into this encoding's constructor shape."""
    info = elab.classes[cls]
    mapping = _param_map(info, args)
    fields: list[Term] = []
    for f in info.layout:
        if f.parent is not None:
            sub_args = tuple(subst_frees(a, mapping) for a in f.parent_args)
            fields.append(_pack_value(elab, f.parent, sub_args, values))
        else:
            fields.append(values[f.name])
    return Mk(cls, args, tuple(fields))
