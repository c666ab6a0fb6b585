"""Kernel tests: reduction, definitional equality, type inference, and
first-order unification."""

import pytest

from hierlab.declarations import Environment, OpaqueDecl, StructDecl
from hierlab.kernel import (
    DEFAULT_CONFIG,
    DefEqConfig,
    FuelExhausted,
    IllTyped,
    Mismatch,
    OccursCheck,
    Trace,
    check_type,
    defeq,
    infer_type,
    unify,
    whnf,
)
from hierlab.surface import parse_term
from hierlab.terms import (
    App,
    Binder,
    BoundVar,
    Const,
    FreeVar,
    Lam,
    Meta,
    Mk,
    Pi,
    Proj,
    Sort,
    apps,
    subst_frees,
)
from conftest import ETA_OFF, ETA_ON, UNIFIER_ON


@pytest.fixture(scope="module")
def tiny_env():
    """An environment with one opaque ground type and a two-field record."""
    env = Environment()
    env.add(OpaqueDecl("ι", (), Sort()))
    env.add(OpaqueDecl("a", (), Const("ι")))
    env.add(OpaqueDecl("b", (), Const("ι")))
    env.add(StructDecl("pair", (), (Binder("fst", Const("ι")), Binder("snd", Const("ι"))),
                       "pair.mk"))
    return env


# ---------------------------------------------------------------------------
# Weak head normal form

def test_whnf_beta_reduces_applied_lambdas(tiny_env):
    t = App(Lam("x", Const("ι"), BoundVar(0)), Const("a"))
    assert whnf(tiny_env, DEFAULT_CONFIG, (), t) == Const("a")


def test_whnf_iota_reduces_projected_constructors(tiny_env):
    t = Proj("pair", "snd", Mk("pair", (), (Const("a"), Const("b"))))
    assert whnf(tiny_env, DEFAULT_CONFIG, (), t) == Const("b")


def test_whnf_delta_unfolds_definitions(fig1_nested):
    ctx = fig1_nested.defeqs[0][1]
    t = parse_term("ring.to_semiring R iR", ctx, fig1_nested.env)
    assert whnf(fig1_nested.env, DEFAULT_CONFIG, ctx, t) == \
        Proj("ring", "to_semiring", FreeVar("iR"))


def test_whnf_stops_at_constructors(fig1_nested):
    ctx = fig1_nested.defeqs[0][1]
    t = parse_term("ring.to_add_comm_group R iR", ctx, fig1_nested.env)
    out = whnf(fig1_nested.env, DEFAULT_CONFIG, ctx, t)
    assert isinstance(out, Mk)
    assert out.struct == "add_comm_group"


def test_whnf_keeps_stuck_projections_in_declared_form(fig1_nested):
    """A projection whose target is neutral comes back exactly as given,
    without the target being rewritten to its reduced form."""
    ctx = fig1_nested.defeqs[0][1]
    t = Proj("semiring", "to_add_comm_monoid",
             parse_term("ring.to_semiring R iR", ctx, fig1_nested.env))
    assert whnf(fig1_nested.env, DEFAULT_CONFIG, ctx, t) == t


def test_whnf_opaque_constants_do_not_unfold(tiny_env):
    assert whnf(tiny_env, DEFAULT_CONFIG, (), Const("a")) == Const("a")


def test_whnf_fuel_exhaustion_raises(fig1_nested):
    ctx = fig1_nested.defeqs[0][1]
    t = parse_term("semiring.to_add_comm_monoid R (ring.to_semiring R iR)",
                   ctx, fig1_nested.env)
    with pytest.raises(FuelExhausted):
        whnf(fig1_nested.env, DefEqConfig(unfold_depth=1), ctx, t)


# ---------------------------------------------------------------------------
# Definitional equality: the inheritance-diamond scenario

def diamond_sides(elab):
    label, ctx, lhs, rhs = elab.defeqs[0]
    assert label == "diamond"
    return ctx, lhs, rhs


def test_diamond_not_defeq_under_nested_encoding_without_eta(fig1_nested):
    ctx, lhs, rhs = diamond_sides(fig1_nested)
    assert defeq(fig1_nested.env, ETA_OFF, ctx, lhs, rhs) is False


def test_diamond_defeq_under_flat_encoding_without_eta(fig1_flat):
    ctx, lhs, rhs = diamond_sides(fig1_flat)
    assert defeq(fig1_flat.env, ETA_OFF, ctx, lhs, rhs) is True


def test_diamond_defeq_under_nested_encoding_with_eta(fig1_nested):
    ctx, lhs, rhs = diamond_sides(fig1_nested)
    assert defeq(fig1_nested.env, ETA_ON, ctx, lhs, rhs) is True


def test_diamond_defeq_under_flat_hack_without_eta(fig1_hack):
    ctx, lhs, rhs = diamond_sides(fig1_hack)
    assert defeq(fig1_hack.env, ETA_OFF, ctx, lhs, rhs) is True


def test_defeq_is_reflexive_on_neutral_terms(fig1_nested):
    ctx = fig1_nested.defeqs[0][1]
    assert defeq(fig1_nested.env, ETA_OFF, ctx, FreeVar("iR"), FreeVar("iR"))


def test_defeq_trace_records_unfold_and_eta_steps(fig1_nested):
    ctx, lhs, rhs = diamond_sides(fig1_nested)
    trace = Trace()
    assert defeq(fig1_nested.env, ETA_ON, ctx, lhs, rhs, trace=trace)
    rendered = trace.render()
    assert "delta" in rendered
    assert "eta" in rendered


# ---------------------------------------------------------------------------
# Structural eta on a plain record

def test_record_equals_constructor_of_projections_only_with_eta(point_nested):
    label, ctx, lhs, rhs = point_nested.defeqs[0]
    assert label == "eta"
    assert defeq(point_nested.env, ETA_OFF, ctx, lhs, rhs) is False
    assert defeq(point_nested.env, ETA_ON, ctx, lhs, rhs) is True


def test_eta_rejects_swapped_projections(tiny_env):
    ctx = (Binder("p", Const("pair")),)
    swapped = Mk("pair", (), (Proj("pair", "snd", FreeVar("p")),
                              Proj("pair", "fst", FreeVar("p"))))
    assert defeq(tiny_env, ETA_ON, ctx, FreeVar("p"), swapped) is False
    assert defeq(tiny_env, ETA_OFF, ctx, FreeVar("p"), swapped) is False


def test_eta_applies_on_either_side(tiny_env):
    ctx = (Binder("p", Const("pair")),)
    expanded = Mk("pair", (), (Proj("pair", "fst", FreeVar("p")),
                               Proj("pair", "snd", FreeVar("p"))))
    assert defeq(tiny_env, ETA_ON, ctx, expanded, FreeVar("p")) is True
    assert defeq(tiny_env, ETA_ON, ctx, FreeVar("p"), expanded) is True


def test_constructors_compare_fieldwise(tiny_env):
    x = Mk("pair", (), (Const("a"), Const("b")))
    y = Mk("pair", (), (Const("a"), Const("b")))
    z = Mk("pair", (), (Const("b"), Const("a")))
    assert defeq(tiny_env, ETA_OFF, (), x, y) is True
    assert defeq(tiny_env, ETA_OFF, (), x, z) is False


def test_lambdas_compare_up_to_alpha(tiny_env):
    f = Lam("x", Const("ι"), BoundVar(0))
    g = Lam("y", Const("ι"), BoundVar(0))
    assert defeq(tiny_env, ETA_OFF, (), f, g) is True


def test_pi_types_compare_componentwise(tiny_env):
    p = Pi("x", Const("ι"), Const("ι"))
    q = Pi("y", Const("ι"), Const("ι"))
    r = Pi("x", Const("ι"), Sort())
    assert defeq(tiny_env, ETA_OFF, (), p, q) is True
    assert defeq(tiny_env, ETA_OFF, (), p, r) is False


# ---------------------------------------------------------------------------
# Type inference and checking

def test_infer_projection_type(fig1_nested):
    ctx = fig1_nested.defeqs[0][1]
    ty = infer_type(fig1_nested.env, ctx, Proj("ring", "neg", FreeVar("iR")))
    assert ty == Pi("_", FreeVar("R"), FreeVar("R"))


def test_infer_constructor_type(tiny_env):
    ty = infer_type(tiny_env, (), Mk("pair", (), (Const("a"), Const("b"))))
    assert ty == Const("pair")


def test_infer_instance_definition_type(fig1_nested):
    ctx = fig1_nested.defeqs[0][1]
    t = parse_term("ring.to_semiring R iR", ctx, fig1_nested.env)
    assert infer_type(fig1_nested.env, ctx, t) == \
        apps(Const("semiring"), FreeVar("R"))


def test_infer_rejects_applying_a_non_function(tiny_env):
    with pytest.raises(IllTyped):
        infer_type(tiny_env, (), App(Const("a"), Const("b")))


def test_infer_rejects_unknown_constants(tiny_env):
    with pytest.raises(IllTyped):
        infer_type(tiny_env, (), Const("nonexistent"))


def test_infer_rejects_loose_bound_variables(tiny_env):
    with pytest.raises(IllTyped):
        infer_type(tiny_env, (), BoundVar(0))


def test_infer_rejects_wrong_structure_projection(tiny_env):
    with pytest.raises(IllTyped):
        infer_type(tiny_env, (), Proj("pair", "fst", Const("a")))


def test_infer_meta_requires_a_recorded_type(tiny_env):
    with pytest.raises(IllTyped):
        infer_type(tiny_env, (), Meta(0))
    assert infer_type(tiny_env, (), Meta(0), meta_types={0: Const("ι")}) == Const("ι")


def test_check_type_verifies_constructor_fields(tiny_env):
    bad = Mk("pair", (), (Const("a"), Const("pair")))
    with pytest.raises(IllTyped):
        check_type(tiny_env, DEFAULT_CONFIG, (), bad)


def test_check_type_against_expected(tiny_env):
    check_type(tiny_env, DEFAULT_CONFIG, (), Const("a"), expected=Const("ι"))
    with pytest.raises(IllTyped):
        check_type(tiny_env, DEFAULT_CONFIG, (), Const("a"), expected=Const("pair"))


def test_forgetful_instance_bodies_typecheck(fig1_nested):
    """Every synthesized definition in the environment checks against its
    declared result type, with eta disabled."""
    from hierlab.declarations import DefDecl
    for decl in fig1_nested.env:
        if isinstance(decl, DefDecl):
            ty = check_type(fig1_nested.env, ETA_OFF, decl.binders, decl.body)
            assert defeq(fig1_nested.env, ETA_OFF, decl.binders, ty, decl.result_type)


# ---------------------------------------------------------------------------
# Unification

def test_unify_assigns_bare_metas(tiny_env):
    subst = unify(tiny_env, DEFAULT_CONFIG, (), Meta(0), Const("a"))
    assert subst == {0: Const("a")}


def test_unify_keeps_assignments_in_declared_form(fig1_nested):
    """Solutions are recorded before reduction, so a goal built from named
    instances keeps those names instead of their unfolded bodies."""
    ctx = fig1_nested.defeqs[0][1]
    rhs = parse_term("ring.to_semiring R iR", ctx, fig1_nested.env)
    subst = unify(fig1_nested.env, DEFAULT_CONFIG, ctx, Meta(0), rhs)
    assert subst[0] == apps(Const("ring.to_semiring"), FreeVar("R"), FreeVar("iR"))


def test_unify_existing_substitution_is_not_mutated_on_failure(tiny_env):
    base = {0: Const("a")}
    with pytest.raises(Mismatch):
        unify(tiny_env, DEFAULT_CONFIG, (), Const("a"), Const("b"), subst=base)
    assert base == {0: Const("a")}


def test_unify_occurs_check(tiny_env):
    with pytest.raises(OccursCheck):
        unify(tiny_env, DEFAULT_CONFIG, (),
              Meta(0), Mk("pair", (), (Const("a"), Meta(0))))


def test_unify_mismatch_on_distinct_rigid_heads(tiny_env):
    with pytest.raises(Mismatch):
        unify(tiny_env, DEFAULT_CONFIG, (), Const("a"), Const("b"))


def test_unify_matches_under_applications(fig1_nested):
    ctx = fig1_nested.defeqs[0][1]
    goal = parse_term("add_comm_monoid R", ctx, fig1_nested.env)
    pattern = apps(Const("add_comm_monoid"), Meta(0))
    subst = unify(fig1_nested.env, DEFAULT_CONFIG, ctx, pattern, goal)
    assert subst[0] == FreeVar("R")


def metaized_instance_target(elab, name: str):
    """The instance's result type with fresh metas for its binders, plus
    the list of those metas in binder order."""
    decl = elab.instance_decl(name)
    mapping = {}
    metas = []
    for i, b in enumerate(decl.binders):
        mapping[b.name] = Meta(i)
        metas.append(Meta(i))
    return subst_frees(decl.result_type, mapping), metas


def test_unifier_eta_gates_matching_projection_against_constructor(module_nested):
    """Matching a goal whose pinned instance argument reduces to a
    constructor against a candidate that stays a stuck projection needs
    structural eta inside the unifier."""
    label, ctx, goal = module_nested.goals[2]
    assert label == "neg_smul"
    pattern, _metas = metaized_instance_target(module_nested, "semiring.to_module")
    with pytest.raises(Mismatch):
        unify(module_nested.env, ETA_OFF, ctx, pattern, goal)
    with pytest.raises(Mismatch):
        unify(module_nested.env, ETA_ON, ctx, pattern, goal)  # kernel flag is not enough
    subst = unify(module_nested.env, UNIFIER_ON, ctx, pattern, goal)
    assert subst[1] == parse_term("ring.to_semiring R iR", ctx, module_nested.env)


def test_unifier_needs_no_eta_once_the_instance_is_a_constructor(module_nested):
    """With a concrete instance constant, both sides reduce to constructor
    form and the same match succeeds without any eta."""
    label, ctx, goal = module_nested.goals[3]
    assert label == "neg_smul_int"
    pattern, _metas = metaized_instance_target(module_nested, "semiring.to_module")
    subst = unify(module_nested.env, ETA_OFF, ctx, pattern, goal)
    assert subst[0] == Const("int")


def test_unify_trace_logs_assignments(tiny_env):
    trace = Trace()
    unify(tiny_env, DEFAULT_CONFIG, (), Meta(0), Const("a"), trace=trace)
    assert any(line.startswith("assign ?0") for line in trace.lines)
