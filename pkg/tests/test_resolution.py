"""Instance-search tests: the scenario rows, priorities, failure modes,
trace output, and soundness of returned terms."""

import pytest

from hierlab.declarations import DefDecl, Environment, StructDecl
from hierlab.elaborator import EncodingStrategy, elaborate
from hierlab.kernel import Trace, check_type, infer_type, defeq
from hierlab.resolution import DepthExceeded, NotFound, resolve
from hierlab.surface import parse, parse_term
from hierlab.terms import Binder, Const, FreeVar, Mk, Sort, apps
from conftest import ETA_OFF, ETA_ON, UNIFIER_ON, corpus_path


def goal_by_label(elab, label):
    for name, ctx, goal in elab.goals:
        if name == label:
            return ctx, goal
    raise KeyError(label)


R = FreeVar("R")
iR = FreeVar("iR")
iS = FreeVar("iS")


# ---------------------------------------------------------------------------
# The scenario rows

def test_weakening_goal_composes_forgetful_instances(fig1_nested):
    ctx, goal = goal_by_label(fig1_nested, "weaken")
    term, _ = resolve(fig1_nested.env, fig1_nested.instances, ctx, goal)
    assert term == apps(Const("semiring.to_add_comm_monoid"), R,
                        apps(Const("ring.to_semiring"), R, iR))


def test_module_goal_from_a_semiring_context(module_nested):
    ctx, goal = goal_by_label(module_nested, "module_from_semiring")
    term, _ = resolve(module_nested.env, module_nested.instances, ctx, goal)
    assert term == apps(Const("semiring.to_module"), R, iS)


def test_module_goal_from_a_ring_context(module_nested):
    ctx, goal = goal_by_label(module_nested, "module_from_ring")
    term, _ = resolve(module_nested.env, module_nested.instances, ctx, goal)
    assert term == apps(Const("semiring.to_module"), R,
                        apps(Const("ring.to_semiring"), R, iR))


def test_pinned_instance_arguments_block_search_without_unifier_eta(module_nested):
    """A goal that names the non-preferred route in its indices cannot be
    matched by the preferred-route candidate: one side stays a stuck
    projection while the other reduces to a constructor."""
    ctx, goal = goal_by_label(module_nested, "neg_smul")
    with pytest.raises(NotFound):
        resolve(module_nested.env, module_nested.instances, ctx, goal,
                config=ETA_OFF)
    with pytest.raises(NotFound):
        resolve(module_nested.env, module_nested.instances, ctx, goal,
                config=ETA_ON)


def test_pinned_goal_succeeds_with_unifier_eta(module_nested):
    ctx, goal = goal_by_label(module_nested, "neg_smul")
    term, _ = resolve(module_nested.env, module_nested.instances, ctx, goal,
                      config=UNIFIER_ON)
    assert term == apps(Const("semiring.to_module"), R,
                        apps(Const("ring.to_semiring"), R, iR))


def test_pinned_goal_succeeds_under_flat_encoding(module_flat):
    ctx, goal = goal_by_label(module_flat, "neg_smul")
    term, _ = resolve(module_flat.env, module_flat.instances, ctx, goal,
                      config=ETA_OFF)
    assert term == apps(Const("semiring.to_module"), R,
                        apps(Const("ring.to_semiring"), R, iR))


def test_concrete_instance_constant_unblocks_the_pinned_goal(module_nested):
    """Replacing the context variable by a constructor constant lets both
    routes reduce, so the match goes through without any eta."""
    ctx, goal = goal_by_label(module_nested, "neg_smul_int")
    term, _ = resolve(module_nested.env, module_nested.instances, ctx, goal,
                      config=ETA_OFF)
    assert term == apps(Const("semiring.to_module"), Const("int"),
                        apps(Const("ring.to_semiring"), Const("int"),
                             Const("int.ring")))


def test_root_arguments_variant_resolves_without_eta(rootonly_nested):
    """When every class argument of the goal lives at the hierarchy root,
    all projection paths are preferred and search needs no eta anywhere."""
    for label in ("rmodule_from_ring", "rmodule_pinned"):
        ctx, goal = goal_by_label(rootonly_nested, label)
        term, _ = resolve(rootonly_nested.env, rootonly_nested.instances,
                          ctx, goal, config=ETA_OFF)
        assert term == apps(Const("semiring.to_rmodule"), R,
                            apps(Const("ring.to_semiring"), R, iR))


# ---------------------------------------------------------------------------
# Candidate selection

def test_context_binders_win_over_global_instances(fig1_nested):
    ctx = fig1_nested.defeqs[0][1]
    goal = parse_term("ring R", ctx, fig1_nested.env)
    term, _ = resolve(fig1_nested.env, fig1_nested.instances, ctx, goal)
    assert term == iR


def test_later_context_binders_shadow_earlier_ones(fig1_nested):
    ring_R = apps(Const("ring"), R)
    ctx = (Binder("R", Sort()),
           Binder("i1", ring_R, instance_implicit=True),
           Binder("i2", ring_R, instance_implicit=True))
    term, _ = resolve(fig1_nested.env, fig1_nested.instances, ctx, ring_R)
    assert term == FreeVar("i2")


def test_under_applied_goals_are_saturated_with_holes(fig1_nested):
    ctx, goal = goal_by_label(fig1_nested, "weaken")
    bare = Const("add_comm_monoid")
    term, _ = resolve(fig1_nested.env, fig1_nested.instances, ctx, bare)
    full_term, _ = resolve(fig1_nested.env, fig1_nested.instances, ctx, goal)
    assert term == full_term


PRIORITY_SHORTCUT = """
{attr}instance acg_shortcut (α : Type) [i : add_comm_group α] : add_comm_monoid α where
  (zero := add_monoid.zero α (add_group.to_add_monoid α (add_comm_group.to_add_group α i)))
  (add := add_monoid.add α (add_group.to_add_monoid α (add_comm_group.to_add_group α i)))
"""


def shortcut_elaboration(attr: str):
    # The instance goes before the trailing goal items: expressions are
    # whitespace-insensitive, so an `@[...]` attribute directly after a
    # defeq expression would parse as a continuation of that expression.
    base = corpus_path("fig1.hier").read_text()
    head, sep, tail = base.partition("goal")
    text = head + PRIORITY_SHORTCUT.format(attr=attr) + sep + tail
    return elaborate(parse(text), EncodingStrategy("nested"))


def test_high_priority_user_instance_wins_over_synthesized_route():
    elab = shortcut_elaboration("")
    ctx = (Binder("R", Sort()),
           Binder("i", apps(Const("add_comm_group"), R), instance_implicit=True))
    goal = apps(Const("add_comm_monoid"), R)
    term, _ = resolve(elab.env, elab.instances, ctx, goal)
    assert term == apps(Const("acg_shortcut"), R, FreeVar("i"))


def test_low_priority_user_instance_loses_to_synthesized_route():
    elab = shortcut_elaboration("@[priority 10] ")
    ctx = (Binder("R", Sort()),
           Binder("i", apps(Const("add_comm_group"), R), instance_implicit=True))
    goal = apps(Const("add_comm_monoid"), R)
    term, _ = resolve(elab.env, elab.instances, ctx, goal)
    assert term == apps(Const("add_comm_group.to_add_comm_monoid"), R, FreeVar("i"))


# ---------------------------------------------------------------------------
# Failure modes

def test_not_found_on_an_environment_without_instances():
    env = Environment()
    env.add(StructDecl("cls", (Binder("α", Sort()),), (), "cls.mk"))
    goal = apps(Const("cls"), FreeVar("T"))
    with pytest.raises(NotFound) as err:
        resolve(env, [], (Binder("T", Sort()),), goal)
    assert "no instance found" in str(err.value)


def test_depth_limit_stops_ever_growing_searches():
    """An instance whose own requirement is strictly larger than its result
    diverges; the search must fail with the depth error, not hang."""
    env = Environment()
    env.add(StructDecl("wrap", (Binder("α", Sort()),), (), "wrap.mk"))
    env.add(StructDecl("step", (Binder("α", Sort()),), (), "step.mk"))
    alpha = FreeVar("α")
    grow = DefDecl(
        "grow",
        (Binder("α", Sort()),
         Binder("i", apps(Const("wrap"), apps(Const("step"), alpha)),
                instance_implicit=True)),
        apps(Const("wrap"), alpha),
        Mk("wrap", (alpha,), ()))
    env.add(grow)

    class Info:
        decl_name = "grow"
        to_class = "wrap"
        priority = 1000

    with pytest.raises(DepthExceeded):
        resolve(env, [Info()], (Binder("T", Sort()),),
                apps(Const("wrap"), FreeVar("T")), max_depth=8)


def test_max_depth_bounds_legitimate_searches_too(module_nested):
    ctx, goal = goal_by_label(module_nested, "module_from_ring")
    with pytest.raises(DepthExceeded):
        resolve(module_nested.env, module_nested.instances, ctx, goal, max_depth=1)


def test_repeated_goal_on_the_search_path_is_cut(fig1_nested):
    """Self-referential candidates are skipped by the path guard instead of
    looping, and the search keeps trying other candidates."""
    text = corpus_path("fig1.hier").read_text() + """
instance am_self (α : Type) [i : add_monoid α] : add_monoid α where
  (zero := add_monoid.zero α i)
  (add := add_monoid.add α i)
"""
    elab = elaborate(parse(text), EncodingStrategy("nested"))
    ctx = elab.defeqs[0][1]
    goal = parse_term("add_monoid R", ctx, elab.env)
    term, trace = resolve(elab.env, elab.instances, ctx, goal)
    assert any("already on path" in line for line in trace.lines)
    assert infer_type(elab.env, ctx, term) == goal


# ---------------------------------------------------------------------------
# Traces and soundness

def test_trace_records_goals_candidates_and_outcomes(fig1_nested):
    ctx, goal = goal_by_label(fig1_nested, "weaken")
    _, trace = resolve(fig1_nested.env, fig1_nested.instances, ctx, goal)
    lines = trace.lines
    assert any(line.lstrip().startswith("goal: ") for line in lines)
    assert any(line.lstrip().startswith("try ") for line in lines)
    assert any(line.lstrip().startswith("solved ") for line in lines)


def test_trace_records_failures(module_nested):
    ctx, goal = goal_by_label(module_nested, "neg_smul")
    trace = Trace()
    with pytest.raises(NotFound):
        resolve(module_nested.env, module_nested.instances, ctx, goal,
                config=ETA_OFF, trace=trace)
    assert any("failed" in line for line in trace.lines)


def test_resolved_terms_typecheck_against_their_goals(module_nested, fig1_nested,
                                                      rootonly_nested):
    """The type of every returned term is definitionally equal to the goal
    it was asked for (on fully applied goals)."""
    cases = [
        (fig1_nested, "weaken", ETA_ON),
        (module_nested, "neg_smul_int", ETA_OFF),
        (rootonly_nested, "rmodule_pinned", ETA_OFF),
    ]
    for elab, label, config in cases:
        ctx, goal = goal_by_label(elab, label)
        term, _ = resolve(elab.env, elab.instances, ctx, goal, config=config)
        ty = check_type(elab.env, config, ctx, term)
        assert defeq(elab.env, config, ctx, ty, goal)
