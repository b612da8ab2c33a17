"""
Tests for HOCBF synthesis.

Tests verify:
- Predicate categories at x0 and the infeasible/unsupported cases
- Ledger layout (entries in deadline order, pair constraints, release flags)
- Squashed parameters satisfy every ledger constraint for arbitrary raw outputs
- Gradients flow from the squashed γ back to the raw outputs
- Deletion rules
"""

import math

import numpy as np
import pytest

from barrierstl.core.autodiff import Tape
from barrierstl.core.exceptions import (
    CategoryInfeasibleError,
    CategoryMismatchError,
    LedgerInfeasibleError,
    UnsupportedShapeError,
)
from barrierstl.models.barrier import DeletionRule, GammaKind, PredicateCategory
from barrierstl.models.dynamics import get_dynamics
from barrierstl.models.scenario import SynthesisConfig
from barrierstl.models.shapes import Circle, Superellipse
from barrierstl.services.hocbf import (
    DeletionTracker,
    build_ledger,
    categorize,
    check_categories,
    sup_h,
)
from barrierstl.services.stl import parse

I, II, III = PredicateCategory.I, PredicateCategory.II, PredicateCategory.III
BENCHMARK = "F[0,2] reg1 & F[2,5] reg2 & G[0,5] (!obs1 & !obs2)"
X0 = np.array([0.5, 0.5, 0.0, 0.0])

EXP_SHAPES = {"reg": Circle((3.0, 3.0), 1.0), "zone": Circle((0.5, 0.5), 3.0)}
EXP_FORMULA = "F[0,2] reg & G[3,5] zone"


@pytest.fixture
def dynamics():
    return get_dynamics("double_integrator")


def _ledger(text, shapes, x0, dynamics, synthesis=None, probe=True):
    formula = parse(text, shapes)
    return build_ledger(formula, categorize(formula, x0), dynamics, synthesis, x0 if probe else None)


# ============================================================================
# Categories
# ============================================================================


@pytest.mark.unit
def test_benchmark_categories(shape_table):
    assert categorize(parse(BENCHMARK, shape_table), X0) == [II, II, I, I]


@pytest.mark.unit
def test_always_with_late_start_is_category_three():
    shapes = {"zone": Circle((0.0, 0.0), 1.0)}
    assert categorize(parse("G[1,3] zone", shapes), [5.0, 5.0]) == [III]
    assert categorize(parse("G[1,3] zone", shapes), [0.1, 0.0]) == [III]
    assert categorize(parse("G[0,3] zone", shapes), [0.1, 0.0]) == [I]
    assert categorize(parse("F[0,3] zone", shapes), [0.1, 0.0]) == [I]
    assert categorize(parse("F[1,3] zone", shapes), [0.1, 0.0]) == [II]


@pytest.mark.unit
def test_always_from_zero_violated_at_x0_is_infeasible(shape_table):
    with pytest.raises(CategoryInfeasibleError) as info:
        categorize(parse("G[0,2] reg1", shape_table), X0)
    assert info.value.exit_code == 3
    assert info.value.details["predicate"] == "reg1"


@pytest.mark.unit
def test_position_indices_select_the_planar_coordinates():
    shapes = {"zone": Circle((2.0, 2.0), 0.5)}
    formula = parse("F[0,3] zone", shapes)
    assert categorize(formula, [0.0, 0.0, 2.0, 2.0], position_indices=(2, 3)) == [I]
    assert categorize(formula, [0.0, 0.0, 2.0, 2.0]) == [II]


@pytest.mark.unit
def test_category_mismatch_names_the_predicates(shape_table):
    formula = parse(BENCHMARK, shape_table)
    check_categories(formula, X0, [II, II, I, I])
    with pytest.raises(CategoryMismatchError) as info:
        check_categories(formula, [3.0, 3.0, 0.0, 0.0], [II, II, I, I])
    assert any("reg1" in m for m in info.value.details["mismatches"])


@pytest.mark.unit
def test_sup_h_of_circles():
    assert sup_h(Circle((0.0, 0.0), 2.0)) == 2.0
    assert math.isinf(sup_h(Circle((0.0, 0.0), 2.0, sign=-1)))
    with pytest.raises(UnsupportedShapeError):
        sup_h(Superellipse((0.0, 0.0), 1.0, 1.0))


# ============================================================================
# Ledger construction
# ============================================================================


@pytest.mark.unit
def test_benchmark_ledger_layout(shape_table, dynamics):
    ledger, specs = _ledger(BENCHMARK, shape_table, X0, dynamics)
    assert [s.label for s in specs] == ["F0:reg1", "F1:reg2", "G2:!obs1", "G2:!obs2"]
    assert [s.gamma_kind for s in specs] == [GammaKind.LINEAR, GammaKind.LINEAR, GammaKind.ZERO, GammaKind.ZERO]
    assert [s.relative_degree for s in specs] == [2, 2, 2, 2]
    assert ledger.raw_size == 4
    assert [e.spec for e in ledger.entries] == [0, 1]
    assert ledger.entries[0].pairs == ()
    (pair,) = ledger.entries[1].pairs
    assert (pair.target, pair.partner, pair.t_star, pair.released) == (1, 0, 2.0, False)
    assert pair.offset == pytest.approx(math.hypot(3.5, 1.0) - 2.0)


@pytest.mark.unit
def test_superellipse_partners_are_skipped_with_a_warning(shape_table, dynamics, caplog):
    caplog.set_level("WARNING", logger="barrierstl.services.hocbf")
    _ledger(BENCHMARK, shape_table, X0, dynamics)
    assert "partner is not a circle" in caplog.text


@pytest.mark.unit
def test_non_circle_free_predicate_is_unsupported(shape_table, dynamics):
    with pytest.raises(UnsupportedShapeError) as info:
        _ledger("F[0,2] obs1", shape_table, X0, dynamics)
    assert info.value.exit_code == 2
    assert info.value.details == {"predicate": "obs1"}


@pytest.mark.unit
def test_deletion_rules_follow_operator_and_category(dynamics):
    shapes = {"a": Circle((3.0, 0.0), 0.5), "b": Circle((3.0, 0.2), 0.5), "o": Circle((5.0, 5.0), 0.5)}
    text = "F[0,3] (a & b) & F[0,4] a & G[1,4] !o & G[0,4] !o"
    _, specs = _ledger(text, shapes, [0.0, 0.0, 0.0, 0.0], dynamics, probe=False)
    assert [s.deletion for s in specs] == [
        DeletionRule.ON_ALL_TRUE,
        DeletionRule.ON_ALL_TRUE,
        DeletionRule.ON_PREDICATE_TRUE,
        DeletionRule.AT_TIME,
        DeletionRule.NEVER,
    ]
    assert specs[0].group == specs[1].group == 0
    assert specs[2].group is None


@pytest.mark.unit
def test_avoid_pairs_are_released_and_mixed_pairs_follow_the_flag(dynamics):
    shapes = {
        "o1": Circle((3.0, 0.0), 0.5, sign=1),
        "o2": Circle((0.0, 3.0), 0.5, sign=1),
        "goal": Circle((4.0, 4.0), 1.0),
    }
    text = "G[1,3] !o1 & G[1,4] !o2 & F[0,5] goal"
    x0 = [0.0, 0.0, 0.0, 0.0]
    ledger, _ = _ledger(text, shapes, x0, dynamics)
    pairs = {(p.target, p.partner): p.released for e in ledger.entries for p in e.pairs}
    assert pairs[(1, 0)] is True
    assert pairs[(2, 0)] is False
    assert pairs[(2, 1)] is False
    released, _ = _ledger(text, shapes, x0, dynamics, SynthesisConfig(release_mixed_pairs=True))
    assert all(p.released for e in released.entries for p in e.pairs)


@pytest.mark.unit
def test_incompatible_regions_fail_at_construction(dynamics):
    shapes = {"reg": Circle((3.0, 3.0), 1.0), "zone": Circle((0.5, 0.5), 2.0)}
    with pytest.raises(LedgerInfeasibleError) as info:
        _ledger("F[0,2] reg & G[1,4] zone", shapes, [0.5, 0.5, 0.0, 0.0], dynamics)
    assert info.value.details["spec"] == "G1:zone"
    assert info.value.exit_code == 3


@pytest.mark.unit
def test_categories_must_match_occurrences(shape_table, dynamics):
    with pytest.raises(ValueError):
        build_ledger(parse(BENCHMARK, shape_table), [II, II], dynamics)


@pytest.mark.unit
def test_describe_lists_every_spec(shape_table, dynamics):
    ledger, _ = _ledger(BENCHMARK, shape_table, X0, dynamics)
    rows = ledger.describe()
    assert [r["spec"] for r in rows] == ["F0:reg1", "F1:reg2", "G2:!obs1", "G2:!obs2"]
    assert set(rows[0]) == {"spec", "category", "gamma", "relative_degree", "window", "deletion", "constraints"}
    assert rows[1]["window"] == [2.0, 5.0]
    assert rows[1]["constraints"][:3] == ["gamma(0) > -h(x0)", "gamma(5) <= 0", "gamma(2) > -1"]
    assert rows[1]["constraints"][3].startswith("gamma[F1:reg2](2) >= ")
    assert rows[2]["constraints"] == []


# ============================================================================
# Squashing
# ============================================================================


@pytest.mark.unit
@pytest.mark.parametrize(
    ("text", "shapes_key"),
    [(BENCHMARK, "benchmark"), (EXP_FORMULA, "exponential")],
)
def test_squashed_parameters_satisfy_the_ledger(text, shapes_key, shape_table, dynamics, rng):
    shapes = shape_table if shapes_key == "benchmark" else EXP_SHAPES
    ledger, specs = _ledger(text, shapes, X0, dynamics)
    for _ in range(200):
        x0 = np.array([*rng.uniform(0.0, 1.0, size=2), 0.0, 0.0])
        raw = list(rng.normal(scale=3.0, size=ledger.raw_size))
        squashed = ledger.squash(raw, x0)
        assert ledger.violations(x0, squashed.gammas) == []
        for spec in specs:
            if spec.is_free:
                assert squashed.gammas[spec.index].value_at(0.0) > -spec.shape.h_value(*x0[:2])


@pytest.mark.unit
def test_exponential_entry_intervals(dynamics):
    ledger, specs = _ledger(EXP_FORMULA, EXP_SHAPES, X0, dynamics)
    assert specs[1].gamma_kind is GammaKind.EXPONENTIAL
    squashed = ledger.squash([0.3, 0.5, 1.1, 0.2], X0)
    lo, hi = squashed.intervals[1]["w1"]
    w1, w2 = squashed.gammas[1].parameters()
    assert lo < w1 < hi
    w2_lo, w2_hi = squashed.intervals[1]["w2"]
    assert w2_lo < w2 < w2_hi
    assert math.isfinite(w2_hi)
    assert squashed.intervals[0]["gamma(t_b)"] == (-math.inf, 0.0)


@pytest.mark.unit
def test_violations_report_broken_parameters(shape_table, dynamics):
    ledger, _ = _ledger(BENCHMARK, shape_table, X0, dynamics)
    squashed = ledger.squash([0.0] * 4, X0)
    broken = dict(squashed.gammas)
    broken[0] = type(broken[0]).linear_from_anchors(-10.0, 1.0, 2.0)
    names = {v.constraint for v in ledger.violations(X0, broken)}
    assert {"gamma(0) > -h(x0)", "gamma(t_b) <= 0", "w1 > 0"} <= names


@pytest.mark.unit
def test_squash_rejects_wrong_raw_width(shape_table, dynamics):
    ledger, _ = _ledger(BENCHMARK, shape_table, X0, dynamics)
    with pytest.raises(ValueError):
        ledger.squash([0.0] * 3, X0)


@pytest.mark.unit
def test_squash_gradient_matches_finite_difference(shape_table, dynamics, rng, assert_helpers):
    ledger, _ = _ledger(BENCHMARK, shape_table, X0, dynamics)
    raw = rng.normal(size=ledger.raw_size)

    def value(r):
        gammas = ledger.squash(list(r), X0).gammas
        return gammas[1].value_at(2.0) + 0.5 * gammas[0].value_at(1.0)

    tape = Tape()
    leaves = [tape.leaf(v) for v in raw]
    gammas = ledger.squash(leaves, X0).gammas
    out = gammas[1].value(2.0) + 0.5 * gammas[0].value(1.0)
    analytic = tape.backward(out).wrt(leaves)
    numeric = assert_helpers.finite_difference(value, raw)
    assert np.any(analytic != 0.0)
    assert assert_helpers.rel_err(analytic, numeric) < 1e-5


# ============================================================================
# Deletion
# ============================================================================


@pytest.mark.unit
def test_reach_barriers_are_deleted_once_their_region_is_reached(shape_table, dynamics):
    _, specs = _ledger(BENCHMARK, shape_table, X0, dynamics)
    tracker = DeletionTracker(specs)
    assert tracker.update((3.0, 3.2), 1.0) == {0}
    assert tracker.update((6.5, 2.2), 1.5) == set()
    assert tracker.update((6.5, 2.2), 2.0) == {1}
    assert tracker.update((0.0, 0.0), 4.0) == set()
    assert [s.label for s in tracker.active()] == ["G2:!obs1", "G2:!obs2"]
    assert tracker.is_deleted(0)


@pytest.mark.unit
def test_group_and_always_deletion(dynamics):
    shapes = {"a": Circle((3.0, 0.0), 0.5), "b": Circle((3.3, 0.0), 0.5), "zone": Circle((0.0, 0.0), 5.0)}
    _, specs = _ledger("F[0,3] (a & b) & G[1,2] zone", shapes, [0.0, 0.0, 0.0, 0.0], dynamics, probe=False)
    tracker = DeletionTracker(specs)
    assert tracker.update((2.6, 0.0), 0.5) == set()
    assert tracker.update((3.15, 0.0), 0.6) == {0, 1}
    assert tracker.update((0.0, 0.0), 2.0) == set()
    assert tracker.update((0.0, 0.0), 2.1) == {2}
