import numpy as np
import pytest

from cyclic_afp import (
    CarrierSet,
    EmptyGridError,
    EvaluationFault,
    GMetricDef,
    GridCapError,
    GridPlan,
    GSpace,
    RealSubset,
    check_axioms,
    d_array,
    derived_metric,
    discretize,
    eval_g,
    parse_expr,
)

from oracle import d_max, g_max, interval_grid

XYZ = ("x", "y", "z")


def unit_space(gmetric=None):
    return GSpace((CarrierSet.of(RealSubset.interval(0.0, 1.0)),), gmetric or GMetricDef())


def custom(text):
    return GMetricDef.custom(parse_expr(text, XYZ))


def test_default_builder_values():
    space = unit_space()
    assert eval_g(space, 0, 0, 0) == 0
    assert eval_g(space, 0, 0.4, 1) == g_max(0, 0.4, 1) == 0.5


def test_builder_is_symmetric_on_random_triples():
    rng = np.random.default_rng(7)
    space = unit_space()
    for a, b, c in rng.random((100, 3)):
        assert eval_g(space, a, b, c) == eval_g(space, c, b, a)


def test_sum_builder():
    space = unit_space(GMetricDef.builder("sum", 2.0))
    assert eval_g(space, 0, 0.5, 1) == pytest.approx(2 * (0.5 + 0.5 + 1))


def test_derived_metric():
    space = unit_space()
    assert derived_metric(space, 0.3, 0.3) == 0
    assert derived_metric(space, 0.8, 0.2) == pytest.approx(d_max(0.8, 0.2))
    assert derived_metric(space, 0.8, 0.2) == pytest.approx(0.6)


def test_derived_metric_is_twice_g_for_symmetric_space():
    space = unit_space()
    assert space.symmetric
    rng = np.random.default_rng(3)
    for x, y in rng.random((100, 2)):
        assert derived_metric(space, x, y) == pytest.approx(2 * eval_g(space, x, y, y), abs=1e-15)


def test_custom_asymmetric_metric_detected():
    space = unit_space(custom("abs(x - y) + abs(y - z) + abs(x - z) + max(x - y, 0)"))
    assert not space.symmetric


def test_custom_metric_fault_names_triple():
    space = unit_space(custom("1/(x - y)"))
    with pytest.raises(EvaluationFault) as info:
        eval_g(space, 0.5, 0.5, 0.0)
    assert info.value.point == (0.5, 0.5, 0.0)


def test_axioms_pass_for_builder_on_random_sample():
    sample = np.random.default_rng(0).random(100)
    report = check_axioms(unit_space(), sample, 1e-9)
    assert report.passed
    assert [v.axiom for v in report.verdicts] == ["G1", "G2", "G3", "G4", "G5"]


def test_constant_zero_fails_positivity_with_witness():
    report = check_axioms(unit_space(custom("0")), [0.0, 1.0])
    assert not report.passed
    assert not report["G2"].passed
    assert report["G2"].witness == (0.0, 0.0, 1.0)


def test_z_ignoring_metric_fails_symmetry():
    space = unit_space(custom("abs(x - y)"))
    report = check_axioms(space, [0.0, 1.0, 2.0])
    v = report["G4"]
    assert not v.passed
    x, y, z = v.witness
    perms = [(x, y, z), (x, z, y), (y, x, z), (y, z, x), (z, x, y), (z, y, x)]
    values = {eval_g(space, *p) for p in perms}
    assert len(values) > 1


def test_axiom_sample_needs_two_points():
    with pytest.raises(ValueError):
        check_axioms(unit_space(), [0.5, 0.5])


def test_open_left_interval_grid():
    pts = discretize(RealSubset.interval(0.0, 0.8, lo_open=True), GridPlan(0.1))
    assert list(pts) == interval_grid(0.0, 0.8, 0.1, lo_open=True)
    assert pts[0] == 0.1 and pts[-1] == 0.8 and len(pts) == 8


def test_open_right_interval_grid():
    pts = discretize(RealSubset.interval(0.0, 0.5, hi_open=True), GridPlan(0.1))
    assert list(pts) == interval_grid(0.0, 0.5, 0.1, hi_open=True)


def test_family_grid():
    fam = RealSubset.family(parse_expr("1/k", ("k",)), 1, 4)
    assert list(discretize(fam, GridPlan())) == [1.0, 0.5, 1 / 3, 0.25]


def test_degenerate_open_interval_is_empty():
    with pytest.raises(EmptyGridError):
        discretize(RealSubset.interval(0.3, 0.3, True, True), GridPlan(0.01))


def test_grid_cap_names_count():
    with pytest.raises(GridCapError) as info:
        discretize(RealSubset.interval(0.0, 1.0), GridPlan(0.001, max_points=100))
    assert info.value.count == 1001


def test_interval_membership_respects_open_ends():
    s = RealSubset.interval(0.0, 0.8, lo_open=True)
    assert list(s.contains([0.0, 1e-12, 0.8, 0.8 + 1e-12, 0.81])) == [False, True, True, True, False]


def test_family_membership_beyond_truncation():
    fam = RealSubset.family(parse_expr("1/k", ("k",)), 1, 10)
    assert list(fam.contains([1 / 4001, 0.3, 1 / 3, 1.5])) == [True, False, True, False]


def test_union_carrier():
    c = CarrierSet.of(RealSubset.interval(0, 1), RealSubset.interval(2, 3))
    assert str(c) == "[0, 1] | [2, 3]"
    assert list(c.contains([0.5, 1.5, 2.5])) == [True, False, True]


def test_d_array_broadcasts():
    space = unit_space()
    x = np.array([0.0, 0.5])
    out = d_array(space, x[:, None], x[None, :])
    assert out.shape == (2, 2)
    assert out[0, 1] == pytest.approx(0.5)
