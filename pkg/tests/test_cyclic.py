import numpy as np
import pytest

from cyclic_afp import (
    CarrierSet,
    ClassParams,
    CyclicMap,
    GMetricDef,
    GridPlan,
    GSpace,
    OperatorClass,
    ParameterFault,
    RealSubset,
    UnmatchedPointFault,
    UnsupportedClassFault,
    apply_map,
    classify,
    contraction_rate,
    empirical_constant,
    fit_mohsenialhosseini,
    pair_ratio,
    parse_expr,
    verify_cyclicity,
    verify_mohsenialhosseini,
)

from oracle import d_max

C = OperatorClass
PLAN = GridPlan(0.01)


def test_apply_map_values(maps):
    assert apply_map(maps["example_4_12"], 0.3) == 0
    assert apply_map(maps["example_4_12"], 1.5) == 0.125
    assert apply_map(maps["example_3_8"], 0.8) == 0.2


def test_apply_map_unmatched_point(maps):
    with pytest.raises(UnmatchedPointFault) as info:
        apply_map(maps["example_4_12"], 2.5)
    assert info.value.point == 2.5


def test_set_guards_follow_the_index(maps):
    m = maps["example_cyclic_seq"]
    assert apply_map(m, 1.0, 0) == pytest.approx(-0.2)
    assert apply_map(m, -0.2, 1) == pytest.approx(0.05)


def test_cyclicity(maps):
    assert verify_cyclicity(maps["example_3_8"], PLAN).passed
    assert verify_cyclicity(maps["example_cyclic_seq"], PLAN).passed
    rep = verify_cyclicity(maps["example_4_12"], PLAN)
    assert not rep.passed
    assert (1, 0.3, 0.0, 2) in rep.violations


def test_truncated_image_breaks_cyclicity(maps):
    rep = verify_cyclicity(maps["example_4_15"], PLAN)
    assert (1, 0.01, 0.0025, 2) in rep.violations


def test_single_set_self_map_is_cyclic():
    space = GSpace((CarrierSet.of(RealSubset.interval(0, 1)),))
    m = CyclicMap(space, parse_expr("x*x"))
    assert verify_cyclicity(m, GridPlan(0.1)).passed


def test_pair_ratios_quarter_map(maps):
    m = maps["example_3_8"]
    tx, ty = 0.2, 0.05
    want_mohseni = d_max(tx, ty) / (d_max(0.8, 0.2) + d_max(tx, ty))
    want_chatterjea = d_max(tx, ty) / (d_max(0.8, ty) + d_max(0.2, tx))
    assert pair_ratio(m.domain, m, C.GMohseni, 0.8, 0.2) == pytest.approx(want_mohseni, abs=1e-12)
    assert want_mohseni == pytest.approx(0.2)
    assert pair_ratio(m.domain, m, C.GChatterjea, 0.8, 0.2) == pytest.approx(want_chatterjea, abs=1e-12)
    assert want_chatterjea == pytest.approx(0.2)


def test_pair_ratio_degenerate_pair_is_zero(maps):
    m = maps["example_3_8"]
    for cls in (C.GAlphaPlain, C.GMohseni, C.GChatterjea, C.GMohseniSemi):
        assert pair_ratio(m.domain, m, cls, 0.4, 0.4) == 0


def test_pair_ratio_rejects_combined_class(maps):
    m = maps["example_3_8"]
    with pytest.raises(UnsupportedClassFault):
        pair_ratio(m.domain, m, C.GMohsenialhosseini, 0.8, 0.2)


def test_mohseni_ratio_is_one_fifth_for_every_pair(maps):
    m = maps["example_3_8"]
    xs = m.domain.subsets[0].grid(PLAN)[::7]
    ys = m.domain.subsets[1].grid(PLAN)[::5]
    for x in xs:
        for y in ys:
            if x != y:
                assert pair_ratio(m.domain, m, C.GMohseni, x, y) == pytest.approx(0.2, abs=1e-12)


def test_empirical_constants_quarter_map(maps):
    m = maps["example_3_8"]
    mohseni = empirical_constant(m.domain, m, C.GMohseni, 10**6, 42, PLAN)
    assert mohseni.exhaustive and mohseni.admissible
    assert mohseni.empirical_constant == pytest.approx(0.2, abs=1e-9)
    plain = empirical_constant(m.domain, m, C.GAlphaPlain, 10**6, 42, PLAN)
    assert plain.empirical_constant == pytest.approx(0.25, abs=1e-9)


def test_witness_reproduces_constant(maps):
    m = maps["example_4_15"]
    res = empirical_constant(m.domain, m, C.GMohseniSemi, 10**6, 42, PLAN)
    x, y = res.witness
    assert pair_ratio(m.domain, m, C.GMohseniSemi, x, y) == pytest.approx(res.empirical_constant, abs=1e-12) or \
        pair_ratio(m.domain, m, C.GMohseniSemi, y, x) == pytest.approx(res.empirical_constant, abs=1e-12)


def _semi_oracle(grid1, grid2):
    # (d/4) / (d + 0.75 x) over both orientations, with d = |x - y|
    best = 0.0
    for a, b in ((grid1, grid2), (grid2, grid1)):
        for x in a:
            for y in b:
                num = abs(x - y) / 4
                den = abs(x - y) + 0.75 * x
                if den > 1e-12:
                    best = max(best, num / den)
    return best


def test_semi_constant_matches_direct_maximisation(maps):
    m = maps["example_4_15"]
    g1, g2 = (s.grid(PLAN) for s in m.domain.subsets)
    want = _semi_oracle(g1.tolist(), g2.tolist())
    res = empirical_constant(m.domain, m, C.GMohseniSemi, 10**6, 42, PLAN)
    assert res.empirical_constant == pytest.approx(want, abs=1e-12)
    assert res.empirical_constant == pytest.approx(0.2476, abs=0.005)
    assert res.admissible


def test_sampling_is_seeded(maps):
    m = maps["example_cyclic_seq"]
    a = empirical_constant(m.domain, m, C.GChatterjea, 5000, 1, PLAN)
    b = empirical_constant(m.domain, m, C.GChatterjea, 5000, 1, PLAN)
    assert a == b and not a.exhaustive and a.pairs_examined == 5000


def test_mohsenialhosseini_declared_params(maps):
    m = maps["example_3_8"]
    chk = verify_mohsenialhosseini(m.domain, m, ClassParams(1 / 3), 10**6, 42, PLAN)
    assert chk.holds
    assert chk.eta == pytest.approx(1 / 3)
    assert not chk.rate_condition


def test_mohsenialhosseini_fit_is_feasible(maps):
    for name in ("example_3_8", "example_4_12", "example_cyclic_seq"):
        m = maps[name]
        res = fit_mohsenialhosseini(m.domain, m, 10**6, 42, PLAN)
        assert res.admissible
        chk = verify_mohsenialhosseini(m.domain, m, res.params, 10**6, 42, PLAN)
        assert chk.holds, name
        assert chk.eta == pytest.approx(res.empirical_constant)


def test_eta_formula():
    assert ClassParams(0.2, 0.2, 0.25).eta == pytest.approx(1 / 3)


def test_parameter_range_checked(maps):
    m = maps["example_3_8"]
    with pytest.raises(ParameterFault):
        verify_mohsenialhosseini(m.domain, m, ClassParams(0.2, 0.6, 0.0))


def test_contraction_rates():
    assert contraction_rate(C.GMohseni, ClassParams(1 / 3)) == pytest.approx(0.5)
    assert contraction_rate(C.GMohseniSemi, ClassParams(1 / 3)) == pytest.approx(2 / 3)
    assert contraction_rate(C.GAlphaPlain, ClassParams(0.25)) == 0.25
    assert contraction_rate(C.GChatterjea, ClassParams(0.2)) == pytest.approx(0.25)
    assert contraction_rate(C.GMohsenialhosseini, ClassParams(1 / 3)) is None
    with pytest.raises(ParameterFault):
        contraction_rate(C.GMohseni, ClassParams(0.5))


def test_classify_reports_all_classes(maps):
    rep = classify(maps["example_3_8"], PLAN)
    assert set(rep.results) == set(C)
    assert rep[C.GMohseni].empirical_constant == pytest.approx(0.2)
    assert not classify(maps["example_4_12"], PLAN)[C.GAlphaPlain].admissible


def test_custom_metric_reaches_classification():
    space = GSpace(
        (CarrierSet.of(RealSubset.interval(0, 1)),),
        GMetricDef.custom(parse_expr("max(abs(x - y), abs(y - z), abs(x - z))", ("x", "y", "z"))),
    )
    m = CyclicMap(space, parse_expr("x/2"))
    res = empirical_constant(space, m, C.GAlphaPlain, 10**6, 0, GridPlan(0.1))
    assert res.empirical_constant == pytest.approx(0.5)
