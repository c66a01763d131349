import json
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from drenv.model import (
    ONE, ConditionError, Direction, EdgeSet, ModelSpec, SpecError, check_condition1,
    check_condition2, derived_sets, e1_full_model, e1_model, half_orthant_model, load_spec,
    maximal_two_valued, minimal_two_valued, orthant_model, simplex_to_fixed, spec_from_dict,
    starred, to_fixed, two_valued,
)


def es(d, *toks):
    return EdgeSet.of(d, toks)


@st.composite
def edge_sets(draw, d):
    return EdgeSet(d, draw(st.integers(0, (1 << (2 * d)) - 1)))


@st.composite
def specs(draw, d=None, cond1=False, max_k=3):
    d = d or draw(st.integers(2, 4))
    k = draw(st.integers(1, max_k))
    ell = draw(st.integers(1, max_k))
    if cond1:
        plus = EdgeSet.plus(d)
        e1 = es(d, "+1")
        E = [e1 | (draw(edge_sets(d)) & plus) for _ in range(k)]
        lo = E[0]
        for s in E[1:]:
            lo = lo & s
        need = EdgeSet.full(d) - lo
        F = [need | draw(edge_sets(d)) for _ in range(ell)]
    else:
        E = [draw(edge_sets(d)) for _ in range(k)]
        F = [draw(edge_sets(d)) for _ in range(ell)]
    r = draw(st.lists(st.integers(0, 20), min_size=k, max_size=k).filter(lambda v: sum(v) > 0))
    q = draw(st.lists(st.integers(0, 20), min_size=ell, max_size=ell).filter(lambda v: sum(v) > 0))
    p = draw(st.fractions(0, 1, max_denominator=100))
    return ModelSpec.create(d, E, F, p, [Fraction(x, sum(r)) for x in r], [Fraction(x, sum(q)) for x in q])


class TestDirectionAndEdgeSet:
    def test_parse_and_bits(self):
        assert Direction.parse("+1") == Direction(1, 1)
        assert Direction.parse("-3").bit(4) == 6
        assert str(Direction(2, -1)) == "-2"

    def test_invalid_direction(self):
        with pytest.raises(SpecError):
            Direction(0, 1)
        with pytest.raises(SpecError):
            Direction(1, 2)

    def test_high_bits_rejected(self):
        with pytest.raises(SpecError):
            EdgeSet(2, 1 << 4)

    def test_tokens_out_of_range(self):
        with pytest.raises(SpecError):
            EdgeSet.of(2, ["+3"])

    @given(st.integers(2, 5).flatmap(lambda d: st.tuples(edge_sets(d), edge_sets(d))))
    def test_set_algebra(self, pair):
        a, b = pair
        sa, sb = set(a.tokens()), set(b.tokens())
        assert set((a | b).tokens()) == sa | sb
        assert set((a & b).tokens()) == sa & sb
        assert set((a - b).tokens()) == sa - sb
        assert (a <= b) == (sa <= sb)
        assert len(a) == len(sa)

    def test_canonical_order(self):
        assert list(EdgeSet.full(2).tokens()) == ["+1", "+2", "-1", "-2"]


class TestFixedPoint:
    def test_to_fixed_exact(self):
        assert to_fixed("1/2") == ONE // 2
        assert to_fixed(0.7) == to_fixed("0.7")
        assert to_fixed(1) == ONE and to_fixed(0) == 0

    def test_out_of_range(self):
        with pytest.raises(SpecError):
            to_fixed("1.5")

    @given(st.lists(st.integers(0, 1000), min_size=1, max_size=8).filter(lambda v: sum(v) > 0))
    def test_simplex_sums_exactly(self, raw):
        w = simplex_to_fixed([Fraction(x, sum(raw)) for x in raw])
        assert sum(w) == ONE
        assert all(x >= 0 for x in w)

    def test_simplex_rejects_bad_sum(self):
        with pytest.raises(SpecError):
            simplex_to_fixed(["0.5", "0.4"])

    def test_thirds(self):
        w = simplex_to_fixed(["1/3", "1/3", "1/3"])
        assert sum(w) == ONE and max(w) - min(w) <= 1


class TestDerivedSets:
    def test_orthant(self):
        lo_E, hi_E, lo_F, hi_F = derived_sets(orthant_model(2, "0.5"))
        assert lo_E == hi_E == es(2, "+1", "+2")
        assert lo_F == hi_F == es(2, "-1", "-2")

    def test_intersection_union(self):
        s = ModelSpec.create(2, [es(2, "+1"), es(2, "+1", "+2")], [EdgeSet.full(2)], "0.5", ["0.5", "0.5"])
        lo, hi, _, _ = derived_sets(s)
        assert lo == es(2, "+1") and hi == es(2, "+1", "+2")

    @given(specs())
    def test_k1_singleton(self, s):
        s1 = ModelSpec(s.d, s.E[:1], s.F, (ONE,), s.q, s.p)
        lo, hi, _, _ = derived_sets(s1)
        assert lo == hi == s.E[0]

    @given(specs(), st.data())
    def test_monotone_in_E(self, s, data):
        i = data.draw(st.integers(0, s.k - 1))
        extra = data.draw(edge_sets(s.d))
        E2 = list(s.E)
        E2[i] = E2[i] | extra
        s2 = ModelSpec(s.d, tuple(E2), s.F, s.r, s.q, s.p)
        lo, hi, _, _ = derived_sets(s)
        lo2, hi2, _, _ = derived_sets(s2)
        assert hi <= hi2 and lo <= lo2


class TestConditions:
    def test_half_orthant_passes_both(self):
        s = half_orthant_model(2, "0.5")
        assert check_condition1(s).passed and check_condition2(s).passed

    def test_e2_only_fails(self):
        rep = check_condition1(two_valued(2, ["+2"], EdgeSet.full(2).tokens(), "0.5"))
        assert not rep.passed and rep.failures == ["e1 in E_lower"]

    def test_orthant(self):
        s = orthant_model(2, "0.5")
        assert check_condition1(s).passed
        rep = check_condition2(s)
        assert not rep.passed and "F_1 == E" in rep.failures

    def test_example4_condition2(self):
        assert check_condition2(e1_full_model(3, "0.9")).passed

    def test_d1_rejected_at_construction(self):
        with pytest.raises(SpecError, match="dimension"):
            two_valued(1, ["+1"], ["-1"], "0.5")

    def test_report_lists_all_failures(self):
        s = two_valued(2, ["+2", "-1"], ["+1"], "0.5")
        rep = check_condition1(s)
        assert len(rep.failures) == 3
        assert "FAIL" in str(rep)

    @given(specs())
    def test_pass_iff_all_clauses(self, s):
        for rep in (check_condition1(s), check_condition2(s)):
            assert rep.passed == all(rep.clauses.values())

    @given(specs(cond1=True))
    def test_derived_models_keep_conditions(self, s):
        assert check_condition1(s).passed
        assert check_condition1(minimal_two_valued(s)).passed
        assert check_condition1(starred(s)).passed
        assert check_condition2(starred(s)).passed


class TestDerivedModels:
    def test_orthant_star_is_half_orthant(self):
        assert starred(orthant_model(3, "0.3")) == half_orthant_model(3, "0.3")

    def test_example3_star_is_example4(self):
        assert starred(e1_model(3, "0.4")) == e1_full_model(3, "0.4")

    @given(specs())
    def test_starred_idempotent(self, s):
        assert starred(starred(s)) == starred(s)
        t = starred(s)
        assert t.ell == 1 and t.q == (ONE,) and t.E == s.E and t.r == s.r and t.p == s.p

    def test_minimal_of_orthant_is_itself(self):
        s = orthant_model(2, "0.5")
        assert minimal_two_valued(s) == s

    def test_minimal_of_half_orthant_is_orthant(self):
        assert minimal_two_valued(half_orthant_model(2, "0.6")) == orthant_model(2, "0.6")

    def test_minimal_set_algebra(self):
        s = ModelSpec.create(2, [es(2, "+1"), es(2, "+1", "+2")], [EdgeSet.full(2)], "0.5", ["0.5", "0.5"])
        m = minimal_two_valued(s)
        assert m.E == (es(2, "+1"),) and m.F == (es(2, "-1", "+2", "-2"),)

    def test_minimal_requires_condition1(self):
        with pytest.raises(ConditionError):
            minimal_two_valued(two_valued(2, ["+2"], ["-1"], "0.5"))

    def test_maximal(self):
        s = orthant_model(2, "0.25")
        assert maximal_two_valued(s) == half_orthant_model(2, "0.25")


class TestSerialization:
    @given(specs())
    @settings(max_examples=50)
    def test_round_trip(self, s):
        assert spec_from_dict(json.loads(s.canonical())) == s

    def test_canonical_is_stable(self):
        s = orthant_model(2, "0.7")
        assert s.canonical() == orthant_model(2, 0.7).canonical()
        assert json.loads(s.canonical())["p"] == str(to_fixed("0.7"))

    def test_decimal_config(self, tmp_path):
        path = tmp_path / "s.json"
        path.write_text(json.dumps({"dimension": 2, "E": [["+1", "+2"], ["+1"]],
                                    "F": [["-1", "+2", "-2"]], "r": ["0.6", "0.4"], "p": "0.3"}))
        s = load_spec(path)
        assert s.k == 2 and sum(s.r) == ONE and s.p == to_fixed("0.3")

    def test_missing_field(self):
        with pytest.raises(SpecError, match="dimension"):
            spec_from_dict({"E": [], "F": []})

    def test_bad_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{nope")
        with pytest.raises(SpecError):
            load_spec(path)

    def test_weight_count_mismatch(self):
        with pytest.raises(SpecError):
            ModelSpec.create(2, [es(2, "+1")], [EdgeSet.full(2)], "0.5", ["0.5", "0.5"])
