import itertools
import operator

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cellfault.exceptions import ParseError, RuleError, ValidationError
from cellfault.rules import (
    DiagnosticRule,
    RuleAtom,
    RuleClassifier,
    RuleSet,
    analyze_reachability,
    classify,
    default_ruleset,
    load_ruleset,
    matched_rule,
    resolve_ruleset,
    save_ruleset,
)
from cellfault.schema import CORE_NAMES, DEFAULT_RANGES, DiagnosisClass, KpiRecord

A, B, C, O = (DiagnosisClass.CLASS_A, DiagnosisClass.CLASS_B,
              DiagnosisClass.CLASS_C, DiagnosisClass.OPTIMISED)
OPS = {"<=": operator.le, "<": operator.lt, ">": operator.gt, ">=": operator.ge}


def record(**values):
    base = dict.fromkeys(CORE_NAMES, 10.0)
    aliases = {"HSR": "handover_success_rate", "TCHCDR": "tch_call_drop_rate",
               "HF": "handover_failures_rate", "RAB": "rab", "TCHSDLC": "tch_drop_sudden_lost_con"}
    base.update({aliases.get(k, k): float(v) for k, v in values.items()})
    return KpiRecord(**base)


def first_match_oracle(rs, point):
    """Scalar first-match evaluation, independent of the vectorized engine."""
    for i, rule in enumerate(rs.rules):
        if all(OPS[a.comparator](point[a.attribute], a.threshold) for a in rule.guard):
            return i
    return -1


def grid_oracle(rs, bounds=DEFAULT_RANGES):
    """Rules hit by some point of the threshold-adjacent grid."""
    axes = {}
    for name in rs.attributes:
        lo, hi = bounds[name]
        values = {lo, hi, (lo + hi) / 2}
        for rule in rs.rules:
            for a in rule.guard:
                if a.attribute == name:
                    values |= {a.threshold - 0.01, a.threshold, a.threshold + 0.01}
        axes[name] = sorted(v for v in values if lo <= v <= hi)
    names = list(axes)
    hit = set()
    for combo in itertools.product(*(axes[n] for n in names)):
        hit.add(first_match_oracle(rs, dict(zip(names, combo))))
    return {rs.rules[i].rule_id for i in hit if i >= 0}


class TestDefaultRuleset:
    def test_shape(self, rules):
        assert len(rules) == 13
        assert [r.rule_id for r in rules] == [f"R{i}" for i in range(1, 14)]

    def test_first_rule(self, rules):
        first = rules.rules[0]
        assert [(a.attribute, a.comparator, a.threshold) for a in first.guard] == [
            ("handover_success_rate", "<=", 71.23),
            ("tch_call_drop_rate", "<=", 7.42),
            ("handover_failures_rate", "<", 22.17),
        ]
        assert first.outcome is A

    @pytest.mark.parametrize("rule_id, atoms, outcome", [
        ("R11", [("rab", ">", 6), ("tch_drop_sudden_lost_con", ">", 26)], B),
        ("R10", [("rab", "<=", 6), ("tch_call_drop_rate", ">", 7.65)], A),
    ])
    def test_named_branches(self, rules, rule_id, atoms, outcome):
        rule = rules[rule_id]
        assert [(a.attribute, a.comparator, a.threshold) for a in rule.guard] == atoms
        assert rule.outcome is outcome


class TestClassify:
    @pytest.mark.parametrize("values, expected", [
        (dict(HSR=70.0, TCHCDR=7.0, HF=20.0), A),
        (dict(HSR=70.0, TCHCDR=7.0, HF=25.0, RAB=4), B),
        (dict(HSR=80.0, TCHCDR=2.0), O),
        (dict(HSR=50.0, HF=3.0, TCHCDR=8.0), A),
        (dict(HSR=20.0, HF=3.0, TCHCDR=8.0), C),
        (dict(HSR=50.0, HF=3.0, TCHCDR=2.0), A),
    ])
    def test_examples(self, rules, values, expected):
        assert classify(record(**values), rules) is expected

    def test_optimised_example_on_its_own_branch(self, rules):
        # HSR=60, TCHCDR=2 satisfies the Optimised guard, but R1 to R3 claim
        # it first in the full list.
        r = record(HSR=60.0, TCHCDR=2.0)
        assert rules["R4"].matches({n: r.get(n) for n in CORE_NAMES})
        assert classify(r, RuleSet((rules["R4"],), "r4")) is O
        assert matched_rule(r, rules).rule_id in {"R1", "R2", "R3"}

    def test_unclassified_when_nothing_matches(self):
        rs = RuleSet((DiagnosticRule("X", (RuleAtom("rab", ">", 100),), A),), "x")
        assert classify(record(RAB=1), rs) is DiagnosisClass.UNCLASSIFIED

    def test_missing_attribute(self, rules):
        with pytest.raises(RuleError) as err:
            classify({"handover_success_rate": 10.0}, rules)
        assert err.value.rule_id == "R1"

    def test_vectorized_agrees_with_scalar(self, rules, uniform_raw):
        X = uniform_raw.matrix(CORE_NAMES)
        got = rules.first_match(X, CORE_NAMES)
        want = [first_match_oracle(rules, dict(zip(CORE_NAMES, row))) for row in X]
        assert list(got) == want

    @settings(max_examples=100, deadline=None)
    @given(t1=st.floats(1, 50), t2=st.floats(51, 100), x=st.floats(0, 120))
    def test_disjoint_rules_commute(self, t1, t2, x):
        r1 = DiagnosticRule("a", (RuleAtom("rab", "<=", t1),), A)
        r2 = DiagnosticRule("b", (RuleAtom("rab", ">", t2),), B)
        rec = record(RAB=x)
        assert classify(rec, RuleSet((r1, r2), "v")) is classify(rec, RuleSet((r2, r1), "v"))


class TestValidation:
    def test_unknown_attribute(self):
        with pytest.raises(ValidationError):
            RuleAtom("bogus", "<=", 1.0)

    def test_bad_comparator(self):
        with pytest.raises(ValidationError):
            RuleAtom("rab", "==", 1.0)

    def test_empty_guard(self):
        with pytest.raises(ValidationError):
            DiagnosticRule("x", (), A)

    def test_unclassified_outcome(self):
        with pytest.raises(ValidationError):
            DiagnosticRule("x", (RuleAtom("rab", "<=", 1),), DiagnosisClass.UNCLASSIFIED)

    def test_empty_ruleset(self):
        with pytest.raises(ValidationError):
            RuleSet((), "v")

    def test_duplicate_ids(self):
        rule = DiagnosticRule("x", (RuleAtom("rab", "<=", 1),), A)
        with pytest.raises(ValidationError):
            RuleSet((rule, rule), "v")


class TestRuleFile:
    def test_round_trip(self, rules):
        assert load_ruleset(save_ruleset(rules)) == rules

    def test_format(self, rules):
        text = save_ruleset(rules)
        assert text.splitlines()[0] == "VERSION canonical-1"
        assert "RULE R1: IF HSR <= 71.23 AND TCHCDR <= 7.42 AND HF < 22.17 THEN Class A" in text

    def test_bad_threshold(self):
        with pytest.raises(ParseError) as err:
            load_ruleset("VERSION v\nRULE R1: IF HSR <= abc THEN Class A\n")
        assert err.value.line == 2

    @pytest.mark.parametrize("line", [
        "RULE R1: IF bogus <= 1 THEN Class A",
        "RULE R1: IF HSR <= 1 THEN Class Q",
        "IF HSR <= 1 THEN Class A",
    ])
    def test_malformed(self, line):
        with pytest.raises(ParseError):
            load_ruleset("VERSION v\n" + line + "\n")

    def test_empty_rule_list(self):
        with pytest.raises(ValidationError):
            load_ruleset("VERSION v\n# nothing here\n")

    def test_resolve(self, tmp_path, rules):
        path = tmp_path / "r.rules"
        path.write_text(save_ruleset(rules))
        assert resolve_ruleset(str(path)) == rules
        assert resolve_ruleset("default") == rules


class TestReachability:
    def test_matches_grid_oracle(self, rules):
        report = analyze_reachability(rules)
        assert {r.rule_id for r in report if r.reachable} == grid_oracle(rules)

    def test_default_unreachable_set(self, rules):
        report = analyze_reachability(rules)
        assert [r.rule_id for r in report if not r.reachable] == ["R9", "R10", "R11", "R12", "R13"]

    def test_witnesses_reach_their_rule(self, rules):
        for res in analyze_reachability(rules):
            if res.reachable:
                assert matched_rule(res.witness, rules).rule_id == res.rule_id

    def test_single_rule(self):
        rs = RuleSet((DiagnosticRule("x", (RuleAtom("rab", ">", 5),), A),), "v")
        (res,) = analyze_reachability(rs)
        assert res.reachable and res.witness.rab > 5

    def test_duplicate_is_shadowed(self):
        atoms = (RuleAtom("rab", ">", 5),)
        rs = RuleSet((DiagnosticRule("a", atoms, A), DiagnosticRule("b", atoms, B)), "v")
        assert [r.reachable for r in analyze_reachability(rs)] == [True, False]

    def test_open_interval_gap(self):
        # rab < 3 then rab > 3 leaves only rab == 3 for the third rule
        rs = RuleSet((
            DiagnosticRule("lt", (RuleAtom("rab", "<", 3),), A),
            DiagnosticRule("gt", (RuleAtom("rab", ">", 3),), B),
            DiagnosticRule("any", (RuleAtom("rab", ">=", 0),), C),
        ), "v")
        report = analyze_reachability(rs)
        assert all(r.reachable for r in report)
        assert report[2].witness.rab == 3.0

    def test_missing_bounds(self, rules):
        with pytest.raises(ValidationError):
            analyze_reachability(rules, bounds={"rab": (0, 10)})


class TestRuleClassifier:
    def test_predict(self, rules, uniform_labeled):
        clf = RuleClassifier(rules, list(CORE_NAMES)).fit(uniform_labeled.matrix(CORE_NAMES))
        pred = clf.predict(uniform_labeled.matrix(CORE_NAMES))
        assert list(pred) == uniform_labeled.labels()

    def test_params(self):
        assert set(RuleClassifier().get_params()) == {"ruleset", "feature_names"}

    def test_score(self, rules, uniform_labeled):
        X = uniform_labeled.matrix(CORE_NAMES)
        clf = RuleClassifier(rules, list(CORE_NAMES)).fit(X)
        assert clf.score(X, np.array(uniform_labeled.labels(), dtype=object)) == 1.0
