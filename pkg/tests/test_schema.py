import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cellfault.exceptions import DerivationError, MappingError, ValidationError
from cellfault.schema import (
    CLASS_LABELS,
    CORE_NAMES,
    CauseGroup,
    CounterRecord,
    DiagnosisClass,
    KpiRecord,
    canonical_name,
    class_to_group,
    derive_kpis,
)


def counters(**kw):
    base = dict(cell_id="c1", CA=100, CF=9, CS=90, TE=2.5, OE=1.5, SDCCHSA=200, SSDCCH=190)
    base.update(kw)
    return CounterRecord(**base)


class TestDeriveKpis:
    def test_reference_case(self):
        k = derive_kpis(counters())
        assert (k.CSR, k.DCR, k.TR, k.SDCCHSR) == (90.0, 10.0, 4.0, 95.0)

    def test_zero_failures(self):
        k = derive_kpis(counters(CS=100, CF=0))
        assert k.CSR == 100.0
        assert k.DCR == 0.0

    @pytest.mark.parametrize("field, kw", [
        ("CA", dict(CA=0, CS=0, CF=0)),
        ("CS", dict(CS=0)),
        ("SDCCHSA", dict(SDCCHSA=0, SSDCCH=0)),
    ])
    def test_zero_denominator_names_counter(self, field, kw):
        with pytest.raises(DerivationError) as err:
            derive_kpis(counters(**kw))
        assert err.value.counter == field
        assert field in str(err.value)

    def test_successes_above_attempts_rejected(self):
        with pytest.raises(ValidationError):
            counters(CS=101)

    def test_negative_counter_rejected(self):
        with pytest.raises(ValidationError):
            counters(TE=-1)

    @settings(max_examples=200, deadline=None)
    @given(
        ca=st.integers(1, 10_000),
        frac=st.floats(0.01, 1.0),
        cf=st.integers(0, 10_000),
        sa=st.integers(1, 10_000),
        sfrac=st.floats(0.0, 1.0),
        m=st.integers(1, 1000),
    )
    def test_scale_covariance(self, ca, frac, cf, sa, sfrac, m):
        cs = max(1, int(ca * frac))
        ss = int(sa * sfrac)
        a = derive_kpis(counters(CA=ca, CS=cs, CF=cf, SDCCHSA=sa, SSDCCH=ss))
        b = derive_kpis(counters(CA=m * ca, CS=m * cs, CF=m * cf, SDCCHSA=m * sa, SSDCCH=m * ss))
        for x, y in ((a.CSR, b.CSR), (a.DCR, b.DCR), (a.SDCCHSR, b.SDCCHSR)):
            assert math.isclose(x, y, rel_tol=1e-12, abs_tol=1e-12)
        assert 0.0 <= a.CSR <= 100.0
        assert 0.0 <= a.SDCCHSR <= 100.0


class TestDiagnosisClass:
    def test_renderings(self):
        assert CLASS_LABELS == ("Class A", "Class B", "Class C", "Optimised")
        assert DiagnosisClass.UNCLASSIFIED.value == "Unclassified"

    @pytest.mark.parametrize("text, expected", [
        ("Class A", DiagnosisClass.CLASS_A),
        ("class b", DiagnosisClass.CLASS_B),
        ("Class D", DiagnosisClass.OPTIMISED),
        ("optimised", DiagnosisClass.OPTIMISED),
    ])
    def test_parse(self, text, expected):
        assert DiagnosisClass.parse(text) is expected

    def test_parse_unknown(self):
        with pytest.raises(ValidationError):
            DiagnosisClass.parse("Class Z")


class TestCauseGroups:
    def test_mapping_is_injective(self):
        groups = [class_to_group(DiagnosisClass.parse(c)) for c in CLASS_LABELS]
        assert groups == [CauseGroup.GCA, CauseGroup.GCB, CauseGroup.GCC, CauseGroup.GCD]

    def test_unclassified_has_no_group(self):
        with pytest.raises(MappingError):
            class_to_group(DiagnosisClass.UNCLASSIFIED)

    def test_descriptions(self):
        assert all(g.description for g in CauseGroup)


class TestKpiRecord:
    def test_schema_order(self):
        assert CORE_NAMES[0] == "tch_call_drop_rate"
        assert CORE_NAMES[-1] == "tch_drop_sudden_lost_con"
        assert len(CORE_NAMES) == 8

    def test_from_mapping_accepts_codes_and_labels(self):
        values = {"TCHCDR": 1, "HSS": 2, "SDCCH Drops": 3, "RAB": 4, "HA": 5,
                  "HandFailures": 6, "HandoverSuccessRate": 7, "TCHSDLC": 8}
        r = KpiRecord.from_mapping(values, cell_id="x")
        assert list(r.features()) == [float(v) for v in range(1, 9)]

    def test_negative_rejected(self):
        with pytest.raises(ValidationError):
            KpiRecord(*([1.0] * 7 + [-1.0]))

    def test_nonfinite_rejected(self):
        with pytest.raises(ValidationError):
            KpiRecord(*([1.0] * 7 + [float("nan")]))

    @pytest.mark.parametrize("text", ["Handover Success Rate", "handover_success_rate",
                                      "HANDOVER-SUCCESS-RATE", "HSR"])
    def test_canonical_name(self, text):
        assert canonical_name(text) == "handover_success_rate"
