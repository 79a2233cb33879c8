import io as stdio

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cellfault.dataset import (
    Attribute,
    Dataset,
    SplitSpec,
    diagnosis_attribute,
    load,
    read_arff,
    read_csv,
    save,
    split,
    split_indices,
    write_arff,
    write_csv,
)
from cellfault.exceptions import ParseError, ValidationError
from cellfault.schema import CORE_NAMES

SCHEMA_HEADER = """@relation cell_performance
@attribute TCHCallDropRate numeric
@attribute HandoverSuccessSeizure numeric
@attribute SDCCHDrops numeric
@attribute RAB numeric
@attribute HandoverAttempts numeric
@attribute HandFailures numeric
@attribute HandoverSuccessRate numeric
@attribute TCHDropSuddenLostCon numeric
@attribute diagnosis {Class A,Class B,Class C,Optimised}
@data
"""


class TestReadArff:
    def test_minimal(self):
        d = read_arff("@relation r\n@attribute x numeric\n@data\n4.2\n")
        assert d.names == ("x",)
        assert d.rows == ((4.2,),)

    def test_full_schema_550_rows(self):
        rng = np.random.default_rng(0)
        rows = "\n".join(",".join(f"{v:.3f}" for v in rng.uniform(0, 50, 8)) + ",Class B"
                         for _ in range(550))
        d = read_arff(SCHEMA_HEADER + rows + "\n")
        assert len(d.attributes) == 9
        assert len(d) == 550
        assert d.matrix(CORE_NAMES).shape == (550, 8)
        assert set(d.labels()) == {"Class B"}

    def test_comments_and_case(self):
        text = "% header comment\n@RELATION r\n@Attribute x NUMERIC\n% inner\n@DATA\n1\n% tail\n2\n"
        assert read_arff(text).column("x") == [1.0, 2.0]

    def test_arity_mismatch_reports_line(self):
        with pytest.raises(ParseError) as err:
            read_arff(SCHEMA_HEADER + "1,2,3,4,5,6,7,8\n")
        assert err.value.line == 12

    def test_unknown_kind_reports_line(self):
        with pytest.raises(ParseError) as err:
            read_arff("@relation r\n@attribute x date\n@data\n")
        assert err.value.line == 2

    def test_missing_value_rejected(self):
        with pytest.raises(ValidationError, match="missing"):
            read_arff("@relation r\n@attribute x numeric\n@data\n?\n")

    def test_nominal_value_outside_set(self):
        with pytest.raises((ParseError, ValidationError)):
            read_arff("@relation r\n@attribute c {a,b}\n@data\nz\n")

    def test_quoted_strings(self):
        d = read_arff("@relation r\n@attribute 'cell id' string\n@attribute x numeric\n@data\n"
                      "'a, b',1\n")
        assert d.rows == (("a, b", 1.0),)


class TestWriteArff:
    def test_header_only_when_empty(self):
        d = Dataset("r", (Attribute("x"),), ())
        text = write_arff(d)
        assert text.rstrip().endswith("@data")
        assert len(read_arff(text)) == 0

    def test_nominal_braces(self, uniform_labeled):
        text = write_arff(uniform_labeled)
        assert "{Class A,Class B,Class C,Optimised}" in text

    def test_round_trip_full_precision(self, uniform_labeled):
        again = read_arff(write_arff(uniform_labeled))
        assert again.attributes == uniform_labeled.attributes
        assert again.rows == uniform_labeled.rows
        assert again.relation == uniform_labeled.relation

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(min_value=0, max_value=1e9, allow_nan=False), min_size=1, max_size=30))
    def test_round_trip_floats(self, values):
        d = Dataset("r", (Attribute("x"),), tuple((v,) for v in values))
        assert read_arff(write_arff(d)).rows == d.rows


class TestCsv:
    def test_header_spellings(self):
        text = "TCH Call Drop Rate,HSR\n1.5,60\n"
        d = read_csv(text)
        assert d.names == ("tch_call_drop_rate", "handover_success_rate")

    def test_headerless_positional(self):
        d = read_csv("1,2,3,4,5,6,7,8\n", has_header=False)
        assert d.names == CORE_NAMES

    def test_bad_number_reports_position(self):
        with pytest.raises(ParseError) as err:
            read_csv("rab,hsr\n1,abc\n")
        assert (err.value.line, err.value.column) == (2, 2)

    def test_csv_arff_value_equality(self, uniform_labeled):
        via_csv = read_csv(write_csv(uniform_labeled))
        via_arff = read_arff(write_arff(uniform_labeled))
        assert via_csv.rows == via_arff.rows
        assert via_csv.labels() == via_arff.labels()

    def test_load_save_by_extension(self, tmp_path, uniform_labeled):
        for name in ("d.arff", "d.csv"):
            path = tmp_path / name
            save(uniform_labeled, path)
            assert load(path).rows == uniform_labeled.rows
        assert (tmp_path / "d.arff").read_text().startswith("@relation")

    def test_unknown_extension(self, tmp_path):
        with pytest.raises(ValidationError):
            load(tmp_path / "d.txt")


class TestSplit:
    def test_550_records_split_440_110(self):
        train, test = split_indices(550, SplitSpec(0.8, 0))
        assert (len(train), len(test)) == (440, 110)

    def test_deterministic_and_disjoint(self):
        a = split_indices(100, SplitSpec(0.7, 3))
        b = split_indices(100, SplitSpec(0.7, 3))
        assert all(np.array_equal(x, y) for x, y in zip(a, b))
        assert not set(a[0]) & set(a[1])
        assert sorted(np.concatenate(a)) == list(range(100))

    def test_parts_keep_order(self, uniform_labeled):
        train, test = split(uniform_labeled, SplitSpec(0.5, 1))
        ids = uniform_labeled.cell_ids()
        assert train.cell_ids() == sorted(train.cell_ids(), key=ids.index)

    @pytest.mark.parametrize("fraction", [0.0, 1.0, -0.1, 1.5])
    def test_bad_fraction(self, fraction):
        with pytest.raises(ValidationError):
            SplitSpec(fraction)


class TestDataset:
    def test_labels_missing(self, uniform_raw):
        with pytest.raises(ValidationError):
            uniform_raw.labels()

    def test_with_labels_replaces(self, uniform_labeled):
        relabeled = uniform_labeled.with_labels(["Class A"] * len(uniform_labeled))
        assert set(relabeled.labels()) == {"Class A"}
        assert relabeled.names == uniform_labeled.names

    def test_records_round_trip(self, uniform_labeled):
        again = Dataset.from_records(uniform_labeled.records())
        assert again.rows == uniform_labeled.rows

    def test_matrix_missing_attribute(self):
        d = Dataset("r", (Attribute("rab"),), ((1.0,),))
        with pytest.raises(ValidationError, match="handover_success_rate"):
            d.matrix(["handover_success_rate"])

    def test_diagnosis_attribute_order(self):
        attr = diagnosis_attribute(["Optimised", "Class A"])
        assert attr.values[:4] == ("Class A", "Class B", "Class C", "Optimised")

    def test_stream_source(self):
        d = read_arff(stdio.StringIO("@relation r\n@attribute x numeric\n@data\n1\n"))
        assert len(d) == 1
