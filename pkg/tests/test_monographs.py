"""Ingest and cleaning tests.

The mcg conversion is checked against an independent quantity parser
(`expected_mg_values` below) rather than against the converter's own
regex, so a bug in the production pattern cannot hide itself.
"""
from __future__ import annotations

import json
import re
from decimal import Decimal

import pytest
from hypothesis import given
from hypothesis import strategies as st

from rxverify.core import AgeGroup
from rxverify.errors import ParseError, SchemaError
from rxverify.monographs import (
    clean_text,
    compute_stats,
    convert_mcg_to_mg,
    load_monographs,
    monograph_to_dict,
    normalize_dosage_text,
    save_monographs,
    standardize_hyphens,
)

# --- independent oracle -------------------------------------------------
# A deliberately separate implementation: find every number+unit token and
# report its value in milligrams.  Shares nothing with the production code.

_ORACLE_TOKEN = re.compile(
    r"(\d+(?:\.\d+)?)\s*(mcg|µg|μg|ug|mg)(?![a-z])", re.IGNORECASE
)


def expected_mg_values(text: str) -> list[Decimal]:
    values = []
    for number, unit in _ORACLE_TOKEN.findall(text):
        value = Decimal(number)
        if unit.lower() != "mg":
            value = value / Decimal(1000)
        values.append(value)
    return values


class TestCleanText:
    def test_tabs_and_daggers(self):
        assert clean_text("50 mg\tonce daily†") == "50 mg once daily"

    def test_newlines_kept(self):
        assert clean_text("line1\nline2") == "line1\nline2"

    def test_empty(self):
        assert clean_text("") == ""

    def test_space_runs_collapse(self):
        assert clean_text("a   b\t\tc") == "a b c"

    @given(st.text(alphabet="ab \t†‡\n", max_size=40))
    def test_idempotent(self, text):
        once = clean_text(text)
        assert clean_text(once) == once


class TestStandardizeHyphens:
    @pytest.mark.parametrize(
        "text, expected",
        [
            ("25–50 mg", "25-50 mg"),  # en dash
            ("25-50 mg", "25-50 mg"),
            ("a—b–c", "a-b-c"),  # em dash, en dash
            ("−5 degrees", "-5 degrees"),  # minus sign
        ],
    )
    def test_examples(self, text, expected):
        assert standardize_hyphens(text) == expected

    @given(st.text(alphabet="ab-–—‒−", max_size=30))
    def test_idempotent(self, text):
        once = standardize_hyphens(text)
        assert standardize_hyphens(once) == once


class TestConvertMcg:
    @pytest.mark.parametrize(
        "text, expected",
        [
            ("500 mcg once daily", "0.5 mg once daily"),
            ("give 200 mcg, then 1 mg", "give 0.2 mg, then 1 mg"),
            ("no dose units here", "no dose units here"),
            ("100 µg", "0.1 mg"),
            ("12.5 UG", "0.0125 mg"),
            ("200-400 mcg daily", "0.2-0.4 mg daily"),
            ("1000 mcg", "1 mg"),
            # unit token not adjacent to a number stays put
            ("dose in mcg as directed", "dose in mcg as directed"),
        ],
    )
    def test_examples(self, text, expected):
        assert convert_mcg_to_mg(text) == expected

    def test_values_preserved_against_oracle(self):
        text = "start 250 mcg, range 200-400 mcg, then 0.5 mg, max 1250 mcg"
        before = expected_mg_values(text)
        after = expected_mg_values(convert_mcg_to_mg(text))
        assert before == after

    @given(
        st.lists(
            st.tuples(
                st.decimals(
                    min_value=Decimal("0.001"),
                    max_value=Decimal("99999"),
                    places=3,
                    allow_nan=False,
                    allow_infinity=False,
                ),
                st.sampled_from(["mcg", "µg", "ug", "MCG", "mg"]),
            ),
            min_size=1,
            max_size=5,
        )
    )
    def test_conversion_preserves_values(self, quantities):
        text = " and ".join(f"{q} {unit}" for q, unit in quantities)
        converted = convert_mcg_to_mg(text)
        assert expected_mg_values(converted) == expected_mg_values(text)
        # idempotent: a second pass changes nothing
        assert convert_mcg_to_mg(converted) == converted


def test_normalize_order_matters():
    # the en dash must become a hyphen before range conversion sees it
    assert normalize_dosage_text("200–400 mcg\tdaily†") == "0.2-0.4 mg daily"


class TestLoadMonographs:
    def test_sample_file(self, sample_corpus):
        names = [m.ingredient for m in sample_corpus]
        assert names == ["losartan", "esomeprazole"]
        losartan = sample_corpus[0]
        adult = losartan.dosage[AgeGroup.ADULT]
        assert "Hypertension" in adult
        assert "Diabetic Nephropathy" in adult
        assert "Heart Failure [off-label]" in adult

    def test_ingredient_name_canonical(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(json.dumps({"  Losartan   Potassium ": {"dosage": {}}}))
        (mono,) = load_monographs(path)
        assert mono.ingredient == "losartan potassium"

    def test_texts_are_normalized_on_load(self, tmp_path):
        path = tmp_path / "m.json"
        payload = {
            "drugx": {
                "dosage": {
                    "Adults": {"Condition": {"Oral": "100\tmcg† once–daily"}}
                }
            }
        }
        path.write_text(json.dumps(payload, ensure_ascii=False), encoding="utf-8")
        (mono,) = load_monographs(path)
        text = mono.dosage[AgeGroup.ADULT]["Condition"]["Oral"]
        assert text == "0.1 mg once-daily"

    def test_empty_object(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text("{}")
        assert load_monographs(path) == []

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParseError):
            load_monographs(tmp_path / "nope.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ParseError) as exc:
            load_monographs(path)
        assert "bad.json" in str(exc.value)

    def test_bare_string_dosage_rejected(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(json.dumps({"drugx": {"dosage": {"Adults": "50 mg"}}}))
        with pytest.raises(SchemaError):
            load_monographs(path)

    def test_unknown_age_label_rejected(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(json.dumps({"drugx": {"dosage": {"Elderly": {}}}}))
        with pytest.raises(SchemaError):
            load_monographs(path)

    def test_malformed_usage_code_skipped_with_warning(self, tmp_path, caplog):
        path = tmp_path / "m.json"
        payload = {
            "drugx": {
                "dosage": {"Adults": {}},
                "usages": {"Hypertension": ["I10", "NOTACODE"]},
            }
        }
        path.write_text(json.dumps(payload))
        with caplog.at_level("WARNING"):
            (mono,) = load_monographs(path)
        ((disease, codes),) = mono.usages
        assert disease == "Hypertension"
        assert [c.raw for c in codes] == ["I10"]
        assert any("NOTACODE" in r.message for r in caplog.records)

    def test_no_mcg_survives_load(self, demo_corpus, sample_corpus):
        for mono in list(demo_corpus) + list(sample_corpus):
            for by_disease in mono.dosage.values():
                for routes in by_disease.values():
                    for text in routes.values():
                        assert "mcg" not in text.lower()
                        assert "\t" not in text


class TestRoundTrip:
    def test_load_save_load_identity(self, sample_corpus, tmp_path):
        out = tmp_path / "copy.json"
        save_monographs(sample_corpus, out)
        reloaded = load_monographs(out)
        assert [monograph_to_dict(m) for m in reloaded] == [
            monograph_to_dict(m) for m in sample_corpus
        ]
        # a second save is byte-identical
        out2 = tmp_path / "copy2.json"
        save_monographs(reloaded, out2)
        assert out.read_bytes() == out2.read_bytes()


class TestComputeStats:
    def test_sample_versatility(self, sample_corpus):
        stats = compute_stats(sample_corpus)
        # losartan: Hypertension appears in both age groups; 4 distinct adult
        # diseases plus the shared pediatric one -> 4 distinct names
        assert stats.versatility["losartan"] == 4
        assert stats.n_ingredients == 2

    def test_empty_corpus(self):
        stats = compute_stats([])
        assert stats.n_ingredients == 0
        assert stats.n_adult == 0
        assert stats.n_pediatric == 0
        assert stats.mean_versatility() == 0.0

    def test_age_group_counts(self, tmp_path):
        path = tmp_path / "m.json"
        payload = {
            "a": {"dosage": {"Adults": {"X": {"Oral": "1 mg"}}}},
            "b": {
                "dosage": {
                    "Adults": {"X": {"Oral": "1 mg"}},
                    "Pediatric Patients": {"X": {"Oral": "1 mg"}},
                }
            },
        }
        path.write_text(json.dumps(payload))
        stats = compute_stats(load_monographs(path))
        assert stats.n_adult == 2
        assert stats.n_pediatric == 1
