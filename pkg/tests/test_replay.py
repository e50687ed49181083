from __future__ import annotations

from decimal import Decimal
from pathlib import Path

import pytest

from fairaudit import InputError
from fairaudit.cli import main
from fairaudit.replay import format_percent, load_value_table, reference_gaps, replay

VALUES = Path(__file__).parent / "data" / "published_values.csv"


@pytest.fixture(scope="module")
def rows():
    return load_value_table(VALUES)


@pytest.fixture(scope="module")
def records(rows):
    return replay(rows)


def _find(records, group, metric, mode="relative", table=None):
    hits = [r for r in records if r["group"] == group and r["metric"] == metric and r["mode"] == mode
            and (table is None or r["table"] == table)]
    assert len(hits) == 1, (group, metric, mode, table)
    return hits[0]


@pytest.mark.parametrize("group, points", [("African", "-12.3"), ("Asian", "-10.2"), ("Indian", "-3.15")])
def test_race_tpr_annotations(records, group, points):
    r = _find(records, group, "tpr_fpr_1", table="table2")
    assert r["baseline"] == "Caucasian"
    assert abs(r["points"] - Decimal(points)) <= Decimal("0.1")


def test_female_vs_male_within_race(records):
    r = _find(records, "Asian Female", "tpr_fpr_1", table="table2")
    assert r["baseline"] == "Asian Male"
    assert r["annotation"] == "(-13.6%)"


def test_absolute_gaps_exact(records):
    assert _find(records, "African", "tpr_fpr_1", "absolute")["disparity"] == Decimal("-0.1125")
    assert _find(records, "African", "accuracy", "absolute")["disparity"] == Decimal("-0.0351")


def test_every_published_annotation_within_tenth_of_a_point(records):
    checked = [r for r in records if r["published"] is not None]
    assert len(checked) >= 100
    worst = max(checked, key=lambda r: r["diff_points"])
    assert worst["diff_points"] <= Decimal("0.1"), worst


def test_baselines_have_no_annotation(records):
    for r in records:
        if r["baseline"] == r["group"]:
            assert r["disparity"] == 0 and r["annotation"] == ""


def test_p_rule_spot_check(records):
    r = _find(records, "Caucasian Male 0-20", "p_rule")
    assert r["baseline"] == "Caucasian Female 31-40"
    assert r["annotation"] == "(-16.0%)"


def test_reference_gap_over_best_caucasian(rows):
    gaps = {g["group"]: g for g in reference_gaps(rows, "d_m", "Caucasian")}
    top = gaps["African Female 61-100"]
    assert top["reference_value"] == Decimal("0.0772")
    assert top["gap"] == Decimal("0.3989")
    assert max(gaps.values(), key=lambda g: g["gap"]) is top


def test_format_percent():
    assert format_percent(Decimal("-0.1231")) == "(-12.3%)"
    assert format_percent(-0.0315, 2) == "(-3.15%)"


def test_bad_tables(tmp_path):
    with pytest.raises(InputError):
        load_value_table(tmp_path / "none.csv")
    p = tmp_path / "t.csv"
    p.write_text("table,scope,group,value\nx,y,z,0.5\n")
    with pytest.raises(InputError, match="missing columns"):
        load_value_table(p)
    p.write_text("table,scope,group,metric,value\nx,y,z,m,abc\n")
    with pytest.raises(InputError, match="row 1"):
        load_value_table(p)


def test_parenthesized_values_parse(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("table,scope,group,metric,value,published\nt,s,a,m,0.9,\nt,s,b,m,0.45,(-50.0%)\n")
    recs = replay(load_value_table(p))
    assert recs[1]["points"] == Decimal("-50.0") and recs[1]["diff_points"] == 0


def test_cli_replay(tmp_path, capsys):
    assert main(["replay-tables", "--values", str(VALUES), "--reference-scope", "Caucasian",
                 "--out-dir", str(tmp_path)]) == 0
    assert (tmp_path / "replay.csv").exists() and (tmp_path / "replay.md").exists()
    gaps = (tmp_path / "reference_gaps.csv").read_text()
    assert "African Female 61-100,d_m,0.4761,Caucasian Caucasian Male 41-50,0.0772,0.3989" in gaps
    assert main(["replay-tables", "--values", str(VALUES)]) == 0
    assert "(-12.3%)" in capsys.readouterr().out
