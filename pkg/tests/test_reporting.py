import json

import pydantic
import pytest

from calmreg.config import ExperimentKind
from calmreg.experiments.reporting import (CSV_COLUMNS, ExperimentConfig, Report, ReportMetadata, ReportRow,
                                           canonical_hash, format_value, merge_reports)


def make_report(*rows):
    return Report(rows=list(rows), metadata=ReportMetadata(experiment="tail_upper", seed=7, config_hash="abc"))


@pytest.mark.parametrize("overrides", [
    {"replications": 99},
    {"x_grid": [2.0, 1.0]},
    {"x_grid": [-1.0]},
    {"x_grid": []},
    {"q": 200, "n": 100},
    {"unknown": 1},
])
def test_config_validation(overrides):
    base = {"experiment": "tail_upper", "replications": 1000}
    with pytest.raises(pydantic.ValidationError):
        ExperimentConfig(**{**base, **overrides})


def test_config_hash_is_stable():
    a = ExperimentConfig(experiment=ExperimentKind.TAIL_UPPER, replications=1000, seed=3)
    b = ExperimentConfig(experiment="tail_upper", replications=1000, seed=3)
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != ExperimentConfig(experiment="tail_upper", replications=1000, seed=4).config_hash()
    assert canonical_hash({"b": 1, "a": 2}) == canonical_hash({"a": 2, "b": 1})


@pytest.mark.parametrize("value, text", [
    (None, ""),
    (True, "true"),
    (0.1, "0.1"),
    (float("inf"), "inf"),
    (float("-inf"), "-inf"),
    (float("nan"), "nan"),
    (3, "3"),
])
def test_format_value(value, text):
    assert format_value(value) == text


def test_csv_layout():
    report = make_report(ReportRow(statistic="gaussian_exceedance", x=1.0, theoretical=0.3679,
                                   empirical=0.01, passed=True, constant="e^-x"))
    lines = report.to_csv().split("\n")
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert lines[1] == "gaussian_exceedance,1.0,0.3679,0.01,0.0,true,e^-x"
    assert "\r" not in report.to_csv()


def test_informational_rows_do_not_fail():
    report = make_report(
        ReportRow(statistic="checked", theoretical=1.0, empirical=0.5, passed=True),
        ReportRow(statistic="conditions", theoretical=1.0, empirical=0.0, passed=False, informational=True),
    )
    assert report.passed
    failing = make_report(ReportRow(statistic="checked", theoretical=1.0, empirical=2.0, passed=False))
    assert failing.failures == ["checked"]


def test_write_creates_sidecar(tmp_path):
    report = make_report(ReportRow(statistic="s", theoretical=1.0, empirical=1.0, passed=True))
    sidecar = report.write(tmp_path / "out" / "report.csv")
    assert (tmp_path / "out" / "report.csv").read_text(encoding="utf-8") == report.to_csv()
    assert json.loads(sidecar.read_text(encoding="utf-8"))["seed"] == 7


def test_merge_reports():
    first = make_report(ReportRow(statistic="a", theoretical=1.0, empirical=1.0, passed=True))
    second = make_report(ReportRow(statistic="b", theoretical=1.0, empirical=2.0, passed=False))
    merged = merge_reports([first, second], "acceptance", 7)
    assert [row.statistic for row in merged.rows] == ["a", "b"]
    assert not merged.passed
