import math

import numpy as np
import pytest

from src.domain.models.common_models import OutputFormat, Verdict
from src.domain.models.path_models import MeasureTag, Path
from src.domain.models.report_models import ReportRow
from src.infrastructure.path_store import dump_paths, read_paths
from src.infrastructure.report_writer import read_json_lines, render_csv, write_report
from src.utils.constants import REPORT_COLUMNS
from src.utils.exceptions import ReportWriteError

from tests.conftest import SEED


@pytest.fixture
def rows():
    return [
        ReportRow(scenario="demo", job="premium", quantity="p(Q)", estimate=200 / 9, oracle=200 / 9, verdict=Verdict.PASS, seed=SEED),
        ReportRow(scenario="demo", job="validate", quantity="gamma_norm", estimate=0.1 + 0.2, stderr=math.inf, text="a, \"quoted\" note"),
    ]


class TestCsv:
    def test_header_only(self):
        assert render_csv([]) == ",".join(REPORT_COLUMNS) + "\n"

    def test_rows(self, rows):
        lines = render_csv(rows).splitlines()
        assert len(lines) == 3
        assert lines[1].startswith("demo,premium,p(Q),22.222222222222221,")
        assert ",pass," in lines[1]
        assert '"a, ""quoted"" note"' in lines[2]


class TestJsonLines:
    def test_floats_parse_back_exactly(self, rows):
        records = read_json_lines(write_report(rows, OutputFormat.JSON_LINES, None))
        assert records[0]["estimate"] == 200 / 9
        assert records[1]["estimate"] == 0.1 + 0.2
        assert records[0]["stderr"] is None
        assert list(records[0]) == list(REPORT_COLUMNS)

    def test_non_finite_floats_are_strings(self, rows):
        records = read_json_lines(write_report(rows, OutputFormat.JSON_LINES, None))
        assert records[1]["stderr"] == "inf"


class TestWriteReport:
    @pytest.mark.parametrize("destination", [None, "-"])
    def test_stdout_destinations_write_nothing(self, rows, tmp_path, monkeypatch, destination):
        monkeypatch.chdir(tmp_path)
        text = write_report(rows, OutputFormat.CSV, destination)
        assert text.startswith("scenario,job")
        assert list(tmp_path.iterdir()) == []

    def test_creates_parent_directories(self, rows, tmp_path):
        target = tmp_path / "reports" / "nested" / "demo.csv"
        text = write_report(rows, OutputFormat.CSV, str(target))
        assert target.read_text(encoding="utf-8") == text

    def test_unwritable_destination(self, rows, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(ReportWriteError):
            write_report(rows, OutputFormat.CSV, str(blocker / "demo.csv"))


class TestPathStore:
    def test_dumped_paths_read_back(self, simulation, gamma_base, tmp_path):
        paths = simulation.simulate_paths(gamma_base, None, MeasureTag.base_p(), 2.0, 25, SEED)
        target = tmp_path / "paths.jsonl"
        assert dump_paths(paths, str(target)) == 25
        restored = read_paths(str(target))
        assert len(restored) == 25
        assert all(a.same_as(b) for a, b in zip(paths, restored))

    def test_empty_path(self, tmp_path):
        target = tmp_path / "empty.jsonl"
        dump_paths([Path(theta=1.5, event_times=np.empty(0), claims=np.empty(0), horizon=1.0)], str(target))
        (restored,) = read_paths(str(target))
        assert len(restored) == 0 and restored.theta == 1.5
