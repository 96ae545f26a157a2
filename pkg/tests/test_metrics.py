import pytest

from gridmeta.metrics import (
    CSV_COLUMNS,
    MetricsFormatError,
    MetricsRecord,
    format_row,
    read_metrics_csv,
    write_metrics_csv,
    write_timing_csv,
)


def sample_records():
    return [
        MetricsRecord(1, 3.25, -8.1, 0.0, 1, 0.04, wall_time=1.5),
        MetricsRecord(2, 1.0 / 3.0, -5.055, 0.5, 1, 0.031),
        MetricsRecord(3, 2.0, -1.0, 1.0, 2, 0.0),
    ]


class TestRecord:
    def test_success_rate_bounds(self):
        with pytest.raises(ValueError):
            MetricsRecord(1, 0.0, 0.0, 1.5, 1, 0.0)

    def test_format_row_uses_repr_floats(self):
        row = format_row(sample_records()[1])
        assert row == f"2,{1.0 / 3.0!r},-5.055,0.5,1,0.031"


class TestCsvRoundTrip:
    def test_round_trip_preserves_values(self, tmp_path):
        path = tmp_path / "metrics.csv"
        records = sample_records()
        write_metrics_csv(path, records)
        loaded = read_metrics_csv(path)
        assert len(loaded) == len(records)
        for orig, back in zip(records, loaded):
            assert back.meta_iteration == orig.meta_iteration
            assert back.meta_loss == orig.meta_loss  # repr round trip is exact
            assert back.level == orig.level

    def test_wall_time_not_serialized(self, tmp_path):
        path = tmp_path / "metrics.csv"
        write_metrics_csv(path, sample_records())
        text = path.read_text()
        assert text.splitlines()[0] == ",".join(CSV_COLUMNS)
        assert "wall" not in text
        loaded = read_metrics_csv(path)
        assert all(r.wall_time == 0.0 for r in loaded)

    def test_identical_records_identical_bytes(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_metrics_csv(a, sample_records())
        write_metrics_csv(b, sample_records())
        assert a.read_bytes() == b.read_bytes()


class TestFormatErrors:
    def test_empty_file(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("")
        with pytest.raises(MetricsFormatError):
            read_metrics_csv(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("nope\n1,2,3,4,5,6\n")
        with pytest.raises(MetricsFormatError, match="line 1"):
            read_metrics_csv(path)

    def test_field_count_error_names_line(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text(",".join(CSV_COLUMNS) + "\n1,2.0,3.0,0.5,1,0.0\n1,2\n")
        with pytest.raises(MetricsFormatError, match="line 3") as exc:
            read_metrics_csv(path)
        assert exc.value.line_no == 3

    def test_unparseable_value_names_line(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text(",".join(CSV_COLUMNS) + "\n1,abc,3.0,0.5,1,0.0\n")
        with pytest.raises(MetricsFormatError, match="line 2"):
            read_metrics_csv(path)


class TestTimingSidecar:
    def test_schema(self, tmp_path):
        path = tmp_path / "timing.csv"
        write_timing_csv(path, sample_records())
        lines = path.read_text().splitlines()
        assert lines[0] == "meta_iteration,wall_time"
        assert lines[1] == "1,1.5"
