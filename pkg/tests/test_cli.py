import io
import json
import math
import os

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from selectree.cli import (
    DataError,
    SigmaEstimationError,
    binarize_continuous,
    binarize_table,
    emit_report,
    estimate_sigma,
    ingest_csv,
    main,
    parse_report,
    subsample,
)
from selectree.inference import infer
from selectree.itemsets import Dataset, ModelConfig
from selectree.screening import marginal_screen

FIXTURE = os.path.join(os.path.dirname(__file__), "data", "interactions.csv")


def _write(tmp_path, text, name="t.csv"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


class TestIngest:
    def test_header_detected(self, tmp_path):
        p = _write(tmp_path, "a,b,y\n1,0,2.5\n0,1,-1\n")
        names, Z, y = ingest_csv(p)
        assert names == ["a", "b"]
        assert_array_equal(Z, [[1.0, 0.0], [0.0, 1.0]])
        assert_array_equal(y, [2.5, -1.0])

    def test_headerless_gets_default_names(self, tmp_path):
        p = _write(tmp_path, "1,0,2.5\n0,1,-1\n")
        names, Z, y = ingest_csv(p)
        assert names == ["z1", "z2"]
        assert Z.shape == (2, 2)

    def test_ragged_row_reports_line_number(self, tmp_path):
        p = _write(tmp_path, "a,b,y\n1,0,2\n1,0\n")
        with pytest.raises(DataError, match="line 3"):
            ingest_csv(p)

    def test_non_numeric_cell_reports_position(self, tmp_path):
        p = _write(tmp_path, "a,b,y\n1,oops,2\n")
        with pytest.raises(DataError, match="line 2, column 2"):
            ingest_csv(p)

    def test_non_finite_rejected(self, tmp_path):
        p = _write(tmp_path, "a,b,y\n1,inf,2\n")
        with pytest.raises(DataError):
            ingest_csv(p)

    def test_empty_file(self, tmp_path):
        with pytest.raises(DataError):
            ingest_csv(_write(tmp_path, ""))

    def test_header_only(self, tmp_path):
        with pytest.raises(DataError):
            ingest_csv(_write(tmp_path, "a,b,y\n"))

    def test_single_column_is_an_error(self, tmp_path):
        # need at least one covariate beside the response
        with pytest.raises(DataError):
            ingest_csv(_write(tmp_path, "1\n2\n"))


class TestBinarize:
    def test_indicator_pair(self):
        rng = np.random.default_rng(1)
        col = rng.standard_normal(500) * 2.0 + 1.0
        out = binarize_continuous(col, "v")
        assert [name for name, _ in out] == ["v>1", "v<-1"]
        z = (col - col.mean()) / col.std()
        assert_array_equal(out[0][1], (z > 1.0).astype(np.float64))
        assert_array_equal(out[1][1], (z < -1.0).astype(np.float64))

    def test_constant_column_rejected(self):
        with pytest.raises(DataError, match="zero variance"):
            binarize_continuous(np.full(10, 3.3), "flat")

    def test_table_binarizes_every_column(self):
        # a balanced 0/1 column standardizes to exactly +-1, so both of its
        # indicators are empty and collapse to a single zero column
        Z = np.array([[0.0, 2.0], [1.0, -2.0], [1.0, 0.0], [0.0, 1.0]])
        names, out = binarize_table(["b", "c"], Z)
        assert names == ["b>1", "c>1", "c<-1"]
        assert set(np.unique(out)) <= {0.0, 1.0}
        assert_array_equal(out[:, 1], [1.0, 0.0, 0.0, 0.0])
        assert_array_equal(out[:, 2], [0.0, 1.0, 0.0, 0.0])

    def test_table_drops_duplicate_indicator_columns(self):
        # two perfectly correlated continuous columns binarize identically;
        # only the first copy survives
        base = np.array([3.0, -3.0, 0.5, -0.5, 0.0, 0.2])
        Z = np.column_stack([base, base])
        names, out = binarize_table(["u", "v"], Z)
        assert names == ["u>1", "u<-1"]
        assert out.shape == (6, 2)


class TestSubsample:
    def test_identity_when_enough_budget(self):
        Z = np.arange(12.0).reshape(6, 2)
        y = np.arange(6.0)
        Z2, y2 = subsample(Z, y, max_rows=6, seed=0)
        assert Z2 is Z and y2 is y

    def test_deterministic_and_order_preserving(self):
        Z = np.arange(40.0).reshape(20, 2)
        y = np.arange(20.0)
        Z2, y2 = subsample(Z, y, max_rows=7, seed=42)
        Z3, y3 = subsample(Z, y, max_rows=7, seed=42)
        assert_array_equal(Z2, Z3)
        assert Z2.shape == (7, 2)
        # rows keep their original relative order
        assert list(y2) == sorted(y2)
        rows = {tuple(row) for row in Z}
        assert all(tuple(row) in rows for row in Z2)


class TestEstimateSigma:
    def test_matches_residual_formula(self):
        rng = np.random.default_rng(5)
        Z = (rng.random((60, 6)) < 0.5).astype(np.float64)
        y = rng.standard_normal(60)
        data = Dataset(Z, y)
        sel, _ = marginal_screen(data, k=3, r=2)
        got = estimate_sigma(data, sel)
        from selectree.itemsets import feature_column

        X = np.column_stack([feature_column(it, Z) for it in sel.selected])
        resid = y - X @ np.linalg.lstsq(X, y, rcond=None)[0]
        want = math.sqrt(float(resid @ resid) / (60 - 3))
        assert got == pytest.approx(want, rel=1e-12)

    def test_recovers_noise_scale(self):
        rng = np.random.default_rng(9)
        Z = (rng.random((1000, 8)) < 0.5).astype(np.float64)
        y = 0.25 * rng.standard_normal(1000)
        data = Dataset(Z, y)
        sel, _ = marginal_screen(data, k=4, r=2)
        assert estimate_sigma(data, sel) == pytest.approx(0.25, rel=0.1)

    def test_exact_fit_is_degenerate(self):
        Z = (np.random.default_rng(3).random((30, 4)) < 0.5).astype(np.float64)
        y = Z[:, 0].copy()
        data = Dataset(Z, y)
        sel, _ = marginal_screen(data, k=1, r=1)
        with pytest.raises(SigmaEstimationError):
            estimate_sigma(data, sel)

    def test_too_few_rows(self):
        Z = np.eye(3)
        y = np.array([1.0, 2.0, 3.0])
        data = Dataset(Z, y)
        sel, _ = marginal_screen(data, k=3, r=1)
        with pytest.raises(SigmaEstimationError):
            estimate_sigma(data, sel)


class TestReportRoundTrip:
    @pytest.fixture()
    def report(self, tiny):
        return infer(tiny, ModelConfig(r=2, k=2, sigma=1.0))

    @pytest.mark.parametrize("fmt", ["json", "csv"])
    def test_round_trip(self, tmp_path, report, fmt):
        names = ["a", "b", "c"]
        path = tmp_path / f"r.{fmt}"
        with open(path, "w") as fh:
            emit_report(report, names, fh, fmt)
        rows = parse_report(path, fmt)
        assert len(rows) == len(report.features)
        for row, feat in zip(rows, report.features):
            assert row["beta_hat"] == feat.beta_hat
            assert row["pivot"] == feat.pivot
            assert row["significant"] == feat.significant

    def test_infinite_endpoints_serialized_as_words(self, tmp_path, report):
        # force one infinite CI endpoint through the writer
        import dataclasses

        feat = dataclasses.replace(report.features[0], ci_high=math.inf)
        doctored = dataclasses.replace(report, features=(feat,) + report.features[1:])
        path = tmp_path / "r.json"
        with open(path, "w") as fh:
            emit_report(doctored, ["a", "b", "c"], fh, "json")
        text = path.read_text()
        assert '"inf"' in text
        assert json.loads(text)  # stays valid JSON
        rows = parse_report(path, "json")
        assert rows[0]["ci_high"] == math.inf

    def test_seventeen_digit_floats_survive(self, tmp_path, report):
        path = tmp_path / "r.csv"
        with open(path, "w") as fh:
            emit_report(report, ["a", "b", "c"], fh, "csv")
        rows = parse_report(path, "csv")
        assert rows[0]["v_minus"] == report.features[0].interval.v_minus

    def test_itemset_names_joined_with_star(self, tmp_path, report):
        path = tmp_path / "r.csv"
        with open(path, "w") as fh:
            emit_report(report, ["a", "b", "c"], fh, "csv")
        raw_col = [line.split(",")[0] for line in path.read_text().splitlines()[1:]]
        assert raw_col == ["a", "a*b"]
        # the parser splits the joined names back into lists
        assert [r["itemset"] for r in parse_report(path, "csv")] == [["a"], ["a", "b"]]

    def test_json_and_csv_agree(self, tmp_path, report):
        names = ["a", "b", "c"]
        pj, pc = tmp_path / "r.json", tmp_path / "r.csv"
        with open(pj, "w") as fh:
            emit_report(report, names, fh, "json")
        with open(pc, "w") as fh:
            emit_report(report, names, fh, "csv")
        assert parse_report(pj, "json") == parse_report(pc, "csv")


class TestMainExitCodes:
    def test_usage_error_is_1(self, capsys):
        assert main(["infer", "--no-such-flag"]) == 1

    def test_missing_file_is_2(self, capsys):
        assert main(["screen", "--input", "/nonexistent/x.csv"]) == 2

    def test_bad_k_is_1(self, tmp_path, capsys):
        p = _write(tmp_path, "a,b,y\n1,0,2\n0,1,1\n")
        assert main(["screen", "--input", p, "--topk", "0"]) == 1

    def test_continuous_data_without_binarize_is_2(self, tmp_path, capsys):
        p = _write(tmp_path, "a,b,y\n5.5,0,2\n0,1,1\n")
        rc = main(["screen", "--input", p])
        assert rc == 2
        assert "--binarize" in capsys.readouterr().err

    def test_sigma_degenerate_is_3(self, tmp_path, capsys):
        rng = np.random.default_rng(3)
        Z = (rng.random((30, 4)) < 0.5).astype(np.float64)
        lines = ["a,b,c,d,y"]
        for row, target in zip(Z, Z[:, 0]):
            lines.append(",".join(f"{v:g}" for v in row) + f",{target:g}")
        p = _write(tmp_path, "\n".join(lines) + "\n")
        assert main(["infer", "--input", p, "--topk", "1", "--order", "1"]) == 3


class TestMainEndToEnd:
    def test_screen_json(self, tmp_path, capsys):
        p = _write(tmp_path, "a,b,y\n1,1,2\n0,1,-1\n1,0,1\n")
        out = tmp_path / "sel.json"
        rc = main(
            ["screen", "--input", p, "--topk", "2", "--order", "2",
             "--output", str(out)]
        )
        assert rc == 0
        doc = json.loads(out.read_text())
        assert [row["itemset"] for row in doc] == [["a"], ["a", "b"]]
        assert [row["score"] for row in doc] == [3.0, 2.0]
        assert [row["sign"] for row in doc] == [1, 1]

    def test_infer_with_known_sigma(self, tmp_path):
        # same matrix as the `tiny` fixture, so the window is known exactly
        p = _write(tmp_path, "a,b,c,y\n1,1,0,2\n0,1,1,-1\n1,0,1,1\n")
        out = tmp_path / "rep.json"
        rc = main(
            ["infer", "--input", p, "--topk", "2", "--order", "2",
             "--sigma", "1.0", "--output", str(out)]
        )
        assert rc == 0
        rows = parse_report(out, "json")
        assert [row["itemset"] for row in rows] == [["a"], ["a", "b"]]
        assert rows[0]["v_minus"] == -0.5
        assert rows[0]["v_plus"] == 2.0

    def test_prune_toggle_output_is_byte_identical(self, tmp_path):
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        base = [
            "infer", "--input", FIXTURE, "--binarize", "--max-rows", "400",
            "--order", "2", "--topk", "5", "--sigma", "estimate",
        ]
        assert main(base + ["--output", str(a)]) == 0
        assert main(base + ["--no-prune", "--output", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_fixture_pipeline_finds_planted_pair(self, tmp_path):
        out = tmp_path / "rep.csv"
        rc = main(
            ["infer", "--input", FIXTURE, "--binarize", "--max-rows", "1000",
             "--order", "2", "--topk", "8", "--format", "csv",
             "--output", str(out)]
        )
        assert rc == 0
        rows = parse_report(out, "csv")
        planted = [r for r in rows if r["itemset"] == ["c1>1", "c2>1"]]
        assert planted and planted[0]["significant"]

    def test_stdout_default(self, tmp_path, capsys):
        p = _write(tmp_path, "a,b,y\n1,1,2\n0,1,-1\n1,0,1\n")
        assert main(["screen", "--input", p, "--topk", "1"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc[0]["itemset"] == ["a"]

    def test_synth_fpr_csv(self, tmp_path):
        out = tmp_path / "study.csv"
        rc = main(
            ["synth", "--rows", "40", "--cols", "8", "--order", "2",
             "--topk", "3", "--sigma", "0.3", "--trials", "4",
             "--seed", "5", "--format", "csv", "--output", str(out)]
        )
        assert rc == 0
        text = out.read_text().splitlines()
        assert text[0].startswith("study,method,")
        assert {line.split(",")[1] for line in text[1:]} == {"PSI", "OLS", "SPLIT"}

    def test_perf_csv(self, tmp_path):
        out = tmp_path / "perf.csv"
        rc = main(
            ["perf", "--rows", "40", "--topk", "2", "--sigma", "0.3",
             "--trials", "2", "--cols-list", "8", "--order-list", "1,2",
             "--sparsity-list", "0.5", "--truth", "1,2:1.0",
             "--format", "csv", "--output", str(out)]
        )
        assert rc == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 3  # header + one row per model order
        assert lines[0].split(",")[:3] == ["d", "r", "sparsity"]
