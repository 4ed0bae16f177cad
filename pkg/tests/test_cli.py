"""Batch front end: round trips, schema errors, reproducibility."""

import json
import os

import numpy as np
import pytest

from twdglm.cli import load_dataset, read_coefficients, run_command
from twdglm.errors import DomainError, SchemaError
from twdglm.family import FamilySpec
from twdglm.graph import ArealGraph


def run_ok(argv, capsys=None):
    code = run_command(argv)
    assert code == 0, f"command failed: {argv}"


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    run_ok(["simulate", "--out", str(out), "--n", "900", "--lattice", "3x3",
            "--zero-prop", "0.2", "--seed", "5", "--p", "1.5"])
    return out


class TestSimulate:
    def test_outputs_exist(self, sim_dir):
        for name in ("data.csv", "graph.tsv", "oracle.tsv",
                     "effective_config.json"):
            assert (sim_dir / name).exists()

    def test_graph_parses_back(self, sim_dir):
        g = ArealGraph.from_edge_list_file(sim_dir / "graph.tsv")
        assert g.n_vertices == 9
        assert len(g.edges) == 12  # rook 3x3

    def test_oracle_round_trip(self, sim_dir):
        theta, beta_names, gamma_names, labels = read_coefficients(
            sim_dir / "oracle.tsv")
        assert beta_names[0] == "(intercept)"
        assert len(labels) == 9
        assert theta.gamma.size == 5


class TestLoadDataset:
    def test_happy_path(self, tmp_path):
        graph = tmp_path / "g.tsv"
        graph.write_text("a\tb\nb\tc\n", encoding="utf-8")
        csvf = tmp_path / "d.csv"
        csvf.write_text("y,vertex,x_1,z_1\n1.5,a,0.2,1\n0,b,0.1,0\n"
                        "2.25,c,0.7,1\n", encoding="utf-8")
        g = ArealGraph.from_edge_list_file(graph)
        data, bn, gn = load_dataset(csvf,
                                    FamilySpec.compound_poisson_gamma(1.5),
                                    g)
        assert data.n_rows == 3
        assert bn == ["(intercept)", "x_1"]
        assert gn == ["(intercept)", "z_1"]

    def test_missing_y_column(self, tmp_path):
        graph = tmp_path / "g.tsv"
        graph.write_text("a\tb\n", encoding="utf-8")
        csvf = tmp_path / "d.csv"
        csvf.write_text("resp,vertex\n1,a\n", encoding="utf-8")
        g = ArealGraph.from_edge_list_file(graph)
        with pytest.raises(SchemaError, match="'y'"):
            load_dataset(csvf, FamilySpec.compound_poisson_gamma(1.5), g)

    def test_negative_response_cites_row(self, tmp_path):
        graph = tmp_path / "g.tsv"
        graph.write_text("a\tb\n", encoding="utf-8")
        csvf = tmp_path / "d.csv"
        csvf.write_text("y,vertex\n-1,a\n2,b\n", encoding="utf-8")
        g = ArealGraph.from_edge_list_file(graph)
        with pytest.raises(DomainError, match="row 1"):
            load_dataset(csvf, FamilySpec.compound_poisson_gamma(1.5), g)

    def test_unknown_vertex_cites_row(self, tmp_path):
        graph = tmp_path / "g.tsv"
        graph.write_text("a\tb\n", encoding="utf-8")
        csvf = tmp_path / "d.csv"
        csvf.write_text("y,vertex\n1,a\n1,zzz\n", encoding="utf-8")
        g = ArealGraph.from_edge_list_file(graph)
        with pytest.raises(SchemaError, match="row 2"):
            load_dataset(csvf, FamilySpec.compound_poisson_gamma(1.5), g)

    def test_expand_categorical(self, tmp_path):
        graph = tmp_path / "g.tsv"
        graph.write_text("a\tb\n", encoding="utf-8")
        csvf = tmp_path / "d.csv"
        csvf.write_text("y,vertex,x_color\n1,a,red\n2,b,blue\n1,a,green\n",
                        encoding="utf-8")
        g = ArealGraph.from_edge_list_file(graph)
        with pytest.raises(SchemaError):
            load_dataset(csvf, FamilySpec.compound_poisson_gamma(1.5), g)
        data, bn, _ = load_dataset(csvf,
                                   FamilySpec.compound_poisson_gamma(1.5),
                                   g, expand=True)
        # last sorted level ("red") dropped
        assert bn == ["(intercept)", "x_color[blue]", "x_color[green]"]
        np.testing.assert_array_equal(data.X[:, 1], [0.0, 1.0, 0.0])


class TestPipeline:
    def test_fit_then_report(self, sim_dir, tmp_path):
        fit_out = tmp_path / "fit"
        run_ok(["fit", "--data", str(sim_dir / "data.csv"), "--graph",
                str(sim_dir / "graph.tsv"), "--family", "cpg", "--p", "1.5",
                "--approx", "saddlepoint", "--lambda1", "1", "--lambda2",
                "1", "--out", str(fit_out)])
        for name in ("coefficients.tsv", "wald.tsv", "trace.tsv",
                     "summary.tsv", "effective_config.json"):
            assert (fit_out / name).exists()
        rep_out = tmp_path / "rep"
        run_ok(["report", "--fit-dir", str(fit_out), "--oracle",
                str(sim_dir / "oracle.tsv"), "--out", str(rep_out)])
        lines = (rep_out / "alpha_vs_pattern.tsv").read_text().strip()
        assert lines.startswith("vertex\talpha_hat\talpha_oracle")
        assert len(lines.split("\n")) == 10

    def test_alpha_summary_in_fit_summary(self, sim_dir, tmp_path):
        fit_out = tmp_path / "fit2"
        run_ok(["fit", "--data", str(sim_dir / "data.csv"), "--graph",
                str(sim_dir / "graph.tsv"), "--family", "cpg", "--p", "1.5",
                "--approx", "saddlepoint", "--out", str(fit_out)])
        summary = dict(
            line.split("\t") for line in
            (fit_out / "summary.tsv").read_text().strip().split("\n")[1:])
        for key in ("alpha_mean", "alpha_median", "alpha_sd", "alpha_range"):
            assert key in summary

    def test_poisson_with_dispersion_columns_rejected(self, sim_dir,
                                                      tmp_path, capsys):
        code = run_command(
            ["fit", "--data", str(sim_dir / "data.csv"), "--graph",
             str(sim_dir / "graph.tsv"), "--family", "poisson", "--out",
             str(tmp_path / "poi")])
        captured = capsys.readouterr()
        assert code != 0
        assert "error[E_CONFIG]" in captured.err
        assert "constant dispersion" in captured.err

    def test_tune_then_predict_consistency(self, sim_dir, tmp_path):
        tune_out = tmp_path / "tune"
        run_ok(["tune", "--data", str(sim_dir / "data.csv"), "--graph",
                str(sim_dir / "graph.tsv"), "--family", "cpg", "--p", "1.5",
                "--approx", "saddlepoint", "--grid=-2:2:3,-2:2:3",
                "--seed", "11", "--out", str(tune_out)])
        assert (tune_out / "surface.tsv").exists()
        surface = (tune_out / "surface.tsv").read_text().strip().split("\n")
        assert len(surface) == 10

        # rebuild the hold-out rows and score them with the tuned fit
        hold = [int(v) for v in
                (tune_out / "holdout_rows.txt").read_text().split()]
        src = (sim_dir / "data.csv").read_text().strip().split("\n")
        hold_csv = tmp_path / "holdout.csv"
        hold_csv.write_text(
            "\n".join([src[0]] + [src[i + 1] for i in hold]) + "\n",
            encoding="utf-8")
        pred_out = tmp_path / "pred"
        run_ok(["predict", "--data", str(hold_csv), "--graph",
                str(sim_dir / "graph.tsv"), "--fit-dir", str(tune_out),
                "--out", str(pred_out)])
        pred_summary = dict(
            line.split("\t") for line in
            (pred_out / "predict_summary.tsv").read_text().strip()
            .split("\n")[1:])
        tune_summary = dict(
            line.split("\t") for line in
            (tune_out / "summary.tsv").read_text().strip().split("\n")[1:])
        assert float(pred_summary["total_weighted_deviance"]) == \
            pytest.approx(float(tune_summary["holdout_weighted_deviance"]),
                          abs=1e-9)

    def test_byte_identical_reruns_and_config_echo(self, sim_dir, tmp_path):
        out1, out2, out3 = (tmp_path / n for n in ("r1", "r2", "r3"))
        argv = ["fit", "--data", str(sim_dir / "data.csv"), "--graph",
                str(sim_dir / "graph.tsv"), "--family", "cpg", "--p",
                "1.5", "--approx", "saddlepoint", "--lambda1", "0.5",
                "--lambda2", "2", "--threads", "1"]
        run_ok(argv + ["--out", str(out1)])
        run_ok(argv + ["--out", str(out2)])
        c1 = (out1 / "coefficients.tsv").read_bytes()
        assert c1 == (out2 / "coefficients.tsv").read_bytes()
        # ordered reductions make outputs independent of the thread flag
        out4 = tmp_path / "r4"
        run_ok(argv[:-2] + ["--threads", "4", "--out", str(out4)])
        assert c1 == (out4 / "coefficients.tsv").read_bytes()
        # echoed config reproduces the run without any explicit flags
        run_ok(["fit", "--config", str(out1 / "effective_config.json"),
                "--out", str(out3)])
        assert c1 == (out3 / "coefficients.tsv").read_bytes()

    def test_unknown_family_is_config_error(self, capsys):
        code = run_command(["fit", "--family", "weibull", "--data", "x",
                            "--graph", "y", "--out", "z"])
        captured = capsys.readouterr()
        assert code == 2
        assert "error[E_CONFIG]" in captured.err

    def test_missing_data_file_is_io_error(self, sim_dir, tmp_path, capsys):
        code = run_command(
            ["fit", "--data", str(tmp_path / "nope.csv"), "--graph",
             str(sim_dir / "graph.tsv"), "--family", "cpg", "--out",
             str(tmp_path / "o")])
        captured = capsys.readouterr()
        assert code != 0
        assert captured.err.startswith("error[")
