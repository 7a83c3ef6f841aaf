"""End-to-end command-line behavior, including exit codes."""

import numpy as np
import pytest

from dperm.bench import read_records
from dperm.cli import main, read_model, write_model


class TestParsing:
    def test_no_arguments_is_usage_error(self):
        assert main([]) == 1

    @pytest.mark.parametrize(
        "sub", ["bench", "train", "sensitivity-check", "mechanism-check"]
    )
    def test_help_exits_zero(self, sub, capsys):
        assert main([sub, "--help"]) == 0
        assert "usage" in capsys.readouterr().out

    def test_unknown_subcommand(self):
        assert main(["frobnicate"]) == 1

    def test_bad_flag_value(self):
        assert main(["sensitivity-check", "--pairs", "many"]) == 1


class TestModelFiles:
    def test_round_trip(self, tmp_path):
        p = tmp_path / "model.csv"
        w = np.array([0.125, -1.5, 3.0000000000000004])
        write_model(p, w, {"algorithm": "opgd", "epsilon": "1.0"})
        back, meta = read_model(p)
        assert np.array_equal(back, w)
        assert meta == {"algorithm": "opgd", "epsilon": "1.0"}

    def test_comment_prefix_keeps_plain_csv(self, tmp_path):
        p = tmp_path / "model.csv"
        write_model(p, np.array([1.0]), {"seed": "0"})
        lines = p.read_text().splitlines()
        assert lines[0] == "# seed = 0"
        assert lines[1] == "1.0"


class TestMechanismCheck:
    def test_passes_at_honest_tolerance(self, capsys):
        code = main(["mechanism-check", "--samples", "50000", "--d", "2",
                     "--rel-tol", "0.05", "--seed", "1"])
        out = capsys.readouterr().out
        assert code == 0
        assert "gamma_laplace" in out and "gaussian" in out
        assert "FAIL" not in out

    def test_fails_at_impossible_tolerance(self, capsys):
        code = main(["mechanism-check", "--samples", "2000", "--rel-tol", "1e-9",
                     "--seed", "1"])
        assert code == 3
        assert "FAIL" in capsys.readouterr().out

    def test_bad_arguments(self):
        assert main(["mechanism-check", "--samples", "0"]) == 1
        assert main(["mechanism-check", "--sigma", "0"]) == 1


class TestSensitivityCheck:
    def test_writes_csv_and_passes(self, tmp_path):
        out = tmp_path / "trace.csv"
        code = main(["sensitivity-check", "--pairs", "10", "--n", "50",
                     "--T", "10", "--seed", "2", "--out", str(out)])
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "n,mu,eta,T,max_delta,bound,ok"
        assert len(lines) == 11
        assert all(ln.endswith("True") for ln in lines[1:])

    def test_stdout_by_default(self, capsys):
        code = main(["sensitivity-check", "--pairs", "2", "--n", "30",
                     "--T", "5", "--seed", "3"])
        assert code == 0
        assert capsys.readouterr().out.startswith("n,mu,eta,T,max_delta,bound,ok")

    def test_strongly_convex_path(self, tmp_path):
        out = tmp_path / "trace.csv"
        code = main(["sensitivity-check", "--pairs", "5", "--n", "40", "--T", "200",
                     "--mu", "0.1", "--seed", "4", "--out", str(out)])
        assert code == 0

    def test_zero_pairs_rejected(self):
        assert main(["sensitivity-check", "--pairs", "0"]) == 1

    def test_tiny_n_rejected(self):
        assert main(["sensitivity-check", "--n", "1"]) == 1


class TestTrain:
    def _train(self, tmp_path, *extra):
        out = tmp_path / "model.csv"
        argv = ["train", "--synthetic", "logistic:60:3", "--mu", "0.1",
                "--out", str(out), *extra]
        return main(argv), out

    def test_output_perturbation_pure_epsilon(self, tmp_path):
        code, out = self._train(tmp_path, "--method", "opgd",
                                "--epsilon", "1.0", "--seed", "3")
        assert code == 0
        w, meta = read_model(out)
        assert w.shape == (3,)
        assert meta["algorithm"] == "opgd"
        assert meta["noise_kind"] == "gamma_laplace"
        assert meta["seed"] == "3"
        assert meta["loss"] == "logistic"
        assert set(meta) == {
            "algorithm", "epsilon", "delta", "iterations", "noise_kind",
            "noise_sigma", "seed", "dataset", "loss", "mu",
        }

    def test_stochastic_methods_need_delta(self, tmp_path):
        code, _ = self._train(tmp_path, "--method", "rrpsgd", "--epsilon", "1.0")
        assert code == 1
        code, _ = self._train(tmp_path, "--method", "baseline", "--epsilon", "1.0")
        assert code == 1

    def test_random_round_training(self, tmp_path):
        out = tmp_path / "model.csv"
        code = main(["train", "--synthetic", "logistic:30:3", "--mu", "0.1",
                     "--method", "rrpsgd", "--epsilon", "1.0", "--delta", "1e-3",
                     "--out", str(out), "--seed", "5"])
        assert code == 0
        _, meta = read_model(out)
        assert meta["algorithm"] == "rrpsgd"
        assert meta["noise_kind"] == "gaussian"
        assert int(meta["iterations"]) <= 30 * 30

    def test_csv_input(self, tmp_path):
        data = tmp_path / "data.csv"
        rows = ["a,b,label"]
        for k in range(40):
            s = 1.0 if k % 2 == 0 else -1.0
            rows.append(f"{0.4 * s},{0.1 * s},{int(s)}")
        data.write_text("\n".join(rows) + "\n", encoding="utf-8")
        out = tmp_path / "model.csv"
        code = main(["train", "--csv", str(data), "--label", "label",
                     "--task", "classification", "--method", "opgd",
                     "--epsilon", "5.0", "--mu", "0.1", "--out", str(out),
                     "--seed", "1"])
        assert code == 0
        _, meta = read_model(out)
        assert meta["dataset"] == str(data)

    def test_bad_synthetic_token(self, tmp_path):
        out = tmp_path / "model.csv"
        assert main(["train", "--synthetic", "weird:10", "--method", "opgd",
                     "--epsilon", "1.0", "--out", str(out)]) == 1
        assert main(["train", "--synthetic", "poisson:10:2", "--method", "opgd",
                     "--epsilon", "1.0", "--out", str(out)]) == 1

    def test_seed_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv("DP_ERM_SEED", "7")
        code, out = self._train(tmp_path, "--method", "opgd", "--epsilon", "1.0")
        assert code == 0
        assert read_model(out)[1]["seed"] == "7"

    def test_invalid_environment_seed(self, tmp_path, monkeypatch):
        monkeypatch.setenv("DP_ERM_SEED", "lots")
        code, _ = self._train(tmp_path, "--method", "opgd", "--epsilon", "1.0")
        assert code == 1


_BENCH_CONFIG = """
datasets = synthetic:ridge:80:3
epsilons = 1.0
mus = 0.1
trials = 1
seed = 0
"""


class TestBench:
    def _write_config(self, tmp_path, text=_BENCH_CONFIG):
        p = tmp_path / "sweep.cfg"
        p.write_text(text, encoding="utf-8")
        return p

    def test_writes_results(self, tmp_path, capsys):
        cfg = self._write_config(tmp_path)
        out = tmp_path / "results"
        code = main(["bench", str(cfg), "--out", str(out)])
        assert code == 0
        csv_text = (out / "results.csv").read_text()
        records = read_records(csv_text)
        assert len(records) == 3
        assert {r.method for r in records} == {"opgd", "rrpsgd", "baseline"}
        assert (out / "results.txt").exists()
        assert "err(opgd)" in capsys.readouterr().out

    def test_no_runtime_output_is_deterministic(self, tmp_path):
        cfg = self._write_config(tmp_path)
        texts = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert main(["bench", str(cfg), "--out", str(out), "--no-runtime"]) == 0
            texts.append((out / "results.csv").read_bytes())
        assert texts[0] == texts[1]

    def test_seed_override_changes_errors(self, tmp_path):
        cfg = self._write_config(tmp_path)
        texts = []
        for name, seed in (("a", "0"), ("b", "9")):
            out = tmp_path / name
            assert main(["bench", str(cfg), "--out", str(out), "--no-runtime",
                         "--seed", seed]) == 0
            texts.append((out / "results.csv").read_text())
        assert texts[0] != texts[1]

    def test_config_error_names_line(self, tmp_path, capsys):
        cfg = self._write_config(tmp_path, "datasets = synthetic:ridge:10:2\nepsilons = soon\n")
        assert main(["bench", str(cfg)]) == 1
        assert "line 2" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path, capsys):
        assert main(["bench", str(tmp_path / "nope.cfg")]) == 1
        assert "cannot read config" in capsys.readouterr().err

    def test_partial_failure_exits_two(self, tmp_path, capsys):
        cfg = self._write_config(
            tmp_path,
            "datasets = synthetic:ridge:60:3, synthetic:poisson:10:2\n"
            "epsilons = 1.0\nmus = 0.1\ntrials = 1\n",
        )
        out = tmp_path / "results"
        assert main(["bench", str(cfg), "--out", str(out)]) == 2
        assert "cell(s) failed" in capsys.readouterr().err
        # Good cells are still written alongside the failed ones.
        csv_text = (out / "results.csv").read_text()
        assert len(read_records(csv_text)) == 6
