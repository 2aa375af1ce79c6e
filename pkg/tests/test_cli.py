import csv

import numpy as np
import pytest

from tricluster import io
from tricluster.cli import main
from tricluster.core import Partition
from tricluster.exp_model import ExpModelParams
from tricluster.experiments import SynthConfig, gen_synthetic
from tricluster.hmm import hmm_train
from tricluster.exp_model import TrainingSet

SIM = ["--scale-c", "4", "--threshold-lambda", "0.135"]


@pytest.fixture
def fixture_dir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["generate", "--n", "3", "--steps", "400", "--seed", "7", "--change-prob", "0.01"]) == 0
    return tmp_path


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_generate_writes_panel_and_truth(tmp_path, capsys):
    out = tmp_path / "p.csv"
    code = main(["generate", "--n", "3", "--steps", "5000", "--noise", "0.1", "--seed", "7",
                 "--panel-out", str(out), "--truth-out", str(tmp_path / "t.csv")])
    assert code == 0
    assert len(rows(out)) == 5001
    assert rows(out)[0] == ["time", "s1", "s2", "s3"]
    assert "5000 steps" in capsys.readouterr().out


def test_generate_zero_steps_is_usage_error(capsys):
    assert main(["generate", "--steps", "0"]) == 1
    assert "usage error" in capsys.readouterr().err


def test_unknown_command_is_usage_error():
    assert main(["frobnicate"]) == 1
    assert main([]) == 1


def test_train_needs_truth_unless_spectral(fixture_dir):
    assert main(["train", "--panel", "panel.csv"]) == 1


def test_train_writes_three_pair_rows(fixture_dir):
    assert main(["train", "--panel", "panel.csv", "--truth", "truth.csv", *SIM]) == 0
    r = rows("model/params.csv")
    assert r[0][:5] == ["i", "j", "rate1", "rate0", "prior1"]
    assert len(r) == 4
    first = (fixture_dir / "model/params.csv").read_bytes()
    assert main(["train", "--panel", "panel.csv", "--truth", "truth.csv", *SIM]) == 0
    assert (fixture_dir / "model/params.csv").read_bytes() == first


def test_train_with_spectral_labels(fixture_dir):
    code = main(["train", "--panel", "panel.csv", "--labels", "spectral", "--train-range", "1:80",
                 "--out-dir", "m2", *SIM])
    assert code == 0
    assert len(rows("m2/params.csv")) == 4


def test_round_trip_every_method(fixture_dir):
    assert main(["train", "--panel", "panel.csv", "--truth", "truth.csv", "--hmm", *SIM]) == 0
    runs = {
        "shi-malik": [*SIM],
        "spectral": [*SIM, "--c-max", "3", "--restarts", "1"],
        "exponential": ["--model", "model"],
        "triangular-exact": ["--model", "model"],
        "triangular-mcmc": ["--model", "model", "--steps", "1500", "--burn-in", "200"],
        "hmm": ["--model", "model"],
    }
    for method, extra in runs.items():
        assert main(["cluster", "--panel", "panel.csv", "--method", method, "--out", f"{method}.csv", *extra]) == 0
        r = rows(f"{method}.csv")
        assert r[0] == ["time", "partition"]
        assert [int(x[0]) for x in r[1:]] == list(range(201, 401))
    assert main(["evaluate", "--truth", "truth.csv", *sum((["--pred", f"{m}.csv"] for m in runs), []),
                 "--exclude-after", "20", "--out", "report.csv", "--detail", "detail.csv"]) == 0
    rep = rows("report.csv")
    assert rep[0] == ["pred", "exact_match", "rand_index", "adjusted_rand", "stability", "n_steps", "n_excluded"]
    assert len(rep) == 7


def test_triangular_exact_uses_five_states(fixture_dir):
    main(["train", "--panel", "panel.csv", "--truth", "truth.csv", *SIM])
    main(["cluster", "--panel", "panel.csv", "--method", "triangular-exact", "--model", "model",
          "--test-range", "all"])
    parts = {Partition.parse(r[1]) for r in rows("pred.csv")[1:]}
    assert len(rows("pred.csv")) == 400 - 20 + 2
    assert parts <= set(Partition.parse(t) for t in ("1,2,3", "1,2|3", "1,3|2", "1|2,3", "1|2|3"))


def test_method_parameter_mismatch(fixture_dir):
    assert main(["cluster", "--panel", "panel.csv", "--method", "hmm"]) == 1
    assert main(["cluster", "--panel", "panel.csv", "--method", "spectral", "--steps", "10"]) == 1
    assert main(["cluster", "--panel", "panel.csv", "--method", "shi-malik", "--model", "x"]) == 1
    main(["train", "--panel", "panel.csv", "--truth", "truth.csv"])
    # model directory without an HMM
    assert main(["cluster", "--panel", "panel.csv", "--method", "hmm", "--model", "model"]) == 1


def test_missing_file_is_data_error(fixture_dir, capsys):
    assert main(["cluster", "--panel", "nope.csv", "--method", "shi-malik"]) == 2
    assert "nope.csv" in capsys.readouterr().err


def test_model_series_count_mismatch(fixture_dir):
    main(["train", "--panel", "panel.csv", "--truth", "truth.csv"])
    main(["generate", "--n", "4", "--steps", "100", "--panel-out", "p4.csv", "--truth-out", "t4.csv"])
    assert main(["cluster", "--panel", "p4.csv", "--method", "exponential", "--model", "model"]) == 2


def test_evaluate_mismatched_n(fixture_dir):
    main(["generate", "--n", "4", "--steps", "100", "--panel-out", "p4.csv", "--truth-out", "t4.csv"])
    assert main(["evaluate", "--pred", "t4.csv", "--truth", "truth.csv"]) == 2


def test_evaluate_truth_against_itself(fixture_dir, capsys):
    assert main(["evaluate", "--pred", "truth.csv", "--truth", "truth.csv", "--out", "r.csv"]) == 0
    row = rows("r.csv")[1]
    assert row[1:4] == ["1", "1", "1"]


def test_capacity_error_exit_code(fixture_dir, tmp_path):
    values = np.random.default_rng(0).standard_normal((40, 14))
    from tricluster.core import SeriesPanel
    io.write_panel("wide.csv", SeriesPanel(values))
    params = ExpModelParams.uniform(14, 1.0, 1.0, 0.5)
    (tmp_path / "wide").mkdir()
    io.write_params("wide/params.csv", params)
    assert main(["cluster", "--panel", "wide.csv", "--method", "triangular-exact", "--model", "wide"]) == 3


def test_dump_similarity_and_trace(fixture_dir):
    main(["train", "--panel", "panel.csv", "--truth", "truth.csv"])
    code = main(["cluster", "--panel", "panel.csv", "--method", "triangular-mcmc", "--model", "model",
                 "--steps", "100", "--burn-in", "10", "--test-range", "390:400", "--dump-similarity", "sims",
                 "--trace", "traces"])
    assert code == 0
    sims = sorted((fixture_dir / "sims").iterdir())
    assert len(sims) == 11
    assert rows(sims[0])[0] == ["series", "s1", "s2", "s3"]
    trace = rows(fixture_dir / "traces" / "chain_390.csv")
    assert trace[0] == ["step", "accepted", "log_score", "partition"] and len(trace) == 101


def test_weights_command(fixture_dir):
    assert main(["weights", "--panel", "panel.csv", "--partition", "1|2|3", "--window", "50"]) == 0
    w = [float(r[1]) for r in rows("weights.csv")[1:]]
    assert sum(w) == pytest.approx(1.0)
    assert main(["weights", "--panel", "panel.csv", "--timeline", "truth.csv", "--at", "300"]) == 0


def test_weights_equal_vol_singletons(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    x = np.random.default_rng(1).standard_normal(30)
    from tricluster.core import SeriesPanel
    io.write_panel("p.csv", SeriesPanel(np.column_stack([x, -x])))
    assert main(["weights", "--panel", "p.csv", "--partition", "1|2"]) == 0
    assert [r[1] for r in rows("weights.csv")[1:]] == ["0.5", "0.5"]


def test_clique_demo(tmp_path, capsys):
    tri = tmp_path / "triangle.txt"
    tri.write_text("1 2\n2 3\n1 3\n")
    path3 = tmp_path / "path3.txt"
    path3.write_text("1 2\n2 3\n")
    assert main(["clique-demo", "--graph", str(tri), "--k", "3"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "YES"
    assert sum("pass" in line for line in out) == 2
    assert main(["clique-demo", "--graph", str(path3), "--k", "3"]) == 0
    assert capsys.readouterr().out.splitlines()[0] == "NO"


def test_config_file_and_flag_precedence(fixture_dir):
    main(["train", "--panel", "panel.csv", "--truth", "truth.csv", "--hmm"])
    (fixture_dir / "run.cfg").write_text("# hmm run\nmethod = spectral\nout=a.csv\n--scale-c=4\n")
    assert main(["cluster", "--panel", "panel.csv", "--config", "run.cfg", "--method", "hmm",
                 "--model", "model"]) == 0
    assert (fixture_dir / "a.csv").exists()
    (fixture_dir / "bad.cfg").write_text("colour=blue\n")
    assert main(["generate", "--config", "bad.cfg"]) == 1


def test_panel_round_trip(tmp_path):
    panel, truth = gen_synthetic(SynthConfig(steps=30, seed=2))
    io.write_panel(tmp_path / "p.csv", panel)
    io.write_timeline(tmp_path / "t.csv", truth)
    np.testing.assert_allclose(io.read_panel(tmp_path / "p.csv").values, panel.values, rtol=1e-11)
    assert io.read_timeline(tmp_path / "t.csv") == truth


def test_params_and_hmm_round_trip(tmp_path):
    panel, truth = gen_synthetic(SynthConfig(steps=60, seed=2, regime_change_prob=0.1))
    sims = [np.full((3, 3), 0.2 + 0.01 * k) for k in range(60)]
    hmm = hmm_train(TrainingSet.from_pairs(sims, truth.partitions))
    io.write_hmm(tmp_path, hmm)
    back = io.read_hmm(tmp_path)
    np.testing.assert_allclose(back.log_transition, hmm.log_transition, rtol=1e-10)
    iu = np.triu_indices(3, 1)
    for name in ("rate1", "rate0", "prior1"):
        np.testing.assert_allclose(getattr(back.emission, name)[iu], getattr(hmm.emission, name)[iu], rtol=1e-11)
    assert back.emission.prior_floor == pytest.approx(hmm.emission.prior_floor)
    assert back.states == hmm.states


def test_malformed_inputs(tmp_path):
    (tmp_path / "p.csv").write_text("time,s1,s2\n2,0.1,0.2\n")
    assert main(["weights", "--panel", str(tmp_path / "p.csv"), "--partition", "1|2"]) == 2
    (tmp_path / "t.csv").write_text("when,partition\n1,1|2\n")
    assert main(["evaluate", "--pred", str(tmp_path / "t.csv"), "--truth", str(tmp_path / "t.csv")]) == 2
