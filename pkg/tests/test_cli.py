import numpy as np
import pytest

from tdln import csvio, metrics
from tdln.cli import ConfigError, RunConfig, drop_and_redensify, main, read_config_file
from tdln.modelfile import load_model
from tdln.preprocess import RawSeries

GEN = ["--classes", "3", "--channels", "4", "--train-runs", "6", "--test-runs", "2",
       "--train-length", "60", "--test-length", "60"]
NET = ["--w", "10", "--s", "5", "--epochs", "2", "--batch-size", "32", "--blstm-hidden", "4",
       "--lstm-hidden", "4", "--fcnn-sizes", "8,6", "--n-estimators", "5", "--threads", "1"]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["gen", "--seed", "7", "--out", str(d)] + GEN) == 0
    assert main(["train", str(d / "train.csv"), "--out", str(d / "m.tdln")] + NET) == 0
    return d


def test_gen_deterministic_and_labels(workdir, tmp_path, capsys):
    assert main(["gen", "--seed", "7", "--out", str(tmp_path)] + GEN) == 0
    out = capsys.readouterr().out
    assert "random_variation" in out and "step" in out
    for name in ("train.csv", "test.csv"):
        assert (tmp_path / name).read_bytes() == (workdir / name).read_bytes()
    series, labeled = csvio.read_series(tmp_path / "train.csv")
    assert labeled and set(np.unique(series.labels)) == {0, 1, 2}


def test_config_echo(workdir, capsys):
    main(["gen", "--seed", "7", "--out", str(workdir / "again")] + GEN)
    err = capsys.readouterr().err
    assert "seed = 7" in err and "n_estimators = 112" in err and "classes = 3" in err


def test_train_modes(workdir, capsys):
    model = load_model(workdir / "m.tdln")
    assert model.mode == "full" and model.forest is not None
    assert main(["train", str(workdir / "train.csv"), "--out", str(workdir / "dl.tdln"), "--mode", "dl_only"]
                + NET) == 0
    out = capsys.readouterr().out
    assert "validation macro FDR" in out and "epoch" in out
    assert b'"forest"' not in (workdir / "dl.tdln").read_bytes()
    assert load_model(workdir / "dl.tdln").forest is None


def test_detect_ignore_labels(workdir, tmp_path, capsys):
    series, _ = csvio.read_series(workdir / "test.csv")
    csvio.write_series(series, tmp_path / "bare.csv", labeled=False)
    assert main(["detect", str(workdir / "m.tdln"), str(workdir / "test.csv"), "--ignore-labels"]) == 0
    a = capsys.readouterr().out
    assert main(["detect", str(workdir / "m.tdln"), str(tmp_path / "bare.csv")]) == 0
    b = capsys.readouterr().out
    assert a == b and "truth" not in a.splitlines()[0]
    assert len(a.splitlines()) - 1 == (len(series) - 10) // 5 + 1


def test_detect_500_rows_defaults(tmp_path, capsys):
    rng = np.random.default_rng(0)
    train = RawSeries(rng.normal(size=(400, 2)), np.repeat([0, 1], 200), 2)
    csvio.write_series(train, tmp_path / "t.csv")
    csvio.write_series(RawSeries(rng.normal(size=(500, 2)), np.zeros(500, int), 1), tmp_path / "b.csv",
                       labeled=False)
    assert main(["train", str(tmp_path / "t.csv"), "--out", str(tmp_path / "m.tdln"), "--mode", "dl_only",
                 "--epochs", "1", "--blstm-hidden", "2", "--lstm-hidden", "2", "--fcnn-sizes", "4,3"]) == 0
    capsys.readouterr()
    assert main(["detect", str(tmp_path / "m.tdln"), str(tmp_path / "b.csv")]) == 0
    assert len(capsys.readouterr().out.splitlines()) == 1 + 24


def test_detect_errors(workdir, tmp_path, capsys):
    (tmp_path / "empty.csv").write_text("")
    assert main(["detect", str(workdir / "m.tdln"), str(tmp_path / "empty.csv")]) != 0
    (tmp_path / "hdr.csv").write_text("c0,c1,c2,c3\n")
    assert main(["detect", str(workdir / "m.tdln"), str(tmp_path / "hdr.csv")]) != 0
    csvio.write_series(RawSeries(np.zeros((20, 3)), np.zeros(20, int), 1), tmp_path / "three.csv")
    capsys.readouterr()
    assert main(["detect", str(workdir / "m.tdln"), str(tmp_path / "three.csv")]) == 1
    err = capsys.readouterr().err
    assert "3 channels" in err and "expects 4" in err


def test_eval_pipeline_and_machine_block(workdir, tmp_path, capsys):
    det = tmp_path / "det.csv"
    assert main(["detect", str(workdir / "m.tdln"), str(workdir / "test.csv"), "--out", str(det)]) == 0
    capsys.readouterr()
    assert main(["eval", str(det), "--labels", str(workdir / "test.csv"), "--roc-csv",
                 str(tmp_path / "roc.csv")]) == 0
    out = capsys.readouterr().out
    rep = metrics.parse_machine_block(out)
    d = csvio.parse_detections(det.read_text())
    ref = metrics.report(d["predicted"], d["proba"], d["truth"], 3)
    assert float(rep["macro_fdr"]) == ref.macro_fdr and float(rep["micro_auc"]) == ref.micro_auc
    conf = [[int(v) for v in rep[f"confusion.{p}"].split(",")] for p in range(3)]
    assert conf == ref.confusion.tolist()
    assert (tmp_path / "roc.csv").read_text().startswith("threshold,fpr,tpr\n")


def test_eval_all_correct(tmp_path, capsys):
    from tdln.pipeline import Detection
    dets = [Detection(k, 10 * k, c, np.eye(3)[c], False, c) for k, c in enumerate([0, 1, 2, 2, 1, 0])]
    (tmp_path / "d.csv").write_text(csvio.format_detections(dets, 3))
    assert main(["eval", str(tmp_path / "d.csv")]) == 0
    out = capsys.readouterr().out
    assert "macro FDR (all classes present): 100.00%" in out
    block = metrics.parse_machine_block(out)
    assert float(block["macro_fdr"]) == 1.0
    table = out.split("BEGIN METRICS")[0].splitlines()
    for c in range(3):
        assert float(block[f"fdr.{c}"]) == 1.0
        assert any(line.split()[:1] == [str(c)] and "100.00" in line for line in table)


def test_eval_misaligned(tmp_path, capsys):
    from tdln.pipeline import Detection
    dets = [Detection(0, 100, 1, np.array([0.2, 0.8]), False)]
    (tmp_path / "d.csv").write_text(csvio.format_detections(dets, 2))
    csvio.write_series(RawSeries(np.zeros((50, 1)), np.zeros(50, int), 1), tmp_path / "l.csv")
    assert main(["eval", str(tmp_path / "d.csv"), "--labels", str(tmp_path / "l.csv")]) == 1
    assert "alignment" in capsys.readouterr().err
    assert main(["eval", str(tmp_path / "d.csv")]) == 1


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# experiment\nseed = 3\nfcnn-sizes = 8, 4  # two layers\nmax_depth = none\nbootstrap = true\n")
    vals = read_config_file(cfg)
    assert vals == {"seed": 3, "fcnn_sizes": (8, 4), "max_depth": None, "bootstrap": True}
    cfg.write_text("seed = 1\nlearning_rate = 0.1\n")
    with pytest.raises(ConfigError, match=":2:.*learning_rate"):
        read_config_file(cfg)
    assert main(["gen", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    cfg.write_text("seed = 4\nclasses = 3\n")
    assert main(["gen", "--config", str(cfg), "--seed", "5", "--out", str(tmp_path)] + GEN[2:]) == 0
    assert "seed = 5" in capsys.readouterr().err


def test_config_validation():
    with pytest.raises(ConfigError):
        RunConfig(dropout=1.0).validate()
    with pytest.raises(ConfigError):
        RunConfig(drop_classes=(0,)).validate()
    with pytest.raises(SystemExit):
        main(["train", "x.csv", "--mode", "trees"])


def test_drop_classes():
    s = RawSeries(np.arange(8.0).reshape(8, 1), np.array([0, 1, 2, 3, 3, 2, 1, 0]), 4)
    out, mapping = drop_and_redensify(s, (2,))
    assert mapping == {0: 0, 1: 1, 3: 2}
    assert out.labels.tolist() == [0, 1, 2, 2, 1, 0] and out.values[:, 0].tolist() == [0, 1, 3, 4, 6, 7]
    assert out.class_count == 3


def test_gen_train_detect_deterministic(workdir, tmp_path, capsys):
    assert main(["train", str(workdir / "train.csv"), "--out", str(tmp_path / "m.tdln")] + NET) == 0
    assert (tmp_path / "m.tdln").read_bytes() == (workdir / "m.tdln").read_bytes()
