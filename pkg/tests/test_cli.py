import numpy as np
import pytest

from dcloss import datagen
from dcloss.cli import main


def _table(path):
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    header = lines[0].split(",")
    return header, [dict(zip(header, l.split(","))) for l in lines[1:]]


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    assert main(["gen-data", "--subjects", "60", "--images", "3", "--bins", "30", "--dim", "8", "--out", str(out)]) == 0
    return out


def test_gen_data_outputs(data_dir):
    train = datagen.load(data_dir / "train.csv")
    cross = datagen.load(data_dir / "cross.csv")
    intra = datagen.load(data_dir / "intra.csv")
    assert train.domains() == intra.domains() == {0} and cross.domains() == {1}
    assert not (train.subjects() & cross.subjects()) and not (train.subjects() & intra.subjects())
    assert "# severity = 0.2" in (data_dir / "train.csv").read_text()


def test_gradcheck_exit_codes(tmp_path):
    assert main(["gradcheck", "--loss", "dc", "--alpha", "0.1", "--trials", "100"]) == 0
    assert main(["gradcheck", "--loss", "kl", "--out", str(tmp_path / "r.csv")]) == 0
    assert "passed,True" in (tmp_path / "r.csv").read_text()
    assert main(["gradcheck", "--alpha", "1.5"]) == 2
    assert main(["gradcheck", "--tol", "0", "--trials", "3"]) == 1
    with pytest.raises(SystemExit) as err:
        main(["gradcheck", "--trials", "many"])
    assert err.value.code == 2


def test_gradcompare_rows_and_identity(tmp_path):
    out = tmp_path / "g.csv"
    assert main(["gradcompare", "--samples", "17", "--out", str(out)]) == 0
    header, rows = _table(out)
    assert len(rows) == 17 and len(header) == 5 + 2 * 100
    assert all(r["dc_below_kl"] == "1" for r in rows)
    assert "# fraction_dc_below_kl = 1.0" in out.read_text()

    out0 = tmp_path / "g0.csv"
    assert main(["gradcompare", "--samples", "3", "--noise", "0", "--max-shift", "0", "--out", str(out0)]) == 0
    _, rows = _table(out0)
    for r in rows:
        assert float(r["kl_max_abs"]) == 0.0 and float(r["dc_max_abs"]) < 1e-15


def test_profile_symmetry(tmp_path):
    a, b, same = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "s.csv"
    assert main(["profile", "--y1", "30", "--y2", "36", "--out", str(a)]) == 0
    assert main(["profile", "--y1", "36", "--y2", "30", "--out", str(b)]) == 0
    assert main(["profile", "--y1", "30", "--y2", "30", "--out", str(same)]) == 0
    _, ra = _table(a)
    _, rb = _table(b)
    assert [r["dc"] for r in ra] == [r["dc"] for r in rb]
    assert [r["kl"] for r in ra] != [r["kl"] for r in rb]
    kl = np.array([float(r["kl"]) for r in ra])
    assert (kl > 1e-6).any() and (kl < -1e-6).any()
    _, rs = _table(same)
    assert all(float(r["kl"]) == 0.0 and float(r["dc"]) == 0.0 for r in rs)
    assert main(["profile", "--y1", "0", "--y2", "3", "--out", str(a)]) == 2
    assert main(["profile", "--y1", "3", "--out", str(a)]) == 2


def _train_args(data_dir, out, *extra):
    return ["train", "--data", str(data_dir / "train.csv"), "--epochs", "4", "--hidden", "16",
            "--out", str(out), *extra]


def test_train_eval_roundtrip(data_dir, tmp_path):
    ckpt = tmp_path / "m.json"
    assert main(_train_args(data_dir, ckpt, "--loss", "kl")) == 0
    assert (tmp_path / "m.trace.csv").exists()
    rep = tmp_path / "r.csv"
    assert main(["eval", "--model", str(ckpt), "--data", str(data_dir / "cross.csv"), "--out", str(rep)]) == 0
    _, rows = _table(rep)
    kv = {r["key"]: r["value"] for r in rows}
    assert set(kv) == {"mae", "cs", "threshold_I", "n"} and int(kv["threshold_I"]) == 5


def test_eval_identity_fixture(tmp_path):
    # a linear model that copies a one-hot feature vector into the logits
    from dcloss.model import MlpModel, save_checkpoint

    L = 6
    ages = np.arange(1, L + 1)
    feats = np.eye(L)
    datagen.save(tmp_path / "d.csv", datagen.SampleSet(ages, np.zeros(L), ages, feats, L))
    save_checkpoint(tmp_path / "m.json", MlpModel([L, L], [np.eye(L)], [np.zeros(L)]))
    rep = tmp_path / "r.csv"
    assert main(["eval", "--model", str(tmp_path / "m.json"), "--data", str(tmp_path / "d.csv"), "--out", str(rep)]) == 0
    kv = {r["key"]: r["value"] for r in _table(rep)[1]}
    assert float(kv["mae"]) == 0.0 and float(kv["cs"]) == 100.0


def test_missing_and_mismatched_files(data_dir, tmp_path, capsys):
    assert main(["train", "--data", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "m.json")]) == 2
    assert "nope.csv" in capsys.readouterr().err
    from dcloss.model import init_mlp, save_checkpoint

    save_checkpoint(tmp_path / "bad.json", init_mlp([3, 30]))
    rc = main(["eval", "--model", str(tmp_path / "bad.json"), "--data", str(data_dir / "cross.csv"), "--out", str(tmp_path / "r.csv")])
    assert rc == 2


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nsamples = 5\nalpha = 0.2\nmax-shift = 3\n")
    out = tmp_path / "g.csv"
    assert main(["gradcompare", "--config", str(cfg), "--alpha", "0.05", "--out", str(out)]) == 0
    text = out.read_text()
    assert "# samples = 5" in text and "# alpha = 0.05" in text and "# max_shift = 3" in text
    assert len(_table(out)[1]) == 5
    cfg.write_text("bogus = 1\n")
    assert main(["gradcompare", "--config", str(cfg), "--out", str(out)]) == 2
    assert main(["gradcompare", "--config", str(tmp_path / "missing.cfg"), "--out", str(out)]) == 2


def _sweep_args(data_dir, out, *extra):
    return ["sweep-alpha", "--train-data", str(data_dir / "train.csv"), "--test-data",
            str(data_dir / "cross.csv"), "--epochs", "3", "--hidden", "16", "--out", str(out), *extra]


def test_sweep_rows(data_dir, tmp_path):
    out = tmp_path / "s.csv"
    assert main(_sweep_args(data_dir, out, "--alphas", "0.3")) == 0
    header, rows = _table(out)
    assert len(rows) == 1 and header == ["alpha", "mae_mean", "mae_seed0"]
    assert main(_sweep_args(data_dir, out, "--alphas", "0.1,1.2")) == 2


def test_sweep_parallel_matches_sequential(data_dir, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(_sweep_args(data_dir, a, "--alphas", "0.05,0.8", "--seeds", "0,1")) == 0
    assert main(_sweep_args(data_dir, b, "--alphas", "0.05,0.8", "--seeds", "0,1", "--jobs", "2")) == 0
    strip = lambda p: [l for l in p.read_text().splitlines() if not l.startswith("# jobs")]
    assert strip(a) == strip(b)


@pytest.mark.parametrize("command", ["train", "gradcompare", "sweep-alpha"])
def test_rerun_is_byte_identical(command, data_dir, tmp_path):
    a, b = tmp_path / "a.out", tmp_path / "b.out"
    if command == "train":
        make = lambda o: _train_args(data_dir, o, "--loss", "dc", "--seed", "3")
    elif command == "gradcompare":
        make = lambda o: ["gradcompare", "--seed", "3", "--out", str(o)]
    else:
        make = lambda o: _sweep_args(data_dir, o, "--alphas", "0.05,0.5")
    assert main(make(a)) == 0
    assert main(make(b)) == 0
    assert a.read_bytes() == b.read_bytes()
