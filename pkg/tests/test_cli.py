import subprocess
import sys

import numpy as np
import pytest

from aem import cli
from aem.data import load_csv, read_pgm

CONFIG = """\
dim = 2
resmade_hidden_dim = 6
resmade_blocks = 1
context_dim = 3
enn_hidden_dim = 5
enn_blocks = 1
mixture_comps = 2
batch_size = 16
total_steps = 6
warm_up_steps = 2
n_importance_samples = 4
val_interval = 3
val_rows = 20
"""


@pytest.fixture
def trained(tmp_path):
    assert cli.main(["gen-data", "--kind", "spirals", "--n", "300", "--seed", "1",
                     "--out", str(tmp_path / "train.csv")]) == 0
    (tmp_path / "cfg.txt").write_text(CONFIG)
    assert cli.main(["train", "--data", str(tmp_path / "train.csv"), "--config",
                     str(tmp_path / "cfg.txt"), "--out", str(tmp_path / "m.ckpt")]) == 0
    return tmp_path


def test_gen_data(tmp_path):
    out = tmp_path / "d.csv"
    assert cli.main(["gen-data", "--kind", "checkerboard", "--n", "50", "--seed", "2", "--out", str(out)]) == 0
    assert load_csv(out).shape == (50, 2)


def test_train_writes_checkpoint_and_log(trained):
    assert (trained / "m.ckpt").exists()
    assert (trained / "m.log.csv").read_text().startswith("step,lr,train_loss")


def test_train_is_deterministic(trained):
    assert cli.main(["train", "--data", str(trained / "train.csv"), "--config", str(trained / "cfg.txt"),
                     "--out", str(trained / "again.ckpt")]) == 0
    assert (trained / "m.ckpt").read_bytes() == (trained / "again.ckpt").read_bytes()


def test_eval_prints_two_standard_errors(trained, capsys):
    assert cli.main(["eval", "--ckpt", str(trained / "m.ckpt"), "--data", str(trained / "train.csv"),
                     "--samples", "50", "--rows", "40"]) == 0
    out = capsys.readouterr().out
    assert "AEM log likelihood" in out and "+/-" in out and "proposal" in out


def test_eval_kde(trained, capsys):
    assert cli.main(["eval", "--ckpt", str(trained / "m.ckpt"), "--data", str(trained / "train.csv"),
                     "--samples", "40", "--rows", "10", "--kde", "--val", str(trained / "train.csv"),
                     "--val-rows", "10"]) == 0
    assert "KDE log likelihood" in capsys.readouterr().out


def test_sample(trained):
    out = trained / "s.csv"
    assert cli.main(["sample", "--ckpt", str(trained / "m.ckpt"), "--n", "30", "--pool", "10",
                     "--seed", "3", "--out", str(out)]) == 0
    assert load_csv(out).shape == (30, 2)


def test_calibrate(trained):
    out = trained / "cal.csv"
    assert cli.main(["calibrate", "--ckpt", str(trained / "m.ckpt"), "--data", str(trained / "train.csv"),
                     "--s-grid", "5,50", "--conditionals", "8", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("S,p5,median,p95") and len(lines) == 3


def test_grid(trained):
    out = trained / "grid.csv"
    assert cli.main(["grid", "--ckpt", str(trained / "m.ckpt"), "--data", str(trained / "train.csv"),
                     "--res", "6", "--samples", "20", "--out", str(out)]) == 0
    g = load_csv(out, has_header=True)
    assert g.shape == (36, 3)
    img = read_pgm(trained / "grid.pgm")
    assert img.shape == (6, 6) and img.max() == 255


def test_is_demo(tmp_path, capsys):
    out = tmp_path / "is.csv"
    assert cli.main(["is-demo", "--dims", "1,4", "--trials", "5", "--out", str(out)]) == 0
    rows = load_csv(out, has_header=True)
    assert rows.shape == (10, 3)
    assert "D=4" in capsys.readouterr().out


def test_render_density_orientation():
    log_p = np.array([[0.0, np.log(0.5)], [np.log(0.25), -np.inf]])
    img = cli.render_density(log_p)
    # top image row is the largest x2, i.e. the last grid row
    np.testing.assert_array_equal(img, [[64, 0], [255, 128]])


def test_missing_file_is_error(tmp_path, capsys):
    assert cli.main(["eval", "--ckpt", str(tmp_path / "nope.ckpt"), "--data", "x.csv"]) == 1
    assert "error" in capsys.readouterr().err


def test_dimension_mismatch_is_error(trained, capsys):
    (trained / "cfg3.txt").write_text(CONFIG.replace("dim = 2", "dim = 3"))
    assert cli.main(["train", "--data", str(trained / "train.csv"), "--config", str(trained / "cfg3.txt"),
                     "--out", str(trained / "x.ckpt")]) == 1
    assert "dimension" in capsys.readouterr().err


def test_version_mismatch_refused(trained, capsys):
    path = trained / "m.ckpt"
    path.write_bytes(path.read_bytes().replace(b"format_version = 1", b"format_version = 2", 1))
    assert cli.main(["sample", "--ckpt", str(path), "--n", "2", "--out", str(trained / "s.csv")]) == 1
    assert "version" in capsys.readouterr().err


def test_unknown_flag_exits_nonzero():
    proc = subprocess.run([sys.executable, "-m", "aem.cli", "gen-data", "--bogus"],
                          capture_output=True, text=True)
    assert proc.returncode != 0
    assert "unrecognized arguments" in proc.stderr or "required" in proc.stderr
