import json
import shutil

import numpy as np
import pytest

from ratingsde import demo
from ratingsde.cli import main
from ratingsde.rating_data import parse_matrix_series


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Demo history plus its pools and a small bootstrap target set."""
    d = tmp_path_factory.mktemp("pipeline")
    hist = d / "history.csv"
    with demo.demo_history_path().open("rb") as src, open(hist, "wb") as dst:
        shutil.copyfileobj(src, dst)
    assert main(["estimate", str(hist), "--start", "2011-01-01", "--out", str(d / "pools.json")]) == 0
    pools = [str(d / f"pools_{s}m.json") for s in (1, 3, 6, 12)]
    assert main(["bootstrap", *pools, "--n", "200", "--seed", "1", "--out", str(d / "targets.json")]) == 0
    return d


def test_estimate_writes_four_pools(workdir):
    sizes = {}
    for span in (1, 3, 6, 12):
        s = parse_matrix_series(workdir / f"pools_{span}m.json")
        sizes[span] = s.n_samples
        assert np.allclose(s.samples.sum(axis=-1), 1.0, atol=1e-12)
        assert s.times.tolist() == [span / 12]
    assert sizes == {1: 108, 3: 36, 6: 18, 12: 9}


def test_bootstrap_output(workdir):
    s = parse_matrix_series(workdir / "targets.json")
    assert s.n_samples == 200
    assert s.scale.labels == ("A", "B", "C", "D")


def test_missing_file_is_io_error(tmp_path, capsys):
    missing = tmp_path / "nope.csv"
    assert main(["estimate", str(missing)]) == 2
    assert str(missing) in capsys.readouterr().err


def test_span_outside_data_is_usage_error(workdir, capsys):
    code = main(["estimate", str(workdir / "history.csv"), "--start", "2011-01-01", "--spans", "1,240"])
    assert code == 3
    assert "240-month" in capsys.readouterr().err
    assert main(["estimate", str(workdir / "history.csv"), "--start", "2030-01-01"]) == 3


def test_bad_history_is_data_error(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("entity_id,date,rating\ne1,2011-01-01,D\ne1,2011-02-01,A\n")
    assert main(["estimate", str(p)]) == 1


def test_variance_needs_two_model_paths(workdir, capsys):
    code = main(
        ["calibrate", "--family", "gem", "--targets", str(workdir / "targets.json"),
         "--M-model", "1", "--moments", "2", "--weights", "1,10"]
    )
    assert code == 3
    assert "M-model >= 2" in capsys.readouterr().err


@pytest.mark.parametrize(
    "extra",
    [["--family", "ou"], ["--weights", "1,2"], ["--step", "0.3"], ["--times", "12,6"], ["--threads", "0"]],
)
def test_bad_calibrate_arguments(workdir, extra):
    args = ["calibrate", "--family", "cir", "--targets", str(workdir / "targets.json"), *extra]
    assert main(args) == 3


def test_unknown_command():
    assert main(["fly"]) == 3


def calibrate_args(workdir, out, *extra):
    return [
        "calibrate", "--family", "cir", "--targets", str(workdir / "targets.json"),
        "--M-model", "20", "--max-iter", "3", "--seed", "4", "--out", str(out), *extra,
    ]


def test_calibrate_is_byte_identical(workdir, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(calibrate_args(workdir, a)) == 0
    assert main(calibrate_args(workdir, b, "--threads", "3")) == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.with_suffix(".txt").read_text().splitlines()[1].strip().startswith("A-B")
    doc = json.loads(a.read_text())
    assert doc["seed"] == 4 and doc["M_model"] == 20 and doc["labels"] == ["A", "B", "C", "D"]


def test_calibrate_from_moment_file(workdir, tmp_path):
    pools = [str(workdir / f"pools_{s}m.json") for s in (1, 3, 6, 12)]
    mom = tmp_path / "moments.json"
    assert main(["bootstrap", *pools, "--n", "200", "--seed", "1", "--out", str(tmp_path / "t.json"),
                 "--moments-out", str(mom)]) == 0
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(calibrate_args(workdir, a)) == 0
    args = calibrate_args(workdir, b)
    args[args.index("--targets") + 1] = str(mom)
    assert main(args) == 0
    ja, jb = json.loads(a.read_text()), json.loads(b.read_text())
    assert ja["objective"] == jb["objective"]


def test_config_file_and_flag_precedence(workdir, tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text('seed = 4\n[calibrate]\nfamily = "cir"\ncolour = "red"\n')
    out_cfg, out_flag = tmp_path / "c.json", tmp_path / "f.json"
    assert main(["calibrate", "--config", str(cfg), "--targets", str(workdir / "targets.json"),
                 "--out", str(out_cfg)]) == 3  # unknown key
    cfg.write_text('seed = 4\n[calibrate]\nfamily = "cir"\nM-model = 20\nmax_iter = 3\n'
                   'weights = [1, 10, 1, 1]\ntimes = [12]\n')
    assert main(["calibrate", "--config", str(cfg), "--targets", str(workdir / "targets.json"),
                 "--out", str(out_cfg)]) == 0
    assert main(calibrate_args(workdir, out_flag)) == 0
    assert out_cfg.read_bytes() == out_flag.read_bytes()
    other = tmp_path / "o.json"
    assert main(["calibrate", "--config", str(cfg), "--seed", "5", "--targets",
                 str(workdir / "targets.json"), "--out", str(other)]) == 0
    assert json.loads(other.read_text())["seed"] == 5


def test_simulate_validate_report(workdir, tmp_path):
    result = tmp_path / "r.json"
    assert main(calibrate_args(workdir, result)) == 0
    sim = tmp_path / "sim"
    assert main(["simulate", "--params", str(result), "--paths", "40", "--seed", "2",
                 "--max-paths", "5", "--out-dir", str(sim)]) == 0
    ens = parse_matrix_series(sim / "ensemble.json")
    assert ens.samples.shape == (40, 4, 4, 4)
    assert (sim / "trajectories" / "A-D.csv").exists()
    assert (sim / "histograms.csv").read_text().startswith("months,entry,bin_lo,bin_hi,count,beta_alpha,beta_beta")

    rep = tmp_path / "props.csv"
    assert main(["validate", str(sim / "ensemble.json"), "--out", str(rep)]) == 0
    assert rep.read_text().splitlines()[0] == "months,sDD,dML,mDC,iRS,avg_row_sum"
    assert rep.with_suffix(".txt").exists()

    out1, out2 = tmp_path / "rep1", tmp_path / "rep2"
    for out in (out1, out2):
        assert main(["report", "--result", str(result), "--paths", "40", "--seed", "2",
                     "--targets", str(workdir / "targets.json"), "--out-dir", str(out)]) == 0
    names = sorted(p.relative_to(out1).as_posix() for p in out1.rglob("*") if p.is_file())
    assert "properties_targets.csv" in names and "parameters.txt" in names
    for name in names:
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
    assert (out1 / "ensemble.json").read_bytes() == (sim / "ensemble.json").read_bytes()
