import json
import re
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import pytest

from statenet import cli, export

CONFIGS = sorted(p.name for p in resources.files("statenet").joinpath("configs").iterdir() if p.name.endswith(".json"))


def config_path(name):
    return str(resources.files("statenet").joinpath("configs", name))


def write_config(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def small_hk(**extra):
    cfg = {"schema_version": 1, "preset": {"name": "homogeneous_hk", "params": {"eps": 10.0}}, "n": 12,
           "init": {"kind": "uniform", "low": 0, "high": 100, "seed": 4}}
    cfg.update(extra)
    return cfg


def test_csv_roundtrip_is_exact(tmp_path):
    states = np.random.default_rng(0).normal(size=(5, 3)) * 1e3
    export.write_trajectory_csv(tmp_path / "t.csv", states)
    iters, back = export.read_trajectory_csv(tmp_path / "t.csv")
    np.testing.assert_array_equal(back, states)
    assert iters.tolist() == list(range(5))


def test_lyapunov_csv_layout(tmp_path):
    export.write_lyapunov_csv(tmp_path / "v.csv", [3.0, 2.0, 1.5], [1.0, 0.5], [0.2, 0.6], [True, False])
    lines = (tmp_path / "v.csv").read_text().splitlines()
    assert lines[0] == "iter,V,drift,bound,ok"
    assert lines[1] == "0,3,,,"
    assert lines[2] == "1,2,1,0.20000000000000001,1"
    assert lines[3].endswith(",0")


@pytest.mark.parametrize("text", ["", "step,x_0\n0,1\n", "iter,x_0\n", "iter,x_0,x_1\n0,1\n", "iter,x_0\n0,abc\n"])
def test_malformed_trajectory_csv(tmp_path, text):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(export.MalformedCSV):
        export.read_trajectory_csv(path)


def test_svg_structure():
    states = np.random.default_rng(0).uniform(size=(4, 7))
    svg = export.render_svg(range(4), states, range(4), [3, 2, 1, 0])
    assert svg.count("<polyline") == 8
    single = export.render_svg(range(3), np.full((3, 1), 2.0))
    pts = re.search(r'points="([^"]+)"', single).group(1).split()
    assert single.count("<polyline") == 1
    assert len({p.split(",")[1] for p in pts}) == 1
    empty = export.render_svg([0], np.ones((1, 5)))
    assert "<polyline" not in empty and empty.count("<circle") == 5


def test_run_writes_valid_outputs(tmp_path):
    out = tmp_path / "out"
    assert cli.main(["run", "--config", write_config(tmp_path, small_hk()), "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    schema = json.loads(resources.files("statenet").joinpath("schemas", "summary.schema.json").read_text())
    jsonschema.validate(summary, schema)
    iters, states = export.read_trajectory_csv(out / "trajectory.csv")
    assert states.shape == (summary["iterations"] + 1, 12)
    rows = (out / "trajectory.csv").read_text().splitlines()
    assert all(len(r.split(",")) == 13 for r in rows)
    assert summary["clusters"]["separated_by_eps"] is True
    assert (out / "plot.svg").read_text().count("<polyline") == 13


def test_zero_iterations_single_row(tmp_path):
    out = tmp_path / "k0"
    assert cli.main(["run", "--config", write_config(tmp_path, small_hk(max_iter=0)), "--out", str(out)]) == 0
    assert len((out / "trajectory.csv").read_text().splitlines()) == 2
    assert "<polyline" not in (out / "plot.svg").read_text()


def test_seed_override_changes_initial_state(tmp_path):
    cfg = write_config(tmp_path, small_hk())
    cli.main(["run", "--config", cfg, "--out", str(tmp_path / "a")])
    cli.main(["run", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "99"])
    a = (tmp_path / "a" / "trajectory.csv").read_text()
    b = (tmp_path / "b" / "trajectory.csv").read_text()
    assert a != b
    assert json.loads((tmp_path / "b" / "summary.json").read_text())["seed"] == 99


def test_exit_codes(tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert cli.main(["run", "--config", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert cli.main(["run", "--config", str(bad)]) == 2
    typo = small_hk()
    typo["epsilon"] = 3
    assert cli.main(["run", "--config", write_config(tmp_path, typo)]) == 3
    err = capsys.readouterr().err
    assert "epsilon" in err
    wrong = small_hk()
    wrong["preset"]["params"] = {"eps": -1.0}
    assert cli.main(["run", "--config", write_config(tmp_path, wrong)]) == 3
    assert not (tmp_path / "statenet_out").exists()
    assert cli.main(["run", "--config", write_config(tmp_path, small_hk()), "--seed", str(2**64)]) == 3
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert cli.main(["run", "--config", write_config(tmp_path, small_hk()), "--out", str(blocker / "x")]) == 5


def test_plot_command(tmp_path):
    out = tmp_path / "run"
    cli.main(["run", "--config", write_config(tmp_path, small_hk()), "--out", str(out)])
    target = tmp_path / "fig.svg"
    assert cli.main(["plot", "--trajectory", str(out / "trajectory.csv"), "--out", str(target)]) == 0
    assert target.read_text() == (out / "plot.svg").read_text().replace("homogeneous_hk", "state trajectories")
    bad = tmp_path / "bad.csv"
    bad.write_text("iter,x_0\n0,1,2\n")
    assert cli.main(["plot", "--trajectory", str(bad), "--out", str(tmp_path / "bad.svg")]) == 4


def test_verify_passes_and_fails(tmp_path, capsys):
    assert cli.main(["verify", "--config", config_path("lazy_hk.json")]) == 0
    assert cli.main(["verify", "--config", config_path("heterogeneous_hk.json")]) == 0
    text = capsys.readouterr().out
    assert "observational" in text
    wrong = {"schema_version": 1,
             "preset": {"name": "lazy_hk", "params": {"eps": 10.0, "m": 1.0, "cost_weight": 3.0, "cost_center": 50.0}},
             "n": 10, "init": {"kind": "uniform", "low": 0, "high": 100, "seed": 1}}
    assert cli.main(["verify", "--config", write_config(tmp_path, wrong)]) == 1
    assert "smoothness audit     FAIL" in capsys.readouterr().out


def test_sweep_respects_thread_cap(tmp_path, monkeypatch):
    cfg = small_hk(sweep={"param": "eps", "values": [5.0, 20.0], "seeds": [1, 2]})
    monkeypatch.setenv("STATENET_THREADS", "2")
    out = tmp_path / "sw"
    assert cli.main(["sweep", "--config", write_config(tmp_path, cfg), "--out", str(out)]) == 0
    index = json.loads((out / "sweep.json").read_text())
    assert len(index["runs"]) == 4
    assert all((out / r["dir"] / "trajectory.csv").exists() for r in index["runs"])
    monkeypatch.setenv("STATENET_THREADS", "1")
    serial = tmp_path / "serial"
    cli.main(["sweep", "--config", write_config(tmp_path, cfg), "--out", str(serial)])
    for r in index["runs"]:
        assert (out / r["dir"] / "trajectory.csv").read_bytes() == (serial / r["dir"] / "trajectory.csv").read_bytes()
    monkeypatch.setenv("STATENET_THREADS", "zero")
    assert cli.main(["sweep", "--config", write_config(tmp_path, cfg), "--out", str(out)]) == 3
    assert cli.main(["sweep", "--config", write_config(tmp_path, small_hk()), "--out", str(out)]) == 3


def test_continuous_run(tmp_path):
    out = tmp_path / "flow"
    assert cli.main(["run", "--config", config_path("two_agent_flow.json"), "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["mode"] == "continuous"
    assert summary["violations"]["total"] == 0
    assert 0.0 <= summary["lambda_range"][0] and summary["lambda_range"][1] <= 1.0
    assert (out / "edges.csv").read_text().startswith("iter,lam_0_1,lam_1_0")


@pytest.mark.parametrize("name", CONFIGS)
def test_shipped_configs_validate(name):
    cfg = cli.load_config(config_path(name))
    assert cfg["schema_version"] == 1


def test_shipped_complement_config_reproduces_experiment_setup():
    cfg = cli.load_config(config_path("hk_complement.json"))
    assert cfg["n"] == 1000 and cfg["max_iter"] == 120
    assert cfg["preset"]["params"]["eps"] == 20.0
    assert (cfg["init"]["low"], cfg["init"]["high"]) == (0.0, 100.0)
    preset, spec, x0, seed = cli.setup(cfg)
    assert spec.family.value == "quasi_newton" and spec.schedule.kind.value == "unit"


def test_module_entry_point_exists():
    assert Path(cli.__file__).exists()
    assert cli.build_parser().parse_args(["run", "--config", "x"]).command == "run"
