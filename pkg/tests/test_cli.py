import json
from pathlib import Path

from gedlab.cli import EXIT_GATE, EXIT_OK, EXIT_USAGE, main
from gedlab.harness import default_config_dict

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "acceptance_bandit.json"


def _short_config(tmp_path, T=20) -> Path:
    d = json.loads(CONFIG.read_text())
    d["T"] = T
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(d))
    return p


def test_print_config(capsys):
    assert main(["--print-config"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out) == default_config_dict()


def test_usage_errors(tmp_path, capsys):
    assert main([]) == EXIT_USAGE
    assert main(["bogus"]) == EXIT_USAGE
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == EXIT_USAGE
    bad = tmp_path / "bad.json"
    bad.write_text('{"T": }')
    assert main(["run", "--config", str(bad)]) == EXIT_USAGE
    assert "line 1" in capsys.readouterr().err


def test_run_writes_outputs(tmp_path):
    cfg = _short_config(tmp_path)
    assert main(["run", "--config", str(cfg), "--seed", "4", "--out", str(tmp_path / "o")]) == EXIT_OK
    assert (tmp_path / "o" / "run_4.csv").exists() and (tmp_path / "o" / "run_4.json").exists()


def test_run_to_stdout(tmp_path, capsys):
    assert main(["run", "--config", str(_short_config(tmp_path))]) == EXIT_OK
    assert capsys.readouterr().out.startswith("# gedlab-trajectory v1")


def test_sweep(tmp_path, capsys):
    cfg = _short_config(tmp_path)
    assert main(["sweep", "--config", str(cfg), "--seeds", "2", "--out", str(tmp_path / "s")]) == EXIT_OK
    assert "runs=2" in capsys.readouterr().out
    assert main(["sweep", "--config", str(cfg), "--seeds", "0", "--out", str(tmp_path / "s")]) == EXIT_USAGE


def test_lemmas_pass_and_fail(tmp_path, capsys):
    cfg = _short_config(tmp_path, T=40)
    main(["run", "--config", str(cfg), "--seed", "0", "--out", str(tmp_path)])
    traj = tmp_path / "run_0.csv"
    assert main(["lemmas", "--trajectory", str(traj)]) == EXIT_OK
    assert capsys.readouterr().out.count("ok") == 3
    # a trajectory whose amplitudes are inflated past the cap breaks the lemma bounds
    lines = traj.read_text().splitlines()
    head, rows = lines[:10], lines[10:]
    rows = [",".join(r.split(",")[:-1] + ["1000"]) for r in rows]
    traj.write_text("\n".join(head + rows) + "\n")
    assert main(["lemmas", "--trajectory", str(traj)]) == EXIT_GATE
    assert "FAILED" in capsys.readouterr().out


def test_eluder(tmp_path, capsys):
    cls = tmp_path / "cls.json"
    cls.write_text(json.dumps({"type": "bernoulli", "means": [[[0.2, 0.8]], [[0.8, 0.2]], [[0.5, 0.5]]]}))
    pool = tmp_path / "pool.json"
    pool.write_text(json.dumps([[0, 0], [0, 1]]))
    assert main(["eluder", "--class", str(cls), "--eps", "0.1", "--pool", str(pool)]) == EXIT_OK
    assert capsys.readouterr().out
    assert main(["eluder", "--class", str(cls), "--eps", "-1", "--pool", str(pool)]) == EXIT_USAGE


def test_oracle_check(capsys):
    assert main(["oracle-check", "--kind", "mle", "--trials", "40"]) == EXIT_OK
    assert "kind=mle" in capsys.readouterr().out
    assert main(["oracle-check", "--kind", "ls", "--trials", "40"]) == EXIT_OK
    assert main(["oracle-check", "--kind", "mle", "--trials", "0"]) == EXIT_USAGE
