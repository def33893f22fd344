import json
import math
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import norm

from gedlab.harness import (
    CSV_COLUMNS,
    SCHEMA,
    WILSON_Z,
    ConfigError,
    RunConfig,
    build_setup,
    emit_plots,
    lemma_report_from_csv,
    ls_coverage,
    mle_coverage,
    rng_streams,
    run_one,
    run_sweep,
    wilson_interval,
)

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "acceptance_bandit.json"


def _cfg(**over) -> RunConfig:
    d = json.loads(CONFIG.read_text())
    d.update(over)
    return RunConfig.from_dict(d)


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------


def test_config_roundtrip_and_hash_ignores_seed():
    cfg = _cfg()
    again = RunConfig.from_json(json.dumps(cfg.to_dict()))
    assert again == cfg
    assert _cfg(seed=7).hash() == cfg.hash()
    assert _cfg(T=100).hash() != cfg.hash()


def test_unknown_field_is_named():
    d = _cfg().to_dict()
    d["horizon"] = 10
    with pytest.raises(ConfigError) as e:
        RunConfig.from_dict(d)
    assert e.value.field == "horizon"


def test_bad_json_reports_position():
    with pytest.raises(ConfigError, match="line 2, column"):
        RunConfig.from_json('{\n  "T": ,\n}')
    with pytest.raises(ConfigError):
        RunConfig.from_json("[1, 2]")


@pytest.mark.parametrize("over,name", [
    ({"oracle": "em"}, "oracle"),
    ({"divergence": "kl"}, "divergence"),
    ({"delta": 1.0}, "delta"),
    ({"m": 0}, "m"),
    ({"replications": 0}, "replications"),
    ({"beta_mode": "other"}, "beta_mode"),
    ({"oracle": "ls", "beta_mode": "finite"}, "beta_mode"),
    ({"lemma_eps": 0.0}, "lemma_eps"),
    ({"env": {}}, "env"),
])
def test_validation_names_the_field(over, name):
    with pytest.raises(ConfigError) as e:
        _cfg(**over)
    assert e.value.field == name


def test_horizon_shorter_than_warmup_is_rejected():
    with pytest.raises(ConfigError) as e:
        build_setup(_cfg(T=2))
    assert e.value.field == "T"


# ---------------------------------------------------------------------------
# single runs
# ---------------------------------------------------------------------------


def test_warmup_only_run():
    s = run_one(_cfg(T=3), seed=0)
    assert s.T == s.K == 3
    rows = [ln for ln in s.csv_text.splitlines() if not ln.startswith("#")][1:]
    assert [int(r.split(",")[2]) for r in rows] == [0, 1, 2]
    assert s.violations_post_warmup == 0
    assert s.margins["potential"]["rhs"] == pytest.approx(3.0)


def test_replay_is_byte_identical(tmp_path):
    a = run_one(_cfg(T=40), seed=3, out_dir=tmp_path / "a")
    b = run_one(_cfg(T=40), seed=3, out_dir=tmp_path / "b")
    for name in ("run_3.csv", "run_3.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert a.csv_text == b.csv_text
    assert run_one(_cfg(T=40), seed=4).csv_text != a.csv_text


def test_csv_header_and_columns():
    cfg = _cfg(T=30)
    s = run_one(cfg, seed=1)
    lines = s.csv_text.splitlines()
    assert lines[0] == f"# {SCHEMA}"
    meta = dict(ln[2:].split("=", 1) for ln in lines[1:9])
    assert meta["config_hash"] == cfg.hash() and meta["seed"] == "1" and meta["K"] == "3"
    assert lines[9] == ",".join(CSV_COLUMNS)
    body = [ln.split(",") for ln in lines[10:]]
    assert len(body) == 30 and all(len(r) == len(CSV_COLUMNS) for r in body)
    assert [int(r[0]) for r in body] == list(range(1, 31))
    cum = np.array([float(r[6]) for r in body])
    np.testing.assert_array_equal(cum, s.cum_regret)
    np.testing.assert_allclose(np.cumsum([float(r[5]) for r in body]), cum, atol=1e-12)


def test_lemma_report_from_csv_matches_run():
    s = run_one(_cfg(T=60), seed=2)
    rep = lemma_report_from_csv(s.csv_text)
    for name, m in s.margins.items():
        assert rep[name]["lhs"] == pytest.approx(m["lhs"], rel=1e-12)
        assert rep[name]["rhs"] == pytest.approx(m["rhs"], rel=1e-12)
    with pytest.raises(ValueError):
        lemma_report_from_csv(s.csv_text.replace(SCHEMA, "other v9"))


def test_reference_seed_regression():
    # frozen from the reference run of the shipped config
    s = run_one(_cfg(), seed=0, check_optimism=True)
    assert s.violations_post_warmup == 0
    assert s.optimism_failures == 0
    assert s.lemmas_ok


def test_rng_streams_are_deterministic_and_distinct():
    a, b = rng_streams(11), rng_streams(11)
    draws = {k: a[k].random(4).tolist() for k in a}
    assert draws == {k: b[k].random(4).tolist() for k in b}
    assert len({tuple(v) for v in draws.values()}) == 3


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


def test_wilson_interval_known_values():
    assert WILSON_Z == pytest.approx(norm.ppf(0.975), abs=1e-12)
    lo, hi = wilson_interval(0, 200)
    assert lo == pytest.approx(0.0, abs=1e-15) and hi == pytest.approx(WILSON_Z**2 / (200 + WILSON_Z**2))
    lo, hi = wilson_interval(10, 100)
    assert (lo, hi) == pytest.approx((0.05523, 0.17437), abs=5e-5)
    with pytest.raises(ValueError):
        wilson_interval(0, 0)


def test_single_seed_sweep_matches_run(tmp_path):
    cfg = _cfg(T=40)
    rep = run_sweep(cfg, [5], out_dir=tmp_path)
    s = run_one(cfg, seed=5)
    np.testing.assert_array_equal(rep.summaries[0].cum_regret, s.cum_regret)
    assert set(rep.checkpoints) == {"10", "20", "40"}
    assert rep.checkpoints["40"]["mean"] == pytest.approx(s.cum_regret[-1])
    assert rep.checkpoints["40"]["stderr"] == 0.0
    assert json.loads((tmp_path / "sweep.json").read_text())["n_runs"] == 1
    assert (tmp_path / "run_5.json").read_text() == s.to_json()


def test_parallel_sweep_matches_sequential():
    cfg = _cfg(T=30)
    a = run_sweep(cfg, [0, 1], threads=1)
    b = run_sweep(cfg, [0, 1], threads=2)
    assert a.to_json() == b.to_json()


def test_empty_sweep_is_rejected():
    with pytest.raises(ValueError):
        run_sweep(_cfg(T=30), [])


# ---------------------------------------------------------------------------
# plots
# ---------------------------------------------------------------------------


def test_emit_plots_empty_list(tmp_path):
    m = emit_plots([], tmp_path)
    assert m["runs"] == [] and m["figures"] == []
    assert json.loads((tmp_path / "manifest.json").read_text()) == m


def test_emit_plots_two_runs_is_deterministic(tmp_path):
    cfg = _cfg(T=20)
    for seed in (0, 1):
        run_one(cfg, seed=seed, out_dir=tmp_path / "runs")
    files = [tmp_path / "runs" / f"run_{s}.json" for s in (0, 1)]
    m = emit_plots(files, tmp_path / "p1")
    emit_plots(files, tmp_path / "p2")
    assert len(m["figures"]) == 1 and len(m["figures"][0]["series"]) == 2
    for name in ("manifest.json", "regret_curves.csv", "plot_regret.py"):
        assert (tmp_path / "p1" / name).read_bytes() == (tmp_path / "p2" / name).read_bytes()
    rows = (tmp_path / "p1" / "regret_curves.csv").read_text().splitlines()
    assert len(rows) == 1 + 2 * 20


def test_emit_plots_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        emit_plots([tmp_path / "nope.json"], tmp_path)


# ---------------------------------------------------------------------------
# coverage experiments
# ---------------------------------------------------------------------------


def test_coverage_reports_are_seeded():
    a, b = mle_coverage(trials=20, seed=3), mle_coverage(trials=20, seed=3)
    assert a == b and a.kind == "mle" and 0 <= a.covered <= 20
    assert a.budget == pytest.approx(math.log(8 / 0.1))
    c = ls_coverage(trials=20, seed=3)
    assert c.kind == "ls" and c.worst >= 0
