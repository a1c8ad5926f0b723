import json
import statistics

import pytest

from dgpn import cli
from dgpn.harness import (
    ConfigError,
    ExperimentConfig,
    MetricsReport,
    check_expectations,
    run,
    run_ablation,
    run_decompose_check,
    run_grid,
    run_znc,
    summarize,
    write_report,
)
from dgpn.model import load_checkpoint

FAST = {"epochs": 60}


def _cfg(**kw):
    doc = {"train": dict(FAST)}
    doc.update(kw)
    return ExperimentConfig.from_dict(doc)


def test_summarize():
    assert summarize([]) == (None, None, False)
    assert summarize([70.0]) == (70.0, 0.0, True)
    mean, std, single = summarize([1.0, 2.0, 4.0])
    assert mean == statistics.fmean([1.0, 2.0, 4.0]) and std == statistics.stdev([1.0, 2.0, 4.0])
    assert not single


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"task": "nope"})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"train": {"learning_rate": 1}})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"seeds": [1, 2], "repeats": 3})
    assert ExperimentConfig.from_dict({"seeds": [5, 9]}).repeats == 2
    assert ExperimentConfig.from_dict({}).resolved_seeds() == list(range(10))


def test_znc_report_three_seeds():
    report = run_znc(_cfg(seeds=[0, 1, 2]))
    accs = [r["accuracy"] for r in report.per_seed]
    assert len(accs) == 3 and all(r["status"] == "ok" for r in report.per_seed)
    assert report.mean == statistics.fmean(accs) and report.std == statistics.stdev(accs)
    echo = report.config
    assert echo["seeds"] == [0, 1, 2] and echo["train"]["epochs"] == 60 and echo["toy"]["d"] == 16
    assert any("10 seeds" in a for a in report.assumptions)
    assert report.extra["split"]["test_nodes"] == 20


def test_single_seed_flag():
    report = run_znc(_cfg(seeds=[3]))
    assert report.std == 0.0 and report.single_sample
    assert "(single sample)" in report.to_text()


def test_embedded_config_reproduces_run():
    first = run_znc(_cfg(seeds=[0, 1], train={"epochs": 40, "dropout": 0.2}))
    again = run(ExperimentConfig.from_dict(first.config))
    assert again.to_json() == first.to_json()


def test_failed_seed_is_recorded_not_fatal(monkeypatch):
    import dgpn.harness as h
    real = h.train

    def flaky(dataset, split, csd, config, stack=None):
        if config.seed == 1:
            raise FloatingPointError("boom")
        return real(dataset, split, csd, config, stack=stack)

    monkeypatch.setattr(h, "train", flaky)
    report = run_znc(_cfg(seeds=[0, 1, 2]))
    assert [r["status"] for r in report.per_seed] == ["ok", "aborted", "ok"]
    assert "boom" in report.per_seed[1]["error"]
    ok = [report.per_seed[0]["accuracy"], report.per_seed[2]["accuracy"]]
    assert report.mean == statistics.fmean(ok)


def test_ablation_has_three_blocks():
    report = run_ablation(_cfg(seeds=[0, 1]))
    variants = report.extra["variants"]
    assert list(variants) == ["ProNet", "ProNetGCN", "Full"]
    for block in variants.values():
        assert [r["seed"] for r in block["per_seed"]] == [0, 1]
    assert report.mean == variants["Full"]["mean"]


def test_grid_selects_by_validation():
    cfg = _cfg(toy={"split": [2, 2, 2]}, grid={"K": [1, 2, 3]}, seeds=[0, 1])
    report = run_grid(cfg)
    cells = report.extra["grid"]
    assert [c["params"]["K"] for c in cells] == [1, 2, 3]
    best = max(c["val_mean"] for c in cells)
    first_best = next(c for c in cells if c["val_mean"] == best)
    assert report.extra["selected"] == first_best["params"]
    assert all("test_mean" not in c for c in cells)
    assert report.extra["grid_csv"].splitlines()[0] == "K,val_mean"


def test_singleton_grid():
    report = run_grid(_cfg(toy={"split": [2, 2, 2]}, grid={"beta": [0.5]}, seeds=[0]))
    assert report.extra["selected"] == {"beta": 0.5}


def test_grid_needs_validation_unless_sweeping_test():
    with pytest.raises(ConfigError):
        run_grid(_cfg(grid={"K": [1, 2]}, seeds=[0]))
    with pytest.raises(ConfigError):
        run_grid(_cfg(toy={"split": [2, 2, 2]}, seeds=[0]))
    report = run_grid(_cfg(grid={"K": [1, 2], "beta": [0.5, 0.7]}, select_on="test", seeds=[0]))
    rows = report.extra["grid_csv"].splitlines()
    assert rows[0] == "K,beta,test_mean" and len(rows) == 5
    assert any("sensitivity" in w for w in report.warnings)


def test_decompose_check_report():
    report = run_decompose_check(ExperimentConfig.from_dict(
        {"task": "decompose-check", "decompose": {"trials": 15}}))
    checks = report.extra["checks"]
    for name in ("vanilla_norm", "vanilla_lazy", "trick_lazy", "trick"):
        assert checks[name]["pass"] and checks[name]["max_abs_deviation"] <= 1e-10
    star = checks["trick_irregular_star"]
    assert star["informational"] and star["pass"] is None and star["max_abs_deviation"] > 0
    assert report.extra["all_pass"] and check_expectations(report, {}) == []


def test_expectations():
    report = MetricsReport("znc", {}, mean=50.0)
    assert check_expectations(report, {"min_mean_accuracy": 40}) == []
    assert check_expectations(report, {"min_mean_accuracy": 60})
    assert check_expectations(report, {"max_mean_accuracy": 40})


def test_write_report_files(tmp_path):
    report = run_znc(_cfg(seeds=[0]))
    write_report(report, str(tmp_path / "out" / "r"))
    doc = json.loads((tmp_path / "out" / "r.json").read_text())
    assert doc["per_seed"][0]["seed"] == 0 and "wall_time_s" not in doc
    assert "wall_time_s" in json.loads((tmp_path / "out" / "r.timing.json").read_text())
    assert (tmp_path / "out" / "r.txt").read_text().startswith("task: znc")


def test_standard_on_toy():
    report = run(_cfg(task="standard", seeds=[0], toy={"nodes_per_class": 30}))
    assert report.per_seed[0]["status"] == "ok"
    assert report.config["train"]["variant"] == "trick"
    assert "toy dataset: generated standard split" in report.warnings


def test_real_dataset_without_data_root(monkeypatch):
    monkeypatch.delenv("DGPN_DATA_ROOT", raising=False)
    from dgpn.data import DataError
    with pytest.raises(DataError):
        run(_cfg(dataset="cora", seeds=[0]))
    with pytest.raises(ConfigError):
        run(_cfg(dataset="imaginary", seeds=[0]))


# --- CLI ----------------------------------------------------------------------


def _write_config(tmp_path, doc):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc))
    return str(path)


def test_cli_znc_and_determinism(tmp_path):
    cfg = _write_config(tmp_path, {"train": FAST})
    args = ["znc", "--config", cfg, "--seed", "0", "--seed", "1", "-q"]
    assert cli.main(args + ["--out", str(tmp_path / "a")]) == 0
    assert cli.main(args + ["--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    doc = json.loads((tmp_path / "a.json").read_text())
    assert doc["config"]["seeds"] == [0, 1]


def test_cli_checkpoints(tmp_path):
    cfg = _write_config(tmp_path, {"train": FAST})
    assert cli.main(["znc", "--config", cfg, "--seed", "4", "-q", "--checkpoint-dir", str(tmp_path / "ck")]) == 0
    params, tcfg = load_checkpoint(tmp_path / "ck" / "seed4.npz")
    assert tcfg.seed == 4 and params.psi_w.shape[0] == 16


def test_cli_exit_codes(tmp_path, capsys):
    assert cli.main(["znc", "--config", str(tmp_path / "missing.json")]) == 1
    assert cli.main(["znc", "--config", _write_config(tmp_path, {"unknown": 1})]) == 1
    assert cli.main(["znc", "--dataset", "cora", "--data-root", str(tmp_path), "-q"]) == 2
    cfg = _write_config(tmp_path, {"train": FAST, "expect": {"min_mean_accuracy": 101}})
    assert cli.main(["znc", "--config", cfg, "--seed", "0", "-q"]) == 0
    assert cli.main(["znc", "--config", cfg, "--seed", "0", "-q", "--assert"]) == 3
    assert "assertion failed" in capsys.readouterr().err


def test_cli_aborted_seed_exit_code(tmp_path, monkeypatch):
    import dgpn.harness as h

    def broken(*a, **k):
        raise FloatingPointError("diverged")

    monkeypatch.setattr(h, "train", broken)
    assert cli.main(["znc", "--config", _write_config(tmp_path, {"train": FAST}), "--seed", "0", "-q"]) == 2


def test_cli_csd_eval_on_toy(tmp_path):
    assert cli.main(["csd-eval", "--out", str(tmp_path / "c"), "-q"]) == 0
    doc = json.loads((tmp_path / "c.json").read_text())
    row = doc["extra"]["csd_quality"]
    assert set(row) == {"dataset", "csd_type", "kl", "cosine", "euclidean"}
    assert row["kl"] >= 0 and 0 <= row["cosine"] <= 1
    assert doc["extra"]["table_csv"].startswith("dataset,csd_type,kl,cosine,euclidean\n")


def test_cli_decompose_check_assert(tmp_path):
    cfg = _write_config(tmp_path, {"decompose": {"trials": 5}})
    assert cli.main(["decompose-check", "--config", cfg, "--assert", "-q"]) == 0


def test_cli_adjacency_flag(tmp_path):
    cfg = _write_config(tmp_path, {"train": FAST})
    assert cli.main(["znc", "--config", cfg, "--seed", "0", "-q", "--adjacency-as-features",
                     "--out", str(tmp_path / "adj")]) == 0
    doc = json.loads((tmp_path / "adj.json").read_text())
    assert doc["config"]["adjacency_as_features"] is True


def _tiny_cora(root):
    labels = ["Neural_Networks", "Rule_Learning", "Reinforcement_Learning", "Probabilistic_Methods",
              "Theory", "Genetic_Algorithms", "Case_Based"]
    folder = root / "cora"
    folder.mkdir()
    rows = [f"p{i} {i % 2} {(i // 2) % 2} 1 {labels[i % 7]}" for i in range(28)]
    (folder / "cora.content").write_text("\n".join(rows) + "\n")
    (folder / "cora.cites").write_text("\n".join(f"p{i} p{(i + 7) % 28}" for i in range(28)) + "\n")
    classes = [{"id": c, "vector": [float(c == k) for k in range(7)]} for c in range(7)]
    (folder / "csd_text.json").write_text(json.dumps({"kind": "TEXT", "dim": 7, "classes": classes}))


def test_cli_csd_eval_real_layout(tmp_path):
    _tiny_cora(tmp_path)
    out = tmp_path / "r" / "cora_csd"
    assert cli.main(["csd-eval", "--dataset", "cora", "--data-root", str(tmp_path),
                     "--out", str(out), "-q"]) == 0
    doc = json.loads(out.with_suffix(".json").read_text())
    assert any("published counts differ" in w for w in doc["warnings"])
    assert out.with_suffix(".csv").read_text() == doc["extra"]["table_csv"]
