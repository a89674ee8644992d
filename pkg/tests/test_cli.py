import json
from pathlib import Path

import numpy as np
import pytest

from markovsd.cli import ConfigError, main, run_config

REPO = Path(__file__).resolve().parents[1]


def write_cfg(path, *, seed="seed = 5", weights=None, task="rates",
              extra_task="", family="rectangular"):
    weight_line = f"weights = {weights}" if weights else ""
    path.write_text(f"""
[channel]
alpha = 0.8
levels_per_dim = 2
es_n0_db = 3.0

[interleaver]
family = {family}
levels = 2
{weight_line}

[mc]
block_len = 1200
blocks = 4
burn_in_cap = 200
{seed}

[task]
name = {task}
{extra_task}

[output]
directory = out
""")


class TestValidate:
    def test_missing_seed_named(self, tmp_path, capsys):
        cfg = tmp_path / "c.cfg"
        write_cfg(cfg, seed="")
        rc = main(["validate", "--config", str(cfg)])
        assert rc == 1
        assert "mc.seed" in capsys.readouterr().err

    def test_bad_weight_sum_reported(self, tmp_path, capsys):
        cfg = tmp_path / "c.cfg"
        write_cfg(cfg, weights="0.5 0.6", family="random")
        rc = main(["validate", "--config", str(cfg)])
        assert rc == 1
        err = capsys.readouterr().err
        assert "sum" in err and "1.1" in err

    def test_shipped_configs_clean(self, capsys):
        for name in ("example.cfg", "small_rates.cfg", "plan.cfg"):
            rc = main(["validate", "--config", str(REPO / "configs" / name)])
            assert rc == 0, capsys.readouterr()

    def test_unknown_task_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "c.cfg"
        write_cfg(cfg, task="frobnicate")
        assert main(["validate", "--config", str(cfg)]) == 1

    def test_missing_referenced_file(self, tmp_path, capsys):
        cfg = tmp_path / "c.cfg"
        write_cfg(cfg, task="optimize-weights", extra_task="mu_csv = nope.csv")
        rc = main(["validate", "--config", str(cfg)])
        assert rc == 1
        assert "not found" in capsys.readouterr().err


class TestRun:
    def test_rates_artifacts_and_determinism(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        write_cfg(cfg)
        out1, arts = run_config(cfg, out_dir=tmp_path / "a")
        out2, _ = run_config(cfg, out_dir=tmp_path / "b")
        assert arts == ["rates.csv"]
        assert (out1 / "rates.csv").read_bytes() == (out2 / "rates.csv").read_bytes()
        manifest = json.loads((out1 / "manifest.json").read_text())
        assert manifest["seed"] == 5
        assert manifest["artifacts"] == ["rates.csv"]

    def test_seed_override_changes_output(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        write_cfg(cfg)
        out1, _ = run_config(cfg, out_dir=tmp_path / "a")
        out2, _ = run_config(cfg, out_dir=tmp_path / "b", seed=6)
        assert (out1 / "rates.csv").read_bytes() != (out2 / "rates.csv").read_bytes()
        manifest = json.loads((out2 / "manifest.json").read_text())
        assert manifest["seed"] == 6

    def test_rates_internally_consistent(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        write_cfg(cfg)
        out, _ = run_config(cfg, out_dir=tmp_path / "o")
        rows = (out / "rates.csv").read_text().strip().splitlines()
        assert rows[0] == "level,weight,R,R_se,C,C_se"
        levels = [r.split(",") for r in rows[1:-1]]
        overall = rows[-1].split(",")
        combined = sum(float(w) * float(rr) for _, w, rr, *_ in levels)
        assert abs(combined - float(overall[2])) < 1e-12

    def test_mu_curve_monotone_within_noise(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        write_cfg(cfg, task="mu-curve", extra_task="grid_points = 21")
        out, arts = run_config(cfg, out_dir=tmp_path / "o")
        rows = (out / "mu_curve.csv").read_text().strip().splitlines()
        assert rows[0] == "x,mu,stderr"
        assert len(rows) == 22
        data = np.array([[float(v) for v in r.split(",")] for r in rows[1:]])
        for i in range(len(data) - 1):
            se = np.hypot(data[i, 2], data[i + 1, 2])
            assert data[i + 1, 1] >= data[i, 1] - 2 * se

    def test_exit_task_with_shipped_family(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        rel = Path("fam.csv")
        import shutil

        shutil.copy(REPO / "data" / "decoder_family_synthetic.csv", tmp_path / rel)
        write_cfg(cfg, task="exit", family="random", weights="0.4 0.6",
                  extra_task=f"decoder_family = {rel}\nmu_csv_absent = 1")
        out, arts = run_config(cfg, out_dir=tmp_path / "o")
        assert "supported_rates.csv" in arts
        assert (out / "exit_estimator_level1.csv").exists()

    def test_everything_inside_output_dir(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        write_cfg(cfg)
        before = set(p for p in tmp_path.rglob("*"))
        out, _ = run_config(cfg, out_dir=tmp_path / "o")
        after = set(p for p in tmp_path.rglob("*"))
        new = {p for p in after - before if p.is_file()}
        assert all(str(p).startswith(str(out)) for p in new)

    def test_plan_and_bound_tasks(self, tmp_path):
        cfg = tmp_path / "p.cfg"
        write_cfg(cfg, task="plan",
                  extra_task="total_length = 1200\np_bar_e = 1e-3\ncandidates = 1 2")
        out, _ = run_config(cfg, out_dir=tmp_path / "po")
        head = (out / "plan.csv").read_text().splitlines()[0]
        assert head == "K,level,N_k,w_k,rbar_k"

        cfg2 = tmp_path / "b.cfg"
        write_cfg(cfg2, task="bound-check", extra_task="bound_levels = 2 3")
        out2, _ = run_config(cfg2, out_dir=tmp_path / "bo")
        rows = (out2 / "bound_check.csv").read_text().strip().splitlines()
        assert rows[0] == "K,bound,measured_gap,gap_stderr"
        assert len(rows) == 3

    def test_invalid_config_raises(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        write_cfg(cfg, seed="")
        with pytest.raises(ConfigError, match="mc.seed"):
            run_config(cfg, out_dir=tmp_path / "o")
