import csv
import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

from brwrate import ConfigError
from brwrate.cli import main
from brwrate.config import config_from_resolved, parse_config

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

UNIFORM = """
[law]
family = IidScaledUniform
b = 2

[experiment]
p = 2
a = {a}
reps = 4000
seed = 17
n_max = 6
"""

DEGENERATE = """
[law]
family = DiscreteTable
outcomes = [[1.0, [0.5, 0.5]]]

[experiment]
n_max = 5
reps = 3
"""


def write(tmp_path, text, name="exp.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestConfig:
    def test_defaults(self):
        cfg = parse_config("[law]\nfamily = PoissonGW\nlam = 3\n")
        assert cfg.law == {"family": "PoissonGW", "lam": 3.0}
        assert cfg["reps"] == 10_000 and cfg["a"] is None

    def test_unknown_keys(self):
        with pytest.raises(ConfigError):
            parse_config("[experiment]\nreplicates = 5\n")
        with pytest.raises(ConfigError):
            parse_config("[law]\nfamily = PoissonGW\nmean = 2\n")
        with pytest.raises(ConfigError):
            parse_config("[plots]\ncolor = red\n")
        with pytest.raises(ConfigError):
            parse_config("[output]\nfigure = a.png\n")

    @pytest.mark.parametrize("line", ["p = 1", "a = -0.1", "reps = 0", "r = 2.5",
                                      "seed = -1", "quantity = moments", "mode = best",
                                      "p = nan", "r_set = 2"])
    def test_ranges(self, line):
        with pytest.raises(ConfigError):
            parse_config(f"[experiment]\n{line}\n")

    def test_overrides(self):
        cfg = parse_config("[experiment]\nseed = 3\n", {"seed": 9, "workers": None})
        assert cfg["seed"] == 9 and cfg["workers"] == 1

    def test_bad_law(self):
        cfg = parse_config("[law]\nfamily = PoissonGW\nlam = 0.5\n")
        with pytest.raises(ConfigError):
            cfg.build_law()

    def test_resolved_round_trip(self):
        cfg = parse_config((CONFIGS / "two_point.ini").read_text())
        again = config_from_resolved(cfg.resolved())
        assert again.resolved() == cfg.resolved()

    def test_shipped_configs_parse(self):
        for path in CONFIGS.glob("*.ini"):
            parse_config(path.read_text()).build_law()


class TestCommands:
    def test_analyze_threshold(self, tmp_path):
        for a, expected in ((0.15, True), (0.25, False)):
            out = tmp_path / f"a{a}"
            assert main(["analyze", "--config", write(tmp_path, UNIFORM.format(a=a)),
                         "--out", str(out)]) == 0
            rep = json.loads((out / "report.json").read_text())
            assert rep["criteria"]["main2"] is expected
            assert rep["schema_version"] == 1
            assert rep["config"]["experiment"]["a"] == a
            assert rep["m_curve"][0] == [1.0, 1.0]

    def test_analyze_degenerate(self, tmp_path):
        cfg = write(tmp_path, DEGENERATE + "p = 2\na = 0.1\n")
        assert main(["analyze", "--config", cfg, "--out", str(tmp_path)]) == 0
        rep = json.loads((tmp_path / "report.json").read_text())
        assert rep["criteria"]["degenerate"] is True

    def test_simulate_degenerate(self, tmp_path):
        cfg = write(tmp_path, DEGENERATE + "r_set = [2]\n")
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 0
        rows = read_csv(tmp_path / "trajectory.csv")
        assert list(rows[0]) == ["run_id", "n", "W_n", "W_n_r2", "M_n", "pop_size"]
        assert len(rows) == 3 * 6
        assert all(r["W_n"] == "1" for r in rows)

    def test_csv_precision(self, tmp_path):
        cfg = write(tmp_path, UNIFORM.format(a=0.1))
        main(["simulate", "--config", cfg, "--out", str(tmp_path)])
        rows = read_csv(tmp_path / "trajectory.csv")
        value = rows[1]["W_n"]
        assert float(value) == float(format(float(value), ".17g"))
        assert len(value.replace(".", "").lstrip("0")) >= 15

    def test_rates_slope(self, tmp_path):
        cfg = write(tmp_path, UNIFORM.format(a=0.1).replace("reps = 4000", "reps = 10000")
                    + "fit_max = 8\n")
        assert main(["rates", "--config", cfg, "--out", str(tmp_path)]) == 0
        rows = read_csv(tmp_path / "rates.csv")
        assert list(rows[0]) == ["n", "estimate", "stderr", "predicted"]
        rep = json.loads((tmp_path / "report.json").read_text())
        assert abs(rep["fitted"]["slope"] - (0.2 + math.log(2 / 3))) < 0.05
        assert rep["slope_matches"] is True

    def test_rates_s_n(self, tmp_path):
        out = tmp_path / "sn"
        assert main(["rates", "--config", str(CONFIGS / "two_point.ini"), "--out", str(out)]) == 0
        rep = json.loads((out / "report.json").read_text())
        assert abs(rep["fitted"]["slope"] - rep["predicted_slope"]) < 0.1

    def test_spine(self, tmp_path):
        cfg = write(tmp_path, UNIFORM.format(a=0.1).replace("n_max = 6", "n_max = 3"))
        assert main(["spine", "--config", cfg, "--out", str(tmp_path)]) == 0
        rows = read_csv(tmp_path / "spine.csv")
        assert list(rows[0]) == ["run_id", "k", "Pi_k", "Q_k", "I_k_size", "importance_weight"]
        rep = json.loads((tmp_path / "report.json").read_text())
        assert rep["mode"] == "rejection"
        assert all(v["agree"] for v in rep["duality"].values())

    def test_validate_exit_code_tracks_failures(self, tmp_path, capsys):
        cfg = write(tmp_path, "[experiment]\nscale = 0.1\n")
        code = main(["validate", "--config", cfg, "--out", str(tmp_path)])
        rep = json.loads((tmp_path / "report.json").read_text())
        assert code == (4 if rep["failed"] else 0)
        assert f"{rep['total']} checks" in capsys.readouterr().out
        assert rep["total"] > 100


class TestExitCodes:
    def test_missing_config(self, tmp_path, capsys):
        assert main(["simulate", "--out", str(tmp_path)]) == 2
        assert "needs --config" in capsys.readouterr().err

    def test_unreadable_config(self, tmp_path):
        assert main(["analyze", "--config", str(tmp_path / "none.ini")]) == 2

    def test_precondition(self, tmp_path):
        cfg = write(tmp_path, UNIFORM.format(a=0.1) + "quantity = s_n\n")
        assert main(["rates", "--config", cfg, "--out", str(tmp_path)]) == 2

    def test_overflow_writes_partial(self, tmp_path):
        cfg = write(tmp_path, "[law]\nfamily = PoissonGW\nlam = 3\n"
                              "[experiment]\nn_max = 20\nreps = 4\ncap = 500\n")
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 3
        rep = json.loads((tmp_path / "report.json").read_text())
        assert rep["truncated"] is True and rep["generations"] < 20
        assert (tmp_path / "trajectory.csv").exists()

    def test_module_entry_point(self, tmp_path):
        cfg = write(tmp_path, DEGENERATE)
        proc = subprocess.run([sys.executable, "-m", "brwrate", "simulate", "--config", cfg,
                               "--out", str(tmp_path)], capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr


class TestReproducibility:
    @pytest.mark.parametrize("command", ["simulate", "rates", "spine"])
    def test_workers_do_not_change_bytes(self, tmp_path, command):
        # 10^4 replicates span three blocks, so the pool really splits the work
        cfg = write(tmp_path, UNIFORM.format(a=0.1).replace("n_max = 6", "n_max = 4")
                    .replace("reps = 4000", "reps = 10000"))
        outs = []
        for w in (1, 3):
            out = tmp_path / f"w{w}"
            assert main([command, "--config", cfg, "--workers", str(w), "--out", str(out)]) == 0
            outs.append({p.name: p.read_bytes() for p in out.iterdir()})
        assert outs[0] == outs[1]

    def test_seed_override(self, tmp_path):
        cfg = write(tmp_path, UNIFORM.format(a=0.1))
        main(["simulate", "--config", cfg, "--seed", "1", "--out", str(tmp_path / "s1")])
        main(["simulate", "--config", cfg, "--seed", "2", "--out", str(tmp_path / "s2")])
        a = (tmp_path / "s1" / "trajectory.csv").read_bytes()
        b = (tmp_path / "s2" / "trajectory.csv").read_bytes()
        assert a != b
        rep = json.loads((tmp_path / "s2" / "report.json").read_text())
        assert rep["config"]["experiment"]["seed"] == 2

    def test_report_reproduces_itself(self, tmp_path):
        cfg = write(tmp_path, UNIFORM.format(a=0.1))
        main(["rates", "--config", cfg, "--out", str(tmp_path / "first")])
        first = (tmp_path / "first" / "report.json").read_text()
        resolved = json.loads(first)["config"]
        lines = [f"{k} = {json.dumps(v) if isinstance(v, list) else v}"
                 for k, v in resolved["experiment"].items() if v is not None]
        text = ("[law]\n" + "".join(f"{k} = {v}\n" for k, v in resolved["law"].items())
                + "[experiment]\n" + "\n".join(lines) + "\n")
        again = write(tmp_path, text, "again.ini")
        main(["rates", "--config", again, "--out", str(tmp_path / "second")])
        assert (tmp_path / "second" / "report.json").read_text() == first
