import json

import pytest

from rspo_lab.cli import build_parser, main


def smoke_config_obj(out_dir, **kw):
    base = {
        "task": "arith",
        "modulus": 5,
        "gen_len": 2,
        "block_size": 2,
        "steps": 2,
        "groups_per_batch": 2,
        "group_size": 3,
        "hidden": 8,
        "embed_dim": 4,
        "window": 2,
        "checkpoint_every": 0,
        "out_dir": str(out_dir),
    }
    base.update(kw)
    return base


def write_config(tmp_path, **kw):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(smoke_config_obj(tmp_path / "run", **kw)))
    return path


class TestParser:
    def test_command_required(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])

    def test_train_flags(self):
        args = build_parser().parse_args(
            ["train", "--lambda", "0.5", "--group-size", "4", "--no-centering"]
        )
        assert args.lam == 0.5
        assert args.group_size == 4
        assert args.no_centering


class TestTrain:
    def test_end_to_end(self, tmp_path, capsys):
        cfg_path = write_config(tmp_path)
        assert main(["train", "--config", str(cfg_path)]) == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["steps"] == 2
        assert (tmp_path / "run" / "metrics.jsonl").exists()

    def test_env_overrides_file(self, tmp_path, capsys, monkeypatch):
        cfg_path = write_config(tmp_path, steps=5)
        monkeypatch.setenv("RSPO_STEPS", "1")
        main(["train", "--config", str(cfg_path)])
        summary = json.loads(capsys.readouterr().out)
        assert summary["steps"] == 1

    def test_flag_overrides_env(self, tmp_path, capsys, monkeypatch):
        cfg_path = write_config(tmp_path)
        monkeypatch.setenv("RSPO_STEPS", "5")
        main(["train", "--config", str(cfg_path), "--steps", "1"])
        summary = json.loads(capsys.readouterr().out)
        assert summary["steps"] == 1

    def test_env_bool_and_float_coercion(self, tmp_path, capsys, monkeypatch):
        cfg_path = write_config(tmp_path)
        monkeypatch.setenv("RSPO_CENTERING", "false")
        monkeypatch.setenv("RSPO_LAMBDA", "0.125")
        main(["train", "--config", str(cfg_path)])
        summary = json.loads(capsys.readouterr().out)
        assert summary["centering"] is False
        assert summary["lambda"] == 0.125

    def test_ablation_toggles(self, tmp_path, capsys):
        cfg_path = write_config(tmp_path)
        main(["train", "--config", str(cfg_path), "--no-centering",
              "--no-reference", "--normalize-adv"])
        summary = json.loads(capsys.readouterr().out)
        assert summary["centering"] is False
        assert summary["reference"] is False
        assert summary["normalize_adv"] is True


class TestAudit:
    def test_all_checks_pass(self, capsys):
        assert main(["audit", "--seed", "1"]) == 0
        out = capsys.readouterr().out
        lines = [ln for ln in out.splitlines() if ln]
        assert len(lines) == 5
        assert all(ln.startswith("PASS ") for ln in lines)


class TestAblate:
    def test_grid_runs_every_combination(self, tmp_path, capsys):
        matrix = smoke_config_obj(tmp_path / "grid", steps=1)
        matrix["grid"] = {"lambda": [0.0, 0.01], "centering": [True, False]}
        path = tmp_path / "matrix.json"
        path.write_text(json.dumps(matrix))
        assert main(["ablate", "--matrix", str(path)]) == 0
        base = tmp_path / "grid"
        tags = sorted(p.name for p in base.iterdir() if p.is_dir())
        assert tags == [
            "centering=False_lambda=0.0",
            "centering=False_lambda=0.01",
            "centering=True_lambda=0.0",
            "centering=True_lambda=0.01",
        ]
        summaries = json.loads((base / "ablation_summaries.json").read_text())
        assert len(summaries) == 4
        assert {s["run"] for s in summaries} == set(tags)
