import hashlib
import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from engagekit.cli import main, net_label

GOLDEN_DIR = Path(__file__).parent / "golden"

MINI_CONFIG = {
    "seed": 3,
    "synth": {"sessions": 2, "seconds": 12.0, "cameras": 2},
    "model": {"hidden": 8, "n_fc": 2, "batch": 4, "seq_len": 6, "dropout_p": 0.2},
    "train": {"max_epochs": 6, "patience": 2, "max_lr_drops": 0},
    "data": {"class_weights": "auto", "val_fraction": 0.15},
    "forest": {"n_trees": 4, "max_depth": 4},
}


def run(*argv) -> int:
    return main([str(a) for a in argv])


def dir_digest(root: Path, skip=()) -> dict:
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file() and p.suffix not in skip:
            out[str(p.relative_to(root))] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out


@pytest.fixture(scope="module")
def mini_chain(tmp_path_factory):
    """synth -> fuse -> features on the miniature config."""
    tmp = tmp_path_factory.mktemp("cli")
    config = tmp / "config.json"
    config.write_text(json.dumps(MINI_CONFIG))
    assert run("synth", "--config", config, "--out", tmp / "ds") == 0
    assert run("fuse", "--config", config, "--data", tmp / "ds", "--out", tmp / "fused") == 0
    assert run("features", "--config", config, "--data", tmp / "fused", "--out", tmp / "feats") == 0
    return tmp, config


class TestHelp:
    def test_help_lists_subcommands(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run("--help")
        assert exc.value.code == 0
        text = capsys.readouterr().out
        for cmd in ("synth", "fuse", "features", "train", "eval", "ablate"):
            assert cmd in text

    def test_subcommand_help_lists_flags(self, capsys):
        for cmd in ("synth", "fuse", "features", "train", "eval", "ablate"):
            with pytest.raises(SystemExit) as exc:
                run(cmd, "--help")
            assert exc.value.code == 0
            text = capsys.readouterr().out
            assert "--config" in text and "--out" in text and "--seed" in text and "--set" in text


class TestErrors:
    def test_missing_dataset_is_clean_error(self, tmp_path, capsys):
        assert run("fuse", "--data", tmp_path / "nowhere", "--out", tmp_path / "o") == 2
        assert "error:" in capsys.readouterr().err

    def test_empty_features_dir(self, tmp_path, capsys):
        (tmp_path / "feats").mkdir()
        assert run("eval", "--features", tmp_path / "feats", "--out", tmp_path / "o") == 2
        assert "error:" in capsys.readouterr().err

    def test_unknown_config_key(self, tmp_path, capsys):
        config = tmp_path / "bad.json"
        config.write_text('{"modell": {}}')
        assert run("synth", "--config", config, "--out", tmp_path / "o") == 2
        assert "unknown config key" in capsys.readouterr().err

    def test_bad_override(self, tmp_path, capsys):
        assert run("synth", "--out", tmp_path / "o", "--set", "nope=1") == 2
        assert "unknown config key" in capsys.readouterr().err


class TestChain:
    def test_outputs_exist(self, mini_chain):
        tmp, _ = mini_chain
        assert (tmp / "ds" / "manifest.json").is_file()
        assert (tmp / "fused" / "session00.fused.jsonl").is_file()
        assert (tmp / "feats" / "session00.features.jsonl").is_file()
        for stage in ("ds", "fused", "feats"):
            assert (tmp / stage / "config.json").is_file()

    def test_train_command(self, mini_chain, tmp_path):
        tmp, config = mini_chain
        out = tmp_path / "trained"
        assert run("train", "--config", config, "--features", tmp / "feats", "--out", out) == 0
        assert (out / "weights.engg").is_file()
        assert (out / "training_log.csv").is_file()
        assert (out / "training_curves.png").is_file()
        from engagekit.model import load_params

        params = load_params(out / "weights.engg")
        assert params.config.hidden == 8
        assert "head.W" not in params.tensors

    def test_eval_command_outputs(self, mini_chain, tmp_path):
        tmp, config = mini_chain
        out = tmp_path / "evalout"
        assert run("eval", "--config", config, "--features", tmp / "feats", "--out", out) == 0
        table = (out / "table1.csv").read_text().splitlines()
        assert table[0] == "Method,Mean F-Score,Accuracy,Balanced Accuracy"
        methods = [line.split(",")[0] for line in table[1:]]
        assert "Majority class" in methods and "RF" in methods and "2FC+LSTM" in methods
        assert (out / "report.csv").is_file()
        assert (out / "confusions.json").is_file()
        assert (out / "fold_metrics.png").is_file()
        assert (out / "confusion_RF.png").is_file()
        doc = json.loads((out / "confusions.json").read_text())
        assert set(doc["RF"]["folds"]) == {"session00", "session01"}

    def test_synth_determinism(self, mini_chain, tmp_path):
        tmp, config = mini_chain
        a, b = tmp_path / "a", tmp_path / "b"
        assert run("synth", "--config", config, "--out", a) == 0
        assert run("synth", "--config", config, "--out", b) == 0
        assert dir_digest(a) == dir_digest(b)
        assert dir_digest(a) == dir_digest(tmp / "ds")

    def test_eval_determinism_including_figures(self, mini_chain, tmp_path):
        tmp, config = mini_chain
        a, b = tmp_path / "ea", tmp_path / "eb"
        assert run("eval", "--config", config, "--features", tmp / "feats", "--out", a,
                   "--methods", "rf,majority") == 0
        assert run("eval", "--config", config, "--features", tmp / "feats", "--out", b,
                   "--methods", "rf,majority") == 0
        assert dir_digest(a) == dir_digest(b)

    def test_seed_flag_changes_artifacts(self, mini_chain, tmp_path):
        tmp, config = mini_chain
        out = tmp_path / "seeded"
        assert run("synth", "--config", config, "--seed", "99", "--out", out) == 0
        assert dir_digest(out) != dir_digest(tmp / "ds")


class TestGolden:
    """The miniature eval reports are pinned byte-for-byte.

    Regenerate with tests/update_golden.py after an intentional change.
    """

    def test_matches_checked_in_reports(self, mini_chain, tmp_path):
        tmp, config = mini_chain
        out = tmp_path / "golden_run"
        assert run("eval", "--config", config, "--features", tmp / "feats", "--out", out) == 0
        for name in ("table1.csv", "report.csv", "confusions.json"):
            expected = GOLDEN_DIR / name
            assert expected.is_file(), f"golden file {name} missing; run tests/update_golden.py"
            assert (out / name).read_bytes() == expected.read_bytes(), f"{name} drifted"


def test_net_label():
    assert net_label(3, 1) == "3FC+LSTM"
    assert net_label(2, 2) == "2FC+2LSTM"
