"""Regenerate the golden report files used by tests/test_cli.py.

Run from the repository root:  python3 tests/update_golden.py
Review the diff before committing.
"""
import json
import shutil
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))
from test_cli import GOLDEN_DIR, MINI_CONFIG, run


def main():
    tmp = Path(tempfile.mkdtemp())
    config = tmp / "config.json"
    config.write_text(json.dumps(MINI_CONFIG))
    assert run("synth", "--config", config, "--out", tmp / "ds") == 0
    assert run("fuse", "--config", config, "--data", tmp / "ds", "--out", tmp / "fused") == 0
    assert run("features", "--config", config, "--data", tmp / "fused", "--out", tmp / "feats") == 0
    assert run("eval", "--config", config, "--features", tmp / "feats", "--out", tmp / "out") == 0
    GOLDEN_DIR.mkdir(exist_ok=True)
    for name in ("table1.csv", "report.csv", "confusions.json"):
        shutil.copyfile(tmp / "out" / name, GOLDEN_DIR / name)
        print(f"updated {GOLDEN_DIR / name}")


if __name__ == "__main__":
    main()
