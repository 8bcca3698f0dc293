"""Regenerate the N=5 golden CSVs after checking them against dense references.

Run from the repository root: ``python3 tests/fixtures/make_fixtures.py``.
"""
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

HERE = Path(__file__).resolve().parent
sys.path.insert(0, str(HERE.parent))

from fewphoton.cli import load_config, main  # noqa: E402
from fixture_checks import check_outputs  # noqa: E402

COMMANDS = ("spectrum", "dynamics", "twophoton", "threelevel", "sweep")


def generate(out: Path):
    cfg_path = HERE / "n5" / "config.json"
    for cmd in COMMANDS:
        code = main([cmd, "--config", str(cfg_path), "--out", str(out)])
        if code:
            raise SystemExit(f"{cmd} exited with {code}")


if __name__ == "__main__":
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        generate(tmp)
        cfg, _ = load_config(HERE / "n5" / "config.json")
        check_outputs(tmp, cfg)
        dest = HERE / "n5" / "expected"
        if dest.exists():
            shutil.rmtree(dest)
        shutil.copytree(tmp, dest)
        print("wrote", sorted(p.name for p in dest.iterdir()))
