"""Regenerate the golden artifacts for the determinism criterion.

Run from the repository root:

    python3 tests/make_golden.py

The goldens pin the output of one full sheet1 pipeline (simulate both expert
plans at seed 0, learn, refine, evaluate at seed 1, report) in the current
environment. Regenerate after intentional changes to the simulator, learner
or search defaults.
"""
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from test_acceptance import GOLDEN_DIR, _golden_artifacts  # noqa: E402


def main():
    GOLDEN_DIR.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        artifacts = _golden_artifacts(Path(tmp))
    for name, content in artifacts.items():
        (GOLDEN_DIR / name).write_text(content)
        print(f"wrote {GOLDEN_DIR / name}")


if __name__ == "__main__":
    main()
