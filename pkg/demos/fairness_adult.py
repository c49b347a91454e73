"""Fair representation on UCI Adult: one ERM run and one penalized run.

Needs the UCI files (see `causirl fetch`); each run takes about a minute.

Run: python3 demos/fairness_adult.py
"""
from pathlib import Path

from causirl import config, harness
from causirl.tabular import default_data_dir, load_adult

root = default_data_dir()
table = load_adult(root / "adult.data", root / "adult.test")
t, s = table.majority_fractions()
print(f"{len(table)} rows; majority income {t:.3f}, majority sex {s:.3f}")

cfg = config.load(Path(__file__).resolve().parents[1] / "configs" / "adult.cfg")
for lam in (0.0, 0.1):
    cfg["penalty"]["lambda"] = lam
    rec = harness.run_cell(cfg)
    print(f"lambda {lam:g}: target {rec.report.target_acc:.3f}, adversary {rec.report.adversary_acc:.3f} "
          f"({rec.wall_secs:.0f}s)")
