"""Invariance versus accuracy on the synthetic SCM as the penalty weight grows.

Trains one encoder per lambda (one seed, so about 20 seconds) and prints the
best test accuracy of a linear probe for Y and for D on the frozen latents.
The full three-seed sweep is `causirl sweep --config configs/synthetic.cfg`.

Run: python3 demos/synthetic_tradeoff.py
"""
from pathlib import Path

from causirl import config, harness

cfg = config.load(Path(__file__).resolve().parents[1] / "configs" / "synthetic.cfg")
print("lambda  target  adversary")
for lam in cfg["sweep"]["lambdas"]:
    cfg["penalty"]["lambda"] = lam
    rec = harness.run_cell(cfg)
    print(f"{lam:6g}  {rec.report.target_acc:6.3f}  {rec.report.adversary_acc:9.3f}")
