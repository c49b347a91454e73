"""How the mixture penalty cuts per-domain batches, and what it costs.

Run: python3 demos/mixture_penalty.py
"""
import numpy as np

from causirl.distances import DistanceKind
from causirl.penalties import PenaltyKind, causirl_penalty, mixture_split, pairwise_penalty
from causirl.rng import substream

rng = substream(0, "demo")

# Three domains of four rows each; the row value encodes (domain, position).
batches = [np.array([[10 * d + i] for i in range(4)], dtype=float) for d in range(3)]
for _ in range(3):
    B1, B2, plan = mixture_split(batches, rng)
    print("cuts", plan.cuts, "| B1", B1.ravel().astype(int), "| B2", B2.ravel().astype(int))

# One distance per call, whatever the number of domains; the pairwise
# baseline needs one per pair.
for k in (2, 5, 10, 20):
    latents = [rng.normal(loc=0.1 * d, size=(32, 5)) for d in range(k)]
    mix = PenaltyKind("causirl", DistanceKind.mmd(), 1.0)
    pair = PenaltyKind("pairwise", DistanceKind.mmd(), 1.0)
    v_mix, _ = causirl_penalty(latents, mix, rng)
    v_pair, _ = pairwise_penalty(latents, pair)
    print(f"k={k:2d}: mixture {v_mix:.4f} ({mix.distance.evaluations} distance), "
          f"pairwise {v_pair:.4f} ({pair.distance.evaluations} distances)")
