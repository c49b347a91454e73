"""Invariance penalties on per-domain latent batches.

``causirl_penalty`` cuts every domain's batch at a random point, pools the
heads into one mixture and the tails into another, and takes a single
distance between the two mixtures. ``pairwise_penalty`` is the classical
average of the distances between all pairs of domains.

Both return ``(value, grads)`` where ``grads`` is a list of arrays shaped
like the input latents.
"""
from dataclasses import dataclass, field

import numpy as np

from .diffnet import cross_entropy
from .distances import DistanceKind
from .errors import ConfigurationError, InputError, ShapeError


@dataclass(frozen=True)
class SplitPlan:
    cuts: tuple

    def check(self, sizes):
        if len(self.cuts) != len(sizes):
            raise InputError(f"plan has {len(self.cuts)} cuts for {len(sizes)} domains")
        for s, n in zip(self.cuts, sizes):
            if not 0 <= s <= n:
                raise InputError(f"cut {s} outside [0, {n}]")


@dataclass
class PenaltyKind:
    variant: str = "causirl"  # "causirl" | "pairwise"
    distance: DistanceKind = field(default_factory=DistanceKind)
    lam: float = 0.0
    nonfinite: int = field(default=0, compare=False)
    guard_skips: int = field(default=0, compare=False)

    def __post_init__(self):
        if self.variant not in ("causirl", "pairwise"):
            raise ConfigurationError(f"unknown penalty {self.variant!r}")
        self.lam = float(self.lam)
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ConfigurationError("lambda must be finite and >= 0")


def _check_batches(batches):
    batches = [np.atleast_2d(np.asarray(b, dtype=float)) for b in batches]
    if not batches:
        raise InputError("no domain batches given")
    dims = {b.shape[1] for b in batches}
    if len(dims) != 1:
        raise ShapeError(f"domain batches disagree on feature dimension: {sorted(dims)}")
    if any(b.shape[0] == 0 for b in batches):
        raise InputError("empty domain batch")
    return batches


def draw_plan(sizes, rng):
    # inclusive of both 0 and n, so a whole domain can land on either side
    return SplitPlan(tuple(int(rng.integers(0, n + 1)) for n in sizes))


def split_indices(sizes, plan):
    """Row indices into the concatenated batches for the two mixtures."""
    plan.check(sizes)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    first = [np.arange(o, o + s) for o, s in zip(offsets, plan.cuts)]
    second = [np.arange(o + s, o + n) for o, s, n in zip(offsets, plan.cuts, sizes)]
    return np.concatenate(first).astype(int), np.concatenate(second).astype(int)


def mixture_split(batches, rng=None, plan=None):
    """Split each domain batch at a cut point and pool heads and tails.

    Returns ``(B1, B2, plan)``. Pass ``plan`` to force the cut points.
    """
    batches = _check_batches(batches)
    sizes = [b.shape[0] for b in batches]
    if plan is None:
        if rng is None:
            raise InputError("need an rng or an explicit plan")
        plan = draw_plan(sizes, rng)
    i1, i2 = split_indices(sizes, plan)
    Z = np.concatenate(batches)
    return Z[i1], Z[i2], plan


def causirl_penalty(latents, kind, rng=None, plan=None):
    """One distance between two random cross-domain mixtures of the latents.

    Mixtures with one row or fewer give exactly zero (and no distance call).
    A non-finite distance is replaced by zero and counted in
    ``kind.nonfinite``.
    """
    latents = _check_batches(latents)
    sizes = [z.shape[0] for z in latents]
    if plan is None:
        if rng is None:
            raise InputError("need an rng or an explicit plan")
        plan = draw_plan(sizes, rng)
    i1, i2 = split_indices(sizes, plan)
    zero_grads = [np.zeros_like(z) for z in latents]
    if len(i1) <= 1 or len(i2) <= 1:
        kind.guard_skips += 1
        return 0.0, zero_grads
    Z = np.concatenate(latents)
    with np.errstate(invalid="ignore", over="ignore"):  # handled by the guard below
        value, g1, g2 = kind.distance.value_and_grad(Z[i1], Z[i2])
    if not (np.isfinite(value) and np.all(np.isfinite(g1)) and np.all(np.isfinite(g2))):
        kind.nonfinite += 1
        return 0.0, zero_grads
    G = np.zeros_like(Z)
    G[i1] = g1
    G[i2] = g2
    offsets = np.cumsum(sizes)[:-1]
    return float(value), np.split(G, offsets)


def pairwise_penalty(latents, kind):
    """Average distance over all ``d(d-1)/2`` domain pairs; zero for one domain."""
    latents = _check_batches(latents)
    d = len(latents)
    grads = [np.zeros_like(z) for z in latents]
    if d < 2:
        return 0.0, grads
    norm = d * (d - 1) / 2
    total = 0.0
    for i in range(d):
        for j in range(i + 1, d):
            with np.errstate(invalid="ignore", over="ignore"):
                v, gi, gj = kind.distance.value_and_grad(latents[i], latents[j])
            total += v
            grads[i] += gi / norm
            grads[j] += gj / norm
    total /= norm
    if not (np.isfinite(total) and all(np.all(np.isfinite(g)) for g in grads)):
        kind.nonfinite += 1
        return 0.0, [np.zeros_like(z) for z in latents]
    return float(total), grads


def penalty(latents, kind, rng=None):
    if kind.variant == "causirl":
        return causirl_penalty(latents, kind, rng)
    return pairwise_penalty(latents, kind)


def training_loss(logits, labels, penalty_value, lam):
    """Mean over domains of the per-domain cross-entropy, plus ``lam * penalty``."""
    if len(logits) < 1 or len(logits) != len(labels):
        raise InputError("need one logits/labels pair per domain")
    ce = sum(cross_entropy(lg, lb) for lg, lb in zip(logits, labels)) / len(logits)
    return ce + lam * penalty_value
