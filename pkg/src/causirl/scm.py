"""Sampler for the three-factor synthetic structural causal model.

    Y  <- Bernoulli(0.5)
    D  <- Bernoulli(0.5)
    G1 <- Y + N1
    G2 <- 2 Y + 2 D + N2
    G3 <- D + N3,          N_i ~ N(0, 1)

Encoders see ``(G1, G2, G3)``; ``Y`` is the target and ``D`` the attribute
the representation should be invariant to. ``sample_scm_multi`` lets D take
``k`` values, embedded as ``index / (k - 1)`` so that the mean stays 0.5 and
``k = 2`` recovers the binary model.
"""
import csv
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .rng import box_muller, substream


@dataclass
class ScmSamples:
    """Struct-of-arrays batch of SCM draws."""

    y: np.ndarray
    d: np.ndarray
    g: np.ndarray
    k: int = 2

    def __len__(self):
        return len(self.y)

    def __getitem__(self, idx):
        return ScmSamples(self.y[idx], self.d[idx], self.g[idx], self.k)

    @property
    def d_value(self):
        return domain_value(self.d, self.k)

    @property
    def features(self):
        return self.g


@dataclass
class ScmDataset:
    train: ScmSamples
    test: ScmSamples
    k: int = 2


def domain_value(index, k):
    return np.asarray(index, dtype=float) / (k - 1)


def structural_equations(y, d_value, noise):
    """Generative factors for given labels, domain values and noise (n x 3)."""
    y = np.asarray(y, dtype=float)
    dv = np.asarray(d_value, dtype=float)
    noise = np.asarray(noise, dtype=float).reshape(-1, 3)
    g1 = y + noise[:, 0]
    g2 = 2.0 * y + 2.0 * dv + noise[:, 1]
    g3 = dv + noise[:, 2]
    return np.stack([g1, g2, g3], axis=1)


def sample_scm_multi(n, k, seed):
    if n < 1:
        raise InputError("n must be >= 1")
    if k < 2:
        raise InputError("k must be >= 2")
    rng = substream(seed, "scm", k)
    y = (rng.random(n) < 0.5).astype(np.int64)
    if k == 2:
        d = (rng.random(n) < 0.5).astype(np.int64)
    else:
        d = np.minimum((rng.random(n) * k).astype(np.int64), k - 1)
    noise = box_muller(rng, (n, 3))
    g = structural_equations(y, domain_value(d, k), noise)
    return ScmSamples(y, d, g, k)


def sample_scm(n, seed):
    return sample_scm_multi(n, 2, seed)


def train_test_split(samples, n_test, seed):
    n = len(samples)
    if not 0 < n_test < n:
        raise InputError(f"n_test must be in (0, {n}), got {n_test}")
    perm = substream(seed, "train_test_split").permutation(n)
    return ScmDataset(train=samples[np.sort(perm[n_test:])], test=samples[np.sort(perm[:n_test])], k=samples.k)


def write_csv(samples, path):
    """Write ``g1,g2,g3,y,d`` rows (d is the domain index)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["g1", "g2", "g3", "y", "d"])
        for row, y, d in zip(samples.g, samples.y, samples.d):
            w.writerow([repr(float(row[0])), repr(float(row[1])), repr(float(row[2])), int(y), int(d)])


def read_csv(path, k=None):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise InputError(f"{path}: no rows")
    g = np.array([[float(r["g1"]), float(r["g2"]), float(r["g3"])] for r in rows])
    y = np.array([int(r["y"]) for r in rows], dtype=np.int64)
    d = np.array([int(r["d"]) for r in rows], dtype=np.int64)
    return ScmSamples(y, d, g, k if k is not None else max(2, int(d.max()) + 1))
