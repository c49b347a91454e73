"""Draw from the synthetic SCM and check what a linear model can read off it.

Run: python3 demos/scm_samples.py
"""
import numpy as np

from causirl.scm import sample_scm, sample_scm_multi

s = sample_scm(100_000, 0)
print("E[G] =", s.g.mean(axis=0).round(3), " Var[G] =", s.g.var(axis=0).round(3))
print("E[G1|Y=1] - E[G1|Y=0] =", round(s.g[s.y == 1, 0].mean() - s.g[s.y == 0, 0].mean(), 3))
print("corr(Y, D) =", round(np.corrcoef(s.y, s.d)[0, 1], 4))

# With k domains D takes the values 0, 1/(k-1), ..., 1.
m = sample_scm_multi(100_000, 5, 0)
for i in range(5):
    rows = m.d == i
    print(f"domain {i}: share {rows.mean():.3f}, mean G3 {m.g[rows, 2].mean():+.3f}")
