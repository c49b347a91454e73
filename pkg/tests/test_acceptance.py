"""Acceptance criteria, one test each. Every test prints a PASS/FAIL line.

The experiment criteria (1-3) run the checked-in configs end to end and take
several minutes in total (the Adult sweep dominates).
"""
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from causirl import config, harness
from causirl.diffnet import MlpModel, mlp_specs
from causirl.distances import DistanceKind
from causirl.penalties import PenaltyKind, penalty
from causirl.rng import substream
from causirl.scm import sample_scm_multi
from causirl.tabular import load_adult, load_german

ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "data" / "uci"
needs_uci = pytest.mark.skipif(not (DATA / "adult.data").exists(), reason="UCI files not present")


def _load(name):
    return config.load(ROOT / "configs" / f"{name}.cfg")


def _group_means(records):
    by = {}
    for r in records:
        assert r.status == "ok", r.error
        by.setdefault(r.config["penalty"]["lambda"], []).append(
            (r.report.target_acc, r.report.adversary_acc, r.wall_secs))
    return {lam: np.mean(v, axis=0) for lam, v in sorted(by.items())}


def _best_lambda(means, target_min, adv_max):
    """Highest-target positive lambda whose mean accuracies meet both bounds, else None."""
    ok = [(m[0], lam) for lam, m in means.items() if lam > 0 and m[0] >= target_min and m[1] <= adv_max]
    return max(ok)[1] if ok else None


def _table(means):
    return ", ".join(f"lam {lam:g}: {100 * m[0]:.1f}/{100 * m[1]:.1f}" for lam, m in means.items())


def test_criterion_1_synthetic_tradeoff(verdict):
    cfg = _load("synthetic")
    start = time.perf_counter()
    means = _group_means(harness.run_sweep(cfg, master_seed=0))
    secs = time.perf_counter() - start
    t0, a0 = means[0.0][:2]
    t10, a10 = means[10.0][:2]
    rho = stats.spearmanr(list(means), [m[1] for m in means.values()])[0]
    checks = {
        "lam0 target>=80": t0 >= 0.80,
        "lam0 adversary>=60": a0 >= 0.60,
        "lam10 adversary in [48,58]": 0.48 <= a10 <= 0.58,
        "lam10 target<=65": t10 <= 0.65,
        "runtime<=300s": secs <= 300,
    }
    failed = [k for k, v in checks.items() if not v]
    ok = verdict(1, not failed, f"target/adversary % {_table(means)}; spearman(lam, adv)={rho:.2f}; "
                                f"{secs:.0f}s" + (f"; failed: {failed}" if failed else ""))
    assert ok


def _fair_criterion(number, name, loader, target_min, adv_max, majority, verdict):
    table = loader()
    t_major, s_major = table.majority_fractions()
    cfg = _load(name)
    cfg["sweep"]["lambdas"] = [lam for lam in cfg["sweep"]["lambdas"] if lam > 0]
    means = _group_means(harness.run_sweep(cfg, master_seed=0))
    best = _best_lambda(means, target_min, adv_max)
    slowest = max(m[2] for m in means.values())
    checks = {
        f"majority target {majority[0]}+-1": abs(t_major - majority[0]) <= 0.01 + 1e-12,
        f"majority sensitive {majority[1]}+-1": abs(s_major - majority[1]) <= 0.01 + 1e-12,
        f"some lam>0 with target>={100 * target_min:.0f} and adversary<={100 * adv_max:.1f}": best is not None,
        "runtime per lam<=1800s": slowest <= 1800,
    }
    failed = [k for k, v in checks.items() if not v]
    detail = (f"majority {100 * t_major:.1f}/{100 * s_major:.1f}; {_table(means)}; best lam "
              f"{'none' if best is None else format(best, 'g')}; slowest run {slowest:.0f}s")
    ok = verdict(number, not failed, detail + (f"; failed: {failed}" if failed else ""))
    assert ok


@needs_uci
def test_criterion_2_adult(verdict):
    _fair_criterion(2, "adult", lambda: load_adult(DATA / "adult.data", DATA / "adult.test"),
                    0.830, 0.715, (0.75, 0.67), verdict)


@needs_uci
def test_criterion_3_german(verdict):
    _fair_criterion(3, "german", lambda: load_german(DATA / "german.data"),
                    0.76, 0.71, (0.71, 0.69), verdict)


KS = (2, 5, 10, 20)


def _per_step_time(fn, budget=0.03, rounds=5):
    fn()
    reps = 1
    while True:
        t0 = time.perf_counter()
        for _ in range(reps):
            fn()
        elapsed = time.perf_counter() - t0
        if elapsed > budget:
            break
        reps *= 2
    best = elapsed / reps
    for _ in range(rounds):
        t0 = time.perf_counter()
        for _ in range(reps):
            fn()
        best = min(best, (time.perf_counter() - t0) / reps)
    return best


def _growth_exponent(variant, distance, repeats=5, n=64):
    """Growth of per-step penalty time in k, as a one-sided 95% interval.

    The decision uses the local log-log slope between the two largest k,
    where fixed per-call overhead no longer flattens the curve; the slope
    fitted over all k is returned for information.
    """
    latents = {}
    for k in KS:
        s = sample_scm_multi(200 * k, k, 0)
        enc = MlpModel(mlp_specs((3, 10, 5), True), 0)
        latents[k] = [enc.forward(s.g[s.d == i][:n]) for i in range(k)]
    local, fitted = [], []
    for _ in range(repeats):
        times = []
        for k in KS:
            dist = DistanceKind.mmd() if distance == "mmd" else DistanceKind.coral()
            kind = PenaltyKind(variant, dist, 1.0)
            rng = substream(k, "timing")
            times.append(_per_step_time(lambda: penalty(latents[k], kind, rng)))
        local.append(np.log(times[-1] / times[-2]) / np.log(KS[-1] / KS[-2]))
        fitted.append(np.polyfit(np.log(KS), np.log(times), 1)[0])
    mean = float(np.mean(local))
    half = float(stats.t.ppf(0.95, repeats - 1) * np.std(local, ddof=1) / np.sqrt(repeats))
    return mean, mean - half, mean + half, float(np.mean(fitted))


def test_criterion_4_evaluation_count_law(verdict):
    count_ok = True
    counts = []
    for k in KS:
        for variant in ("causirl", "pairwise"):
            cfg = config.from_mapping({
                "dataset": {"name": "scm_multi", "k": k, "n": 80 * k, "n_test": 10 * k},
                "penalty": {"kind": variant, "lambda": 1.0},
                "train": {"epochs": 2, "batch_size": 16},
                "eval": {"target_epochs": 1, "adversary_epochs": 1},
            })
            rec = harness.run_cell(cfg)
            steps = rec.report.flags["steps"]
            expected = 1 if variant == "causirl" else k * (k - 1) // 2
            skips = rec.report.flags["guard_skips"]
            count_ok &= rec.status == "ok" and rec.dist_evals + expected * skips == expected * steps
            counts.append(f"{variant} k={k}: {rec.dist_evals}/{steps} steps")
    timing = {}
    timing_ok = True
    for distance in ("mmd", "coral"):
        c_mean, _, c_hi, c_fit = _growth_exponent("causirl", distance)
        p_mean, p_lo, _, p_fit = _growth_exponent("pairwise", distance)
        sub_quadratic = c_hi < 2.0
        super_linear = p_lo > 1.0
        timing_ok &= sub_quadratic and super_linear
        timing[distance] = (f"{distance}: causirl k10->20 slope {c_mean:.2f} (upper {c_hi:.2f}, "
                            f"all-k fit {c_fit:.2f}, sub-quadratic {'yes' if sub_quadratic else 'no'}), "
                            f"pairwise k10->20 slope {p_mean:.2f} (lower {p_lo:.2f}, all-k fit {p_fit:.2f}, "
                            f"superlinear {'yes' if super_linear else 'no'})")
    detail = ("counts " + ("exact" if count_ok else "WRONG") + f" ({'; '.join(counts)}); " + "; ".join(timing.values()))
    ok = verdict(4, count_ok and timing_ok, detail)
    assert count_ok
    assert ok


PROPERTY_TESTS = [
    "tests/test_diffnet.py",
    "tests/test_distances.py",
    "tests/test_penalties.py",
    "tests/test_scm.py",
    "tests/test_harness.py::test_sweep_persists_and_is_deterministic",
]


def test_criterion_5_property_suite(verdict):
    start = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *PROPERTY_TESTS],
                          cwd=ROOT, capture_output=True, text=True)
    secs = time.perf_counter() - start
    summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr.strip()[-200:]
    ok = verdict(5, proc.returncode == 0 and secs < 60, f"{summary} (wall {secs:.1f}s, limit 60s)")
    assert ok, proc.stdout[-3000:]


def test_criterion_6_scope_exclusions(verdict):
    datasets = config.CHOICES[("dataset", "name")]
    readme = (ROOT / "README.md").read_text()
    ok = datasets == {"synthetic", "scm_multi", "adult", "german"} and "DomainBed" in readme and "Wilds" in readme
    verdict(6, ok, "image (DomainBed) and Wilds benchmarks are excluded and documented as such; "
                   f"runnable datasets: {sorted(datasets)}")
    assert ok
