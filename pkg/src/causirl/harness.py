"""Experiment protocol: penalized encoder training, frozen-encoder evaluation,
lambda sweeps and on-disk run records.

A run is described by a config dict (see :mod:`causirl.config`) and a master
seed. Every random choice in a run comes from a substream keyed by
``(master seed, run seed, purpose)``, so the penalty weight never changes
initialization or batching.
"""
import csv
import itertools
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import config as config_mod
from .diffnet import MlpModel, accuracy, cross_entropy_with_grad, mlp_specs
from .distances import DistanceKind
from .errors import InputError, NumericError
from .optim import Adam, OptimConfig
from .penalties import PenaltyKind, penalty as compute_penalty
from .rng import substream
from .scm import sample_scm, sample_scm_multi, train_test_split
from .tabular import apply_preprocessor, default_data_dir, fit_preprocessor, load_adult, load_german

RESULTS_COLUMNS = [
    "run_id", "dataset", "penalty", "distance", "lambda", "seed",
    "target_acc", "adversary_acc", "best_epoch_target", "best_epoch_adv",
    "final_target_acc", "final_adv_acc", "dist_evals", "wall_secs", "status",
]


@dataclass
class DomainData:
    """Features, target and domain/sensitive index for a train and test split."""

    X_train: np.ndarray
    y_train: np.ndarray
    d_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    d_test: np.ndarray
    n_domains: int = 2
    n_classes: int = 2

    def domain_rows(self):
        return [np.flatnonzero(self.d_train == i) for i in range(self.n_domains) if np.any(self.d_train == i)]


@dataclass
class DiscriminatorProtocol:
    hidden: tuple = ()
    target_epochs: int = 100
    adversary_epochs: int = 100
    batch_size: int = 64
    optim: OptimConfig = field(default_factory=lambda: OptimConfig(lr=1e-3, weight_decay=1e-3, schedule="cosine"))

    @classmethod
    def from_config(cls, cfg):
        e = cfg["eval"]
        return cls(
            tuple(e["hidden"]), e["target_epochs"], e["adversary_epochs"], e["batch_size"],
            OptimConfig(lr=e["lr"], weight_decay=e["weight_decay"], schedule=e["schedule"]),
        )


@dataclass
class TrainConfig:
    encoder_sizes: tuple
    batchnorm: bool
    head_hidden: tuple
    penalty: object  # PenaltyKind or None
    epochs: int
    batch_size: int
    optim: OptimConfig
    seed: int
    dataset: str = "synthetic"
    master_seed: int = 0
    per_domain_forward: bool = True

    @classmethod
    def from_config(cls, cfg, n_features, master_seed=0):
        p = cfg["penalty"]
        kind = None
        if p["kind"] != "none":
            dist = DistanceKind.mmd(p["gammas"]) if p["distance"] == "mmd" else DistanceKind.coral()
            kind = PenaltyKind(p["kind"], dist, p["lambda"])
        m, t = cfg["model"], cfg["train"]
        return cls(
            encoder_sizes=(n_features, *m["encoder_hidden"], m["latent"]),
            batchnorm=m["batchnorm"],
            head_hidden=tuple(m["head_hidden"]),
            penalty=kind,
            epochs=t["epochs"],
            batch_size=t["batch_size"],
            optim=OptimConfig(lr=t["lr"], weight_decay=t["weight_decay"]),
            seed=t["seed"],
            dataset=cfg["dataset"]["name"],
            master_seed=master_seed,
            per_domain_forward=t["per_domain_forward"],
        )


@dataclass
class EvalReport:
    target_acc: float
    adversary_acc: float
    best_epoch_target: int
    best_epoch_adv: int
    final_target_acc: float
    final_adv_acc: float
    target_curve: list
    adversary_curve: list
    flags: dict = field(default_factory=dict)


@dataclass
class RunRecord:
    run_id: str
    config: dict
    master_seed: int
    status: str = "ok"
    report: EvalReport = None
    history: list = field(default_factory=list)
    wall_secs: float = 0.0
    dist_evals: int = 0
    error: str = ""


class _CyclicSampler:
    """Draws rows of one domain without replacement, reshuffling when exhausted."""

    def __init__(self, rows, rng):
        self.rows = rows
        self.rng = rng
        self.order = rng.permutation(rows)
        self.pos = 0

    def take(self, n):
        out = []
        while n > 0:
            if self.pos == len(self.order):
                self.order = self.rng.permutation(self.rows)
                self.pos = 0
            k = min(n, len(self.order) - self.pos)
            out.append(self.order[self.pos:self.pos + k])
            self.pos += k
            n -= k
        return np.concatenate(out)


def epoch_batch_sizes(n_min, batch_size, n_domains):
    sizes = [min(batch_size, n_min - s) for s in range(0, n_min, batch_size)]
    return [b for b in sizes if b * n_domains >= 2]


def build_models(cfg: TrainConfig, n_classes=2):
    encoder = MlpModel(mlp_specs(cfg.encoder_sizes, cfg.batchnorm), substream_seed(cfg, "encoder_init"))
    head = MlpModel(mlp_specs((cfg.encoder_sizes[-1], *cfg.head_hidden, n_classes)), substream_seed(cfg, "head_init"))
    return encoder, head


def substream_seed(cfg, purpose):
    return int(substream(cfg.master_seed, cfg.seed, purpose).integers(0, 2**63 - 1))


def train_encoder(cfg: TrainConfig, data: DomainData):
    """Train encoder + classifier head on the cross-entropy plus the invariance penalty.

    Each step draws ``batch_size`` rows from every domain and runs them
    through the encoder, by default as separate batches so batchnorm sees
    per-domain statistics. It then averages the per-domain cross-entropies and
    adds ``lambda * penalty`` computed on the per-domain latents.
    Returns ``(encoder, head, history)``; history has one dict per epoch.
    """
    domains = data.domain_rows()
    if not domains:
        raise InputError("no domain present in the training data")
    encoder, head = build_models(cfg, data.n_classes)
    enc_opt = Adam(encoder, cfg.optim)
    head_opt = Adam(head, cfg.optim)
    batch_rng = substream(cfg.master_seed, cfg.seed, "batches")
    split_rng = substream(cfg.master_seed, cfg.seed, "mixture")
    samplers = [_CyclicSampler(rows, batch_rng) for rows in domains]
    n_dom = len(domains)
    n_min = min(len(r) for r in domains)
    kind = cfg.penalty
    lam = kind.lam if kind is not None else 0.0
    history = []
    for epoch in range(cfg.epochs):
        totals = np.zeros(3)
        steps = 0
        for b in epoch_batch_sizes(n_min, cfg.batch_size, n_dom):
            idx = [s.take(b) for s in samplers]
            X = data.X_train[np.concatenate(idx)]
            y = data.y_train[np.concatenate(idx)]
            Z = encoder.forward(X, segments=[b] * n_dom if cfg.per_domain_forward else None)
            logits = head.forward(Z)
            g_logits = np.empty_like(logits)
            ce = 0.0
            for i in range(n_dom):
                sl = slice(i * b, (i + 1) * b)
                li, gi = cross_entropy_with_grad(logits[sl], y[sl])
                ce += li / n_dom
                # gi is already divided by the domain batch size
                g_logits[sl] = gi / n_dom
            dZ, head_grads = head.backward(g_logits)
            pen = 0.0
            if kind is not None:
                latents = [Z[i * b:(i + 1) * b] for i in range(n_dom)]
                pen, pen_grads = compute_penalty(latents, kind, split_rng)
                dZ = dZ + lam * np.concatenate(pen_grads)
            loss = ce + lam * pen
            if not math.isfinite(loss):
                raise NumericError(f"non-finite training loss at epoch {epoch + 1}")
            _, enc_grads = encoder.backward(dZ)
            enc_opt.step(enc_grads)
            head_opt.step(head_grads)
            totals += (loss, ce, pen)
            steps += 1
        loss, ce, pen = totals / max(steps, 1)
        history.append({"epoch": epoch + 1, "loss": loss, "ce": ce, "penalty": pen, "steps": steps})
    encoder.eval()
    head.eval()
    return encoder, head, history


def _fit_discriminator(Z_train, labels, Z_test, test_labels, n_classes, protocol, epochs, seed):
    model = MlpModel(mlp_specs((Z_train.shape[1], *protocol.hidden, n_classes)), seed)
    opt = Adam(model, protocol.optim, total_epochs=epochs)
    rng = substream(seed, "discriminator_batches")
    n = len(Z_train)
    curve = []
    for _ in range(epochs):
        model.train()
        order = rng.permutation(n)
        for start in range(0, n, protocol.batch_size):
            rows = order[start:start + protocol.batch_size]
            out = model.forward(Z_train[rows])
            _, g = cross_entropy_with_grad(out, labels[rows])
            _, grads = model.backward(g)
            opt.step(grads)
        opt.end_epoch()
        model.eval()
        curve.append(accuracy(model.forward(Z_test), test_labels))
    return curve


def evaluate_frozen(encoder, data: DomainData, protocol: DiscriminatorProtocol, seed=0):
    """Train a target and an adversary discriminator on frozen latents.

    Test accuracy is measured after every epoch and the best value is kept
    (the final-epoch value is reported alongside).
    """
    if len(data.y_test) == 0:
        raise InputError("empty test split")
    encoder.eval()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        Z_train = encoder.forward(data.X_train)
        Z_test = encoder.forward(data.X_test)
        rng = substream(seed, "discriminators")
        t_seed, a_seed = (int(x) for x in rng.integers(0, 2**63 - 1, size=2))
        target = _fit_discriminator(Z_train, data.y_train, Z_test, data.y_test, data.n_classes,
                                    protocol, protocol.target_epochs, t_seed)
        adv = _fit_discriminator(Z_train, data.d_train, Z_test, data.d_test, data.n_domains,
                                 protocol, protocol.adversary_epochs, a_seed)
    overruns = sum(1 for w in caught if "overrun" in str(w.message))
    return EvalReport(
        target_acc=max(target),
        adversary_acc=max(adv),
        best_epoch_target=int(np.argmax(target)) + 1,
        best_epoch_adv=int(np.argmax(adv)) + 1,
        final_target_acc=target[-1],
        final_adv_acc=adv[-1],
        target_curve=target,
        adversary_curve=adv,
        flags={"schedule_overruns": overruns},
    )


# ---------------------------------------------------------------- datasets

@lru_cache(maxsize=8)
def _load_cached(name, n, n_test, k, data_seed, data_dir, include_sensitive, test_fraction):
    if name in ("synthetic", "scm_multi"):
        k = 2 if name == "synthetic" else k
        samples = sample_scm(n, data_seed) if name == "synthetic" else sample_scm_multi(n, k, data_seed)
        ds = train_test_split(samples, n_test, data_seed)
        return DomainData(ds.train.g, ds.train.y, ds.train.d, ds.test.g, ds.test.y, ds.test.d, n_domains=k)
    root = Path(data_dir) if data_dir else default_data_dir()
    if name == "adult":
        table = load_adult(root / "adult.data", root / "adult.test")
    else:
        table = load_german(root / "german.data", test_fraction, data_seed)
    train, test = table.train(), table.test()
    pre = fit_preprocessor(train, include_sensitive)
    Xtr, ytr, str_ = apply_preprocessor(pre, train)
    Xte, yte, ste = apply_preprocessor(pre, test)
    return DomainData(Xtr, ytr, str_, Xte, yte, ste, n_domains=2)


def load_domain_data(cfg):
    d = cfg["dataset"]
    return _load_cached(d["name"], d["n"], d["n_test"], d["k"], d["data_seed"], d["data_dir"],
                        d["include_sensitive"], d["test_fraction"])


# ---------------------------------------------------------------- runs

def _fmt_lambda(lam):
    return format(float(lam), "g")


def run_id_for(cfg):
    p = cfg["penalty"]
    return f"{cfg['dataset']['name']}_{p['kind']}_{p['distance']}_lam{_fmt_lambda(p['lambda'])}_seed{cfg['train']['seed']}"


def run_cell(cfg, master_seed=0, data=None):
    """Train and evaluate one configuration. Failures are captured in the record."""
    record = RunRecord(run_id=run_id_for(cfg), config=cfg, master_seed=master_seed)
    start = time.perf_counter()
    try:
        data = load_domain_data(cfg) if data is None else data
        tcfg = TrainConfig.from_config(cfg, data.X_train.shape[1], master_seed)
        encoder, _, history = train_encoder(tcfg, data)
        report = evaluate_frozen(encoder, data, DiscriminatorProtocol.from_config(cfg),
                                 seed=substream_seed(tcfg, "evaluation"))
        if tcfg.penalty is not None:
            report.flags["nonfinite_penalties"] = tcfg.penalty.nonfinite
            report.flags["guard_skips"] = tcfg.penalty.guard_skips
            record.dist_evals = tcfg.penalty.distance.evaluations
        report.flags["steps"] = sum(h["steps"] for h in history)
        record.report = report
        record.history = history
    except Exception as exc:  # a failing cell must not abort a sweep
        record.status = "failed"
        record.error = f"{type(exc).__name__}: {exc}"
    record.wall_secs = time.perf_counter() - start
    return record


def sweep_cells(cfg):
    s = cfg["sweep"]
    cells = []
    for kind, dist, lam, seed in itertools.product(s["penalties"], s["distances"], s["lambdas"], s["seeds"]):
        c = config_mod.from_mapping(cfg)
        c["penalty"]["kind"] = kind
        c["penalty"]["distance"] = dist
        c["penalty"]["lambda"] = float(lam)
        c["train"]["seed"] = int(seed)
        cells.append(c)
    return cells


def _run_and_persist(args):
    cfg, master_seed, results_dir = args
    record = run_cell(cfg, master_seed)
    if results_dir is not None:
        persist_run(record, results_dir)
    return record


def check_writable(results_dir):
    path = Path(results_dir)
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"results directory {path} is not writable: {exc}") from None


def run_sweep(cfg, master_seed=0, results_dir=None, threads=1):
    """Run every (penalty, distance, lambda, seed) cell of ``cfg['sweep']``.

    Cells are independent and may run in parallel processes. Each finished
    cell is written to its own subdirectory; the aggregate CSV is rebuilt at
    the end.
    """
    cells = sweep_cells(cfg)
    if not cells:
        raise InputError("empty sweep grid")
    if results_dir is not None:
        check_writable(results_dir)
    jobs = [(c, master_seed, results_dir) for c in cells]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(_run_and_persist, jobs))
    else:
        records = [_run_and_persist(j) for j in jobs]
    if results_dir is not None:
        rebuild_results_csv(results_dir)
    return records


# ---------------------------------------------------------------- persistence

def record_metrics(record):
    cfg = record.config
    rep = record.report
    m = {
        "run_id": record.run_id,
        "dataset": cfg["dataset"]["name"],
        "penalty": cfg["penalty"]["kind"],
        "distance": cfg["penalty"]["distance"],
        "lambda": _fmt_lambda(cfg["penalty"]["lambda"]),
        "seed": cfg["train"]["seed"],
        "master_seed": record.master_seed,
        "status": record.status,
        "dist_evals": record.dist_evals,
        "wall_secs": f"{record.wall_secs:.3f}",
    }
    if rep is not None:
        m.update({
            "target_acc": repr(rep.target_acc),
            "adversary_acc": repr(rep.adversary_acc),
            "best_epoch_target": rep.best_epoch_target,
            "best_epoch_adv": rep.best_epoch_adv,
            "final_target_acc": repr(rep.final_target_acc),
            "final_adv_acc": repr(rep.final_adv_acc),
        })
        m.update({f"flag_{k}": v for k, v in sorted(rep.flags.items())})
    if record.error:
        m["error"] = record.error.replace("\n", " ")
    return m


def persist_run(record, results_dir):
    """Write ``<results_dir>/<run_id>/{config.ini, metrics.txt, curves.csv}``."""
    run_dir = Path(results_dir) / record.run_id
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.ini").write_text(config_mod.dumps(record.config))
    metrics = record_metrics(record)
    (run_dir / "metrics.txt").write_text("".join(f"{k} = {v}\n" for k, v in metrics.items()))
    rep = record.report
    target = rep.target_curve if rep else []
    adv = rep.adversary_curve if rep else []
    n = max(len(record.history), len(target), len(adv))
    with open(run_dir / "curves.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "encoder_loss", "encoder_ce", "encoder_penalty", "target_test_acc", "adversary_test_acc"])
        for i in range(n):
            h = record.history[i] if i < len(record.history) else None
            w.writerow([
                i + 1,
                repr(h["loss"]) if h else "",
                repr(h["ce"]) if h else "",
                repr(h["penalty"]) if h else "",
                repr(target[i]) if i < len(target) else "",
                repr(adv[i]) if i < len(adv) else "",
            ])
    return run_dir


def read_metrics(path):
    out = {}
    for line in Path(path).read_text().splitlines():
        if " = " in line:
            k, v = line.split(" = ", 1)
            out[k] = v
    return out


def load_run_config(run_dir):
    return config_mod.load(Path(run_dir) / "config.ini")


def collect_runs(results_dir):
    root = Path(results_dir)
    if not root.is_dir():
        raise InputError(f"results directory {root} does not exist")
    runs = [read_metrics(p / "metrics.txt") for p in sorted(root.iterdir()) if (p / "metrics.txt").is_file()]
    return runs


def rebuild_results_csv(results_dir):
    """Regenerate ``results.csv`` from the per-run subdirectories."""
    runs = collect_runs(results_dir)
    path = Path(results_dir) / "results.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULTS_COLUMNS)
        for m in runs:
            w.writerow([m.get(c, "") for c in RESULTS_COLUMNS])
    return path


def default_threads():
    return max(1, min(4, os.cpu_count() or 1))


def report_as_dict(report):
    return asdict(report)
