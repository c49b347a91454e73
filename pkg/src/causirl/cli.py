"""Command-line entry point: ``causirl <subcommand> [options]``.

Subcommands: fetch, gen-scm, train, sweep, report. The global options
--config, --seed, --out and --threads may be given before or after the
subcommand. Errors print one line ``error: <kind>: <message>`` on stderr and
exit with status 1; usage errors exit with status 2.
"""
import argparse
import hashlib
import shutil
import sys
import urllib.request
from pathlib import Path

from . import __version__
from . import config as config_mod
from . import harness, report, scm
from .errors import CausirlError, InputError, IntegrityError
from .tabular import default_data_dir

UCI_BASE = "https://archive.ics.uci.edu/ml/machine-learning-databases"
UCI_FILES = {
    "adult.data": (f"{UCI_BASE}/adult/adult.data",
                   "5b00264637dbfec36bdeaab5676b0b309ff9eb788d63554ca0a249491c86603d"),
    "adult.test": (f"{UCI_BASE}/adult/adult.test",
                   "a2a9044bc167a35b2361efbabec64e89d69ce82d9790d2980119aac5fd7e9c05"),
    "german.data": (f"{UCI_BASE}/statlog/german/german.data",
                    "b21f3d81db8071257d5ff1deaeba1fd4303b62712e6fcc9715c7a86202cb5871"),
}


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _global_options(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    g = parser.add_argument_group("global options")
    g.add_argument("--config", metavar="PATH", default=default, help="run configuration file (INI)")
    g.add_argument("--seed", type=int, metavar="N", default=default,
                   help="master seed (train, sweep) or sampling seed (gen-scm)")
    g.add_argument("--out", metavar="DIR", default=default, help="output directory")
    g.add_argument("--threads", type=int, metavar="N", default=default, help="parallel sweep cells")


def build_parser():
    parser = argparse.ArgumentParser(prog="causirl", description="Invariant representation learning experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_options(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        _global_options(p, suppress=True)
        return p

    p = add("fetch", "download the UCI Adult and German files and verify their checksums")
    p.add_argument("--source", metavar="DIR", help="copy the files from a local directory instead of downloading")

    p = add("gen-scm", "sample the synthetic SCM and write train/test CSV files")
    p.add_argument("--n", type=int, default=1000, help="number of samples (default 1000)")
    p.add_argument("--test", type=int, default=200, help="held-out test samples (default 200)")
    p.add_argument("--k", type=int, default=2, help="number of domains (default 2)")

    add("train", "train and evaluate the single configuration in --config")
    add("sweep", "run the [sweep] grid of --config")

    p = add("report", "summarize a results directory")
    p.add_argument("results", nargs="?", help="results directory (default: --out or results/)")
    p.add_argument("--format", choices=("csv", "markdown"), default="markdown")

    add("config", "print every configuration key with its type and default")
    return parser


def _load_config(args):
    if args.config is None:
        return config_mod.defaults()
    return config_mod.load(args.config)


def cmd_fetch(args):
    out = Path(args.out) if args.out else default_data_dir()
    out.mkdir(parents=True, exist_ok=True)
    for name, (url, digest) in UCI_FILES.items():
        target = out / name
        if target.exists() and sha256(target) == digest:
            print(f"{name}: ok (already present)")
            continue
        tmp = target.with_name(name + ".part")
        if args.source:
            src = Path(args.source) / name
            if not src.is_file():
                raise InputError(f"{src} not found")
            shutil.copyfile(src, tmp)
        else:
            with urllib.request.urlopen(url, timeout=60) as resp, open(tmp, "wb") as fh:
                shutil.copyfileobj(resp, fh)
        got = sha256(tmp)
        if got != digest:
            tmp.unlink()
            raise IntegrityError(f"{name}: sha256 {got} does not match {digest}")
        tmp.replace(target)
        print(f"{name}: ok")
    return 0


def cmd_gen_scm(args):
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else 0
    samples = scm.sample_scm_multi(args.n, args.k, seed)
    ds = scm.train_test_split(samples, args.test, seed)
    scm.write_csv(ds.train, out / "train.csv")
    scm.write_csv(ds.test, out / "test.csv")
    print(f"wrote {out / 'train.csv'} ({len(ds.train)} rows) and {out / 'test.csv'} ({len(ds.test)} rows)")
    return 0


def _results_dir(args):
    return Path(args.out or "results")


def cmd_train(args):
    cfg = _load_config(args)
    results = _results_dir(args)
    harness.check_writable(results)
    record = harness.run_cell(cfg, master_seed=args.seed or 0)
    harness.persist_run(record, results)
    harness.rebuild_results_csv(results)
    if record.status != "ok":
        raise CausirlError(f"run {record.run_id} failed: {record.error}")
    rep = record.report
    print(f"{record.run_id}: target_acc={rep.target_acc:.4f} adversary_acc={rep.adversary_acc:.4f} "
          f"(final {rep.final_target_acc:.4f}/{rep.final_adv_acc:.4f}) in {record.wall_secs:.1f}s")
    return 0


def cmd_sweep(args):
    cfg = _load_config(args)
    results = _results_dir(args)
    threads = args.threads if args.threads is not None else 1
    records = harness.run_sweep(cfg, master_seed=args.seed or 0, results_dir=results, threads=threads)
    failed = [r for r in records if r.status != "ok"]
    print(f"{len(records)} runs ({len(failed)} failed); results in {results / 'results.csv'}")
    for r in failed:
        print(f"failed: {r.run_id}: {r.error}", file=sys.stderr)
    return 0


def cmd_report(args):
    results = Path(args.results) if args.results else _results_dir(args)
    sys.stdout.write(report.emit_report(results, args.format))
    return 0


def cmd_config(args):
    if args.config:
        sys.stdout.write(config_mod.dumps(_load_config(args)))
    else:
        print(config_mod.describe())
    return 0


COMMANDS = {
    "fetch": cmd_fetch,
    "gen-scm": cmd_gen_scm,
    "train": cmd_train,
    "sweep": cmd_sweep,
    "report": cmd_report,
    "config": cmd_config,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except CausirlError as exc:
        print(f"error: {exc.kind}: {exc}", file=sys.stderr)
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
