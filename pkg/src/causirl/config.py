"""Sectioned key-value run configuration (INI syntax).

Every key, its type and its default are listed in ``SCHEMA``; unknown
sections or keys are rejected. A parsed config is a plain dict of dicts
holding typed values, which is also what gets snapshotted next to each run.
"""
import configparser
import copy
import io

from .distances import DEFAULT_GAMMAS
from .errors import ConfigurationError


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _list(conv):
    def parse(text):
        if isinstance(text, (list, tuple)):
            return [conv(x) for x in text]
        return [conv(x.strip()) for x in str(text).split(",") if x.strip()]

    return parse


TYPES = {
    "str": str,
    "int": int,
    "float": float,
    "bool": _bool,
    "int list": _list(int),
    "float list": _list(float),
    "str list": _list(str),
}

# section -> key -> (type, default, description)
SCHEMA = {
    "dataset": {
        "name": ("str", "synthetic", "synthetic | scm_multi | adult | german"),
        "n": ("int", 1000, "samples drawn from the SCM (synthetic, scm_multi)"),
        "n_test": ("int", 200, "SCM samples held out for testing"),
        "k": ("int", 2, "number of domains for scm_multi"),
        "data_seed": ("int", 0, "seed for SCM sampling and the German train/test split"),
        "data_dir": ("str", "", "directory with the UCI files; empty means $CAUSIRL_DATA_DIR or data/uci"),
        "include_sensitive": ("bool", True, "keep the sensitive column's block in the input features"),
        "test_fraction": ("float", 0.2, "German test share (stratified by target)"),
    },
    "model": {
        "encoder_hidden": ("int list", [10], "hidden layer widths of the encoder"),
        "latent": ("int", 5, "representation size"),
        "batchnorm": ("bool", True, "batchnorm after each hidden dense layer of the encoder"),
        "head_hidden": ("int list", [], "hidden widths of the classifier head trained with the encoder"),
    },
    "penalty": {
        "kind": ("str", "causirl", "causirl | pairwise | none"),
        "distance": ("str", "mmd", "mmd | coral"),
        "gammas": ("float list", list(DEFAULT_GAMMAS), "Gaussian kernel bandwidths for mmd"),
        "lambda": ("float", 0.0, "penalty weight"),
    },
    "train": {
        "epochs": ("int", 200, "encoder epochs (one epoch = one pass over the smallest domain)"),
        "batch_size": ("int", 64, "rows drawn from each domain per step"),
        "lr": ("float", 1e-3, "Adam learning rate"),
        "weight_decay": ("float", 5e-5, "L2 weight decay added to the gradient"),
        "seed": ("int", 0, "run seed (init, batching, mixture cuts, discriminators)"),
        "per_domain_forward": ("bool", True, "forward each domain batch separately (per-domain batchnorm statistics)"),
    },
    "eval": {
        "hidden": ("int list", [], "discriminator hidden widths; empty means linear"),
        "target_epochs": ("int", 100, "epochs for the target discriminator"),
        "adversary_epochs": ("int", 100, "epochs for the adversary"),
        "batch_size": ("int", 64, "discriminator batch size"),
        "lr": ("float", 1e-3, "discriminator learning rate"),
        "weight_decay": ("float", 1e-3, "discriminator weight decay"),
        "schedule": ("str", "cosine", "constant | cosine (annealed over each discriminator's epochs)"),
    },
    "sweep": {
        "lambdas": ("float list", [0.0, 0.1, 0.5, 1.0, 5.0, 10.0], "penalty weights to sweep"),
        "seeds": ("int list", [0, 1, 2], "run seeds per cell"),
        "penalties": ("str list", ["causirl"], "penalty kinds to sweep"),
        "distances": ("str list", ["mmd"], "distances to sweep"),
    },
}

CHOICES = {
    ("dataset", "name"): {"synthetic", "scm_multi", "adult", "german"},
    ("penalty", "kind"): {"causirl", "pairwise", "none"},
    ("penalty", "distance"): {"mmd", "coral"},
    ("eval", "schedule"): {"constant", "cosine"},
}


def defaults():
    return {sec: {k: copy.deepcopy(spec[1]) for k, spec in keys.items()} for sec, keys in SCHEMA.items()}


def _validate(cfg):
    for (sec, key), allowed in CHOICES.items():
        if cfg[sec][key] not in allowed:
            raise ConfigurationError(f"[{sec}] {key} = {cfg[sec][key]!r}; expected one of {sorted(allowed)}")
    for p in cfg["sweep"]["penalties"]:
        if p not in CHOICES[("penalty", "kind")]:
            raise ConfigurationError(f"[sweep] penalties: unknown penalty {p!r}")
    for d in cfg["sweep"]["distances"]:
        if d not in CHOICES[("penalty", "distance")]:
            raise ConfigurationError(f"[sweep] distances: unknown distance {d!r}")
    if cfg["train"]["epochs"] < 1:
        raise ConfigurationError("[train] epochs must be >= 1")
    if cfg["train"]["batch_size"] < 2:
        raise ConfigurationError("[train] batch_size must be >= 2")
    if cfg["penalty"]["lambda"] < 0:
        raise ConfigurationError("[penalty] lambda must be >= 0")
    return cfg


def from_mapping(mapping):
    """Default-fill and type-convert a ``{section: {key: value}}`` mapping."""
    cfg = defaults()
    for sec, keys in mapping.items():
        if sec not in SCHEMA:
            raise ConfigurationError(f"unknown section [{sec}]")
        for key, raw in keys.items():
            if key not in SCHEMA[sec]:
                raise ConfigurationError(f"unknown key {key!r} in [{sec}]")
            typ = SCHEMA[sec][key][0]
            try:
                cfg[sec][key] = TYPES[typ](raw)
            except (TypeError, ValueError) as exc:
                raise ConfigurationError(f"[{sec}] {key}: expected {typ}: {exc}") from None
    return _validate(cfg)


def loads(text):
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(str(exc).splitlines()[0]) from None
    return from_mapping({sec: dict(parser[sec]) for sec in parser.sections()})


def load(path):
    with open(path) as fh:
        return loads(fh.read())


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return ", ".join(_fmt(v) for v in value)
    return str(value)


def dumps(cfg):
    out = io.StringIO()
    for sec in SCHEMA:
        out.write(f"[{sec}]\n")
        for key in SCHEMA[sec]:
            out.write(f"{key} = {_fmt(cfg[sec][key])}\n")
        out.write("\n")
    return out.getvalue()


def describe():
    """Human-readable listing of every key with its type and default."""
    lines = []
    for sec, keys in SCHEMA.items():
        lines.append(f"[{sec}]")
        for key, (typ, default, doc) in keys.items():
            lines.append(f"  {key} ({typ}, default {_fmt(default) or '<empty>'}): {doc}")
    return "\n".join(lines)
