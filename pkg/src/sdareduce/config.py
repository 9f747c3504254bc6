"""Flat namespaced key-value run configuration.

Config files are UTF-8 text with one ``section.key = value`` per line;
``#`` starts a comment. Lists are comma separated. Precedence, lowest
first: built-in defaults, config file, ``--set key=value``, dedicated
command-line flags.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Optional


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _list(item: Callable) -> Callable:
    def parse(text: str) -> list:
        text = text.strip().strip("[]")
        return [item(p.strip()) for p in text.split(",") if p.strip()]

    return parse


def _opt(parse: Callable) -> Callable:
    def wrapped(text: str):
        return None if text.strip().lower() in ("", "none", "null") else parse(text)

    return wrapped


def _str(text: str) -> str:
    text = text.strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1]
    return text


@dataclass(frozen=True)
class Option:
    parse: Callable[[str], Any]
    default: Any
    help: str


OPTIONS: dict[str, Option] = {
    "run.seed": Option(int, 0, "master seed; all randomness derives from it"),
    "run.out_dir": Option(_str, "out", "directory for reports, CSV data and models"),
    "data.path": Option(_opt(_str), None, "input CSV (header row, comma separated)"),
    "data.id_col": Option(_opt(_str), None, "row identifier column"),
    "data.label_col": Option(_opt(_str), None, "class label column"),
    "data.feature_cols": Option(_opt(_list(str)), None, "feature columns (default: all remaining)"),
    "data.drop_constant": Option(_bool, False, "drop constant columns instead of failing"),
    "data.scaler_data": Option(_opt(_str), None, "CSV to fit the standardizer on (default: the input data)"),
    "synthetic.n_per_class": Option(int, 500, "rows per class"),
    "synthetic.n_classes": Option(int, 3, "number of classes"),
    "synthetic.latent_dim": Option(int, 5, "latent dimension"),
    "synthetic.ambient_dim": Option(int, 916, "feature dimension"),
    "synthetic.noise_std": Option(float, 0.1, "isotropic feature noise"),
    "synthetic.class_separation": Option(float, 7.0, "distance between latent class centres"),
    "synthetic.hidden_width": Option(int, 16, "width of the nonlinear map"),
    "synthetic.warp": Option(float, 4.0, "gain of the nonlinear map"),
    "train.hidden_dims": Option(_list(int), [700, 500, 10], "hidden layer sizes"),
    "train.base_learning_rate": Option(float, 0.01, "Adagrad base learning rate"),
    "train.momentum": Option(float, 0.0, "momentum coefficient"),
    "train.weight_decay": Option(float, 0.0, "L2 weight decay"),
    "train.corruption_rate": Option(float, 0.1, "masking noise rate"),
    "train.batch_size": Option(int, 100, "mini-batch size"),
    "train.epochs": Option(int, 50, "epochs per layer"),
    "train.adagrad_epsilon": Option(float, 1e-8, "Adagrad denominator guard"),
    "model.path": Option(_opt(_str), None, "model file (default: <out_dir>/model.sda)"),
    "evaluate.reducers": Option(_list(str), ["sda", "pca", "kpca"], "reducers to compare: sda, pca, kpca"),
    "evaluate.dims": Option(_list(int), [10], "target dimensions"),
    "evaluate.sda_hidden": Option(_list(int), [700, 500], "SdA layers below the bottleneck when training per dimension"),
    "evaluate.sda_learning_rate": Option(float, 0.05, "Adagrad base learning rate for SdA models trained by evaluate"),
    "evaluate.kernel": Option(str, "rbf", "kernel PCA kernel: rbf or linear"),
    "evaluate.gamma": Option(_opt(float), None, "rbf gamma (default 1/d)"),
    "evaluate.kpca_cap": Option(int, 5000, "maximum kernel PCA training points"),
    "evaluate.kpca_subsample": Option(_bool, False, "subsample above the cap instead of failing"),
    "evaluate.n_pairs": Option(int, 10_000, "sampled pairs per distance group"),
    "evaluate.repeats": Option(int, 5, "protocol repetitions"),
    "evaluate.restarts": Option(int, 10, "random EM restarts per repetition"),
    "evaluate.restart_iters": Option(int, 10, "EM iterations per restart"),
    "grid.layer1": Option(_str, "700:1000:100", "first layer range start:stop:step"),
    "grid.layer2": Option(_str, "500:900:100", "second layer range"),
    "grid.layer3": Option(_str, "100:400:100", "third layer range"),
    "grid.layer4": Option(_str, "50:10:10", "final (bottleneck) layer range"),
    "grid.depths": Option(_list(int), [3, 4], "network depths to search"),
    "grid.top_k": Option(int, 5, "models kept in the ranked summary"),
    "grid.parallelism": Option(int, 1, "worker processes (capped by SDA_THREADS)"),
    "grid.validation_fraction": Option(float, 0.2, "held-out fraction for validation loss"),
    "grid.max_points": Option(_opt(int), None, "only run the first N enumerated points"),
    "grid.sweep": Option(_bool, False, "after the architecture search, sweep hyperparameters of the top models"),
    "grid.learning_rates": Option(_list(float), [0.001, 0.01, 0.1], "sweep values for base_learning_rate"),
    "grid.momenta": Option(_list(float), [0.0, 0.5, 0.9], "sweep values for momentum"),
    "grid.noise_rates": Option(_list(float), [0.0, 0.1, 0.2, 0.3], "sweep values for corruption_rate"),
    "grid.weight_decays": Option(_list(float), [0.0, 1e-4, 1e-3], "sweep values for weight_decay"),
}


def defaults() -> dict[str, Any]:
    return {k: (list(o.default) if isinstance(o.default, list) else o.default) for k, o in OPTIONS.items()}


def parse_value(key: str, text: str) -> Any:
    if key not in OPTIONS:
        raise ConfigError(f"unknown config key {key!r}")
    try:
        return OPTIONS[key].parse(text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from None


def read_config_file(path) -> dict[str, Any]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    out = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        try:
            out[key] = parse_value(key, value)
        except ConfigError as exc:
            raise ConfigError(f"{path}:{n}: {exc}") from None
    return out


def resolve(config_path: Optional[str] = None, assignments=(), overrides: Optional[dict] = None) -> dict[str, Any]:
    """Merge defaults, config file, ``key=value`` assignments and flag overrides."""
    cfg = defaults()
    if config_path:
        cfg.update(read_config_file(config_path))
    for item in assignments:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        cfg[key.strip()] = parse_value(key.strip(), value)
    for key, value in (overrides or {}).items():
        if key not in OPTIONS:
            raise ConfigError(f"unknown config key {key!r}")
        if value is not None:
            cfg[key] = value
    return cfg


def section(cfg: dict, name: str) -> dict:
    prefix = name + "."
    return {k[len(prefix):]: v for k, v in cfg.items() if k.startswith(prefix)}
