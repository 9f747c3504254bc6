"""Command-line entry point: ``sdareduce <command> [options]``.

Commands: ingest, train, encode, evaluate, distances, gridsearch, report.
Every command writes its outputs under ``--out-dir`` and embeds the fully
resolved configuration and package version in its JSON reports.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import KernelSpec
from .config import OPTIONS, ConfigError, resolve, section
from .data import (
    DataError,
    LabeledDataset,
    apply_standardizer,
    fit_standardizer,
    load_csv,
    synthetic_manifold,
    train_validation_split,
    write_csv,
)
from .distances import sample_distances, write_distance_csv
from .evaluation import ReducerOptions, evaluate
from .grid_search import (
    GRID_ASSUMPTIONS,
    GridPoint,
    GridSpec,
    LayerRange,
    enumerate_architectures,
    hyperparameter_sweep,
    run_search,
    select_top_k,
)
from .optimizer import TrainingConfig
from .stack import Architecture, encode, load_model, pretrain_stack, save_model, stack_reconstruction_loss

log = logging.getLogger("sdareduce")


class CliError(Exception):
    pass


# --- helpers ----------------------------------------------------------------

def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _report(cfg: dict, command: str, **body) -> dict:
    return {"command": command, "artifact_version": __version__, "config": cfg, **body}


def _out_dir(cfg) -> Path:
    out = Path(cfg["run.out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_data(cfg, require_labels: bool = False) -> LabeledDataset:
    if not cfg["data.path"]:
        raise CliError("no input data: pass --data or set data.path")
    ds = load_csv(cfg["data.path"], cfg["data.id_col"], cfg["data.label_col"], cfg["data.feature_cols"])
    if require_labels and ds.labels is None:
        raise CliError(f"{cfg['data.path']}: this command needs labelled data; set --label-col")
    return ds


def _standardizer(cfg, ds: LabeledDataset):
    source = ds
    if cfg["data.scaler_data"]:
        source = load_csv(cfg["data.scaler_data"], cfg["data.id_col"], cfg["data.label_col"], cfg["data.feature_cols"])
    return fit_standardizer(source.features, drop_constant=cfg["data.drop_constant"], names=source.feature_names)


def _training_config(cfg) -> TrainingConfig:
    t = section(cfg, "train")
    t.pop("hidden_dims")
    return TrainingConfig(seed=cfg["run.seed"], **t)


def _grid_spec(cfg) -> GridSpec:
    return GridSpec(
        layer_ranges=tuple(LayerRange.parse(cfg[f"grid.layer{i}"]) for i in range(1, 5)),
        depths=tuple(cfg["grid.depths"]),
        hyperparameters={
            "learning_rate": cfg["grid.learning_rates"],
            "momentum": cfg["grid.momenta"],
            "noise_rate": cfg["grid.noise_rates"],
            "weight_decay": cfg["grid.weight_decays"],
        },
    )


def _model_path(cfg) -> Path:
    return Path(cfg["model.path"]) if cfg["model.path"] else Path(cfg["run.out_dir"]) / "model.sda"


# --- commands ----------------------------------------------------------------

def cmd_ingest(cfg, args) -> int:
    out = _out_dir(cfg)
    if args.synthetic:
        s = section(cfg, "synthetic")
        ds = synthetic_manifold(cfg["run.seed"], **s)
        ds = LabeledDataset(ds.features, ds.labels, ds.class_names, [f"cell{i}" for i in range(ds.n_samples)])
        data_path = out / "synthetic.csv"
        write_csv(ds, data_path)
    else:
        ds = _load_data(cfg)
        data_path = Path(cfg["data.path"])
    params = _standardizer(cfg, ds)
    summary = {
        "data": str(data_path),
        "n_samples": ds.n_samples,
        "n_features": ds.n_features,
        "n_classes": ds.n_classes,
        "class_names": ds.class_names,
        "class_counts": None if ds.labels is None else np.bincount(ds.labels, minlength=ds.n_classes).tolist(),
        "dropped_columns": [] if params.kept_columns is None else sorted(set(range(ds.n_features)) - set(params.kept_columns.tolist())),
    }
    _write_json(out / "standardizer.json", params.to_dict())
    _write_json(out / "ingest_report.json", _report(cfg, "ingest", **summary))
    print(f"{ds.n_samples} rows x {ds.n_features} features, {ds.n_classes} classes -> {out}")
    return 0


def cmd_train(cfg, args) -> int:
    out = _out_dir(cfg)
    ds = _load_data(cfg)
    params = _standardizer(cfg, ds)
    X = apply_standardizer(ds.features, params)
    arch = Architecture(X.shape[1], tuple(cfg["train.hidden_dims"]))
    tcfg = _training_config(cfg)
    model = pretrain_stack(X, arch, tcfg, params)
    path = _model_path(cfg)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, path)
    layers = [
        {"layer": rec["layer"], "dims": [rec["input_dim"], rec["hidden_dim"]], "epoch_losses": rec["epoch_losses"], "min_loss": rec["min_loss"]}
        for rec in model.training_log
    ]
    _write_json(
        out / "train_report.json",
        _report(cfg, "train", model=str(path), architecture=str(arch), layers=layers,
                reconstruction_loss=stack_reconstruction_loss(model, X)),
    )
    print(f"trained {arch} -> {path}")
    for rec in layers:
        print(f"  layer {rec['layer']} {rec['dims'][0]}->{rec['dims'][1]}: min loss {rec['min_loss']:.6g}")
    return 0


def cmd_encode(cfg, args) -> int:
    out = _out_dir(cfg)
    model = load_model(_model_path(cfg))
    ds = _load_data(cfg)
    E = encode(model, ds.features)
    emb = LabeledDataset(E, ds.labels, ds.class_names, ds.row_ids, [f"z{j + 1}" for j in range(E.shape[1])])
    path = out / "embedding.csv"
    write_csv(emb, path)
    print(f"encoded {ds.n_samples} rows to {E.shape[1]} dims -> {path}")
    return 0


def cmd_evaluate(cfg, args) -> int:
    out = _out_dir(cfg)
    ds = _load_data(cfg, require_labels=True)
    params = _standardizer(cfg, ds)
    X = apply_standardizer(ds.features, params)
    model = load_model(cfg["model.path"]) if cfg["model.path"] else None
    options = ReducerOptions(
        sda_hidden=tuple(cfg["evaluate.sda_hidden"]),
        train=_training_config(cfg).replace(base_learning_rate=cfg["evaluate.sda_learning_rate"]),
        kernel=KernelSpec(cfg["evaluate.kernel"], cfg["evaluate.gamma"]),
        kpca_cap=cfg["evaluate.kpca_cap"],
        kpca_subsample=cfg["evaluate.kpca_subsample"],
        model=model,
    )
    scores = evaluate(
        X, ds.labels, cfg["evaluate.reducers"], cfg["evaluate.dims"], options, seed=cfg["run.seed"],
        n_pairs=cfg["evaluate.n_pairs"], repeats=cfg["evaluate.repeats"], restarts=cfg["evaluate.restarts"],
        restart_iters=cfg["evaluate.restart_iters"],
    )
    with (out / "homogeneity.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["reducer", "dims", "homogeneity_mean", "homogeneity_std"])
        for s in scores:
            w.writerow([s.reducer, s.dims, repr(s.protocol.mean), repr(s.protocol.std)])
    results = []
    for s in scores:
        dist_path = out / f"distances_{s.reducer}_{s.dims}.csv"
        write_distance_csv(s.distances, dist_path, ds.class_names)
        results.append(
            {
                "reducer": s.reducer,
                "dims": s.dims,
                "protocol": s.protocol.to_dict(),
                "distances": s.distances.to_dict(ds.class_names),
                "separation_ratio": s.separation,
                "distance_csv": dist_path.name,
            }
        )
    assumptions = []
    if "kpca" in cfg["evaluate.reducers"]:
        assumptions.append(f"kernel PCA uses kernel={cfg['evaluate.kernel']}, gamma={cfg['evaluate.gamma'] or '1/d'}; the comparator's kernel settings are not known")
    _write_json(out / "evaluation.json", _report(cfg, "evaluate", results=results, assumptions=assumptions))
    print(f"{'reducer':8s} {'dims':>5s} {'homogeneity':>18s} {'sep. ratio':>10s}")
    for s in scores:
        sep = f"{s.separation:.3f}" if s.separation is not None else "n/a"
        print(f"{s.reducer:8s} {s.dims:5d} {s.protocol.mean:9.4f} +- {s.protocol.std:.4f} {sep:>10s}")
    return 0


def cmd_distances(cfg, args) -> int:
    out = _out_dir(cfg)
    if cfg["model.path"]:
        ds = _load_data(cfg, require_labels=True)
        E = encode(load_model(cfg["model.path"]), ds.features)
    else:
        ds = _load_data(cfg, require_labels=True)
        E = ds.features
    summary = sample_distances(E, ds.labels, n_pairs=cfg["evaluate.n_pairs"], seed=cfg["run.seed"])
    write_distance_csv(summary, out / "distances.csv", ds.class_names)
    _write_json(out / "distances.json", _report(cfg, "distances", summary=summary.to_dict(ds.class_names)))
    d = summary.to_dict(ds.class_names)
    print(f"intra mean {summary.intra_mean:.4f}, inter mean {summary.inter_mean:.4f}, "
          f"separation ratio {d.get('separation_ratio', float('nan')):.4f}")
    return 0


def cmd_gridsearch(cfg, args) -> int:
    out = _out_dir(cfg)
    ds = _load_data(cfg)
    train_idx, val_idx = train_validation_split(ds.n_samples, cfg["grid.validation_fraction"], cfg["run.seed"])
    params = fit_standardizer(ds.features[train_idx], drop_constant=cfg["data.drop_constant"], names=ds.feature_names)
    X = apply_standardizer(ds.features[train_idx], params)
    V = apply_standardizer(ds.features[val_idx], params)
    spec = _grid_spec(cfg)
    archs = [a for depth in spec.depths for a in enumerate_architectures(spec, depth, X.shape[1])]
    if cfg["grid.max_points"] is not None:
        archs = archs[: cfg["grid.max_points"]]
    base = _training_config(cfg)
    ledger = run_search(X, V, [GridPoint(a) for a in archs], base, cfg["grid.parallelism"], out / "ledger.jsonl")
    top = select_top_k(ledger, cfg["grid.top_k"])
    meta = {"assumptions": GRID_ASSUMPTIONS, "n_points": len(archs), "grid": {k: str(v) for k, v in section(cfg, "grid").items()}}
    _write_json(out / "ledger.meta.json", meta)
    summary = {
        "n_points": len(ledger.entries),
        "n_done": len(ledger.completed()),
        "n_failed": sum(e.status == "failed" for e in ledger.entries),
        "top": [e.to_dict() for e in top],
        "assumptions": GRID_ASSUMPTIONS,
    }
    if cfg["grid.sweep"]:
        sweeps = []
        for rank, e in enumerate(top):
            arch = Architecture(e.architecture[0], tuple(e.architecture[1:]))
            sweep = hyperparameter_sweep(arch, spec.hyperparameters, X, V, base, cfg["grid.parallelism"],
                                         out / f"sweep_{rank}.jsonl")
            best = select_top_k(sweep, 1)[0]
            sweeps.append({"architecture": e.architecture, "best": best.to_dict(), "ledger": f"sweep_{rank}.jsonl"})
        summary["sweeps"] = sweeps
    _write_json(out / "top_k.json", _report(cfg, "gridsearch", **summary))
    print(f"{summary['n_done']} of {summary['n_points']} points done, {summary['n_failed']} failed")
    for i, e in enumerate(top, 1):
        print(f"  {i}. {'-'.join(map(str, e.architecture))}  validation loss {e.validation_loss:.6g}")
    if summary["n_failed"]:
        print(f"sdareduce gridsearch: {summary['n_failed']} point(s) failed; see {out / 'ledger.jsonl'}", file=sys.stderr)
        return 1
    return 0


def cmd_report(cfg, args) -> int:
    out = Path(cfg["run.out_dir"])
    lines = [f"# sdareduce report ({out})", ""]
    found = False
    ev = out / "evaluation.json"
    if ev.exists():
        found = True
        data = json.loads(ev.read_text(encoding="utf-8"))
        lines += ["## Clustering homogeneity and distance separation", "",
                  "| reducer | dims | homogeneity mean | homogeneity std | separation ratio |", "|---|---|---|---|---|"]
        for r in data["results"]:
            sep = r["separation_ratio"]
            lines.append(f"| {r['reducer']} | {r['dims']} | {r['protocol']['mean']:.4f} | {r['protocol']['std']:.4f} | "
                         f"{'n/a' if sep is None else f'{sep:.3f}'} |")
        for a in data.get("assumptions", []):
            lines.append(f"\nNote: {a}")
        lines.append("")
    tk = out / "top_k.json"
    if tk.exists():
        found = True
        data = json.loads(tk.read_text(encoding="utf-8"))
        lines += ["## Architecture search", "", f"{data['n_done']} of {data['n_points']} points done, {data['n_failed']} failed.", "",
                  "| rank | architecture | validation loss | per-layer min error |", "|---|---|---|---|"]
        for i, e in enumerate(data["top"], 1):
            errs = ", ".join(f"{v:.4g}" for v in e["layer_min_errors"])
            lines.append(f"| {i} | {'-'.join(map(str, e['architecture']))} | {e['validation_loss']:.6g} | {errs} |")
        lines.append("")
    tr = out / "train_report.json"
    if tr.exists():
        found = True
        data = json.loads(tr.read_text(encoding="utf-8"))
        lines += ["## Training", "", f"Architecture {data['architecture']}, full-stack reconstruction loss {data['reconstruction_loss']:.6g}.", ""]
        for rec in data["layers"]:
            lines.append(f"- layer {rec['layer']} ({rec['dims'][0]}->{rec['dims'][1]}): min loss {rec['min_loss']:.6g}")
        lines.append("")
    if not found:
        raise CliError(f"nothing to report in {out}: run evaluate, gridsearch or train first")
    text = "\n".join(lines)
    (out / "report.md").write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


COMMANDS = {
    "ingest": (cmd_ingest, "validate a feature table (or generate synthetic data) and fit the standardizer"),
    "train": (cmd_train, "pre-train a stacked de-noising autoencoder and save it"),
    "encode": (cmd_encode, "reduce a feature table with a saved model"),
    "evaluate": (cmd_evaluate, "compare reducers by clustering homogeneity and distance separation"),
    "distances": (cmd_distances, "sampled intra/inter-label distance distributions of an embedding"),
    "gridsearch": (cmd_gridsearch, "architecture (and optional hyperparameter) search"),
    "report": (cmd_report, "summarize the reports in an output directory"),
}


def _csv_ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key-value config file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
    common.add_argument("--seed", type=int)
    common.add_argument("--data", help="input CSV")
    common.add_argument("--id-col")
    common.add_argument("--label-col")
    common.add_argument("--feature-cols", type=lambda s: [c for c in s.split(",") if c])
    common.add_argument("--model", help="model file")
    common.add_argument("--out-dir")
    common.add_argument("--reducer", type=lambda s: [r for r in s.split(",") if r], help="comma list of sda, pca, kpca")
    common.add_argument("--dims", type=_csv_ints, help="comma list of target dimensions")
    common.add_argument("--kernel", choices=("rbf", "linear"))
    common.add_argument("--gamma", type=float)
    common.add_argument("--hidden-dims", type=_csv_ints)
    common.add_argument("--learning-rate", type=float, help="Adagrad base learning rate (most influential setting)")
    common.add_argument("--epochs", type=int)
    common.add_argument("--top-k", type=int)
    common.add_argument("--parallelism", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="sdareduce", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--list-config", action="store_true", help="print every config key with its default")
    sub = parser.add_subparsers(dest="command")
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        if name == "ingest":
            p.add_argument("--synthetic", action="store_true", help="generate a synthetic labelled dataset")
    return parser


def _flag_overrides(args) -> dict:
    lr_key = "evaluate.sda_learning_rate" if args.command == "evaluate" else "train.base_learning_rate"
    return {
        "run.seed": args.seed,
        "run.out_dir": args.out_dir,
        "data.path": args.data,
        "data.id_col": args.id_col,
        "data.label_col": args.label_col,
        "data.feature_cols": args.feature_cols,
        "model.path": args.model,
        "evaluate.reducers": args.reducer,
        "evaluate.dims": args.dims,
        "evaluate.kernel": args.kernel,
        "evaluate.gamma": args.gamma,
        "train.hidden_dims": args.hidden_dims,
        lr_key: args.learning_rate,
        "train.epochs": args.epochs,
        "grid.top_k": args.top_k,
        "grid.parallelism": args.parallelism,
    }


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.list_config:
        for key, opt in OPTIONS.items():
            print(f"{key} = {opt.default!r}  # {opt.help}")
        return 0
    if not args.command:
        parser.print_help()
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args.config, args.set, _flag_overrides(args))
        return COMMANDS[args.command][0](cfg, args)
    except (CliError, ConfigError, DataError, ValueError, OSError, RuntimeError) as exc:
        print(f"sdareduce {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
