"""Architecture and hyperparameter searches over stacked autoencoders.

Every point trains a stack and records per-layer minimum mean
reconstruction error plus the clean full-stack reconstruction loss on a
validation set. Points run in a process pool; each point's seed depends
only on the master seed and its index, so results do not depend on the
degree of parallelism or on completion order.
"""
from __future__ import annotations

import itertools
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .optimizer import TrainingConfig, TrainingDivergedError
from .seeding import derive_seed
from .stack import Architecture, pretrain_stack, stack_reconstruction_loss

log = logging.getLogger(__name__)

# Assumptions baked into the default grid, echoed into ledger metadata.
GRID_ASSUMPTIONS = [
    "final layer range 50..10 read with step 10 ({50,40,30,20,10}); a step of 100 would leave it empty",
    "depth-3 grids use the layer1, layer2 and final ranges",
    "points ranked by clean full-stack validation reconstruction loss",
]

SWEEPABLE = {
    "learning_rate": "base_learning_rate",
    "base_learning_rate": "base_learning_rate",
    "momentum": "momentum",
    "noise_rate": "corruption_rate",
    "corruption_rate": "corruption_rate",
    "weight_decay": "weight_decay",
}


@dataclass(frozen=True)
class LayerRange:
    """Inclusive range walked from ``start`` toward ``stop`` in steps of ``step``."""

    start: int
    stop: int
    step: int

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError(f"range step must be positive, got {self.step}")
        if min(self.start, self.stop) < 1:
            raise ValueError("layer sizes must be positive")

    def values(self) -> list[int]:
        lo, hi = sorted((self.start, self.stop))
        return list(range(lo, hi + 1, self.step))

    @classmethod
    def parse(cls, text: str) -> "LayerRange":
        """``start:stop:step`` or a single size."""
        parts = [int(p) for p in str(text).split(":")]
        if len(parts) == 1:
            return cls(parts[0], parts[0], 1)
        if len(parts) != 3:
            raise ValueError(f"expected start:stop:step, got {text!r}")
        return cls(*parts)

    def __str__(self) -> str:
        return f"{self.start}:{self.stop}:{self.step}"


@dataclass(frozen=True)
class GridSpec:
    layer_ranges: tuple[LayerRange, ...] = (
        LayerRange(700, 1000, 100),
        LayerRange(500, 900, 100),
        LayerRange(100, 400, 100),
        LayerRange(50, 10, 10),
    )
    depths: tuple[int, ...] = (3, 4)
    hyperparameters: dict = field(
        default_factory=lambda: {
            "learning_rate": [0.001, 0.01, 0.1],
            "momentum": [0.0, 0.5, 0.9],
            "noise_rate": [0.0, 0.1, 0.2, 0.3],
            "weight_decay": [0.0, 1e-4, 1e-3],
        }
    )

    def __post_init__(self):
        if not self.layer_ranges:
            raise ValueError("grid needs at least one layer range")
        for d in self.depths:
            if not 1 <= d <= len(self.layer_ranges):
                raise ValueError(f"depth {d} needs at least {d} layer ranges")
        for name, values in self.hyperparameters.items():
            if name not in SWEEPABLE:
                raise ValueError(f"unknown hyperparameter {name!r}")
            if not values:
                raise ValueError(f"empty range for {name}")

    def ranges_for_depth(self, depth: int) -> list[LayerRange]:
        """Leading ``depth - 1`` ranges plus the final (bottleneck) range."""
        if depth not in self.depths:
            raise ValueError(f"unsupported depth {depth}; grid allows {sorted(self.depths)}")
        return [*self.layer_ranges[: depth - 1], self.layer_ranges[-1]]


def enumerate_architectures(spec: GridSpec, depth: int, input_dim: int = 916) -> list[Architecture]:
    """Cartesian product of the layer ranges for ``depth``, in lexicographic order."""
    value_lists = [r.values() for r in spec.ranges_for_depth(depth)]
    return [Architecture(input_dim, dims) for dims in itertools.product(*value_lists)]


@dataclass(frozen=True)
class GridPoint:
    architecture: Architecture
    overrides: tuple[tuple[str, float], ...] = ()
    tags: tuple[str, ...] = ()

    @property
    def key(self) -> str:
        over = ",".join(f"{k}={v!r}" for k, v in self.overrides)
        return f"{self.architecture}|{over}"


@dataclass
class LedgerEntry:
    index: int
    key: str
    architecture: list[int]
    hyperparameters: dict
    status: str = "pending"
    layer_min_errors: Optional[list[float]] = None
    validation_loss: Optional[float] = None
    wall_time: Optional[float] = None
    error: Optional[str] = None
    tags: list[str] = field(default_factory=list)

    @property
    def n_params(self) -> int:
        return Architecture(self.architecture[0], tuple(self.architecture[1:])).n_params

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "key": self.key,
            "architecture": self.architecture,
            "hyperparameters": self.hyperparameters,
            "status": self.status,
            "layer_min_errors": self.layer_min_errors,
            "validation_loss": self.validation_loss,
            "wall_time": self.wall_time,
            "error": self.error,
            "tags": self.tags,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LedgerEntry":
        return cls(**d)

    def canonical(self) -> dict:
        """Entry without timing, for comparing runs."""
        d = self.to_dict()
        d.pop("wall_time")
        return d


@dataclass
class SearchLedger:
    entries: list[LedgerEntry] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def completed(self) -> list[LedgerEntry]:
        return [e for e in self.entries if e.status == "done"]

    def sorted_by_point(self) -> list[LedgerEntry]:
        return sorted(self.entries, key=lambda e: e.index)

    def canonical(self) -> list[dict]:
        return [e.canonical() for e in self.sorted_by_point()]

    def tagged(self, tag: str) -> list[LedgerEntry]:
        return [e for e in self.entries if tag in e.tags]


def read_ledger(path) -> list[LedgerEntry]:
    path = Path(path)
    if not path.exists():
        return []
    entries = []
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                try:
                    entries.append(LedgerEntry.from_dict(json.loads(line)))
                except (json.JSONDecodeError, TypeError):
                    # a torn final line from an interrupted write
                    log.warning("skipping unreadable ledger line in %s", path)
    return entries


def _append(path: Path, entry: LedgerEntry) -> None:
    with path.open("a", encoding="utf-8") as fh:
        fh.write(json.dumps(entry.to_dict(), sort_keys=True) + "\n")
        fh.flush()
        os.fsync(fh.fileno())


# process-pool worker state, set once per worker
_WORKER_DATA: dict = {}


def _init_worker(data, validation):
    _WORKER_DATA["data"] = data
    _WORKER_DATA["validation"] = validation


def _run_point(entry: LedgerEntry, data=None, validation=None) -> LedgerEntry:
    data = _WORKER_DATA["data"] if data is None else data
    validation = _WORKER_DATA["validation"] if validation is None else validation
    arch = Architecture(entry.architecture[0], tuple(entry.architecture[1:]))
    cfg = TrainingConfig.from_dict(entry.hyperparameters)
    start = time.perf_counter()
    try:
        model = pretrain_stack(data, arch, cfg)
        loss = stack_reconstruction_loss(model, validation)
        if not np.isfinite(loss):
            raise TrainingDivergedError(f"non-finite validation loss {loss}", cfg.epochs, 0)
    except (TrainingDivergedError, ValueError, FloatingPointError) as exc:
        entry.status = "failed"
        entry.error = f"{type(exc).__name__}: {exc}"
    else:
        entry.status = "done"
        entry.layer_min_errors = [rec["min_loss"] for rec in model.training_log]
        entry.validation_loss = loss
    entry.wall_time = time.perf_counter() - start
    return entry


def worker_count(parallelism: int) -> int:
    cap = os.environ.get("SDA_THREADS")
    n = max(1, int(parallelism))
    if cap:
        n = min(n, max(1, int(cap)))
    return n


def make_entries(points: Sequence[GridPoint], base_cfg: TrainingConfig, seed_per_point: bool = True) -> list[LedgerEntry]:
    entries = []
    for i, point in enumerate(points):
        cfg = base_cfg.replace(**dict(point.overrides))
        if seed_per_point:
            cfg = cfg.replace(seed=derive_seed(base_cfg.seed, i))
        entries.append(
            LedgerEntry(
                index=i,
                key=point.key,
                architecture=[point.architecture.input_dim, *point.architecture.hidden_dims],
                hyperparameters=cfg.to_dict(),
                tags=list(point.tags),
            )
        )
    return entries


def run_search(
    data,
    validation,
    points: Sequence[GridPoint],
    base_cfg: TrainingConfig,
    parallelism: int = 1,
    ledger_path=None,
    seed_per_point: bool = True,
) -> SearchLedger:
    """Train every point and collect a ledger.

    With ``ledger_path`` each finished entry is appended to a JSON-lines
    file as it completes; entries already in that file (matched by index
    and key) are reused instead of retrained.
    """
    data = np.asarray(data, dtype=np.float64)
    validation = np.asarray(validation, dtype=np.float64)
    entries = make_entries(points, base_cfg, seed_per_point)

    finished: dict[int, LedgerEntry] = {}
    path = Path(ledger_path) if ledger_path is not None else None
    if path is not None:
        by_index = {e.index: e for e in entries}
        for old in read_ledger(path):
            new = by_index.get(old.index)
            if new is not None and old.key == new.key and old.hyperparameters == new.hyperparameters:
                finished[old.index] = old
        if finished:
            log.info("resuming: %d of %d points already in %s", len(finished), len(entries), path)
        path.parent.mkdir(parents=True, exist_ok=True)
        # rewrite so that the file holds only entries belonging to this search
        path.write_text("".join(json.dumps(e.to_dict(), sort_keys=True) + "\n" for e in sorted(finished.values(), key=lambda e: e.index)), encoding="utf-8")

    todo = [e for e in entries if e.index not in finished]
    n_workers = worker_count(parallelism)
    if n_workers == 1 or len(todo) <= 1:
        for entry in todo:
            done = _run_point(entry, data, validation)
            finished[done.index] = done
            if path is not None:
                _append(path, done)
            log.info("point %d %s: %s", done.index, done.key, done.status)
    else:
        with ProcessPoolExecutor(max_workers=n_workers, initializer=_init_worker, initargs=(data, validation)) as pool:
            for done in pool.map(_run_point, todo):
                finished[done.index] = done
                if path is not None:
                    _append(path, done)
                log.info("point %d %s: %s", done.index, done.key, done.status)

    return SearchLedger(
        entries=[finished[e.index] for e in entries],
        metadata={"assumptions": list(GRID_ASSUMPTIONS), "base_config": base_cfg.to_dict(), "n_points": len(entries)},
    )


def select_top_k(ledger: SearchLedger, k: int) -> list[LedgerEntry]:
    """Completed entries by validation loss, then parameter count, then architecture."""
    done = ledger.completed()
    if not done:
        raise ValueError("no completed entries to rank")
    ranked = sorted(done, key=lambda e: (e.validation_loss, e.n_params, tuple(e.architecture)))
    return ranked[: max(0, k)]


def sweep_points(architecture: Architecture, ranges: dict, base_cfg: TrainingConfig) -> list[GridPoint]:
    """One-at-a-time sweeps around ``base_cfg``; identical configs are merged
    into a single point carrying every sweep's tag."""
    points: dict[tuple, GridPoint] = {}
    for name, values in ranges.items():
        if name not in SWEEPABLE:
            raise ValueError(f"unknown hyperparameter {name!r}")
        field_name = SWEEPABLE[name]
        for v in values:
            cfg = base_cfg.replace(**{field_name: v})
            key = tuple(sorted(cfg.to_dict().items()))
            overrides = tuple(
                (f, getattr(cfg, f)) for f in ("base_learning_rate", "momentum", "corruption_rate", "weight_decay")
                if getattr(cfg, f) != getattr(base_cfg, f)
            )
            if key in points:
                old = points[key]
                if name not in old.tags:
                    points[key] = GridPoint(old.architecture, old.overrides, (*old.tags, name))
            else:
                points[key] = GridPoint(architecture, overrides, (name,))
    return list(points.values())


def hyperparameter_sweep(
    architecture: Architecture,
    ranges: dict,
    data,
    validation,
    base_cfg: TrainingConfig,
    parallelism: int = 1,
    ledger_path=None,
) -> SearchLedger:
    """Sweep each hyperparameter over its range with the others held at
    ``base_cfg``. Every point shares ``base_cfg.seed`` so that differences
    come from the swept value alone."""
    points = sweep_points(architecture, ranges, base_cfg)
    ledger = run_search(data, validation, points, base_cfg, parallelism, ledger_path, seed_per_point=False)
    ledger.metadata["swept"] = {k: list(v) for k, v in ranges.items()}
    return ledger
