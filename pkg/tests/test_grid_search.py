import json

import numpy as np
import pytest

from sdareduce.data import apply_standardizer, fit_standardizer, synthetic_manifold
from sdareduce.grid_search import (
    GridPoint,
    GridSpec,
    LayerRange,
    LedgerEntry,
    SearchLedger,
    enumerate_architectures,
    hyperparameter_sweep,
    read_ledger,
    run_search,
    select_top_k,
    sweep_points,
    worker_count,
)
from sdareduce.optimizer import TrainingConfig
from sdareduce.stack import Architecture

BASE = TrainingConfig(epochs=2, batch_size=50, seed=21)


@pytest.fixture(scope="module")
def split():
    ds = synthetic_manifold(2, 80, 3, 3, 12, 0.1)
    params = fit_standardizer(ds.features)
    X = apply_standardizer(ds.features, params)
    return X[:180], X[180:]


def toy_points(n):
    archs = [Architecture(12, (h1, h2)) for h1 in (8, 6, 10, 5) for h2 in (3, 2)]
    return [GridPoint(a) for a in archs[:n]]


class TestEnumeration:
    def test_layer_range_values(self):
        assert LayerRange(50, 10, 10).values() == [10, 20, 30, 40, 50]
        assert LayerRange(700, 1000, 100).values() == [700, 800, 900, 1000]
        assert LayerRange.parse("5") .values() == [5]

    def test_default_depth_four(self):
        archs = enumerate_architectures(GridSpec(), 4)
        assert len(archs) == 4 * 5 * 4 * 5 == 400
        assert len({a.hidden_dims for a in archs}) == 400
        assert archs[0].hidden_dims == (700, 500, 100, 10)
        assert [a.hidden_dims for a in archs] == sorted(a.hidden_dims for a in archs)

    def test_default_depth_three(self):
        archs = enumerate_architectures(GridSpec(), 3)
        assert len(archs) == 100
        assert {a.hidden_dims[-1] for a in archs} == {10, 20, 30, 40, 50}

    def test_single_value_ranges(self):
        spec = GridSpec(layer_ranges=(LayerRange(8, 8, 1), LayerRange(4, 4, 1)), depths=(2,))
        assert [a.hidden_dims for a in enumerate_architectures(spec, 2, input_dim=12)] == [(8, 4)]

    def test_unsupported_depth(self):
        with pytest.raises(ValueError, match="unsupported depth"):
            enumerate_architectures(GridSpec(), 5)

    def test_bad_step(self):
        with pytest.raises(ValueError):
            LayerRange(10, 50, 0)


class TestRunSearch:
    def test_smoke(self, split):
        ledger = run_search(*split, toy_points(3), BASE)
        assert [e.status for e in ledger.entries] == ["done"] * 3
        assert all(len(e.layer_min_errors) == 2 for e in ledger.entries)
        assert all(e.validation_loss > 0 for e in ledger.entries)
        assert "assumptions" in ledger.metadata

    def test_parallelism_invariance(self, split):
        a = run_search(*split, toy_points(8), BASE, parallelism=1)
        b = run_search(*split, toy_points(8), BASE, parallelism=4)
        assert a.canonical() == b.canonical()

    def test_seeds_depend_on_point_index(self, split):
        ledger = run_search(*split, toy_points(2), BASE)
        seeds = [e.hyperparameters["seed"] for e in ledger.entries]
        assert seeds[0] != seeds[1]

    def test_failed_point_is_isolated(self, split):
        X, V = split
        points = [
            GridPoint(Architecture(12, (4,))),
            GridPoint(Architecture(12, (4,)), (("base_learning_rate", 1e12),)),
            GridPoint(Architecture(12, (3,))),
        ]
        ledger = run_search(X * 1e2, V * 1e2, points, BASE.replace(epochs=3))
        assert [e.status for e in ledger.entries] == ["done", "failed", "done"]
        assert "TrainingDivergedError" in ledger.entries[1].error
        assert ledger.entries[1].layer_min_errors is None

    def test_ledger_file_and_resume(self, split, tmp_path, monkeypatch):
        path = tmp_path / "ledger.jsonl"
        points = toy_points(4)
        first = run_search(*split, points, BASE, ledger_path=path)
        lines = path.read_text().splitlines()
        assert len(lines) == 4
        # simulate an interruption after two points
        path.write_text("\n".join(lines[:2]) + "\n")
        import sdareduce.grid_search as gs

        trained = []
        real = gs._run_point

        def spy(entry, *args):
            trained.append(entry.index)
            return real(entry, *args)

        monkeypatch.setattr(gs, "_run_point", spy)
        second = run_search(*split, points, BASE, ledger_path=path)
        assert sorted(trained) == [e.index for e in first.entries[2:]]
        assert len(path.read_text().splitlines()) == 4
        assert second.canonical() == first.canonical()
        assert sorted(e.index for e in read_ledger(path)) == [0, 1, 2, 3]

    def test_worker_cap_from_environment(self, monkeypatch):
        monkeypatch.setenv("SDA_THREADS", "2")
        assert worker_count(8) == 2
        monkeypatch.delenv("SDA_THREADS")
        assert worker_count(3) == 3


def entry(i, loss, arch, status="done"):
    return LedgerEntry(i, str(i), arch, {}, status=status, validation_loss=loss, layer_min_errors=[loss])


class TestSelectTopK:
    def test_argmin(self):
        led = SearchLedger([entry(0, 0.5, [10, 5]), entry(1, 0.2, [10, 5]), entry(2, 0.9, [10, 5])])
        assert [e.index for e in select_top_k(led, 1)] == [1]

    def test_truncation(self):
        led = SearchLedger([entry(0, 0.5, [10, 5]), entry(1, 0.2, [10, 5]), entry(2, None, [10, 5], "failed")])
        assert [e.index for e in select_top_k(led, 5)] == [1, 0]

    def test_tie_prefers_fewer_parameters(self):
        led = SearchLedger([entry(0, 0.3, [10, 8]), entry(1, 0.3, [10, 4]), entry(2, 0.3, [10, 4])])
        assert [e.index for e in select_top_k(led, 3)] == [1, 2, 0]

    def test_no_completed(self):
        with pytest.raises(ValueError):
            select_top_k(SearchLedger([entry(0, None, [10, 5], "failed")]), 1)


class TestSweep:
    def test_points_and_dedup(self):
        arch = Architecture(12, (4,))
        base = TrainingConfig(base_learning_rate=0.01, momentum=0.0)
        pts = sweep_points(arch, {"learning_rate": [0.001, 0.01, 0.1], "momentum": [0.0, 0.5]}, base)
        # the base config shows up in both sweeps but is trained once
        assert len(pts) == 4
        base_pts = [p for p in pts if not p.overrides]
        assert len(base_pts) == 1 and set(base_pts[0].tags) == {"learning_rate", "momentum"}

    def test_sweep_ledger(self, split):
        arch = Architecture(12, (6, 3))
        ledger = hyperparameter_sweep(arch, {"learning_rate": [0.001, 0.01, 0.1]}, *split, BASE)
        tagged = ledger.tagged("learning_rate")
        assert len(tagged) == 3
        assert {e.hyperparameters["seed"] for e in tagged} == {BASE.seed}
        base_loss = next(e.validation_loss for e in tagged if e.hyperparameters["base_learning_rate"] == BASE.base_learning_rate)
        assert min(e.validation_loss for e in tagged) <= base_loss

    def test_unknown_parameter(self):
        with pytest.raises(ValueError):
            sweep_points(Architecture(12, (4,)), {"dropout": [0.1]}, BASE)


def test_ledger_lines_are_json(split, tmp_path):
    run_search(*split, toy_points(2), BASE, ledger_path=tmp_path / "l.jsonl")
    for line in (tmp_path / "l.jsonl").read_text().splitlines():
        rec = json.loads(line)
        assert {"architecture", "hyperparameters", "layer_min_errors", "validation_loss", "status", "wall_time"} <= set(rec)
