import functools

import numpy as np
import pytest

import sdareduce.clustering as clustering

# Every mixture fit made anywhere in the test session is audited: the
# objective trace must be nondecreasing and the responsibilities and
# weights must normalize. Installed at import time, before test modules
# bind the name, so direct imports and the protocol both go through it.
EM_AUDIT = {"fits": 0, "worst_decrease": 0.0, "worst_resp_err": 0.0, "worst_weight_err": 0.0}

_original_fit = clustering.gmm_em_fit


@functools.wraps(_original_fit)
def _audited_fit(*args, **kwargs):
    fit = _original_fit(*args, **kwargs)
    trace = np.asarray(fit.trace)
    EM_AUDIT["fits"] += 1
    if trace.size > 1:
        EM_AUDIT["worst_decrease"] = max(EM_AUDIT["worst_decrease"], float(np.max(trace[:-1] - trace[1:])))
    EM_AUDIT["worst_resp_err"] = max(EM_AUDIT["worst_resp_err"], float(np.max(np.abs(fit.responsibilities.sum(axis=1) - 1.0))))
    EM_AUDIT["worst_weight_err"] = max(EM_AUDIT["worst_weight_err"], abs(float(fit.model.weights.sum()) - 1.0))
    return fit


clustering.gmm_em_fit = _audited_fit


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


SUITE_WIDE = "test_acceptance.py::test_c05_em_monotonicity"


def pytest_collection_modifyitems(config, items):
    last = [it for it in items if it.nodeid.endswith(SUITE_WIDE)]
    items[:] = [it for it in items if not it.nodeid.endswith(SUITE_WIDE)] + last


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            props = dict(getattr(report, "user_properties", []))
            if "criterion" in props and (report.when == "call" or outcome != "passed"):
                lines.append((props["criterion"], "PASS" if outcome == "passed" else "FAIL", props.get("measured", "")))
    if lines:
        terminalreporter.section("acceptance criteria")
        for title, verdict, measured in sorted(set(lines)):
            terminalreporter.write_line(f"{verdict}  {title}" + (f"\n        {measured}" if measured else ""))
