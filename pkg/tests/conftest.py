import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import numpy as np
import pytest

from csaqs import aqs
from csaqs.models import ModelSpec
from csaqs.optimize import OptimizerOptions, optimize_evo

LOSCHMIDT_TOL = 1e-12
RECORDS_CHECKED = {"count": 0, "worst": 0.0}


@pytest.fixture(autouse=True)
def loschmidt_guard(monkeypatch):
    """Every simulation record built anywhere in the suite must satisfy the Loschmidt identity."""
    original = aqs._record

    def checked(rhos, refs, observables, errors, metadata, seed):
        rec = original(rhos, refs, observables, errors, metadata, seed)
        w = ModelSpec.from_dict(metadata["model"]).propagator()
        gap = float(np.abs(aqs.loschmidt_trace(rec, w) - rec.fidelity).max())
        RECORDS_CHECKED["count"] += 1
        RECORDS_CHECKED["worst"] = max(RECORDS_CHECKED["worst"], gap)
        assert gap < LOSCHMIDT_TOL, f"Loschmidt identity violated by {gap:.2e}"
        return rec

    monkeypatch.setattr(aqs, "_record", checked)
    yield


QKT = ModelSpec.qkt(1.0, 7.0)


@pytest.fixture(scope="session")
def qkt_solutions():
    """EVO solutions of the chaotic kicked top at N=20 that reach 0.99999."""
    w = QKT.propagator()
    sols = []
    seed = 0
    while len(sols) < 5:
        s = optimize_evo(w, 20, options=OptimizerOptions(seed=seed, max_iters=3000))
        if s.achieved_fidelity >= 0.99999:
            sols.append(s)
        seed += 1
    return sols


CRITERIA: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, ok: bool, detail: str):
    CRITERIA[number] = (bool(ok), detail)
    print(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        ok, detail = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    if RECORDS_CHECKED["count"]:
        terminalreporter.write_line(
            f"Loschmidt guard: {RECORDS_CHECKED['count']} simulation records checked, worst gap {RECORDS_CHECKED['worst']:.1e}"
        )
