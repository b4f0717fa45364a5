"""Shared fixtures: hand-built records and a small planted-signal dataset."""

from __future__ import annotations

import re
from dataclasses import replace

import numpy as np
import pytest

from nanopk.dataset import SampleRecord, clean
from nanopk.synth import SynthConfig, generate

BASE = SampleRecord(
    type_np="Inorganic",
    mat="Gold",
    shape="Spherical",
    hd=40.0,
    zp=12.0,
    charge="Negative",
    ts="Passive",
    tm="Xenograft Heterotopic",
    ct="Breast",
    tw=0.5,
    tsiz=0.8,
    dose=5.0,
    bw=22.0,
    ar="IV",
    ktres_release=0.3,
    ktres_max=2.0,
    ktres_n=1.5,
    ktres_50=12.0,
)


def make_record(**changes) -> SampleRecord:
    return replace(BASE, **changes)


@pytest.fixture
def record() -> SampleRecord:
    return BASE


@pytest.fixture(scope="session")
def synth_records():
    records, signal = generate(SynthConfig(n=120, noise=0.3, seed=7))
    return records, signal


@pytest.fixture(scope="session")
def small_data(synth_records):
    return clean(synth_records[0], source="synthetic")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


# -- one summary line per acceptance criterion

_CRITERIA: dict[str, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    crit = dict(report.user_properties).get("criterion")
    match = re.search(r"test_acceptance\.py::test_(\d+)_", report.nodeid)
    if match is None:
        return
    crit = crit or str(int(match.group(1)))
    detail = dict(report.user_properties).get("detail", "")
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        outcome = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        if report.outcome == "skipped" and isinstance(report.longrepr, tuple):
            detail = report.longrepr[2].removeprefix("Skipped: ")
        _CRITERIA[crit] = (outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(_CRITERIA, key=int):
        outcome, detail = _CRITERIA[crit]
        terminalreporter.write_line(f"criterion {crit:>2}: {outcome}  {detail}".rstrip())
