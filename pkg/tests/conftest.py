from __future__ import annotations

from pathlib import Path

import pytest

from remtime.eventlog import AttributeSchema, AttributeSpec, ColumnMapping, PreprocessConfig, parse_event_log, preprocess

FIXTURES = Path(__file__).parent / "fixtures"
CLAIMS_CSV = FIXTURES / "claims.csv"
CLAIMS_MAPPING = ColumnMapping("Case", "Activity", "Time", "%d/%m/%Y %H:%M:%S")
CLAIMS_SCHEMA = AttributeSchema((
    AttributeSpec("Channel", "categorical", static=True),
    AttributeSpec("Age", "numeric", static=True),
    AttributeSpec("Resource", "categorical"),
    AttributeSpec("Cost", "numeric"),
))
# keep every attribute of the claims log: two cases are far below the rare-value threshold
KEEP_ALL = PreprocessConfig(rare_case_threshold=0, drop_constant=False)


@pytest.fixture
def claims_log():
    return parse_event_log(CLAIMS_CSV, CLAIMS_MAPPING, CLAIMS_SCHEMA)


@pytest.fixture
def claims_pre(claims_log):
    return preprocess(claims_log, KEEP_ALL)


_ACCEPTANCE: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        _ACCEPTANCE[name] = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"{_ACCEPTANCE[name]:4s}  {name}")
