import random

import pytest

from ratls.evidence import EvidenceKind
from ratls.mutations import Scenario


@pytest.fixture(params=[EvidenceKind.EPID, EvidenceKind.ECDSA], ids=["epid", "ecdsa"])
def mode(request):
    return request.param


@pytest.fixture
def scenario(mode):
    return Scenario.create(mode, random.Random(1234))


@pytest.fixture
def epid():
    return Scenario.create(EvidenceKind.EPID, random.Random(1))


@pytest.fixture
def ecdsa():
    return Scenario.create(EvidenceKind.ECDSA, random.Random(2))


@pytest.fixture(scope="session")
def session_scenarios():
    """One world per mode, shared by read-only tests."""
    return {m: Scenario.create(m, random.Random(99)) for m in EvidenceKind}


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    """Remember a criterion outcome; printed at the end of the run."""
    ACCEPTANCE[number] = (ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}")
