import numpy as np
import pytest

from softeq.modem import build_gray_pam

_VERDICTS: list[str] = []


def record_verdict(label: str, ok: bool, detail: str) -> str:
    line = f"{'PASS' if ok else 'FAIL'} criterion {label}: {detail}"
    print(line)
    _VERDICTS.append(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_VERDICTS, key=_criterion_key):
        terminalreporter.write_line(line)


def _criterion_key(line: str):
    label = line.split()[2].rstrip(":")
    digits = "".join(c for c in label if c.isdigit())
    return int(digits), label


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def pam8():
    return build_gray_pam(3)
