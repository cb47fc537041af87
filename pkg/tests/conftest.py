from __future__ import annotations

import pytest
from hypothesis import settings

from tanner_gnn import codes

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


@pytest.fixture(scope="session")
def surface3():
    return codes.rotated_surface_code(3)


@pytest.fixture(scope="session")
def surface5():
    return codes.rotated_surface_code(5)


@pytest.fixture(scope="session")
def bb72():
    return codes.bivariate_bicycle_code(6, 6, [[3, 0], [0, 1], [0, 2]], [[0, 3], [1, 0], [2, 0]], d=6)


# one summary line per acceptance criterion, filled in by tests/test_acceptance.py
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    def record(label: str, ok: bool, detail: str) -> bool:
        ACCEPTANCE[label] = (bool(ok), detail)
        print(f"criterion {label}: {'PASS' if ok else 'FAIL'} ({detail})")
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(ACCEPTANCE, key=lambda s: (int("".join(c for c in s if c.isdigit())), s)):
        ok, detail = ACCEPTANCE[label]
        terminalreporter.write_line(f"criterion {label:>3s}: {'PASS' if ok else 'FAIL'}  {detail}")
