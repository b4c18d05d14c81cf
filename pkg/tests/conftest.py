import pytest

from hfqubit.species import load_species


@pytest.fixture(scope="session")
def species():
    return load_species()


@pytest.fixture(scope="session")
def d52(species):
    return species.level("2D5/2", "experimental")


@pytest.fixture(scope="session")
def d52_theory(species):
    return species.level("2D5/2", "theoretical")


_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def record():
    """record(n, ok, detail) stores the PASS/FAIL line of acceptance criterion n."""
    def _record(n: int, ok: bool, detail: str):
        _ACCEPTANCE[n] = f"{'PASS' if ok else 'FAIL'} criterion {n:2d}: {detail}"
        return ok
    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[n])
