import pytest

from endospin.species import get_species, resonant_field


@pytest.fixture(scope="session")
def n14():
    return get_species("14N@C60")


@pytest.fixture(scope="session")
def n15c70():
    return get_species("15N@C70")


@pytest.fixture(scope="session")
def xband(n14):
    return resonant_field(n14, 9.67)


_ACCEPTANCE: dict = {}


class _Criterion:
    def __init__(self, number: int, title: str):
        self.number, self.title = number, title
        self.details: list[str] = []

    def note(self, text: str):
        self.details.append(text)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        status = "PASS" if exc_type is None else "FAIL"
        detail = "; ".join(self.details)
        if exc is not None:
            detail = (detail + "; " if detail else "") + str(exc).splitlines()[0]
        line = f"[{status}] criterion {self.number:2d}: {self.title} ({detail})"
        _ACCEPTANCE[self.number] = line
        print(line)
        return False


@pytest.fixture
def criterion():
    return _Criterion


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[number])
