import pytest

from rivernav.dynamics import load_vessel

N_CRITERIA = 11
_results = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def vessel():
    return load_vessel()


@pytest.fixture
def record(request):
    """``record(criterion, ok, detail)`` notes one acceptance check for the summary."""
    rows = request.config.stash.setdefault(_results, [])

    def add(criterion: int, ok: bool, detail: str) -> None:
        rows.append((criterion, bool(ok), detail))
        print(f"criterion {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")

    return add


def pytest_terminal_summary(terminalreporter, config):
    rows = config.stash.get(_results, [])
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, N_CRITERIA + 1):
        mine = [r for r in rows if r[0] == n]
        if not mine:
            terminalreporter.write_line(f"criterion {n:2d}: NOT RUN")
            continue
        verdict = "PASS" if all(ok for _, ok, _ in mine) else "FAIL"
        detail = "; ".join(d for _, _, d in mine)
        terminalreporter.write_line(f"criterion {n:2d}: {verdict} - {detail}")
