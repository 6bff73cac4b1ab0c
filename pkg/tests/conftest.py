import pytest

ACCEPTANCE = {}


def record(criterion: int, passed: bool, detail: str):
    ACCEPTANCE[criterion] = (bool(passed), detail)
    print(f"criterion {criterion}: {'PASS' if passed else 'FAIL'} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def default_run():
    """The default three-round construction, timed once for the whole session."""
    import time

    from wildflow.wild_constructor import ConstructionConfig, direct_construction

    t0 = time.perf_counter()
    subs, log = direct_construction(ConstructionConfig())
    return subs, log, time.perf_counter() - t0
