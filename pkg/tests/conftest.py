import pytest

_verdicts: dict[str, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(tag): acceptance criterion, reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is not None and (rep.when == "call" or rep.failed):
        _verdicts.setdefault(mark.args[0], []).append("PASS" if rep.passed else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for tag in sorted(_verdicts, key=lambda t: int(t[2:])):
        status = "PASS" if all(v == "PASS" for v in _verdicts[tag]) else "FAIL"
        terminalreporter.write_line(f"{tag}: {status}")
