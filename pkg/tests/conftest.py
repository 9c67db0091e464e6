import pytest

_ACCEPTANCE: dict[str, str] = {}


@pytest.fixture
def report(request):
    """Record one ``[PASS]/[FAIL] Ak ...`` line, echo it live and repeat it in the summary."""
    def _report(key: str, passed: bool, summary: str) -> None:
        line = f"[{'PASS' if passed else 'FAIL'}] {key}: {summary}"
        _ACCEPTANCE[key] = line
        capman = request.config.pluginmanager.getplugin("capturemanager")
        with capman.global_and_fixture_disabled():
            print("\n" + line, flush=True)
    return _report


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[key])
