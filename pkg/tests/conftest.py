from hypothesis import settings

settings.register_profile("default", deadline=None)
settings.load_profile("default")

# (criterion, passed, detail) lines collected by test_acceptance.py
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE_LINES:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
