import sys
from pathlib import Path

from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None)
settings.load_profile("default")


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    if "dataset" in results:
        terminalreporter.write_line(results["dataset"])
    for key in sorted(k for k in results if isinstance(k, int)):
        terminalreporter.write_line(results[key])
