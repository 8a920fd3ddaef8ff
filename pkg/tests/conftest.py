import pytest

_RESULTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_RESULTS] = {}


@pytest.fixture
def acceptance(request):
    """Record one sub-result of a numbered acceptance criterion."""
    store = request.config.stash[_RESULTS]

    def record(number: int, title: str, passed: bool, detail: str) -> bool:
        entry = store.setdefault(number, {"title": title, "parts": []})
        entry["parts"].append((bool(passed), detail))
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter, config):
    store = config.stash[_RESULTS]
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(store):
        entry = store[number]
        ok = all(p for p, _ in entry["parts"])
        details = "; ".join(("" if p else "[failed] ") + d for p, d in entry["parts"])
        terminalreporter.write_line(f"criterion {number} {'PASS' if ok else 'FAIL'}: {entry['title']} -- {details}")
