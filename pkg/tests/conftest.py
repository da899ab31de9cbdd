import numpy as np
import pytest

from ldlab.dataset import Dataset, make_blobs
from ldlab.regression import example_sweep


@pytest.fixture(scope="session")
def uniform_sweep():
    return example_sweep("uniform", seed=0)


@pytest.fixture(scope="session")
def stratified_sweep():
    return example_sweep("stratified", seed=0)


def validation_blobs(class_count, per_class, dimension, separation, seed, offset=100_000):
    """Clean held-out blobs whose ids cannot collide with a training set."""
    v = make_blobs(class_count, per_class, dimension, separation, seed)
    return Dataset(ids=v.ids + offset, features=v.features, labels=v.labels, class_count=class_count)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---------------------------------------------------------------- acceptance summary

_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion a test belongs to")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (rep.when == "call" or rep.failed):
        return
    number, title = marker.args
    entry = _CRITERIA.setdefault(number, {"title": title, "failed": []})
    if rep.failed:
        entry["failed"].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        entry = _CRITERIA[number]
        status = "FAIL" if entry["failed"] else "PASS"
        line = f"criterion {number:>2} {status}: {entry['title']}"
        if entry["failed"]:
            line += f" (failing: {', '.join(entry['failed'])})"
        terminalreporter.write_line(line)
