import pytest

from fbp.nn import save_weights

from helpers_fbp import make_random_store


@pytest.fixture(scope="session")
def random_store():
    return make_random_store(seed=7)


@pytest.fixture(scope="session")
def random_weights_file(tmp_path_factory, random_store):
    path = tmp_path_factory.mktemp("weights") / "random.bwf"
    save_weights(random_store, path)
    return path


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance" in report.nodeid:
        verdict = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        name = report.nodeid.split("::")[-1]
        print(f"\n[acceptance] {verdict}: {name}")
