import numpy as np
import pytest

_acceptance = []


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_runtest_logreport(report):
    if report.when != "call" or "acceptance" not in report.keywords:
        return
    _acceptance.append((report.nodeid.split("::")[-1], report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _acceptance:
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {name}")


def write_synthetic(directory, spec=None, scsr=False):
    """Write a synthetic dataset as CLI input files; returns a dict of paths."""
    from sparsetask.pipeline import SyntheticSpec, generate_synthetic, write_folds
    from sparsetask.sparse import write_matrix

    spec = spec or SyntheticSpec(n_rows=120, n_features=60, feature_density=0.1, n_class_tasks=4,
                                 n_regr_tasks=2, label_density=0.5, censor_fraction=0.3)
    d = generate_synthetic(spec)
    ext = ".scsr" if scsr else ".mtx"
    paths = {name: directory / f"{name}{ext}" for name in ("x", "y_class", "y_regr", "y_censor")}
    write_matrix(d.x, paths["x"])
    write_matrix(d.y_class, paths["y_class"])
    write_matrix(d.y_regr.targets, paths["y_regr"])
    write_matrix(d.y_regr.censor, paths["y_censor"])
    paths["folds"] = directory / "folds.txt"
    write_folds(d.folds, paths["folds"])
    paths["data"] = d
    return paths
