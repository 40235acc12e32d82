import csv

import numpy as np
import pytest

from genisbench.flow_data import FlowTable, load_taxonomy


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


@pytest.fixture
def taxonomy():
    return load_taxonomy()


def make_table(numeric, labels, categorical=None, taxonomy=None):
    return FlowTable(numeric, categorical or {}, labels, taxonomy or load_taxonomy())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, filled in by tests/test_acceptance.py
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
