import numpy as np
import pytest

from hoig.workbench.data import Dataset

# acceptance criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}

REALESTATE_COLUMNS = (
    "transaction_date",
    "house_age",
    "distance_to_mrt",
    "convenience_stores",
    "latitude",
    "longitude",
)


def realestate_standin(n=416, seed=2018) -> Dataset:
    """416 x 6 table shaped like the Taipei house-price data (same columns, ranges and skew).

    Prices follow a smooth nonlinear rule with a few interactions plus noise;
    it is a stand-in for workflow tests, not a copy of the real data.
    """
    rng = np.random.default_rng(seed)
    date = 2012.667 + rng.integers(0, 12, n) / 12.0
    age = rng.uniform(0.0, 43.8, n)
    dist = np.exp(rng.uniform(np.log(23.0), np.log(6500.0), n))
    stores = rng.integers(0, 11, n).astype(float)
    lat = 24.932 + rng.uniform(0.0, 0.086, n)
    lon = 121.473 + rng.uniform(0.0, 0.1, n)
    log_dist = np.log(dist)
    price = (
        95.0 - 8.0 * log_dist - 0.25 * age + 1.2 * stores
        + 0.004 * age * age - 0.12 * stores * (log_dist - 6.0)
        + 150.0 * (lat - 24.97) + 3.0 * (date - 2013.0)
        + 4.0 * rng.standard_normal(n)
    )
    price = np.clip(price, 7.6, 117.5)
    X = np.column_stack([date, age, dist, stores, lat, lon])
    return Dataset(REALESTATE_COLUMNS, X, price, "price", report={"source": "stand-in"})


@pytest.fixture(scope="session")
def realestate_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("realestate") / "realestate.csv"
    path.write_text(realestate_standin().to_csv())
    return path


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
