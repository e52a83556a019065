"""The binding validation suite, one test per built-in criterion.

Every check runs at full scale (``quick=False``); the CLI ``validate --quick``
mode is only a smoke test. Failure messages carry the criterion's own detail
string so a red run is diagnosable from the pytest output alone.
"""

from gfsim import acceptance


def _run(number):
    res = acceptance.CRITERIA[number](quick=False)
    assert res.passed, res.format_line()
    return res


def test_criterion_01_tsp_closed_form():
    res = _run(1)
    assert "err=" in res.detail


def test_criterion_02_imp_closed_form():
    res = _run(2)
    assert "err=" in res.detail


def test_criterion_03_collision_ratio():
    _run(3)


def test_criterion_04_collision_oracle_monte_carlo():
    _run(4)


def test_criterion_05_channel_estimate_variance():
    _run(5)


def test_criterion_06_interference_cancellation_exactness():
    _run(6)


def test_criterion_07_data_aided_least_squares():
    _run(7)


def test_criterion_08_collision_resolution_scenario():
    _run(8)


def test_criterion_09_aud_error_rates():
    _run(9)


def test_criterion_10_bler_floor_separation():
    _run(10)


def test_criterion_11_low_snr_crossover():
    _run(11)


def test_criterion_12_decode_attempts_overhead():
    _run(12)


def test_criterion_13_data_aided_gain():
    _run(13)


def test_criterion_14_csv_determinism():
    _run(14)


def test_registry_is_complete():
    assert sorted(acceptance.CRITERIA) == list(range(1, 15))
    results = acceptance.run_criteria([1, 2, 3], quick=True)
    assert [r.number for r in results] == [1, 2, 3]
    assert all("[quick]" in r.detail for r in results)
