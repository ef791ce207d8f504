import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from regulab import tasks
from regulab.errors import ConfigError


@given(st.floats(-1e6, 1e6, allow_nan=False))
def test_frac_in_unit_interval(v):
    f = tasks.frac_values(v)
    assert 0.0 <= f < 1.0 or f == pytest.approx(0.0) or f == pytest.approx(1.0)
    assert f == pytest.approx(v - np.floor(v))


def test_frac_negative_values():
    assert tasks.frac_values(-0.25) == pytest.approx(0.75)
    assert tasks.frac_values(-1.0) == 0.0


def test_indicator_half_open():
    t = tasks.indicator(0.0, 1.0)
    assert t.evaluate(np.array([-0.1, 0.0, 0.5, 1.0])).tolist() == [0, 1, 1, 0]
    with pytest.raises(ConfigError):
        tasks.indicator(1.0, 1.0)


def test_sign_and_sign_of_frac():
    assert tasks.sign(0.5).evaluate(np.array([0.0, 0.5, 1.0])).tolist() == [-1, 0, 1]
    assert tasks.sign_of_frac().evaluate(np.array([0.25, 1.75, -0.25])).tolist() == [-1, 1, 1]


def test_step_right_continuous():
    t = tasks.step([0.0, 1.0], [1.0, 2.0, 3.0])
    assert t.evaluate(np.array([-1.0, 0.0, 0.999, 1.0])).tolist() == [1, 2, 2, 3]
    assert t.bound_B == 3.0
    with pytest.raises(ConfigError):
        tasks.step([1.0, 0.0], [1, 2, 3])
    with pytest.raises(ConfigError):
        tasks.step([0.0], [1.0])


def test_random_step_deterministic_and_bounded():
    a = tasks.random_step(3)
    b = tasks.random_step(3)
    th = np.linspace(-3, 4, 200)
    assert np.array_equal(a.evaluate(th), b.evaluate(th))
    assert np.all((a.evaluate(th) >= 0) & (a.evaluate(th) <= 1))
    assert len(np.unique(a.evaluate(th))) == 10


def test_battery_has_at_least_five_bounded_discontinuous_tasks():
    bat = tasks.battery(0)
    assert len(bat) >= 5
    th = np.linspace(-2, 3, 10_001)
    for t in bat:
        v = t.evaluate(th)
        assert np.max(np.abs(v)) <= t.bound_B
        assert np.max(np.abs(np.diff(v))) > 0.01  # a genuine jump somewhere in range


def test_tasks_act_on_one_coordinate():
    th = np.array([[0.25, 5.0], [0.75, -5.0]])
    assert tasks.indicator(0.5, coord=0).evaluate(th).tolist() == [0, 1]
    assert tasks.indicator(0.0, coord=1).evaluate(th).tolist() == [1, 0]


def test_from_config():
    t = tasks.from_config({"name": "indicator", "lo": 0.5, "hi": None})
    assert t.evaluate(np.array([0.4, 0.6])).tolist() == [0, 1]
    t = tasks.from_config({"name": "step", "breakpoints": [0.0], "values": [0.0, 1.0]})
    assert t.evaluate(np.array([-1.0, 1.0])).tolist() == [0, 1]
    with pytest.raises(ConfigError) as exc:
        tasks.from_config({"name": "nope"})
    assert exc.value.field == "task.name"
    with pytest.raises(ConfigError) as exc:
        tasks.from_config({"name": "frac", "lo": 1.0})
    assert exc.value.field == "task.lo"
