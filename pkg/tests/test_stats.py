import pytest
from hypothesis import given, strategies as st

from sasca_lab.stats import clopper_pearson_upper, wilson_ci


@pytest.mark.parametrize("k,n,lo,hi", [(10, 10, 0.723, 1.0), (3, 10, 0.108, 0.603), (30, 30, 0.886, 1.0)])
def test_wilson_anchors(k, n, lo, hi):
    a, b = wilson_ci(k, n)
    assert abs(a - lo) <= 0.002 and abs(b - hi) <= 0.002


def test_clopper_pearson_zero_of_160():
    assert clopper_pearson_upper(0, 160) == pytest.approx(0.0186, abs=0.002)
    assert clopper_pearson_upper(5, 5) == 1.0


@given(st.integers(1, 500), st.data())
def test_wilson_contains_estimate(n, data):
    k = data.draw(st.integers(0, n))
    lo, hi = wilson_ci(k, n)
    assert 0 <= lo <= k / n <= hi <= 1


@pytest.mark.parametrize("k,n", [(-1, 5), (6, 5), (0, 0)])
def test_invalid(k, n):
    with pytest.raises(ValueError):
        wilson_ci(k, n)
    with pytest.raises(ValueError):
        clopper_pearson_upper(k, n)
