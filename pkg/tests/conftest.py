import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

settings.register_profile("default", max_examples=80, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


finite_scores = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False, allow_infinity=False)


@st.composite
def score_rows(draw, min_size=2, max_size=64, ties=False):
    """Arrays of scores; without ``ties`` the maximum is unique."""
    scores = np.array(draw(st.lists(finite_scores, min_size=min_size, max_size=max_size)))
    # gaps near the subnormal range overflow Lambda = log N / u to inf, a float
    # limit rather than a property of the row
    scores[np.abs(scores) < 1e-100] = 0.0
    if not ties:
        top = np.flatnonzero(scores == scores.max())
        scores[top[1:]] -= 1.0
    return scores
