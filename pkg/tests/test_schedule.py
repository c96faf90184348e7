import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from partforge.errors import ParameterError
from partforge.schedule import NoiseSchedule, add_noise, build_schedule


def test_cosine_boundaries():
    sched = build_schedule("cosine", 1000)
    assert sched.alpha_bar[0] == 1.0
    assert sched.alpha_bar[1000] < 1e-3  # terminal noise level, from the cosine formula
    assert np.all(np.diff(sched.alpha_bar) < 0)


@given(t_max=st.integers(8, 2000))
@settings(max_examples=25, deadline=None)
def test_cosine_monotone_any_tmax(t_max):
    sched = build_schedule("cosine", t_max)
    assert sched.alpha_bar[0] == 1.0
    assert np.all(np.diff(sched.alpha_bar) < 0)
    assert sched.alpha_bar[-1] > 0


def test_unknown_kind():
    with pytest.raises(ParameterError):
        build_schedule("linear", 100)


def test_schedule_invariants_enforced():
    with pytest.raises(ParameterError):
        NoiseSchedule(steps=2, alpha_bar=np.array([1.0, 0.5, 0.6]))  # not decreasing
    with pytest.raises(ParameterError):
        NoiseSchedule(steps=2, alpha_bar=np.array([0.9, 0.5, 1e-4]))  # ab_0 != 1
    with pytest.raises(ParameterError):
        NoiseSchedule(steps=2, alpha_bar=np.array([1.0, 0.5, 0.1]))  # terminal too high


def test_add_noise_identity_at_t0():
    sched = build_schedule("cosine", 100)
    l0 = torch.randn(4, 8)
    eps = torch.randn(4, 8)
    out = add_noise(l0, 0, eps, sched)
    assert torch.equal(out, l0)


def test_add_noise_quarter_alpha_bar():
    # custom schedule with alpha_bar[1] = 0.25: ones mix to 0.5 with eps = 0
    sched = NoiseSchedule(steps=2, alpha_bar=np.array([1.0, 0.25, 1e-4]))
    l0 = torch.ones(3, 3)
    out = add_noise(l0, 1, torch.zeros(3, 3), sched)
    assert torch.allclose(out, torch.full((3, 3), 0.5))


def test_add_noise_variance_preserving():
    # derived oracle: var(sqrt(ab) x + sqrt(1-ab) eps) = 1 for unit-variance x
    sched = build_schedule("cosine", 1000)
    gen = torch.Generator().manual_seed(0)
    n = 100_000
    l0 = torch.randn(n, generator=gen)
    eps = torch.randn(n, generator=gen)
    out = add_noise(l0, 900, eps, sched)
    assert abs(out.var().item() - 1.0) < 0.02


def test_add_noise_validation():
    sched = build_schedule("cosine", 10)
    with pytest.raises(ParameterError):
        add_noise(torch.ones(2), 11, torch.ones(2), sched)
    with pytest.raises(ParameterError):
        add_noise(torch.ones(2), 1, torch.ones(3), sched)
