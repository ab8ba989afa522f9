import io

import numpy as np
import pytest

from ratingsde.moments import (
    MomentError,
    MomentSet,
    ObjectiveConfig,
    estimate_moments,
    moments_of,
    objective,
    penalized_objective,
    read_moments,
    residuals,
    trajectory_penalty,
    write_moments,
)
from ratingsde.rating_data import MatrixSeries, RatingScale


def brute_moments(x, order):
    """Loop version of the estimators on one scalar sample."""
    M = len(x)
    m = sum(x) / M
    out = [m]
    if order >= 2:
        out.append(sum((v - m) ** 2 for v in x) / (M - 1))
    for k in range(3, order + 1):
        out.append(sum((v - m) ** k for v in x) / M)
    return out


def random_stochastic(rng, shape, K=4):
    x = rng.uniform(0, 1, size=shape + (K, K))
    x /= x.sum(axis=-1, keepdims=True)
    x[..., -1, :] = np.eye(K)[-1]
    return x


def test_two_point_sample():
    mu = moments_of(np.array([0.4, 0.6]), 3)
    assert np.isclose(mu[0], 0.5)
    assert np.isclose(mu[1], 0.02)
    assert abs(mu[2]) < 1e-17


def test_identical_samples():
    R = random_stochastic(np.random.default_rng(0), ())
    mu = moments_of(np.broadcast_to(R, (7, 4, 4)), 4)
    # the mean is a rounded sum / M, so equality holds to rounding only
    assert np.abs(mu[0] - R).max() < 1e-15
    assert np.abs(mu[1:]).max() < 1e-30


def test_matches_brute_force(rng):
    x = random_stochastic(rng, (25, 2))
    mu = moments_of(x, 4)
    for t in range(2):
        for i in range(4):
            for j in range(4):
                ref = brute_moments(list(x[:, t, i, j]), 4)
                assert np.allclose(mu[:, t, i, j], ref, rtol=1e-12, atol=1e-18)


def test_variance_needs_two_samples():
    with pytest.raises(MomentError, match="M >= 2"):
        moments_of(np.ones((1, 4, 4)), 2)
    assert moments_of(np.ones((1, 4, 4)), 1).shape == (1, 4, 4)


def test_estimate_moments_selects_times(rng):
    s = MatrixSeries(RatingScale(), [0.25, 0.5, 1.0], random_stochastic(rng, (10, 3)))
    ms = estimate_moments(s, 2, times=[1.0, 0.25])
    assert ms.times.tolist() == [1.0, 0.25]
    assert np.allclose(ms.moments[0, 0], s.samples[:, 2].mean(axis=0))
    with pytest.raises(MomentError):
        estimate_moments(s, 2, times=[0.75])
    with pytest.raises(MomentError):
        estimate_moments(s.samples, 2)


def test_moment_set_io_roundtrip(rng):
    ms = estimate_moments(random_stochastic(rng, (10, 2)), 4, times=[0.5, 1.0])
    buf = io.StringIO()
    write_moments(ms, buf)
    back = read_moments(io.StringIO(buf.getvalue()))
    assert np.array_equal(back.moments, ms.moments)
    assert back.n_samples == 10 and back.order == 4


def make_sets(rng):
    a = estimate_moments(random_stochastic(rng, (30, 1)), 4, times=[1.0])
    b = estimate_moments(random_stochastic(rng, (30, 1)), 4, times=[1.0])
    return a, b


def test_residual_layout(rng):
    a, b = make_sets(rng)
    cfg = ObjectiveConfig(order=4, weights=(1, 1, 1, 1))
    r = residuals(a, b, cfg)
    assert r.shape == (4 * 3 * 4,)
    # first block: column-major vec of the first K-1 rows of the mean difference
    d = (a.moments[0, 0] - b.moments[0, 0])[:3]
    assert np.array_equal(r[:12], d.T.reshape(-1))
    assert residuals(a, a, cfg).tolist() == [0.0] * 48


def test_weights_scale_blocks(rng):
    a, b = make_sets(rng)
    plain = residuals(a, b, ObjectiveConfig(weights=(1, 1, 1, 1)))
    weighted = residuals(a, b, ObjectiveConfig(weights=(1, 10, 1, 1)))
    assert np.allclose(weighted[12:24], 10 * plain[12:24])
    assert np.array_equal(weighted[:12], plain[:12])
    masked = residuals(a, b, ObjectiveConfig(weights=(1, 0, 1, 1)))
    assert np.all(masked[12:24] == 0)


def test_objective_is_squared_norm(rng):
    a, b = make_sets(rng)
    r, val = objective(a, b, ObjectiveConfig())
    assert np.isclose(val, float(np.sum(r**2)))


def test_config_validation():
    with pytest.raises(MomentError):
        ObjectiveConfig(order=3)
    with pytest.raises(MomentError):
        ObjectiveConfig(weights=(0, 0, 0, 0))
    with pytest.raises(MomentError):
        ObjectiveConfig(lambda2=-1)


def test_penalty_by_hand():
    ref = np.broadcast_to(np.eye(4), (1, 4, 4))
    sample = ref.copy()[None]
    sample[0, 0, 0, 1] += 0.1
    assert np.isclose(trajectory_penalty(sample, ref), 0.01)
    ms = estimate_moments(np.concatenate([sample, sample]), 1, times=[1.0])
    cfg = ObjectiveConfig(order=1, weights=(1,), lambda1=0.0, lambda2=2.0, reference=ref)
    assert np.isclose(penalized_objective(sample, ms, ms, cfg), 0.02)


def test_penalty_off_reduces_to_objective(rng):
    a, b = make_sets(rng)
    cfg = ObjectiveConfig(lambda1=3.0)
    assert np.isclose(penalized_objective(None, a, b, cfg), 3.0 * objective(a, b, cfg)[1])


def test_penalty_zero_for_exact_reference(rng):
    x = random_stochastic(rng, (5, 1))
    ref = x[0]
    same = np.broadcast_to(ref, x.shape)
    ms = estimate_moments(same, 2, times=[1.0])
    cfg = ObjectiveConfig(order=2, weights=(1, 1), lambda1=0.0, lambda2=1.0, reference=ref)
    assert penalized_objective(same, ms, ms, cfg) == 0.0


def test_moment_set_truncate():
    ms = MomentSet([1.0], np.zeros((1, 4, 4, 4)), 5)
    assert ms.truncate(2).order == 2
    with pytest.raises(MomentError):
        ms.truncate(5)
