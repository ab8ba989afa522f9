import math

import numpy as np
import pytest

from ratingsde import lie, sde, streams
from ratingsde.sde import ModelParams, SimulationGrid

from .conftest import CIR_TABLE, GEM_TABLE


def table_params(family, table, sigma=None):
    s = table[:, 2] if sigma is None else np.full(len(table), sigma)
    return ModelParams(family, 4, table[:, 0], table[:, 1], s)


# ---------------------------------------------------------------- parameters and grid


def test_param_vector_roundtrip():
    p = table_params("cir", CIR_TABLE)
    v = p.to_vector()
    assert np.array_equal(v[:9], CIR_TABLE[:, 0])
    assert np.array_equal(ModelParams.from_vector("cir", 4, v).to_vector(), v)
    assert ModelParams.from_dict(p.to_dict()).to_vector().tolist() == v.tolist()
    assert p.table(("A", "B", "C", "D"))[3][0] == "B-A"


@pytest.mark.parametrize("bad", [dict(a=-np.ones(9)), dict(a=np.ones(8)), dict(b=np.full(9, np.nan))])
def test_param_validation(bad):
    kw = dict(a=np.ones(9), b=np.ones(9), sigma=np.ones(9))
    kw.update(bad)
    with pytest.raises(ValueError):
        ModelParams("cir", 4, **kw)
    with pytest.raises(ValueError):
        ModelParams("ou", 4, np.ones(9), np.ones(9), np.ones(9))


def test_grid_snapping_and_checks():
    g = SimulationGrid(10)
    assert g.n_steps == 360
    assert g.obs_index.tolist() == [30, 90, 180, 360]
    with pytest.raises(ValueError):
        SimulationGrid(10, obs_times=(0.5, 0.25))
    with pytest.raises(ValueError):
        SimulationGrid(10, obs_times=(0.001, 0.0012))
    with pytest.raises(ValueError):
        SimulationGrid(10, driver="shared")


# ---------------------------------------------------------------- CIR


def test_cir_deterministic_closed_form():
    p = table_params("cir", CIR_TABLE, sigma=0.0)
    g = SimulationGrid(3, obs_times=(0.25, 1.0))
    coords, _ = sde.simulate_cir_coords(p, g)
    a, b = CIR_TABLE[:, 0], CIR_TABLE[:, 1]
    for t, row in zip((0.25, 1.0), coords[0]):
        exact = sde.cir_mean(a, b, t)
        # Euler on a linear ODE: error bounded by b a^2 t dt
        assert np.all(np.abs(row - exact) <= b * a**2 * t * g.dt + 1e-15)
    assert np.all(coords[0] == coords[1])


def test_cir_spot_value():
    p = table_params("cir", CIR_TABLE, sigma=0.0)
    coords, _ = sde.simulate_cir_coords(p, SimulationGrid(1, obs_times=(1.0,), steps_per_year=100000))
    assert abs(0.229 * (1 - math.exp(-0.241)) - 0.0490) < 1e-4
    assert abs(coords[0, 0, 0] - 0.0490) < 1e-4


def test_cir_null_dynamics():
    p = ModelParams("cir", 4, np.zeros(9), np.zeros(9), np.zeros(9))
    ens = sde.simulate_direct(p, SimulationGrid(5, obs_times=(0.0, 0.5, 1.0)))
    assert np.array_equal(ens.coords, np.zeros_like(ens.coords))
    assert np.array_equal(ens.matrices, np.broadcast_to(np.eye(4), ens.matrices.shape))


def test_cir_paths_non_negative_and_stochastic():
    p = ModelParams("cir", 4, np.full(9, 0.5), np.full(9, 0.02), np.full(9, 0.8))
    ens = sde.simulate_direct(p, SimulationGrid(300, seed=3), keep_paths=True)
    assert ens.paths.min() >= 0
    assert np.array_equal(ens.paths[0], np.zeros((300, 9)))
    lie.check_transition_matrix(ens.matrices)


def test_cir_violates_chapman_kolmogorov():
    p = table_params("cir", CIR_TABLE)
    ens = sde.simulate_direct(p, SimulationGrid(100, obs_times=(0.5, 1.0), seed=1))
    implied = np.linalg.solve(ens.matrices[:, 0], ens.matrices[:, 1])
    assert (implied.min(axis=(1, 2)) < -1e-12).any()


# ---------------------------------------------------------------- gEM


def test_gem_deterministic_closed_form():
    p = table_params("gem", GEM_TABLE, sigma=0.0)
    g = SimulationGrid(2, obs_times=(0.5, 1.0))
    ens = sde.simulate_gem(p, g)
    a, b = GEM_TABLE[:, 0], GEM_TABLE[:, 1]
    for k, t in enumerate((0.5, 1.0)):
        exact = b**a * t ** (a + 1) / (a + 1)
        # left Riemann sum of an increasing integrand: error at most f(t) dt
        assert np.all(np.abs(ens.coords[0, k] - exact) <= (b * t) ** a * g.dt + 1e-15)
        assert np.all(ens.coords[0, k] <= exact)


def test_gem_null_dynamics():
    p = ModelParams("gem", 4, np.ones(9), np.zeros(9), np.zeros(9))
    ens = sde.simulate_gem(p, SimulationGrid(4))
    assert np.array_equal(ens.matrices, np.broadcast_to(np.eye(4), ens.matrices.shape))


def test_gem_zero_power_convention():
    # |0|**0 = 1: with a = 0 every step adds dt
    p = ModelParams("gem", 2, [0.0], [0.0], [0.0])
    ens = sde.simulate_gem(p, SimulationGrid(1, obs_times=(1.0,)))
    assert np.isclose(ens.coords[0, 0, 0], 1.0)
    assert np.isclose(ens.matrices[0, 0, 0, 1], 1 - math.exp(-1.0))


def test_gem_chapman_kolmogorov_pathwise():
    p = table_params("gem", GEM_TABLE)
    g = SimulationGrid(100, obs_times=(0.5, 1.0), seed=2)
    ens = sde.simulate_gem(p, g, keep_paths=True)
    s, u = g.obs_index
    steps = lie.exp(np.diff(ens.paths[s : u + 1], axis=0))  # (u-s, M, K, K)
    R_su = np.broadcast_to(np.eye(4), (100, 4, 4)).copy()
    for k in range(u - s):
        R_su = R_su @ steps[k]
    lie.check_transition_matrix(R_su)
    assert np.abs(ens.matrices[:, 1] - ens.matrices[:, 0] @ R_su).max() < 1e-12


def test_gem_default_column_monotone_in_time():
    p = table_params("gem", GEM_TABLE)
    g = SimulationGrid(200, obs_times=tuple(k / 12 for k in range(1, 13)), seed=4)
    ens = sde.simulate_gem(p, g)
    d = ens.matrices[..., :, -1]
    assert (np.diff(d, axis=1) >= -1e-15).all()
    assert (np.diff(ens.coords, axis=1) >= 0).all()


# ---------------------------------------------------------------- reproducibility


@pytest.mark.parametrize("family, table", [("cir", CIR_TABLE), ("gem", GEM_TABLE)])
def test_bit_identical_across_threads(family, table):
    p = table_params(family, table)
    g = SimulationGrid(600, seed=11)
    one = sde.simulate(p, g, threads=1)
    three = sde.simulate(p, g, threads=3)
    again = sde.simulate(p, g, threads=1)
    assert np.array_equal(one.matrices, three.matrices)
    assert np.array_equal(one.matrices, again.matrices)


def test_paths_depend_only_on_position():
    p = table_params("cir", CIR_TABLE)
    small = sde.simulate(p, SimulationGrid(300, seed=5))
    big = sde.simulate(p, SimulationGrid(700, seed=5))
    assert np.array_equal(small.matrices, big.matrices[:300])


def test_explicit_normals_reproduce_internal_stream():
    p = table_params("gem", GEM_TABLE)
    g = SimulationGrid(300, seed=6)
    z = streams.brownian_normals(6, 300, g.n_steps, 1)
    a = sde.simulate(p, g)
    b = sde.simulate(p, g, normals=z)
    c = sde.simulate(p, g, normals=np.repeat(z, 9, axis=-1))
    assert np.array_equal(a.matrices, b.matrices)
    assert np.array_equal(a.matrices, c.matrices)
    with pytest.raises(ValueError):
        sde.simulate(p, g, normals=z[:, :10])


def test_independent_driver_differs_from_common():
    p = table_params("cir", CIR_TABLE)
    common = sde.simulate(p, SimulationGrid(50, seed=1))
    indep = sde.simulate(p, SimulationGrid(50, seed=1, driver="independent"))
    assert not np.array_equal(common.coords, indep.coords)
    # under a common driver, coordinates with equal parameters move together
    q = ModelParams("cir", 4, np.full(9, 0.3), np.full(9, 0.1), np.full(9, 0.4))
    ens = sde.simulate(q, SimulationGrid(20, seed=2))
    assert np.all(ens.coords == ens.coords[..., :1])


def test_to_series_drops_time_zero():
    p = table_params("cir", CIR_TABLE)
    ens = sde.simulate(p, SimulationGrid(3, obs_times=(0.0, 0.5)))
    s = ens.to_series()
    assert s.times.tolist() == [0.5]
    assert s.samples.shape == (3, 1, 4, 4)
