import math

import numpy as np
import pytest

from penforest import simulation as sim


def test_shape_and_names():
    d, truth = sim.simulate(sim.SimSpec(n=1000, seed=0))
    assert (d.n, d.p) == (1000, 250)
    assert d.feature_names[0] == "x1" and d.feature_names[-1] == "x250"
    assert truth == sim.ground_truth()


def test_closed_form_response_at_one_half():
    X = np.full((1, 250), 0.5)
    decay = sum(0.9 ** (j / 3) for j in range(1, 201))
    block = (0.9 - 0.9 ** 46) / (1 - 0.9)  # geometric sum of 0.9^j, j=1..45
    want = 0.8 * math.sin(0.25) + 0.0 + 0.5 + 0.35 + 0.5 * decay + 0.5 * block
    assert sim.response(X)[0] == pytest.approx(want, rel=1e-13)
    assert sim.response(X, "block")[0] == pytest.approx(want, rel=1e-13)


def test_noise_free_target_equals_response():
    d, _ = sim.simulate(sim.SimSpec(n=50, seed=2, noise_sd=0.0))
    assert np.allclose(d.y, sim.response(d.X), rtol=1e-14, atol=0)


def population_block_correlation(sd: float) -> float:
    """corr(u, clamp(u + sd * z, 0, 1)) for u ~ U[0,1], z ~ N(0,1), by quadrature."""
    u = (np.arange(4000) + 0.5) / 4000
    z = np.linspace(-8, 8, 4001)
    w = np.exp(-z * z / 2)
    w /= w.sum()
    v = np.clip(u[:, None] + sd * z[None, :], 0.0, 1.0)
    ev = (v @ w).mean()
    evv = ((v * v) @ w).mean()
    euv = (u * (v @ w)).mean()
    return (euv - 0.5 * ev) / math.sqrt((1 / 12) * (evv - ev * ev))


def test_correlated_block_tracks_x5():
    rho = population_block_correlation(0.3)
    assert 0.69 < rho < 0.70  # the default noise sits right at the 0.7 boundary
    d, _ = sim.simulate(sim.SimSpec(n=1000, seed=3))
    x5 = d.X[:, 4]
    corr = np.array([np.corrcoef(x5, d.X[:, j])[0, 1] for j in range(205, 250)])
    # sampling sd of r at n=1000 is about 0.016; allow 4 of them per column
    assert np.all(np.abs(corr - rho) < 0.065)
    assert abs(corr.mean() - rho) < 0.01
    strong, _ = sim.simulate(sim.SimSpec(n=1000, seed=3, correlated_noise_sd=0.2))
    assert all(np.corrcoef(x5, strong.X[:, j])[0, 1] > 0.7 for j in range(205, 250))
    assert d.X[:, 205:].min() >= 0.0 and d.X[:, 205:].max() <= 1.0


def test_uniform_columns():
    d, _ = sim.simulate(sim.SimSpec(n=2000, seed=4))
    means = d.X[:, :205].mean(axis=0)
    assert np.all(np.abs(means - 0.5) < 0.05)
    assert d.X[:, :205].min() >= 0.0 and d.X[:, :205].max() < 1.0


def test_important_set():
    v = sim.important_set()
    assert len(v) == 136
    assert 135 in v and 136 not in v  # x136 in, x137 out
    assert set(range(5)) <= v
    assert not v & sim.correlated_set()
    # the cutoff index from 0.9^(k/3) > 0.01
    assert math.floor(3 * math.log(0.01) / math.log(0.9)) == 131


def test_determinism():
    a, _ = sim.simulate(sim.SimSpec(n=20, seed=9))
    b, _ = sim.simulate(sim.SimSpec(n=20, seed=9))
    c, _ = sim.simulate(sim.SimSpec(n=20, seed=10))
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)
    assert not np.array_equal(a.X, c.X)


def test_truth_sidecar_round_trip(tmp_path):
    truth = sim.ground_truth()
    sim.write_ground_truth(truth, tmp_path / "t.json")
    assert sim.read_ground_truth(tmp_path / "t.json") == truth


@pytest.mark.parametrize("kw", [dict(n=0), dict(noise_sd=-1), dict(correlated_term="z")])
def test_spec_validation(kw):
    with pytest.raises(ValueError):
        sim.SimSpec(**kw)
