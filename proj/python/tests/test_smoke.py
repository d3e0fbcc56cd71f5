import json
import math
import os
import pathlib

import numpy as np
import pytest

import statlap

CONFIGS = pathlib.Path(os.environ.get("STATLAP_CONFIG_DIR", pathlib.Path(__file__).parents[2] / "configs"))


def flat_1d(n=64):
    return statlap.manifold_from_model("synthetic_flat", [math.pi], [2 * math.pi], [n])


def test_flat_spectrum_matches_fourier():
    m = flat_1d()
    spec = statlap.eigendecompose(m, 64)
    h = 2 * math.pi / 64
    expect = np.sort([4 / h**2 * math.sin(math.pi * k / 64) ** 2 for k in range(64)])
    assert spec.complete
    assert np.max(np.abs(spec.eigenvalues - expect)) < 1e-8


def test_weak_laplacian_symmetric():
    m = statlap.manifold_from_model("bernoulli", [0.5], [0.8], [32])
    L, B = statlap.weak_laplacian(m)
    assert L.shape == (32, 32)
    assert abs(L - L.T).max() == 0.0
    assert np.all(B.diagonal() > 0)


def test_closed_forms_and_monte_carlo():
    assert statlap.fisher("bernoulli", [0.25])[0, 0] == pytest.approx(16 / 3)
    assert statlap.amari_chentsov("bernoulli", [0.25])[0, 0, 0] == pytest.approx(128 / 9)
    est = statlap.fisher_mc("bernoulli", [0.25], 100000, 3)
    assert abs(est["value"][0] - 16 / 3) <= 4 * est["standard_error"][0]


def test_heat_and_distance():
    m = statlap.manifold_from_model("synthetic_trig", [math.pi] * 2, [2 * math.pi] * 2, [12, 12], alpha=1.0, f="model")
    spec = statlap.eigendecompose(m, 24)
    X = np.random.default_rng(0).normal(size=(m.node_count, 2))
    once = statlap.heat_apply(spec, 0.1, statlap.heat_apply(spec, 0.1, X))
    twice = statlap.heat_apply(spec, 0.2, X)
    assert np.max(np.abs(once - twice)) < 1e-10 * np.max(np.abs(X))
    d = statlap.vector_diffusion_distance(spec, m, 0.1, 3, 40)
    assert d["distance"] >= 0
    assert abs(d["trace_form"] - d["double_sum_form"]) < 1e-8 * max(1.0, d["trace_form"])
    D = statlap.vdd_matrix(spec, m, 0.1, list(range(0, m.node_count, 9)))
    assert np.array_equal(D, D.T)
    assert np.all(np.diag(D) == 0)


def test_strong_laplacian_forms():
    m = statlap.manifold_from_model("synthetic_trig", [math.pi] * 2, [2 * math.pi] * 2, [24, 24], f="model")
    grid = m.grid.coordinates()
    X = np.stack([np.sin(grid[:, 0]), np.cos(grid[:, 1])], axis=1)
    proof, expanded, gap = statlap.apply_strong_laplacian(m, X)
    assert proof.shape == X.shape
    assert gap < 0.1


def test_kernel_gram_psd():
    m = statlap.manifold_from_model("bernoulli", [0.5], [0.8], [48])
    spec = statlap.spectrum_for_time(m, 0.1)
    k = statlap.PosteriorKernel("bernoulli", {}, m, spec)
    G = k.gram([0.0, 1.0, 1.0, 0.0, 1.0], 0.1)
    assert np.allclose(G, G.T)
    assert np.linalg.eigvalsh(G).min() >= -1e-10
    assert k.distance(1.0, 1.0, 0.1) == 0.0


def test_errors_map_to_exceptions():
    with pytest.raises(statlap.ConfigError):
        statlap.manifold_from_model("poisson", [0.5], [1.0], [8])
    with pytest.raises(statlap.ParameterOutOfRange):
        statlap.fisher("bernoulli", [1.5])
    assert issubclass(statlap.ConfigError, statlap.StatlapError)


def test_run_config(tmp_path):
    report = statlap.run(CONFIGS / "flat_torus.json", output=tmp_path / "out", verify_only=True)
    assert report["status"] == "pass"
    assert (tmp_path / "out" / "report.json").exists()
    assert json.loads((tmp_path / "out" / "report.json").read_text())["checks"] == report["checks"]
