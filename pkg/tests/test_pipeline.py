import json

import numpy as np
import pytest

from mvfund import io
from mvfund.admm import AdmmConfig
from mvfund.pipeline import PipelineConfig, run, worker_count
from mvfund.synth import SceneSpec, estimate_pairwise, generate_scene
from mvfund.viewing_graph import ViewingGraph, validate_cover


def problem(seed=0, sigma=0.0, points=2000, corrupt=None):
    b = generate_scene(SceneSpec(n_points=points, noise_sigma=sigma, seed=seed))
    G = estimate_pairwise(b, [(i, j) for i in range(b.n) for j in range(i + 1, b.n)])
    prob = io.problem_from_bundle(b, G)
    if corrupt is not None:
        rng = np.random.default_rng(seed)
        u, s, vt = np.linalg.svd(rng.normal(size=(3, 3)))
        M = prob.blocks[corrupt]
        prob.blocks[corrupt] = np.linalg.norm(M) * (u[:, :2] * s[:2]) @ vt[:2] / np.linalg.norm(s[:2])
    return prob


def test_noise_free_end_to_end():
    res = run(problem(), PipelineConfig.paper_parity())
    assert res.mean_error <= 1e-6
    assert len(res.reconstruction.cameras) == 10
    assert res.reconstruction.invalid_tracks == 0
    assert res.admm.final_sigma_ratio <= 1e-10


def test_noisy_pipeline_is_pixel_scale():
    res = run(problem(seed=1, sigma=1.0), PipelineConfig.paper_parity())
    assert 0.1 < res.mean_error < 10.0


@pytest.mark.parametrize("seed", [0, 1])
def test_corrupted_block_pruned(seed):
    prob = problem(seed=seed, points=1000, corrupt=(2, 5))
    res = run(prob, PipelineConfig.paper_parity())
    assert {2, 5} <= set(res.cover.removed[0])
    assert all(not {2, 5} <= set(t) for t in res.cover.triplets)
    assert validate_cover(res.cover, ViewingGraph(prob.n, prob.blocks, prob.weights)).ok
    assert res.mean_error <= 1e-6


def test_diagnostics_are_plain_data():
    res = run(problem(points=500), PipelineConfig(admm=AdmmConfig(iterations=50, early_stop_residual=0.0)))
    d = res.diagnostics()
    json.dumps(d)  # plain data only
    assert d["cover_size"] == len(d["cover_triplets"]) and d["admm_iterations"] == 50
    assert len(d["admm_residuals"]) == 50


def test_thread_count_does_not_change_result(monkeypatch):
    prob = problem(points=500)
    cfg = PipelineConfig(admm=AdmmConfig(iterations=100))
    monkeypatch.setenv("MVFUND_THREADS", "1")
    a = run(prob, cfg)
    monkeypatch.setenv("MVFUND_THREADS", "4")
    b = run(prob, cfg)
    assert a.diagnostics() == b.diagnostics()
    assert all(np.array_equal(p, q) for p, q in zip(a.reconstruction.cameras, b.reconstruction.cameras))


def test_worker_count(monkeypatch):
    monkeypatch.setenv("MVFUND_THREADS", "3")
    assert worker_count() == 3
    assert worker_count(0) == 1
    monkeypatch.delenv("MVFUND_THREADS")
    assert worker_count() >= 1


def test_paper_parity_config():
    cfg = PipelineConfig.paper_parity()
    assert cfg.admm.alpha == 1e-3 and cfg.admm.iterations == 1000 and cfg.admm.early_stop_residual == 0
    assert cfg.cover.n_trees == 5 and cfg.cover.delta1 == 0.03
    assert cfg.cover.delta2(0.6) == 0.0 and cfg.cover.delta2(0.4) == 1.2
