"""End-to-end acceptance criteria; one pass/fail line per criterion."""

import filecmp
import json
import time

import numpy as np
import pytest

from scorecraft.camera import Camera
from scorecraft.config import CameraConfig, load_config
from scorecraft.experiments import load_baselines, mu_ablation, texture_rounds
from scorecraft.gradcheck import COMPONENTS, TOLERANCES, priors_suite, run_suite
from scorecraft.losses import HYBRID_MU, cosine_normal_loss, hybrid_grad, pearson_depth_loss, sds_grad, vsd_grad
from scorecraft.pipeline import run_experiment
from scorecraft.priors import GaussianMixturePrior, Mixture, add_noise, schedule
from scorecraft.schedule import light_angle, sample_camera, sample_timestep
from scorecraft.tetra import (TetGrid, bcc_lattice, edge_degrees, is_consistently_oriented, marching_tetrahedra,
                              signed_volume)

pytestmark = pytest.mark.acceptance


def test_criterion_1_gradient_suites(verdict):
    t0 = time.perf_counter()
    results = [r for c in COMPONENTS for r in run_suite(c, seed=0)]
    elapsed = time.perf_counter() - t0
    checks = [(f"{r.suite}/{r.name} {r.max_rel_error:.1e} > {r.tolerance:.0e}", r.passed) for r in results]
    checks.append((f"runtime {elapsed:.0f}s >= 120s", elapsed < 120.0))
    assert {r.suite for r in results} == set(COMPONENTS)
    verdict(1, f"gradient suites ({len(results)} checks, {elapsed:.1f}s)", checks)


def test_criterion_2_score_oracle(verdict):
    res = priors_suite(np.random.default_rng(2), n_mixtures=100)
    assert [name for name, _ in res] == ["score[t=0.1]", "score[t=0.5]", "score[t=0.9]"]
    tol = TOLERANCES["priors"]
    verdict(2, "closed-form noise prediction vs numerical score, 100 mixtures x 3 times",
            [(f"{name} {err:.1e}", err <= tol) for name, err in res])


def _smooth_sdf(rng):
    centres = rng.uniform(-0.35, 0.35, (3, 3))
    radii = rng.uniform(0.15, 0.4, 3)
    w = rng.standard_normal((3, 3))

    def f(p):
        return np.min(np.linalg.norm(p[:, None] - centres[None], axis=-1) - radii, axis=1) + 0.03 * np.sin(p @ w).sum(1)
    return f


def test_criterion_3_mesh_validity(verdict):
    rng = np.random.default_rng(3)
    pos, tets = bcc_lattice(16, 1.0)
    boundary = np.max(np.abs(pos), axis=1) >= 1.0 - 1e-9
    checks = []
    for k in range(20):
        sdf = _smooth_sdf(rng)(pos)
        assert np.all(sdf[boundary] > 0)
        mesh = marching_tetrahedra(TetGrid(pos, sdf, np.zeros_like(pos), tets, 16, 1.0))
        checks.append((f"sdf {k} empty", not mesh.empty))
        checks.append((f"sdf {k} edge degree", bool(np.all(edge_degrees(mesh.triangles)[1] == 2))))
        checks.append((f"sdf {k} orientation", is_consistently_oriented(mesh.triangles)))
        checks.append((f"sdf {k} volume", signed_volume(mesh) > 0))
    verdict(3, "20 random smooth SDFs give watertight, consistently oriented, positive-volume meshes", checks)


def test_criterion_4_formula_identities(verdict):
    rng = np.random.default_rng(4)
    checks = []
    g2, g3 = rng.standard_normal(16), rng.standard_normal(16)
    checks.append(("hybrid default weight is 2", HYBRID_MU == 2.0))
    checks.append(("hybrid = g2 + 2 g3", np.array_equal(hybrid_grad(g2, g3), g2 + 2.0 * g3)))

    x, e = rng.random(16), rng.standard_normal(16)
    exact = GaussianMixturePrior({"y": Mixture(x[None], [0.0], [1.0]), None: Mixture(x[None], [0.0], [1.0])})
    checks.append(("sds zero at match", np.allclose(sds_grad(exact, x, 0.4, "y", e), 0.0, atol=1e-12)))

    class Echo:
        def predict(self, x_t, t, key=None):
            return e

    prior = GaussianMixturePrior({"y": Mixture(rng.random((3, 16)), [0.1, 0.2, 0.3], [0.2, 0.3, 0.5]),
                                  None: Mixture(rng.random((2, 16)), [0.4, 0.6], [0.5, 0.5])})
    for t in (0.1, 0.5, 0.9):
        checks.append((f"vsd with noise echo = sds at t={t}",
                       np.array_equal(vsd_grad(prior, Echo(), x, t, "y", None, e, cfg_scale=1.0),
                                      sds_grad(prior, x, t, "y", e, cfg_scale=1.0))))

    mask = rng.random((8, 8)) > 0.2
    d, ref = rng.uniform(1, 3, (8, 8)), rng.uniform(1, 3, (8, 8))
    base = pearson_depth_loss(d, ref, mask)[0]
    for a, b in ((0.5, 1.0), (3.0, -2.0), (1e3, 7.0)):
        checks.append((f"pearson affine a={a} b={b}", abs(pearson_depth_loss(a * d + b, ref, mask)[0] - base) <= 1e-12))

    n, nr = rng.standard_normal((8, 8, 3)), rng.standard_normal((8, 8, 3))
    val, grad = cosine_normal_loss(n, nr, mask)
    for k in (0.1, 4.0):
        v2, g2k = cosine_normal_loss(k * n, nr, mask)
        checks.append((f"cosine scale {k}", abs(v2 - val) <= 1e-12 and np.allclose(g2k * k, grad, atol=1e-12)))

    x0, eps = rng.random(32), rng.standard_normal(32)
    for t in (0.0, 0.1, 0.5, 0.9):
        a, s = schedule(t)
        xt = add_noise(x0, t, eps)
        checks.append((f"add_noise inverse t={t}", np.allclose((xt - s * eps) / a, x0, atol=1e-12)))
        checks.append((f"unit variance t={t}", abs(a * a + s * s - 1.0) <= 1e-15))
    verdict(4, "distillation, loss and noising identities", checks)


def test_criterion_5_scheduler(verdict):
    rng = np.random.default_rng(5)
    n = 10_000
    t0 = np.array([sample_timestep(0.0, rng) for _ in range(n)])
    t1 = np.array([sample_timestep(1.0, rng) for _ in range(n)])
    ref = Camera.orbit(0.0, 10.0, 3.8, 20.0, 8)
    cams = [sample_camera("neus", float(p), rng, ref) for p in rng.random(n)]
    free = [c for c in cams if not c.fixed_intrinsics]
    dist = np.array([c.distance for c in free])
    fov = np.array([c.fov for c in free])
    light = np.array([light_angle(c) for c in cams])
    default = CameraConfig()
    checks = [
        ("t at progress 0 in [0.7, 0.85]", t0.min() >= 0.7 and t0.max() <= 0.85),
        ("t at progress 0 spans its interval", t0.min() < 0.71 and t0.max() > 0.84),
        ("t at progress 1 in [0.2, 0.5]", t1.min() >= 0.2 and t1.max() <= 0.5),
        ("t at progress 1 spans its interval", t1.min() < 0.21 and t1.max() > 0.49),
        ("distance in [3.2, 3.5]", dist.min() >= 3.2 and dist.max() <= 3.5),
        ("distance spans range", dist.min() < 3.21 and dist.max() > 3.49),
        ("fov in [10, 20]", fov.min() >= 10.0 and fov.max() <= 20.0),
        ("fov spans range", fov.min() < 10.1 and fov.max() > 19.9),
        ("light angle in [0, pi/3]", light.min() >= 0.0 and light.max() <= np.pi / 3 + 1e-9),
        ("light angle spans range", light.max() > np.pi / 3 - 0.02),
        ("fixed intrinsics use defaults", all((c.distance, c.fov) == (default.default_distance, default.default_fov)
                                              for c in cams if c.fixed_intrinsics)),
    ]
    verdict(5, f"timestep and camera draws over {n} samples", checks)


def test_criterion_6_toy_recovery(verdict):
    base = load_baselines()
    checks, t_start = [], time.perf_counter()
    for name in ("sphere-toy", "torus-toy"):
        runs = texture_rounds(load_config(name))
        b = base[name]
        geo, r1, r2 = runs["geometry"], runs["rounds=1"], runs["rounds=2"]
        checks += [
            (f"{name} heldout IoU {r2['heldout_iou']:.4f} >= {b['heldout_iou_min']}",
             r2["heldout_iou"] >= b["heldout_iou_min"]),
            (f"{name} reference PSNR {r2['reference_psnr']:.3f} >= {b['reference_psnr_min']}",
             r2["reference_psnr"] >= b["reference_psnr_min"]),
            (f"{name} texture PSNR {r2['reference_psnr']:.2f} > geometry PSNR {geo['reference_psnr']:.2f}",
             r2["reference_psnr"] > geo["reference_psnr"]),
            (f"{name} 2 rounds {r2['reference_psnr']:.2f} >= 1 round {r1['reference_psnr']:.2f}",
             r2["reference_psnr"] >= r1["reference_psnr"]),
        ]
    elapsed = time.perf_counter() - t_start
    checks.append((f"runtime {elapsed:.0f}s < 900s", elapsed < 900.0))
    verdict(6, f"toy recovery against committed baselines ({elapsed:.0f}s)", checks)


def test_criterion_7_mu_ablation(verdict):
    res = mu_ablation(load_config("asymmetric-toy"))
    off, on = res["mu=0"]["heldout_iou"], res["mu=2"]["heldout_iou"]
    verdict(7, f"view-conditioned prior helps: IoU {off:.4f} (mu=0) < {on:.4f} (mu=2)",
            [("IoU(mu=0) < IoU(mu=2)", off < on)])


def test_criterion_8_determinism(verdict, tmp_path):
    cfg = load_config("smoke")
    a, b = tmp_path / "a", tmp_path / "b"
    sa, _ = run_experiment(cfg, a)
    sb, _ = run_experiment(cfg, b)
    checks = [("summary metrics identical", json.dumps(sa, sort_keys=True) == json.dumps(sb, sort_keys=True))]
    for name in ("metrics.jsonl", "events.jsonl", "final.obj", "turntable.ppm", "checkpoints/geometry.ckpt",
                 "checkpoints/final.ckpt", "checkpoints/last.ckpt"):
        checks.append((f"{name} identical", filecmp.cmp(a / name, b / name, shallow=False)))
    verdict(8, "two runs of one config and seed are bitwise identical", checks)
