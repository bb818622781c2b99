"""Paired runs behind the end-to-end regression checks.

Both helpers return plain dicts of metrics so the acceptance suite and the
baseline recorder read the same numbers.
"""

import json
from dataclasses import replace
from importlib import resources

import numpy as np

from .losses import sds_3d_grad
from .pipeline import (RunLog, compute_metrics, dataset_cameras, prepare, run_geometry_stage,
                       run_texture_stage)
from .priors import add_noise, fit_prior, view_bucket


def load_baselines():
    """Committed regression thresholds (``tools/record_baselines.py`` writes them)."""
    text = resources.files("scorecraft").joinpath("data/baselines.json").read_text(encoding="utf-8")
    return json.loads(text)["baselines"]


def texture_rounds(cfg, rounds=(1, 2)):
    """One geometry run, then the texture stage for each round count from a copy of it.

    The texture stage draws from its own generator, so the branch with
    ``cfg.texture.rounds`` rounds equals a full pipeline run.
    """
    gt, priors, pack = prepare(cfg)
    geo = run_geometry_stage(cfg, gt, priors, pack, RunLog())
    out = {"geometry": compute_metrics(geo, gt, cfg, pack)}
    for r in rounds:
        state = run_texture_stage(cfg, geo.copy(), priors, pack, RunLog(), rounds=r)
        out[f"rounds={r}"] = compute_metrics(state, gt, cfg, pack)
    return out


def mu_ablation(cfg, mus=(0.0, 2.0)):
    """Geometry-stage metrics for each weight of the view-conditioned prior."""
    out = {}
    for mu in mus:
        c = cfg.with_updates(geometry={"mu": mu})
        gt, priors, pack = prepare(c)
        state = run_geometry_stage(c, gt, priors, pack, RunLog())
        out[f"mu={mu:g}"] = compute_metrics(state, gt, c, pack)
    return out


def prior_fit_error(cfg, ts=(0.1, 0.5), seed=0):
    """``||eps_hat - eps|| / ||eps||`` averaged over dataset poses, prior fit on GT renders."""
    gt, _, _ = prepare(cfg)
    size = cfg.image_size
    cams = dataset_cameras(cfg, size)
    images = [gt.image(c, "rgb") for c in cams]
    prior = fit_prior(list(zip(images, cams)))
    rng = np.random.default_rng(seed)
    out = {}
    for t in ts:
        errs = []
        for img, cam in zip(images, cams):
            eps = rng.standard_normal(img.shape)
            pred = prior.predict_noise(add_noise(img, t, eps), t, view_bucket(cam.azimuth, cam.elevation))
            errs.append(np.linalg.norm(pred - eps) / np.linalg.norm(eps))
        out[f"t={t:g}"] = float(np.mean(errs))
    return out


def reference_sds3d_norm(cfg, t=0.5, seed=0):
    """Norm of the view-conditioned distillation gradient at the GT reference image."""
    _, priors, pack = prepare(cfg)
    eps = np.random.default_rng(seed).standard_normal(pack.rgb.shape)
    cam = replace(pack.camera, fixed_intrinsics=True)
    return float(np.linalg.norm(sds_3d_grad(priors.view_prior, pack.rgb, pack.rgb, cam, t, eps)))
