"""Optimisation pipeline: geometry sculpting then texture boosting.

Geometry runs two phases. The implicit phase optimises multi-resolution SDF
and colour grids through the volume renderer. The mesh phase converts the
field to a deformable tetrahedral grid and keeps optimising through the mesh
renderer, alternating normal-map and RGB iterations. Both phases combine
reference-view losses with a hybrid of 2D and view-conditioned distillation
at randomly sampled cameras.

Texture boosting freezes the tetrahedral grid and alternates refitting a
view-bucketed prior on augmented renderings with inner steps of
bootstrapped distillation on the texture grid, while an online estimator
tracks the rendering distribution.

Randomness comes from one generator per stage seeded by ``(seed, stage)``,
so a stage replays identically whatever ran before it.
"""

import hashlib
import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .bvh import build_bvh
from .camera import Camera
from .config import ExperimentConfig
from .fields import ColorField, SdfField, color_eval, field_from_arrays, field_to_arrays, init_field
from .image import mask_iou, psnr, strip
from .io import CheckpointError, read_container, write_container, write_obj, write_ppm
from .losses import (ReferencePack, bsd_grad, cosine_normal_loss, hybrid_grad, mask_loss,
                     masked_rgb_loss, pearson_depth_loss, sds_3d_grad, sds_grad)
from .mesh_render import render_mesh, render_mesh_with_vjp
from .neus import NeusOptions, render_neus, render_neus_with_vjp
from .priors import OnlineScoreEstimator, augment_renderings, fit_prior, view_bucket
from .scenes import GT_EXTENT, build_priors, ground_truth, reference_camera
from .schedule import PHASES, Adam, sample_camera, sample_timestep, steepness
from .tetra import (TetGrid, bcc_lattice, grid_from_arrays, grid_to_arrays, init_grid_from_field,
                    marching_tetrahedra, mesh_normals, vertex_adjoint)

STAGE_SEEDS = {"geometry": 1, "texture": 2, "metrics": 3}
WHITE = (1.0, 1.0, 1.0)


class DivergenceError(RuntimeError):
    pass


def stage_rng(seed, stage):
    return np.random.default_rng([int(seed), STAGE_SEEDS[stage]])


@dataclass
class SceneState:
    """Current scene representation plus iteration counter and phase tag."""

    phase: str
    iteration: int = 0
    sdf: SdfField = None
    color: ColorField = None
    grid: TetGrid = None
    texture: ColorField = None
    _mesh: object = field(default=None, repr=False)

    def advance(self, phase):
        if PHASES.index(phase) < PHASES.index(self.phase):
            raise ValueError(f"phase cannot move back from {self.phase!r} to {phase!r}")
        self.phase = phase

    @property
    def mesh(self):
        if self.grid is None:
            return None
        if self._mesh is None:
            self._mesh = marching_tetrahedra(self.grid)
        return self._mesh

    def invalidate(self):
        self._mesh = None

    def copy(self):
        return SceneState(self.phase, self.iteration,
                          None if self.sdf is None else self.sdf.copy(),
                          None if self.color is None else self.color.copy(),
                          None if self.grid is None else self.grid.copy(),
                          None if self.texture is None else self.texture.copy())

    def geometry_hash(self):
        h = hashlib.sha256()
        if self.grid is not None:
            h.update(np.ascontiguousarray(self.grid.sdf).tobytes())
            h.update(np.ascontiguousarray(self.grid.offsets).tobytes())
        if self.sdf is not None:
            for lv in self.sdf.levels:
                h.update(np.ascontiguousarray(lv).tobytes())
        return h.hexdigest()


class RunLog:
    """Per-iteration metrics, events and periodic checkpoints.

    Without a directory everything stays in memory.
    """

    def __init__(self, directory=None, config=None, checkpoint_every=None):
        self.dir = Path(directory) if directory is not None else None
        self.config = config
        self.checkpoint_every = checkpoint_every
        self.metrics = []
        self.events = []
        if self.dir is not None:
            (self.dir / "checkpoints").mkdir(parents=True, exist_ok=True)
            self._metrics_fh = open(self.dir / "metrics.jsonl", "a", encoding="utf-8")
            self._events_fh = open(self.dir / "events.jsonl", "a", encoding="utf-8")

    def metric(self, record):
        self.metrics.append(record)
        if self.dir is not None:
            self._metrics_fh.write(json.dumps(record, sort_keys=True) + "\n")

    def event(self, record):
        self.events.append(record)
        if self.dir is not None:
            self._events_fh.write(json.dumps(record, sort_keys=True) + "\n")

    def maybe_checkpoint(self, state):
        if self.dir is None or not self.checkpoint_every:
            return
        if state.iteration % self.checkpoint_every == 0:
            self.checkpoint(state, "last.ckpt")

    def checkpoint(self, state, name):
        if self.dir is None:
            return None
        path = self.dir / "checkpoints" / name
        tmp = path.with_suffix(".tmp")
        save_state(tmp, state, self.config)
        os.replace(tmp, path)
        return path

    def close(self):
        if self.dir is not None:
            self._metrics_fh.close()
            self._events_fh.close()


def _check_finite(state, arrays, where):
    for name, arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise DivergenceError(f"non-finite values in {name} during {where} at iteration {state.iteration}")


def _cam_record(cam):
    return {"azimuth": cam.azimuth, "elevation": cam.elevation, "distance": cam.distance,
            "fov": cam.fov, "fixed_intrinsics": cam.fixed_intrinsics}


def make_reference(gt, cfg):
    """Reference pack rendered from the ground truth at the reference camera."""
    cam = reference_camera(cfg, cfg.image_size)
    out = gt.render(cam, "rgb")
    return ReferencePack(rgb=out.rgb, mask=out.mask, depth=out.depth, normal=out.normal, camera=cam)


def _reference_losses(out, pack, w, use_rgb=True, use_mask=True):
    """Weighted reference-view losses and the matching image-space adjoint."""
    losses, adj = {}, {}
    if use_rgb:
        losses["rgb"], g = masked_rgb_loss(out.rgb, pack)
        adj["rgb"] = w["rgb"] * g
    losses["mask"], g = mask_loss(out.mask, pack.mask)
    if use_mask:
        adj["mask"] = w["mask"] * g
    both = (pack.mask > 0.5) & (out.mask > 0.5)
    try:
        losses["depth"], g = pearson_depth_loss(out.depth, pack.depth, both)
        adj["depth"] = w["depth"] * g
    except ValueError:
        losses["depth"] = 0.0
    sel = both & (np.linalg.norm(out.normal, axis=-1) > 0.5)
    losses["normal"], g = cosine_normal_loss(out.normal, pack.normal, sel)
    adj["normal"] = w["normal"] * g
    return losses, adj


def _distill(priors, cfg, pack, out, cam, t, eps, kind):
    g = cfg.geometry
    g2d = sds_grad(priors.prior_2d, out.rgb, t, kind, eps, g.cfg_scale)
    if kind == "rgb" and cam.fixed_intrinsics and g.mu > 0.0:
        g3d = sds_3d_grad(priors.view_prior, out.rgb, pack.rgb, cam, t, eps)
    else:
        g3d = np.zeros_like(g2d)
    return hybrid_grad(g2d, g3d, g.mu)


def _neus_opts(cam, cfg, s):
    g = cfg.geometry
    return NeusOptions(samples_per_ray=g.samples_per_ray, near=cam.distance - g.ray_half_range,
                       far=cam.distance + g.ray_half_range, sharpness=s, background=WHITE)


def initial_state(cfg):
    g = cfg.geometry
    sdf, color = init_field("sphere", {"radius": g.init_radius}, g.field_resolutions,
                            sharpness=g.sharpness_start)
    return SceneState("neus", 0, sdf=sdf, color=color)


def run_geometry_stage(cfg, gt, priors, pack, log=None, state=None):
    """Implicit phase then mesh phase; returns the post-geometry state."""
    log = log or RunLog()
    g, tc = cfg.geometry, cfg.timestep
    rng = stage_rng(cfg.seed, "geometry")
    state = state or initial_state(cfg)
    total = g.neus_iters + g.dmtet_iters
    w = {"rgb": g.w_rgb, "mask": g.w_mask, "depth": g.w_depth, "normal": g.w_normal}
    ref_cam = pack.camera
    size = cfg.image_size

    sdf, color = state.sdf, state.color
    levels = len(sdf.levels)
    order = np.argsort(sdf.resolutions, kind="stable")
    rank = np.empty(levels, dtype=int)
    rank[order] = np.arange(levels)
    opt = Adam([g.lr_sdf] * levels + [g.lr_color] * levels)
    log.event({"event": "phase", "phase": "neus", "iteration": state.iteration})
    for it in range(g.neus_iters):
        progress = it / total
        s = steepness(it, g.sharpness_start, g.sharpness_end, g.sharpness_double_every)
        sdf.sharpness = s
        out, vjp = render_neus_with_vjp(sdf, color, ref_cam, _neus_opts(ref_cam, cfg, s))
        losses, adj = _reference_losses(out, pack, w)
        grad_ref = vjp(adj)

        cam = sample_camera("neus", progress, rng, ref_cam, cfg.camera, size)
        t = sample_timestep(progress / tc.anneal_fraction, rng, tc.start, tc.end)
        eps = rng.standard_normal((size, size, 3))
        out_n, vjp_n = render_neus_with_vjp(sdf, color, cam, _neus_opts(cam, cfg, s))
        gd = _distill(priors, cfg, pack, out_n, cam, t, eps, "rgb")
        grad_n = vjp_n({"rgb": g.w_sds * gd})
        losses["distill"] = float(np.sqrt(np.sum(gd * gd)))

        active = [it >= rank[i] * g.unfreeze_every for i in range(levels)] * 2
        opt.step(sdf.levels + color.levels,
                 [a + b for a, b in zip(grad_ref.sdf + grad_ref.color, grad_n.sdf + grad_n.color)],
                 active)
        state.iteration += 1
        _check_finite(state, [("sdf", lv) for lv in sdf.levels] + [("color", lv) for lv in color.levels], "neus")
        log.metric({"iter": state.iteration, "phase": "neus", "t": t, "steepness": s,
                    "camera": _cam_record(cam), "losses": losses})
        log.maybe_checkpoint(state)

    # mesh phase
    grid = init_grid_from_field(sdf, g.tet_resolution, g.tet_extent)
    grid.sdf = np.array(grid.sdf)
    texture = color.copy()
    state.grid, state.texture = grid, texture
    state.advance("dmtet-geometry")
    state.invalidate()
    log.event({"event": "phase", "phase": "dmtet-geometry", "iteration": state.iteration})
    tlev = len(texture.levels)
    opt = Adam([g.lr_tet_sdf, g.lr_offset] + [g.lr_texture] * tlev)
    for j in range(g.dmtet_iters):
        progress = (g.neus_iters + j) / total
        state.invalidate()
        mesh = state.mesh
        if mesh.empty:
            raise DivergenceError(f"surface vanished at iteration {state.iteration}")
        v, f = mesh.vertices, mesh.triangles
        bvh = build_bvh(v[f[:, 0]], v[f[:, 1]], v[f[:, 2]])
        kind = "normal" if j % 2 == 0 else "rgb"
        mode = "normal-map" if kind == "normal" else "rgb"

        out, vjp = render_mesh_with_vjp(mesh, texture, ref_cam, "rgb", WHITE, bvh)
        losses, adj = _reference_losses(out, pack, w, use_rgb=True, use_mask=False)
        d_vert = vjp(adj, "vertices")
        d_tex = vjp(adj, "texture")

        cam = sample_camera("dmtet-geometry", progress, rng, ref_cam, cfg.camera, size)
        t = sample_timestep(progress / tc.anneal_fraction, rng, tc.start, tc.end)
        eps = rng.standard_normal((size, size, 3))
        out_n, vjp_n = render_mesh_with_vjp(mesh, texture, cam, mode, WHITE, bvh)
        gd = _distill(priors, cfg, pack, out_n, cam, t, eps, kind)
        d_vert = d_vert + vjp_n({"rgb": g.w_sds * gd}, "vertices")
        if kind == "rgb":
            d_tex = [a + b for a, b in zip(d_tex, vjp_n({"rgb": g.w_sds * gd}, "texture"))]
        losses["distill"] = float(np.sqrt(np.sum(gd * gd)))

        d_sdf, d_off = vertex_adjoint(grid, mesh, d_vert)
        opt.step([grid.sdf, grid.offsets] + texture.levels, [d_sdf, d_off] + d_tex)
        grid.clamp_offsets()
        state.iteration += 1
        _check_finite(state, [("tet sdf", grid.sdf), ("offsets", grid.offsets)]
                      + [("texture", lv) for lv in texture.levels], "dmtet-geometry")
        log.metric({"iter": state.iteration, "phase": "dmtet-geometry", "t": t, "mode": mode,
                    "camera": _cam_record(cam), "losses": losses})
        log.maybe_checkpoint(state)
    state.invalidate()
    return state


def dataset_cameras(cfg, size):
    """``m`` poses spread over azimuth and the two elevation bands."""
    m = cfg.texture.views
    elevations = cfg.priors.elevations
    per_ring = int(np.ceil(m / len(elevations)))
    cams = []
    for i in range(m):
        el = elevations[i % len(elevations)]
        az = cfg.camera.reference_azimuth + 360.0 * (i // len(elevations)) / per_ring
        cams.append(Camera.orbit(az, el, cfg.camera.default_distance, cfg.camera.default_fov, size))
    return cams


def run_texture_stage(cfg, state, priors, pack, log=None, rounds=None):
    """Bootstrapped distillation on the texture grid with the geometry frozen."""
    log = log or RunLog()
    tc = cfg.texture
    rounds = tc.rounds if rounds is None else rounds
    if state.phase not in ("dmtet-geometry", "texture"):
        raise ValueError("texture stage needs a mesh-phase state")
    rng = stage_rng(cfg.seed, "texture")
    size = cfg.image_size
    ref_cam = pack.camera
    before = state.geometry_hash()
    state.advance("texture")
    state.invalidate()
    mesh = state.mesh
    v, f = mesh.vertices, mesh.triangles
    bvh = build_bvh(v[f[:, 0]], v[f[:, 1]], v[f[:, 2]])
    texture = state.texture
    opt = Adam([tc.lr_texture] * len(texture.levels))
    est = OnlineScoreEstimator(tc.lr_estimator, tc.estimator_init_var)
    poses = dataset_cameras(cfg, size)
    # geometry is frozen, so every pixel the mesh covers at the reference view is
    # fit to the reference colour, background included
    covered = render_mesh(mesh, texture, ref_cam, "rgb", WHITE, bvh).mask
    tex_pack = replace(pack, mask=np.maximum(pack.mask, covered))

    def bucket(cam):
        return view_bucket(cam.azimuth - ref_cam.azimuth, cam.elevation)

    log.event({"event": "phase", "phase": "texture", "iteration": state.iteration})
    for r in range(rounds):
        renders = [render_mesh(mesh, texture, c, "rgb", WHITE, bvh).rgb for c in poses]
        augmented = augment_renderings(priors.texture_prior, renders, tc.t_prime[r], rng,
                                       conditions=[bucket(c) for c in poses])
        refit = fit_prior(list(zip(augmented, poses)), priors.texture_prior, tc.class_weight,
                          bucket_of=bucket)
        log.event({"event": "fit_prior", "round": r, "t_prime": tc.t_prime[r], "views": len(poses),
                   "iteration": state.iteration})
        for i in range(tc.inner_steps):
            # dataset poses cover every bucket and align exactly with the refit components
            cam = poses[int(rng.integers(len(poses)))]
            t = float(rng.uniform(*tc.timestep))
            eps = rng.standard_normal((size, size, 3))
            out, vjp = render_mesh_with_vjp(mesh, texture, cam, "rgb", WHITE, bvh)
            key = bucket(cam)
            est = est.ensure(key, out.rgb)
            gd = bsd_grad(refit, est, out.rgb, t, key, key, eps, tc.cfg_scale)
            d_tex = vjp({"rgb": tc.w_bsd * gd}, "texture")
            out_r, vjp_r = render_mesh_with_vjp(mesh, texture, ref_cam, "rgb", WHITE, bvh)
            l_rgb, g_rgb = masked_rgb_loss(out_r.rgb, tex_pack)
            d_ref = vjp_r({"rgb": tc.w_rgb * g_rgb}, "texture")
            opt.step(texture.levels, [a + b for a, b in zip(d_tex, d_ref)])
            est = est.update(out.rgb, t, eps, key)
            state.iteration += 1
            _check_finite(state, [("texture", lv) for lv in texture.levels], "texture")
            log.event({"event": "estimator_update", "round": r, "step": i, "bucket": list(key)})
            log.metric({"iter": state.iteration, "phase": "texture", "t": t, "round": r,
                        "camera": _cam_record(cam),
                        "losses": {"rgb": l_rgb, "distill": float(np.sqrt(np.sum(gd * gd)))}})
            log.maybe_checkpoint(state)
    if state.geometry_hash() != before:
        raise RuntimeError("texture stage modified the geometry")
    return state


# --- evaluation ----------------------------------------------------------


def render_state(state, camera, mode="rgb", cfg=None):
    if state.phase == "neus":
        s = state.sdf.sharpness
        opts = NeusOptions(samples_per_ray=cfg.geometry.samples_per_ray if cfg else 64,
                           near=camera.distance - (cfg.geometry.ray_half_range if cfg else 1.0),
                           far=camera.distance + (cfg.geometry.ray_half_range if cfg else 1.0),
                           sharpness=s, background=WHITE)
        return render_neus(state.sdf, state.color, camera, opts)
    return render_mesh(state.mesh, state.texture, camera, mode, WHITE)


def heldout_cameras(cfg, size):
    n = cfg.metrics.heldout_views
    c = cfg.camera
    return [Camera.orbit(c.reference_azimuth + 22.5 + 360.0 * k / n, cfg.metrics.heldout_elevation,
                         c.default_distance, c.default_fov, size) for k in range(n)]


def _surface_samples(mesh, n, rng):
    v, f = mesh.vertices, mesh.triangles
    area = 0.5 * np.linalg.norm(np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]]), axis=1)
    tri = rng.choice(f.shape[0], size=n, p=area / area.sum())
    r1, r2 = rng.random(n), rng.random(n)
    s = np.sqrt(r1)
    return ((1.0 - s)[:, None] * v[f[tri, 0]] + (s * (1.0 - r2))[:, None] * v[f[tri, 1]]
            + (s * r2)[:, None] * v[f[tri, 2]])


def _nearest(a, b, chunk=2048):
    out = np.empty(a.shape[0])
    bb = np.einsum("ij,ij->i", b, b)
    for i in range(0, a.shape[0], chunk):
        x = a[i:i + chunk]
        d2 = np.einsum("ij,ij->i", x, x)[:, None] - 2.0 * x @ b.T + bb[None, :]
        out[i:i + chunk] = np.sqrt(np.maximum(d2.min(axis=1), 0.0))
    return out


def chamfer(a, b):
    """Symmetric mean nearest-neighbour distance between two point sets."""
    return float(0.5 * (_nearest(a, b).mean() + _nearest(b, a).mean()))


def compute_metrics(state, gt, cfg, pack=None):
    """Reference PSNR, held-out PSNR / mask IoU and Chamfer distance to the ground truth."""
    size = cfg.image_size
    pack = pack or make_reference(gt, cfg)
    ref = render_state(state, pack.camera, cfg=cfg)
    rec = {"reference_psnr": float(psnr(ref.rgb, pack.rgb))}
    ps, ious = [], []
    for cam in heldout_cameras(cfg, size):
        out = render_state(state, cam, cfg=cfg)
        want = gt.render(cam, "rgb")
        ps.append(psnr(out.rgb, want.rgb))
        ious.append(mask_iou(out.mask, want.mask))
    rec["heldout_psnr"] = float(np.mean(ps))
    rec["heldout_iou"] = float(np.mean(ious))
    mesh = state.mesh if state.grid is not None else marching_tetrahedra(
        init_grid_from_field(state.sdf, cfg.geometry.tet_resolution, cfg.geometry.tet_extent))
    if mesh.empty:
        rec["chamfer"] = float("inf")
    else:
        rng = stage_rng(cfg.seed, "metrics")
        n = cfg.metrics.chamfer_samples
        rec["chamfer"] = chamfer(_surface_samples(mesh, n, rng), gt.surface_samples(n, rng))
    return rec


def gt_state(name, resolution=64):
    """A texture-phase state holding the ground-truth scene itself."""
    gt = ground_truth(name, resolution)
    positions, tets = bcc_lattice(resolution, GT_EXTENT)
    sdf = gt.sdf(positions)
    grid = TetGrid(positions, sdf, np.zeros_like(positions), tets, resolution, GT_EXTENT)
    return SceneState("texture", 0, grid=grid, texture=gt.texture)


# --- checkpoints ---------------------------------------------------------


def _color_arrays(prefix, color):
    arrays = {f"{prefix}{i}": lv for i, lv in enumerate(color.levels)}
    return arrays, {"levels": len(color.levels), "radius": color.radius,
                    "background": [float(x) for x in color.background]}


def save_state(path, state, config=None):
    arrays = {}
    meta = {"phase": state.phase, "iteration": state.iteration}
    if state.sdf is not None:
        a, m = field_to_arrays("field/", state.sdf, state.color)
        arrays.update(a)
        meta["field"] = m
    if state.grid is not None:
        a, m = grid_to_arrays(state.grid)
        arrays.update(a)
        meta["grid"] = m
        a, m = _color_arrays("texture/", state.texture)
        arrays.update(a)
        meta["texture"] = m
    docs = {"state": meta}
    if config is not None:
        docs["config"] = config.model_dump(mode="json")
    write_container(path, arrays, docs)


def load_state(path):
    """Read a checkpoint; returns ``(state, config or None)``."""
    arrays, docs = read_container(path)
    meta = docs.get("state")
    if meta is None:
        raise CheckpointError("state", "missing")
    state = SceneState(meta["phase"], int(meta["iteration"]))
    if "field" in meta:
        state.sdf, state.color = field_from_arrays("field/", arrays, meta["field"])
    if "grid" in meta:
        state.grid = grid_from_arrays(arrays, meta["grid"])
        tm = meta["texture"]
        state.texture = ColorField([arrays[f"texture/{i}"] for i in range(tm["levels"])], tm["radius"],
                                   np.array(tm["background"]))
    cfg = ExperimentConfig.model_validate(docs["config"]) if "config" in docs else None
    return state, cfg


def export_obj(path, state):
    mesh = state.mesh if state.grid is not None else marching_tetrahedra(init_grid_from_field(state.sdf))
    if mesh.empty:
        raise ValueError("nothing to export: the extracted mesh is empty")
    tex = state.texture if state.texture is not None else state.color
    colors, _ = color_eval(tex, mesh.vertices)
    write_obj(path, mesh.vertices, mesh.triangles, mesh_normals(mesh), colors)
    return mesh


def turntable(state, cfg, n=8):
    size = cfg.image_size
    c = cfg.camera
    frames = [render_state(state, Camera.orbit(c.reference_azimuth + 360.0 * k / n, c.reference_elevation,
                                               c.default_distance, c.default_fov, size), cfg=cfg).rgb
              for k in range(n)]
    return strip(frames)


# --- driver --------------------------------------------------------------


def prepare(cfg):
    gt = ground_truth(cfg.scene.name, cfg.priors.gt_mesh_resolution)
    return gt, build_priors(gt, cfg), make_reference(gt, cfg)


def run_experiment(cfg, out_dir=None, force=False):
    """Full run; with ``out_dir`` writes checkpoints, logs, OBJ and turntable.

    Returns a summary with metrics after the geometry and texture stages.
    """
    if out_dir is not None:
        out = Path(out_dir)
        if out.exists() and any(out.iterdir()) and not force:
            raise FileExistsError(f"output directory {out} is not empty (use force to overwrite)")
        if out.exists() and force:
            for name in ("metrics.jsonl", "events.jsonl"):
                (out / name).unlink(missing_ok=True)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "config.json", "w", encoding="utf-8") as fh:
            json.dump(cfg.model_dump(mode="json"), fh, indent=2, sort_keys=True)
    log = RunLog(out_dir, cfg, cfg.checkpoint_every)
    try:
        gt, priors, pack = prepare(cfg)
        state = run_geometry_stage(cfg, gt, priors, pack, log)
        log.checkpoint(state, "geometry.ckpt")
        summary = {"geometry": compute_metrics(state, gt, cfg, pack)}
        state = run_texture_stage(cfg, state, priors, pack, log)
        log.checkpoint(state, "final.ckpt")
        log.checkpoint(state, "last.ckpt")
        summary["texture"] = compute_metrics(state, gt, cfg, pack)
    finally:
        log.close()
    if out_dir is not None:
        out = Path(out_dir)
        export_obj(out / "final.obj", state)
        write_ppm(out / "turntable.ppm", turntable(state, cfg))
        with open(out / "summary.json", "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
    return summary, state
