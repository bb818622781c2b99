"""Ground-truth toy scenes and the analytic priors built from them.

A scene is a union of primitives with a procedural texture. Its reference
renders come from a fine marching-tetrahedra mesh of the exact SDF drawn by
the mesh renderer. The priors stand in for pretrained models:

* ``prior_2d``: a front-biased mixture of ground-truth renders, keyed by
  image kind (``"rgb"`` or ``"normal"``). It knows what the object looks like
  from near the reference view only, at several intrinsics, so distilling it at
  back views reproduces the multi-face failure.
* ``view_prior``: per view bucket relative to the reference, renders at
  default intrinsics; conditioned on the reference image.
* ``texture_prior``: the same bucketed renders with a tighter spread, keyed
  by view bucket like a view-dependent prompt, plus ``"rgb"``/``None`` keys
  holding every bucket. Used to restore augmented renderings and as the class
  prior when refitting.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .camera import Camera
from .fields import GT_SCENES, ColorField, analytic_sdf, corner_positions, procedural_texture
from .bvh import build_bvh
from .mesh_render import render_mesh
from .priors import GaussianMixturePrior, Mixture, ViewPrior, view_bucket
from .tetra import TetGrid, bcc_lattice, marching_tetrahedra

GT_EXTENT = 1.0
GT_TEXTURE_RES = 64


@dataclass
class GroundTruth:
    name: str
    mesh: object
    texture: ColorField
    _bvh: object = field(default=None, repr=False)

    @property
    def bvh(self):
        if self._bvh is None:
            v, f = self.mesh.vertices, self.mesh.triangles
            self._bvh = build_bvh(v[f[:, 0]], v[f[:, 1]], v[f[:, 2]])
        return self._bvh

    def sdf(self, points):
        return analytic_sdf("gt-scene", {"scene": self.name}, points)

    def render(self, camera, mode="rgb"):
        return render_mesh(self.mesh, self.texture, camera, mode, bvh=self.bvh)

    def image(self, camera, kind="rgb"):
        return self.render(camera, "normal-map" if kind == "normal" else "rgb").rgb

    def surface_samples(self, n, rng):
        """Area-weighted uniform samples on the ground-truth mesh."""
        v, f = self.mesh.vertices, self.mesh.triangles
        area = 0.5 * np.linalg.norm(np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]]), axis=1)
        tri = rng.choice(f.shape[0], size=n, p=area / area.sum())
        r1, r2 = rng.random(n), rng.random(n)
        s = np.sqrt(r1)
        b0, b1, b2 = 1.0 - s, s * (1.0 - r2), s * r2
        return b0[:, None] * v[f[tri, 0]] + b1[:, None] * v[f[tri, 1]] + b2[:, None] * v[f[tri, 2]]


@lru_cache(maxsize=4)
def ground_truth(name, resolution=64):
    if name not in GT_SCENES:
        raise ValueError(f"unknown ground-truth scene {name!r}")
    positions, tets = bcc_lattice(resolution, GT_EXTENT)
    sdf = analytic_sdf("gt-scene", {"scene": name}, positions)
    grid = TetGrid(positions, sdf, np.zeros_like(positions), tets, resolution, GT_EXTENT)
    mesh = marching_tetrahedra(grid)
    tex = procedural_texture(corner_positions(GT_TEXTURE_RES, GT_EXTENT), GT_SCENES[name]["tint"])
    return GroundTruth(name, mesh, ColorField([tex], GT_EXTENT))


def reference_camera(cfg, size):
    c = cfg.camera
    return Camera.orbit(c.reference_azimuth, c.reference_elevation, c.default_distance,
                        c.default_fov, size)

@dataclass
class Priors:
    prior_2d: GaussianMixturePrior
    view_prior: ViewPrior
    texture_prior: GaussianMixturePrior


def build_priors(gt, cfg):
    """Construct the three analytic priors for a scene from ground-truth renders."""
    size = cfg.image_size
    cam_cfg, pc = cfg.camera, cfg.priors
    ref = reference_camera(cfg, size)
    intrinsics = [(cam_cfg.default_distance, cam_cfg.default_fov)] + [tuple(x) for x in pc.intrinsics]

    kinds = {"rgb": [], "normal": []}
    for rel in pc.front_azimuths:
        for el in pc.elevations:
            for dist, fov in intrinsics:
                cam = Camera.orbit(ref.azimuth + rel, el, dist, fov, size)
                for kind in kinds:
                    kinds[kind].append(gt.image(cam, kind).reshape(-1))
    mix2d = {}
    for kind, imgs in kinds.items():
        mix2d[kind] = Mixture(np.stack(imgs), [pc.gamma_2d] * len(imgs), np.full(len(imgs), 1.0 / len(imgs)))
    allimgs = kinds["rgb"] + kinds["normal"]
    mix2d[None] = Mixture(np.stack(allimgs), [pc.gamma_2d] * len(allimgs),
                          np.full(len(allimgs), 1.0 / len(allimgs)))

    buckets = {}
    for k in range(8):
        for el in pc.elevations:
            for off in pc.bucket_offsets:
                rel = 45.0 * k + off
                cam = Camera.orbit(ref.azimuth + rel, el, cam_cfg.default_distance, cam_cfg.default_fov, size)
                buckets.setdefault(view_bucket(rel, el), []).append(gt.image(cam, "rgb").reshape(-1))
    view_mix = {key: Mixture(np.stack(v), [pc.gamma_3d] * len(v), np.full(len(v), 1.0 / len(v)))
                for key, v in sorted(buckets.items())}
    ref_img = gt.image(ref, "rgb")
    view_prior = ViewPrior(ref_img, ref.azimuth, view_mix)

    tex = {key: Mixture(np.stack(v), [pc.gamma_texture] * len(v), np.full(len(v), 1.0 / len(v)))
           for key, v in sorted(buckets.items())}
    every = [img for key in sorted(buckets) for img in buckets[key]]
    tex["rgb"] = tex[None] = Mixture(np.stack(every), [pc.gamma_texture] * len(every),
                                     np.full(len(every), 1.0 / len(every)))
    texture_prior = GaussianMixturePrior(tex)
    return Priors(GaussianMixturePrior(mix2d), view_prior, texture_prior)
