"""Analytic diffusion priors.

Images are treated as flat vectors of length D. The forward process uses the
cosine schedule ``alpha = cos(t pi / 2)``, ``sigma = sin(t pi / 2)`` and
``x_t = alpha x_0 + sigma eps``.

A Gaussian-mixture data density with isotropic components ``N(m_k, g_k^2 I)``
stays a mixture under noising::

    p_t(x) = sum_k w_k N(x; alpha m_k, s_k^2 I),   s_k^2 = alpha^2 g_k^2 + sigma^2

so its noise prediction ``-sigma grad log p_t`` and its posterior mean
``E[x_0 | x_t]`` are available in closed form. Component responsibilities are
computed with log-sum-exp.

Three concrete priors are built from that:

* :class:`GaussianMixturePrior` holds one mixture per condition key (``None``
  is the unconditional branch used by guidance).
* :class:`ViewPrior` answers queries conditioned on a reference image and a
  camera pose relative to it.
* :class:`OnlineScoreEstimator` keeps a single Gaussian per view bucket and is
  trained online by denoising score matching.
"""

from dataclasses import dataclass

import numpy as np

GAMMA_MIN = 0.01
RESTORE_STEPS = 20
AZIMUTH_BINS = 8
ELEVATION_SPLIT = 15.0


def schedule(t):
    """Cosine schedule ``(alpha_t, sigma_t)`` for scalar ``t`` in [0, 1]."""
    t = float(t)
    if not 0.0 <= t <= 1.0 or not np.isfinite(t):
        raise ValueError(f"diffusion time must lie in [0, 1], got {t}")
    if t == 1.0:
        return 0.0, 1.0
    return float(np.cos(t * np.pi / 2.0)), float(np.sin(t * np.pi / 2.0))


def add_noise(x0, t, eps):
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise ValueError(f"shape mismatch: image {x0.shape} vs noise {eps.shape}")
    a, s = schedule(t)
    return a * x0 + s * eps


def cfg_combine(eps_cond, eps_uncond, scale):
    """Classifier-free guidance ``eps_c + s (eps_c - eps_u)``."""
    eps_cond = np.asarray(eps_cond, dtype=np.float64)
    eps_uncond = np.asarray(eps_uncond, dtype=np.float64)
    if eps_cond.shape != eps_uncond.shape:
        raise ValueError("guidance inputs differ in shape")
    if scale < 0:
        raise ValueError("guidance scale must be non-negative")
    return eps_cond + scale * (eps_cond - eps_uncond)


@dataclass(frozen=True)
class Mixture:
    """Isotropic Gaussian mixture over flat vectors.

    Attributes:
        means: (K, D) component means.
        gammas: (K,) component standard deviations, non-negative.
        weights: (K,) positive weights summing to one.
    """

    means: np.ndarray
    gammas: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        gammas = np.asarray(self.gammas, dtype=np.float64).reshape(-1)
        weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if not (means.shape[0] == gammas.size == weights.size) or means.shape[0] == 0:
            raise ValueError("mixture arrays disagree on the component count")
        if np.any(gammas < 0):
            raise ValueError("component stdev must be non-negative")
        if np.any(weights <= 0) or abs(weights.sum() - 1.0) > 1e-9:
            raise ValueError("mixture weights must be positive and sum to one")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "gammas", gammas)
        object.__setattr__(self, "weights", weights)

    @property
    def dim(self):
        return self.means.shape[1]

    def _terms(self, x, t):
        a, s = schedule(t)
        var = a * a * self.gammas ** 2 + s * s
        diff = x[None, :] - a * self.means
        return a, s, var, diff

    def log_density(self, x, t):
        """``log p_t(x)`` of the noised mixture (needs ``s_k > 0``)."""
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        _, _, var, diff = self._terms(x, t)
        d = x.size
        logs = (np.log(self.weights) - 0.5 * d * np.log(2.0 * np.pi * var)
                - 0.5 * np.einsum("kd,kd->k", diff, diff) / var)
        top = logs.max()
        return float(top + np.log(np.exp(logs - top).sum()))

    def responsibilities(self, x, t):
        _, _, var, diff = self._terms(x, t)
        safe = np.where(var > 0, var, 1.0)
        logs = (np.log(self.weights) - 0.5 * x.size * np.log(safe)
                - 0.5 * np.einsum("kd,kd->k", diff, diff) / safe)
        logs -= logs.max()
        r = np.exp(logs)
        return r / r.sum()

    def predict_noise(self, x_t, t):
        x = np.asarray(x_t, dtype=np.float64).reshape(-1)
        a, s, var, diff = self._terms(x, t)
        if s == 0.0:
            return np.zeros_like(x)
        r = self.responsibilities(x, t)
        return s * np.einsum("k,kd->d", r / var, diff)

    def predict_x0(self, x_t, t):
        """Posterior mean ``E[x_0 | x_t]``."""
        x = np.asarray(x_t, dtype=np.float64).reshape(-1)
        a, s, var, diff = self._terms(x, t)
        if s == 0.0:
            return x.copy()
        r = self.responsibilities(x, t)
        gain = a * self.gammas ** 2 / var
        return np.einsum("k,kd->d", r, self.means + gain[:, None] * diff)


class GaussianMixturePrior:
    """Condition-keyed family of mixtures; key ``None`` is unconditional."""

    def __init__(self, mixtures):
        if not mixtures:
            raise ValueError("a prior needs at least one mixture")
        dims = {m.dim for m in mixtures.values()}
        if len(dims) != 1:
            raise ValueError("all mixtures must share one dimension")
        self.mixtures = dict(mixtures)
        self.dim = dims.pop()

    def __contains__(self, key):
        return key in self.mixtures

    def mixture(self, condition):
        try:
            return self.mixtures[condition]
        except KeyError:
            raise KeyError(f"unconditioned query: no mixture for condition {condition!r}") from None

    def predict_noise(self, x_t, t, condition=None):
        shape = np.shape(x_t)
        return self.mixture(condition).predict_noise(x_t, t).reshape(shape)

    def predict_x0(self, x_t, t, condition=None):
        shape = np.shape(x_t)
        return self.mixture(condition).predict_x0(x_t, t).reshape(shape)

    def predict(self, x_t, t, condition=None):
        return self.predict_noise(x_t, t, condition)


def predict_noise(prior, x_t, t, condition=None):
    return prior.predict_noise(x_t, t, condition)


def restore(prior, x_t, t_start, condition=None, steps=RESTORE_STEPS):
    """Deterministic DDIM-style descent from ``t_start`` to 0.

    Each step predicts ``x0`` with the posterior mean, recovers the matching
    noise ``(x_t - alpha x0) / sigma`` and re-noises to the next time.
    """
    x = np.asarray(x_t, dtype=np.float64)
    if t_start == 0.0:
        return x.copy()
    ts = np.linspace(t_start, 0.0, steps + 1)
    for t_cur, t_next in zip(ts[:-1], ts[1:]):
        a, s = schedule(t_cur)
        x0 = prior.predict_x0(x, t_cur, condition)
        eps = (x - a * x0) / s
        a2, s2 = schedule(t_next)
        x = a2 * x0 + s2 * eps if t_next > 0.0 else x0
    return x


def augment_renderings(prior, images, t_prime, rng=None, eps=None, conditions=None,
                       steps=RESTORE_STEPS):
    """Noise every image to ``t_prime`` and restore it with ``prior``.

    Args:
        prior: object with ``predict_x0(x, t, condition)``.
        images: sequence of arrays.
        t_prime: noise level in [0, 1]; 0 returns exact copies.
        rng: ``numpy.random.Generator`` used when ``eps`` is not given.
        eps: optional list of noise arrays, one per image.
        conditions: optional list of condition keys, one per image.
    """
    schedule(t_prime)
    if t_prime == 0.0:
        return [np.array(x, dtype=np.float64, copy=True) for x in images]
    out = []
    for i, x in enumerate(images):
        x = np.asarray(x, dtype=np.float64)
        e = eps[i] if eps is not None else rng.standard_normal(x.shape)
        cond = conditions[i] if conditions is not None else None
        out.append(restore(prior, add_noise(x, t_prime, e), t_prime, cond, steps))
    return out


def view_bucket(azimuth, elevation):
    """8 azimuth bins centred every 45 degrees times 2 elevation bins."""
    az = int(np.floor(((azimuth % 360.0) + 22.5) / 45.0)) % AZIMUTH_BINS
    return az, int(elevation >= ELEVATION_SPLIT)


def fit_prior(renderings, class_prior=None, class_weight=0.0, gamma_min=GAMMA_MIN, bucket_of=None):
    """Fit one Gaussian per view bucket from ``(image, camera)`` pairs.

    The bucket mean is the image mean, the stdev the root-mean-square residual
    floored at ``gamma_min``. With a class prior, every bucket mixes in the
    class prior's mixture for the same key (or its unconditional mixture) at
    weight ``class_weight``. The unconditional key ``None`` holds all bucket
    components weighted by image count.
    """
    if len(renderings) == 0:
        raise ValueError("cannot fit a prior to an empty set of renderings")
    if not 0.0 <= class_weight < 1.0:
        raise ValueError("class weight must lie in [0, 1)")
    bucket_of = bucket_of or (lambda cam: view_bucket(cam.azimuth, cam.elevation))
    groups = {}
    for img, cam in renderings:
        groups.setdefault(bucket_of(cam), []).append(np.asarray(img, dtype=np.float64).reshape(-1))
    mixtures = {}
    means, gammas, counts = [], [], []
    for key in sorted(groups):
        # fixed summation order makes the fit independent of input order
        stack = np.stack(sorted(groups[key], key=lambda v: v.tobytes()))
        mean = stack.mean(axis=0)
        gamma = max(float(np.sqrt(np.mean((stack - mean) ** 2))), gamma_min)
        means.append(mean)
        gammas.append(gamma)
        counts.append(len(stack))
        own = Mixture(mean[None], [gamma], [1.0])
        if class_prior is not None and class_weight > 0.0:
            cls = class_prior.mixtures.get(key, class_prior.mixtures.get(None))
            if cls is not None:
                own = Mixture(np.vstack([own.means, cls.means]),
                              np.concatenate([own.gammas, cls.gammas]),
                              np.concatenate([[1.0 - class_weight], class_weight * cls.weights]))
        mixtures[key] = own
    counts = np.asarray(counts, dtype=np.float64)
    mixtures[None] = Mixture(np.stack(means), gammas, counts / counts.sum())
    return GaussianMixturePrior(mixtures)


class ViewPrior:
    """Prior conditioned on a reference image and a pose relative to it.

    ``mixtures`` is keyed by :func:`view_bucket` of the azimuth offset from the
    reference and the absolute elevation.
    """

    def __init__(self, reference_image, reference_azimuth, mixtures):
        self.reference_image = np.asarray(reference_image, dtype=np.float64)
        self.reference_azimuth = float(reference_azimuth)
        self.prior = GaussianMixturePrior(mixtures)

    def bucket(self, camera):
        return view_bucket(camera.azimuth - self.reference_azimuth, camera.elevation)

    def condition(self, reference_image, camera):
        ref = np.asarray(reference_image, dtype=np.float64)
        if ref.shape != self.reference_image.shape or not np.array_equal(ref, self.reference_image):
            raise KeyError("unknown view bucket: prior was not built for this reference image")
        key = self.bucket(camera)
        if key not in self.prior:
            raise KeyError(f"unknown view bucket {key}")
        return key

    def predict_noise(self, x_t, t, reference_image, camera):
        return self.prior.predict_noise(x_t, t, self.condition(reference_image, camera))


class OnlineScoreEstimator:
    """Per-bucket single Gaussian ``N(m_c, v_c I)`` trained by score matching.

    Unseen buckets start at ``m_c = init_mean`` (or the first image they are
    updated with) and ``v_c = init_var``. Updates return a new estimator.
    """

    def __init__(self, lr, init_var=1.0, init_mean=None, params=None):
        if init_var <= 0:
            raise ValueError("estimator variance must be positive")
        self.lr = float(lr)
        self.init_var = float(init_var)
        self.init_mean = None if init_mean is None else np.asarray(init_mean, dtype=np.float64).reshape(-1)
        self.params = dict(params or {})

    def state(self, key, like=None):
        if key in self.params:
            return self.params[key]
        if self.init_mean is not None:
            mean = self.init_mean
        elif like is not None:
            mean = np.asarray(like, dtype=np.float64).reshape(-1)
        else:
            raise KeyError(f"estimator has no state for condition {key!r}")
        return mean.copy(), float(np.log(self.init_var))

    def ensure(self, key, like):
        """Estimator with a state for ``key``, initialised from the clean image ``like``."""
        if key in self.params:
            return self
        params = dict(self.params)
        params[key] = self.state(key, like)
        return OnlineScoreEstimator(self.lr, self.init_var, self.init_mean, params)

    def predict(self, x_t, t, condition=None):
        x = np.asarray(x_t, dtype=np.float64)
        mean, log_var = self.state(condition)
        return _gauss_noise(x.reshape(-1), t, mean, np.exp(log_var)).reshape(x.shape)

    def loss_grad(self, x, t, eps, condition=None):
        """Loss ``||eps_hat - eps||^2`` and its gradients w.r.t. mean and log variance.

        The log-variance gradient is averaged over pixels, so the shared
        variance moves at a rate independent of image size.
        """
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        eps = np.asarray(eps, dtype=np.float64).reshape(-1)
        mean, log_var = self.state(condition, like=x)
        var = np.exp(log_var)
        a, s = schedule(t)
        x_t = a * x + s * eps
        s2 = a * a * var + s * s
        pred = s * (x_t - a * mean) / s2
        r = pred - eps
        g_mean = -2.0 * s * a / s2 * r
        g_log_var = var * float(np.mean(2.0 * r * (-pred * a * a / s2)))
        return float(r @ r), g_mean, g_log_var

    def update(self, x, t, eps, condition=None):
        _, g_mean, g_log_var = self.loss_grad(x, t, eps, condition)
        mean, log_var = self.state(condition, like=x)
        params = dict(self.params)
        params[condition] = (mean - self.lr * g_mean, log_var - self.lr * g_log_var)
        return OnlineScoreEstimator(self.lr, self.init_var, self.init_mean, params)


def update_estimator(est, x, t, eps, condition=None):
    return est.update(x, t, eps, condition)


def _gauss_noise(x_t, t, mean, var):
    a, s = schedule(t)
    if s == 0.0:
        return np.zeros_like(x_t)
    return s * (x_t - a * mean) / (a * a * var + s * s)


# serialisation: condition keys become tagged records


def _tag(key):
    if key is None:
        return {"tag": "none"}
    if isinstance(key, tuple):
        return {"tag": "bucket", "value": [int(k) for k in key]}
    return {"tag": "text", "value": str(key)}


def _untag(rec):
    if rec["tag"] == "none":
        return None
    if rec["tag"] == "bucket":
        return tuple(rec["value"])
    return rec["value"]


def prior_to_arrays(prior, prefix="prior/"):
    arrays, keys = {}, []
    for i, (key, mix) in enumerate(prior.mixtures.items()):
        arrays[f"{prefix}{i}/means"] = mix.means
        arrays[f"{prefix}{i}/gammas"] = mix.gammas
        arrays[f"{prefix}{i}/weights"] = mix.weights
        keys.append(_tag(key))
    return arrays, {"keys": keys}


def prior_from_arrays(arrays, meta, prefix="prior/"):
    mixtures = {}
    for i, rec in enumerate(meta["keys"]):
        mixtures[_untag(rec)] = Mixture(arrays[f"{prefix}{i}/means"], arrays[f"{prefix}{i}/gammas"],
                                        arrays[f"{prefix}{i}/weights"])
    return GaussianMixturePrior(mixtures)


def estimator_to_arrays(est, prefix="est/"):
    arrays, keys = {}, []
    for i, (key, (mean, log_var)) in enumerate(est.params.items()):
        arrays[f"{prefix}{i}/mean"] = mean
        arrays[f"{prefix}{i}/log_var"] = np.array([log_var])
        keys.append(_tag(key))
    if est.init_mean is not None:
        arrays[f"{prefix}init_mean"] = est.init_mean
    return arrays, {"keys": keys, "lr": est.lr, "init_var": est.init_var}


def estimator_from_arrays(arrays, meta, prefix="est/"):
    params = {}
    for i, rec in enumerate(meta["keys"]):
        params[_untag(rec)] = (arrays[f"{prefix}{i}/mean"], float(arrays[f"{prefix}{i}/log_var"][0]))
    return OnlineScoreEstimator(meta["lr"], meta["init_var"], arrays.get(f"{prefix}init_mean"), params)
