import numpy as np
import pytest
from hypothesis import given, strategies as st

from scorecraft.camera import Camera
from scorecraft.config import load_config
from scorecraft.experiments import load_baselines, reference_sds3d_norm
from scorecraft.gradcheck import TOLERANCES, losses_suite
from scorecraft.losses import (ReferencePack, bsd_grad, cosine_normal_loss, hybrid_grad, latent_norm_reg,
                               mask_loss, masked_rgb_loss, pearson_depth_loss, sds_3d_grad, sds_grad, vsd_grad)
from scorecraft.priors import (GaussianMixturePrior, Mixture, OnlineScoreEstimator, ViewPrior, add_noise,
                               augment_renderings, fit_prior, schedule)


class Fixed:
    """Prior / estimator stub returning a fixed prediction."""

    def __init__(self, value):
        self.value = np.asarray(value, dtype=np.float64)

    def predict_noise(self, x_t, t, condition=None):
        return self.value

    def predict(self, x_t, t, condition=None):
        return self.value


class Echo:
    """Estimator stub that returns the injected noise."""

    eps = None

    def predict(self, x_t, t, condition=None):
        return self.eps


def _single(m, gamma=0.0, key="y"):
    return GaussianMixturePrior({key: Mixture(np.atleast_2d(m), [gamma], [1.0]),
                                 None: Mixture(np.atleast_2d(m), [gamma], [1.0])})


def _pack(rgb, mask):
    h, w = mask.shape
    return ReferencePack(rgb, mask, np.ones((h, w)), np.tile([0, 0, 1.0], (h, w, 1)), None)


# --- distillation ----------------------------------------------------------

def test_sds_zero_when_prior_predicts_injected_noise(rng):
    x, e = rng.random(6), rng.standard_normal(6)
    np.testing.assert_allclose(sds_grad(_single(x), x, 0.3, "y", e, cfg_scale=0.0), 0.0, atol=1e-12)


@pytest.mark.parametrize("t", [0.1, 0.5, 0.8])
def test_sds_one_pixel_hand_algebra(t):
    x, e, m = 0.7, -0.4, 0.2
    a, s = schedule(t)
    want = s ** 2 * s * (a * x + s * e - a * m) / s ** 2 - s ** 2 * e
    got = sds_grad(_single([m]), np.array([x]), t, "y", np.array([e]), cfg_scale=0.0)
    assert got[0] == pytest.approx(want, abs=1e-14)


def test_sds_linear_in_weight(rng):
    x, e = rng.random(5), rng.standard_normal(5)
    prior = _single(rng.random(5), 0.2)
    g1 = sds_grad(prior, x, 0.4, "y", e, weight=0.3)
    np.testing.assert_allclose(sds_grad(prior, x, 0.4, "y", e, weight=0.6), 2 * g1, rtol=1e-15)


def test_distillation_time_must_be_open_interval(rng):
    with pytest.raises(ValueError, match="distillation time"):
        sds_grad(_single(np.zeros(2)), np.zeros(2), 0.0, "y", np.zeros(2))


def _view_prior(rng, dim=4):
    ref = rng.random(dim)
    mixtures = {(0, 0): Mixture(ref[None], [0.0], [1.0]), (2, 0): Mixture(rng.random((1, dim)), [0.0], [1.0])}
    return ViewPrior(ref, 0.0, mixtures), ref


def test_sds3d_zero_when_exact_and_pose_sensitive(rng):
    vp, ref = _view_prior(rng)
    e = rng.standard_normal(4)
    front = Camera.orbit(0.0, 0.0, 3.0, 20.0, 2)
    side = Camera.orbit(90.0, 0.0, 3.0, 20.0, 2)
    np.testing.assert_allclose(sds_3d_grad(vp, ref, ref, front, 0.5, e), 0.0, atol=1e-12)
    assert not np.allclose(sds_3d_grad(vp, ref, ref, front, 0.5, e), sds_3d_grad(vp, ref, ref, side, 0.5, e))
    with pytest.raises(KeyError):
        sds_3d_grad(vp, ref, ref, Camera.orbit(180.0, 0.0, 3.0, 20.0, 2), 0.5, e)


def test_sds3d_at_reference_within_baseline():
    assert reference_sds3d_norm(load_config("sphere-toy")) <= load_baselines()["reference_sds3d_norm_max"]


def test_hybrid_examples(rng):
    g2, g3 = rng.standard_normal(4), rng.standard_normal(4)
    np.testing.assert_array_equal(hybrid_grad(g2, g3, 0.0), g2)
    np.testing.assert_array_equal(hybrid_grad(g2, np.zeros(4), 2.0), g2)
    np.testing.assert_array_equal(hybrid_grad([1.0, 1.0], [0.5, -1.0]), [2.0, -1.0])
    with pytest.raises(ValueError):
        hybrid_grad(g2, g3[:2])


def test_vsd_zero_when_estimator_matches_prior(rng):
    m, x, e = rng.random(5), rng.random(5), rng.standard_normal(5)
    est = OnlineScoreEstimator(0.1, params={"c": (m.copy(), np.log(0.2 ** 2))})
    np.testing.assert_allclose(vsd_grad(_single(m, 0.2), est, x, 0.6, "y", "c", e), 0.0, atol=1e-14)
    np.testing.assert_allclose(bsd_grad(_single(m, 0.2), est, x, 0.6, "y", "c", e), 0.0, atol=1e-14)


@given(st.integers(0, 2**31 - 1), st.floats(0.05, 0.95))
def test_vsd_with_noise_echo_equals_sds(seed, t):
    rng = np.random.default_rng(seed)
    prior = GaussianMixturePrior({"y": Mixture(rng.random((2, 6)), [0.1, 0.3], [0.4, 0.6]),
                                  None: Mixture(rng.random((1, 6)), [0.5], [1.0])})
    x, e = rng.random(6), rng.standard_normal(6)
    echo = Echo()
    echo.eps = e
    np.testing.assert_array_equal(vsd_grad(prior, echo, x, t, "y", None, e, cfg_scale=0.0),
                                  sds_grad(prior, x, t, "y", e, cfg_scale=0.0))


@given(st.integers(0, 2**31 - 1), st.floats(0.05, 0.95))
def test_swapping_terms_negates_output(seed, t):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal(5), rng.standard_normal(5)
    x, e = rng.random(5), rng.standard_normal(5)
    for fn in (vsd_grad, bsd_grad):
        np.testing.assert_array_equal(fn(Fixed(a), Fixed(b), x, t, "y", None, e, cfg_scale=0.0),
                                      -fn(Fixed(b), Fixed(a), x, t, "y", None, e, cfg_scale=0.0))


def _log_p0(x, means, gammas, weights):
    """Direct mixture density, written out per component."""
    return np.log(sum(w * np.exp(-0.5 * ((x - m) / g) ** 2) / (g * np.sqrt(2 * np.pi))
                      for m, g, w in zip(means, gammas, weights)))


def _grid_ascent(x0, means, gammas, weights):
    """Walk uphill on a dense grid of log p0 until a local maximum."""
    grid = np.linspace(-5, 5, 100_001)
    lp = _log_p0(grid, means, gammas, weights)
    i = int(np.argmin(np.abs(grid - x0)))
    while True:
        j = i + 1 if lp[i + 1] > lp[i] else (i - 1 if lp[i - 1] > lp[i] else i)
        if j == i:
            return grid[i]
        i = j


@pytest.mark.parametrize("x0", [0.3, 0.8, -2.0, 3.5])
def test_vsd_point_mass_reaches_density_ascent_mode(x0):
    means, gammas, weights = [-1.0, 2.0], [0.3, 0.3], [0.5, 0.5]
    prior = GaussianMixturePrior({"y": Mixture(np.array([[m] for m in means]), gammas, weights)})
    rng = np.random.default_rng(0)
    x = np.array([x0])
    est = OnlineScoreEstimator(0.05, 0.01, init_mean=x.copy())
    for _ in range(4000):
        t = rng.uniform(0.02, 0.2)
        g = vsd_grad(prior, est, x, t, "y", "c", rng.standard_normal(1), cfg_scale=0.0)
        est = est.update(x, t, rng.standard_normal(1), "c")
        x = x - 0.05 * g
    assert x[0] == pytest.approx(_grid_ascent(x0, means, gammas, weights), abs=0.05)


def test_bsd_zero_mean_with_perfect_fit_and_matched_estimator(rng):
    cams = [Camera.orbit(a, 5.0, 3.0, 20.0, 2) for a in (-10.0, 0.0, 10.0)]
    imgs = [rng.random(12) for _ in cams]
    prior = fit_prior(list(zip(imgs, cams)))
    key = (0, 0)
    mix = prior.mixtures[key]
    est = OnlineScoreEstimator(0.1, params={key: (mix.means[0].copy(), 2 * np.log(mix.gammas[0]))})
    draws = np.stack([bsd_grad(prior, est, imgs[1], 0.5, key, key, rng.standard_normal(12)) for _ in range(256)])
    mean, se = draws.mean(0), draws.std(0, ddof=1) / np.sqrt(256) + 1e-300
    assert np.all(np.abs(mean) <= 3 * se + 1e-12)


def test_bsd_depends_on_refit_prior(rng):
    cams = [Camera.orbit(a, 5.0, 3.0, 20.0, 2) for a in (0.0, 10.0)]
    imgs = [rng.random(12) for _ in cams]
    base = fit_prior(list(zip(imgs, cams)))
    est = OnlineScoreEstimator(0.1, 0.05, init_mean=np.full(12, 0.5))
    r1 = fit_prior(list(zip(augment_renderings(base, imgs, 0.5, np.random.default_rng(1)), cams)))
    r2 = fit_prior(list(zip(augment_renderings(base, imgs, 0.1, np.random.default_rng(1)), cams)))
    e = rng.standard_normal(12)
    g1 = bsd_grad(r1, est, imgs[0], 0.4, (0, 0), (0, 0), e)
    g2 = bsd_grad(r2, est, imgs[0], 0.4, (0, 0), (0, 0), e)
    assert not np.allclose(g1, g2)


# --- reference-view losses -------------------------------------------------

def test_masked_rgb_examples(rng):
    ref = rng.random((3, 4, 3))
    mask = (rng.random((3, 4)) > 0.5).astype(float)
    assert masked_rgb_loss(ref, _pack(ref, mask))[0] == 0.0
    off = ref + (1 - mask)[..., None] * 5.0
    assert masked_rgb_loss(off, _pack(ref, mask))[0] == 0.0
    ref2 = np.zeros((2, 1, 3))
    x2 = -np.array([[[0.3, 0, 0]], [[9, 9, 9]]])
    assert masked_rgb_loss(x2, _pack(ref2, np.array([[1.0], [0.0]])))[0] == pytest.approx(0.3)
    with pytest.raises(ValueError, match="shape"):
        masked_rgb_loss(np.zeros((2, 2, 3)), _pack(ref, mask))


def test_reference_mask_must_be_binary():
    with pytest.raises(ValueError, match="binary"):
        _pack(np.zeros((1, 1, 3)), np.array([[0.5]]))


def test_mask_loss_examples(rng):
    m = (rng.random((4, 4)) > 0.5).astype(float)
    assert mask_loss(m, m)[0] == 0.0
    assert mask_loss(np.zeros((3, 3)), np.ones((3, 3)))[0] == pytest.approx(3.0)
    g = rng.random((4, 4))
    _, grad = mask_loss(g, m)
    # descending the gradient moves each pixel toward the reference
    assert np.all(np.sign(-grad[g != m]) == np.sign((m - g)[g != m]))
    with pytest.raises(ValueError):
        mask_loss(np.zeros(3), np.zeros(4))


def test_pearson_examples(rng):
    ref = rng.uniform(2, 3, (5, 5))
    mask = np.ones((5, 5))
    assert pearson_depth_loss(3.0 * ref + 1.0, ref, mask)[0] == pytest.approx(-1.0, abs=1e-12)
    assert pearson_depth_loss(-ref, ref, mask)[0] == pytest.approx(1.0, abs=1e-12)
    d = rng.uniform(2, 3, (5, 5))
    mask = (rng.random((5, 5)) > 0.3).astype(float)
    sel = mask > 0.5
    oracle = np.corrcoef(d[sel], ref[sel])[0, 1]
    assert pearson_depth_loss(d, ref, mask)[0] == pytest.approx(-oracle, abs=1e-10)


@given(st.integers(0, 2**31 - 1), st.floats(0.01, 100), st.floats(-10, 10), st.booleans())
def test_pearson_invariant_to_positive_affine_maps(seed, a, b, first):
    rng = np.random.default_rng(seed)
    d, ref = rng.uniform(1, 2, (6, 6)), rng.uniform(1, 2, (6, 6))
    mask = (rng.random((6, 6)) > 0.3).astype(float)
    base = pearson_depth_loss(d, ref, mask)[0]
    moved = pearson_depth_loss(a * d + b, ref, mask) if first else pearson_depth_loss(d, a * ref + b, mask)
    assert moved[0] == pytest.approx(base, abs=1e-10)


def test_pearson_degenerate_depth_rejected():
    with pytest.raises(ValueError, match="degenerate depth"):
        pearson_depth_loss(np.full((3, 3), 2.0), np.arange(9.0).reshape(3, 3), np.ones((3, 3)))
    with pytest.raises(ValueError, match="degenerate depth"):
        pearson_depth_loss(np.arange(9.0).reshape(3, 3), np.arange(9.0).reshape(3, 3), np.eye(3) * 0)


def test_cosine_examples(rng):
    n = rng.standard_normal((4, 4, 3))
    mask = np.ones((4, 4))
    assert cosine_normal_loss(n, n, mask)[0] == pytest.approx(-1.0)
    assert cosine_normal_loss(-n, n, mask)[0] == pytest.approx(1.0)
    assert cosine_normal_loss(2 * n, n, mask)[0] == pytest.approx(-1.0)
    z = n.copy()
    z[0, 0] = 0
    with pytest.raises(ValueError, match="zero-norm"):
        cosine_normal_loss(z, n, mask)


@given(st.integers(0, 2**31 - 1), st.floats(0.01, 100))
def test_cosine_scale_invariant(seed, k):
    rng = np.random.default_rng(seed)
    n, ref = rng.standard_normal((3, 3, 3)), rng.standard_normal((3, 3, 3))
    mask = np.ones((3, 3))
    assert cosine_normal_loss(k * n, ref, mask)[0] == pytest.approx(cosine_normal_loss(n, ref, mask)[0], abs=1e-12)


def test_latent_norm_examples(rng):
    x = rng.standard_normal(7)
    assert latent_norm_reg(x, x)[0] == 0.0
    x3 = np.array([3.0, 0.0, 0.0])
    x1 = np.array([0.0, 1.0, 0.0])
    assert latent_norm_reg(x3, x1)[0] == pytest.approx(4.0)
    q, _ = np.linalg.qr(rng.standard_normal((7, 7)))
    xr = rng.standard_normal(7)
    assert latent_norm_reg(q @ x, xr)[0] == pytest.approx(latent_norm_reg(x, xr)[0], rel=1e-12)


def test_loss_gradients_match_finite_differences(rng):
    for name, err in losses_suite(rng):
        assert err <= TOLERANCES["losses"], name
