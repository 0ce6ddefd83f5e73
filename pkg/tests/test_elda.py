import numpy as np
import pytest

from hogback.elda import (
    Detection,
    EldaTemplate,
    default_scales,
    elda_invert,
    make_template,
    nms,
    sliding_scores,
    top_detections,
)
from hogback.errors import DimensionError, EmptyCorpusError, GeometryError
from hogback.gaussian import MaterializedGaussian, fit_stationary, materialize
from hogback.hog import HogDescriptor, compute_hog
from hogback.image import resize


def identity_gaussian(cells, depth):
    n = cells * cells * depth
    return MaterializedGaussian(
        width_cells=cells,
        height_cells=cells,
        cell_size=8,
        depth=depth,
        mu_x=np.zeros(((cells + 2) * 8) ** 2),
        mu_y=np.full(n, 0.1),
        sigma_xy=np.zeros((((cells + 2) * 8) ** 2, n)),
        sigma_yy=np.eye(n),
    )


def test_identity_covariance_gives_raw_difference():
    g = identity_gaussian(2, 3)
    y = HogDescriptor(np.random.default_rng(0).random((2, 2, 3)))
    t = make_template(g, y)
    assert np.allclose(t.weights, y.data - 0.1, atol=1e-12)

    t0 = make_template(g, HogDescriptor(np.full((2, 2, 3), 0.1)))
    assert np.all(t0.weights == 0.0)


def test_random_spd_matches_linear_solve_oracle():
    rng = np.random.default_rng(1)
    d = 12
    a = rng.standard_normal((d, d + 2))
    sigma = a @ a.T / d + 0.5 * np.eye(d)
    mu = rng.standard_normal(d)
    g = MaterializedGaussian(
        width_cells=1,
        height_cells=1,
        cell_size=8,
        depth=d,
        mu_x=np.zeros(24 * 24),
        mu_y=mu,
        sigma_xy=np.zeros((24 * 24, d)),
        sigma_yy=sigma,
    )
    y = HogDescriptor(rng.standard_normal((1, 1, d)))
    w = make_template(g, y).weights.ravel()
    oracle = np.linalg.solve(sigma, y.data.ravel() - mu)
    assert np.max(np.abs(w - oracle)) <= 1e-8
    resid = sigma @ w - (y.data.ravel() - mu)
    assert np.max(np.abs(resid)) <= 1e-6 * np.max(np.abs(y.data.ravel() - mu))


@pytest.fixture(scope="module")
def nat_corpus():
    import skimage.data

    names = ("camera", "moon", "coins", "clock")
    out = []
    for n in names:
        arr = np.asarray(getattr(skimage.data, n)(), dtype=np.float64) / 255.0
        out.append(resize(arr[:288, :288], 160, 160))
    return out


@pytest.fixture(scope="module")
def nat_model(nat_corpus):
    return fit_stationary(nat_corpus, max_cells=5)


def test_zero_template_scores_zero(nat_corpus):
    t = EldaTemplate(np.zeros((5, 5, 31)))
    dets = sliding_scores(t, nat_corpus[:1], scales=[1.0])
    assert dets and all(d.score == 0.0 for d in dets)


def test_scores_match_naive_dot_products(nat_corpus, nat_model):
    g = materialize(nat_model, 5, 5)
    H_full = compute_hog(nat_corpus[0])
    y = HogDescriptor(H_full.data[3:8, 2:7].copy())
    t = make_template(g, y)
    dets = sliding_scores(t, nat_corpus[:1], scales=[1.0])
    by_pos = {(d.y // 8, d.x // 8): d.score for d in dets}
    rng = np.random.default_rng(2)
    for _ in range(10):
        iy = int(rng.integers(H_full.data.shape[0] - 4))
        ix = int(rng.integers(H_full.data.shape[1] - 4))
        naive = 0.0
        for dy in range(5):
            for dx in range(5):
                for c in range(31):
                    naive += H_full.data[iy + dy, ix + dx, c] * t.weights[dy, dx, c]
        assert abs(by_pos[(iy, ix)] - naive) <= 1e-6


def test_self_window_attains_maximum(nat_corpus, nat_model):
    g = materialize(nat_model, 5, 5)
    H_full = compute_hog(nat_corpus[1])
    y = HogDescriptor(H_full.data[4:9, 5:10].copy())
    t = make_template(g, y)
    dets = sliding_scores(t, nat_corpus[1:2], scales=[1.0])
    best = max(dets, key=lambda d: d.score)
    assert (best.y // 8, best.x // 8) == (4, 5)


def test_score_linearity(nat_corpus, nat_model):
    g = materialize(nat_model, 5, 5)
    H_full = compute_hog(nat_corpus[2])
    y = HogDescriptor(H_full.data[:5, :5].copy())
    t = make_template(g, y)
    t2 = EldaTemplate(3.0 * t.weights)
    d1 = sliding_scores(t, nat_corpus[2:3], scales=[1.0])
    d2 = sliding_scores(t2, nat_corpus[2:3], scales=[1.0])
    s1 = np.array([d.score for d in d1])
    s2 = np.array([d.score for d in d2])
    assert np.allclose(s2, 3.0 * s1, rtol=1e-12, atol=1e-12)
    # post-NMS selection is invariant to positive scaling
    k1 = nms(d1, t.pixel_shape)
    k2 = nms(d2, t.pixel_shape)
    assert [(d.image_id, d.x, d.y) for d in k1] == [(d.image_id, d.x, d.y) for d in k2]


def test_streamed_topk_equals_bruteforce():
    rng = np.random.default_rng(3)
    dets = [
        Detection(
            image_id=int(rng.integers(5)),
            x=int(rng.integers(0, 20)) * 8,
            y=int(rng.integers(0, 20)) * 8,
            scale=1.0,
            score=float(rng.integers(0, 40)) / 4.0,  # ties on purpose
        )
        for _ in range(300)
    ]
    for k in (1, 7, 50, 300, 400):
        streamed = top_detections(dets, k)
        brute = sorted(dets, key=Detection.sort_key)[:k]
        assert streamed == brute


def test_crop_validity_and_scales(nat_corpus, nat_model):
    g = materialize(nat_model, 5, 5)
    H_full = compute_hog(nat_corpus[0])
    t = make_template(g, HogDescriptor(H_full.data[:5, :5].copy()))
    scales = default_scales(t, 160)
    assert scales[0] == 1.0 and all(s > 0 for s in scales)
    dets = sliding_scores(t, nat_corpus[:2], scales=scales[:3])
    ph, pw = t.pixel_shape
    for d in dets:
        h = int(round(160 * d.scale))
        assert d.y + ph <= h and d.x + pw <= h


def test_elda_invert_self_retrieval(nat_corpus, nat_model):
    g = materialize(nat_model, 5, 5)
    gray = nat_corpus[3]
    H_full = compute_hog(gray)
    iy, ix = 6, 4
    y = HogDescriptor(H_full.data[iy : iy + 5, ix : ix + 5].copy())
    out = elda_invert(g, y, [gray], k=1, scales=[1.0], display=False)
    crop = gray[iy * 8 : iy * 8 + 56, ix * 8 : ix * 8 + 56]
    a = out.data - out.data.mean()
    b = crop - crop.mean()
    ncc = float(a.ravel() @ b.ravel() / (np.linalg.norm(a) * np.linalg.norm(b)))
    assert ncc >= 0.99


def test_identical_crops_average_to_crop(nat_corpus, nat_model):
    g = materialize(nat_model, 5, 5)
    gray = nat_corpus[0]
    H_full = compute_hog(gray)
    y = HogDescriptor(H_full.data[2:7, 3:8].copy())
    with pytest.warns(UserWarning):
        out = elda_invert(g, y, [gray, gray.copy()], k=500, scales=[1.0], display=False)
    assert out.data.shape == (56, 56)


def test_error_paths(nat_model):
    g = materialize(nat_model, 5, 5)
    with pytest.raises(DimensionError):
        make_template(g, HogDescriptor(np.zeros((4, 4, 31))))
    t = EldaTemplate(np.zeros((5, 5, 31)))
    with pytest.raises(EmptyCorpusError):
        sliding_scores(t, [], scales=[1.0])
    with pytest.raises(GeometryError):
        sliding_scores(t, [np.zeros((64, 64))], scales=[1.0], stride_cells=0)
    with pytest.raises(GeometryError):
        elda_invert(g, HogDescriptor(np.zeros((5, 5, 31))), [np.zeros((64, 64))], k=0)
