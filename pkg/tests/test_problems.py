import gzip
import struct

import numpy as np
import pytest

from lancbio.checks import CHECK_INSTANCES, check_oracles
from lancbio.core import dense_hessian_yy
from lancbio.errors import BadMagic, ConfigParse, CountMismatch, ShapeMismatch, TruncatedFile, UnknownProblem
from lancbio.krylov import LanczosState, dlanczos_step
from lancbio.problems import (
    PROBLEMS,
    HyperCleanSpec,
    LogRegSpec,
    NonconvexSinSpec,
    build_problem,
    corrupt_labels,
    gen_classification_data,
    load_csv_dataset,
    load_idx,
    make_hyperclean,
    make_logreg,
    make_nonconvex_sin,
    write_idx,
)


@pytest.mark.parametrize("name", sorted(PROBLEMS))
def test_finite_difference_suite(name):
    P = build_problem(name, seed=0, **CHECK_INSTANCES[name])
    results = check_oracles(P, n_points=20, seed=1)
    assert {r.oracle for r in results} == {"grad_f_x", "grad_f_y", "grad_g_y", "hvp_gyy", "jvp_gxy"}
    for res in results:
        assert res.passed, res.line()


def test_unknown_problem_and_parameter():
    with pytest.raises(UnknownProblem):
        build_problem("nope")
    with pytest.raises(ConfigParse, match="bogus"):
        build_problem("quadratic", bogus=1)


# synthetic


def test_synthetic_lower_gradient_at_origin():
    P = build_problem("synthetic", seed=3, d=7)
    np.testing.assert_allclose(P.grad_g_y(np.zeros(7), np.zeros(7)), 0.5 * np.ones(7), atol=1e-15)


def test_synthetic_without_trig_terms_has_constant_hessian_at_zero_x():
    # x = 0 removes the log-sum-exp curvature and c2 = 0 the sine term
    P = build_problem("synthetic", seed=1, d=8, c1=0.0, c2=0.0)
    M = np.diag(P.d3) + P.G
    y = np.random.default_rng(0).standard_normal(8)
    np.testing.assert_allclose(dense_hessian_yy(P, np.zeros(8), y), M, rtol=1e-12, atol=1e-9)
    assert P.f_value(np.ones(8), P.d2) == pytest.approx(0.0)


def test_synthetic_ritz_values_bounded_below():
    P = build_problem("synthetic", seed=0, d=100)
    rng = np.random.default_rng(0)
    x, y = P.initial_point(rng)
    state = LanczosState.start(rng.standard_normal(100))
    for _ in range(30):
        state = dlanczos_step(state, lambda v: P.hvp_gyy(x, y, v))
    assert np.linalg.eigvalsh(state.T.to_dense()).min() >= 0.1


# hyper-cleaning


def one_sample_hyperclean(reg=0.1):
    spec = HyperCleanSpec(
        train_features=np.array([[1.0]]), train_labels=np.array([0]),
        val_features=np.array([[1.0]]), val_labels=np.array([1]), classes=2, reg=reg,
    )
    return make_hyperclean(spec)


def test_hyperclean_hand_example():
    P = one_sample_hyperclean(reg=0.1)
    x, y = np.zeros(1), np.zeros(2)
    # sigma(0) = 1/2 weights the softmax Hessian [[.25, -.25], [-.25, .25]]
    np.testing.assert_allclose(P.hvp_gyy(x, y, np.array([1.0, 0.0])), [0.125 + 0.2, -0.125])
    # sigma'(0) = 1/4, residual p - e_0 = (-1/2, 1/2)
    np.testing.assert_allclose(P.jvp_gxy(x, y, np.array([1.0, 0.0])), [-0.125])
    assert P.g_value(x, y) == pytest.approx(0.5 * np.log(2.0))
    np.testing.assert_allclose(P.grad_f_y(x, y), [0.5, -0.5])


def test_hyperclean_strong_convexity_floor():
    P = build_problem("hyperclean", seed=2, n_train=30, n_val=10, n_test=0, dim=4, classes=3, reg=0.05)
    rng = np.random.default_rng(1)
    for _ in range(20):
        x, y, v = 3 * rng.standard_normal(P.dx), rng.standard_normal(P.dy), rng.standard_normal(P.dy)
        assert v @ P.hvp_gyy(x, y, v) >= 2 * 0.05 * (v @ v) * (1 - 1e-12)


def test_hyperclean_test_metric_is_accuracy():
    P = build_problem("hyperclean", seed=0, n_train=20, n_val=10, n_test=50, dim=4, classes=3)
    acc = P.test_metric(np.zeros(P.dx), np.zeros(P.dy))
    assert 0.0 <= acc <= 1.0


# logistic regression with per-feature regularizers


def small_logreg():
    return build_problem("logreg", seed=0, n_train=30, n_val=10, n_test=0, dim=4, classes=3)


def test_logreg_zero_regularizer_has_no_cross_term():
    P = small_logreg()
    rng = np.random.default_rng(0)
    y, v = rng.standard_normal(P.dy), rng.standard_normal(P.dy)
    np.testing.assert_array_equal(P.jvp_gxy(np.zeros(P.dx), y, v), np.zeros(P.dx))


def test_logreg_zero_weights():
    P = small_logreg()
    x = np.random.default_rng(1).standard_normal(P.dx)
    y0 = np.zeros(P.dy)
    np.testing.assert_array_equal(P.jvp_gxy(x, y0, np.ones(P.dy)), np.zeros(P.dx))
    # at W = 0 every class is equally likely
    assert P.g_value(x, y0) == pytest.approx(np.log(3.0))


def test_logreg_penalty_hessian():
    spec = LogRegSpec(np.zeros((2, 2)), np.array([0, 1]), np.zeros((1, 2)), np.array([0]), classes=2)
    P = make_logreg(spec)
    # zero features: only the penalty (1/(c l)) zeta_j^2 W_ij^2 has curvature
    x = np.array([1.0, 2.0])
    v = np.ones(4)
    np.testing.assert_allclose(P.hvp_gyy(x, np.zeros(4), v), 2 * 0.25 * np.array([1, 4, 1, 4]))


# sine lower level


@pytest.mark.parametrize("sign, curvature", [(1.0, -1.0), (-1.0, 1.0)])
def test_sine_critical_points(sign, curvature):
    P = make_nonconvex_sin(NonconvexSinSpec(d=3))
    x, y = np.zeros(1), sign * np.full(3, np.pi / 2)
    np.testing.assert_allclose(P.grad_g_y(x, y), 0.0, atol=1e-15)
    np.testing.assert_allclose(P.hvp_gyy(x, y, np.ones(3)), curvature * np.ones(3))
    np.testing.assert_allclose(P.jvp_gxy(x, y, np.ones(3)), [3 * curvature])


def test_sine_spec_validates_shape():
    with pytest.raises(ValueError):
        NonconvexSinSpec(d=3, c=np.zeros(2))


# data loading


def idx_bytes(magic, dims, payload):
    return struct.pack(f">I{len(dims)}I", magic, *dims) + bytes(payload)


def test_idx_crafted_two_by_two(tmp_path):
    img, lab = tmp_path / "img", tmp_path / "lab"
    img.write_bytes(idx_bytes(0x803, (1, 2, 2), [0, 255, 51, 102]))
    lab.write_bytes(idx_bytes(0x801, (1,), [7]))
    X, y = load_idx(img, lab)
    np.testing.assert_allclose(X, [[0.0, 1.0, 0.2, 0.4]])
    np.testing.assert_array_equal(y, [7])


def test_idx_round_trip_and_gzip(tmp_path):
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, (5, 3, 4), dtype=np.uint8)
    labels = rng.integers(0, 10, 5)
    write_idx(tmp_path / "i", tmp_path / "l", images, labels)
    X, y = load_idx(tmp_path / "i", tmp_path / "l")
    np.testing.assert_array_equal(np.rint(X * 255).astype(np.uint8), images.reshape(5, 12))
    np.testing.assert_array_equal(y, labels)
    for name in ("i", "l"):
        (tmp_path / f"{name}.gz").write_bytes(gzip.compress((tmp_path / name).read_bytes()))
    X2, y2 = load_idx(tmp_path / "i.gz", tmp_path / "l.gz")
    np.testing.assert_array_equal(X2, X)
    np.testing.assert_array_equal(y2, y)


def test_idx_errors(tmp_path):
    img, lab = tmp_path / "img", tmp_path / "lab"
    img.write_bytes(idx_bytes(0x803, (2, 1, 1), [1, 2]))
    lab.write_bytes(idx_bytes(0x801, (3,), [0, 1, 2]))
    with pytest.raises(CountMismatch):
        load_idx(img, lab)
    lab.write_bytes(idx_bytes(0x803, (2,), [0, 1]))
    with pytest.raises(BadMagic):
        load_idx(img, lab)
    img.write_bytes(idx_bytes(0x803, (2, 2, 2), [1, 2, 3]))
    with pytest.raises(TruncatedFile):
        load_idx(img, lab)
    img.write_bytes(b"\x00\x00")
    with pytest.raises(TruncatedFile):
        load_idx(img, lab)


def test_csv_loader(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("a,b,label\n1.5,2,0\n-1,0.25,2\n")
    X, y = load_csv_dataset(path)
    np.testing.assert_allclose(X, [[1.5, 2.0], [-1.0, 0.25]])
    np.testing.assert_array_equal(y, [0, 2])
    path.write_text("a,b,label\n1,2\n")
    with pytest.raises(ShapeMismatch):
        load_csv_dataset(path)


def test_generator_deterministic_and_degenerate():
    a = gen_classification_data(50, 5, 3, seed=4)
    b = gen_classification_data(50, 5, 3, seed=4)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])
    X, y = gen_classification_data(20, 3, 1, seed=0)
    assert X.shape == (20, 3) and not y.any()


def test_generator_well_separated_classes():
    X, y = gen_classification_data(2000, 10, 2, seed=0, separation=10.0)
    means = np.stack([X[y == c].mean(axis=0) for c in (0, 1)])
    pred = np.argmin(((X[:, None, :] - means[None]) ** 2).sum(-1), axis=1)
    assert np.mean(pred == y) > 0.99


def test_corrupt_labels():
    labels = np.arange(1000) % 10
    noisy = corrupt_labels(labels, 0.5, 10, seed=0)
    flipped = noisy != labels
    assert 0.45 < flipped.mean() < 0.55
    np.testing.assert_array_equal(corrupt_labels(labels, 0.0, 10, 0), labels)
    assert (corrupt_labels(labels, 1.0, 10, 0) != labels).all()
