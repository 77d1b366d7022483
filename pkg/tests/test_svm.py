import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import dual_value, qp_dual_oracle
from subband_svm.kernels import KernelParams
from subband_svm.svm import (BinarySvmModel, dual_objective, load_model, predict_sign, save_model, score, smo,
                             train_dual, train_from_gram, train_linear)


def test_two_points_closed_form():
    X = np.array([[1.0, 2.0], [1.0, 4.0]])
    m = train_dual(X, [1, -1], KernelParams("linear"), C=1e3, tol=1e-10)
    # w = (x1 - x2) * 2 / |x1 - x2|^2, alpha = 2 / |x1 - x2|^2 for both points
    assert np.allclose(m.alphas, [0.5, 0.5], atol=1e-9)
    assert score(m, [1.0, 3.0]) == pytest.approx(0.0, abs=1e-9)
    assert score(m, X[0]) == pytest.approx(1.0, abs=1e-9)
    assert score(m, X[1]) == pytest.approx(-1.0, abs=1e-9)


def test_xor_with_quadratic_kernel():
    X = np.array([[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]])
    y = np.array([1, 1, -1, -1])
    m = train_dual(X, y, KernelParams("poly", 2))
    assert np.array_equal(predict_sign(m.decision_function(X)), y)


def test_duplicating_separable_data_keeps_the_decision_function(rng):
    X = np.vstack([rng.standard_normal((10, 2)) + 3, rng.standard_normal((10, 2)) - 3])
    y = np.r_[np.ones(10), -np.ones(10)]
    a = train_dual(X, y, KernelParams("linear"), C=100, tol=1e-8)
    b = train_dual(np.vstack([X, X]), np.r_[y, y], KernelParams("linear"), C=100, tol=1e-8)
    probes = rng.uniform(-6, 6, (100, 2))
    assert np.allclose(a.decision_function(probes), b.decision_function(probes), atol=1e-5)


def test_free_support_vectors_sit_on_the_margin(rng):
    X = rng.standard_normal((40, 3))
    y = np.where(X[:, 0] + 0.3 * rng.standard_normal(40) > 0, 1, -1)
    m = train_dual(X, y, KernelParams("poly", 2), C=1.0, tol=1e-3)
    m.check()
    free = (m.alphas > 0) & (m.alphas < m.C)
    assert free.any()
    s = m.decision_function(m.support[free])
    assert np.all(np.abs(np.abs(s) - 1) <= 1e-3)


def test_empty_support_scores_bias():
    m = BinarySvmModel(np.zeros((0, 2)), np.zeros(0, int), np.zeros(0), np.zeros(0), 0.25, KernelParams("linear"))
    assert score(m, [3.0, 4.0]) == 0.25
    assert np.array_equal(m.decision_function(np.ones((3, 2))), [0.25] * 3)


def test_scoring_is_deterministic(rng):
    X = rng.standard_normal((20, 4))
    m = train_dual(X, np.r_[np.ones(10), -np.ones(10)])
    assert score(m, X[3]) == score(m, X[3])


def test_zero_score_predicts_positive():
    assert predict_sign([0.0, -0.0, -1e-300, 2]).tolist() == [1, 1, -1, 1]


def test_input_errors(rng):
    X = rng.standard_normal((4, 2))
    with pytest.raises(ValueError):
        train_dual(X, [1, 1, 1, 1])
    with pytest.raises(ValueError):
        train_dual(X, [1, 0, -1, 1])
    with pytest.raises(ValueError):
        train_from_gram(np.full((2, 2), np.inf), [1, -1])
    with np.errstate(over="ignore"), pytest.raises(ValueError):
        train_dual(np.full((2, 2), 1e200), [1, -1], KernelParams("poly", 6))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(4, 20),
       kernel=st.sampled_from([("linear", 1), ("poly", 2), ("poly", 6)]))
def test_matches_qp_oracle(seed, n, kernel):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 3)) / np.sqrt(3)
    y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    y[0], y[1] = 1.0, -1.0
    K = KernelParams(*kernel).gram(X)
    res = smo(K, y, 1.0, tol=1e-6)
    a_ref, _ = qp_dual_oracle(K, y, 1.0)
    assert abs(dual_objective(res.alpha, y, K) - dual_value(a_ref, y, K)) < 1e-6
    assert np.all(res.alpha >= 0) and np.all(res.alpha <= 1.0)
    assert abs(res.alpha @ y) < 1e-10


def test_label_flip_negates_scores(rng):
    X = rng.standard_normal((30, 3))
    y = np.where(X[:, 1] > 0, 1, -1)
    probes = rng.standard_normal((50, 3))
    a = train_dual(X, y, KernelParams("poly", 2), tol=1e-9)
    b = train_dual(X, -y, KernelParams("poly", 2), tol=1e-9)
    assert np.allclose(a.decision_function(probes), -b.decision_function(probes), atol=1e-6)


def test_row_cache_path_matches_full_gram(rng):
    X = rng.standard_normal((60, 3))
    y = np.where(X[:, 0] * X[:, 1] > 0, 1, -1)
    full = train_dual(X, y, KernelParams("poly", 2), tol=1e-6)
    lru = train_dual(X, y, KernelParams("poly", 2), tol=1e-6, memory_budget=8 * 60 * 10)
    probes = rng.standard_normal((20, 3))
    assert np.allclose(full.decision_function(probes), lru.decision_function(probes), atol=1e-4)


def test_linear_svm_sign_and_dual_identity(rng):
    m = train_linear([[-1.0], [1.0]], [-1, 1])
    assert m.w[0] > 0
    F = rng.standard_normal((60, 5))
    y = np.where(F[:, 0] - F[:, 2] > 0, 1, -1)
    m = train_linear(F, y)
    P = rng.standard_normal((100, 5))
    assert np.allclose(m.decision_function(P), m.dual_decision_function(P), atol=1e-8)


def test_linear_svm_downweights_a_noise_coordinate():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        y = np.where(rng.random(80) < 0.5, 1, -1)
        signal = y * 1.5 + 0.5 * rng.standard_normal(80)
        F = np.column_stack([signal, rng.standard_normal(80)])
        w = train_linear(F, y).w
        assert abs(w[1]) < abs(w[0])


@pytest.mark.parametrize("kind", ["poly", "omega"])
def test_model_round_trip(tmp_path, rng, kind):
    X, O = rng.standard_normal((20, 6)), rng.standard_normal((20, 3))
    y = np.r_[np.ones(10), -np.ones(10)]
    samples = (X, O) if kind == "omega" else X
    m = train_dual(samples, y, KernelParams(kind, 2))
    save_model(m, tmp_path / "model")
    back = load_model(tmp_path / "model")
    probe = (X[:5], O[:5]) if kind == "omega" else X[:5]
    assert np.array_equal(m.decision_function(probe), back.decision_function(probe))
    assert back.kernel == m.kernel and np.array_equal(back.support_index, m.support_index)
