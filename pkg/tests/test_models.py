import math

import numpy as np
import pytest

from bcengine.models import (
    DidNotConverge,
    LassoConfig,
    LengthMismatch,
    PlattParams,
    SingleClass,
    SchemaMismatch,
    Standardizer,
    SvmModel,
    eval_metrics,
    lasso_fit,
    load_model,
    platt_fit,
    platt_score,
    save_model,
    stability_select,
    svm_decision,
    svm_predict,
    svm_train,
)


def _standardize(X):
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    return (X - mu) / sd


def planted_problem(seed, n=500, p=200, k=5, noise=0.1):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    support = rng.choice(p, size=k, replace=False)
    w_star = np.zeros(p)
    w_star[support] = rng.choice([-1.0, 1.0], size=k)
    y = X @ w_star + noise * rng.standard_normal(n)
    return X, y, set(int(j) for j in support)


# --------------------------------------------------------------------- lasso


def test_lasso_lambda_max_kills_everything():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((60, 8))
    y = rng.standard_normal(60)
    Xs = _standardize(X)
    yc = y - y.mean()
    lam_max = np.max(np.abs(Xs.T @ yc)) / len(y)
    fit = lasso_fit(X, y, lam_max * 1.0001)
    assert np.all(fit.weights == 0.0)
    assert fit.converged


def test_lasso_zero_lambda_matches_least_squares():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((50, 5))
    y = X @ np.array([1.0, -2.0, 0.5, 0.0, 3.0]) + 0.05 * rng.standard_normal(50)
    fit = lasso_fit(X, y, 0.0, max_iter=20000, tol=1e-12)
    # Direct least-squares oracle on the same internal convention.
    w_ols, *_ = np.linalg.lstsq(_standardize(X), y - y.mean(), rcond=None)
    assert np.allclose(fit.weights, w_ols, atol=1e-6)


def test_lasso_planted_support_recovery():
    X, y, support = planted_problem(seed=3)
    fit = lasso_fit(X, y, lam=0.4)
    found = set(np.flatnonzero(fit.weights != 0.0).tolist())
    assert len(found & support) >= 4
    assert fit.converged


def test_lasso_kkt_conditions_at_convergence():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((80, 20))
    y = rng.standard_normal(80)
    lam = 0.05
    fit = lasso_fit(X, y, lam, tol=1e-10)
    Xs = _standardize(X)
    yc = y - y.mean()
    r = yc - Xs @ fit.weights
    grad = Xs.T @ r / len(y)
    for j in range(20):
        if fit.weights[j] == 0.0:
            assert abs(grad[j]) <= lam + 1e-8
        else:
            assert grad[j] - lam * np.sign(fit.weights[j]) == pytest.approx(0.0, abs=1e-8)


def test_lasso_not_converged_flag():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((40, 10))
    y = rng.standard_normal(40)
    fit = lasso_fit(X, y, 0.001, max_iter=1, tol=1e-14)
    assert not fit.converged
    assert fit.iterations == 1


def test_lasso_needs_rows():
    with pytest.raises(ValueError):
        lasso_fit(np.ones((1, 3)), np.ones(1), 0.1)


# ------------------------------------------------------- stability selection


def test_stability_selection_threshold_definition():
    # Feature selected in 70 of 100 rounds crosses threshold 0.6.
    X, y, support = planted_problem(seed=6, n=200, p=20, k=3)
    cfg = LassoConfig(lam=0.25, rounds=50)
    selected, freqs = stability_select(X, y, cfg, seed=11)
    assert np.all(freqs[selected] >= cfg.select_threshold)
    assert np.all(np.delete(freqs, selected) < cfg.select_threshold)


def test_stability_selection_pure_noise_empty():
    violations = 0
    for seed in range(10):
        rng = np.random.default_rng([21, seed])
        X = rng.standard_normal((200, 50))
        y = rng.standard_normal(200)
        selected, _ = stability_select(X, y, LassoConfig(lam=0.25, rounds=40), seed=seed)
        if len(selected) > 0:
            violations += 1
    assert violations == 0


def test_stability_selection_planted_recovery():
    X, y, support = planted_problem(seed=8)
    selected, freqs = stability_select(X, y, LassoConfig(lam=0.5, rounds=60), seed=13)
    found = set(selected.tolist())
    assert len(found & support) >= 4
    assert len(found - support) <= 2


def test_stability_selection_deterministic():
    X, y, _ = planted_problem(seed=9, n=120, p=30, k=3)
    cfg = LassoConfig(lam=0.3, rounds=25)
    s1, f1 = stability_select(X, y, cfg, seed=77)
    s2, f2 = stability_select(X, y, cfg, seed=77)
    assert np.array_equal(s1, s2) and np.array_equal(f1, f2)


# ----------------------------------------------------------------------- svm


def blobs(seed, n=200, d=5, sep=8.0):
    # Centres sep apart against unit noise; at sep=8 the sample itself is
    # linearly separated (checked below), which is what "separable by
    # construction" needs.
    rng = np.random.default_rng(seed)
    half = n // 2
    centre = np.zeros(d)
    centre[0] = sep / 2
    Xp = rng.standard_normal((half, d)) + centre
    Xn = rng.standard_normal((n - half, d)) - centre
    X = np.vstack([Xp, Xn])
    y = np.concatenate([np.ones(half), -np.ones(n - half)])
    order = rng.permutation(n)
    return X[order], y[order]


def test_svm_separable_blobs_high_accuracy():
    X, y = blobs(seed=10)
    assert X[y > 0, 0].min() > X[y < 0, 0].max()  # sample actually separated
    model = svm_train(X, y, c=10.0, epochs=200, seed=0)
    pred = [svm_predict(model, X[i]) for i in range(len(y))]
    acc = eval_metrics(pred, y.astype(int).tolist())["accuracy"]
    assert acc >= 0.99


def test_svm_objective_decreases():
    X, y = blobs(seed=12, n=100)
    model = svm_train(X, y, epochs=100, seed=0)
    objectives = model.metadata["objectives"]
    assert objectives[-1] < objectives[0]


def test_svm_xor_limited():
    X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
    y = np.array([1.0, 1.0, -1.0, -1.0])
    model = svm_train(X, y, epochs=300, seed=1)
    pred = [svm_predict(model, X[i]) for i in range(4)]
    acc = eval_metrics(pred, y.astype(int).tolist())["accuracy"]
    assert acc <= 0.75


def test_svm_duplication_invariance():
    X, y = blobs(seed=14, n=80)
    m1 = svm_train(X, y, c=2.0, epochs=120, seed=0)
    m2 = svm_train(np.vstack([X, X]), np.concatenate([y, y]), c=2.0, epochs=120, seed=0)
    probe = np.random.default_rng(0).standard_normal((20, X.shape[1]))
    for row in probe:
        assert svm_decision(m1, row) == pytest.approx(svm_decision(m2, row), abs=1e-6)


def test_svm_single_class():
    X = np.random.default_rng(0).standard_normal((10, 2))
    with pytest.raises(SingleClass):
        svm_train(X, np.ones(10))


def test_svm_decision_matches_brute_force():
    rng = np.random.default_rng(15)
    X, y = blobs(seed=15, n=60, d=4)
    model = svm_train(X, y, epochs=80, seed=2)
    for _ in range(50):
        x = rng.standard_normal(4)
        xt = (x[model.feature_indices] - model.standardizer.mean) / model.standardizer.std
        raw = float(np.dot(model.weights, xt)) + model.bias
        d = raw / np.linalg.norm(model.weights)
        assert svm_decision(model, x) == pytest.approx(d, rel=1e-12)
        assert svm_predict(model, x) == (1 if d >= 0 else -1)


def test_svm_predict_invariant_under_rescaling():
    model = SvmModel(
        weights=np.array([1.0, -2.0]),
        bias=0.5,
        feature_indices=np.array([0, 1]),
        standardizer=Standardizer(mean=np.zeros(2), std=np.ones(2)),
    )
    scaled = SvmModel(
        weights=model.weights * 7.3,
        bias=model.bias * 7.3,
        feature_indices=model.feature_indices,
        standardizer=model.standardizer,
    )
    rng = np.random.default_rng(16)
    for _ in range(100):
        x = rng.standard_normal(2)
        assert svm_predict(model, x) == svm_predict(scaled, x)


def test_svm_tie_maps_to_positive():
    model = SvmModel(
        weights=np.array([1.0, 0.0]),
        bias=0.0,
        feature_indices=np.array([0, 1]),
        standardizer=Standardizer(mean=np.zeros(2), std=np.ones(2)),
    )
    assert svm_decision(model, np.array([0.0, 5.0])) == 0.0
    assert svm_predict(model, np.array([0.0, 5.0])) == 1
    # w=(1,0), b=0, x=(3,5) -> distance 3.
    assert svm_decision(model, np.array([3.0, 5.0])) == pytest.approx(3.0)


def test_svm_zero_variance_features_dropped():
    rng = np.random.default_rng(17)
    X = rng.standard_normal((40, 3))
    X[:, 1] = 4.2
    y = np.sign(X[:, 0]) + (np.sign(X[:, 0]) == 0)
    model = svm_train(X, y, epochs=50, seed=0)
    assert 1 not in model.feature_indices.tolist()


# --------------------------------------------------------------------- platt


def _platt_nll(a, b, ds, ts):
    u = a * np.asarray(ds) + b
    return float(np.sum(np.logaddexp(0.0, u) - (1.0 - np.asarray(ts)) * u))


def test_platt_symmetric_beta_zero_alpha_negative():
    ds = [-2.0, -1.0, 1.0, 2.0]
    ys = [0, 0, 1, 1]
    params = platt_fit(ds, ys)
    assert abs(params.beta) < 1e-3
    assert params.alpha < 0
    # Grid-search oracle over (alpha, beta) confirms the optimum location.
    t = np.where(np.array(ys) == 1, 3 / 4, 1 / 4)
    best = min(
        ((a, b) for a in np.linspace(-5, 5, 201) for b in np.linspace(-2, 2, 81)),
        key=lambda ab: _platt_nll(ab[0], ab[1], ds, t),
    )
    assert params.alpha == pytest.approx(best[0], abs=0.1)
    assert params.beta == pytest.approx(best[1], abs=0.1)


def test_platt_random_labels_near_prior():
    rng = np.random.default_rng(18)
    ds = rng.standard_normal(400)
    ys = rng.integers(0, 2, size=400)
    params = platt_fit(ds, ys)
    prior = ys.mean()
    probs = [platt_score(d, params) for d in ds]
    assert abs(np.mean(probs) - prior) < 0.05
    assert abs(params.alpha) < 0.5


def test_platt_separated_stays_finite():
    ds = np.concatenate([np.linspace(-3, -1, 20), np.linspace(1, 3, 20)])
    ys = np.concatenate([np.zeros(20, dtype=int), np.ones(20, dtype=int)])
    params = platt_fit(ds, ys)
    assert math.isfinite(params.alpha) and math.isfinite(params.beta)
    assert platt_score(10.0, params) > 0.9


def test_platt_single_class():
    with pytest.raises(SingleClass):
        platt_fit([0.1, 0.2], [1, 1])


def test_platt_midpoint_and_limits():
    params = PlattParams(alpha=-1.0, beta=0.0)
    assert platt_score(0.0, params) == pytest.approx(0.5, abs=1e-12)
    assert platt_score(1000.0, params) == pytest.approx(1.0, abs=1e-9)
    assert platt_score(-1000.0, params) == pytest.approx(0.0, abs=1e-9)
    p2 = PlattParams(alpha=-0.7, beta=0.3)
    mid = -p2.beta / p2.alpha
    assert platt_score(mid, p2) == pytest.approx(0.5, abs=1e-12)


def test_platt_score_matches_formula_grid():
    rng = np.random.default_rng(19)
    for _ in range(200):
        a = rng.uniform(-3, 3)
        b = rng.uniform(-3, 3)
        d = rng.uniform(-50, 50)
        direct = 1.0 / (1.0 + math.exp(a * d + b))
        assert platt_score(d, PlattParams(a, b)) == pytest.approx(direct, abs=1e-12)


def test_platt_monotonic_and_open_interval():
    params = PlattParams(alpha=-2.0, beta=0.4)
    # Strict monotonicity over the float-resolvable band of the logistic.
    ds = np.linspace(-15, 15, 1000)
    scores = [platt_score(d, params) for d in ds]
    assert all(b > a for a, b in zip(scores, scores[1:]))
    assert all(0.0 < s < 1.0 for s in scores)
    # Far beyond saturation the score still stays inside the open interval.
    for d in (-1e6, -600.0, 600.0, 1e6):
        assert 0.0 < platt_score(d, params) < 1.0


# ------------------------------------------------------------------- metrics


def test_eval_metrics_examples():
    assert eval_metrics([1, -1, 1], [1, -1, 1]) == {
        "accuracy": 1.0, "precision": 1.0, "recall": 1.0, "f1": 1.0,
    }
    m = eval_metrics([-1] * 10, [1] * 5 + [-1] * 5)
    assert m["accuracy"] == 0.5 and m["recall"] == 0.0 and m["f1"] == 0.0
    pred = [1] * 3 + [-1] * 7
    truth = [1, 1, -1] + [1] + [-1] * 6
    m = eval_metrics(pred, truth)
    assert m["precision"] == pytest.approx(2 / 3)
    assert m["recall"] == pytest.approx(2 / 3)
    assert m["f1"] == pytest.approx(2 / 3)
    assert m["accuracy"] == pytest.approx(0.8)


def test_eval_metrics_length_mismatch():
    with pytest.raises(LengthMismatch):
        eval_metrics([1], [1, -1])
    with pytest.raises(LengthMismatch):
        eval_metrics([], [])


# ----------------------------------------------------------------- model io


def test_model_save_load_round_trip(tmp_path):
    X, y = blobs(seed=20, n=60)
    model = svm_train(X, y, epochs=60, seed=3, schema_id="llf-test")
    ds = np.array([svm_decision(model, X[i]) for i in range(len(y))])
    platt = platt_fit(ds, (y == 1).astype(int))
    path = tmp_path / "model.json"
    save_model(path, model, platt)
    loaded, platt2 = load_model(path)
    assert loaded.schema_id == "llf-test"
    assert np.allclose(loaded.weights, model.weights)
    assert platt2 is not None and platt2.alpha == pytest.approx(platt.alpha)
    x = X[0]
    assert svm_decision(loaded, x) == pytest.approx(svm_decision(model, x), rel=1e-12)


def test_schema_mismatch_raises(tmp_path):
    from bcengine.features import FeatureVector, schema_dim

    X, y = blobs(seed=21, n=40, d=182)
    model = svm_train(X, y, epochs=30, seed=0, schema_id="llf-something")
    fv = FeatureVector(np.zeros(schema_dim()), schema_id="llf-other")
    with pytest.raises(SchemaMismatch):
        svm_decision(model, fv)
