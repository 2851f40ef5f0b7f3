import itertools

import numpy as np
import pytest
from scipy import optimize
from scipy.special import expit, logit

from idmix import distributions as D
from idmix.estimation import (DegenerateResponseError, DesignMatrix, FittedMixtureModel, adaptive_weights, bic,
                              cd_quadratic, fit_mixture, gamlss_fit, kkt_violation, lasso_logistic_fit)
from idmix.estimation.lasso import quadratic_kkt


def irls_oracle(A, y, iters=100):
    """Plain Newton-Raphson for the unpenalized logistic likelihood."""
    b = np.zeros(A.shape[1])
    for _ in range(iters):
        p = expit(A @ b)
        H = (A * (p * (1 - p))[:, None]).T @ A
        step = np.linalg.solve(H, A.T @ (y - p))
        b += step
        if np.max(np.abs(step)) < 1e-14:
            break
    return b


def logistic_problem(n, p, seed, active=3):
    rng = np.random.default_rng(seed)
    Z = rng.normal(size=(n, p))
    Z = (Z - Z.mean(0)) / Z.std(0)
    beta = np.zeros(p)
    beta[:active] = rng.uniform(0.3, 1.0, active) * rng.choice([-1, 1], active)
    y = (rng.random(n) < expit(0.2 + Z @ beta)).astype(float)
    return Z, y


def test_bic_formula():
    assert bic(-100.0, 3, 1000) == pytest.approx(200 + 3 * np.log(1000))
    assert bic(-7.5, 0, 10) == 15.0


def test_full_shrinkage_gives_logit_of_mean():
    Z, y = logistic_problem(500, 5, 0)
    path = lasso_logistic_fit(Z, y, lambdas=[1e6])
    assert np.all(path.coef == 0)
    assert path.intercept == pytest.approx(logit(y.mean()), abs=1e-10)


def test_unpenalized_matches_irls_on_20_columns():
    Z, y = logistic_problem(2000, 20, 1)
    path = lasso_logistic_fit(Z, y, lambdas=[0.0])
    oracle = irls_oracle(np.column_stack([np.ones(len(y)), Z]), y)
    np.testing.assert_allclose(np.r_[path.intercept, path.coef], oracle, atol=1e-6)


def test_selected_fit_satisfies_kkt():
    for seed in range(3):
        Z, y = logistic_problem(1500, 12, seed)
        path = lasso_logistic_fit(Z, y)
        assert kkt_violation(Z, y, path.intercept, path.coef, path.lam) < 1e-6
        assert path.df[path.selected] == 1 + np.count_nonzero(path.coef)
        assert path.bic[path.selected] == path.bic.min()


def test_lasso_support_matches_brute_force():
    """Two predictors: minimize the penalized objective over every support."""
    Z, y = logistic_problem(400, 2, 5, active=1)
    n, lam = len(y), 0.02

    def objective(b):
        eta = b[0] + Z @ b[1:]
        return -np.sum(y * eta - np.logaddexp(0, eta)) / n + lam * np.sum(np.abs(b[1:]))

    best = None
    for support in itertools.product([0, 1], repeat=2):
        keep = np.flatnonzero(support)

        def f(v):
            b = np.zeros(3)
            b[0] = v[0]
            b[1 + keep] = v[1:]
            return objective(b)

        r = optimize.minimize(f, np.zeros(1 + len(keep)), method="Nelder-Mead",
                              options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 20000})
        if best is None or r.fun < best[0] - 1e-12:
            best = (r.fun, set(keep))
    path = lasso_logistic_fit(Z, y, lambdas=[lam])
    assert set(np.flatnonzero(path.coef)) == best[1]


def test_degenerate_response():
    with pytest.raises(DegenerateResponseError):
        lasso_logistic_fit(np.ones((10, 2)), np.ones(10))


def test_adaptive_weights_examples():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(200, 2))
    w, b, ridge = adaptive_weights(X, X @ [2.0, -0.5], intercept=False)
    np.testing.assert_allclose(b, [2.0, -0.5], atol=1e-12)
    np.testing.assert_allclose(w, [0.5, 2.0], rtol=1e-10)
    assert not ridge
    w, b, _ = adaptive_weights(X, 3.0 * X[:, 0], intercept=False)
    assert abs(b[1]) < 1e-8 and w[1] == 1e8
    X0 = np.column_stack([X[:, 0], np.zeros(200)])
    w, b, ridge = adaptive_weights(X0, X0[:, 0], intercept=False)
    assert ridge and b[1] == 0 and w[1] == 1e8


def test_adaptive_weights_normal_equations_oracle():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(300, 6))
    y = rng.normal(size=300)
    sw = rng.uniform(0.5, 2.0, 300)
    A = np.column_stack([np.ones(300), X])
    b = np.linalg.pinv(A.T @ (A * sw[:, None])) @ (A.T @ (sw * y))
    w, got, _ = adaptive_weights(X, y, sw)
    np.testing.assert_allclose(got, b[1:], rtol=1e-9)
    np.testing.assert_allclose(w, 1 / np.abs(b[1:]), rtol=1e-9)


def test_cd_quadratic_on_collinear_design():
    rng = np.random.default_rng(3)
    for _ in range(50):
        base = rng.normal(size=(200, 2))
        X = np.column_stack([base[:, 0], base[:, 0] * 2.0 + 1e-9 * rng.normal(size=200),
                             base[:, 0] + base[:, 1], base[:, 1]])
        G = X.T @ X / 200
        c = X.T @ (X[:, 0] + rng.normal(size=200)) / 200
        pen = np.ones(4)
        lam = float(rng.uniform(0.01, 0.3))
        beta = cd_quadratic(G, c, lam, pen)
        assert quadratic_kkt(G, c, lam, pen, beta) < 1e-9


def test_gamlss_intercept_only_recovery():
    rng = np.random.default_rng(0)
    n = 20_000
    y = D.sample("jsu", D.Theta(0.0, 1.5, 0.3, 2.0), rng, n)
    fit = gamlss_fit(np.zeros((n, 0)), y, "jsu")
    links = D.DEFAULT_LINKS["jsu"]
    truth = [D.link_forward(l, v) for l, v in zip(links[1:], (1.5, 0.3, 2.0))]
    np.testing.assert_allclose(fit.intercepts[1:], truth, atol=0.1)


def test_gamlss_one_sigma_regressor_and_decoys():
    rng = np.random.default_rng(7)
    n = 20_000
    Z = rng.normal(size=(n, 11))
    sigma = D.link_inverse("logident", 0.4 + 0.35 * Z[:, 0])
    y = D.sample("jsu", D.Theta(0.0, sigma, 0.2, 2.0), rng, n)
    fit = gamlss_fit(Z, y, "jsu")
    assert fit.coefs[1, 0] > 0
    assert np.all(fit.coefs[1, 1:] == 0)
    assert np.all(fit.coefs[[0, 2, 3]] == 0)
    assert np.all(fit.kkt < 1e-6)


def test_gamlss_full_shrinkage_is_constant_fit():
    rng = np.random.default_rng(2)
    n = 5000
    Z = rng.normal(size=(n, 4))
    y = D.sample("jsu", D.Theta(0.0, 1.0 + 0.3 * (Z[:, 0] > 0), 0.2, 2.0), rng, n)
    shrunk = gamlss_fit(Z, y, "jsu", lambdas=[np.inf])
    const = gamlss_fit(np.zeros((n, 0)), y, "jsu")
    assert not shrunk.coefs.any()
    np.testing.assert_allclose(shrunk.intercepts, const.intercepts, atol=1e-6)


def fitted_model(seed=0):
    rng = np.random.default_rng(seed)
    n = 3000
    Xl = rng.normal(size=(n, 3))
    alpha = rng.random(n) < expit(0.3 + Xl[:, 0])
    Xg = rng.normal(size=(int(alpha.sum()), 2))
    dp = D.sample("jsu", D.Theta(0.2 * Xg[:, 0], 1.0, 0.1, 2.0), rng, len(Xg))
    model = fit_mixture(DesignMatrix.build(Xl, ("a", "b", "c")), alpha, DesignMatrix.build(Xg, ("u", "v")), dp,
                        window={"id": "mix_test"})
    return model, Xl, Xg, alpha, dp


def test_predict_consistency_and_round_trip(tmp_path):
    model, Xl, Xg, alpha, dp = fitted_model()
    zero_row = model.gamlss_std.mean[None, :]
    th = model.predict_theta(zero_row)
    assert th.sigma[0] == pytest.approx(D.link_inverse(model.links[1], model.gamlss_intercepts[1]), rel=1e-15)
    pi = model.predict_pi(Xl)
    # refit the two stages directly; in-fit values must equal the stored model's predictions
    Zl = DesignMatrix.build(Xl, "abc").standardized
    path = lasso_logistic_fit(Zl, alpha)
    np.testing.assert_allclose(pi, expit(path.intercept + Zl @ path.coef), rtol=1e-12)
    Zg = DesignMatrix.build(Xg, "uv").standardized
    np.testing.assert_allclose(model.predict_eta(Xg), gamlss_fit(Zg, dp, "jsu").eta(Zg), rtol=1e-12)
    model.save(tmp_path / "m.json")
    back = FittedMixtureModel.load(tmp_path / "m.json")
    assert np.array_equal(back.predict_pi(Xl), pi)
    np.testing.assert_array_equal(back.predict_eta(Xg), model.predict_eta(Xg))
    assert back.model_id == "mix_test"


def test_intercept_only_pi_is_mean():
    rng = np.random.default_rng(4)
    alpha = rng.random(800) < 0.37
    Xl = np.ones((800, 2))  # constant columns carry no information
    Xg = rng.normal(size=(int(alpha.sum()), 1))
    dp = rng.standard_t(5, len(Xg))
    model = fit_mixture(DesignMatrix.build(Xl, ("a", "b")), alpha, DesignMatrix.build(Xg, ("u",)), dp)
    assert model.predict_pi(Xl[:1])[0] == pytest.approx(alpha.mean(), abs=1e-9)


def test_manifest_mismatch_is_a_contract_violation():
    model, Xl, *_ = fitted_model(1)
    with pytest.raises(D.ContractViolation):
        model.predict_pi(Xl, ("a", "c", "b"))
    with pytest.raises(D.ContractViolation):
        model.predict_pi(Xl[:, :2])
