"""Acceptance checks, one verdict line per criterion."""
import time

import numpy as np
import pytest
from scipy.special import expit, roots_jacobi

from survmidas.censoring import fit_censoring_km, ipcw_weights
from survmidas.data import Dataset
from survmidas.dataprep import extract_subdataset
from survmidas.evaluation import ScoredSample, nn_conditional_survival, roc_curve
from survmidas.midas import DesignMatrix, aggregate_panel, group_structure, jacobi_recurrence, make_dictionary
from survmidas.selection import CvPlan
from survmidas.simulation import (ScenarioSpec, StudyConfig, gen_covariates, gen_survival,
                                  run_study, simulate_dataset, true_params)
from survmidas.solver import (PenaltySpec, SolverOptions, empirical_risk, fit, fit_path, lambda_max,
                              lambda_path, prox_sg, risk_gradient)
from test_dataprep import brute_force, planted
from test_evaluation import _loop_roc
from test_solver import _dykstra_prox, _problem

METHODS = ("lasso_u", "lasso_m", "sg_lasso_m")


@pytest.fixture(scope="module")
def monte_carlo():
    cfg = StudyConfig(specs=(ScenarioSpec(1, 1200, seed=2024),), replications=30,
                       percentiles=(10, 30, 50), methods=METHODS, plan=CvPlan(k=5))
    start = time.time()
    res = run_study(cfg)
    return res, time.time() - start


@pytest.mark.slow
def test_criterion_1_auc_table(monte_carlo, criterion):
    res, secs = monte_carlo
    auc = np.nanmean(res.aucs[0], axis=0)  # (horizon, method)
    u, m, sg = range(3)
    sg_t2, u_t2 = auc[1, sg], auc[1, u]
    order = all(auc[h, sg] > auc[h, m] > auc[h, u] for h in (1, 2))
    ok = 0.87 <= sg_t2 <= 0.95 and 0.58 <= u_t2 <= 0.72 and order
    detail = (f"t2 sg={sg_t2:.3f} in [0.87, 0.95], U={u_t2:.3f} in [0.58, 0.72]; "
              f"t2 means U/M/sg={auc[1].round(3).tolist()}, t3={auc[2].round(3).tolist()}; "
              f"ordering={order}; {secs / 60:.1f} min")
    criterion(1, "reduced-scale AUC table, Scenario 1, N=1200, 30 reps", ok, detail)


@pytest.mark.slow
def test_criterion_8_weight_recovery(monte_carlo, criterion):
    res, _ = monte_carlo
    mse = res.mse[0, :20, 0, :, 0]  # first 20 reps, t1, covariate 1
    share = float(np.mean(mse[:, 2] <= mse[:, 0]))
    detail = f"share={share:.2f}; mean MSE sg={mse[:, 2].mean():.3f}, U={mse[:, 0].mean():.3f}"
    criterion(8, "sg-LASSO-M lag-weight MSE <= LASSO-U in >= 80% of 20 reps", share >= 0.8, detail)


def test_criterion_2_censoring_calibration(criterion):
    rates = [simulate_dataset(ScenarioSpec(1, 1200, seed=s)).censoring_rate for s in range(10)]
    hits = sum(0.79 <= r <= 0.83 for r in rates)
    criterion(2, "calibrated censoring in [0.79, 0.83] for >= 9 of 10 seeds", hits >= 9,
              f"{hits}/10, rates={np.round(rates, 3).tolist()}")


def test_criterion_3_solver_oracles(criterion):
    rng = np.random.default_rng(2024)
    # (a) unpenalised fit vs Newton MLE
    n = 200
    x = np.column_stack([np.ones(n), rng.normal(size=(n, 3))])
    y = (rng.random(n) < expit(x @ [0.2, 0.8, -0.6, 0.1])).astype(float)
    b = np.zeros(4)
    for _ in range(50):
        p = expit(x @ b)
        b -= np.linalg.solve(x.T @ (x * (p * (1 - p))[:, None]), x.T @ (p - y))
    groups, pen = group_structure(1, 3)
    res = fit(DesignMatrix(x, groups, pen), y, PenaltySpec(0.5, 0.0, groups, pen),
              SolverOptions(tol=1e-10, max_iter=50000))
    err_a = np.abs(res.beta - b).max()
    # (b) prox vs Dykstra splitting
    groups, pen = group_structure(3, 3)
    err_b = 0.0
    for _ in range(200):
        v = rng.normal(scale=2, size=10)
        alpha, step, lam = rng.uniform(), rng.uniform(0.1, 2), rng.uniform(0, 1.5)
        ours = prox_sg(v, step, PenaltySpec(alpha, lam, groups, pen))
        ref = _dykstra_prox(v[1:], step * lam, alpha, [g - 1 for g in groups[1:]])
        err_b = max(err_b, np.abs(ours[1:] - ref).max(), abs(ours[0] - v[0]))
    # (c) KKT at convergence
    kkt = 0.0
    for _ in range(50):
        dm, f = _problem(rng, n=int(rng.integers(60, 200)))
        alpha = float(rng.choice([0.0, 0.3, 0.7, 1.0]))
        lam = lambda_max(dm, f, alpha) * rng.uniform(0.25, 0.9)
        r = fit(dm, f, PenaltySpec.for_design(dm, alpha, lam), SolverOptions(tol=1e-8))
        kkt = max(kkt, r.kkt_residual if not r.diverged else np.inf)
    # (d) gradient vs central differences
    dm, f = _problem(rng)
    beta = rng.normal(scale=0.3, size=dm.p)
    g = risk_gradient(dm.x, f, beta)
    fd = np.array([(empirical_risk(dm.x, f, beta + 1e-5 * e) - empirical_risk(dm.x, f, beta - 1e-5 * e))
                   / 2e-5 for e in np.eye(dm.p)])
    rel_d = np.linalg.norm(fd - g) / np.linalg.norm(g)
    # (e) alpha = 1 path vs plain ISTA lasso
    dm, f = _problem(rng, n=120, k=2)
    lams = lambda_path(dm, f, 1.0, n_lambda=6, ratio=0.1, standardize=False)
    path = fit_path(dm, f, 1.0, lams, SolverOptions(tol=1e-10, standardize=False, max_iter=100000))
    L = np.linalg.norm(dm.x, 2) ** 2 / (4 * dm.n)
    err_e = 0.0
    for r in path:
        b = np.zeros(dm.p)
        for _ in range(200000):
            z = b - risk_gradient(dm.x, f, b) / L
            nb = z.copy()
            nb[1:] = np.sign(z[1:]) * np.maximum(np.abs(z[1:]) - r.lam / L, 0.0)
            done = np.abs(nb - b).max() < 1e-14
            b = nb
            if done:
                break
        err_e = max(err_e, np.abs(r.beta - b).max())
    ok = err_a < 1e-6 and err_b < 1e-8 and kkt < 1e-7 and rel_d < 1e-6 and err_e < 1e-7
    detail = (f"a={err_a:.1e} b={err_b:.1e} c={kkt:.1e} d={rel_d:.1e} e={err_e:.1e}")
    criterion(3, "solver oracle suite", ok, detail)


def test_criterion_4_censoring_weights(criterion):
    time = np.array([2.0, 3.0, 5.0, 7.0, 9.0])
    status = np.array([1, 0, 1, 0, 1])
    ds = Dataset([f"u{i}" for i in range(5)], time, status, np.zeros((5, 1, 2)), 1, 2)
    km = fit_censoring_km(ds)
    steps = km(np.array([2.5, 4.0, 8.0])).tolist()
    ok_km = steps == [1.0, 0.75, 0.375]

    rng = np.random.default_rng(4)
    n = 80
    t_all = rng.uniform(1, 6, n)
    full = Dataset([f"v{i}" for i in range(n)], t_all, np.ones(n, int), np.zeros((n, 1, 2)), 1, 2)
    w = ipcw_weights(full, fit_censoring_km(full), 3.5).weights
    y = (t_all <= 3.5).astype(float)
    x = np.column_stack([np.ones(n), rng.normal(size=(n, 2))])
    beta = np.array([0.3, -0.7, 1.1])
    eta = x @ beta
    ok_loss = empirical_risk(x, w, beta) == float(np.mean(-y * eta + np.logaddexp(0.0, eta)))
    criterion(4, "KM fixture steps and no-censoring Bernoulli loss", ok_km and ok_loss,
              f"steps={steps}, bit-exact loss={ok_loss}")


def test_criterion_5_roc(criterion):
    # perfect separation without censoring
    time = np.r_[np.linspace(1, 4, 10), np.linspace(7, 9, 10)]
    scores = np.r_[np.linspace(0.6, 0.9, 10), np.linspace(0.1, 0.4, 10)]
    perfect = roc_curve(ScoredSample(scores, time, np.ones(20, int), 5.0), 0.04).auc
    rng = np.random.default_rng(3)
    s20 = np.round(rng.uniform(size=20), 2)
    s20[5] = s20[6]
    t20 = np.round(rng.uniform(1, 10, 20), 1)
    d20 = rng.integers(0, 2, 20)
    sample = ScoredSample(s20, t20, d20, 6.0)
    const = roc_curve(ScoredSample(np.full(20, 0.4), t20, d20, 6.0), 0.3).auc
    err = 0.0
    for kappa in (0.1, 0.2, 0.5):
        surv, se, sp = _loop_roc(list(s20), list(t20), list(d20), 6.0, kappa)
        c = roc_curve(sample, kappa)
        ours, _ = nn_conditional_survival(sample, kappa)
        err = max(err, np.abs(ours - surv).max(), np.abs(c.tpr_raw - se).max(),
                  np.abs(c.fpr_raw - (1 - sp)).max())
    base = roc_curve(sample, 0.3).auc
    moved = roc_curve(ScoredSample(s20 ** 3, t20, d20, 6.0), 0.3).auc
    ok = abs(perfect - 1) <= 1e-9 and const == 0.5 and err < 1e-10 and abs(base - moved) < 1e-12
    criterion(5, "nearest-neighbour ROC estimator", ok,
              f"perfect={perfect!r}, constant={const!r}, oracle err={err:.1e}, "
              f"transform diff={abs(base - moved):.1e}")


def test_criterion_6_dictionaries(criterion):
    worst = 0.0
    for a, b in ((0.0, 0.0), (-0.5, -0.5), (0.5, 0.5)):
        nodes, weights = roots_jacobi(64, a, b)
        for L in range(1, 7):
            P = jacobi_recurrence(nodes, L, a, b)
            gram = (P * weights[:, None]).T @ P
            worst = max(worst, np.abs(gram - np.diag(np.diag(gram))).max())
    panel = np.zeros((2, 50, 24))
    p_m = aggregate_panel(panel, make_dictionary("gegenbauer", 3, 24, (-0.5,))).p
    p_u = aggregate_panel(panel, make_dictionary("unrestricted", None, 24)).p
    ok = worst < 1e-8 and p_m == 151 and p_u == 1201
    criterion(6, "Jacobi orthogonality and parameter counts", ok,
              f"max off-diagonal={worst:.1e}, p={p_m} and {p_u}")


def test_criterion_7_dgp(criterion):
    spec = ScenarioSpec(1, 200, k=2)
    rng = np.random.default_rng(77)
    panel = gen_covariates(spec, rng)
    s, t, reps = spec.s, 7.0, 100_000
    b0, theta = true_params(t, s, spec.d)
    probs = expit(b0 + np.einsum("nkd,kd->n", panel, theta))
    # the first three draws whose event probability is not saturated
    picks = np.flatnonzero((probs > 0.1) & (probs < 0.9))[:3]
    zs, above_s = [], True
    for i in picks:
        T = gen_survival(np.repeat(panel[i:i + 1], reps, axis=0), s, rng)
        emp = float(np.mean(T <= t))
        zs.append(abs(emp - probs[i]) / np.sqrt(probs[i] * (1 - probs[i]) / reps))
        above_s &= bool(np.all(T > s))
    ok = len(zs) == 3 and max(zs) <= 3 and above_s
    criterion(7, "DGP event probability matches logistic model", ok,
              f"p={np.round(probs[picks], 3).tolist()}, |z|={np.round(zs, 2).tolist()}")


def test_criterion_9_subdataset_extraction(criterion):
    agree, clean, ratios = 0, True, True
    for seed in range(10):
        raw = planted(seed)
        ds, report = extract_subdataset(raw, 6.0, 10, 5, 15)
        _, a, b, rows, ks = brute_force(raw, 6.0, 10, 5, 15)
        sel = next(r for r in report if r.selected)
        agree += (sel.a, sel.b) == (a, b) and sorted(ds.ids) == sorted(raw.ids[rows])
        clean &= bool(np.all(np.isfinite(ds.panel)))
        n_post = int((raw.time >= 6.0).sum())
        ratios &= ds.n / n_post >= 0.5 and ds.k / raw.k >= 0.5
    criterion(9, "sub-dataset extraction vs brute-force grid", agree == 10 and clean and ratios,
              f"{agree}/10 agree, complete={clean}, ratios ok={ratios}")
