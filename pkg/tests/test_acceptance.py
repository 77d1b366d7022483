"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are also collected into an "acceptance criteria" section of the
pytest terminal summary (see ``conftest.py``).
"""

import json
import logging
import os
import time

import numpy as np
import pytest

from oracles import dual_value, qp_dual_oracle
from subband_svm.corpus import ClassMap, SyntheticSpec, make_synthetic_corpus
from subband_svm.ensemble import (classify, ensemble_error_analytic, extract_subband_set, train_base,
                                  train_stacked)
from subband_svm.features import SubbandFeatureConfig, vts_compensate
from subband_svm.filterbank import analyze, design_cmfb, synthesize
from subband_svm.fusion import lambda_emp
from subband_svm.harness import ExperimentConfig, compute_error, run_sweep
from subband_svm.kernels import KernelParams, gram_kp, gram_kp_norm, gram_ke, gram_komega, ke, kp_norm
from subband_svm.svm import dual_objective, predict_sign, smo
from synthetic_cases import vts_case


def test_c1_filter_bank_reconstruction(verdict):
    rng = np.random.default_rng(0)
    signals = [rng.standard_normal(4096) for _ in range(100)]
    worst_rec = worst_energy = 0.0
    t0 = time.perf_counter()
    for S in (4, 16, 32):
        bank = design_cmfb(S)
        for x in signals:
            c = analyze(x, bank)
            worst_rec = max(worst_rec, np.max(np.abs(synthesize(c, bank) - x)) / np.max(np.abs(x)))
            worst_energy = max(worst_energy, abs(np.sum(c.components**2) - x @ x) / (x @ x))
    elapsed = time.perf_counter() - t0
    ok = worst_rec < 1e-9 and worst_energy < 1e-9 and elapsed < 5.0
    verdict("C1 filter bank PR", ok,
            f"max rel recon err {worst_rec:.2e}, max rel energy err {worst_energy:.2e}, {elapsed:.2f}s")


def test_c2_kernels(verdict):
    rng = np.random.default_rng(1)
    problems = []
    X = rng.standard_normal((100, 12))
    for i in range(99):
        x, y = X[i], X[i + 1]
        values = {ke(x, y), ke(y, x), ke(-x, y), ke(x, -y), ke(-x, -y)}
        if len(values) != 1:
            problems.append(f"K_e invariance at {i}")
    Ke = gram_ke(X)
    if not np.array_equal(Ke, Ke.T):
        problems.append("K_e Gram not symmetric")

    Om = rng.standard_normal((100, 6)) / np.sqrt(6)
    grams = {
        "K_p": gram_kp(X / np.sqrt(12)),
        "K_p'": gram_kp_norm(X),
        "K_e": Ke,
        "K_omega": gram_komega(X, Om),
    }
    worst = {}
    for name, G in grams.items():
        G = 0.5 * (G + G.T)
        ratio = np.linalg.eigvalsh(G)[0] / (np.trace(G) / len(G))
        worst[name] = ratio
        if ratio < -1e-8:
            problems.append(f"{name} not PSD ({ratio:.1e})")
    for x in X[:20]:
        if kp_norm(x, x) != 64.0 or ke(x, x) != 64.0:
            problems.append("diagonal is not 64")
            break
    verdict("C2 kernels", not problems,
            "min eig/(trace/n): " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
            + ("; " + "; ".join(problems) if problems else ""))


def test_c3_smo_matches_qp_oracle(verdict):
    rng = np.random.default_rng(2)
    kernels = [KernelParams("linear"), KernelParams("poly", 2), KernelParams("poly", 6)]
    worst_obj, mismatches = 0.0, 0
    t0 = time.perf_counter()
    for p in range(50):
        n = int(rng.integers(4, 26))
        d = int(rng.integers(2, 6))
        X = rng.standard_normal((n, d)) / np.sqrt(d)
        y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
        y[0], y[1] = 1.0, -1.0
        kern = kernels[p % 3]
        K = kern.gram(X)
        res = smo(K, y, 1.0, tol=1e-6)
        a_ref, b_ref = qp_dual_oracle(K, y, 1.0)
        worst_obj = max(worst_obj, abs(dual_objective(res.alpha, y, K) - dual_value(a_ref, y, K)))
        probes = rng.standard_normal((100, d)) / np.sqrt(d)
        Kp = kern.gram(probes, X)
        ours = predict_sign(Kp @ (res.alpha * y) + res.b)
        ref = predict_sign(Kp @ (a_ref * y) + b_ref)
        mismatches += int(np.sum(ours != ref))
    elapsed = time.perf_counter() - t0
    ok = worst_obj < 1e-6 and mismatches == 0 and elapsed < 60.0
    verdict("C3 SMO vs QP oracle", ok,
            f"max dual gap {worst_obj:.1e}, {mismatches} probe mismatches of 5000, {elapsed:.1f}s")


def test_c4_ensemble_analytics(verdict):
    rng = np.random.default_rng(3)
    trials = 100_000
    worst_z = 0.0
    for p in (0.1, 0.2, 0.4):
        for S in (3, 5, 15):
            wrong = rng.binomial(S, p, size=trials)
            mc = np.mean(wrong >= -(-S // 2))
            p_e, _ = ensemble_error_analytic(p, S)
            se = np.sqrt(p_e * (1 - p_e) / trials)
            worst_z = max(worst_z, abs(mc - p_e) / se)
    p_e, _ = ensemble_error_analytic(0.1, 3)
    exact = round(p_e, 12) == 0.028
    half = all(ensemble_error_analytic(0.5, S)[1] == 0.5 for S in range(1, 65))
    ok = worst_z <= 3.0 and exact and half
    verdict("C4 ensemble analytics", ok,
            f"max |MC - analytic| = {worst_z:.2f} SE, p_e(0.1, 3) = {p_e:.15f}, bound at p=0.5 is 0.5: {half}")


def test_c5_stacking_discounts_a_noise_subband(verdict):
    logging.getLogger("subband_svm").setLevel(logging.ERROR)
    bank = design_cmfb(4)
    smallest = not_worse = 0
    for seed in range(20):
        k = seed % 4
        cfg = SubbandFeatureConfig(S=4, noise_subbands=(k,))
        utts = make_synthetic_corpus(SyntheticSpec(n_utterances=36), seed=seed)
        train, dev, test = (extract_subband_set(part, bank, cfg, seed=seed)
                            for part in (utts[:12], utts[12:28], utts[28:]))
        base = train_base(train)
        stacked = train_stacked(base, dev_features=[dev])
        mean_w = np.abs(stacked.weights()).mean(axis=0)
        smallest += int(np.argmin(mean_w) == k)
        err_st = np.mean(classify(stacked, test) != test.y)
        err_mv = np.mean(classify(base, test, "majority") != test.y)
        not_worse += int(err_st <= err_mv)
    ok = smallest >= 18 and not_worse >= 18
    verdict("C5 stacked generalization", ok,
            f"noise subband smallest mean |w| in {smallest}/20, stacked <= majority in {not_worse}/20")


@pytest.fixture(scope="module")
def trend_table(tmp_path_factory):
    out = tmp_path_factory.mktemp("trend")
    cfg = ExperimentConfig.from_dict({
        "corpus": {"synthetic": {}, "seed": 0, "n_train": 100, "n_dev": 120, "n_test": 40},
        "front_ends": ["mfcc", "subband", "fused"],
        "snr_grid": ["quiet", 12, 0, -6],
        "output_dir": str(out / "run"),
        "cache_dir": None,
    })
    t0 = time.perf_counter()
    table = run_sweep(cfg)
    return table, time.perf_counter() - t0


GRID = [None, 12.0, 0.0, -6.0]


def _curve(table, front_end):
    return [table.lookup(front_end, "anechoic", "white", snr) for snr in GRID]


def test_c6a_errors_grow_as_snr_falls(trend_table, verdict):
    table, elapsed = trend_table
    curves = {fe: _curve(table, fe) for fe in ("mfcc", "subband")}
    ok = all(np.all(np.diff(c) >= 0) for c in curves.values()) and elapsed < 1800
    verdict("C6a monotone error trend", ok,
            "; ".join(f"{fe} " + "/".join(f"{e:.1f}" for e in c) for fe, c in curves.items())
            + f" (quiet/12/0/-6 dB, {elapsed:.0f}s)")


def test_c6b_subband_beats_mfcc_at_minus_6db(trend_table, verdict):
    table, _ = trend_table
    sub = table.lookup("subband", "anechoic", "white", -6.0)
    mfcc = table.lookup("mfcc", "anechoic", "white", -6.0)
    verdict("C6b subband < MFCC at -6 dB", sub < mfcc, f"subband {sub:.2f}% vs MFCC {mfcc:.2f}%")


def test_c6c_fusion_tracks_the_better_front_end(trend_table, verdict):
    table, _ = trend_table
    fused, mfcc, sub = (_curve(table, fe) for fe in ("fused", "mfcc", "subband"))
    slack = [f - min(m, s) for f, m, s in zip(fused, mfcc, sub)]
    ok = all(v <= 2.0 for v in slack)
    verdict("C6c fused <= min + 2 points", ok,
            "fused - min: " + "/".join(f"{v:+.1f}" for v in slack) + " (quiet/12/0/-6 dB)")


def test_c7_fusion_weight_formula(verdict):
    grid = np.linspace(1e-4, 1.0, 100)
    lam = lambda_emp(grid)
    ok = (lambda_emp(0.03) == 0.45 and lambda_emp(0.0) == 0.2 and lambda_emp(np.inf) == 0.7
          and bool(np.all(np.diff(lam) > 0)))
    verdict("C7 fusion weight", ok,
            f"lambda(0.03)={lambda_emp(0.03)}, lambda(0)={lambda_emp(0.0)}, lambda(inf)={lambda_emp(np.inf)}, "
            f"increasing on grid: {bool(np.all(np.diff(lam) > 0))}")


def test_c8_grouped_error(verdict):
    cmap = ClassMap(names=("a", "b", "c", "d"), fold={n: i for i, n in enumerate("abcd")}, groups={0: 0, 1: 0})
    truth = [0, 1, 2, 3, 0, 1]
    cases = [
        ([0, 1, 2, 3, 0, 1], None, 0.0),
        ([1, 0, 2, 3, 0, 1], cmap, 0.0),
        ([1, 0, 2, 3, 0, 1], None, 100 * 2 / 6),
        ([0, 1, 2, 2, 0, 1], None, 100 * 1 / 6),
        ([1, 1, 3, 2, 2, 0], cmap, 100 * 3 / 6),
        ([1, 1, 3, 2, 2, 0], None, 100 * 5 / 6),
    ]
    got = [compute_error(pred, truth, cm) for pred, cm, _ in cases]
    ok = all(g == want for g, (_, _, want) in zip(got, cases))
    verdict("C8 grouped error", ok, "errors " + ", ".join(f"{g:.4f}" for g in got))


def test_c9_vts(verdict):
    gmm, clean, noisy, mu_n, var_n = vts_case(seed=0)
    ident = np.max(np.abs(vts_compensate(clean, gmm, noise_mean=-np.inf, noise_var=0.0) - clean))
    before = np.mean((noisy - clean) ** 2)
    after = np.mean((vts_compensate(noisy, gmm, mu_n, var_n) - clean) ** 2)
    ok = ident <= 1e-6 and after < before
    verdict("C9 VTS", ok, f"quiet-limit max dev {ident:.1e}, log-mel MSE {before:.3f} -> {after:.3f} at 0 dB")


def test_c10_timit_table(verdict):
    path = os.environ.get("TIMIT_EXPERIMENT")
    if not path:
        pytest.skip("licensed TIMIT corpus not available; set TIMIT_EXPERIMENT to an experiment config for it")
    cfg = json.loads(open(path).read())
    cfg.update({"front_ends": ["subband", "majority"], "snr_grid": ["quiet"], "S": 16})
    table = run_sweep(ExperimentConfig.from_dict(cfg))
    sub = table.lookup("subband", "anechoic", "white", None)
    mv = table.lookup("majority", "anechoic", "white", None)
    ok = abs(sub - 31.2) <= 1.5 and abs(mv - 42.4) <= 1.5
    verdict("C10 TIMIT 16-channel table", ok, f"stacked {sub:.1f}% (31.2), majority {mv:.1f}% (42.4)")
