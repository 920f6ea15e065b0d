"""Quick oracle and invariant checks runnable from an installed package."""

from __future__ import annotations

import json
import time

import numpy as np

from .causal import PropensityScores, caliper_match, fit_logistic
from .collaboration import ENVELOPE_FIELDS, generate_anchor, make_intermediate_share
from .harness import ExperimentConfig, LogisticSettings, ReducerSpec, run_experiment
from .metrics import gap, histogram, jeffreys, smd_from_summary
from .reduction import fit_pca
from .tabular import PartitionSpec, gaussian_config, generate_synthetic, partition


def _newton_plain(X, z, lam, iters=100):
    """Unstandardized Newton iteration, independent of the IRLS path."""
    A = np.hstack([np.ones((len(z), 1)), X])
    theta = np.zeros(A.shape[1])
    P = lam * np.eye(A.shape[1])
    P[0, 0] = 0.0
    for _ in range(iters):
        p = 1 / (1 + np.exp(-A @ theta))
        g = A.T @ (z - p) - P @ theta
        H = A.T @ (A * (p * (1 - p))[:, None]) + P
        theta = theta + np.linalg.solve(H, g)
    return theta


def _check_smd():
    a = smd_from_summary(0.065, 0.003, kind="binary")
    b = smd_from_summary(46.719, 86.603, 28.571**2, 49.982**2)
    return abs(a - 0.346) <= 0.005 and abs(b + 0.98) <= 0.01, f"binary {a:.4f}, continuous {b:.4f}"


def _check_metric_identities():
    v = np.linspace(0, 1, 7)
    p = histogram(v, 5, (0, 1), 1e-9)
    q = histogram(v**2, 5, (0, 1), 1e-9)
    ok = gap(v, v) == 0 and jeffreys(p, p) == 0 and jeffreys(p, q) == jeffreys(q, p) and abs(p.sum() - 1) <= 1e-12
    return ok, "gap/jeffreys/histogram identities"


def _check_logistic():
    X = np.arange(6.0)[:, None]
    z = np.array([0, 0, 0, 1, 1, 1.0])
    model = fit_logistic(X, z, lam=0.1)
    ref = _newton_plain(X, z, 0.1)
    err = max(abs(model.intercept - ref[0]), abs(model.coefficients[0] - ref[1]))
    return err <= 1e-6 and model.grad_norm <= 1e-8, f"max coefficient error {err:.2e}, gradient {model.grad_norm:.1e}"


def _check_matching():
    s = PropensityScores([0, 1, 2], [0.51, 0.50, 0.50])
    m = caliper_match(s, np.array([1, 1, 0]), caliper_multiplier=100.0)
    return m.pairs == ((0, 2),) and m.unmatched_treated == 1, f"pairs {m.pairs}"


def _check_envelope():
    pop = generate_synthetic(gaussian_config(n=200, m=4, seed=1))
    party = partition(pop, PartitionSpec("iid", parts=2, seed=0))[0]
    red = fit_pca(party.population.X, 3)
    anchor = generate_anchor([(-3, 3)] * 4, 50, 0)
    share = make_intermediate_share(party, red, anchor)
    keys = set(json.loads(share.to_envelope()))
    return keys == set(ENVELOPE_FIELDS), f"envelope keys {sorted(keys)}"


def _check_exact_recovery():
    cfg = ExperimentConfig(
        data={"synthetic": {"preset": "gaussian", "n": 600, "m": 5, "seed": 3}},
        partition=PartitionSpec("iid", parts=3),
        reducer=ReducerSpec(method="shared"),
        intermediate_dim=5,
        replicates=2,
        logistic=LogisticSettings(lam=0.0, tol=1e-10),
        mjd=False,
    )
    report = run_experiment(cfg)
    worst = 0.0
    for rep in report.replicates:
        worst = max(worst, rep["DCQE_3"].inconsistency, abs(rep["DCQE_3"].att - rep["CA"].att))
    return worst <= 1e-6, f"worst deviation from CA {worst:.2e}"


CHECKS = [
    ("table-2 SMD reproduction", _check_smd),
    ("metric identities", _check_metric_identities),
    ("logistic vs Newton oracle", _check_logistic),
    ("greedy matching order", _check_matching),
    ("share envelope fields", _check_envelope),
    ("full-rank exact recovery", _check_exact_recovery),
]


def run_selftest(out=print) -> bool:
    all_ok = True
    for name, fn in CHECKS:
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # report, keep going
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        all_ok &= ok
        out(f"{'PASS' if ok else 'FAIL'}  {name:28s} {detail} ({time.perf_counter() - t0:.2f}s)")
    return all_ok
