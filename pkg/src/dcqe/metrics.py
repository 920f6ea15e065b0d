"""Gap, propensity inconsistency, covariate balance and distribution divergence."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np


class MetricError(ValueError):
    pass


def gap(tau, tau_ca) -> float:
    """Root-mean-square difference between paired per-replicate effect estimates."""
    a = np.asarray(tau, float)
    b = np.asarray(tau_ca, float)
    if a.shape != b.shape:
        raise MetricError(f"gap needs equal lengths, got {a.size} and {b.size}")
    if a.size == 0:
        raise MetricError("gap needs at least one replicate")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def inconsistency(e: Mapping[int, float], e_ca: Mapping[int, float]) -> tuple[float, int]:
    """RMS propensity difference over the common ids; returns (value, n_common)."""
    common = sorted(set(e) & set(e_ca))
    if not common:
        raise MetricError("propensity maps share no ids")
    d = np.array([e[i] - e_ca[i] for i in common])
    return float(np.sqrt(np.mean(d**2))), len(common)


def inconsistency_arrays(ids, scores, ca_ids, ca_scores) -> tuple[float, int]:
    """Vectorized :func:`inconsistency` for sorted-or-not id arrays."""
    ids = np.asarray(ids)
    ca_ids = np.asarray(ca_ids)
    common, ia, ib = np.intersect1d(ids, ca_ids, assume_unique=True, return_indices=True)
    if common.size == 0:
        raise MetricError("propensity maps share no ids")
    d = np.asarray(scores)[ia] - np.asarray(ca_scores)[ib]
    return float(np.sqrt(np.mean(d**2))), int(common.size)


def smd_from_summary(mean_t: float, mean_c: float, var_t: float = 0.0, var_c: float = 0.0, kind: str = "continuous"):
    """Standardized mean difference from group summaries.

    For binary covariates the means are proportions and the variances are
    ignored. Returns ``None`` when the pooled spread is zero but the means
    differ.
    """
    if kind == "binary":
        denom = math.sqrt((mean_t * (1 - mean_t) + mean_c * (1 - mean_c)) / 2)
    else:
        denom = math.sqrt((var_t + var_c) / 2)
    diff = mean_t - mean_c
    if denom == 0:
        return 0.0 if diff == 0 else None
    return diff / denom


def smd(treated_values, control_values, kind: str = "continuous"):
    t = np.asarray(treated_values, float)
    c = np.asarray(control_values, float)
    if t.size == 0 or c.size == 0:
        raise MetricError("SMD needs non-empty treated and control groups")
    if kind == "binary":
        return smd_from_summary(float(t.mean()), float(c.mean()), kind="binary")
    var_t = float(t.var(ddof=1)) if t.size > 1 else 0.0
    var_c = float(c.var(ddof=1)) if c.size > 1 else 0.0
    return smd_from_summary(float(t.mean()), float(c.mean()), var_t, var_c)


@dataclass(frozen=True)
class BalanceReport:
    smd: dict[str, float | None]
    masmd: float
    undefined_covariates: tuple[str, ...]


def masmd(entries: Mapping[str, float | None] | Sequence[float | None]) -> BalanceReport:
    if not isinstance(entries, Mapping):
        entries = {str(j): v for j, v in enumerate(entries)}
    defined = {k: v for k, v in entries.items() if v is not None}
    undefined = tuple(k for k, v in entries.items() if v is None)
    if not defined:
        raise MetricError("every SMD is undefined")
    return BalanceReport(dict(entries), max(abs(v) for v in defined.values()), undefined)


def balance(X: np.ndarray, z: np.ndarray, names: Sequence[str], kinds: Sequence[str]) -> BalanceReport:
    """SMD of every covariate between treated (z == 1) and control rows."""
    X = np.asarray(X, float)
    z = np.asarray(z)
    t, c = X[z == 1], X[z == 0]
    entries = {name: smd(t[:, j], c[:, j], "binary" if kind == "binary" else "continuous") for j, (name, kind) in enumerate(zip(names, kinds))}
    return masmd(entries)


def histogram(values, bins: int, value_range: tuple[float, float], eps: float = 0.0) -> np.ndarray:
    """Equal-width histogram on ``value_range`` turned into a smoothed probability vector."""
    lo, hi = value_range
    if not lo < hi:
        raise MetricError(f"histogram range needs lo < hi, got ({lo}, {hi})")
    if bins < 1:
        raise MetricError("bins must be >= 1")
    v = np.clip(np.asarray(values, float), lo, hi)
    counts, _ = np.histogram(v, bins=bins, range=(lo, hi))
    p = counts + eps
    total = p.sum()
    if total <= 0:
        raise MetricError("histogram of an empty sample with eps = 0")
    return p / total


def jeffreys(p, q) -> float:
    """Symmetrized KL divergence KL(p||q) + KL(q||p), natural log."""
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    if p.shape != q.shape:
        raise MetricError("distributions differ in length")
    if (p <= 0).any() or (q <= 0).any():
        raise MetricError("zero-probability bin; smooth the histograms (eps > 0) first")
    if abs(p.sum() - 1) > 1e-9 or abs(q.sum() - 1) > 1e-9:
        raise MetricError("inputs must each sum to 1")
    return float(np.sum((p - q) * (np.log(p) - np.log(q))))


@dataclass(frozen=True)
class DistributionReport:
    jeffreys: dict[str, float]
    mjd: float
    bins: int
    smoothing_eps: float


def mjd(matched_X: np.ndarray, ca_matched_X: np.ndarray, names: Sequence[str] | None = None, bins: int = 20, eps: float = 1e-9) -> DistributionReport:
    """Maximum per-covariate Jeffreys divergence between two matched samples."""
    A = np.asarray(matched_X, float)
    B = np.asarray(ca_matched_X, float)
    if A.size == 0 or B.size == 0 or A.shape[0] == 0 or B.shape[0] == 0:
        raise MetricError("matched samples must be non-empty")
    if A.shape[1] != B.shape[1]:
        raise MetricError("matched samples have different covariates")
    names = list(names) if names is not None else [str(j) for j in range(A.shape[1])]
    out = {}
    for j, name in enumerate(names):
        lo = min(A[:, j].min(), B[:, j].min())
        hi = max(A[:, j].max(), B[:, j].max())
        if lo == hi:
            out[name] = 0.0  # both samples are the same constant
            continue
        out[name] = jeffreys(histogram(A[:, j], bins, (lo, hi), eps), histogram(B[:, j], bins, (lo, hi), eps))
    return DistributionReport(out, max(out.values()), bins, eps)


def mean_se(values: Sequence[float]) -> tuple[float, float | None]:
    """Mean and standard error (sample SD / sqrt(n)); SE is None for a single value."""
    v = np.asarray(values, float)
    if v.size == 0:
        raise MetricError("no values to summarize")
    if v.size == 1:
        return float(v[0]), None
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))
