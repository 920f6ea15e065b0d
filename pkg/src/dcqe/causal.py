"""Propensity scores, greedy caliper matching and the matched-pair ATT."""

from __future__ import annotations

import bisect
import warnings
from dataclasses import dataclass

import numpy as np

CLAMP = 1e-12


class CausalError(ValueError):
    pass


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class LogisticModel:
    coefficients: np.ndarray
    intercept: float
    lam: float
    converged: bool
    iterations: int
    grad_norm: float
    feature_mean: np.ndarray
    feature_scale: np.ndarray

    def linear_predictor(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, float)
        if X.ndim != 2 or X.shape[1] != self.coefficients.size:
            raise CausalError(f"expected {self.coefficients.size} features, got shape {X.shape}")
        return self.intercept + X @ self.coefficients


def _sigmoid(t):
    return 0.5 * (1.0 + np.tanh(0.5 * t))


def _penalized_loglik(Xs, z, theta, pen):
    eta = theta[0] + Xs @ theta[1:]
    # log(1 + e^eta) computed stably
    return float(np.sum(z * eta - np.logaddexp(0.0, eta)) - 0.5 * np.sum(pen * theta[1:] ** 2))


def fit_logistic(
    X: np.ndarray,
    z: np.ndarray,
    lam: float = 1e-6,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> LogisticModel:
    """Ridge logistic regression by damped IRLS.

    Maximizes ``loglik - lam/2 * ||coefficients||^2`` with the intercept left
    unpenalized. Newton steps run on standardized features; the penalty and the
    convergence test (gradient norm <= ``tol``) use the original scale.
    """
    X = np.asarray(X, float)
    z = np.asarray(z, float)
    if X.ndim != 2 or X.shape[0] != z.size:
        raise CausalError("X and z disagree in length")
    if lam < 0:
        raise CausalError("lam must be >= 0")
    if z.min() == z.max():
        raise CausalError("logistic regression needs both treated and control units")
    if not np.isfinite(X).all():
        raise CausalError("X contains non-finite values")
    n, m = X.shape
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    Xs = (X - mu) / sd
    A = np.hstack([np.ones((n, 1)), Xs])
    # original-scale penalty lam*b^2 with b = b_std / sd
    pen = lam / sd**2
    pen_full = np.concatenate([[0.0], pen])

    def original(theta):
        coef = theta[1:] / sd
        return coef, theta[0] - float(mu @ coef)

    def grad_original(theta):
        coef, icpt = original(theta)
        resid = z - _sigmoid(icpt + X @ coef)
        g = np.empty(m + 1)
        g[0] = resid.sum()
        g[1:] = X.T @ resid - lam * coef
        return g

    theta = np.zeros(m + 1)
    p0 = z.mean()
    theta[0] = np.log(p0 / (1 - p0))
    obj = _penalized_loglik(Xs, z, theta, pen)
    converged = False
    it = 0
    gnorm = float(np.linalg.norm(grad_original(theta)))
    while it < max_iter:
        if gnorm <= tol:
            converged = True
            break
        it += 1
        p = _sigmoid(A @ theta)
        w = p * (1 - p)
        g = A.T @ (z - p) - pen_full * theta
        H = (A * w[:, None]).T @ A + np.diag(pen_full)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, g, rcond=None)[0]
        t = 1.0
        for _ in range(60):
            cand = theta + t * step
            new_obj = _penalized_loglik(Xs, z, cand, pen)
            if new_obj >= obj - 1e-12 * abs(obj):
                break
            t *= 0.5
        theta, obj = cand, new_obj
        gnorm = float(np.linalg.norm(grad_original(theta)))
        if not np.all(np.isfinite(theta)):
            raise CausalError("logistic fit diverged")
    if not converged and gnorm <= tol:
        converged = True
    if not converged:
        warnings.warn(
            f"logistic fit stopped after {max_iter} iterations (gradient norm {gnorm:.3g} > {tol:g})",
            ConvergenceWarning,
            stacklevel=2,
        )
    coef, icpt = original(theta)
    return LogisticModel(coef, float(icpt), lam, converged, it, gnorm, mu, sd)


@dataclass(frozen=True)
class PropensityScores:
    ids: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64)
        scores = np.asarray(self.scores, dtype=float)
        if ids.shape != scores.shape:
            raise CausalError("ids and scores must align")
        if len(np.unique(ids)) != ids.size:
            raise CausalError("propensity ids must be unique")
        if not ((scores > 0) & (scores < 1)).all():
            raise CausalError("propensity scores must lie strictly inside (0, 1)")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "scores", scores)

    def as_dict(self) -> dict[int, float]:
        return dict(zip(self.ids.tolist(), self.scores.tolist()))

    def logit(self) -> np.ndarray:
        return np.log(self.scores) - np.log1p(-self.scores)


def predict_propensity(model: LogisticModel, X: np.ndarray, ids) -> PropensityScores:
    p = _sigmoid(model.linear_predictor(X))
    return PropensityScores(ids, np.clip(p, CLAMP, 1 - CLAMP))


@dataclass(frozen=True)
class MatchResult:
    pairs: tuple[tuple[int, int], ...]
    caliper_width: float
    unmatched_treated: int
    order_rule: str = "treated by descending score (ties: ascending id); nearest unused control on logit scale (ties: ascending id)"

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)

    @property
    def treated_ids(self) -> np.ndarray:
        return np.array([t for t, _ in self.pairs], dtype=np.int64)

    @property
    def control_ids(self) -> np.ndarray:
        return np.array([c for _, c in self.pairs], dtype=np.int64)


def _find(parent, i):
    root = i
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        parent[i], i = root, parent[i]
    return root


class _Alive:
    """Nearest surviving index to the left/right of a position, with deletions."""

    def __init__(self, n):
        self.n = n
        self._right = list(range(n + 1))  # n is the sentinel
        self._left = list(range(n + 1))  # shifted by one; 0 is the sentinel

    def find_right(self, i):
        root = _find(self._right, i)
        return root if root < self.n else None

    def find_left(self, i):
        root = _find(self._left, i + 1)
        return root - 1 if root > 0 else None

    def remove(self, i):
        self._right[i] = i + 1
        self._left[i + 1] = i


def caliper_match(scores: PropensityScores, z, caliper_multiplier: float = 0.2) -> MatchResult:
    """Greedy 1:1 nearest-neighbour matching without replacement on the logit scale.

    ``z`` maps id -> treatment (a dict) or is an array aligned with
    ``scores.ids``. The caliper is ``caliper_multiplier`` times the standard
    deviation of the logit scores over all samples.
    """
    if isinstance(z, dict):
        z = np.array([z[int(i)] for i in scores.ids])
    z = np.asarray(z)
    if z.shape != scores.ids.shape:
        raise CausalError("treatment vector does not align with the scores")
    lg = scores.logit()
    treated = np.flatnonzero(z == 1)
    control = np.flatnonzero(z == 0)
    if treated.size == 0 or control.size == 0:
        raise CausalError("matching needs at least one treated and one control unit")
    sd = float(np.std(lg))
    if not sd > 0:
        raise CausalError("logit propensity scores have zero variance; scores are degenerate")
    width = caliper_multiplier * sd
    ids = scores.ids

    # controls grouped by exact logit value; each group keeps its ids ascending
    c_order = np.lexsort((ids[control], lg[control]))
    c_vals = lg[control][c_order]
    c_ids = ids[control][c_order]
    vals, starts = np.unique(c_vals, return_index=True)
    ends = np.append(starts[1:], c_vals.size)
    cursor = starts.copy()  # next unused id inside each group
    vals_list = vals.tolist()
    alive = _Alive(len(vals))

    t_order = np.lexsort((ids[treated], -scores.scores[treated]))
    pairs = []
    unmatched = 0
    for t in treated[t_order]:
        x = lg[t]
        pos = bisect.bisect_left(vals_list, x)
        r = alive.find_right(pos) if pos < len(vals_list) else None
        lft = alive.find_left(pos - 1) if pos > 0 else None
        best = None
        for g in (lft, r):
            if g is None:
                continue
            d = abs(x - vals[g])
            cid = c_ids[cursor[g]]
            if best is None or d < best[0] or (d == best[0] and cid < best[2]):
                best = (d, g, cid)
        if best is None or best[0] > width:
            unmatched += 1
            continue
        _, g, cid = best
        pairs.append((int(ids[t]), int(cid)))
        cursor[g] += 1
        if cursor[g] == ends[g]:
            alive.remove(g)
    return MatchResult(tuple(pairs), width, unmatched)


@dataclass(frozen=True)
class EffectEstimate:
    att: float
    n_pairs: int
    arm_tag: str


def estimate_att(match: MatchResult, y, ids=None, arm_tag: str = "CA") -> EffectEstimate:
    """Mean treated-minus-control outcome over matched pairs.

    ``y`` is a dict id -> outcome, or an array aligned with ``ids``.
    """
    if match.n_pairs == 0:
        raise CausalError("no matches within caliper")
    if not isinstance(y, dict):
        y = dict(zip(np.asarray(ids).tolist(), np.asarray(y, float).tolist()))
    diffs = [y[t] - y[c] for t, c in match.pairs]
    return EffectEstimate(float(np.mean(diffs)), match.n_pairs, arm_tag)
