"""Party-local dimensionality reduction functions.

Reducers live only inside a party. Nothing in this module knows how to put a
reducer on the wire; see :func:`unsafe_export_reducer` for the debug-only dump.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import linalg, sparse
from scipy.spatial import cKDTree

from .causal import fit_logistic


class ReductionError(ValueError):
    pass


def _fix_signs(M: np.ndarray) -> np.ndarray:
    """Flip columns so each column's largest-magnitude entry is positive."""
    if M.size == 0:
        return M
    idx = np.argmax(np.abs(M), axis=0)
    signs = np.sign(M[idx, np.arange(M.shape[1])])
    signs[signs == 0] = 1.0
    return M * signs


@dataclass(frozen=True, eq=False)
class LinearReducer:
    projection: np.ndarray  # m x m_out
    center: np.ndarray  # m
    method_tag: str

    @property
    def m_in(self) -> int:
        return self.projection.shape[0]

    @property
    def m_out(self) -> int:
        return self.projection.shape[1]

    def __call__(self, X: np.ndarray) -> np.ndarray:
        # fixed-order accumulation keeps every output row independent of the
        # other rows (BLAS picks different kernels for 1 vs many rows)
        Xc = X - self.center
        out = np.zeros((Xc.shape[0], self.projection.shape[1]))
        for j in range(Xc.shape[1]):
            out += Xc[:, j : j + 1] * self.projection[j]
        return out


@dataclass(frozen=True, eq=False)
class NonlinearReducer:
    W: np.ndarray  # m x m_out encoder weights
    b: np.ndarray  # m_out
    mean: np.ndarray
    scale: np.ndarray
    # decoder kept for reconstruction diagnostics only
    W_dec: np.ndarray
    b_dec: np.ndarray
    final_loss: float
    initial_loss: float
    epochs: int
    method_tag: str = "ae"

    @property
    def m_in(self) -> int:
        return self.W.shape[0]

    @property
    def m_out(self) -> int:
        return self.W.shape[1]

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return np.tanh(((X - self.mean) / self.scale) @ self.W + self.b)

    def reconstruct(self, X: np.ndarray) -> np.ndarray:
        return (self(X) @ self.W_dec + self.b_dec) * self.scale + self.mean


@dataclass(frozen=True, eq=False)
class ComposedReducer:
    dr: "Reducer | None"
    bs: LinearReducer | None
    mixer: np.ndarray
    method_tag: str = "composed"

    @property
    def m_in(self) -> int:
        return (self.dr or self.bs).m_in

    @property
    def m_out(self) -> int:
        return self.mixer.shape[0]

    def __call__(self, X: np.ndarray) -> np.ndarray:
        blocks = [r(X) for r in (self.dr, self.bs) if r is not None]
        return np.hstack(blocks) @ self.mixer


Reducer = Union[LinearReducer, NonlinearReducer, ComposedReducer]


def apply_reducer(r: Reducer, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != r.m_in:
        raise ReductionError(f"reducer expects {r.m_in} covariates, got shape {X.shape}")
    return r(X)


def _numerical_rank(s: np.ndarray, tol: float = 1e-10) -> int:
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > tol * s[0]))


def fit_pca(X: np.ndarray, m_out: int) -> LinearReducer:
    X = np.asarray(X, float)
    n, m = X.shape
    if not np.isfinite(X).all():
        raise ReductionError("X contains non-finite values")
    if m_out < 1 or m_out > min(n - 1, m):
        raise ReductionError(f"PCA dimension {m_out} must lie in [1, min(n-1, m)] = [1, {min(n - 1, m)}]")
    center = X.mean(axis=0)
    _, s, vt = np.linalg.svd(X - center, full_matrices=False)
    rank = _numerical_rank(s)
    if m_out > rank:
        raise ReductionError(f"PCA dimension {m_out} exceeds numerical rank; achievable rank is {rank}")
    return LinearReducer(_fix_signs(vt[:m_out].T.copy()), center, "pca")


def explained_variance_ratio(X: np.ndarray, r: LinearReducer) -> float:
    Xc = np.asarray(X, float) - r.center
    return float(np.sum((Xc @ r.projection) ** 2) / np.sum(Xc**2))


def lpp_matrices(X: np.ndarray, k_nn: int = 10, heat_t: float | str = "auto"):
    """Return (X^T L X, X^T D X + eps I, center) for the symmetric k-NN heat-kernel graph."""
    X = np.asarray(X, float)
    n, m = X.shape
    if not 1 <= k_nn < n:
        raise ReductionError(f"k_nn must be in [1, n-1]; got {k_nn} with n={n}")
    center = X.mean(axis=0)
    Xc = X - center
    dist, idx = cKDTree(Xc).query(Xc, k=k_nn + 1)
    # drop self (first neighbour); duplicates may reorder so filter on index
    rows = np.repeat(np.arange(n), k_nn + 1)
    cols = idx.ravel()
    d2 = dist.ravel() ** 2
    keep = rows != cols
    rows, cols, d2 = rows[keep], cols[keep], d2[keep]
    if heat_t == "auto":
        t = float(d2.mean()) if d2.size and d2.mean() > 0 else 1.0
    else:
        t = float(heat_t)
        if t <= 0:
            raise ReductionError("heat kernel width must be positive")
    W = sparse.csr_matrix((np.exp(-d2 / t), (rows, cols)), shape=(n, n))
    W = W.maximum(W.T)
    deg = np.asarray(W.sum(axis=1)).ravel()
    XDX = (Xc * deg[:, None]).T @ Xc
    XLX = XDX - Xc.T @ (W @ Xc)
    XLX = 0.5 * (XLX + XLX.T)
    eps = 1e-8 * np.trace(XDX) / m
    if eps <= 0:
        eps = 1e-8
    B = XDX + eps * np.eye(m)
    return XLX, 0.5 * (B + B.T), center


def fit_lpp(X: np.ndarray, m_out: int, k_nn: int = 10, heat_t: float | str = "auto") -> LinearReducer:
    X = np.asarray(X, float)
    m = X.shape[1]
    if not 1 <= m_out <= m:
        raise ReductionError(f"LPP dimension {m_out} must lie in [1, {m}]")
    A, B, center = lpp_matrices(X, k_nn, heat_t)
    try:
        _, vecs = linalg.eigh(A, B, subset_by_index=(0, m_out - 1))
    except (linalg.LinAlgError, ValueError) as exc:
        raise ReductionError(
            f"LPP generalized eigenproblem failed: cond(B)={np.linalg.cond(B):.3g}, cond(A)={np.linalg.cond(A):.3g}"
        ) from exc
    vecs = vecs / np.linalg.norm(vecs, axis=0)
    return LinearReducer(_fix_signs(vecs), center, "lpp")


AE_MOMENTUM = 0.9


def fit_autoencoder(
    X: np.ndarray,
    m_out: int,
    epochs: int = 500,
    lr: float = 0.01,
    seed: int = 0,
) -> NonlinearReducer:
    """One-hidden-layer autoencoder (tanh encoder, linear decoder).

    Full-batch gradient descent with heavy-ball momentum on the mean squared
    reconstruction error of the standardized data. A step is kept only when it
    lowers the loss; the step size then grows by 5%, otherwise the velocity is
    dropped, the step size halved and the step retried.
    """
    X = np.asarray(X, float)
    n, m = X.shape
    if not 1 <= m_out < m:
        raise ReductionError(f"autoencoder code size must be in [1, {m - 1}], got {m_out}")
    if not np.isfinite(X).all():
        raise ReductionError("autoencoder loss is not finite (non-finite input); clean the data or use a smaller learning rate")
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    Xs = (X - mean) / scale
    rng = np.random.default_rng(seed)
    params = (
        rng.normal(0.0, 1.0 / math.sqrt(m), size=(m, m_out)),
        np.zeros(m_out),
        rng.normal(0.0, 1.0 / math.sqrt(m_out), size=(m_out, m)),
        np.zeros(m),
    )

    def loss_and_grads(W, b, V, c):
        H = np.tanh(Xs @ W + b)
        R = H @ V + c - Xs
        loss = float(np.mean(R**2))
        dR = 2.0 * R / R.size
        gV = H.T @ dR
        gc = dR.sum(axis=0)
        dA = (dR @ V.T) * (1 - H**2)
        return loss, (Xs.T @ dA, dA.sum(axis=0), gV, gc)

    loss, grads = loss_and_grads(*params)
    initial = loss
    step = lr
    vel = tuple(np.zeros_like(p) for p in params)
    for _ in range(epochs):
        for _ in range(30):
            t_vel = tuple(AE_MOMENTUM * v - step * g for v, g in zip(vel, grads))
            trial = tuple(p + v for p, v in zip(params, t_vel))
            t_loss, t_grads = loss_and_grads(*trial)
            if np.isfinite(t_loss) and t_loss < loss:
                params, vel, loss, grads = trial, t_vel, t_loss, t_grads
                step *= 1.05
                break
            vel = tuple(np.zeros_like(p) for p in params)
            step *= 0.5
        else:
            break  # no decreasing step at any tried size: stationary for our purposes
    W, b, V, c = params
    if not np.isfinite(loss):
        raise ReductionError("autoencoder loss is not finite; use a smaller learning rate")
    return NonlinearReducer(W, b, mean, scale, V, c, loss, initial, epochs)


@dataclass(frozen=True)
class BootstrapReducerConfig:
    m_bs: int
    p: float = 0.5
    seed: int = 0
    lam: float = 1e-6
    tol: float = 1e-8
    max_iter: int = 100
    max_redraws: int = 50

    def __post_init__(self):
        if self.m_bs < 1:
            raise ReductionError("m_bs must be >= 1")
        if not 0 < self.p <= 1:
            raise ReductionError("sampling ratio p must lie in (0, 1]")


def fit_bootstrap_reducer(X: np.ndarray, z: np.ndarray, cfg: BootstrapReducerConfig) -> LinearReducer:
    """Stack propensity coefficient vectors fitted on random sub-samples.

    Each column is the (intercept-free, unit-normalized) logistic coefficient
    vector of ``z`` on ``ceil(p * n)`` rows drawn without replacement.
    """
    X = np.asarray(X, float)
    z = np.asarray(z)
    n, m = X.shape
    if z.min() == z.max():
        raise ReductionError("bootstrap reducer needs both treated and control units")
    size = math.ceil(cfg.p * n)
    if size < 2:
        raise ReductionError(f"sub-sample size ceil(p*n) = {size} is below 2")
    rng = np.random.default_rng(cfg.seed)
    cols = []
    for _ in range(cfg.m_bs):
        for _ in range(cfg.max_redraws):
            rows = rng.choice(n, size=size, replace=False) if size < n else np.arange(n)
            zs = z[rows]
            if zs.min() != zs.max():
                break
        else:
            raise ReductionError(f"{cfg.max_redraws} consecutive single-class sub-samples; raise p")
        model = fit_logistic(X[rows], zs, lam=cfg.lam, tol=cfg.tol, max_iter=cfg.max_iter)
        beta = model.coefficients
        norm = np.linalg.norm(beta)
        cols.append(beta / norm if norm > 0 else beta)
    return LinearReducer(np.column_stack(cols), X.mean(axis=0), "bootstrap")


def random_orthogonal(dim: int, seed: int) -> np.ndarray:
    """Haar-distributed orthogonal matrix from a seeded Gaussian QR."""
    if dim < 1:
        raise ReductionError("dim must be >= 1")
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    d = np.sign(np.diag(r))
    d[d == 0] = 1.0
    return q * d


def compose_reducer(dr: Reducer | None, bs: LinearReducer | None, seed: int) -> ComposedReducer:
    """Concatenate a DR reducer with a bootstrap reducer, then rotate by a random orthogonal matrix."""
    parts = [r for r in (dr, bs) if r is not None]
    if not parts:
        raise ReductionError("compose_reducer needs at least one component")
    if len(parts) == 2 and dr.m_in != bs.m_in:
        raise ReductionError(f"component input widths differ: {dr.m_in} vs {bs.m_in}")
    dim = sum(r.m_out for r in parts)
    return ComposedReducer(dr, bs, random_orthogonal(dim, seed))


def fit_reducer(
    method: str,
    X: np.ndarray,
    z: np.ndarray,
    m_dr: int,
    m_bs: int,
    seed: int,
    *,
    lpp_k: int = 10,
    lpp_t: float | str = "auto",
    ae_epochs: int = 500,
    ae_lr: float = 0.01,
    bs_p: float = 0.5,
    lam: float = 1e-6,
) -> Reducer:
    """Fit one of ``pca``, ``lpp``, ``ae``, ``bs`` or ``<dr>+bs`` on a party's data."""
    ss = np.random.SeedSequence(seed)
    s_dr, s_bs, s_mix = (int(c.generate_state(1)[0]) for c in ss.spawn(3))
    base, _, with_bs = method.partition("+")
    if with_bs and with_bs != "bs":
        raise ReductionError(f"unknown reducer method {method!r}")

    def dr_part():
        if base == "pca":
            return fit_pca(X, m_dr)
        if base == "lpp":
            return fit_lpp(X, m_dr, lpp_k, lpp_t)
        if base == "ae":
            return fit_autoencoder(X, m_dr, ae_epochs, ae_lr, s_dr)
        raise ReductionError(f"unknown reducer method {method!r}")

    def bs_part():
        return fit_bootstrap_reducer(X, z, BootstrapReducerConfig(m_bs, bs_p, s_bs, lam))

    if base == "bs" and not with_bs:
        return bs_part()
    if not with_bs:
        return dr_part()
    dr = dr_part() if m_dr > 0 else None
    bs = bs_part() if m_bs > 0 else None
    return compose_reducer(dr, bs, s_mix)


def unsafe_export_reducer(r: Reducer, *, i_know_this_leaks: bool = False) -> dict:
    """Dump reducer parameters. Debug/test use only: this defeats the privacy boundary."""
    if not i_know_this_leaks:
        raise PermissionError("reducer export is disabled; pass i_know_this_leaks=True (--unsafe-export-reducer)")
    if isinstance(r, LinearReducer):
        return {"method": r.method_tag, "projection": r.projection.tolist(), "center": r.center.tolist()}
    if isinstance(r, NonlinearReducer):
        return {
            "method": "ae",
            "W": r.W.tolist(),
            "b": r.b.tolist(),
            "mean": r.mean.tolist(),
            "scale": r.scale.tolist(),
            "final_loss": r.final_loss,
            "epochs": r.epochs,
        }
    return {
        "method": "composed",
        "dr": unsafe_export_reducer(r.dr, i_know_this_leaks=True) if r.dr is not None else None,
        "bs": unsafe_export_reducer(r.bs, i_know_this_leaks=True) if r.bs is not None else None,
        "mixer": r.mixer.tolist(),
    }
