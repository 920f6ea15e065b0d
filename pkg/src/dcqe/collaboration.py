"""Anchor data, intermediate shares and the collaborative representation."""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

from .reduction import Reducer, apply_reducer
from .tabular import PartyDataset

FORMAT_VERSION = 1
ENVELOPE_FIELDS = ("format_version", "party_id", "m_k", "r", "X_tilde", "X_anc_tilde", "z", "y", "ids")


class CollaborationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class AnchorData:
    X_anc: np.ndarray
    bounds: tuple[tuple[float, float], ...]
    seed: int

    @property
    def r(self) -> int:
        return self.X_anc.shape[0]


def generate_anchor(bounds: Sequence[tuple[float, float]], r: int, seed: int) -> AnchorData:
    """Uniform samples inside per-covariate [min, max] boxes, every kind treated as continuous."""
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)
    if (lo > hi).any():
        bad = int(np.flatnonzero(lo > hi)[0])
        raise CollaborationError(f"inverted bounds for covariate {bad}: min {lo[bad]} > max {hi[bad]}")
    if r < 1:
        raise CollaborationError("anchor needs r >= 1 rows")
    rng = np.random.default_rng(seed)
    X = lo + (hi - lo) * rng.random((r, lo.size))
    return AnchorData(X, tuple(zip(lo.tolist(), hi.tolist())), seed)


def pooled_bounds(parties: Sequence[PartyDataset]) -> list[tuple[float, float]]:
    """Combine the per-party (min, max) summaries each party would disclose."""
    mins = np.min([p.population.X.min(axis=0) for p in parties], axis=0)
    maxs = np.max([p.population.X.max(axis=0) for p in parties], axis=0)
    return list(zip(mins.tolist(), maxs.tolist()))


@dataclass(frozen=True, eq=False, slots=True)
class IntermediateShare:
    """What a party hands to the analyst. Holds reduced data only."""

    party_id: int
    X_tilde: np.ndarray
    X_anc_tilde: np.ndarray
    z: np.ndarray
    y: np.ndarray
    ids: np.ndarray

    @property
    def m_k(self) -> int:
        return self.X_tilde.shape[1]

    @property
    def r(self) -> int:
        return self.X_anc_tilde.shape[0]

    def to_envelope(self) -> bytes:
        payload = {
            "format_version": FORMAT_VERSION,
            "party_id": int(self.party_id),
            "m_k": self.m_k,
            "r": self.r,
            "X_tilde": self.X_tilde.tolist(),
            "X_anc_tilde": self.X_anc_tilde.tolist(),
            "z": [int(v) for v in self.z],
            "y": self.y.tolist(),
            "ids": [int(v) for v in self.ids],
        }
        return json.dumps(payload, separators=(",", ":")).encode("utf-8")

    @classmethod
    def from_envelope(cls, data: bytes) -> "IntermediateShare":
        d = json.loads(data.decode("utf-8"))
        if set(d) != set(ENVELOPE_FIELDS):
            raise CollaborationError(f"unexpected envelope fields: {sorted(set(d) ^ set(ENVELOPE_FIELDS))}")
        if d["format_version"] != FORMAT_VERSION:
            raise CollaborationError(f"unsupported envelope version {d['format_version']}")
        m_k, r = int(d["m_k"]), int(d["r"])
        X = np.asarray(d["X_tilde"], float).reshape(-1, m_k)
        A = np.asarray(d["X_anc_tilde"], float).reshape(r, m_k)
        return cls(int(d["party_id"]), X, A, np.asarray(d["z"], np.int8), np.asarray(d["y"], float), np.asarray(d["ids"], np.int64))


SHARE_FIELDS = tuple(f.name for f in fields(IntermediateShare))


def make_intermediate_share(party: PartyDataset, reducer: Reducer, anchor: AnchorData) -> IntermediateShare:
    pop = party.population
    if anchor.X_anc.shape[1] != pop.m:
        raise CollaborationError(f"anchor has {anchor.X_anc.shape[1]} covariates, party has {pop.m}")
    return IntermediateShare(
        party.party_id,
        apply_reducer(reducer, pop.X),
        apply_reducer(reducer, anchor.X_anc),
        pop.z.copy(),
        pop.y.copy(),
        pop.ids.copy(),
    )


@dataclass(frozen=True, eq=False)
class CollaborationMaps:
    G: dict[int, np.ndarray]
    m_tilde: int
    anchor_residuals: dict[int, float]
    singular_values: np.ndarray
    target: np.ndarray


def _top_left_singular(A: np.ndarray, k: int):
    """Top-k left singular vectors via the Gram matrix plus one Rayleigh-Ritz pass.

    Avoids a full SVD of the tall r x (sum m_k) anchor block; the refinement
    restores orthonormality and accuracy of the leading vectors.
    """
    gram = A.T @ A
    w, V = np.linalg.eigh(0.5 * (gram + gram.T))
    w = w[::-1]
    V = V[:, ::-1]
    s_est = np.sqrt(np.clip(w, 0.0, None))
    tol = max(A.shape) * np.finfo(float).eps * (s_est[0] if s_est.size else 0.0)
    # Gram eigenvalues resolve singular values only down to ~sqrt(eps) * s_max
    tol = max(tol, np.sqrt(A.shape[1] * np.finfo(float).eps) * (s_est[0] if s_est.size else 0.0))
    rank = int(np.sum(s_est > tol))
    if k > rank:
        raise CollaborationError(f"collaborative dimension {k} exceeds numerical rank of the anchor block; achievable rank is {rank}")
    Q, _ = np.linalg.qr(A @ V[:, :k])
    Ub, s, _ = np.linalg.svd(Q.T @ A, full_matrices=False)
    U = Q @ Ub[:, :k]
    return U, s[:k]


def fit_collaboration(shares: Sequence[IntermediateShare], m_tilde: int, target: str = "unscaled") -> CollaborationMaps:
    """Map every party's anchor image onto a shared ``m_tilde``-dim target.

    The target is the top left singular subspace of the horizontally stacked
    anchor images; each G_k is the least-squares map onto it.
    """
    if not shares:
        raise CollaborationError("need at least one share")
    rs = {s.r for s in shares}
    if len(rs) != 1:
        raise CollaborationError(f"shares disagree on anchor size: {sorted(rs)}")
    if len({s.party_id for s in shares}) != len(shares):
        raise CollaborationError("duplicate party ids among shares")
    A = np.hstack([s.X_anc_tilde for s in shares])
    if m_tilde < 1:
        raise CollaborationError("collaborative dimension must be >= 1")
    U, s = _top_left_singular(A, m_tilde)
    # sign convention: largest-magnitude entry of each column positive
    idx = np.argmax(np.abs(U), axis=0)
    U = U * np.where(U[idx, np.arange(m_tilde)] < 0, -1.0, 1.0)
    if target == "scaled":
        Z = U * s
    elif target == "unscaled":
        Z = U
    else:
        raise CollaborationError(f"unknown anchor target {target!r}")
    G, res = {}, {}
    zn = np.linalg.norm(Z)
    for sh in shares:
        Gk = np.linalg.pinv(sh.X_anc_tilde, rcond=1e-12) @ Z
        G[sh.party_id] = Gk
        res[sh.party_id] = float(np.linalg.norm(sh.X_anc_tilde @ Gk - Z) / zn)
    return CollaborationMaps(G, m_tilde, res, s, Z)


@dataclass(frozen=True, eq=False)
class CollaborativeDataset:
    X_check: np.ndarray
    z: np.ndarray
    y: np.ndarray
    ids: np.ndarray
    party_of_row: np.ndarray

    def __post_init__(self):
        if len(np.unique(self.ids)) != self.ids.size:
            raise CollaborationError("ids repeat across parties")


def build_collaborative_dataset(shares: Sequence[IntermediateShare], maps: CollaborationMaps) -> CollaborativeDataset:
    blocks = []
    for sh in shares:
        if sh.party_id not in maps.G:
            raise CollaborationError(f"no collaboration map for party {sh.party_id}")
        blocks.append(sh.X_tilde @ maps.G[sh.party_id])
    return CollaborativeDataset(
        np.vstack(blocks),
        np.concatenate([s.z for s in shares]),
        np.concatenate([s.y for s in shares]),
        np.concatenate([s.ids for s in shares]),
        np.concatenate([np.full(len(s.ids), s.party_id) for s in shares]),
    )
