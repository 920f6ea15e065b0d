"""Populations, party shards, synthetic cohorts and partitioning schemes."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

KINDS = ("continuous", "binary", "ordinal")
RESERVED = ("__id", "__treatment", "__outcome")


class DataError(ValueError):
    """Raised for malformed populations, schemas or partition requests."""


@dataclass(frozen=True)
class Covariate:
    name: str
    kind: str = "continuous"
    unit: str | None = None
    levels: tuple[int, ...] | None = None
    # generation parameters, only read by generate_synthetic
    params: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"covariate {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "ordinal" and not self.levels:
            raise DataError(f"ordinal covariate {self.name!r} needs declared levels")


@dataclass(frozen=True)
class CovariateSchema:
    columns: tuple[Covariate, ...]

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise DataError("covariate names must be unique")
        for name in names:
            if name in RESERVED:
                raise DataError(f"{name!r} is a reserved column name")

    def __len__(self):
        return len(self.columns)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def kinds(self) -> list[str]:
        return [c.kind for c in self.columns]

    def validate(self, X: np.ndarray) -> None:
        """Check binary and ordinal columns hold admissible values (NaN allowed)."""
        for j, col in enumerate(self.columns):
            v = X[:, j]
            v = v[~np.isnan(v)]
            if col.kind == "binary" and not np.isin(v, (0.0, 1.0)).all():
                raise DataError(f"binary covariate {col.name!r} has values outside {{0, 1}}")
            if col.kind == "ordinal" and not np.isin(v, np.asarray(col.levels, float)).all():
                raise DataError(f"ordinal covariate {col.name!r} has undeclared levels")

    def to_dict(self) -> dict:
        out = []
        for c in self.columns:
            entry = {"name": c.name, "kind": c.kind, "unit": c.unit}
            if c.levels is not None:
                entry["levels"] = list(c.levels)
            if c.params:
                entry["params"] = c.params
            out.append(entry)
        return {"columns": out}

    @classmethod
    def from_dict(cls, d: dict) -> "CovariateSchema":
        cols = []
        for e in d["columns"]:
            levels = e.get("levels")
            cols.append(
                Covariate(
                    name=e["name"],
                    kind=e.get("kind", "continuous"),
                    unit=e.get("unit"),
                    levels=tuple(int(v) for v in levels) if levels is not None else None,
                    params=dict(e.get("params") or {}),
                )
            )
        return cls(tuple(cols))


@dataclass(frozen=True, eq=False)
class Population:
    X: np.ndarray
    z: np.ndarray
    y: np.ndarray
    ids: np.ndarray
    schema: CovariateSchema

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2:
            raise DataError("X must be a 2-D matrix")
        n = X.shape[0]
        z = np.asarray(self.z)
        y = np.asarray(self.y, dtype=float)
        ids = np.asarray(self.ids, dtype=np.int64)
        if not (len(z) == len(y) == len(ids) == n):
            raise DataError(f"length mismatch: X={n}, z={len(z)}, y={len(y)}, ids={len(ids)}")
        if X.shape[1] != len(self.schema):
            raise DataError(f"X has {X.shape[1]} columns, schema declares {len(self.schema)}")
        if len(np.unique(ids)) != n:
            raise DataError("ids must be unique")
        if not np.isin(z, (0, 1)).all():
            raise DataError("treatment must be binary")
        if not np.isfinite(X).all():
            raise DataError("X contains non-finite values; impute first")
        for name, arr in (("X", X), ("z", z), ("y", y), ("ids", ids)):
            arr = np.array(arr, dtype=np.int8 if name == "z" else arr.dtype)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.X.shape[1]

    def take(self, rows: np.ndarray) -> "Population":
        rows = np.asarray(rows, dtype=np.int64)
        return Population(self.X[rows], self.z[rows], self.y[rows], self.ids[rows], self.schema)

    def sorted_by_id(self) -> "Population":
        return self.take(np.argsort(self.ids, kind="stable"))

    def equals(self, other: "Population") -> bool:
        return (
            self.schema == other.schema
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.z, other.z)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.ids, other.ids)
        )


@dataclass(frozen=True, eq=False)
class PartyDataset:
    party_id: int
    population: Population


def concat(populations: Sequence[Population]) -> Population:
    if not populations:
        raise DataError("nothing to concatenate")
    schema = populations[0].schema
    return Population(
        np.vstack([p.X for p in populations]),
        np.concatenate([p.z for p in populations]),
        np.concatenate([p.y for p in populations]),
        np.concatenate([p.ids for p in populations]),
        schema,
    )


# ---------------------------------------------------------------------------
# clinical features


def egfr(age: float, scr: float, sex: str) -> float:
    """Estimated GFR in mL/min/1.73m^2 from age (years) and serum creatinine (mg/dl)."""
    if age <= 0 or scr <= 0:
        raise DataError(f"egfr needs positive age and creatinine, got age={age}, scr={scr}")
    if sex == "male":
        factor = 1.0
    elif sex == "female":
        factor = 0.739
    else:
        raise DataError(f"sex must be 'male' or 'female', got {sex!r}")
    return 194.0 * scr**-1.094 * age**-0.287 * factor


def ckd_stage(egfr_value: float) -> int:
    # boundaries are left-closed going down: 90 -> stage 1, 60 -> 2, ...
    if egfr_value < 0 or math.isnan(egfr_value):
        raise DataError(f"eGFR must be non-negative, got {egfr_value}")
    for stage, lower in enumerate((90.0, 60.0, 30.0, 15.0), start=1):
        if egfr_value >= lower:
            return stage
    return 5


def impute_median(X: np.ndarray, names: Sequence[str] | None = None) -> np.ndarray:
    """Replace NaN cells by the median of the observed values in their column."""
    X = np.array(X, dtype=float)
    missing = np.isnan(X)
    if not missing.any():
        return X
    for j in np.flatnonzero(missing.any(axis=0)):
        observed = X[~missing[:, j], j]
        if observed.size == 0:
            label = names[j] if names is not None else j
            raise DataError(f"column {label!r} has no observed values to impute from")
        X[missing[:, j], j] = np.median(observed)
    return X


# ---------------------------------------------------------------------------
# synthetic populations


@dataclass(frozen=True)
class SyntheticConfig:
    n: int
    schema: CovariateSchema
    treatment_coefficients: tuple[float, ...]
    true_att: float
    outcome_coefficients: tuple[float, ...]
    noise_sd: float = 1.0
    seed: int = 0

    def __post_init__(self):
        m = len(self.schema)
        if self.n < 2:
            raise DataError("n must be at least 2")
        if len(self.treatment_coefficients) != m + 1:
            raise DataError(f"treatment_coefficients needs {m + 1} entries (intercept first)")
        if len(self.outcome_coefficients) != m:
            raise DataError(f"outcome_coefficients needs {m} entries")
        if self.noise_sd < 0:
            raise DataError("noise_sd must be >= 0")

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "schema": self.schema.to_dict(),
            "treatment_coefficients": list(self.treatment_coefficients),
            "true_att": self.true_att,
            "outcome_coefficients": list(self.outcome_coefficients),
            "noise_sd": self.noise_sd,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticConfig":
        if d.get("preset"):
            kwargs = {k: v for k, v in d.items() if k != "preset"}
            return PRESETS[d["preset"]](**kwargs)
        return cls(
            n=int(d["n"]),
            schema=CovariateSchema.from_dict(d["schema"]),
            treatment_coefficients=tuple(float(v) for v in d["treatment_coefficients"]),
            true_att=float(d["true_att"]),
            outcome_coefficients=tuple(float(v) for v in d["outcome_coefficients"]),
            noise_sd=float(d.get("noise_sd", 1.0)),
            seed=int(d.get("seed", 0)),
        )


def _draw_covariates(schema: CovariateSchema, n: int, rng: np.random.Generator) -> np.ndarray:
    X = np.empty((n, len(schema)))
    for j, col in enumerate(schema.columns):
        p = col.params
        if col.kind == "binary":
            X[:, j] = rng.random(n) < p.get("p", 0.5)
        elif col.kind == "ordinal":
            levels = np.asarray(col.levels, dtype=float)
            probs = p.get("probs")
            if probs is not None:
                probs = np.asarray(probs, float) / np.sum(probs)
            X[:, j] = rng.choice(levels, size=n, p=probs)
        elif "low" in p and "high" in p and "mean" not in p:
            X[:, j] = rng.uniform(p["low"], p["high"], size=n)
        else:
            v = p.get("mean", 0.0) + p.get("sd", 1.0) * rng.standard_normal(n)
            X[:, j] = np.clip(v, p.get("low", -np.inf), p.get("high", np.inf))
    return X


def generate_synthetic(cfg: SyntheticConfig) -> Population:
    """Draw a population with logistic treatment assignment and a constant effect.

    Covariates follow the per-column ``params`` of the schema. The outcome is
    linear in the covariates plus ``true_att`` for treated units, so the true
    ATT of the generated cohort is known exactly.
    """
    rng = np.random.default_rng(cfg.seed)
    X = _draw_covariates(cfg.schema, cfg.n, rng)
    beta = np.asarray(cfg.treatment_coefficients, dtype=float)
    prob = 1.0 / (1.0 + np.exp(-(beta[0] + X @ beta[1:])))
    z = (rng.random(cfg.n) < prob).astype(np.int8)
    if z.all() or not z.any():
        raise DataError("degenerate treatment assignment: all units in one arm")
    y = outcome_mean(cfg, X, z) + cfg.noise_sd * rng.standard_normal(cfg.n)
    return Population(X, z, y, np.arange(cfg.n), cfg.schema)


def outcome_mean(cfg: SyntheticConfig, X: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Noise-free outcome for given covariates and treatment."""
    return X @ np.asarray(cfg.outcome_coefficients, float) + cfg.true_att * np.asarray(z, float)


# Clinical-cohort roster: (name, kind, unit, params, standardized treatment
# log-odds, standardized outcome effect)
_TABLE1_ROSTER = [
    ("diuretic", "binary", None, {"p": 0.03}, 1.2, 0.4),
    ("beta_blocker", "binary", None, {"p": 0.06}, 1.0, 0.2),
    ("ras_inhibitor", "binary", None, {"p": 0.08}, 1.0, 0.2),
    ("antipurine", "binary", None, {"p": 0.01}, 0.4, 0.1),
    ("alkalizer", "binary", None, {"p": 0.05}, 0.6, -0.2),
    ("nsaid", "binary", None, {"p": 0.05}, 0.5, 0.1),
    ("aspirin", "binary", None, {"p": 0.02}, 0.4, 0.1),
    ("corticosteroid", "binary", None, {"p": 0.08}, 0.6, 0.2),
    ("colchicine", "binary", None, {"p": 0.01}, 0.3, 0.0),
]
_TABLE1_CONTINUOUS = [
    ("hdl_cholesterol", "mg/dl", 52.55, 17.20, 10.0, 150.0, -0.2, -0.1),
    ("hba1c", "%", 6.16, 1.38, 4.0, 14.0, 0.0, 0.1),
    ("egfr", "mL/min/1.73m2", 86.61, 49.99, 5.0, 250.0, -0.5, -0.4),
    ("albumin", "g/dl", 3.83, 0.69, 1.5, 5.5, -0.1, 0.0),
    ("creatinine", "mg/dl", 1.01, 1.41, 0.3, 8.0, 0.2, 0.2),
    ("triglycerides", "mg/dl", 134.82, 116.51, 20.0, 800.0, 0.2, 0.2),
    ("serum_uric_acid", "mg/dl", 5.09, 1.77, 1.0, 12.0, 0.6, 0.9),
    ("age", "years", 58.09, 17.47, 20.0, 100.0, 0.3, 0.1),
    ("hemoglobin", "g/dl", 12.59, 2.26, 6.0, 18.0, 0.0, 0.0),
    ("urine_ph", None, 6.50, 0.79, 5.0, 8.5, -0.1, 0.0),
    ("urine_occult_blood", None, 0.44, 1.06, 0.0, 4.0, 0.0, 0.0),
    ("blood_urea_nitrogen", "mg/dl", 16.0, 8.0, 4.0, 60.0, 0.2, 0.1),
]
_CKD_PROBS = (0.40, 0.25, 0.27, 0.04, 0.04)


def table1_schema() -> CovariateSchema:
    """9 binary medication flags, CKD stage (1-5) and 12 continuous labs."""
    cols = [Covariate(name, kind, unit, params=params) for name, kind, unit, params, _, _ in _TABLE1_ROSTER]
    cols.append(Covariate("ckd_stage", "ordinal", None, levels=(1, 2, 3, 4, 5), params={"probs": list(_CKD_PROBS)}))
    for name, unit, mean, sd, lo, hi, _, _ in _TABLE1_CONTINUOUS:
        cols.append(Covariate(name, "continuous", unit, params={"mean": mean, "sd": sd, "low": lo, "high": hi}))
    return CovariateSchema(tuple(cols))


def table1_config(
    n: int = 12000,
    true_att: float = -2.0,
    noise_sd: float = 1.0,
    seed: int = 0,
    intercept: float = -2.2,
    confounding: float = 1.0,
) -> SyntheticConfig:
    """Confounded clinical-like cohort (about 20% treated at the defaults).

    Coefficients are specified per standard deviation of each covariate and
    converted to raw units; ``confounding`` scales the treatment log-odds.
    """
    schema = table1_schema()
    t_std, o_std, sds, means = [], [], [], []
    for _, _, _, params, t, o in _TABLE1_ROSTER:
        p = params["p"]
        t_std.append(t)  # binary flags: effect per unit change
        o_std.append(o)
        sds.append(1.0)
        means.append(p)
    levels = np.arange(1, 6)
    probs = np.asarray(_CKD_PROBS) / sum(_CKD_PROBS)
    ckd_mean = float(levels @ probs)
    ckd_sd = float(np.sqrt(((levels - ckd_mean) ** 2) @ probs))
    t_std.append(0.4)
    o_std.append(0.2)
    sds.append(ckd_sd)
    means.append(ckd_mean)
    for _, _, mean, sd, _, _, t, o in _TABLE1_CONTINUOUS:
        t_std.append(t)
        o_std.append(o)
        sds.append(sd)
        means.append(mean)
    sds = np.asarray(sds)
    means = np.asarray(means)
    t_raw = confounding * np.asarray(t_std) / sds
    # centre continuous and ordinal terms so the intercept sets the base rate
    centred = np.asarray([c.kind != "binary" for c in schema.columns])
    icpt = intercept - float(np.sum(t_raw[centred] * means[centred]))
    o_raw = np.asarray(o_std) / sds
    return SyntheticConfig(
        n=n,
        schema=schema,
        treatment_coefficients=(icpt, *t_raw.tolist()),
        true_att=true_att,
        outcome_coefficients=tuple(o_raw.tolist()),
        noise_sd=noise_sd,
        seed=seed,
    )


def gaussian_config(
    n: int = 2000,
    m: int = 10,
    true_att: float = 1.0,
    noise_sd: float = 1.0,
    seed: int = 0,
    treatment_scale: float = 0.5,
    outcome_scale: float = 0.5,
) -> SyntheticConfig:
    """Independent standard-normal covariates with alternating-sign coefficients."""
    schema = CovariateSchema(
        tuple(Covariate(f"x{j}", "continuous", None, params={"mean": 0.0, "sd": 1.0}) for j in range(m))
    )
    signs = np.where(np.arange(m) % 2 == 0, 1.0, -1.0)
    decay = 1.0 / np.sqrt(1.0 + np.arange(m))
    return SyntheticConfig(
        n=n,
        schema=schema,
        treatment_coefficients=(-0.5, *(treatment_scale * signs * decay).tolist()),
        true_att=true_att,
        outcome_coefficients=tuple((outcome_scale * decay).tolist()),
        noise_sd=noise_sd,
        seed=seed,
    )


PRESETS = {"table1": table1_config, "gaussian": gaussian_config}


# ---------------------------------------------------------------------------
# partitioning


@dataclass(frozen=True)
class PartitionSpec:
    scheme: str
    parts: int | None = None
    fractions: tuple[float, ...] | None = None
    k: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.scheme == "iid":
            if self.parts is None or self.parts < 2:
                raise DataError("iid partitioning needs parts >= 2")
        elif self.scheme in ("quantity", "label_ratio"):
            f = self.fractions
            if not f or any(v <= 0 for v in f):
                raise DataError(f"{self.scheme} partitioning needs positive fractions")
            if self.scheme == "quantity" and abs(sum(f) - 1.0) > 1e-9:
                raise DataError("quantity fractions must sum to 1")
        elif self.scheme == "cluster":
            if self.k is None or self.k < 2:
                raise DataError("cluster partitioning needs k >= 2")
        else:
            raise DataError(f"unknown partition scheme {self.scheme!r}")

    @property
    def n_parties(self) -> int:
        if self.scheme == "iid":
            return self.parts
        if self.scheme == "cluster":
            return self.k
        return len(self.fractions)

    @property
    def is_iid(self) -> bool:
        return self.scheme == "iid"

    def with_seed(self, seed: int) -> "PartitionSpec":
        return PartitionSpec(self.scheme, self.parts, self.fractions, self.k, seed)

    def to_dict(self) -> dict:
        d = {"scheme": self.scheme, "seed": self.seed}
        if self.parts is not None:
            d["parts"] = self.parts
        if self.fractions is not None:
            d["fractions"] = list(self.fractions)
        if self.k is not None:
            d["k"] = self.k
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PartitionSpec":
        fr = d.get("fractions", d.get("treated_fractions"))
        return cls(
            scheme=d["scheme"],
            parts=d.get("parts"),
            fractions=tuple(float(v) for v in fr) if fr is not None else None,
            k=d.get("k"),
            seed=int(d.get("seed", 0)),
        )


def _shards(pop: Population, groups: list[np.ndarray]) -> list[PartyDataset]:
    return [PartyDataset(k, pop.take(np.sort(rows))) for k, rows in enumerate(groups)]


def partition(pop: Population, spec: PartitionSpec) -> list[PartyDataset]:
    """Split ``pop`` into disjoint party shards.

    Under ``label_ratio`` each shard receives exactly ``round(f * n)`` treated
    units; treated units beyond the requested total are left out of every
    shard (see ``unassigned_ids``), all controls are distributed.
    """
    rng = np.random.default_rng(spec.seed)
    n = pop.n
    if spec.scheme == "iid":
        return _shards(pop, np.array_split(rng.permutation(n), spec.parts))

    if spec.scheme == "quantity":
        f = np.asarray(spec.fractions)
        sizes = np.rint(f * n).astype(int)
        largest = int(np.argmax(f))  # first index wins ties
        sizes[largest] += n - sizes.sum()
        if (sizes < 0).any():
            raise DataError(f"quantity fractions infeasible for n={n}")
        bounds = np.cumsum(sizes)[:-1]
        return _shards(pop, np.split(rng.permutation(n), bounds))

    if spec.scheme == "label_ratio":
        treated = np.flatnonzero(pop.z == 1)
        control = np.flatnonzero(pop.z == 0)
        want = np.rint(np.asarray(spec.fractions) * n).astype(int)
        if want.sum() > treated.size:
            raise DataError(f"label_ratio needs {want.sum()} treated units, only {treated.size} available")
        c = len(want)
        total = int(want.sum()) + control.size
        sizes = np.array([len(a) for a in np.array_split(np.arange(total), c)])
        n_ctrl = sizes - want
        if (n_ctrl < 0).any():
            raise DataError("label_ratio treated counts exceed equal shard size")
        treated = rng.permutation(treated)
        control = rng.permutation(control)
        groups, t0, c0 = [], 0, 0
        for k in range(c):
            groups.append(np.concatenate([treated[t0 : t0 + want[k]], control[c0 : c0 + n_ctrl[k]]]))
            t0 += want[k]
            c0 += n_ctrl[k]
        return _shards(pop, groups)

    # cluster
    if n < spec.k:
        raise DataError(f"cannot form {spec.k} clusters from {n} samples")
    proj = project_2d(pop.X)
    labels = kmeans(proj, spec.k, seed=spec.seed)
    # order parties by cluster size (largest first) so party numbering is stable
    sizes = np.bincount(labels, minlength=spec.k)
    order = sorted(range(spec.k), key=lambda c: (-sizes[c], c))
    return _shards(pop, [np.flatnonzero(labels == c) for c in order])


def unassigned_ids(pop: Population, shards: Sequence[PartyDataset]) -> np.ndarray:
    used = np.concatenate([s.population.ids for s in shards])
    return np.setdiff1d(pop.ids, used)


def project_2d(X: np.ndarray) -> np.ndarray:
    """Standardize columns and project onto the two leading principal axes."""
    X = np.asarray(X, float)
    sd = X.std(axis=0)
    Xs = (X - X.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
    _, _, vt = np.linalg.svd(Xs, full_matrices=False)
    return Xs @ vt[:2].T


class KMeansError(RuntimeError):
    pass


def _kmeanspp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = [X[rng.integers(n)]]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=d2 / total)
        centers.append(X[idx])
        d2 = np.minimum(d2, np.sum((X - X[idx]) ** 2, axis=1))
    return np.array(centers)


def _lloyd(X, centers, max_iter, tol):
    for it in range(1, max_iter + 1):
        d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = d2.argmin(axis=1)
        new = centers.copy()
        for c in range(len(centers)):
            members = labels == c
            if members.any():
                new[c] = X[members].mean(axis=0)
            else:
                # re-seed an empty cluster at the worst-fitted point
                far = int(d2[np.arange(len(X)), labels].argmax())
                new[c] = X[far]
        shift = np.max(np.abs(new - centers))
        centers = new
        if shift <= tol:
            d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
            labels = d2.argmin(axis=1)
            return labels, centers, float(d2[np.arange(len(X)), labels].sum()), it, True
    return labels, centers, float(d2[np.arange(len(X)), labels].sum()), max_iter, False


def kmeans(
    X: np.ndarray,
    k: int,
    seed: int = 0,
    restarts: int = 10,
    max_iter: int = 100,
    tol: float = 1e-8,
) -> np.ndarray:
    """Lloyd's algorithm from k-means++ seeds; best restart by within-cluster SS."""
    X = np.asarray(X, float)
    if k > X.shape[0]:
        raise KMeansError(f"k={k} exceeds the number of rows ({X.shape[0]})")
    if k == 1:
        return np.zeros(X.shape[0], dtype=int)
    rng = np.random.default_rng(seed)
    best = None
    diagnostics = []
    for _ in range(restarts):
        labels, _, wss, iters, ok = _lloyd(X, _kmeanspp(X, k, rng), max_iter, tol)
        diagnostics.append((wss, iters, ok))
        if ok and len(np.unique(labels)) == k and (best is None or wss < best[0]):
            best = (wss, labels)
    if best is None:
        raise KMeansError(f"k-means did not converge in {max_iter} iterations; (wss, iters, converged) per restart: {diagnostics}")
    return best[1]


# ---------------------------------------------------------------------------
# CSV ingestion


def load_schema(path: str | Path) -> CovariateSchema:
    with open(path, encoding="utf-8") as fh:
        return CovariateSchema.from_dict(json.load(fh))


def save_schema(schema: CovariateSchema, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(schema.to_dict(), fh, indent=2)


def _infer_schema(names: list[str], X: np.ndarray) -> CovariateSchema:
    cols = []
    for j, name in enumerate(names):
        v = X[:, j][~np.isnan(X[:, j])]
        kind = "binary" if v.size and np.isin(v, (0.0, 1.0)).all() else "continuous"
        cols.append(Covariate(name, kind))
    return CovariateSchema(tuple(cols))


def read_csv(path: str | Path, schema: CovariateSchema | str | Path | None = None) -> Population:
    """Load a population; empty covariate fields are median-imputed."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    for col in ("__treatment", "__outcome"):
        if col not in header:
            raise DataError(f"{path}: missing reserved column {col!r}")
    cov_names = [h for h in header if h not in RESERVED]
    pos = {h: i for i, h in enumerate(header)}

    def num(s: str) -> float:
        return float(s) if s.strip() else math.nan

    try:
        X = np.array([[num(r[pos[c]]) for c in cov_names] for r in body], dtype=float).reshape(len(body), len(cov_names))
        z = np.array([num(r[pos["__treatment"]]) for r in body])
        y = np.array([num(r[pos["__outcome"]]) for r in body])
        ids = np.array([int(r[pos["__id"]]) for r in body]) if "__id" in pos else np.arange(len(body))
    except (ValueError, IndexError) as exc:
        raise DataError(f"{path}: {exc}") from exc
    if np.isnan(z).any() or np.isnan(y).any():
        raise DataError(f"{path}: treatment and outcome may not be missing")

    if schema is None:
        schema = _infer_schema(cov_names, X)
    elif not isinstance(schema, CovariateSchema):
        schema = load_schema(schema)
    by_name = {c.name: c for c in schema.columns}
    if set(by_name) != set(cov_names):
        raise DataError(f"{path}: header covariates do not match the schema")
    schema = CovariateSchema(tuple(by_name[c] for c in cov_names))
    schema.validate(X)
    X = impute_median(X, cov_names)
    return Population(X, z.astype(np.int8), y, ids, schema)


def write_csv(pop: Population, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["__id", *pop.schema.names, "__treatment", "__outcome"])
        for i in range(pop.n):
            w.writerow([int(pop.ids[i]), *(repr(float(v)) for v in pop.X[i]), int(pop.z[i]), repr(float(pop.y[i]))])
