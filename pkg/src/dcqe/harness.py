"""Bootstrap experiment harness comparing IA, DC-QE and CA arms."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .causal import (
    CausalError,
    ConvergenceWarning,
    EffectEstimate,
    MatchResult,
    PropensityScores,
    caliper_match,
    estimate_att,
    fit_logistic,
    predict_propensity,
)
from .collaboration import (
    AnchorData,
    CollaborationError,
    IntermediateShare,
    build_collaborative_dataset,
    fit_collaboration,
    generate_anchor,
    make_intermediate_share,
    pooled_bounds,
)
from .metrics import BalanceReport, DistributionReport, MetricError, balance, gap, inconsistency_arrays, mean_se, mjd
from .reduction import LinearReducer, Reducer, ReductionError, fit_reducer, random_orthogonal, unsafe_export_reducer
from .tabular import (
    DataError,
    PartitionSpec,
    PartyDataset,
    Population,
    SyntheticConfig,
    concat,
    generate_synthetic,
    partition,
    read_csv,
)

METHODS = ("pca", "lpp", "ae", "bs", "pca+bs", "lpp+bs", "ae+bs", "shared")
METRICS = ("att", "gap", "inconsistency", "masmd_pre", "masmd", "mjd")
ARM_ERRORS = (CausalError, CollaborationError, ReductionError, MetricError, DataError, np.linalg.LinAlgError)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ReducerSpec:
    method: str = "pca"
    dims: tuple[int, int] | None = None  # (m_dr, m_bs); None picks the method's natural split
    lpp_k: int = 10
    lpp_t: float | str = "auto"
    ae_epochs: int = 500
    ae_lr: float = 0.01
    bs_p: float = 0.5


@dataclass(frozen=True)
class LogisticSettings:
    lam: float = 1e-6
    tol: float = 1e-8
    max_iter: int = 100


@dataclass(frozen=True)
class ExperimentConfig:
    data: dict = field(default_factory=lambda: {"synthetic": {"preset": "table1", "n": 12000, "seed": 0}})
    partition: PartitionSpec = field(default_factory=lambda: PartitionSpec("iid", parts=50))
    reducer: ReducerSpec = field(default_factory=ReducerSpec)
    intermediate_dim: int | None = None  # default m - 1
    collab_dim: int | None = None  # default: intermediate_dim
    collaborator_counts: tuple[int, ...] | None = None  # default: all parties
    replicates: int = 100
    caliper: float = 0.2
    logistic: LogisticSettings = field(default_factory=LogisticSettings)
    seed: int = 0
    workers: int = 1
    free_dims: bool = False
    partition_once: bool = False
    anchor_target: str = "unscaled"
    mjd: str | bool = "auto"  # auto: only for non-IID partitions
    bins: int = 20
    unsafe_export_reducer: bool = False

    def to_dict(self) -> dict:
        d = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, PartitionSpec):
                v = v.to_dict()
            elif isinstance(v, (ReducerSpec, LogisticSettings)):
                v = asdict(v)
                if "dims" in v and v["dims"] is not None:
                    v["dims"] = list(v["dims"])
            elif isinstance(v, tuple):
                v = list(v)
            d[f.name] = v
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = dict(d)
        try:
            if "partition" in kw:
                kw["partition"] = PartitionSpec.from_dict(kw["partition"])
            if "reducer" in kw:
                r = dict(kw["reducer"])
                if r.get("dims") is not None:
                    r["dims"] = tuple(int(v) for v in r["dims"])
                kw["reducer"] = ReducerSpec(**r)
            if "logistic" in kw:
                kw["logistic"] = LogisticSettings(**kw["logistic"])
            if kw.get("collaborator_counts") is not None:
                kw["collaborator_counts"] = tuple(int(v) for v in kw["collaborator_counts"])
        except (TypeError, KeyError, DataError) as exc:
            raise ConfigError(str(exc)) from exc
        return cls(**kw)


def load_population(cfg: ExperimentConfig) -> Population:
    data = cfg.data
    if "synthetic" in data:
        try:
            syn = SyntheticConfig.from_dict(data["synthetic"])
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad synthetic config: {exc}") from exc
        return generate_synthetic(syn)
    if "csv" in data:
        return read_csv(data["csv"], data.get("schema"))
    raise ConfigError("data must name either 'synthetic' or 'csv'")


@dataclass(frozen=True)
class Plan:
    """Config resolved against the data: dimensions, parties and arm tags."""

    m: int
    m_tilde: int
    collab_dim: int
    m_dr: int
    m_bs: int
    n_parties: int
    counts: tuple[int, ...]
    compute_mjd: bool

    @property
    def arms(self) -> list[str]:
        return [f"IA_{k + 1}" for k in range(self.n_parties)] + [f"DCQE_{c}" for c in self.counts] + ["CA"]


def resolve(cfg: ExperimentConfig, m: int) -> Plan:
    rs = cfg.reducer
    if rs.method not in METHODS:
        raise ConfigError(f"unknown reducer method {rs.method!r}; choose from {METHODS}")
    mt = cfg.intermediate_dim if cfg.intermediate_dim is not None else m - 1
    if not 1 <= mt <= m:
        raise ConfigError(f"intermediate dimension {mt} must be in [1, {m}]")
    collab = cfg.collab_dim if cfg.collab_dim is not None else mt
    base, _, bs = rs.method.partition("+")
    if rs.dims is not None:
        m_dr, m_bs = rs.dims
    elif rs.method == "bs":
        m_dr, m_bs = 0, mt
    elif bs:
        m_dr, m_bs = math.ceil(mt / 2), mt // 2
    else:
        m_dr, m_bs = mt, 0
    if m_dr + m_bs != mt:
        raise ConfigError(f"dims ({m_dr}, {m_bs}) must sum to the intermediate dimension {mt}")
    allowed = {(mt, 0), (math.ceil(mt / 2), mt // 2), (0, mt)}
    if not cfg.free_dims and (m_dr, m_bs) not in allowed:
        raise ConfigError(f"dims ({m_dr}, {m_bs}) not among {sorted(allowed)}; pass --free-dims to allow")
    if not bs and rs.method != "bs" and m_bs != 0:
        raise ConfigError(f"method {rs.method!r} has no bootstrap component; use '{base}+bs'")
    if rs.method == "bs" and m_dr != 0:
        raise ConfigError("method 'bs' needs dims (0, m_tilde)")
    if rs.method == "ae" and mt >= m:
        raise ConfigError("autoencoder needs an intermediate dimension below m")
    c = cfg.partition.n_parties
    counts = cfg.collaborator_counts or (c,)
    if any(not 1 <= k <= c for k in counts):
        raise ConfigError(f"collaborator counts {counts} must lie in [1, {c}]")
    if cfg.replicates < 1:
        raise ConfigError("replicates must be >= 1")
    if cfg.anchor_target not in ("unscaled", "scaled"):
        raise ConfigError("anchor_target must be 'unscaled' or 'scaled'")
    compute_mjd = (not cfg.partition.is_iid) if cfg.mjd == "auto" else bool(cfg.mjd)
    return Plan(m, mt, collab, m_dr, m_bs, c, tuple(sorted(set(counts))), compute_mjd)


@dataclass
class ArmResult:
    arm_tag: str
    replicate: int
    status: str = "ok"
    reason: str = ""
    estimate: EffectEstimate | None = None
    n_ids: int = 0
    unmatched_treated: int = 0
    caliper_width: float | None = None
    converged: bool = True
    propensity: PropensityScores | None = None
    matched_ids: np.ndarray | None = None
    balance_pre: BalanceReport | None = None
    balance: BalanceReport | None = None
    distribution: DistributionReport | None = None
    inconsistency: float | None = None
    n_common: int | None = None
    resample_hash: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def att(self) -> float | None:
        return self.estimate.att if self.estimate is not None else None

    def light(self) -> "ArmResult":
        """Copy without per-sample arrays."""
        return replace(self, propensity=None, matched_ids=None)


def _seed(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _psm(X, z, y, ids, cfg: ExperimentConfig, tag: str):
    lg = cfg.logistic
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConvergenceWarning)
        model = fit_logistic(X, z, lam=lg.lam, tol=lg.tol, max_iter=lg.max_iter)
    converged = model.converged and not any(issubclass(w.category, ConvergenceWarning) for w in caught)
    scores = predict_propensity(model, X, ids)
    match = caliper_match(scores, z, cfg.caliper)
    return scores, match, estimate_att(match, y, ids, tag), converged


def run_arm(
    tag: str,
    parties: Sequence[PartyDataset],
    cfg: ExperimentConfig,
    *,
    anchor: AnchorData | None = None,
    reducers: dict[int, Reducer] | None = None,
    shares: dict[int, IntermediateShare] | None = None,
    collab_dim: int | None = None,
    replicate: int = 0,
    names: Sequence[str] | None = None,
    kinds: Sequence[str] | None = None,
) -> ArmResult:
    """Run one arm on the given parties.

    Tags starting with ``IA`` or ``CA`` analyse the pooled raw covariates of
    ``parties``; ``DCQE`` tags go through shares and the collaborative
    representation. Covariate balance is always measured on raw covariates.
    """
    res = ArmResult(tag, replicate)
    pooled = concat([p.population for p in parties])
    schema = pooled.schema
    names = names or schema.names
    kinds = kinds or schema.kinds
    res.n_ids = pooled.n
    try:
        if tag.startswith("DCQE"):
            if shares is None:
                if anchor is None or reducers is None:
                    raise ConfigError("DC-QE arm needs an anchor and reducers or precomputed shares")
                shares = {p.party_id: make_intermediate_share(p, reducers[p.party_id], anchor) for p in parties}
            own = [shares[p.party_id] for p in parties]
            maps = fit_collaboration(own, collab_dim or own[0].m_k, cfg.anchor_target)
            ds = build_collaborative_dataset(own, maps)
            X, z, y, ids = ds.X_check, ds.z, ds.y, ds.ids
        else:
            X, z, y, ids = pooled.X, pooled.z, pooled.y, pooled.ids
        scores, match, est, conv = _psm(X, z, y, ids, cfg, tag)
    except ARM_ERRORS as exc:
        res.status, res.reason = "failed", str(exc)
        return res
    res.estimate, res.converged = est, conv
    res.propensity = scores
    res.unmatched_treated = match.unmatched_treated
    res.caliper_width = match.caliper_width
    # raw covariates for evaluation
    row = {int(i): k for k, i in enumerate(pooled.ids)}
    t_rows = np.array([row[t] for t, _ in match.pairs])
    c_rows = np.array([row[c] for _, c in match.pairs])
    res.matched_ids = np.concatenate([match.treated_ids, match.control_ids])
    try:
        res.balance_pre = balance(pooled.X, pooled.z, names, kinds)
        Xm = np.vstack([pooled.X[t_rows], pooled.X[c_rows]])
        zm = np.concatenate([np.ones(len(t_rows)), np.zeros(len(c_rows))])
        res.balance = balance(Xm, zm, names, kinds)
    except MetricError:
        pass
    return res


def _reducers_for(parties, cfg: ExperimentConfig, plan: Plan, ss: np.random.SeedSequence) -> dict[int, Reducer]:
    rs = cfg.reducer
    if rs.method == "shared":
        # one invertible (when m_tilde = m) linear map shared by every party
        P = random_orthogonal(plan.m, _seed(np.random.SeedSequence([cfg.seed, 0x5EED])))[:, : plan.m_tilde]
        shared = LinearReducer(P, np.zeros(plan.m), "shared")
        return {p.party_id: shared for p in parties}
    out = {}
    for p, child in zip(parties, ss.spawn(len(parties))):
        pop = p.population
        out[p.party_id] = fit_reducer(
            rs.method,
            pop.X,
            pop.z,
            plan.m_dr,
            plan.m_bs,
            _seed(child),
            lpp_k=min(rs.lpp_k, pop.n - 1),
            lpp_t=rs.lpp_t,
            ae_epochs=rs.ae_epochs,
            ae_lr=rs.ae_lr,
            bs_p=rs.bs_p,
            lam=cfg.logistic.lam,
        )
    return out


def resample_hash(source_ids: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(source_ids, dtype=np.int64).tobytes()).hexdigest()[:16]


def _fixed_assignment(pop: Population, cfg: ExperimentConfig) -> np.ndarray:
    """Party index per source row for --partition-once (-1 = unassigned)."""
    spec = cfg.partition.with_seed(_seed(np.random.SeedSequence([cfg.seed, 0xFA27])))
    owner = np.full(pop.n, -1)
    pos = {int(i): k for k, i in enumerate(pop.ids)}
    for p in partition(pop, spec):
        owner[[pos[int(i)] for i in p.population.ids]] = p.party_id
    return owner


def run_replicate(pop: Population, cfg: ExperimentConfig, plan: Plan, b: int, owner: np.ndarray | None = None, keep: bool = False):
    """All arms of bootstrap replicate ``b``; returns (arm results, debug payload)."""
    ss = np.random.SeedSequence([cfg.seed, b])
    s_res, s_part, s_anchor, s_red = ss.spawn(4)
    idx = np.random.default_rng(s_res).integers(0, pop.n, pop.n)
    rhash = resample_hash(pop.ids[idx])
    boot = Population(pop.X[idx], pop.z[idx], pop.y[idx], np.arange(pop.n), pop.schema)

    results: dict[str, ArmResult] = {}

    def fail_all(reason):
        for tag in plan.arms:
            results[tag] = ArmResult(tag, b, status="failed", reason=reason, resample_hash=rhash)
        return results, None

    try:
        if owner is None:
            parties = partition(boot, cfg.partition.with_seed(_seed(s_part)))
        else:
            own = owner[idx]
            parties = [PartyDataset(k, boot.take(np.flatnonzero(own == k))) for k in range(plan.n_parties)]
    except DataError as exc:
        return fail_all(f"partition failed: {exc}")
    parties = [p for p in parties]
    empty = [p.party_id for p in parties if p.population.n == 0]
    if empty:
        return fail_all(f"empty parties {empty}")

    names, kinds = pop.schema.names, pop.schema.kinds
    ctx = dict(replicate=b, names=names, kinds=kinds)
    results["CA"] = run_arm("CA", parties, cfg, **ctx)
    for p in parties:
        tag = f"IA_{p.party_id + 1}"
        results[tag] = run_arm(tag, [p], cfg, **ctx)

    debug = None
    try:
        r = sum(p.population.n for p in parties)
        anchor = generate_anchor(pooled_bounds(parties), r, _seed(s_anchor))
        reducers = _reducers_for(parties, cfg, plan, s_red)
        shares = {p.party_id: make_intermediate_share(p, reducers[p.party_id], anchor) for p in parties}
        if cfg.unsafe_export_reducer and b == 0:
            debug = {f"party_{k + 1}": unsafe_export_reducer(v, i_know_this_leaks=True) for k, v in reducers.items()}
        for c in plan.counts:
            tag = f"DCQE_{c}"
            results[tag] = run_arm(tag, parties[:c], cfg, shares=shares, collab_dim=plan.collab_dim, **ctx)
    except ARM_ERRORS as exc:
        for c in plan.counts:
            results[f"DCQE_{c}"] = ArmResult(f"DCQE_{c}", b, status="failed", reason=f"reduction failed: {exc}")

    ca = results["CA"]
    ca_matched = boot.X[ca.matched_ids] if ca.ok else None
    for tag, res in results.items():
        res.resample_hash = rhash
        if not res.ok or not ca.ok:
            continue
        res.inconsistency, res.n_common = inconsistency_arrays(res.propensity.ids, res.propensity.scores, ca.propensity.ids, ca.propensity.scores)
        if plan.compute_mjd:
            res.distribution = mjd(boot.X[res.matched_ids], ca_matched, names, bins=cfg.bins)
    ordered = {tag: (results[tag] if keep else results[tag].light()) for tag in plan.arms}
    return ordered, debug


@dataclass(frozen=True)
class SummaryRow:
    arm: str
    metric: str
    value: float | None
    se: float | None
    n_replicates: int


@dataclass
class ExperimentReport:
    config: dict
    arms: list[str]
    replicates: list[dict[str, ArmResult]]
    summary: list[SummaryRow]
    provenance: dict
    debug: dict | None = None


def _metric_value(res: ArmResult, metric: str):
    if metric == "att":
        return res.att
    if metric == "inconsistency":
        return res.inconsistency
    if metric == "masmd_pre":
        return res.balance_pre.masmd if res.balance_pre else None
    if metric == "masmd":
        return res.balance.masmd if res.balance else None
    if metric == "mjd":
        return res.distribution.mjd if res.distribution else None
    raise KeyError(metric)


def summarize(arms: Sequence[str], replicates: Sequence[dict[str, ArmResult]]) -> list[SummaryRow]:
    """Per arm: gap against CA over paired replicates, mean and SE for the rest."""
    rows = []
    for arm in arms:
        runs = [rep[arm] for rep in replicates if arm in rep]
        for metric in METRICS:
            if metric == "gap":
                pairs = [(rep[arm].att, rep["CA"].att) for rep in replicates if rep[arm].ok and rep["CA"].ok]
                if pairs:
                    a, c = zip(*pairs)
                    rows.append(SummaryRow(arm, metric, gap(a, c), None, len(pairs)))
                else:
                    rows.append(SummaryRow(arm, metric, None, None, 0))
                continue
            vals = [v for v in (_metric_value(r, metric) for r in runs if r.ok) if v is not None]
            if vals:
                mean, se = mean_se(vals)
                rows.append(SummaryRow(arm, metric, mean, se, len(vals)))
            else:
                rows.append(SummaryRow(arm, metric, None, None, 0))
    return rows


def _deviations(cfg: ExperimentConfig, plan: Plan) -> list[str]:
    dev = [
        "att-divisor: matched pairs (unmatched treated excluded)",
        f"caliper: {cfg.caliper} x SD of logit propensity, greedy descending-score order",
        "smd-spread: pooled sample variances",
        f"divergence: natural log, eps=1e-9 bin smoothing, bins={cfg.bins}",
        f"collaboration-target: {'U*S (scaled)' if cfg.anchor_target == 'scaled' else 'U (unscaled)'}",
        "bootstrap: size-n resample with replacement shared by all arms",
        f"partitioning: {'once on the source population' if cfg.partition_once else 'per replicate'}",
        "anchor-bounds: pooled per-party min/max (statistic disclosure)",
    ]
    if cfg.partition.scheme == "cluster":
        dev.append("cluster-projection: pca2d (umap substituted)")
    if cfg.partition.scheme == "label_ratio":
        dev.append("label-ratio: surplus treated units left unassigned")
    method = cfg.reducer.method
    if "ae" in method:
        dev.append(f"autoencoder: 1 tanh hidden layer, epochs={cfg.reducer.ae_epochs}, lr={cfg.reducer.ae_lr}, momentum 0.9 with accept-if-decrease step rule")
    if "bs" in method:
        dev.append(f"bootstrap-reducer: p={cfg.reducer.bs_p}, sub-samples without replacement, DR part fitted on full local data")
    if method == "shared":
        dev.append("reducer: shared random orthogonal map (verification mode, not party-local)")
    return dev


def run_experiment(cfg: ExperimentConfig, pop: Population | None = None, keep_scores: bool = False) -> ExperimentReport:
    if pop is None:
        pop = load_population(cfg)
    plan = resolve(cfg, pop.m)
    owner = _fixed_assignment(pop, cfg) if cfg.partition_once else None
    B = cfg.replicates
    if cfg.workers > 1 and not keep_scores:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            outs = list(ex.map(run_replicate, [pop] * B, [cfg] * B, [plan] * B, range(B), [owner] * B, chunksize=max(1, B // (4 * cfg.workers))))
    else:
        outs = [run_replicate(pop, cfg, plan, b, owner, keep_scores) for b in range(B)]
    replicates = [o[0] for o in outs]
    debug = outs[0][1] if outs and outs[0][1] is not None else None
    summary = summarize(plan.arms, replicates)
    failures = {arm: sum(1 for rep in replicates if not rep[arm].ok) for arm in plan.arms}
    provenance = {
        "package": "dcqe",
        "version": __version__,
        "seed": cfg.seed,
        "replicates": B,
        "numpy": np.__version__,
        "resolved": {
            "m": plan.m,
            "intermediate_dim": plan.m_tilde,
            "collab_dim": plan.collab_dim,
            "dims": [plan.m_dr, plan.m_bs],
            "parties": plan.n_parties,
            "collaborator_counts": list(plan.counts),
            "mjd": plan.compute_mjd,
        },
        "failures": failures,
        "deviations": _deviations(cfg, plan),
    }
    return ExperimentReport(cfg.to_dict(), plan.arms, replicates, summary, provenance, debug)


# ---------------------------------------------------------------------------
# report files

SUMMARY_COLUMNS = ("arm", "metric", "value", "se", "n_replicates")
REPLICATE_COLUMNS = (
    "replicate",
    "arm",
    "status",
    "reason",
    "att",
    "n_pairs",
    "unmatched_treated",
    "caliper_width",
    "n_ids",
    "converged",
    "inconsistency",
    "n_common",
    "masmd_pre",
    "masmd",
    "mjd",
    "resample_hash",
)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _parse_float(s: str) -> float | None:
    return float(s) if s != "" else None


def emit_report(report: ExperimentReport, out_dir: str | Path, fmt: str = "csv") -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    path = out / "summary.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in report.summary:
            w.writerow([r.arm, r.metric, _fmt(r.value), _fmt(r.se), r.n_replicates])
    written.append(path)
    path = out / "replicates.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPLICATE_COLUMNS)
        for b, rep in enumerate(report.replicates):
            for arm in report.arms:
                r = rep[arm]
                w.writerow(
                    [
                        b,
                        arm,
                        r.status,
                        r.reason,
                        _fmt(r.att),
                        r.estimate.n_pairs if r.estimate else "",
                        r.unmatched_treated if r.ok else "",
                        _fmt(r.caliper_width),
                        r.n_ids,
                        _fmt(r.converged) if r.ok else "",
                        _fmt(r.inconsistency),
                        _fmt(r.n_common),
                        _fmt(_metric_value(r, "masmd_pre")),
                        _fmt(_metric_value(r, "masmd")),
                        _fmt(_metric_value(r, "mjd")),
                        r.resample_hash,
                    ]
                )
    written.append(path)
    for name, payload in (("config.json", report.config), ("provenance.json", report.provenance)):
        path = out / name
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        written.append(path)
    if report.debug is not None:
        path = out / "unsafe_reducers.json"
        path.write_text(json.dumps(report.debug) + "\n", encoding="utf-8")
        written.append(path)
    if fmt == "json":
        path = out / "summary.json"
        path.write_text(json.dumps(summary_to_records(report.summary), indent=2) + "\n", encoding="utf-8")
        written.append(path)
    elif fmt != "csv":
        raise ValueError(f"unknown report format {fmt!r}")
    return written


def summary_to_records(rows: Sequence[SummaryRow]) -> list[dict]:
    return [asdict(r) for r in rows]


def load_summary(in_dir: str | Path) -> list[SummaryRow]:
    with open(Path(in_dir) / "summary.csv", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SUMMARY_COLUMNS:
            raise ValueError(f"unexpected summary columns {reader.fieldnames}")
        return [
            SummaryRow(r["arm"], r["metric"], _parse_float(r["value"]), _parse_float(r["se"]), int(r["n_replicates"]))
            for r in reader
        ]


def load_replicates(in_dir: str | Path) -> list[dict]:
    with open(Path(in_dir) / "replicates.csv", newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def summary_lookup(rows: Sequence[SummaryRow]) -> dict[tuple[str, str], SummaryRow]:
    return {(r.arm, r.metric): r for r in rows}
