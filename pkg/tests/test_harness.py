import math

import numpy as np
import pytest

import dcqe.harness as harness
from dcqe.harness import (
    ConfigError,
    ExperimentConfig,
    LogisticSettings,
    ReducerSpec,
    SUMMARY_COLUMNS,
    ArmResult,
    emit_report,
    load_replicates,
    load_summary,
    resolve,
    run_arm,
    run_experiment,
    run_replicate,
    summarize,
    summary_lookup,
)
from dcqe.causal import EffectEstimate
from dcqe.collaboration import generate_anchor, pooled_bounds
from dcqe.reduction import LinearReducer
from dcqe.tabular import PartitionSpec, PartyDataset, gaussian_config, generate_synthetic, partition


def small_cfg(**kw):
    base = dict(
        data={"synthetic": {"preset": "gaussian", "n": 400, "m": 4, "seed": 1}},
        partition=PartitionSpec("iid", parts=2),
        replicates=2,
        seed=3,
    )
    base.update(kw)
    return ExperimentConfig(**base)


@pytest.fixture(scope="module")
def small_report():
    return run_experiment(small_cfg(), keep_scores=True)


def test_structure(small_report):
    assert small_report.arms == ["IA_1", "IA_2", "DCQE_2", "CA"]
    assert len(small_report.replicates) == 2
    for rep in small_report.replicates:
        assert list(rep) == small_report.arms
        assert all(r.ok for r in rep.values())


def test_ca_gap_zero_and_self_inconsistency(small_report):
    look = summary_lookup(small_report.summary)
    assert look[("CA", "gap")].value == 0
    assert look[("CA", "inconsistency")].value == 0
    assert look[("CA", "gap")].se is None


def test_same_resample_hash(small_report):
    for rep in small_report.replicates:
        hashes = {r.resample_hash for r in rep.values()}
        assert len(hashes) == 1 and hashes != {""}
    assert small_report.replicates[0]["CA"].resample_hash != small_report.replicates[1]["CA"].resample_hash


def test_propensity_ids_within_resample(small_report):
    for rep in small_report.replicates:
        ca_ids = set(rep["CA"].propensity.ids.tolist())
        for r in rep.values():
            assert set(r.propensity.ids.tolist()) <= ca_ids
        assert rep["IA_1"].n_common == rep["IA_1"].n_ids == 200


def test_deterministic_report(tmp_path):
    a = run_experiment(small_cfg())
    b = run_experiment(small_cfg())
    assert a.summary == b.summary
    emit_report(a, tmp_path / "a")
    emit_report(b, tmp_path / "b")
    for name in ("summary.csv", "replicates.csv", "config.json", "provenance.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_replicate_independent_of_order():
    cfg = small_cfg(replicates=3)
    full = run_experiment(cfg)
    pop = harness.load_population(cfg)
    plan = resolve(cfg, pop.m)
    alone, _ = run_replicate(pop, cfg, plan, 2)
    for tag in plan.arms:
        assert alone[tag].att == full.replicates[2][tag].att
        assert alone[tag].inconsistency == full.replicates[2][tag].inconsistency


def test_parallel_matches_serial():
    serial = run_experiment(small_cfg(replicates=3))
    par = run_experiment(small_cfg(replicates=3, workers=2))
    assert serial.summary == par.summary


def test_ia_equals_ca_on_single_party():
    pop = generate_synthetic(gaussian_config(n=300, m=3, seed=4))
    party = partition(pop, PartitionSpec("iid", parts=2, seed=0))[0]
    cfg = small_cfg()
    ia = run_arm("IA_1", [party], cfg)
    ca = run_arm("CA", [PartyDataset(0, party.population)], cfg)
    assert ia.att == ca.att
    np.testing.assert_array_equal(ia.propensity.scores, ca.propensity.scores)


def test_single_party_dcqe_identity_reproduces_ia():
    pop = generate_synthetic(gaussian_config(n=400, m=4, seed=5))
    party = partition(pop, PartitionSpec("iid", parts=2, seed=1))[1]
    cfg = small_cfg(logistic=LogisticSettings(lam=0.0, tol=1e-10))
    anchor = generate_anchor(pooled_bounds([party]), party.population.n, 0)
    ident = LinearReducer(np.eye(4), np.zeros(4), "pca")
    dc = run_arm("DCQE_1", [party], cfg, anchor=anchor, reducers={party.party_id: ident}, collab_dim=4)
    ia = run_arm("IA_2", [party], cfg)
    assert dc.ok and ia.ok
    order_dc = np.argsort(dc.propensity.ids)
    order_ia = np.argsort(ia.propensity.ids)
    np.testing.assert_allclose(dc.propensity.scores[order_dc], ia.propensity.scores[order_ia], atol=1e-8)


def test_anchor_rows_equal_party_total(monkeypatch):
    seen = []
    real = harness.generate_anchor

    def spy(bounds, r, seed):
        seen.append(r)
        return real(bounds, r, seed)

    monkeypatch.setattr(harness, "generate_anchor", spy)
    cfg = small_cfg(
        data={"synthetic": {"preset": "gaussian", "n": 1000, "m": 4, "seed": 2}},
        partition=PartitionSpec("label_ratio", fractions=(0.05, 0.1)),
        replicates=2,
    )
    report = run_experiment(cfg)
    for rep, r in zip(report.replicates, seen):
        assert r == rep["IA_1"].n_ids + rep["IA_2"].n_ids
    assert report.replicates[0]["CA"].n_ids == seen[0] < 1000


def test_full_rank_equivalence():
    cfg = small_cfg(
        data={"synthetic": {"preset": "gaussian", "n": 600, "m": 5, "seed": 7}},
        partition=PartitionSpec("iid", parts=3),
        reducer=ReducerSpec(method="shared"),
        intermediate_dim=5,
        collaborator_counts=(3,),
        replicates=3,
        logistic=LogisticSettings(lam=0.0, tol=1e-10),
    )
    report = run_experiment(cfg)
    for rep in report.replicates:
        assert rep["DCQE_3"].inconsistency <= 1e-6
        assert abs(rep["DCQE_3"].att - rep["CA"].att) <= 1e-6


def test_failed_arm_recorded_and_excluded():
    report = run_experiment(small_cfg(caliper=0.0))
    for rep in report.replicates:
        assert rep["CA"].status == "failed" and rep["CA"].reason == "no matches within caliper"
    look = summary_lookup(report.summary)
    assert look[("CA", "att")].value is None and look[("CA", "att")].n_replicates == 0
    assert report.provenance["failures"]["CA"] == 2


def _fake(att, incons=None):
    r = ArmResult("X", 0, estimate=EffectEstimate(att, 1, "X"))
    r.inconsistency = incons
    return r


def test_summarize_rules():
    reps = [{"A": _fake(1.0, 0.5), "CA": _fake(0.0, 0.0)}]
    look = summary_lookup(summarize(["A", "CA"], reps))
    assert look[("A", "inconsistency")].value == 0.5 and look[("A", "inconsistency")].se is None
    assert look[("A", "gap")].value == 1.0 and look[("A", "gap")].se is None
    reps = [{"A": _fake(1.0, 0.5), "CA": _fake(0.0, 0.0)}, {"A": _fake(3.0, 0.5), "CA": _fake(1.0, 0.0)}]
    look = summary_lookup(summarize(["A", "CA"], reps))
    assert look[("A", "inconsistency")].se == 0
    assert look[("A", "gap")].value == pytest.approx(math.sqrt(2.5))
    assert look[("A", "att")].se == pytest.approx(1.0)


def test_emit_round_trip(tmp_path, small_report):
    emit_report(small_report, tmp_path, "json")
    assert load_summary(tmp_path) == small_report.summary
    assert len(small_report.summary) == len(small_report.arms) * len(harness.METRICS)
    assert (tmp_path / "summary.csv").read_text().splitlines()[0] == ",".join(SUMMARY_COLUMNS)
    rows = load_replicates(tmp_path)
    assert len(rows) == 2 * len(small_report.arms)
    assert (tmp_path / "summary.json").exists()


def test_cluster_provenance_and_mjd(tmp_path):
    cfg = small_cfg(
        data={"synthetic": {"preset": "gaussian", "n": 900, "m": 4, "seed": 2}},
        partition=PartitionSpec("cluster", k=3),
    )
    report = run_experiment(cfg)
    assert "cluster-projection: pca2d (umap substituted)" in report.provenance["deviations"]
    look = summary_lookup(report.summary)
    assert look[("CA", "mjd")].value == pytest.approx(0.0, abs=1e-9)
    assert look[("DCQE_3", "mjd")].value is not None


def test_iid_skips_mjd_by_default(small_report):
    assert summary_lookup(small_report.summary)[("DCQE_2", "mjd")].value is None


@pytest.mark.parametrize("method", ["lpp", "ae", "bs", "pca+bs", "lpp+bs", "ae+bs"])
def test_reducer_methods_run(method):
    cfg = small_cfg(reducer=ReducerSpec(method=method, ae_epochs=30), replicates=1)
    report = run_experiment(cfg)
    assert report.replicates[0]["DCQE_2"].ok, report.replicates[0]["DCQE_2"].reason


def test_quantity_partition_once():
    cfg = small_cfg(partition=PartitionSpec("quantity", fractions=(0.3, 0.7)), partition_once=True)
    report = run_experiment(cfg)
    assert all(r.ok for rep in report.replicates for r in rep.values())
    assert "partitioning: once on the source population" in report.provenance["deviations"]


def test_resolve_defaults_and_dims():
    plan = resolve(ExperimentConfig(reducer=ReducerSpec("ae+bs")), 22)
    assert (plan.m_tilde, plan.m_dr, plan.m_bs) == (21, 11, 10)
    assert resolve(ExperimentConfig(), 22).counts == (50,)
    with pytest.raises(ConfigError, match="free-dims"):
        resolve(ExperimentConfig(reducer=ReducerSpec("pca+bs", dims=(20, 1))), 22)
    plan = resolve(ExperimentConfig(reducer=ReducerSpec("pca+bs", dims=(20, 1)), free_dims=True), 22)
    assert (plan.m_dr, plan.m_bs) == (20, 1)
    with pytest.raises(ConfigError):
        resolve(ExperimentConfig(reducer=ReducerSpec("umap")), 22)
    with pytest.raises(ConfigError):
        resolve(ExperimentConfig(collaborator_counts=(51,)), 22)


def test_config_dict_round_trip():
    cfg = ExperimentConfig(
        partition=PartitionSpec("quantity", fractions=(0.2, 0.8)),
        reducer=ReducerSpec("lpp+bs", dims=(2, 2)),
        collaborator_counts=(1, 2),
        logistic=LogisticSettings(lam=0.5),
    )
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError, match="bogus"):
        ExperimentConfig.from_dict({"bogus": 1})
