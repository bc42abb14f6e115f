import numpy as np
import pytest

from radfit.core import FAIL, PASS, ContractError, DeviceId, DomainError, StressTrace, compute_fit
from radfit.ingest import PipelineFile
from radfit.preprocess import assemble_design_matrix, preprocess_records
from radfit.workflows import (
    CurveRunConfig,
    DirectRunConfig,
    default_sampled_indices,
    drop_index,
    grade_generalized,
    grade_relaxed,
    grade_strict,
    predict_stress_curve,
    run_curve_prediction,
    run_direct_classification,
    run_multistep_classification,
    train_curve_model_bank,
)

FAST_GB = {"n_stages": 20, "learning_rate": 0.3}
FOREST = DirectRunConfig("forest", hyperparameters={"n_trees": 25})


@pytest.fixture(scope="module")
def small_pipeline(small_corpus):
    return preprocess_records(small_corpus[0]).pipeline


def _relabel(pf, statuses):
    rows = [r.__class__(r.device_id, r.temperature, r.bias_voltage, r.avg_vth, r.vgsigs, r.vdsids, r.flu, s)
            for r, s in zip(pf.rows, statuses)]
    return PipelineFile(pf.grids, rows)


def _with_flu(pf, curves):
    rows = [r.__class__(r.device_id, r.temperature, r.bias_voltage, r.avg_vth, r.vgsigs, r.vdsids, c, r.status)
            for r, c in zip(pf.rows, curves)]
    return PipelineFile(pf.grids, rows)


# -------------------------------------------------------------- grading


def test_strict_grading():
    m = np.linspace(1.0, 2.0, 25)
    g = grade_strict(m, m)
    assert g.passed and np.all(g.errors == 0) and g.rmse == 0
    g = grade_strict(1.1 * m, m, 0.05)
    assert not g.passed and np.allclose(g.errors, 0.10)
    assert grade_strict(1.1 * m, m, 0.2).passed
    with pytest.raises(ContractError):
        grade_strict(m[:3], m)


@pytest.mark.parametrize("tau", [1e-9, 0.01, 3.0])
def test_strict_identity_passes_any_tolerance(tau):
    m = np.random.default_rng(0).uniform(0.1, 2.0, 25)
    assert grade_strict(m, m, tau).passed


def test_relaxed_grading():
    f = np.linspace(0, 6e9, 25)
    flat = np.ones(25)
    drop = np.where(f > 3e9, 0.5, 1.0)
    assert grade_relaxed(flat, flat, fluences=f).agree
    g = grade_relaxed(flat, drop, fluences=f)
    assert not g.agree and g.measured_status == FAIL and g.predicted_status == PASS
    assert grade_relaxed(drop, drop, fluences=f).agree


def test_generalized_grading():
    f = np.linspace(0, 6e9, 25)
    flat = np.ones((24, 25))
    g = grade_generalized(flat, f, 1e6)
    assert g.n_failed == 0 and g.fit.fit == 0.0
    curves = flat.copy()
    curves[:5, 12:] = 0.5
    g = grade_generalized(curves, f, 1e6)
    assert g.n_failed == 5 and g.fit.fit == pytest.approx(1.25e8, rel=1e-12)
    assert g.fit.fit == compute_fit(5, 24, 6.0e9, 1e6).fit


# ---------------------------------------------------------- direct runs


def test_direct_separable(small_pipeline):
    vth = np.array([r.avg_vth for r in small_pipeline.rows])
    pf = _relabel(small_pipeline, [FAIL if v > np.median(vth) else PASS for v in vth])
    rep = run_direct_classification(pf, DirectRunConfig("boosting", hyperparameters=FAST_GB))
    assert rep.overall_accuracy >= 0.95


def test_direct_report_invariants_and_determinism(small_pipeline):
    cfg = DirectRunConfig("logistic", "smote(3)", seed=3)
    a = run_direct_classification(small_pipeline, cfg)
    b = run_direct_classification(small_pipeline, cfg)
    assert a.outcome_table_csv() == b.outcome_table_csv() and a.summary_csv() == b.summary_csv()
    ids = [r.device_id for r in small_pipeline.rows]
    assert sorted(o.device_id for o in a.outcomes) == sorted(ids)
    s = a.scored
    assert a.overall_accuracy == sum(o.correct for o in s) / len(s)
    for number, trained_on in a.training_ids.items():
        assert all(d.index != number for d in trained_on)
        assert len(trained_on) == sum(d.index != number for d in ids)


def test_direct_shuffled_labels_near_prior(default_preprocessed):
    pf = default_preprocessed.pipeline
    rng = np.random.default_rng(0)
    statuses = [pf.rows[k].status for k in rng.permutation(len(pf.rows))]
    rep = run_direct_classification(_relabel(pf, statuses), DirectRunConfig("forest", hyperparameters={"n_trees": 25}))
    prior = np.mean([s.failed for s in statuses])
    assert abs(rep.overall_accuracy - max(prior, 1 - prior)) <= 0.1


def test_direct_skips_single_class_folds(small_pipeline):
    pf = _relabel(small_pipeline, [PASS if r.device_id.index != 3 else FAIL for r in small_pipeline.rows])
    rep = run_direct_classification(pf, DirectRunConfig("logistic"))
    assert rep.skipped_folds == (3,)
    assert all(o.note == "fold-skipped" for o in rep.outcomes if o.device_id.index == 3)


def test_workflows_reject_outliers(default_preprocessed):
    from radfit.core import DeviceStatus, OutlierClass

    pf = default_preprocessed.pipeline
    bad = _relabel(pf, [DeviceStatus.outlier(OutlierClass.CLOUD)] + [r.status for r in pf.rows[1:]])
    with pytest.raises(ContractError):
        run_direct_classification(bad)


# ------------------------------------------------------- multistep runs


def test_multistep_provenance(small_pipeline):
    rep = run_multistep_classification(small_pipeline, "manufacturer", FOREST)
    assert rep.step1_accuracy >= 0.9
    for o in rep.outcomes:
        if o.scored:
            trained_on = rep.training_ids[o.device_id]
            assert {d.manufacturer for d in trained_on} == {o.predicted_group}
            assert all(d.index != o.device_id.index for d in trained_on)
        else:
            assert o.note in ("group-mispredicted", "unpredictable")
            assert o.device_id not in rep.training_ids


def test_multistep_one_device_per_group(small_pipeline):
    keep = {DeviceId(m, i + 1) for i, m in enumerate("ABCD")}
    pf = PipelineFile(small_pipeline.grids, [r for r in small_pipeline.rows if r.device_id in keep])
    rep = run_multistep_classification(pf, "manufacturer", DirectRunConfig("logistic"))
    assert all(o.note == "unpredictable" for o in rep.outcomes)


def test_multistep_voltage_groups(small_pipeline):
    rep = run_multistep_classification(small_pipeline, "voltage", FOREST)
    assert {o.true_group for o in rep.outcomes} == {"685.0", "1027.0", "1369.0"}
    for o in rep.outcomes:
        if o.scored:
            assert {repr(r.bias_voltage) for r in small_pipeline.rows if r.device_id in rep.training_ids[o.device_id]} == {o.predicted_group}


# ---------------------------------------------------------------- curves


def test_default_indices():
    idx = default_sampled_indices()
    assert idx == tuple(range(0, 241, 10))
    with pytest.raises(DomainError):
        default_sampled_indices(241, 24)


def test_constant_corpus_bank(small_pipeline):
    n = small_pipeline.grids["flu"].count
    pf = _with_flu(small_pipeline, [np.full(n, 2.5e-6)] * len(small_pipeline.rows))
    bank = train_curve_model_bank(pf, gb_hyperparameters=FAST_GB)
    assert bank.indices == tuple(range(0, 241, 10)) and len(bank.models) == 25
    dm = assemble_design_matrix(pf.rows, pf.grids, "status")
    assert np.max(np.abs(predict_stress_curve(bank, dm) - 2.5e-6)) <= 1e-6


def test_bank_schema_mismatch(small_pipeline):
    bank = train_curve_model_bank(small_pipeline, (0, 120, 240), FAST_GB)
    dm = assemble_design_matrix(small_pipeline.rows, small_pipeline.grids, "status", list("ABCDE"))
    with pytest.raises(ContractError):
        predict_stress_curve(bank, dm)
    with pytest.raises(DomainError):
        train_curve_model_bank(small_pipeline, (0, 120, 240), FAST_GB, train_ids=[])


def test_curve_run_report(small_pipeline):
    rep = run_curve_prediction(small_pipeline, CurveRunConfig(hyperparameters=FAST_GB))
    flags = [o.relaxed.agree for o in rep.outcomes]
    assert rep.relaxed_agreement == np.mean(flags)
    for o in rep.outcomes:
        assert o.device_id not in rep.training_ids[o.fold]
    assert rep.curves_csv().startswith("device_id,series,fluence,current\n")


def test_generalized_identity_with_measured(small_pipeline):
    idx = default_sampled_indices()
    f = small_pipeline.grids["flu"].positions[list(idx)]
    measured = np.array([r.flu[list(idx)] for r in small_pipeline.rows])
    g = grade_generalized(measured, f, 1e6)
    statuses = [grade_relaxed(c, c, fluences=f).measured_status for c in measured]
    assert g.fit.fit == compute_fit(sum(s.failed for s in statuses), len(statuses), 6.0e9, 1e6).fit


def test_bank_training_error_below_twice_noise(default_preprocessed):
    pf = default_preprocessed.pipeline
    bank = train_curve_model_bank(pf)
    dm = assemble_design_matrix(pf.rows, pf.grids, bank.indices, list(bank.manufacturers))
    rel = np.sqrt(np.mean(((predict_stress_curve(bank, dm) - dm.y) / np.abs(dm.y)) ** 2, axis=0))
    assert rel.max() <= 2 * 0.01


def test_heldout_drop_location(default_preprocessed):
    pf = default_preprocessed.pipeline
    hp = {"n_stages": 50, "learning_rate": 0.2}
    train = [r.device_id for r in pf.rows if r.device_id.index != 1]
    test = [r for r in pf.rows if r.device_id.index == 1]
    bank = train_curve_model_bank(pf, gb_hyperparameters=hp, train_ids=train)
    dm = assemble_design_matrix(test, pf.grids, bank.indices, list(bank.manufacturers))
    pred = predict_stress_curve(bank, dm)
    checked = 0
    for measured, predicted in zip(dm.y, pred):
        planted = drop_index(measured)
        if planted is not None:
            got = drop_index(predicted)
            assert got is not None and abs(got - planted) <= 2
            checked += 1
    assert checked >= 3
