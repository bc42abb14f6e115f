"""Cross-validated prediction workflows and curve grading."""
from radfit.workflows.classification import (
    DeviceOutcome,
    DirectRunConfig,
    EvaluationReport,
    run_direct_classification,
    run_multistep_classification,
)
from radfit.workflows.curves import (
    CurveModelBank,
    CurveReport,
    CurveRunConfig,
    default_sampled_indices,
    drop_index,
    predict_stress_curve,
    run_curve_prediction,
    train_curve_model_bank,
)
from radfit.workflows.grading import grade_generalized, grade_relaxed, grade_strict
