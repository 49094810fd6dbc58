"""Sparse decoding of motor-imagery EEG.

Building blocks: session storage, causal preprocessing, CSP + shrinkage
LDA baselines, a dual augmented Lagrangian solver for matrix-regularized
logistic models, blockwise cross-validation with guard margins, repeated
measures statistics, and a seeded synthetic session generator.
"""

from .dataset import Dataset, Session, SessionFormatError, Trial
from .dataset import load_dataset, load_session, save_dataset, save_session, validate_session
from .preprocessing import (
    BandpassSpec,
    FilterCoefficients,
    ResampleSpec,
    apply_filter,
    design_bandpass,
    preprocess_session,
    resample_trial,
)
from .csp import ClassCovariance, CspModel, csp_features, estimate_covariance, fit_csp
from .slda import ShrinkageLdaModel, fit_shrinkage_lda, lda_predict
from .features import FeatureMap, FeatureMapSpec, TrialFeature, build_feature_blocks
from .prox import prox_l1, prox_group_rows, prox_trace, omega_value, omega_dual
from .loss import logistic_loss_and_grad
from .dal import (
    PRESET_BINDINGS,
    PRESET_DS,
    PRESET_GLR,
    PRESET_L1,
    ConvergenceRecord,
    DalModel,
    DalProblem,
    RegularizerSpec,
    SolverOptions,
    dal_predict,
    dal_solve,
    duality_gap,
    lambda_max,
)
from .apg import apg_solve
from .evalstats import (
    METHOD_CSP_LDA,
    METHOD_DAL_DS,
    METHOD_DAL_GLR,
    METHOD_DAL_L1,
    METHOD_PRESETS,
    METHOD_TAGS,
    AnovaResult,
    CvPlan,
    CvReport,
    bonferroni_adjust,
    cross_validate_method,
    fit_dal_with_selection,
    lambda_grid,
    make_blockwise_folds,
    misclassification_error,
    paired_ttest,
    rm_anova,
    sweep_lambda_path,
)
from .synth import (
    GroundTruth,
    SynthSpec,
    generate_session,
    load_ground_truth,
    mixing_matrix,
    pink_noise,
    save_synth_session,
)
from .models import (
    ModelBundle,
    apply_model,
    default_preprocessing,
    emit_model,
    load_model,
    model_scores,
    train_model,
)
from .compare import CompareConfig, format_percent, render_markdown, run_compare, write_reports

__version__ = "0.1.0"
