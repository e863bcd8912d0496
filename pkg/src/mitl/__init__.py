"""Transfer learning for two-class motor-imagery EEG.

Covariance-space domain alignment (Euclidean or Riemannian reference), CSP
with source-domain regularization, ReliefF feature selection, LDA and
weighted adaptation regularization (wAR) classifiers, plus an evaluation
harness for leave-one-subject-out and cross-session transfer.
"""
from .alignment import (
    Aligner,
    AlignmentReference,
    align,
    align_covariances,
    domain_align,
    ea_reference,
    ps_reference,
    reference_from_covariances,
    trial_covariances,
)
from .classify import (
    LDA,
    WAR,
    LdaModel,
    WarModel,
    WarParams,
    clda_fit,
    kernel_matrix,
    lda_fit,
    lda_predict,
    owar_fit,
    war_fit,
    war_objective,
    war_predict,
)
from .data import (
    SynthParams,
    Trial,
    TrialSet,
    bandpass,
    epoch,
    load_trialset,
    save_trialset,
    synth_generate,
)
from .featsel import FeatureWeights, ReliefF, crelieff, relieff, select_top
from .harness import (
    PipelineConfig,
    RunResult,
    SummaryRow,
    TTestReport,
    feature_selection_experiment,
    paired_ttest,
    full_grid,
    run_pipeline,
    summarize,
    sweep,
)
from .linalg import (
    EigenPair,
    regularize,
    riemannian_distance,
    riemannian_mean,
    spd_exp,
    spd_inv_sqrt,
    spd_log,
    spd_sqrt,
    sym_eig,
)
from .spatial import (
    CSP,
    FilterBank,
    ccsp_fit,
    csp_fit,
    extract_features,
    features_from_covs,
    fit_filters_from_covs,
    rcsp_fit,
)

__version__ = "0.1.0"
