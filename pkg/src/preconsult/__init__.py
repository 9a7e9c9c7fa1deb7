"""Toolkit for multi-turn pre-consultation dialogue corpora: turn-count
rebalancing, strict format validation, repetition-drift detection,
doctor-patient simulation, and judge-based task scoring."""

from .corpus import (
    Corpus,
    Dialogue,
    PatientCase,
    Turn,
    load_cases,
    load_corpus,
    max_turn_count,
    save_cases,
    save_corpus,
    turn_histogram,
)
from .inertia import (
    InertiaReport,
    InertiaThresholds,
    SimilaritySeries,
    TokenizerConfig,
    aggregate_by_turn,
    cosine,
    detect_inertia,
    jaccard,
    similarity_series,
    tokenize,
    trend_slope,
)
from .judge import (
    AgreementStats,
    TurnJudgement,
    cohen_kappa,
    compute_tcsr,
    judge_turn,
    spearman_rho,
)
from .rebalance import (
    BinningResult,
    RebalanceConfig,
    bin_by_turn_count,
    determine_quota,
    skewed_sample,
    uniform_sample,
)
from .report import RunLabel, RunSummary, TurnFailureProfile, emit, summarize_run, turn_failure_profile
from .simulate import SimulationConfig, Transcript, run_batch, run_dialogue
from .validator import (
    FormatRules,
    ParsedResponse,
    TurnVerdict,
    compute_fcsr,
    evaluate_turn,
    parse_structured_response,
)

__version__ = "0.1.0"
