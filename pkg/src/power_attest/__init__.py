"""Power-trace attestation toolkit.

Decodes and synthesizes 12-bit power captures, builds per-program mean
templates with Savitzky-Golay smoothing, attests executions by Pearson
correlation against calibrated thresholds, derives multi-trace security
parameters from binomial tails, and simulates the remote attestation
protocol (verifier, prover with TEE, and measurement tester) together with
its documented attacks.
"""

from .config import Config, config_from_dict, load_config, resolve_config, save_config
from .errors import (
    BadFilterParams,
    ConfigError,
    DegenerateInput,
    DomainError,
    DuplicateProgramId,
    EmptyCapture,
    EmptyCorpus,
    FormatError,
    HarnessFailure,
    InsufficientTraces,
    InvalidProbabilities,
    IoError,
    LengthMismatch,
    MalformedCapture,
    MissingTemplate,
    MixedLabels,
    NoSolutionBelowCap,
    PowerAttestError,
    ProfileTooLong,
    ProtocolError,
    ThresholdExceedsBatch,
    ThresholdOutOfBand,
    TooShort,
    TriggersNotFound,
    UncalibratedTemplate,
)
from .estimator import TemplateAttestor
from .evaluate import (
    ConfusionStats,
    EvalReport,
    EvalResult,
    Metrics,
    default_evaluation,
    evaluate,
    metrics,
    read_report,
    reference_templates,
    report_from_dict,
    report_to_dict,
    worst_fp_rate,
    write_report,
    write_report_csv,
)
from .matcher import AttestDecision, attest_multi, attest_single, pearson
from .pipeline import PipelineResult, report_recall, run_pipeline
from .plotting import emit_trace_image, emit_trace_plot, read_plot_csv
from .security import (
    LEVEL_ANCHORS,
    SecurityParams,
    SimulationResult,
    anchored_params,
    binom_tail,
    format_level_table,
    honest_fail_prob,
    honest_pass_prob,
    level_table,
    min_traces_for_level,
    simulate_multi_attest,
    threshold_traces,
    wilson_interval,
)
from .synth import (
    ManifestEntry,
    ProgramProfile,
    TriggerConfig,
    corpus,
    corpus_plan,
    default_profiles,
    generate_trace,
    noiseless_trace,
    generate_window,
    profile_bucket,
    read_corpus,
    read_manifest,
    read_profiles,
    synth_to_dir,
    trace_seed,
    write_manifest,
    write_profiles,
)
from .template import (
    Template,
    build_template,
    calibrate_threshold,
    read_template,
    savitzky_golay,
    write_template,
)
from .trace import (
    ADC_LEVELS,
    BUCKET_EXPONENTS,
    CAPTURE_SAMPLES,
    SAMPLE_RATE_HZ,
    LengthBucket,
    Trace,
    as_bucket,
    bucket_for_length,
    decode_capture,
    detect_triggers,
    encode_capture,
    execution_window,
    quantize_samples,
    read_capture,
    read_trace,
    trim_to_bucket,
    write_capture,
    write_trace,
)

__version__ = "0.1.0"

__all__ = [
    "ADC_LEVELS",
    "AttestDecision",
    "BUCKET_EXPONENTS",
    "BadFilterParams",
    "CAPTURE_SAMPLES",
    "Config",
    "ConfigError",
    "ConfusionStats",
    "DegenerateInput",
    "DomainError",
    "DuplicateProgramId",
    "EmptyCapture",
    "EmptyCorpus",
    "EvalReport",
    "EvalResult",
    "FormatError",
    "HarnessFailure",
    "InsufficientTraces",
    "InvalidProbabilities",
    "IoError",
    "LEVEL_ANCHORS",
    "LengthBucket",
    "LengthMismatch",
    "MalformedCapture",
    "ManifestEntry",
    "Metrics",
    "MissingTemplate",
    "MixedLabels",
    "NoSolutionBelowCap",
    "PipelineResult",
    "PowerAttestError",
    "ProfileTooLong",
    "ProgramProfile",
    "ProtocolError",
    "SAMPLE_RATE_HZ",
    "SecurityParams",
    "SimulationResult",
    "Template",
    "TemplateAttestor",
    "ThresholdExceedsBatch",
    "ThresholdOutOfBand",
    "TooShort",
    "Trace",
    "TriggerConfig",
    "TriggersNotFound",
    "UncalibratedTemplate",
    "anchored_params",
    "as_bucket",
    "attest_multi",
    "attest_single",
    "binom_tail",
    "bucket_for_length",
    "build_template",
    "calibrate_threshold",
    "config_from_dict",
    "corpus",
    "corpus_plan",
    "decode_capture",
    "default_evaluation",
    "default_profiles",
    "detect_triggers",
    "emit_trace_image",
    "emit_trace_plot",
    "encode_capture",
    "evaluate",
    "execution_window",
    "format_level_table",
    "generate_trace",
    "generate_window",
    "honest_fail_prob",
    "honest_pass_prob",
    "level_table",
    "load_config",
    "metrics",
    "min_traces_for_level",
    "noiseless_trace",
    "pearson",
    "profile_bucket",
    "quantize_samples",
    "read_capture",
    "read_corpus",
    "read_manifest",
    "read_plot_csv",
    "read_profiles",
    "read_report",
    "read_template",
    "read_trace",
    "reference_templates",
    "report_from_dict",
    "report_recall",
    "report_to_dict",
    "resolve_config",
    "run_pipeline",
    "save_config",
    "savitzky_golay",
    "simulate_multi_attest",
    "synth_to_dir",
    "threshold_traces",
    "trace_seed",
    "trim_to_bucket",
    "wilson_interval",
    "worst_fp_rate",
    "write_capture",
    "write_manifest",
    "write_profiles",
    "write_report",
    "write_report_csv",
    "write_template",
    "write_trace",
]
