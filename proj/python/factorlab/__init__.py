"""Auditable cross-sectional factor search."""

from ._core import (
    ConfigError,
    DataError,
    DependencyError,
    Panel,
    ProtocolFrozenError,
    RecipeParseError,
    TraceIntegrityError,
    backtest,
    canonical_form,
    combine,
    curate,
    daily_ic,
    default_config,
    evaluate_recipe,
    evaluate_signal,
    fee_sweep,
    forward_return,
    ingest,
    load_panel,
    performance_metrics,
    report,
    run_round,
    summarize_ic,
    synth_csv,
    validate_recipe,
    verify_trace,
    verify_trace_bytes,
)

__all__ = [
    "ConfigError",
    "DataError",
    "DependencyError",
    "Panel",
    "ProtocolFrozenError",
    "RecipeParseError",
    "TraceIntegrityError",
    "backtest",
    "canonical_form",
    "combine",
    "curate",
    "daily_ic",
    "default_config",
    "evaluate_recipe",
    "evaluate_signal",
    "fee_sweep",
    "forward_return",
    "ingest",
    "load_panel",
    "performance_metrics",
    "report",
    "run_round",
    "summarize_ic",
    "synth_csv",
    "validate_recipe",
    "verify_trace",
    "verify_trace_bytes",
]
