"""Python bindings for the patchguide core library."""

from ._core import (
    ConfigError,
    Error,
    Hunk,
    LexError,
    LineDiff,
    MalformedOutputError,
    PatternStore,
    StageOutcome,
    annotate_bug_regions,
    apply_hunks,
    bm25_rank,
    cohens_kappa,
    collect_changed_lines,
    em_at_k,
    evaluate_matching,
    exact_match,
    line_diff,
    normalize_code,
    parse_extraction_output,
    ratcliff_obershelp,
    render_unified,
    run_stage,
    similarity_rank,
    standard_actions,
    strip_markers,
    tokenize_code,
    validate_key_element,
)

__all__ = [name for name in dir() if not name.startswith("_")]
