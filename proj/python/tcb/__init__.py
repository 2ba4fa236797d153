# Copyright 2026 The tcb Authors
# SPDX-License-Identifier: Apache-2.0
"""Temporal compositionality benchmark: scoring, consistency and rating analysis."""

from ._core import (
    ProviderError,
    ValidationError,
    aggregate_ratings,
    ate,
    consecutive_consistency,
    epe,
    equal_gap_indices,
    framewise_consistency,
    load_config,
    map_similarity,
    parse_answer,
    parse_assertions,
    rank_correlation,
    remap_index,
    render_assertions,
    score_verdicts,
    tc_score_i2v,
    tcr,
    validate_assertions,
)

__all__ = [
    "ProviderError",
    "ValidationError",
    "aggregate_ratings",
    "ate",
    "consecutive_consistency",
    "epe",
    "equal_gap_indices",
    "framewise_consistency",
    "load_config",
    "map_similarity",
    "parse_answer",
    "parse_assertions",
    "rank_correlation",
    "remap_index",
    "render_assertions",
    "score_verdicts",
    "tc_score_i2v",
    "tcr",
    "validate_assertions",
]
