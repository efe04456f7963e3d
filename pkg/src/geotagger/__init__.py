"""Toponym extraction and distance-based disambiguation for tagged text."""

from .disambiguation import (
    ALL_VARIANTS,
    Assignment,
    CandidateSpace,
    GeoTag,
    Phase,
    ScoringFunction,
    closeness,
    compute_weights,
    disambiguate,
    disambiguate_1phase,
    disambiguate_2phase,
    great_circle_distance,
    great_circle_km,
    rank_results,
)
from .docio import Document, load_documents, parse_document
from .extraction import (
    ExtractionOutcome,
    FilterMode,
    extract_candidates,
    extract_terms,
    filter_terms,
    find_postal_codes,
    is_after_preposition,
)
from .evaluation import (
    EvalRecord,
    evaluate_documents,
    geolocate,
    geolocate_document,
    percentile_table,
    scan_mentions,
    top_k_error,
)
from .gazetteer import (
    LocalIndex,
    LocationResult,
    QueryOutcome,
    RateLimiter,
    RemoteGazetteer,
    ResponseCache,
    build_index,
)
from .text_model import (
    Group,
    Interpretation,
    NerTag,
    PosGroup,
    TaggedToken,
    Term,
    compute_groups,
    conflicts,
    enumerate_interpretations,
)

__version__ = "0.1.0"
