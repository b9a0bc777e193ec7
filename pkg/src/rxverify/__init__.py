"""Prescription verification engine.

Pipeline: monograph ingest -> ICD-10 indication matching -> dosage
knowledge graph retrieval -> binary verdicts, with optional interaction
grounding and an offline deterministic language-model stub.
"""

from .core import (
    AgeGroup,
    Diagnosis,
    DosageFit,
    FitStatus,
    Icd10Code,
    IndicationFit,
    ItemReport,
    PatientProfile,
    PrescriptionCase,
    PrescriptionItem,
    Verdict,
    VerificationReport,
    icd_category_equal,
    parse_icd10,
)
from .dosage_graph import (
    DosageGraph,
    DoseRecommendation,
    build_graph,
    find_diseases,
    find_dosages,
    flag_deviation,
    load_graph,
    match_disease,
    recommend,
    save_graph,
)
from .dose_text import AgeConstraint, parse_age_constraint
from .evaluation import ConfusionCounts, MetricRow, f_beta, inference_stats, metric_row, score
from .gateway import Gateway, LmParams, LmRequest, LmResponse, StubProvider, render_template, stub_gateway
from .icd_match import (
    IndicationAssessment,
    IngredientMatch,
    MatchMethod,
    find_usage_codes,
    fuzzy_match,
    match_indication,
    normalize_name,
)
from .interactions import (
    InteractionIndex,
    StubEmbedder,
    Triplet,
    build_index,
    cosine,
    load_interactions,
    retrieve,
    summarize,
)
from .monographs import (
    CorpusStats,
    DrugMonograph,
    clean_text,
    compute_stats,
    convert_mcg_to_mg,
    load_monographs,
    save_monographs,
    standardize_hyphens,
)
from .pipeline import (
    StructuredExtraction,
    load_case,
    structure_prescription,
    verdict_of,
    verify_batch,
    verify_case,
)

__version__ = "0.1.0"
