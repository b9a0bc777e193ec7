"""Fit-of-indication: ingredient resolution and ICD-10 category matching.

Prescribed ingredient names are resolved against the monograph corpus with
edit-distance similarity, their usage codes collected (from the corpus or,
as a fallback, the language-model gateway), and the usage categories
compared against the patient's diagnosis categories.
"""

from __future__ import annotations

import logging
import re
import unicodedata
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Iterable, Mapping

from .core import Icd10Code, IcdCategory, IndicationFit, parse_icd10
from .errors import LmUnavailable, MalformedCode

if TYPE_CHECKING:  # pragma: no cover
    from .gateway import Gateway
    from .monographs import DrugMonograph

logger = logging.getLogger(__name__)

DEFAULT_FUZZY_THRESHOLD = 0.85

_CODE_TOKEN_RE = re.compile(r"[A-Za-z][0-9]{2}(?:\.[0-9A-Za-z]+)?")


class MatchMethod(Enum):
    EXACT = "Exact"
    FUZZY = "Fuzzy"
    NONE = "None"


class CodeSource(Enum):
    DATABASE = "Database"
    LANGUAGE_MODEL = "LanguageModel"


@dataclass(frozen=True)
class IngredientMatch:
    query: str
    matched_ingredient: str | None
    score: float
    method: MatchMethod


@dataclass(frozen=True)
class IndicationAssessment:
    ingredient: str
    usage_categories: frozenset[IcdCategory]
    diagnosis_categories: frozenset[IcdCategory]
    label: IndicationFit
    source: CodeSource | None

    @property
    def caution(self) -> bool:
        """Flag set when the usage codes came from the language model."""
        return self.source is CodeSource.LANGUAGE_MODEL


def normalize_name(text: str) -> str:
    """Lowercase, trim, collapse whitespace and strip diacritics."""
    decomposed = unicodedata.normalize("NFKD", text)
    stripped = "".join(ch for ch in decomposed if not unicodedata.combining(ch))
    return " ".join(stripped.lower().split())


def levenshtein(a: str, b: str) -> int:
    """Classic edit distance (insertions, deletions, substitutions)."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def similarity(a: str, b: str) -> float:
    """1 - editDistance/maxLength over already-normalized names."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / longest


def fuzzy_match(
    query: str,
    corpus_names: Iterable[str],
    threshold: float = DEFAULT_FUZZY_THRESHOLD,
) -> IngredientMatch:
    """Resolve a prescribed name against the corpus.

    Exact normalized equality wins with score 1.0; otherwise the best
    similarity at or above the threshold wins (ties broken by
    lexicographic order of the candidate name); otherwise no match, with
    the best score kept for diagnostics.
    """
    norm_query = normalize_name(query)
    best_name: str | None = None
    best_score = 0.0
    for name in corpus_names:
        norm_name = normalize_name(name)
        if norm_name == norm_query:
            return IngredientMatch(query, name, 1.0, MatchMethod.EXACT)
        score = similarity(norm_query, norm_name)
        if score > best_score or (score == best_score and best_name is not None and name < best_name):
            best_name = name
            best_score = score
    if best_name is not None and best_score >= threshold:
        return IngredientMatch(query, best_name, best_score, MatchMethod.FUZZY)
    return IngredientMatch(query, None, best_score, MatchMethod.NONE)


def extract_codes(text: str) -> list[Icd10Code]:
    """Pull ICD-10-looking tokens out of free text, skipping malformed ones."""
    codes = []
    for token in _CODE_TOKEN_RE.findall(text):
        try:
            codes.append(parse_icd10(token))
        except MalformedCode:
            logger.warning("skipping malformed ICD-10 token %r", token)
    return codes


def find_usage_codes(
    ingredient: str,
    monographs: Mapping[str, "DrugMonograph"],
    gateway: "Gateway | None" = None,
) -> tuple[frozenset[IcdCategory], CodeSource]:
    """Collect the ICD-10 categories for an ingredient's usages.

    The monograph corpus is authoritative; when it has no coded usages for
    the ingredient the language-model gateway is asked to generate
    candidate codes (LmUnavailable if none is configured).  Categories
    sourced from the model should be treated with caution downstream.
    """
    monograph = monographs.get(normalize_name(ingredient))
    if monograph is not None and monograph.usages:
        categories = set()
        for _disease, codes in monograph.usages:
            for code in codes:
                categories.add(code.category)
        return frozenset(categories), CodeSource.DATABASE
    if gateway is None:
        raise LmUnavailable(f"no usage codes for {ingredient!r} and no gateway configured")
    response = gateway.complete_template("icd_codes", {"ingredient": ingredient})
    categories = {code.category for code in extract_codes(response.text)}
    return frozenset(categories), CodeSource.LANGUAGE_MODEL


def match_indication(
    usage_categories: frozenset[IcdCategory] | set[IcdCategory],
    diagnosis_categories: frozenset[IcdCategory] | set[IcdCategory],
    mode: str = "all",
) -> IndicationFit:
    """Compare usage categories against diagnosis categories.

    Default mode requires every usage category to be present among the
    diagnoses; "any" mode accepts a single overlap.  Empty usages mean we
    know nothing about the drug and the result is Unknown.
    """
    if mode not in ("all", "any"):
        raise ValueError(f"unknown match mode: {mode!r}")
    usage = frozenset(usage_categories)
    diagnosis = frozenset(diagnosis_categories)
    if not usage:
        return IndicationFit.UNKNOWN
    if mode == "any":
        return IndicationFit.APPROPRIATE if usage & diagnosis else IndicationFit.INAPPROPRIATE
    return IndicationFit.APPROPRIATE if usage <= diagnosis else IndicationFit.INAPPROPRIATE
