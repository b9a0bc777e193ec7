"""Rule-based parsing of dosage reference text: quantities, age bands,
and the deterministic extraction of dosage entries used offline.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from decimal import Decimal

from .errors import UnparseableAgeText

INFINITY = float("inf")

DOSE_QUANTITY_RE = re.compile(
    r"(?P<a>\d+(?:\.\d+)?)(?:\s*-\s*(?P<b>\d+(?:\.\d+)?))?\s*mg(?P<perkg>\s*/\s*kg)?\b",
    re.IGNORECASE,
)

ROUTE_WORDS = {
    "oral",
    "iv",
    "im",
    "intravenous",
    "intramuscular",
    "subcutaneous",
    "topical",
    "inhalation",
    "rectal",
    "sublingual",
}

# Phrases that mark a dose as conditional on patient response/state.
_CONDITIONAL_MARKERS = (
    "patients who",
    "who have not",
    "if ",
    "in patients",
    "for patients",
    "may increase",
    "increase to",
    "titrate",
)

# Sentence boundary: a period not sitting between two digits.
_SENTENCE_SPLIT_RE = re.compile(r"(?<!\d)\.(?!\d)|;")

_NUM = r"\d+(?:\.\d+)?"
_AGE_PATTERNS = [
    # "8 to <10 years", "1 to 11 years"
    re.compile(rf"(?P<min>{_NUM})\s+to\s+(?P<op><=|<|≤)?\s*(?P<max>{_NUM})\s*(?:years?|yrs?)"),
    # "10-17 years"
    re.compile(rf"(?P<min>{_NUM})\s*-\s*(?P<max>{_NUM})\s*(?:years?|yrs?)"),
    # ">=6 years", "at least 6 years"
    re.compile(rf"(?:>=|≥|at least\s+)(?P<min>{_NUM})\s*(?:years?|yrs?)"),
    # ">6 years", "older than 6 years"
    re.compile(rf"(?:>|older than\s+)(?P<min>{_NUM})\s*(?:years?|yrs?)"),
]
_BARE_ADULT_RE = re.compile(r"\badults?\b")
_BARE_CHILD_RE = re.compile(r"\b(?:children|child|pediatric|infants?|adolescents?)\b")


@dataclass(frozen=True)
class DoseQuantity:
    low: Decimal
    high: Decimal
    per_kg: bool = False

    def contains(self, value: Decimal) -> bool:
        return self.low <= value <= self.high


def parse_dose_quantity(text: str) -> DoseQuantity | None:
    """First "N mg" or "N-M mg" occurrence in the text, if any."""
    m = DOSE_QUANTITY_RE.search(text)
    if not m:
        return None
    low = Decimal(m.group("a"))
    high = Decimal(m.group("b")) if m.group("b") is not None else low
    if high < low:
        low, high = high, low
    return DoseQuantity(low=low, high=high, per_kg=m.group("perkg") is not None)


@dataclass(frozen=True)
class AgeConstraint:
    """A half-open or closed age interval in years.

    ``min_years`` is inclusive; ``max_years`` is inclusive when
    ``max_inclusive`` is set, exclusive otherwise.  The original wording
    is kept in ``raw``.
    """

    min_years: float
    max_years: float
    max_inclusive: bool
    raw: str

    def __post_init__(self):
        if self.min_years > self.max_years:
            raise ValueError(f"inverted age interval in {self.raw!r}")

    def contains(self, age_years: float) -> bool:
        if age_years < self.min_years:
            return False
        if self.max_inclusive:
            return age_years <= self.max_years
        return age_years < self.max_years

    def width(self) -> float:
        return self.max_years - self.min_years


def parse_age_constraint(text: str) -> AgeConstraint:
    """Parse wording like "children 8 to <10 years of age" into an interval.

    Recognized forms: "A to <B years" (B exclusive), "A to B years" and
    "A-B years" (B inclusive), ">A years" / ">=A years" (open above), bare
    "adults" ([18, inf)) and bare "children"/"pediatric" ([0, 18)).
    Raises UnparseableAgeText otherwise.
    """
    low = text.strip().lower()
    m = _AGE_PATTERNS[0].search(low)
    if m:
        return AgeConstraint(
            min_years=float(m.group("min")),
            max_years=float(m.group("max")),
            max_inclusive=m.group("op") != "<",
            raw=text,
        )
    m = _AGE_PATTERNS[1].search(low)
    if m:
        return AgeConstraint(float(m.group("min")), float(m.group("max")), True, text)
    m = _AGE_PATTERNS[2].search(low)
    if m:
        return AgeConstraint(float(m.group("min")), INFINITY, False, text)
    m = _AGE_PATTERNS[3].search(low)
    if m:
        return AgeConstraint(float(m.group("min")), INFINITY, False, text)
    if _BARE_ADULT_RE.search(low):
        return AgeConstraint(18.0, INFINITY, False, text)
    if _BARE_CHILD_RE.search(low):
        return AgeConstraint(0.0, 18.0, False, text)
    raise UnparseableAgeText(f"unrecognized age wording: {text!r}")


def looks_like_age_text(text: str) -> bool:
    try:
        parse_age_constraint(text)
        return True
    except UnparseableAgeText:
        return False


def _is_conditional(text: str) -> bool:
    low = text.lower()
    return any(marker in low for marker in _CONDITIONAL_MARKERS)


def _segments(text: str) -> list[str]:
    segments = []
    for line in text.split("\n"):
        for part in _SENTENCE_SPLIT_RE.split(line):
            part = part.strip()
            if part:
                segments.append(part)
    return segments


def extract_dose_entries(text: str, context: str = "") -> list[dict]:
    """Deterministic extraction of dosage entries from reference text.

    Each entry has ``dosage`` (the phrase kept as the node text),
    ``relation`` (INITIAL_DOSAGE or SPECIFIC_DOSAGE) and optional
    ``age_specific``, ``administration`` and ``indication`` strings.

    Rules: a leading route word (own line, or the route/context key) sets
    the administration; a segment with an age-worded prefix before a colon
    is an initial dose for that band; the first bare dose phrase is the
    initial dose; phrases introduced by a conditional clause are specific
    doses carrying the clause as their indication; later bare phrases are
    specific doses.
    """
    administration = context.strip().lower() if context.strip().lower() in ROUTE_WORDS else None
    body = text
    first_line, _, rest = text.partition("\n")
    if first_line.strip().lower() in ROUTE_WORDS:
        administration = first_line.strip().lower()
        body = rest

    entries: list[dict] = []
    saw_initial = False
    for segment in _segments(body):
        age_specific = None
        indication = None
        phrase = segment
        relation = None
        prefix, colon, suffix = segment.partition(":")
        if colon and suffix.strip():
            prefix = prefix.strip()
            if prefix.lower() in ROUTE_WORDS:
                administration = prefix.lower()
                phrase = suffix.strip()
            elif looks_like_age_text(prefix):
                age_specific = prefix.lower()
                phrase = suffix.strip()
                relation = "INITIAL_DOSAGE"
            elif _is_conditional(prefix):
                indication = prefix.lower()
                phrase = suffix.strip()
                relation = "SPECIFIC_DOSAGE"
        if parse_dose_quantity(phrase) is None:
            continue
        if relation is None:
            if _is_conditional(phrase):
                relation = "SPECIFIC_DOSAGE"
            elif not saw_initial:
                relation = "INITIAL_DOSAGE"
            else:
                relation = "SPECIFIC_DOSAGE"
        if relation == "INITIAL_DOSAGE":
            saw_initial = True
        entry: dict = {"dosage": phrase, "relation": relation}
        if age_specific:
            entry["age_specific"] = age_specific
        if administration:
            entry["administration"] = administration
        if indication:
            entry["indication"] = indication
        entries.append(entry)
    return entries
