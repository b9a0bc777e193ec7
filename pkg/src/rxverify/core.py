"""Core domain vocabulary: ICD-10 codes, age groups, prescriptions, verdicts.

Everything downstream (ingest, matching, graph retrieval, the pipeline)
speaks in terms of these types.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from enum import Enum

from .errors import MalformedCode

# An ICD-10 category is the three leading characters of a code: one
# alphabetical letter followed by exactly two digits ("E11", "I10").
IcdCategory = str

CATEGORY_RE = re.compile(r"^[A-Z][0-9]{2}$")

DEFAULT_ADULT_THRESHOLD = 18


class AgeGroup(Enum):
    PEDIATRIC = "Pediatric"
    ADULT = "Adult"

    @classmethod
    def from_age(cls, age_years: float, adult_threshold: float = DEFAULT_ADULT_THRESHOLD) -> "AgeGroup":
        if age_years < 0:
            raise ValueError(f"age must be non-negative, got {age_years}")
        return cls.ADULT if age_years >= adult_threshold else cls.PEDIATRIC


@dataclass(frozen=True)
class Icd10Code:
    """A parsed ICD-10 code.

    ``raw`` is the normalized rendering (uppercased, stripped), ``category``
    its three-character category, ``subcode`` whatever follows the category
    (without a leading dot), or None.
    """

    raw: str
    category: IcdCategory
    subcode: str | None = None

    def __post_init__(self):
        if not CATEGORY_RE.match(self.category):
            raise MalformedCode(f"invalid ICD-10 category: {self.category!r}")


def parse_icd10(text: str) -> Icd10Code:
    """Parse an ICD-10 code string such as "E11.9" or "i10".

    The letter is uppercased and surrounding whitespace stripped.  Raises
    MalformedCode when the first three characters are not letter + two
    digits (so "C4A"-style alphanumeric extensions are rejected).
    """
    raw = text.strip().upper()
    if len(raw) < 3:
        raise MalformedCode(f"ICD-10 code too short: {text!r}")
    category = raw[:3]
    if not CATEGORY_RE.match(category):
        raise MalformedCode(f"ICD-10 code must start with letter + two digits: {text!r}")
    rest = raw[3:]
    if rest.startswith("."):
        rest = rest[1:]
    return Icd10Code(raw=raw, category=category, subcode=rest or None)


def icd_category_equal(a: str, b: str) -> bool:
    """True when two code strings share the same three-character category."""
    return parse_icd10(a).category == parse_icd10(b).category


class IndicationFit(Enum):
    APPROPRIATE = "Appropriate"
    INAPPROPRIATE = "Inappropriate"
    UNKNOWN = "Unknown"


class DosageFit(Enum):
    WITHIN_BASELINE = "WithinBaseline"
    DEVIATES = "Deviates"
    NO_INFORMATION = "NoInformation"
    NOT_EVALUATED = "NotEvaluated"


class Verdict(Enum):
    APPROPRIATE = "APPROPRIATE"
    INAPPROPRIATE = "INAPPROPRIATE"


@dataclass(frozen=True)
class FitStatus:
    """Joint indication/dosage assessment for one prescription item.

    An item whose indication is inappropriate never gets a dosage
    assessment, so ``fi == INAPPROPRIATE`` forces ``fd == NOT_EVALUATED``.
    """

    fi: IndicationFit
    fd: DosageFit

    def __post_init__(self):
        if self.fi is IndicationFit.INAPPROPRIATE and self.fd is not DosageFit.NOT_EVALUATED:
            raise ValueError("inappropriate indication requires fd=NotEvaluated")


@dataclass(frozen=True)
class Diagnosis:
    text: str
    code: Icd10Code | None = None


@dataclass(frozen=True)
class PatientProfile:
    age_years: float
    age_group: AgeGroup
    diagnoses: tuple[Diagnosis, ...]
    notes: str | None = None
    incomplete: bool = False

    def __post_init__(self):
        if self.age_years < 0:
            raise ValueError("age must be non-negative")
        if not self.diagnoses and not self.incomplete:
            raise ValueError("diagnoses may be empty only when the case is marked incomplete")

    @classmethod
    def build(
        cls,
        age_years: float,
        diagnoses: tuple[Diagnosis, ...] | list[Diagnosis],
        notes: str | None = None,
        incomplete: bool = False,
        adult_threshold: float = DEFAULT_ADULT_THRESHOLD,
    ) -> "PatientProfile":
        """Construct a profile with the age group derived from the age."""
        return cls(
            age_years=age_years,
            age_group=AgeGroup.from_age(age_years, adult_threshold),
            diagnoses=tuple(diagnoses),
            notes=notes,
            incomplete=incomplete,
        )


@dataclass(frozen=True)
class PrescriptionItem:
    ingredient_name_raw: str
    brand_text: str | None = None
    strength_mg: Decimal | None = None
    dose_instruction: str = ""

    def __post_init__(self):
        if not self.ingredient_name_raw.strip():
            raise ValueError("ingredient name must be non-empty")


@dataclass(frozen=True)
class PrescriptionCase:
    case_id: str
    patient: PatientProfile
    items: tuple[PrescriptionItem, ...]

    def __post_init__(self):
        if not self.items:
            raise ValueError("a case must contain at least one item")


@dataclass(frozen=True)
class ItemReport:
    ingredient: str
    status: FitStatus
    verdict: Verdict
    explanation: str
    matched_ingredient: str | None = None
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class VerificationReport:
    case_id: str
    per_item: tuple[ItemReport, ...]
    summary: str
    interaction_summary: str | None = None


_LABELED_ITEM_FIELDS = ("ingredient", "brand", "strength", "instruction")


def parse_strength_mg(text: str) -> Decimal | None:
    """Parse a strength field such as "300 mg" or "50" into milligrams."""
    m = re.search(r"\d+(?:\.\d+)?", text)
    if not m:
        return None
    try:
        return Decimal(m.group(0))
    except InvalidOperation:  # pragma: no cover - regex guarantees a number
        return None


def parse_labeled_case(text: str) -> dict:
    """Parse the simple labeled-line prescription format into a case dict.

    The format is one ``key: value`` pair per line.  Recognized keys are
    ``case``, ``age``, ``diagnosis`` (repeatable, ``text | code``) and
    ``item`` (repeatable, ``ingredient | brand | strength | instruction``).
    Unknown keys are ignored.  Returns the same dict shape the JSON case
    files use; validation is left to the caller.
    """
    out: dict = {"patient": {"diagnoses": []}, "items": []}
    for line in text.splitlines():
        line = line.strip()
        if not line or ":" not in line:
            continue
        key, _, value = line.partition(":")
        key = key.strip().lower()
        value = value.strip()
        if key == "case":
            out["case_id"] = value
        elif key == "age":
            try:
                out["patient"]["age_years"] = float(value)
            except ValueError:
                continue
        elif key == "diagnosis":
            dtext, _, code = value.partition("|")
            diag = {"text": dtext.strip()}
            if code.strip():
                diag["icd10"] = code.strip()
            out["patient"]["diagnoses"].append(diag)
        elif key == "item":
            parts = [p.strip() for p in value.split("|")]
            item: dict = {}
            for name, part in zip(_LABELED_ITEM_FIELDS, parts):
                if not part:
                    continue
                if name == "strength":
                    strength = parse_strength_mg(part)
                    if strength is not None:
                        item["strength_mg"] = float(strength)
                elif name == "instruction":
                    item["dose_instruction"] = part
                else:
                    item[name] = part
            if item:
                out["items"].append(item)
    return out
