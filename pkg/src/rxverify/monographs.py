"""Drug monograph ingest: load, clean, normalize and summarize reference texts.

A monograph file is a JSON map of ingredient name to a nested dosage map
(age group -> disease -> route/context -> text) plus an optional ``usages``
map of disease name to ICD-10 code strings.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path

from .core import AgeGroup, Icd10Code, parse_icd10
from .errors import MalformedCode, ParseError, SchemaError

logger = logging.getLogger(__name__)

# Characters stripped outright by clean_text.
_DAGGERS = "†‡"  # dagger, double dagger
_MULTISPACE_RE = re.compile(r" {2,}")
_LINE_EDGE_SPACE_RE = re.compile(r" *\n *")

# Dash variants unified to the ASCII hyphen.
_DASHES = {
    "‒": "-",  # figure dash
    "–": "-",  # en dash
    "—": "-",  # em dash
    "−": "-",  # minus sign
}

_MCG_RE = re.compile(
    r"(?P<a>\d+(?:\.\d+)?)(?:\s*-\s*(?P<b>\d+(?:\.\d+)?))?\s*(?P<unit>mcg|µg|μg|ug)\b",
    re.IGNORECASE,
)


def clean_text(text: str) -> str:
    """Remove tabs and daggers, keep newlines, collapse runs of spaces."""
    out = text.replace("\t", " ")
    for ch in _DAGGERS:
        out = out.replace(ch, "")
    out = _MULTISPACE_RE.sub(" ", out)
    out = _LINE_EDGE_SPACE_RE.sub("\n", out)
    return out.strip(" ")


def standardize_hyphens(text: str) -> str:
    """Replace en/em dashes (and friends) with the ASCII hyphen."""
    for src, dst in _DASHES.items():
        text = text.replace(src, dst)
    return text


def _format_mg(value: Decimal) -> str:
    if value == value.to_integral_value():
        return str(value.quantize(Decimal(1)))
    return format(value.normalize(), "f")


def convert_mcg_to_mg(text: str) -> str:
    """Rewrite every microgram quantity as the equivalent milligram quantity.

    Only unit tokens adjacent to a number are touched; both endpoints of a
    range convert.  Values are divided by 1000 and rendered without
    trailing zeros, so the operation is idempotent (no microgram token
    survives next to a number).
    """

    def repl(m: re.Match) -> str:
        a = Decimal(m.group("a")) / 1000
        if m.group("b") is not None:
            b = Decimal(m.group("b")) / 1000
            return f"{_format_mg(a)}-{_format_mg(b)} mg"
        return f"{_format_mg(a)} mg"

    return _MCG_RE.sub(repl, text)


def normalize_dosage_text(text: str) -> str:
    """Full cleaning pipeline applied to every dosage text on load."""
    return convert_mcg_to_mg(standardize_hyphens(clean_text(text)))


@dataclass
class DrugMonograph:
    """One ingredient's dosage reference and optional coded usages."""

    ingredient: str
    # age group -> disease name -> route/context -> cleaned text
    dosage: dict[AgeGroup, dict[str, dict[str, str]]]
    # (disease name, parsed codes) pairs, file order preserved
    usages: tuple[tuple[str, tuple[Icd10Code, ...]], ...] = ()

    def diseases(self) -> list[str]:
        """Distinct disease names across age groups, first-seen order."""
        seen: dict[str, None] = {}
        for by_disease in self.dosage.values():
            for name in by_disease:
                seen.setdefault(name.lower(), None)
        return list(seen)


@dataclass
class CorpusStats:
    n_ingredients: int
    n_adult: int
    n_pediatric: int
    description_word_counts: list[int]
    versatility: dict[str, int]

    def mean_versatility(self) -> float:
        if not self.versatility:
            return 0.0
        return sum(self.versatility.values()) / len(self.versatility)


_AGE_LABELS = {
    AgeGroup.PEDIATRIC: "Pediatric Patients",
    AgeGroup.ADULT: "Adults",
}


def _age_group_for_label(label: str, path: str) -> AgeGroup:
    low = label.lower()
    if "pediatric" in low or "child" in low:
        return AgeGroup.PEDIATRIC
    if "adult" in low:
        return AgeGroup.ADULT
    raise SchemaError(f"{path}: unrecognized age-group label {label!r}")


def _parse_usages(ingredient: str, raw: object, path: str) -> tuple[tuple[str, tuple[Icd10Code, ...]], ...]:
    if not isinstance(raw, dict):
        raise SchemaError(f"{path}: usages for {ingredient!r} must be an object")
    pairs = []
    for disease, codes in raw.items():
        if not isinstance(codes, list) or not all(isinstance(c, str) for c in codes):
            raise SchemaError(f"{path}: usages[{disease!r}] must be a list of strings")
        parsed = []
        for code in codes:
            try:
                parsed.append(parse_icd10(code))
            except MalformedCode:
                logger.warning("skipping malformed ICD-10 code %r under %s/%s", code, ingredient, disease)
        pairs.append((disease, tuple(parsed)))
    return tuple(pairs)


def load_monographs(path: str | Path) -> list[DrugMonograph]:
    """Load and normalize a monograph JSON file.

    Every dosage text runs through the cleaning pipeline (tab/dagger
    removal, hyphen unification, microgram-to-milligram conversion).
    Raises ParseError for unreadable JSON and SchemaError for structural
    problems, both carrying the file path.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise SchemaError(f"{path}: top level must be an object keyed by ingredient")

    monographs = []
    for ingredient, entry in raw.items():
        if not isinstance(entry, dict):
            raise SchemaError(f"{path}: entry for {ingredient!r} must be an object")
        if "dosage" not in entry or not isinstance(entry["dosage"], dict):
            raise SchemaError(f"{path}: entry for {ingredient!r} needs a 'dosage' object")
        dosage: dict[AgeGroup, dict[str, dict[str, str]]] = {}
        for label, by_disease in entry["dosage"].items():
            group = _age_group_for_label(label, f"{path}[{ingredient}]")
            if not isinstance(by_disease, dict):
                raise SchemaError(f"{path}: dosage[{label!r}] for {ingredient!r} must be an object")
            diseases: dict[str, dict[str, str]] = {}
            for disease, by_route in by_disease.items():
                if not isinstance(by_route, dict):
                    raise SchemaError(
                        f"{path}: dosage[{label!r}][{disease!r}] for {ingredient!r} must be an object"
                    )
                routes: dict[str, str] = {}
                for route, text in by_route.items():
                    if not isinstance(text, str):
                        raise SchemaError(
                            f"{path}: dosage[{label!r}][{disease!r}][{route!r}] must be a string"
                        )
                    routes[route] = normalize_dosage_text(text)
                diseases[disease] = routes
            dosage[group] = diseases
        usages = ()
        if "usages" in entry:
            usages = _parse_usages(ingredient, entry["usages"], str(path))
        name = " ".join(ingredient.strip().lower().split())
        monographs.append(DrugMonograph(ingredient=name, dosage=dosage, usages=usages))
    return monographs


def monograph_to_dict(monograph: DrugMonograph) -> dict:
    entry: dict = {
        "dosage": {
            _AGE_LABELS[group]: {
                disease: dict(routes) for disease, routes in by_disease.items()
            }
            for group, by_disease in monograph.dosage.items()
        }
    }
    if monograph.usages:
        entry["usages"] = {
            disease: [code.raw for code in codes] for disease, codes in monograph.usages
        }
    return entry


def save_monographs(monographs: list[DrugMonograph], path: str | Path) -> None:
    """Write monographs back in the same JSON shape they load from."""
    payload = {m.ingredient: monograph_to_dict(m) for m in monographs}
    Path(path).write_text(
        json.dumps(payload, indent=4, ensure_ascii=False) + "\n", encoding="utf-8"
    )


def compute_stats(monographs: list[DrugMonograph]) -> CorpusStats:
    """Corpus-level counts used by the ingest report.

    A monograph counts toward an age group when it has at least one
    disease entry under it.  The description word count for an ingredient
    sums whitespace-separated words across all of its dosage texts, and
    versatility is the number of distinct disease names across age groups.
    """
    n_adult = 0
    n_pediatric = 0
    word_counts = []
    versatility = {}
    for m in monographs:
        if m.dosage.get(AgeGroup.ADULT):
            n_adult += 1
        if m.dosage.get(AgeGroup.PEDIATRIC):
            n_pediatric += 1
        words = 0
        for by_disease in m.dosage.values():
            for routes in by_disease.values():
                for text in routes.values():
                    words += len(text.split())
        word_counts.append(words)
        versatility[m.ingredient] = len(m.diseases())
    return CorpusStats(
        n_ingredients=len(monographs),
        n_adult=n_adult,
        n_pediatric=n_pediatric,
        description_word_counts=word_counts,
        versatility=versatility,
    )
