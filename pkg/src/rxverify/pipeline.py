"""Per-ingredient verification pipeline.

For every prescription item the pipeline resolves the ingredient against
the monograph corpus, checks fit of indication (ICD-10 category subset),
and — only when the indication holds — checks fit of dosage against the
knowledge graph.  Each item ends in a binary verdict with a templated
explanation; item-level failures degrade to Unknown/NoInformation entries
rather than aborting the case.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

from .core import (
    AgeGroup,
    Diagnosis,
    DosageFit,
    FitStatus,
    IndicationFit,
    ItemReport,
    PatientProfile,
    PrescriptionCase,
    PrescriptionItem,
    Verdict,
    VerificationReport,
    parse_icd10,
)
from .dosage_graph import DosageGraph, flag_deviation, recommend
from .errors import (
    ExtractionIncomplete,
    GatewayError,
    LmUnavailable,
    MalformedCode,
    ParseError,
    SchemaError,
    UnknownDrug,
)
from .gateway import Gateway
from .icd_match import (
    CodeSource,
    IndicationAssessment,
    MatchMethod,
    extract_codes,
    find_usage_codes,
    fuzzy_match,
    match_indication,
    normalize_name,
)
from .interactions import InteractionIndex, retrieve, summarize
from .monographs import DrugMonograph

logger = logging.getLogger(__name__)


class Provenance(Enum):
    STRUCTURED = "Structured"
    LM_REFORMATTED = "LmReformatted"


@dataclass(frozen=True)
class StructuredExtraction:
    patient: PatientProfile
    items: tuple[PrescriptionItem, ...]
    provenance: Provenance
    case_id: str | None = None


def verdict_of(fi: IndicationFit, fd: DosageFit) -> Verdict:
    """Total decision table over the fit domain.

    Appropriate indication passes unless the dosage deviates; inappropriate
    indication fails outright; unknown indication fails conservatively so a
    pharmacist reviews it.
    """
    if fi is IndicationFit.APPROPRIATE:
        return Verdict.INAPPROPRIATE if fd is DosageFit.DEVIATES else Verdict.APPROPRIATE
    return Verdict.INAPPROPRIATE


def _format_mg(value: Decimal) -> str:
    if value == value.to_integral_value():
        return str(value.quantize(Decimal(1)))
    return format(value.normalize(), "f")


def _categories_phrase(categories) -> str:
    return ", ".join(sorted(categories)) if categories else "none"


def _diagnosis_categories(
    patient: PatientProfile, gateway: Gateway | None
) -> tuple[frozenset[str], dict[str, str]]:
    """Categories across the patient's diagnoses, plus text -> category.

    Uncoded diagnoses are sent through the gateway for code assignment;
    a diagnosis that cannot be coded contributes nothing.
    """
    categories = set()
    by_text: dict[str, str] = {}
    for diagnosis in patient.diagnoses:
        category = None
        if diagnosis.code is not None:
            category = diagnosis.code.category
        elif gateway is not None:
            try:
                response = gateway.complete_template(
                    "diagnosis_codes", {"diagnosis": diagnosis.text}
                )
                codes = extract_codes(response.text)
                if codes:
                    category = codes[0].category
            except GatewayError as exc:
                logger.warning("could not code diagnosis %r: %s", diagnosis.text, exc)
        if category is not None:
            categories.add(category)
            by_text[diagnosis.text] = category
    return frozenset(categories), by_text


def _verify_item(
    item: PrescriptionItem,
    patient: PatientProfile,
    diagnosis_categories: frozenset[str],
    category_by_text: dict[str, str],
    monograph_map: Mapping[str, DrugMonograph],
    graph: DosageGraph | None,
    gateway: Gateway,
    threshold: float,
    match_mode: str,
) -> ItemReport:
    warnings: list[str] = []
    match = fuzzy_match(item.ingredient_name_raw, list(monograph_map), threshold)
    resolved = match.matched_ingredient or normalize_name(item.ingredient_name_raw)
    if match.method is MatchMethod.NONE:
        warnings.append(
            f"ingredient not found in the reference corpus (best similarity {match.score:.2f})"
        )

    source: CodeSource | None = None
    usage_categories: frozenset[str] = frozenset()
    try:
        usage_categories, source = find_usage_codes(resolved, monograph_map, gateway)
    except (LmUnavailable, GatewayError) as exc:
        logger.warning("usage lookup failed for %r: %s", resolved, exc)
        warnings.append("usage codes unavailable")

    assessment = IndicationAssessment(
        ingredient=resolved,
        usage_categories=usage_categories,
        diagnosis_categories=diagnosis_categories,
        label=match_indication(usage_categories, diagnosis_categories, match_mode),
        source=source,
    )
    if assessment.caution:
        warnings.append("usage codes were generated by the language model; verify before acting")

    fi = assessment.label
    fd = DosageFit.NOT_EVALUATED
    explanation: str
    if fi is IndicationFit.APPROPRIATE:
        diagnosed = next(
            (d for d in patient.diagnoses if category_by_text.get(d.text) in usage_categories),
            patient.diagnoses[0] if patient.diagnoses else None,
        )
        baseline = None
        if graph is not None and diagnosed is not None:
            try:
                recommendations = recommend(
                    graph, resolved, patient.age_group, diagnosed.text, patient.age_years, gateway
                )
            except UnknownDrug:
                recommendations = []
                warnings.append("ingredient missing from the dosage graph")
            baseline = next((r for r in recommendations if r.baseline), None)
            if baseline is None and recommendations:
                baseline = recommendations[0]
        if baseline is None:
            fd = DosageFit.NO_INFORMATION
        else:
            fd = flag_deviation(item.strength_mg, baseline.dosage_text)

        matched_note = (
            f" (matched \"{resolved}\", similarity {match.score:.2f})"
            if match.method is MatchMethod.FUZZY
            else ""
        )
        strength = _format_mg(item.strength_mg) if item.strength_mg is not None else "unspecified"
        if fd is DosageFit.WITHIN_BASELINE:
            explanation = (
                f"indication matched{matched_note}: usage categories"
                f" [{_categories_phrase(usage_categories)}] all present in the diagnoses;"
                f" prescribed {strength} mg is within the baseline \"{baseline.dosage_text}\""
            )
        elif fd is DosageFit.DEVIATES:
            explanation = (
                f"indication matched{matched_note}, but the dosage deviates:"
                f" prescribed {strength} mg is outside the baseline \"{baseline.dosage_text}\""
            )
        else:
            explanation = (
                f"indication matched{matched_note}: usage categories"
                f" [{_categories_phrase(usage_categories)}] all present in the diagnoses;"
                " no dosage reference is available for this combination"
            )
            warnings.append("no dosage reference found; dosage not checked")
    elif fi is IndicationFit.INAPPROPRIATE:
        missing = sorted(usage_categories - diagnosis_categories)
        explanation = (
            f"indication mismatch: usage categories [{', '.join(missing)}] are not among the"
            f" diagnosed categories [{_categories_phrase(diagnosis_categories)}];"
            " dosage not evaluated"
        )
    else:
        explanation = (
            "no usage information is available for this ingredient;"
            " flagged as inappropriate pending pharmacist review"
        )
        warnings.append("unknown indication; requires pharmacist review")

    status = FitStatus(fi=fi, fd=fd)
    return ItemReport(
        ingredient=item.ingredient_name_raw,
        status=status,
        verdict=verdict_of(fi, fd),
        explanation=explanation,
        matched_ingredient=match.matched_ingredient,
        warnings=tuple(warnings),
    )


def verify_case(
    case: PrescriptionCase,
    monographs: Sequence[DrugMonograph],
    graph: DosageGraph | None,
    gateway: Gateway,
    interaction_index: InteractionIndex | None = None,
    threshold: float = 0.85,
    match_mode: str = "all",
    interaction_top_k: int = 3,
) -> VerificationReport:
    """Verify every item of a case and assemble the report."""
    monograph_map = {m.ingredient: m for m in monographs}
    diagnosis_categories, category_by_text = _diagnosis_categories(case.patient, gateway)
    per_item = tuple(
        _verify_item(
            item,
            case.patient,
            diagnosis_categories,
            category_by_text,
            monograph_map,
            graph,
            gateway,
            threshold,
            match_mode,
        )
        for item in case.items
    )
    n_ok = sum(1 for r in per_item if r.verdict is Verdict.APPROPRIATE)
    summary = f"{n_ok}/{len(per_item)} items APPROPRIATE"

    interaction_summary = None
    if interaction_index is not None:
        seen = {}
        for report in per_item:
            query = report.matched_ingredient or report.ingredient
            for triplet, _score in retrieve(query, interaction_index, interaction_top_k):
                seen.setdefault(triplet, None)
        interaction_summary = summarize(list(seen), gateway)

    return VerificationReport(
        case_id=case.case_id,
        per_item=per_item,
        summary=summary,
        interaction_summary=interaction_summary,
    )


def verify_batch(
    cases: Sequence[PrescriptionCase],
    monographs: Sequence[DrugMonograph],
    graph: DosageGraph | None,
    gateway: Gateway,
    parallelism: int = 1,
    **kwargs,
) -> list[VerificationReport]:
    """Verify independent cases, optionally concurrently.

    Reports come back in input order regardless of completion order, so
    output bytes do not depend on the parallelism level.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be at least 1")
    if parallelism == 1 or len(cases) <= 1:
        return [verify_case(case, monographs, graph, gateway, **kwargs) for case in cases]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        futures = [
            pool.submit(verify_case, case, monographs, graph, gateway, **kwargs)
            for case in cases
        ]
        return [f.result() for f in futures]


def _decimal_or_none(value) -> Decimal | None:
    if value is None:
        return None
    try:
        return Decimal(str(value))
    except InvalidOperation as exc:
        raise SchemaError(f"bad strength value {value!r}") from exc


def case_from_dict(raw: dict, adult_threshold: float = 18.0) -> PrescriptionCase:
    """Build a case from the JSON wire shape, validating as we go."""
    if not isinstance(raw, dict):
        raise SchemaError("case must be an object")
    try:
        patient_raw = raw["patient"]
        age = float(patient_raw["age_years"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"case is missing patient age: {exc}") from exc
    diagnoses = []
    for entry in patient_raw.get("diagnoses", []):
        code = None
        if entry.get("icd10"):
            try:
                code = parse_icd10(entry["icd10"])
            except MalformedCode:
                logger.warning("ignoring malformed diagnosis code %r", entry["icd10"])
        diagnoses.append(Diagnosis(text=entry.get("text", ""), code=code))
    items = []
    for entry in raw.get("items", []):
        try:
            items.append(
                PrescriptionItem(
                    ingredient_name_raw=entry["ingredient"],
                    brand_text=entry.get("brand"),
                    strength_mg=_decimal_or_none(entry.get("strength_mg")),
                    dose_instruction=entry.get("dose_instruction", ""),
                )
            )
        except (KeyError, ValueError) as exc:
            raise SchemaError(f"bad prescription item {entry!r}: {exc}") from exc
    if not items:
        raise SchemaError("case has no prescription items")
    patient = PatientProfile.build(
        age_years=age,
        diagnoses=tuple(diagnoses),
        notes=patient_raw.get("notes"),
        incomplete=not diagnoses,
        adult_threshold=adult_threshold,
    )
    return PrescriptionCase(
        case_id=str(raw.get("case_id", "case")),
        patient=patient,
        items=tuple(items),
    )


def load_case(path: str | Path, adult_threshold: float = 18.0) -> PrescriptionCase:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from exc
    return case_from_dict(raw, adult_threshold)


def structure_prescription(raw_text: str, gateway: Gateway) -> StructuredExtraction:
    """Turn free prescription text into a structured extraction.

    Already-structured JSON passes through unchanged; anything else goes
    through the gateway's reformatting route (the stub parses the simple
    labeled-line format).  Missing age, diagnoses or items raise
    ExtractionIncomplete naming the gaps.
    """
    stripped = raw_text.lstrip()
    provenance = Provenance.STRUCTURED
    raw: dict | None = None
    if stripped.startswith("{"):
        try:
            raw = json.loads(raw_text)
        except json.JSONDecodeError:
            raw = None
    if raw is None:
        provenance = Provenance.LM_REFORMATTED
        response = gateway.complete_template("prescription_structuring", {"text": raw_text})
        try:
            raw = json.loads(response.text)
        except json.JSONDecodeError as exc:
            raise ExtractionIncomplete(["age", "diagnoses", "items"]) from exc

    missing = []
    patient_raw = raw.get("patient", {})
    if "age_years" not in patient_raw:
        missing.append("age")
    if not patient_raw.get("diagnoses"):
        missing.append("diagnoses")
    if not raw.get("items"):
        missing.append("items")
    if missing:
        raise ExtractionIncomplete(missing)
    case = case_from_dict(raw)
    return StructuredExtraction(
        patient=case.patient,
        items=case.items,
        provenance=provenance,
        case_id=raw.get("case_id"),
    )


def report_to_dict(report: VerificationReport) -> dict:
    out: dict = {
        "case_id": report.case_id,
        "items": [
            {
                "ingredient": item.ingredient,
                "matched_ingredient": item.matched_ingredient,
                "fit_indication": item.status.fi.value,
                "fit_dosage": item.status.fd.value,
                "verdict": item.verdict.value,
                "explanation": item.explanation,
                "warnings": list(item.warnings),
            }
            for item in report.per_item
        ],
        "summary": report.summary,
    }
    if report.interaction_summary is not None:
        out["interaction_summary"] = report.interaction_summary
    return out


def render_report_text(report: VerificationReport) -> str:
    lines = [f"Case {report.case_id}: {report.summary}"]
    for i, item in enumerate(report.per_item, start=1):
        lines.append(f"{i}. {item.ingredient} - {item.verdict.value}")
        lines.append(f"   {item.explanation}")
        for warning in item.warnings:
            lines.append(f"   warning: {warning}")
    if report.interaction_summary:
        lines.append("Interaction facts:")
        lines.extend(f"   {line}" for line in report.interaction_summary.splitlines())
    return "\n".join(lines)
