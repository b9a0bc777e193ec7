"""Drug-disease-dosage knowledge graph: construction, persistence, retrieval.

Nodes are Drug, Disease and Dosage; edges are TREATS (drug to disease,
carrying the age group) and INITIAL_DOSAGE / SPECIFIC_DOSAGE (disease to
dosage, optionally carrying an age band, administration route and
indication).  Disease and dosage nodes are scoped to one drug and age
group, so age-specific retrieval can never leak across subtrees; drug
nodes are shared.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING

from .core import AgeGroup, DosageFit
from .dose_text import AgeConstraint, parse_age_constraint, parse_dose_quantity
from .errors import (
    EmptyCorpus,
    GatewayError,
    NoCandidates,
    ParseError,
    SchemaError,
    UnknownDrug,
    UnparseableAgeText,
)
from .icd_match import normalize_name

if TYPE_CHECKING:  # pragma: no cover
    from .gateway import Gateway
    from .monographs import DrugMonograph

logger = logging.getLogger(__name__)

NODES_FILE = "nodes.json"
RELATIONSHIPS_FILE = "relationships.json"

_AGE_GROUP_LABELS = {AgeGroup.PEDIATRIC: "pediatric", AgeGroup.ADULT: "adults"}
_LABEL_AGE_GROUPS = {v: k for k, v in _AGE_GROUP_LABELS.items()}


class NodeType(Enum):
    DRUG = "Drug"
    DISEASE = "Disease"
    DOSAGE = "Dosage"


class EdgeType(Enum):
    TREATS = "TREATS"
    INITIAL_DOSAGE = "INITIAL_DOSAGE"
    SPECIFIC_DOSAGE = "SPECIFIC_DOSAGE"


class RecommendationKind(Enum):
    INITIAL = "Initial"
    SPECIFIC = "Specific"


@dataclass
class KgNode:
    id: int
    name: str
    type: NodeType
    extra: dict = field(default_factory=dict)


@dataclass
class KgEdge:
    start_id: int
    end_id: int
    type: EdgeType
    age_group: AgeGroup | None = None
    age_specific: str | None = None
    administration: str | None = None
    indication: str | None = None
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class DoseRecommendation:
    dosage_text: str
    edge_type: RecommendationKind
    administration: str | None
    matched_age: AgeConstraint | None

    @property
    def baseline(self) -> bool:
        return self.edge_type is RecommendationKind.INITIAL


class DosageGraph:
    """In-memory graph with id-based adjacency indexes."""

    def __init__(self, nodes: list[KgNode] | None = None, edges: list[KgEdge] | None = None):
        self.nodes: list[KgNode] = []
        self.edges: list[KgEdge] = []
        self._by_id: dict[int, KgNode] = {}
        self._drug_by_name: dict[str, KgNode] = {}
        self._out: dict[int, list[KgEdge]] = {}
        for node in nodes or []:
            self.add_node(node)
        for edge in edges or []:
            self.add_edge(edge)

    def add_node(self, node: KgNode) -> KgNode:
        if node.id in self._by_id:
            raise SchemaError(f"duplicate node id {node.id}")
        self.nodes.append(node)
        self._by_id[node.id] = node
        if node.type is NodeType.DRUG:
            self._drug_by_name[normalize_name(node.name)] = node
        return node

    def add_edge(self, edge: KgEdge) -> KgEdge:
        for endpoint in (edge.start_id, edge.end_id):
            if endpoint not in self._by_id:
                raise SchemaError(f"edge references missing node id {endpoint}")
        start = self._by_id[edge.start_id]
        end = self._by_id[edge.end_id]
        expected = {
            EdgeType.TREATS: (NodeType.DRUG, NodeType.DISEASE),
            EdgeType.INITIAL_DOSAGE: (NodeType.DISEASE, NodeType.DOSAGE),
            EdgeType.SPECIFIC_DOSAGE: (NodeType.DISEASE, NodeType.DOSAGE),
        }[edge.type]
        if (start.type, end.type) != expected:
            raise SchemaError(
                f"{edge.type.value} edge must connect {expected[0].value} to {expected[1].value},"
                f" got {start.type.value} to {end.type.value}"
            )
        self.edges.append(edge)
        self._out.setdefault(edge.start_id, []).append(edge)
        return edge

    def node(self, node_id: int) -> KgNode:
        return self._by_id[node_id]

    def drug(self, ingredient: str) -> KgNode:
        node = self._drug_by_name.get(normalize_name(ingredient))
        if node is None:
            raise UnknownDrug(f"no Drug node for {ingredient!r}")
        return node

    def out_edges(self, node_id: int) -> list[KgEdge]:
        return self._out.get(node_id, [])


def build_graph(monographs: "list[DrugMonograph]", gateway: "Gateway") -> DosageGraph:
    """Construct the graph by walking ingredient, age group, disease.

    For every disease the gateway is asked to extract dosage entries from
    the reference text (the offline stub applies a rule-based extraction
    of leading dose phrases); each entry becomes a Dosage node plus an
    INITIAL_DOSAGE or SPECIFIC_DOSAGE edge.  Gateway failures abort the
    current disease only — a partial graph is still a valid graph.
    Node ids are assigned sequentially from 1 in traversal order, and
    duplicate names are merged within one drug + age group scope.
    """
    if not monographs:
        raise EmptyCorpus("cannot build a graph from an empty corpus")
    graph = DosageGraph()
    next_id = 1

    def new_node(name: str, node_type: NodeType) -> KgNode:
        nonlocal next_id
        node = graph.add_node(KgNode(id=next_id, name=name, type=node_type))
        next_id += 1
        return node

    for monograph in monographs:
        try:
            drug = graph.drug(monograph.ingredient)
        except UnknownDrug:
            drug = new_node(monograph.ingredient, NodeType.DRUG)
        scoped_nodes: dict[tuple, KgNode] = {}
        for age_group, by_disease in monograph.dosage.items():
            for disease, by_route in by_disease.items():
                disease_name = disease.lower()
                disease_key = (age_group, disease_name, NodeType.DISEASE)
                disease_node = scoped_nodes.get(disease_key)
                if disease_node is None:
                    disease_node = new_node(disease_name, NodeType.DISEASE)
                    scoped_nodes[disease_key] = disease_node
                    graph.add_edge(
                        KgEdge(
                            start_id=drug.id,
                            end_id=disease_node.id,
                            type=EdgeType.TREATS,
                            age_group=age_group,
                        )
                    )
                for route, text in by_route.items():
                    try:
                        response = gateway.complete_template(
                            "dosage_extraction",
                            {"disease": disease, "context": route, "text": text},
                        )
                        entries = json.loads(response.text)
                    except GatewayError as exc:
                        logger.warning(
                            "skipping %s/%s/%s: gateway failed: %s",
                            monograph.ingredient, disease, route, exc,
                        )
                        continue
                    except json.JSONDecodeError as exc:
                        logger.warning(
                            "skipping %s/%s/%s: unparseable extraction: %s",
                            monograph.ingredient, disease, route, exc,
                        )
                        continue
                    for entry in entries:
                        phrase = entry.get("dosage", "").strip()
                        relation = entry.get("relation")
                        if not phrase or relation not in (
                            EdgeType.INITIAL_DOSAGE.value,
                            EdgeType.SPECIFIC_DOSAGE.value,
                        ):
                            continue
                        dosage_key = (age_group, phrase, NodeType.DOSAGE)
                        dosage_node = scoped_nodes.get(dosage_key)
                        if dosage_node is None:
                            dosage_node = new_node(phrase, NodeType.DOSAGE)
                            scoped_nodes[dosage_key] = dosage_node
                        graph.add_edge(
                            KgEdge(
                                start_id=disease_node.id,
                                end_id=dosage_node.id,
                                type=EdgeType(relation),
                                age_specific=entry.get("age_specific"),
                                administration=entry.get("administration"),
                                indication=entry.get("indication"),
                            )
                        )
    return graph


def _node_to_dict(node: KgNode) -> dict:
    out = {"id": node.id, "name": node.name, "type": node.type.value}
    out.update(node.extra)
    return out


def _edge_to_dict(edge: KgEdge) -> dict:
    out: dict = {"start_id": edge.start_id, "end_id": edge.end_id, "type": edge.type.value}
    if edge.age_group is not None:
        out["age_group"] = _AGE_GROUP_LABELS[edge.age_group]
    if edge.age_specific is not None:
        out["age_specific"] = edge.age_specific
    if edge.administration is not None:
        out["administration"] = edge.administration
    if edge.indication is not None:
        out["indication"] = edge.indication
    out.update(edge.extra)
    return out


def save_graph(graph: DosageGraph, directory: str | Path) -> None:
    """Write nodes.json and relationships.json (stable field order)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    nodes = [_node_to_dict(n) for n in graph.nodes]
    edges = [_edge_to_dict(e) for e in graph.edges]
    (directory / NODES_FILE).write_text(
        json.dumps(nodes, indent=4, ensure_ascii=False) + "\n", encoding="utf-8"
    )
    (directory / RELATIONSHIPS_FILE).write_text(
        json.dumps(edges, indent=4, ensure_ascii=False) + "\n", encoding="utf-8"
    )


def _load_json(path: Path) -> list:
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(raw, list):
        raise SchemaError(f"{path}: top level must be a list")
    return raw


def load_graph(directory: str | Path) -> DosageGraph:
    """Read a graph directory back; unknown fields are preserved."""
    directory = Path(directory)
    graph = DosageGraph()
    for row in _load_json(directory / NODES_FILE):
        try:
            node = KgNode(
                id=row["id"],
                name=row["name"],
                type=NodeType(row["type"]),
                extra={k: v for k, v in row.items() if k not in ("id", "name", "type")},
            )
        except (KeyError, ValueError) as exc:
            raise SchemaError(f"{directory / NODES_FILE}: bad node row {row!r}: {exc}") from exc
        graph.add_node(node)
    known = ("start_id", "end_id", "type", "age_group", "age_specific", "administration", "indication")
    for row in _load_json(directory / RELATIONSHIPS_FILE):
        try:
            age_group = _LABEL_AGE_GROUPS[row["age_group"]] if "age_group" in row else None
            edge = KgEdge(
                start_id=row["start_id"],
                end_id=row["end_id"],
                type=EdgeType(row["type"]),
                age_group=age_group,
                age_specific=row.get("age_specific"),
                administration=row.get("administration"),
                indication=row.get("indication"),
                extra={k: v for k, v in row.items() if k not in known},
            )
        except (KeyError, ValueError) as exc:
            raise SchemaError(
                f"{directory / RELATIONSHIPS_FILE}: bad edge row {row!r}: {exc}"
            ) from exc
        graph.add_edge(edge)
    return graph


def find_diseases(graph: DosageGraph, ingredient: str, age_group: AgeGroup) -> list[KgNode]:
    """Disease nodes the drug treats within one age group, edge order."""
    drug = graph.drug(ingredient)
    return [
        graph.node(edge.end_id)
        for edge in graph.out_edges(drug.id)
        if edge.type is EdgeType.TREATS and edge.age_group is age_group
    ]


def match_disease(diagnosed: str, candidates: list[str], gateway: "Gateway") -> str:
    """Resolve a diagnosis against candidate disease names.

    A normalized exact or substring match is taken directly; otherwise the
    gateway picks the closest candidate (the stub uses maximal
    token-overlap, ties broken lexicographically, and a single candidate
    is always taken).
    """
    if not candidates:
        raise NoCandidates(f"no candidate diseases for {diagnosed!r}")
    norm_diagnosed = normalize_name(diagnosed)
    for candidate in candidates:
        norm_candidate = normalize_name(candidate)
        if norm_candidate == norm_diagnosed:
            return candidate
        if norm_candidate in norm_diagnosed or norm_diagnosed in norm_candidate:
            return candidate
    response = gateway.complete_template(
        "disease_match",
        {"diagnosed": diagnosed, "candidates": "\n".join(candidates)},
    )
    answer = response.text.strip()
    for candidate in candidates:
        if normalize_name(candidate) == normalize_name(answer):
            return candidate
    logger.warning("gateway picked %r which is not a candidate; using first", answer)
    return candidates[0]


def _sort_key(edge: KgEdge, constraint: AgeConstraint | None, position: int):
    width = constraint.width() if constraint is not None else float("inf")
    kind_rank = 0 if edge.type is EdgeType.INITIAL_DOSAGE else 1
    return (width, kind_rank, position)


def find_dosages(
    graph: DosageGraph,
    ingredient: str,
    disease: str,
    patient_age: float,
    age_group: AgeGroup | None = None,
) -> list[DoseRecommendation]:
    """Dosage recommendations for a resolved disease at a given age.

    Edges whose age constraint is absent or contains the age qualify; an
    unparseable constraint matches any age within the group, with a
    warning.  The list is ordered narrowest constraint first, then initial
    before specific, then insertion order.
    """
    if age_group is None:
        age_group = AgeGroup.from_age(patient_age)
    disease_node = None
    for node in find_diseases(graph, ingredient, age_group):
        if normalize_name(node.name) == normalize_name(disease):
            disease_node = node
            break
    if disease_node is None:
        return []
    qualified = []
    for position, edge in enumerate(graph.out_edges(disease_node.id)):
        if edge.type not in (EdgeType.INITIAL_DOSAGE, EdgeType.SPECIFIC_DOSAGE):
            continue
        constraint = None
        if edge.age_specific is not None:
            try:
                constraint = parse_age_constraint(edge.age_specific)
            except UnparseableAgeText:
                logger.warning(
                    "unparseable age wording %r on %s; treating as matching any age",
                    edge.age_specific, ingredient,
                )
                constraint = None
            else:
                if not constraint.contains(patient_age):
                    continue
        qualified.append((edge, constraint, position))
    qualified.sort(key=lambda item: _sort_key(*item))
    return [
        DoseRecommendation(
            dosage_text=graph.node(edge.end_id).name,
            edge_type=(
                RecommendationKind.INITIAL
                if edge.type is EdgeType.INITIAL_DOSAGE
                else RecommendationKind.SPECIFIC
            ),
            administration=edge.administration,
            matched_age=constraint,
        )
        for edge, constraint, _ in qualified
    ]


def flag_deviation(prescribed_mg: Decimal | None, baseline_text: str) -> DosageFit:
    """Compare a prescribed strength against a baseline dosage text.

    The first "N mg" or "N-M mg" occurrence in the baseline is the
    reference; a single value must match exactly, a range contains the
    strength inclusively.  Weight-based baselines (mg/kg) and missing
    quantities on either side yield NoInformation.
    """
    if prescribed_mg is None:
        return DosageFit.NO_INFORMATION
    quantity = parse_dose_quantity(baseline_text)
    if quantity is None or quantity.per_kg:
        return DosageFit.NO_INFORMATION
    return DosageFit.WITHIN_BASELINE if quantity.contains(prescribed_mg) else DosageFit.DEVIATES


def recommend(
    graph: DosageGraph,
    ingredient: str,
    age_group: AgeGroup,
    diagnosed: str,
    patient_age: float,
    gateway: "Gateway",
) -> list[DoseRecommendation]:
    """End-to-end retrieval: disease resolution then dosage lookup.

    Returns an empty list when the drug has no diseases under the age
    group or no dosage edge matches the age — no information, rather than
    an error.  UnknownDrug propagates.
    """
    diseases = find_diseases(graph, ingredient, age_group)
    if not diseases:
        return []
    chosen = match_disease(diagnosed, [node.name for node in diseases], gateway)
    return find_dosages(graph, ingredient, chosen, patient_age, age_group)
