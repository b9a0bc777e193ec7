"""Command-line interface.

Subcommands: ingest, build-kg, verify, evaluate, retrieve-dose,
interactions.  Every command prints JSON to stdout (``--pretty`` switches
to a human-readable rendering) and exits 0 on success, 2 on input or
schema problems, 3 on gateway configuration problems and 4 on internal
errors.  Machine-readable error objects go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import dosage_graph, evaluation, interactions, monographs, pipeline
from .core import AgeGroup
from .errors import GatewayError, RxVerifyError
from .gateway import Gateway, HttpProvider, load_profiles, load_static_mapping, stub_gateway

logger = logging.getLogger(__name__)

CONFIG_ENV_VAR = "RXVERIFY_CONFIG"

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_GATEWAY = 3
EXIT_INTERNAL = 4


def _load_config(path: str | None) -> dict:
    path = path or os.environ.get(CONFIG_ENV_VAR)
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _build_gateway(args: argparse.Namespace, config: dict) -> Gateway:
    provider_cfg = dict(config.get("provider", {}))
    kind = getattr(args, "provider", None) or provider_cfg.get("kind", "stub")
    if kind == "stub":
        mapping_path = getattr(args, "mapping", None) or provider_cfg.get("mapping")
        mapping = load_static_mapping(mapping_path) if mapping_path else None
        return stub_gateway(mapping=mapping)
    if kind == "http":
        try:
            import httpx
        except ImportError as exc:  # pragma: no cover - optional runtime path
            raise GatewayError("http provider requires the httpx package") from exc

        endpoint = provider_cfg.get("endpoint", "")
        model = provider_cfg.get("model", "")
        api_key_env = provider_cfg.get("api_key_env", "RXVERIFY_API_KEY")

        def send(payload: dict) -> str:  # pragma: no cover - network path
            response = httpx.post(
                payload.pop("endpoint"),
                json=payload,
                headers={"Authorization": f"Bearer {os.environ[api_key_env]}"},
                timeout=60.0,
            )
            response.raise_for_status()
            return response.json()["text"]

        profile = None
        profile_name = provider_cfg.get("profile")
        if profile_name:
            profiles = load_profiles(provider_cfg.get("profiles_path"))
            if profile_name not in profiles:
                raise GatewayError(f"unknown model profile {profile_name!r}")
            profile = profiles[profile_name]
        provider = HttpProvider(endpoint=endpoint, model=model, send=send, api_key_env=api_key_env)
        return Gateway(provider, profile=profile)
    raise GatewayError(f"unknown provider kind {kind!r}")


def _emit(payload, pretty_text: str | None, pretty: bool) -> None:
    if pretty and pretty_text is not None:
        print(pretty_text)
    else:
        print(json.dumps(payload, indent=2, ensure_ascii=False))


def _cmd_ingest(args: argparse.Namespace, config: dict) -> int:
    corpus = monographs.load_monographs(args.monographs)
    monographs.save_monographs(corpus, args.out)
    stats = monographs.compute_stats(corpus)
    payload = {
        "ingredients": stats.n_ingredients,
        "adult": stats.n_adult,
        "pediatric": stats.n_pediatric,
        "mean_versatility": stats.mean_versatility(),
        "output": str(args.out),
    }
    written = []
    if args.report:
        from . import reporting

        written = [str(p) for p in reporting.save_corpus_stats_report(stats, args.report)]
        payload["report_files"] = written
    text = (
        f"ingested {stats.n_ingredients} ingredients"
        f" ({stats.n_adult} adult, {stats.n_pediatric} pediatric)"
        f" -> {args.out}"
    )
    if written:
        text += "\nreport files:\n" + "\n".join(f"  {p}" for p in written)
    _emit(payload, text, args.pretty)
    return EXIT_OK


def _cmd_build_kg(args: argparse.Namespace, config: dict) -> int:
    corpus = monographs.load_monographs(args.monographs)
    gateway = _build_gateway(args, config)
    graph = dosage_graph.build_graph(corpus, gateway)
    dosage_graph.save_graph(graph, args.out)
    payload = {"nodes": len(graph.nodes), "edges": len(graph.edges), "out": str(args.out)}
    _emit(payload, f"graph with {len(graph.nodes)} nodes and {len(graph.edges)} edges -> {args.out}", args.pretty)
    return EXIT_OK


def _interaction_index(path: str | None):
    if not path:
        return None
    triplets = interactions.load_interactions(path)
    return interactions.build_index(triplets)


def _cmd_verify(args: argparse.Namespace, config: dict) -> int:
    corpus = monographs.load_monographs(args.monographs)
    graph = dosage_graph.load_graph(args.graph) if args.graph else None
    gateway = _build_gateway(args, config)
    index = _interaction_index(args.interactions)
    match_mode = "any" if args.any_overlap else "all"

    case_path = Path(args.case)
    if case_path.is_dir():
        files = sorted(p for p in case_path.iterdir() if p.suffix == ".json")
        cases = [pipeline.load_case(p) for p in files]
    else:
        cases = [pipeline.load_case(case_path)]
    reports = pipeline.verify_batch(
        cases,
        corpus,
        graph,
        gateway,
        parallelism=args.parallel,
        interaction_index=index,
        match_mode=match_mode,
    )
    dicts = [pipeline.report_to_dict(r) for r in reports]
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        for report, payload in zip(reports, dicts):
            (out_dir / f"{report.case_id}.json").write_text(
                json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
            )
    payload = dicts[0] if len(dicts) == 1 else dicts
    text = "\n\n".join(pipeline.render_report_text(r) for r in reports)
    _emit(payload, text, args.pretty)
    return EXIT_OK


def _cmd_evaluate(args: argparse.Namespace, config: dict) -> int:
    reports_dir = Path(args.reports)
    predictions = {}
    for path in sorted(reports_dir.glob("*.json")):
        payload = json.loads(path.read_text(encoding="utf-8"))
        for item in payload.get("items", []):
            key = (payload["case_id"], item["ingredient"])
            predictions[key] = item["verdict"]
    gold_rows = json.loads(Path(args.gold).read_text(encoding="utf-8"))
    gold = {(row["case_id"], row["ingredient"]): row["label"] for row in gold_rows}
    counts = evaluation.score(predictions, gold)
    row = evaluation.metric_row(counts)
    payload = {
        "counts": {"tp": counts.tp, "fp": counts.fp, "tn": counts.tn, "fn": counts.fn},
        "metrics": {
            "accuracy": row.accuracy,
            "precision": row.precision,
            "recall": row.recall,
            "f05": row.f05,
        },
        "display": evaluation.metric_row_display(row),
    }
    written = []
    if args.report:
        from . import reporting

        written = [str(p) for p in reporting.save_metrics_report(row, counts, args.report)]
        payload["report_files"] = written
    display = evaluation.metric_row_display(row)
    text = "\n".join(f"{name:>9}: {value}" for name, value in display.items())
    if written:
        text += "\nreport files:\n" + "\n".join(f"  {p}" for p in written)
    _emit(payload, text, args.pretty)
    return EXIT_OK


def _cmd_retrieve_dose(args: argparse.Namespace, config: dict) -> int:
    graph = dosage_graph.load_graph(args.graph)
    gateway = _build_gateway(args, config)
    age_group = AgeGroup(args.age_group.capitalize()) if args.age_group else AgeGroup.from_age(args.age)
    recommendations = dosage_graph.recommend(
        graph, args.ingredient, age_group, args.disease, args.age, gateway
    )
    payload = {
        "ingredient": args.ingredient,
        "disease": args.disease,
        "age": args.age,
        "age_group": age_group.value,
        "no_information": not recommendations,
        "recommendations": [
            {
                "dosage": r.dosage_text,
                "kind": r.edge_type.value,
                "administration": r.administration,
                "age_constraint": r.matched_age.raw if r.matched_age else None,
                "baseline": r.baseline,
            }
            for r in recommendations
        ],
    }
    if recommendations:
        text = "\n".join(
            f"{r.edge_type.value}: {r.dosage_text}"
            + (f" [{r.matched_age.raw}]" if r.matched_age else "")
            for r in recommendations
        )
    else:
        text = "no dosage information"
    _emit(payload, text, args.pretty)
    return EXIT_OK


def _cmd_interactions(args: argparse.Namespace, config: dict) -> int:
    index = _interaction_index(args.interactions)
    results = interactions.retrieve(args.query, index, args.top_k)
    payload = [
        {
            "head": t.head,
            "relation": t.relation,
            "tail": t.tail,
            "severity": t.severity.value if t.severity else None,
            "score": score,
        }
        for t, score in results
    ]
    text = "\n".join(
        f"{score:.4f}  {interactions.render_triplet(t)}" for t, score in results
    )
    _emit(payload, text, args.pretty)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rxverify",
        description="Prescription verification: monograph ingest, dosage graph, interaction retrieval, evaluation.",
    )
    parser.add_argument("--config", help=f"config JSON path (or set {CONFIG_ENV_VAR})")
    parser.add_argument("--pretty", action="store_true", help="human-readable output instead of JSON")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load, clean and normalize a monograph file")
    p.add_argument("--monographs", required=True)
    p.add_argument("--out", required=True, help="normalized monograph JSON output path")
    p.add_argument("--report", help="directory for the stats CSV and figures")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("build-kg", help="build the dosage knowledge graph")
    p.add_argument("--monographs", required=True)
    p.add_argument("--out", required=True, help="graph output directory")
    p.add_argument("--provider", choices=["stub", "http"])
    p.add_argument("--mapping", help="static name-to-codes JSON for the stub")
    p.set_defaults(func=_cmd_build_kg)

    p = sub.add_parser("verify", help="verify a prescription case (file or directory)")
    p.add_argument("--case", required=True)
    p.add_argument("--monographs", required=True)
    p.add_argument("--graph", help="dosage graph directory")
    p.add_argument("--interactions", help="interaction triplet JSON")
    p.add_argument("--provider", choices=["stub", "http"])
    p.add_argument("--mapping", help="static name-to-codes JSON for the stub")
    p.add_argument("--parallel", type=int, default=1, help="cases verified concurrently")
    p.add_argument("--any-overlap", action="store_true",
                   help="accept any usage/diagnosis category overlap instead of requiring all")
    p.add_argument("--out", help="directory for per-case report JSON files")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("evaluate", help="score verification reports against gold labels")
    p.add_argument("--reports", required=True, help="directory of report JSON files")
    p.add_argument("--gold", required=True, help="gold label JSON file")
    p.add_argument("--report", help="directory for the metrics CSV and figures")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("retrieve-dose", help="look up dosage recommendations in the graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--ingredient", required=True)
    p.add_argument("--disease", required=True)
    p.add_argument("--age", type=float, required=True)
    p.add_argument("--age-group", choices=["adult", "pediatric"])
    p.add_argument("--provider", choices=["stub", "http"])
    p.set_defaults(func=_cmd_retrieve_dose)

    p = sub.add_parser("interactions", help="retrieve interaction triplets for a query")
    p.add_argument("--interactions", required=True, help="interaction triplet JSON")
    p.add_argument("--query", required=True)
    p.add_argument("-k", "--top-k", type=int, default=3)
    p.set_defaults(func=_cmd_interactions)

    return parser


def _error_payload(exc: Exception) -> str:
    return json.dumps({"error": type(exc).__name__, "message": str(exc)})


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args.config)
    except (OSError, json.JSONDecodeError) as exc:
        print(_error_payload(exc), file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args, config)
    except GatewayError as exc:
        print(_error_payload(exc), file=sys.stderr)
        return EXIT_GATEWAY
    except (RxVerifyError, OSError, json.JSONDecodeError, ValueError) as exc:
        print(_error_payload(exc), file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # pragma: no cover - defensive
        logger.exception("internal error")
        print(_error_payload(exc), file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
