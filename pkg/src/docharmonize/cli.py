"""Command-line front end: analyze -> harmonize -> evaluate -> repgeom,
plus SVG scatter emission.

Config precedence: flags > --config JSON file > environment > defaults.
Logs go to stderr, data to files under --out. Exit codes: 0 success,
1 usage error, 2 data error, 3 agent failure under the fail_job policy.
"""

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from importlib.metadata import PackageNotFoundError, version

from . import discrepancy, harmonizer, metrics, repgeom, taxonomy
from .dataset_model import load_coco, save_coco
from .errors import AgentError, DataError, DocharmonizeError, JobError
from .vlm_client import DEFAULT_API_KEY_ENV, AgentConfig, VlmAgent

log = logging.getLogger("docharmonize")


def _tool_version():
    try:
        return version("docharmonize")
    except PackageNotFoundError:
        return "unknown"


def _sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, subcommand, config, input_paths):
    """run_manifest.json: enough to reproduce the run byte-for-byte."""
    config_blob = json.dumps(config, sort_keys=True, default=str)
    manifest = {
        "tool_version": _tool_version(),
        "subcommand": subcommand,
        "config": config,
        "config_hash": hashlib.sha256(config_blob.encode()).hexdigest(),
        "input_digests": {
            p: _sha256_file(p) for p in input_paths if p and os.path.isfile(p)
        },
    }
    with open(os.path.join(out_dir, "run_manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, default=str)


def _write_json(out_dir, name, payload):
    path = os.path.join(out_dir, name)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, default=str, sort_keys=True)
    return path


def _resolve_mapping(spec_str):
    if spec_str == "unstructured":
        return taxonomy.builtin_unstructured_remap()
    if spec_str == "heron":
        return taxonomy.builtin_heron_remap()
    return taxonomy.load_mapping(spec_str, target_taxonomy=taxonomy.builtin_target_taxonomy())


def cmd_analyze(args):
    datasets = []
    for i, path in enumerate(args.inputs):
        ds, report = load_coco(path, dataset_name=os.path.basename(path))
        log.info("loaded %s: %d pages, %d annotations (%d dropped, %d clamped)",
                 path, ds.page_count, ds.annotation_count,
                 report.dropped_zero_area, report.clamped_out_of_page)
        if args.map:
            mapping = _resolve_mapping(args.map[i] if len(args.map) > 1 else args.map[0])
            ds, _ = taxonomy.remap_dataset(ds, mapping)
        datasets.append(ds)
    report = discrepancy.build_report(datasets)
    _write_json(args.out, "discrepancy_report.json", report.to_json())
    text = discrepancy.render_text(report)
    with open(os.path.join(args.out, "discrepancy_report.txt"), "w", encoding="utf-8") as fh:
        fh.write(text)
    sys.stdout.write(text)
    return 0


def cmd_harmonize(args):
    dataset, load_report = load_coco(args.input, dataset_name=os.path.basename(args.input))
    if args.images:
        for page in dataset.pages:
            if page.image_path is not None:
                page.image_path = os.path.join(args.images, page.image_path)
    rules = harmonizer.load_rules(args.rules) if args.rules else harmonizer.default_rules()
    mapping = _resolve_mapping(args.mapping)

    if args.agent == "rule":
        agent = harmonizer.RuleAgent(mapping, rules)
    else:
        config = AgentConfig(
            endpoint=args.endpoint,
            model=args.model,
            api_key_env=args.api_key_env,
            timeout_s=args.timeout,
            max_retries=args.max_retries,
            max_concurrency=args.workers,
        )
        agent = VlmAgent(config, rules)

    harmonized, job_report = harmonizer.harmonize_dataset(
        dataset, agent, rules, mapping, policy=args.policy, workers=args.workers
    )
    out_path = os.path.join(args.out, "harmonized.json")
    save_coco(harmonized, out_path)
    _write_json(args.out, "job_report.json", job_report.to_json())
    _write_json(args.out, "load_report.json", load_report.to_json())
    if args.agent == "vlm":
        _write_json(args.out, "transcripts.json",
                    [t.to_json() for t in agent.transcripts])
    log.info("harmonized %d pages -> %s (%d merged groups, %d fallback pages)",
             harmonized.page_count, out_path,
             job_report.merged_groups, job_report.fallback_pages)
    return 0


def cmd_evaluate(args):
    pred = metrics.load_structured_docs(args.pred)
    ref = metrics.load_structured_docs(args.ref)
    report = metrics.evaluate_docs(pred, ref, iou_threshold=args.iou_threshold)
    path = _write_json(args.out, "metrics.json", report.to_json())
    log.info("evaluated %d pred / %d ref pages -> %s", len(pred), len(ref), path)
    return 0


def cmd_repgeom(args):
    remap = _resolve_mapping(args.remap) if args.remap else None
    embedding_set = repgeom.load_embeddings(args.embeddings, remap=remap)
    report = repgeom.analyze(
        embedding_set, k=args.k, sample_cap=args.sample_cap, seed=args.seed
    )
    _write_json(args.out, "geometry_report.json", report.to_json())
    if args.scatter_csv:
        with open(os.path.join(args.out, args.scatter_csv), "w", newline="",
                  encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "label", "x", "y"])
            for row in report.coordinates:
                writer.writerow([row["id"], row["label"], row["x"], row["y"]])
    log.info("repgeom over %d records (k'=%d)", len(embedding_set),
             report.params["effective_k"])
    return 0


_PALETTE = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#aec7e8", "#ffbb78",
    "#98df8a", "#ff9896", "#c5b0d5", "#c49c94", "#f7b6d2",
]


def render_scatter_svg(coordinates, width=800, height=600, margin=50):
    """Static SVG scatter colored by class, with a legend."""
    xs = [c["x"] for c in coordinates]
    ys = [c["y"] for c in coordinates]
    if not xs:
        raise DataError("no coordinates to plot")
    x_min, x_max = min(xs), max(xs)
    y_min, y_max = min(ys), max(ys)
    x_span = (x_max - x_min) or 1.0
    y_span = (y_max - y_min) or 1.0
    labels = sorted({c["label"] for c in coordinates})
    colors = {label: _PALETTE[i % len(_PALETTE)] for i, label in enumerate(labels)}

    def sx(x):
        return margin + (x - x_min) / x_span * (width - 2 * margin)

    def sy(y):
        # SVG y grows downward
        return height - margin - (y - y_min) / y_span * (height - 2 * margin)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for c in coordinates:
        parts.append(
            f'<circle cx="{sx(c["x"]):.2f}" cy="{sy(c["y"]):.2f}" r="3" '
            f'fill="{colors[c["label"]]}" fill-opacity="0.7"/>'
        )
    for i, label in enumerate(labels):
        y = 20 + 16 * i
        parts.append(f'<circle cx="{width - 160}" cy="{y}" r="5" fill="{colors[label]}"/>')
        parts.append(
            f'<text x="{width - 148}" y="{y + 4}" font-size="12" '
            f'font-family="sans-serif">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)


def cmd_scatter(args):
    with open(args.geometry, "r", encoding="utf-8") as fh:
        report = json.load(fh)
    coordinates = report.get("coordinates")
    if not coordinates:
        raise DataError(f"{args.geometry} has no coordinates")
    svg = render_scatter_svg(coordinates)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(svg)
    log.info("wrote %s (%d points)", args.out, len(coordinates))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="docharmonize",
        description="Harmonize heterogeneous layout-annotation corpora and "
                    "analyze the results.",
        epilog="Config precedence: flags > --config JSON file > environment "
               "> built-in defaults.",
    )
    parser.add_argument("--config", help="JSON file supplying default values for flags")
    parser.add_argument("--log-level", default="INFO")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="cross-dataset discrepancy report")
    p.add_argument("--inputs", nargs="+", required=True, help="COCO annotation files")
    p.add_argument("--map", nargs="*", default=None,
                   help="mapping file(s) or builtin name (unstructured|heron); "
                        "one per input, or one applied to all")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("harmonize", help="run the partition-merge-adjust engine")
    p.add_argument("--input", required=True, help="COCO annotation file")
    p.add_argument("--images", help="directory prefix for page image paths")
    p.add_argument("--rules", help="RuleSet JSON (defaults to built-in rules)")
    p.add_argument("--mapping", required=True,
                   help="mapping file or builtin name (unstructured|heron)")
    p.add_argument("--agent", choices=["rule", "vlm"], default="rule")
    p.add_argument("--policy", default="retry_2_then_identity",
                   help="fail_job | identity_page | retry_N_then_identity")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--endpoint", default="http://localhost:8000/v1/chat/completions")
    p.add_argument("--model", default="default")
    p.add_argument("--api-key-env", default=DEFAULT_API_KEY_ENV)
    p.add_argument("--timeout", type=float, default=60.0)
    p.add_argument("--max-retries", type=int, default=2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_harmonize)

    p = sub.add_parser("evaluate", help="pred-vs-ref structured document metrics")
    p.add_argument("--pred", required=True, help="predicted StructuredDoc JSONL")
    p.add_argument("--ref", required=True, help="reference StructuredDoc JSONL")
    p.add_argument("--iou-threshold", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("repgeom", help="embedding-geometry report")
    p.add_argument("--embeddings", required=True, help="embeddings JSONL")
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--remap", help="mapping file or builtin name applied to labels")
    p.add_argument("--sample-cap", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scatter-csv", help="also emit this CSV of id,label,x,y")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_repgeom)

    p = sub.add_parser("scatter", help="render a geometry report as an SVG scatter")
    p.add_argument("--geometry", required=True, help="geometry_report.json")
    p.add_argument("--out", required=True, help="output SVG path")
    p.set_defaults(func=cmd_scatter)

    return parser


def _apply_config_file(parser, argv):
    """Merge --config file values as parser defaults (flags still win)."""
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config")
    known, _ = probe.parse_known_args(argv)
    if not known.config:
        return
    with open(known.config, "r", encoding="utf-8") as fh:
        values = json.load(fh)
    for action in parser._subparsers._group_actions[0].choices.values():
        action.set_defaults(**{k.replace("-", "_"): v for k, v in values.items()
                               if k.replace("-", "_") in
                               {a.dest for a in action._actions}})


def run(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    out_dir = getattr(args, "out", None)
    if out_dir and args.command != "scatter":
        os.makedirs(out_dir, exist_ok=True)

    def fail(code, exc):
        record = {"error": type(exc).__name__, "message": str(exc)}
        log.error("%s: %s", type(exc).__name__, exc)
        if out_dir and args.command != "scatter" and os.path.isdir(out_dir):
            _write_json(out_dir, "error.json", record)
        return code

    try:
        rc = args.func(args)
    except (JobError, AgentError) as exc:
        return fail(3, exc)
    except (DataError, DocharmonizeError, OSError, ValueError) as exc:
        return fail(2, exc)
    if out_dir and args.command != "scatter":
        config = {k: v for k, v in vars(args).items() if k not in ("func",)}
        inputs = []
        for key in ("inputs", "input", "pred", "ref", "embeddings", "rules",
                    "mapping", "map", "geometry"):
            value = getattr(args, key, None)
            if isinstance(value, list):
                inputs.extend(value)
            elif isinstance(value, str):
                inputs.append(value)
        write_manifest(out_dir, args.command, config, inputs)
    return rc


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
