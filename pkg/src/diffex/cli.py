"""Command-line surface: corpus tooling, discovery runs, and the synthetic
protocol server.

Runs are driven by a JSON config file; flags override config fields, config
fields override defaults. Exit codes: 0 success, 1 domain findings/failures,
2 usage or transport errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .backend import (
    connect_remote_backend,
    load_world,
    make_synthetic_backend,
    serve_session,
)
from .backend.types import EditParams
from .corpus import load_corpus, save_corpus, ingest_vlm_response, validate_corpus
from .errors import (
    BackendError,
    ConfigError,
    CorpusError,
    CorpusValidationError,
    DiffexError,
    IncompatibilityError,
    TransportError,
    VlmIngestError,
)
from .report import build_report, render
from .scoring import Candidate, ScoreCache, ScoringConfig, candidate_for_node
from .search import BeamConfig, discover, joint_search

EXIT_OK = 0
EXIT_FINDINGS = 1
EXIT_USAGE = 2

_CONFIG_FIELDS = {
    "corpus",
    "backend",
    "images",
    "target_class",
    "classifier",
    "beam_width",
    "threshold",
    "epsilon",
    "depth",
    "mode",
    "threshold_scope",
    "score_mode",
    "seed",
    "edit_threshold",
    "skip_steps",
    "out",
    "format",
}


class _Usage(Exception):
    pass


def _load_config(path: str) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise _Usage(f"cannot read config {path}: {exc}") from exc
    except ValueError as exc:
        raise _Usage(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise _Usage(f"config {path} must be a JSON object")
    unknown = set(doc) - _CONFIG_FIELDS
    if unknown:
        raise _Usage(f"config {path} has unknown field(s) {sorted(unknown)}")
    return doc


def _effective(config: dict, args: argparse.Namespace) -> dict:
    merged = dict(config)
    overrides = {
        "corpus": args.corpus,
        "beam_width": args.beam_width,
        "threshold": args.threshold,
        "epsilon": args.epsilon,
        "depth": args.depth,
        "mode": args.mode,
        "score_mode": args.score_mode,
        "target_class": args.target_class,
        "seed": args.seed,
        "edit_threshold": args.edit_threshold,
        "skip_steps": args.skip_steps,
        "out": args.out,
        "format": args.format,
    }
    if args.images is not None:
        overrides["images"] = [i for i in args.images.split(",") if i]
    backend = dict(config.get("backend", {}))
    if args.backend_url is not None:
        backend = {"url": args.backend_url}
    if args.world is not None:
        backend = {"world": args.world}
    merged["backend"] = backend
    for key, value in overrides.items():
        if value is not None:
            merged[key] = value
    return merged


def _open_backend(merged: dict):
    backend = merged.get("backend") or {}
    has_world = "world" in backend
    has_url = "url" in backend
    if has_world == has_url:
        raise _Usage("exactly one backend source required: backend.world or backend.url")
    if has_world:
        world_path = backend["world"]
        if not Path(world_path).exists():
            raise _Usage(f"world file not found: {world_path}")
        world = load_world(world_path)
        session = make_synthetic_backend(world)
        return session, {"world": str(world_path)}, list(world.images)
    token = os.environ.get("DIFFEX_BACKEND_TOKEN")
    session = connect_remote_backend(backend["url"], auth=token)
    return session, {"url": backend["url"]}, []


def _run_setup(merged: dict):
    corpus_path = merged.get("corpus")
    if not corpus_path:
        raise _Usage("a corpus path is required (config 'corpus' or --corpus)")
    if not Path(corpus_path).exists():
        raise _Usage(f"corpus file not found: {corpus_path}")
    corpus = load_corpus(corpus_path)

    session, backend_echo, world_images = _open_backend(merged)

    images = merged.get("images") or world_images
    if not images:
        raise _Usage("sample image ids required (config 'images' or --images)")
    target = merged.get("target_class")
    if not target:
        raise _Usage("a target class is required (config 'target_class' or --target-class)")
    if "seed" not in merged:
        raise _Usage("a seed is required (config 'seed' or --seed); runs must be reproducible")
    if "edit_threshold" not in merged:
        raise _Usage("an edit threshold is required (config 'edit_threshold' or --edit-threshold)")

    scoring = ScoringConfig(
        sample_image_ids=tuple(images),
        target_class=str(target),
        score_mode=merged.get("score_mode", "mean_signed_delta"),
    )
    params = EditParams(
        edit_threshold=float(merged["edit_threshold"]),
        seed=int(merged["seed"]),
        skipped_steps=int(merged.get("skip_steps", 25)),
    )
    beam = BeamConfig(
        beam_width=int(merged.get("beam_width", 4)),
        threshold=float(merged.get("threshold", float("-inf"))),
        max_depth=int(merged["depth"]) if merged.get("depth") is not None else None,
        expansion_mode=merged.get("mode", "refine"),
        improvement_epsilon=float(merged.get("epsilon", 0.0)),
        threshold_scope=merged.get("threshold_scope", "root_only"),
    )
    echo = {
        "corpus": str(corpus_path),
        "backend": backend_echo,
        "edit_params": params.to_dict(),
    }
    return corpus, session, scoring, params, beam, echo


def _emit(data: bytes, out: str | None) -> None:
    if out:
        Path(out).write_bytes(data)
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.buffer.flush()


def cmd_corpus_validate(args) -> int:
    path = Path(args.path)
    if not path.exists():
        print(f"error: no such file: {path}", file=sys.stderr)
        return EXIT_USAGE
    try:
        corpus = load_corpus(path)
    except CorpusValidationError as exc:
        print(exc.report.summary())
        return EXIT_FINDINGS
    except CorpusError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FINDINGS
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    report = validate_corpus(corpus)
    print(report.summary())
    return EXIT_OK if report.ok else EXIT_FINDINGS


def cmd_corpus_from_vlm(args) -> int:
    path = Path(args.response)
    if not path.exists():
        print(f"error: no such file: {path}", file=sys.stderr)
        return EXIT_USAGE
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        result = ingest_vlm_response(text, args.domain)
    except (VlmIngestError, CorpusValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FINDINGS
    for warning in result.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    save_corpus(result.corpus, args.out)
    print(f"wrote {args.out} ({len(result.corpus.roots)} roots)")
    return EXIT_OK


def _report_bytes(result, corpus, merged, echo) -> bytes:
    report = build_report(
        result,
        domain=corpus.domain,
        classifier=str(merged.get("classifier", "")),
        target_class=str(merged.get("target_class")),
        config_echo=echo,
    )
    return render(report, merged.get("format", "json"))


def cmd_discover(args) -> int:
    try:
        merged = _effective(_load_config(args.config), args)
        corpus, session, scoring, params, beam, echo = _run_setup(merged)
    except _Usage as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TransportError, IncompatibilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CorpusError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FINDINGS
    try:
        result = discover(corpus, beam, scoring, session, params, ScoreCache())
    except (TransportError, IncompatibilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DiffexError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FINDINGS
    _emit(_report_bytes(result, corpus, merged, echo), merged.get("out"))
    return EXIT_OK


def cmd_joint(args) -> int:
    try:
        if args.max_combo < 2:
            raise _Usage(f"--max-combo must be >= 2, got {args.max_combo}")
        merged = _effective(_load_config(args.config), args)
        corpus, session, scoring, params, beam, echo = _run_setup(merged)
        seed_texts = [s for s in (args.seeds or "").split(",") if s]
        if not seed_texts:
            raise _Usage("at least one seed attribute is required (--seeds)")
        seeds = [_resolve_seed(corpus, text) for text in seed_texts]
    except _Usage as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TransportError, IncompatibilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CorpusError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FINDINGS
    try:
        result = joint_search(seeds, args.max_combo, beam, scoring, session, params, ScoreCache())
    except (TransportError, IncompatibilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DiffexError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FINDINGS
    _emit(_report_bytes(result, corpus, merged, echo), merged.get("out"))
    return EXIT_OK


def _resolve_seed(corpus, text: str) -> Candidate:
    try:
        return candidate_for_node(corpus, text)
    except KeyError:
        pass
    matches = [node for _, node in corpus.iter_nodes() if node.label.casefold() == text.casefold()]
    if not matches:
        raise _Usage(f"seed {text!r} matches no corpus node (by id or label)")
    if len(matches) > 1:
        raise _Usage(f"seed {text!r} is ambiguous; use the node id")
    return candidate_for_node(corpus, matches[0].id)


def cmd_serve_synthetic(args) -> int:
    path = Path(args.world)
    if not path.exists():
        print(f"error: no such file: {path}", file=sys.stderr)
        return EXIT_USAGE
    try:
        session = make_synthetic_backend(load_world(path))
    except DiffexError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FINDINGS
    server = serve_session(session, host=args.host, port=args.port)
    print(f"serving synthetic backend on {server.url}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return EXIT_OK


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--corpus")
    parser.add_argument("--backend-url")
    parser.add_argument("--world")
    parser.add_argument("--beam-width", type=int)
    parser.add_argument("--threshold", type=float)
    parser.add_argument("--epsilon", type=float)
    parser.add_argument("--depth", type=int)
    parser.add_argument("--mode", choices=["refine", "augment"])
    parser.add_argument("--score-mode", choices=["mean_edited_score", "mean_abs_delta", "mean_signed_delta"])
    parser.add_argument("--target-class")
    parser.add_argument("--images", help="comma-separated sample image ids")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--edit-threshold", type=float)
    parser.add_argument("--skip-steps", type=int)
    parser.add_argument("--out")
    parser.add_argument("--format", choices=["json", "markdown", "csv"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diffex", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("corpus-validate", help="check a corpus file against all invariants")
    p.add_argument("path")
    p.set_defaults(fn=cmd_corpus_validate)

    p = sub.add_parser("corpus-from-vlm", help="build a corpus file from a keyword-extraction response")
    p.add_argument("response")
    p.add_argument("--domain", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_corpus_from_vlm)

    p = sub.add_parser("discover", help="run the hierarchical influence search")
    p.add_argument("config")
    _add_run_flags(p)
    p.set_defaults(fn=cmd_discover)

    p = sub.add_parser("joint", help="search attribute combinations from seed semantics")
    p.add_argument("config")
    p.add_argument("--seeds", help="comma-separated node ids or labels")
    p.add_argument("--max-combo", type=int, default=2)
    _add_run_flags(p)
    p.set_defaults(fn=cmd_joint)

    p = sub.add_parser("serve-synthetic", help="serve a synthetic world over the wire protocol")
    p.add_argument("world")
    p.add_argument("--port", type=int, default=8601)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(fn=cmd_serve_synthetic)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
