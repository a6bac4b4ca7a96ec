"""Command-line entry point: stretch-pe, generate-captions, search, evaluate,
simulate.

Option precedence is flags > environment > config file > built-in defaults.
Data-producing commands write a sibling manifest (or manifest.json inside an
output directory) and all outputs go through temp-file-then-rename.
"""

from __future__ import annotations

import argparse
import json
import os
import shlex
import sys
import time
from importlib import metadata

import yaml

from . import chat
from .ablation import run_ablation, save_ablation_csv
from .captioning import (
    CaptionConfig,
    default_question_pool,
    load_question_pool,
    save_caption_store,
)
from .errors import CtgiError, IdMismatchError, ParseError
from .manifest import RunManifest, atomic_path
from .metrics import mean_average_precision, rank_k_accuracy
from .pe_stretch import StretchSpec, load_pe, save_pe, stretch
from .refinement import SearchConfig, save_session_log, search
from .vectors import Ranking, load_gallery, save_gallery
from .world import (
    DEFAULT_SCHEMA,
    OracleBackend,
    OracleConfig,
    World,
    generate_world,
    load_schema,
    save_ground_truth,
    save_schema,
)


def _version() -> str:
    try:
        return metadata.version("ctgi")
    except metadata.PackageNotFoundError:
        return "0.1.0"


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as handle:
        loaded = yaml.safe_load(handle)
    if loaded is None:
        return {}
    if not isinstance(loaded, dict):
        raise ParseError(f"config file {path} must hold a key-value mapping")
    return loaded


def _resolve(flag_value, config: dict, key: str, default, env_var: str | None = None):
    """flags > environment > config file > default."""
    if flag_value is not None:
        return flag_value
    if env_var is not None and os.environ.get(env_var):
        return os.environ[env_var]
    if key in config:
        return config[key]
    return default


def _load_script(path) -> chat.ScriptedBackend:
    with open(path, "r", encoding="utf-8") as handle:
        spec = json.load(handle)
    return chat.ScriptedBackend(
        replies=spec.get("replies"),
        rules=[tuple(rule) for rule in spec.get("rules", [])],
    )


def _build_backend(args, config: dict, world: World | None, transcript_path):
    """Backend per --backend; --transcript records for live kinds and is the
    source for replay."""
    kind = _resolve(args.backend, config, "backend", "oracle")
    record_to = None if kind == "replay" else transcript_path
    transcript = chat.ChatTranscript(sink_path=record_to)
    if kind == "oracle":
        if world is None:
            raise ParseError("oracle backend requires a gallery with attributes")
        oracle_cfg = OracleConfig(
            seed=int(_resolve(args.seed, config, "seed", 0)),
            yes_no_error_rate=float(
                _resolve(getattr(args, "error_rate", None), config, "error_rate", 0.1)
            ),
        )
        return OracleBackend(world, oracle_cfg, transcript=transcript)
    if kind == "scripted":
        script = _resolve(getattr(args, "script", None), config, "script", None)
        if script is None:
            raise ParseError("scripted backend requires --script <path>")
        backend = _load_script(script)
        backend.transcript = transcript
        return backend
    if kind == "replay":
        if transcript_path is None:
            raise ParseError("replay backend requires --transcript <path>")
        return chat.ReplayBackend.from_file(transcript_path, transcript=transcript)
    if kind == "http":
        endpoint = _resolve(
            args.endpoint, config, "endpoint", None, env_var=chat.ENV_ENDPOINT
        )
        model = _resolve(args.model, config, "model", None)
        if endpoint is None or model is None:
            raise ParseError("http backend requires --endpoint and --model")
        http_cfg = chat.ChatBackendConfig(
            kind="http",
            endpoint=endpoint,
            model_name=model,
            temperature=float(
                _resolve(args.temperature, config, "temperature", 0.01)
            ),
            max_retries=int(_resolve(args.max_retries, config, "max_retries", 3)),
            timeout=float(_resolve(args.timeout, config, "timeout", 30.0)),
        )
        return chat.HttpBackend(http_cfg, transcript=transcript)
    raise ParseError(f"unknown backend kind {kind!r}")


def _load_world(gallery_path, schema_arg, config) -> tuple[World | None, object]:
    schema_path = _resolve(schema_arg, config, "schema", None)
    schema = load_schema(schema_path) if schema_path else DEFAULT_SCHEMA
    gallery = load_gallery(gallery_path)
    if all(item.attributes is not None for item in gallery):
        return World(schema, gallery), schema
    return None, schema


def _write_manifest(path, args_line, config_snapshot, seeds, backend_kind,
                    transcript, started):
    RunManifest(
        command_line=args_line,
        config=config_snapshot,
        seeds=seeds,
        backend=backend_kind,
        transcript=transcript,
        version=_version(),
        duration_seconds=time.perf_counter() - started,
    ).write(path)


# -- subcommands ----------------------------------------------------------


def _cmd_stretch_pe(args, config, args_line, started) -> int:
    pe = load_pe(args.infile)
    keep = int(_resolve(args.keep, config, "keep", 20))
    dst = int(_resolve(args.dst, config, "dst", 248))
    spec = StretchSpec(n_keep=keep, n_src=pe.rows, n_dst=dst)
    stretched = stretch(pe, spec)
    with atomic_path(args.out) as tmp:
        save_pe(stretched, tmp)
    _write_manifest(
        args.out + ".manifest.json",
        args_line,
        {"keep": keep, "dst": dst, "src_rows": pe.rows, "dim": pe.dim},
        {},
        None,
        None,
        started,
    )
    return 0


def _cmd_generate_captions(args, config, args_line, started) -> int:
    world, _ = _load_world(args.gallery, args.schema, config)
    pool = (
        load_question_pool(args.pool) if args.pool else default_question_pool()
    )
    rounds = int(_resolve(args.rounds, config, "rounds", 6))
    caption_cfg = CaptionConfig(
        rounds=rounds,
        redundancy_threshold=float(
            _resolve(None, config, "redundancy_threshold", 0.7)
        ),
        max_tokens=int(_resolve(None, config, "max_tokens", 248)),
    )
    backend = _build_backend(args, config, world, args.transcript)
    gallery = world.gallery if world is not None else load_gallery(args.gallery)
    jobs = int(_resolve(args.jobs, config, "jobs", 1))
    from .captioning import generate_captions

    labels = generate_captions(
        [item.id for item in gallery], pool, caption_cfg, backend, jobs=jobs
    )
    with atomic_path(args.out) as tmp:
        save_caption_store(labels, tmp)
    backend.transcript.close()
    _write_manifest(
        args.out + ".manifest.json",
        args_line,
        {"rounds": rounds, "jobs": jobs,
         "redundancy_threshold": caption_cfg.redundancy_threshold,
         "max_tokens": caption_cfg.max_tokens},
        {"oracle": int(_resolve(args.seed, config, "seed", 0))},
        backend.kind,
        args.transcript,
        started,
    )
    return 0


def _cmd_search(args, config, args_line, started) -> int:
    world, schema = _load_world(args.gallery, args.schema, config)
    gallery = world.gallery if world is not None else load_gallery(args.gallery)
    search_cfg = SearchConfig(
        top_k=int(_resolve(args.topk, config, "topk", 20)),
        fusion_lambda=float(_resolve(args.fusion_lambda, config, "lambda", 0.5)),
        early_stop_xi=float(_resolve(args.xi, config, "xi", 0.85)),
    )
    backend = _build_backend(args, config, world, args.transcript)
    session = search(
        args.query,
        gallery,
        search_cfg,
        backend,
        schema.text_embedder(),
        query_id="q0",
    )
    with atomic_path(args.session_log) as tmp:
        save_session_log([session], tmp)
    backend.transcript.close()
    _write_manifest(
        args.session_log + ".manifest.json",
        args_line,
        {"topk": search_cfg.top_k, "lambda": search_cfg.fusion_lambda,
         "xi": search_cfg.early_stop_xi},
        {"oracle": int(_resolve(args.seed, config, "seed", 0))},
        backend.kind,
        args.transcript,
        started,
    )
    return 0


def _load_rankings_file(path) -> list[Ranking]:
    rankings = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                ranking = Ranking(
                    query_id=record["query_id"],
                    entries=[(e[0], float(e[1])) for e in record["entries"]],
                )
            except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
                raise ParseError(f"line {line_no}: bad ranking record") from exc
            ranking.validate()
            rankings.append(ranking)
    if not rankings:
        raise ParseError(f"no rankings in {path}")
    return rankings


def _cmd_evaluate(args, config, args_line, started) -> int:
    rankings = _load_rankings_file(args.rankings)
    with open(args.truth, "r", encoding="utf-8") as handle:
        truth_raw = json.load(handle)
    relevant = {query_id: set(items) for query_id, items in truth_raw.items()}
    for ranking in rankings:
        if ranking.query_id not in relevant:
            raise IdMismatchError(f"truth file lacks query id {ranking.query_id!r}")
    line = " ".join(
        f"{value:.4f}"
        for value in (
            rank_k_accuracy(rankings, relevant, 1),
            rank_k_accuracy(rankings, relevant, 5),
            rank_k_accuracy(rankings, relevant, 10),
            mean_average_precision(rankings, relevant),
        )
    )
    print(line)
    return 0


def _cmd_simulate(args, config, args_line, started) -> int:
    seed = int(_resolve(args.seed, config, "seed", 7))
    identities = int(_resolve(args.identities, config, "identities", 200))
    error_rate = float(_resolve(args.error_rate, config, "error_rate", 0.1))
    schema_path = _resolve(args.schema, config, "schema", None)
    schema = load_schema(schema_path) if schema_path else DEFAULT_SCHEMA
    os.makedirs(args.out, exist_ok=True)

    world = generate_world(seed, identities, schema)
    with atomic_path(os.path.join(args.out, "gallery.jsonl")) as tmp:
        save_gallery(world.gallery, tmp)
    with atomic_path(os.path.join(args.out, "ground_truth.json")) as tmp:
        save_ground_truth(world, tmp)
    with atomic_path(os.path.join(args.out, "schema.json")) as tmp:
        save_schema(schema, tmp)
    results = run_ablation(world, OracleConfig(seed=seed, yes_no_error_rate=error_rate))
    with atomic_path(os.path.join(args.out, "ablation.csv")) as tmp:
        save_ablation_csv(results, tmp)
    for row in results:
        print(
            f"{row.arm},{row.rank1:.4f},{row.rank5:.4f},"
            f"{row.rank10:.4f},{row.map:.4f},{row.seconds:.3f}"
        )
    _write_manifest(
        os.path.join(args.out, "manifest.json"),
        args_line,
        {"identities": identities, "error_rate": error_rate,
         "schema": schema_path or "builtin"},
        {"world": seed, "oracle": seed},
        "oracle",
        None,
        started,
    )
    return 0


# -- parser ----------------------------------------------------------------


def _add_backend_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--backend", choices=["http", "scripted", "oracle", "replay"], default=None
    )
    parser.add_argument(
        "--transcript",
        default=None,
        help="record exchanges here (replay: read them from here)",
    )
    parser.add_argument("--script", default=None, help="scripted backend rules (JSON)")
    parser.add_argument("--schema", default=None, help="attribute schema (JSON)")
    parser.add_argument("--seed", type=int, default=None, help="oracle noise seed")
    parser.add_argument("--error-rate", dest="error_rate", type=float, default=None)
    parser.add_argument("--endpoint", default=None)
    parser.add_argument("--model", default=None)
    parser.add_argument("--temperature", type=float, default=None)
    parser.add_argument("--max-retries", dest="max_retries", type=int, default=None)
    parser.add_argument("--timeout", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctgi",
        description="Chat-driven person-search engine",
    )
    parser.add_argument("--version", action="version", version=f"ctgi {_version()}")
    parser.add_argument("--config", default=None, help="YAML config file")
    commands = parser.add_subparsers(dest="command", required=True)

    cmd = commands.add_parser("stretch-pe", help="stretch a positional-embedding table")
    cmd.add_argument("--in", dest="infile", required=True)
    cmd.add_argument("--out", required=True)
    cmd.add_argument("--keep", type=int, default=None)
    cmd.add_argument("--dst", type=int, default=None)

    cmd = commands.add_parser("generate-captions", help="pseudo-captions for a gallery")
    cmd.add_argument("--gallery", required=True)
    cmd.add_argument("--pool", default=None, help="question pool file")
    cmd.add_argument("--out", required=True)
    cmd.add_argument("--rounds", type=int, default=None)
    cmd.add_argument("--jobs", type=int, default=None)
    _add_backend_options(cmd)

    cmd = commands.add_parser("search", help="refinement search for one query")
    cmd.add_argument("--gallery", required=True)
    cmd.add_argument("--query", required=True)
    cmd.add_argument("--lambda", dest="fusion_lambda", type=float, default=None)
    cmd.add_argument("--topk", type=int, default=None)
    cmd.add_argument("--xi", type=float, default=None)
    cmd.add_argument("--session-log", dest="session_log", required=True)
    _add_backend_options(cmd)

    cmd = commands.add_parser("evaluate", help="metrics for a rankings file")
    cmd.add_argument("--rankings", required=True)
    cmd.add_argument("--truth", required=True)

    cmd = commands.add_parser("simulate", help="generate a world and run the ablation")
    cmd.add_argument("--seed", type=int, default=None)
    cmd.add_argument("--identities", type=int, default=None)
    cmd.add_argument("--schema", default=None)
    cmd.add_argument("--error-rate", dest="error_rate", type=float, default=None)
    cmd.add_argument("--out", required=True)

    return parser


_HANDLERS = {
    "stretch-pe": _cmd_stretch_pe,
    "generate-captions": _cmd_generate_captions,
    "search": _cmd_search,
    "evaluate": _cmd_evaluate,
    "simulate": _cmd_simulate,
}


def dispatch(argv) -> int:
    """Run one subcommand: 0 on success, 1 on domain errors, 2 on usage."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    started = time.perf_counter()
    args_line = "ctgi " + shlex.join(str(token) for token in argv)
    try:
        config = _load_config_file(args.config)
        return _HANDLERS[args.command](args, config, args_line, started)
    except CtgiError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
