"""Command-line front end: ground one image, evaluate a manifest, serve the
mock backends, or plan a grasp.

Exit codes are part of the interface: 0 success, 1 backend transport
failure, 2 usage/config problems, 3 semantic pipeline failure
(nothing detected/selected, part not found), 4 depth hole at the
grasp point.
"""

from __future__ import annotations

import argparse
import json
import signal
import sys
import threading
from pathlib import Path

from . import __version__
from .datasets import file_sha256, load_manifest
from .gateway import (
    BackendConfig,
    BackendError,
    BackendGateway,
    BackendUnreachableError,
)
from .grasp import (
    CameraIntrinsics,
    DepthHoleError,
    plan_topdown_grasp,
    plan_via_external,
)
from .harness import evaluate_manifest
from .imaging import (
    load_depth_png,
    load_mask_png,
    load_rgb_png,
    render_overlay,
    save_mask_png,
    save_rgb_png,
)
from .metrics import (
    AGGREGATE_PER_AFFORDANCE,
    AGGREGATE_PER_IMAGE,
    MetricConfig,
    aggregate,
    write_csv,
    write_summary,
)
from .mockserver import MockScriptError, load_mock_script, serve_mock
from .model import GroundingStatus
from .pipeline import (
    ABLATION_FULL,
    ABLATION_NO_REPROMPT,
    ABLATION_VLM_ONLY,
    PipelineConfig,
    ground_affordance,
    result_to_json_obj,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXIT_OK = 0
EXIT_TRANSPORT = 1
EXIT_USAGE = 2
EXIT_SEMANTIC = 3
EXIT_DEPTH_HOLE = 4

_ABLATION_FLAGS = {
    "full": ABLATION_FULL,
    "no-reprompt": ABLATION_NO_REPROMPT,
    "vlm-only": ABLATION_VLM_ONLY,
}


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise CliError(f"config file not found: {p}")
    if p.suffix.lower() == ".json":
        return json.loads(p.read_text(encoding="utf-8"))
    with open(p, "rb") as fh:
        return tomllib.load(fh)


def _build_configs(args, require_backend: bool = True):
    """Merge config file, environment, and flags (flags win)."""
    doc = _load_config_file(getattr(args, "config", None))
    backend_doc = dict(doc.get("backend") or {})
    pipeline_doc = dict(doc.get("pipeline") or {})
    metrics_doc = dict(doc.get("metrics") or {})

    base = backend_doc.pop("base_url", None)
    if getattr(args, "backend_base", None):
        base = args.backend_base
    try:
        if base:
            backend = BackendConfig.from_base(base, **backend_doc)
        elif {"detect_url", "segment_url", "chat_url"} <= set(backend_doc):
            backend = BackendConfig(**backend_doc)
        else:
            backend = BackendConfig.from_base("http://127.0.0.1:8080", **backend_doc)
        backend = backend.with_env_overrides()
        if getattr(args, "backend_base", None):
            backend = BackendConfig.from_base(
                args.backend_base,
                **{k: getattr(backend, k) for k in (
                    "api_key", "request_timeout", "max_retries", "chat_temperature",
                    "detect_confidence_floor", "chat_max_inflight", "retry_backoff_base",
                )},
            )
    except (TypeError, ValueError) as exc:
        raise CliError(f"bad backend config: {exc}")

    if getattr(args, "ablation", None):
        pipeline_doc["ablation"] = _ABLATION_FLAGS[args.ablation]
    if getattr(args, "objects", None):
        pipeline_doc["object_vocabulary"] = [
            o.strip() for o in args.objects.split(",") if o.strip()
        ]
    pipeline_doc.setdefault("confidence_floor", backend.detect_confidence_floor)
    prompts_doc = doc.get("prompts") or {}
    if prompts_doc:
        from .prompts import templates_from_mapping

        try:
            pipeline_doc["templates"] = templates_from_mapping(dict(prompts_doc))
        except ValueError as exc:
            raise CliError(f"bad prompts config: {exc}")
    aggregation = metrics_doc.pop("aggregation", AGGREGATE_PER_AFFORDANCE)
    if aggregation not in (AGGREGATE_PER_AFFORDANCE, AGGREGATE_PER_IMAGE):
        raise CliError(f"unknown aggregation {aggregation!r}")
    try:
        metric_cfg = MetricConfig(**metrics_doc)
    except (TypeError, ValueError) as exc:
        raise CliError(f"bad metrics config: {exc}")
    if require_backend:
        try:
            pipeline_cfg = PipelineConfig(**pipeline_doc)
        except (TypeError, ValueError) as exc:
            raise CliError(f"bad pipeline config: {exc}")
    else:
        pipeline_cfg = None
    return backend, pipeline_cfg, metric_cfg, aggregation


def _config_echo(backend: BackendConfig, pipeline: PipelineConfig | None,
                 metric: MetricConfig, aggregation: str | None = None) -> dict:
    echo = {
        "version": __version__,
        "backend": {
            "detect_url": backend.detect_url,
            "segment_url": backend.segment_url,
            "chat_url": backend.chat_url,
            "api_key": "***" if backend.api_key else None,
            "request_timeout": backend.request_timeout,
            "max_retries": backend.max_retries,
            "chat_temperature": backend.chat_temperature,
            "detect_confidence_floor": backend.detect_confidence_floor,
        },
        "metrics": metric.describe(),
    }
    if pipeline is not None:
        echo["pipeline"] = pipeline.describe()
    if aggregation is not None:
        echo["metrics"]["aggregation"] = aggregation
    return echo


def cmd_ground(args) -> int:
    backend, pipeline_cfg, metric_cfg, _ = _build_configs(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    image = load_rgb_png(args.image)
    gateway = BackendGateway(backend)
    try:
        result = ground_affordance(gateway, image, args.task, pipeline_cfg)
    except BackendError as exc:
        print(f"backend failure: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT

    doc = result_to_json_obj(result)
    doc["task"] = args.task
    doc["config"] = _config_echo(backend, pipeline_cfg, metric_cfg)
    doc["input_sha256"] = file_sha256(args.image)
    (out_dir / "result.json").write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    if result.mask is not None:
        save_mask_png(result.mask, out_dir / "mask.png")
        save_rgb_png(render_overlay(image, result.mask, args.task), out_dir / "overlay.png")
    if result.status is GroundingStatus.SUCCEEDED:
        return EXIT_OK
    print(f"grounding failed: {result.status.value}", file=sys.stderr)
    return EXIT_SEMANTIC


def cmd_eval(args) -> int:
    backend, pipeline_cfg, metric_cfg, aggregation = _build_configs(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = load_manifest(args.manifest)
    if not pipeline_cfg.object_vocabulary:
        import dataclasses

        pipeline_cfg = dataclasses.replace(
            pipeline_cfg, object_vocabulary=manifest.object_vocabulary
        )
    gateway = BackendGateway(backend)
    outcome = evaluate_manifest(
        gateway, manifest, pipeline_cfg, metric_cfg, workers=args.workers
    )
    write_csv(outcome.rows, out_dir / "report.csv")
    summary = aggregate(list(outcome.rows), aggregation)
    summary["config"] = _config_echo(backend, pipeline_cfg, metric_cfg, aggregation)
    summary["input_sha256"] = file_sha256(args.manifest)
    write_summary(summary, out_dir / "summary.json")
    print(f"average fscore ({aggregation}): {summary['average']:.6f}")
    return EXIT_OK


def cmd_mock_serve(args) -> int:
    try:
        script = load_mock_script(args.script)
    except MockScriptError as exc:
        print(f"invalid mock script: {exc}", file=sys.stderr)
        return 2
    host, _, port = args.bind.partition(":")
    try:
        handle = serve_mock(script, (host or "127.0.0.1", int(port or 0)))
    except OSError as exc:
        print(f"cannot bind {args.bind}: {exc}", file=sys.stderr)
        return 1
    print(f"mock backends serving on {handle.url}", flush=True)
    stop = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: stop.set())
    try:
        stop.wait()
    finally:
        handle.stop()
    return EXIT_OK


def _load_intrinsics(path: str) -> CameraIntrinsics:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        return CameraIntrinsics(
            fx=float(doc["fx"]), fy=float(doc["fy"]),
            cx=float(doc["cx"]), cy=float(doc["cy"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(f"bad intrinsics file {path}: {exc}")


def _load_mask_input(path: str):
    p = Path(path)
    if p.suffix.lower() == ".json":
        from .datasets import mask_from_payload

        return mask_from_payload(json.loads(p.read_text(encoding="utf-8")))
    return load_mask_png(p)


def cmd_grasp(args) -> int:
    backend, _, metric_cfg, _ = _build_configs(args, require_backend=False)
    mask = _load_mask_input(args.mask)
    depth = load_depth_png(args.depth)
    intrinsics = _load_intrinsics(args.intrinsics)
    try:
        if args.planner_url:
            pose = plan_via_external(
                mask, depth, intrinsics, args.planner_url,
                config=backend, fallback=args.fallback,
            )
        else:
            pose = plan_topdown_grasp(mask, depth, intrinsics)
    except DepthHoleError as exc:
        print(f"no usable depth at grasp point: {exc}", file=sys.stderr)
        return EXIT_DEPTH_HOLE
    except BackendError as exc:
        print(f"planner failure: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT

    doc = {
        "position": list(pose.position),
        "yaw": pose.yaw,
        "approach": list(pose.approach),
        "degenerate": pose.degenerate,
        "quality": pose.quality,
        "config": _config_echo(backend, None, metric_cfg),
        "input_sha256": {
            "mask": file_sha256(args.mask),
            "depth": file_sha256(args.depth),
            "intrinsics": file_sha256(args.intrinsics),
        },
    }
    Path(args.out).write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="affground",
        description="Open-vocabulary affordance grounding pipeline and tools",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML or JSON config file")
    common.add_argument("--backend-base", help="base URL for all three backends")

    ground = sub.add_parser("ground", parents=[common], help="ground one image + task")
    ground.add_argument("--image", required=True)
    ground.add_argument("--task", required=True)
    ground.add_argument("--ablation", choices=sorted(_ABLATION_FLAGS))
    ground.add_argument("--objects", help="comma-separated object vocabulary override")
    ground.add_argument("--out", required=True)
    ground.set_defaults(func=cmd_ground)

    ev = sub.add_parser("eval", parents=[common], help="evaluate a dataset manifest")
    ev.add_argument("--manifest", required=True)
    ev.add_argument("--ablation", choices=sorted(_ABLATION_FLAGS))
    ev.add_argument("--objects", help="comma-separated object vocabulary override")
    ev.add_argument("--workers", type=int, default=None)
    ev.add_argument("--out", required=True)
    ev.set_defaults(func=cmd_eval)

    mock = sub.add_parser("mock-serve", help="serve scripted mock backends")
    mock.add_argument("--script", required=True)
    mock.add_argument("--bind", default="127.0.0.1:0")
    mock.set_defaults(func=cmd_mock_serve)

    grasp = sub.add_parser("grasp", parents=[common], help="plan a top-down grasp")
    grasp.add_argument("--mask", required=True, help="mask PNG or RLE JSON")
    grasp.add_argument("--depth", required=True, help="16-bit depth PNG (millimeters)")
    grasp.add_argument("--intrinsics", required=True, help="JSON with fx, fy, cx, cy")
    grasp.add_argument("--planner-url", default=None)
    grasp.add_argument("--fallback", action="store_true",
                       help="fall back to the built-in planner if the external one fails")
    grasp.add_argument("--out", required=True)
    grasp.set_defaults(func=cmd_grasp)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(str(exc), file=sys.stderr)
        return exc.code
    except BackendUnreachableError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_TRANSPORT
    except FileNotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE


def entrypoint() -> None:
    sys.exit(main())
