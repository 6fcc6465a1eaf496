#!/usr/bin/env python3
"""Desk-scale ablation experiment against the scripted mock backends.

Builds the fixture corpus, serves its mock script, evaluates the three
pipeline variants (vlm-only, no-reprompt, full), and prints the
per-affordance table. Success counts must be weakly increasing across
the variants; the scripted corpus is authored to make both steps strict.
"""

import argparse
import tempfile
from pathlib import Path

from affground.datasets import load_manifest
from affground.fixtures import build_fixture_corpus
from affground.gateway import BackendConfig, BackendGateway
from affground.harness import evaluate_manifest
from affground.metrics import MetricConfig, aggregate
from affground.mockserver import load_mock_script, serve_mock
from affground.pipeline import PipelineConfig

ABLATIONS = ("vlm-only", "no-reprompt", "full")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--corpus", default=None,
                        help="existing corpus directory (default: build a fresh one)")
    parser.add_argument("--workers", type=int, default=4)
    args = parser.parse_args()

    if args.corpus:
        root = Path(args.corpus)
        manifest_path = root / "manifest.json"
        script_path = root / "mock_script.json"
    else:
        root = Path(tempfile.mkdtemp(prefix="affground_corpus_"))
        corpus = build_fixture_corpus(root)
        manifest_path, script_path = corpus.manifest_path, corpus.script_path

    manifest = load_manifest(manifest_path)
    handle = serve_mock(load_mock_script(script_path))
    try:
        gateway = BackendGateway(
            BackendConfig.from_base(handle.url, retry_backoff_base=0.01)
        )
        summaries = {}
        for ablation in ABLATIONS:
            cfg = PipelineConfig(
                object_vocabulary=manifest.object_vocabulary, ablation=ablation
            )
            outcome = evaluate_manifest(
                gateway, manifest, cfg, MetricConfig(), workers=args.workers
            )
            summaries[ablation] = aggregate(list(outcome.rows))

        affordances = sorted(summaries["full"]["per_affordance"])
        width = max(len(a) for a in affordances) + 2
        header = " " * width + "".join(f"{name:>14}" for name in ABLATIONS)
        print(header)
        for affordance in affordances:
            row = f"{affordance:<{width}}"
            for ablation in ABLATIONS:
                row += f"{summaries[ablation]['per_affordance'][affordance]:>14.3f}"
            print(row)
        print("-" * len(header))
        row = f"{'average':<{width}}"
        for ablation in ABLATIONS:
            row += f"{summaries[ablation]['average']:>14.3f}"
        print(row)
    finally:
        handle.stop()


if __name__ == "__main__":
    main()
