#!/usr/bin/env python3
"""Materialize the synthetic scripted fixture corpus to a directory."""

import argparse
from pathlib import Path

from affground.fixtures import build_fixture_corpus


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="fixture_corpus", help="output directory")
    args = parser.parse_args()

    corpus = build_fixture_corpus(Path(args.out))
    print(f"manifest:    {corpus.manifest_path}")
    print(f"mock script: {corpus.script_path}")
    print(f"config:      {corpus.config_path}")


if __name__ == "__main__":
    main()
