"""Command-line entry point: `emoprop <stage> --config cfg.json`."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .graph import GraphError
from .pipeline import STAGES, ConfigError, PipelineError, parse_config, run

_EPILOG = """\
config file (JSON; unknown keys are rejected):
  seed        required; the only entropy source, every stage derives its
              own sub-seed from it unless a section sets "seed" itself
  graph       path to an existing graph file (exclusive with "synth")
  out_dir     artifact directory (default "."; --out-dir overrides)
  synth       {communities: 4, synsets_per_community: 10, lus_per_synset: 3,
               languages: ["pl", "en"], intra_probability: 0.3,
               inter_probability: 0.02, interlingual_fraction: 0.5,
               label_noise: 0.0}
  corpus      {num_walks: 1000, length: 20, cross_lingual: true,
               start_kind: "all" | "synset" | "lu"}
  embed       {dim: 300, window: 5, epochs: 5, learning_rate: 0.025,
               negatives: 5, noise_exponent: 0.75, min_count: 1,
               subword: null | [min_n, max_n]}
  mlp         {variant: "base" | "deep", hidden_dims: null, dropout: 0.2,
               patience: 30, max_epochs: 1000, batch_size: 256,
               learning_rate: 0.001}
  propagate   {retrain_per_wave: false, mask_fraction: 0.1}
  eval        {folds: 10}

stages:
  synth       generate a synthetic bilingual graph  -> graph.jsonl
  walk        self-avoiding random-walk corpus      -> corpus.txt
  embed       skip-gram embeddings of the corpus    -> embeddings.txt
  train       regressor on all annotated LUs        -> model.ckpt
  propagate   predict a masked fraction of LUs      -> propagation.jsonl
  evaluate    10-fold cross-validated metrics       -> metrics.json/.txt
  all         every applicable stage in dependency order, skipping
              stages whose config and inputs are unchanged (content hash)

environment:
  EMOPROP_LOG sets the log level (DEBUG, INFO, WARNING, ERROR)
"""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emoprop",
        description="Lexical-graph emotion propagation pipeline: random-walk "
        "embeddings, multilabel regression, cross-validated evaluation.",
        epilog=_EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("stage", choices=STAGES, help="pipeline stage to run")
    parser.add_argument("--config", required=True, help="path to the JSON config")
    parser.add_argument("--out-dir", help="override the config's artifact directory")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=os.environ.get("EMOPROP_LOG", "WARNING").upper())
    try:
        cfg = parse_config(args.config)
        if args.out_dir is not None:
            cfg.out_dir = args.out_dir
        return run(args.stage, cfg)
    except (ConfigError, PipelineError, GraphError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
