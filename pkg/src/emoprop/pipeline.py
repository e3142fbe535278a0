"""Stage orchestration: config parsing, artifact caching, stage running.

A run is driven by a JSON config with one required entropy source (the
global seed) and either an input graph path or a synthetic-graph section.
Every stage derives its own sub-seed from the global seed and the stage
name, so stages can be rerun independently and two runs with the same
config produce byte-identical artifacts.  Completed stages are skipped
when a rerun presents the same stage config and input artifacts, keyed
by content hash rather than timestamps.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .corpus import (
    START_KINDS,
    generate_corpus,
    load_corpus_sequences,
    node_token,
    save_corpus,
)
from .embed import EmbedConfig, load_embeddings, save_embeddings, train_embeddings
from .evaluate import format_metrics_table, run_cv
from .graph import WordNetGraph, parse_wordnet_file, write_wordnet_file
from .mlp import MLPConfig, save_model, train_mlp
from .propagate import propagate, save_propagation
from .synth import SynthConfig, generate

log = logging.getLogger(__name__)

STAGE_ORDER = ("synth", "walk", "embed", "train", "propagate", "evaluate")
STAGES = (*STAGE_ORDER, "all")

# required input / produced output artifact names per stage
STAGE_INPUTS = {
    "synth": (),
    "walk": ("graph",),
    "embed": ("corpus",),
    "train": ("graph", "embeddings"),
    "propagate": ("graph", "embeddings"),
    "evaluate": ("graph", "embeddings"),
}
STAGE_OUTPUTS = {
    "synth": ("graph",),
    "walk": ("corpus",),
    "embed": ("embeddings",),
    "train": ("model",),
    "propagate": ("propagation",),
    "evaluate": ("metrics_json", "metrics_txt"),
}


class ConfigError(ValueError):
    """Malformed or out-of-range pipeline configuration."""


class PipelineError(RuntimeError):
    """Stage-level failure (missing artifacts, inconsistent inputs)."""


def stage_seed(global_seed: int, stage: str) -> int:
    """First 4 bytes, little-endian, of sha256("<seed>:<stage>")."""
    digest = hashlib.sha256(f"{global_seed}:{stage}".encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


@dataclass
class PipelineConfig:
    seed: int
    out_dir: str = "."
    graph: str | None = None
    synth: SynthConfig | None = None
    num_walks: int = 1000
    walk_length: int = 20
    cross_lingual: bool = True
    start_kind: str = "all"
    embed: EmbedConfig = field(default_factory=EmbedConfig)
    mlp: MLPConfig = field(default_factory=MLPConfig)
    retrain_per_wave: bool = False
    mask_fraction: float = 0.1
    folds: int = 10
    # explicit per-stage seed overrides; None means derived from the
    # global seed via stage_seed
    synth_seed: int | None = None
    corpus_seed: int | None = None
    embed_seed: int | None = None
    mlp_seed: int | None = None
    eval_seed: int | None = None

    def resolved_seed(self, stage: str) -> int:
        override = {
            "synth": self.synth_seed,
            "walk": self.corpus_seed,
            "embed": self.embed_seed,
            "train": self.mlp_seed,
            "evaluate": self.eval_seed,
        }.get(stage)
        return override if override is not None else stage_seed(self.seed, stage)


TOP_KEYS = {"seed", "out_dir", "graph", "synth", "corpus", "embed", "mlp", "propagate", "eval"}
SYNTH_KEYS = {
    "communities",
    "synsets_per_community",
    "lus_per_synset",
    "languages",
    "intra_probability",
    "inter_probability",
    "interlingual_fraction",
    "label_noise",
    "seed",
}
CORPUS_KEYS = {"num_walks", "length", "cross_lingual", "start_kind", "seed"}
EMBED_KEYS = {
    "dim",
    "window",
    "epochs",
    "learning_rate",
    "negatives",
    "noise_exponent",
    "min_count",
    "subword",
    "seed",
}
MLP_KEYS = {
    "variant",
    "hidden_dims",
    "dropout",
    "patience",
    "max_epochs",
    "batch_size",
    "learning_rate",
    "seed",
}
PROPAGATE_KEYS = {"retrain_per_wave", "mask_fraction"}
EVAL_KEYS = {"folds", "seed"}


def _check_keys(section: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(section) - allowed)
    if unknown:
        names = ", ".join(f"{where}{k}" if where else k for k in unknown)
        raise ConfigError(f"unknown config key(s): {names}")


def _get_section(doc: dict, name: str, allowed: set) -> dict:
    section = doc.get(name, {})
    if not isinstance(section, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    _check_keys(section, allowed, f"{name}.")
    return dict(section)


def _as_int(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where} must be an integer, got {value!r}")
    return value


def _as_opt_seed(section: dict, where: str) -> int | None:
    if "seed" not in section:
        return None
    seed = _as_int(section.pop("seed"), f"{where}.seed")
    if seed < 0:
        raise ConfigError(f"{where}.seed must be non-negative")
    return seed


def parse_config(path) -> PipelineConfig:
    """Strict JSON config: unknown keys and out-of-range values error."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    return config_from_dict(doc)


def config_from_dict(doc: dict) -> PipelineConfig:
    _check_keys(doc, TOP_KEYS, "")
    if "seed" not in doc:
        raise ConfigError("config must set an explicit seed")
    seed = _as_int(doc["seed"], "seed")
    if seed < 0:
        raise ConfigError("seed must be non-negative")

    graph = doc.get("graph")
    if graph is not None and not isinstance(graph, str):
        raise ConfigError("graph must be a path string")
    if graph is not None and "synth" in doc:
        raise ConfigError("config sets both graph and synth; choose one")
    if graph is None and "synth" not in doc:
        raise ConfigError("config needs a graph path or a synth section")

    out_dir = doc.get("out_dir", ".")
    if not isinstance(out_dir, str):
        raise ConfigError("out_dir must be a path string")

    synth_cfg = None
    synth_seed = None
    if "synth" in doc:
        section = _get_section(doc, "synth", SYNTH_KEYS)
        synth_seed = _as_opt_seed(section, "synth")
        if "languages" in section:
            langs = section["languages"]
            if not isinstance(langs, list) or not all(isinstance(x, str) for x in langs):
                raise ConfigError("synth.languages must be a list of strings")
            section["languages"] = tuple(langs)
        try:
            synth_cfg = SynthConfig(**section)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"synth: {exc}") from exc

    corpus = _get_section(doc, "corpus", CORPUS_KEYS)
    corpus_seed = _as_opt_seed(corpus, "corpus")
    num_walks = _as_int(corpus.get("num_walks", 1000), "corpus.num_walks")
    walk_length = _as_int(corpus.get("length", 20), "corpus.length")
    if num_walks < 1:
        raise ConfigError("corpus.num_walks must be >= 1")
    if walk_length < 1:
        raise ConfigError("corpus.length must be >= 1")
    cross_lingual = corpus.get("cross_lingual", True)
    if not isinstance(cross_lingual, bool):
        raise ConfigError("corpus.cross_lingual must be a boolean")
    start_kind = corpus.get("start_kind", "all")
    if start_kind not in START_KINDS:
        raise ConfigError(f"corpus.start_kind must be one of {START_KINDS}")

    embed_section = _get_section(doc, "embed", EMBED_KEYS)
    embed_seed = _as_opt_seed(embed_section, "embed")
    if embed_section.get("subword") is not None:
        sub = embed_section["subword"]
        if not isinstance(sub, list) or len(sub) != 2:
            raise ConfigError("embed.subword must be null or [min_n, max_n]")
        embed_section["subword"] = (
            _as_int(sub[0], "embed.subword[0]"),
            _as_int(sub[1], "embed.subword[1]"),
        )
    try:
        embed_cfg = EmbedConfig(**embed_section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"embed: {exc}") from exc

    mlp_section = _get_section(doc, "mlp", MLP_KEYS)
    mlp_seed = _as_opt_seed(mlp_section, "mlp")
    if mlp_section.get("hidden_dims") is not None:
        dims = mlp_section["hidden_dims"]
        if not isinstance(dims, list):
            raise ConfigError("mlp.hidden_dims must be null or a list of integers")
        mlp_section["hidden_dims"] = tuple(
            _as_int(h, "mlp.hidden_dims") for h in dims
        )
    try:
        mlp_cfg = MLPConfig(input_dim=embed_cfg.dim, **mlp_section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"mlp: {exc}") from exc

    prop = _get_section(doc, "propagate", PROPAGATE_KEYS)
    retrain = prop.get("retrain_per_wave", False)
    if not isinstance(retrain, bool):
        raise ConfigError("propagate.retrain_per_wave must be a boolean")
    mask_fraction = prop.get("mask_fraction", 0.1)
    if isinstance(mask_fraction, bool) or not isinstance(mask_fraction, (int, float)):
        raise ConfigError("propagate.mask_fraction must be a number")
    if not 0.0 < float(mask_fraction) < 1.0:
        raise ConfigError("propagate.mask_fraction must be in (0, 1)")

    eval_section = _get_section(doc, "eval", EVAL_KEYS)
    eval_seed = _as_opt_seed(eval_section, "eval")
    folds = _as_int(eval_section.get("folds", 10), "eval.folds")
    if folds < 3:
        raise ConfigError("eval.folds must be >= 3")

    return PipelineConfig(
        seed=seed,
        out_dir=out_dir,
        graph=graph,
        synth=synth_cfg,
        num_walks=num_walks,
        walk_length=walk_length,
        cross_lingual=cross_lingual,
        start_kind=start_kind,
        embed=embed_cfg,
        mlp=mlp_cfg,
        retrain_per_wave=retrain,
        mask_fraction=float(mask_fraction),
        folds=folds,
        synth_seed=synth_seed,
        corpus_seed=corpus_seed,
        embed_seed=embed_seed,
        mlp_seed=mlp_seed,
        eval_seed=eval_seed,
    )


def artifact_paths(cfg: PipelineConfig) -> dict[str, Path]:
    out = Path(cfg.out_dir)
    return {
        "graph": Path(cfg.graph) if cfg.graph is not None else out / "graph.jsonl",
        "corpus": out / "corpus.txt",
        "embeddings": out / "embeddings.txt",
        "model": out / "model.ckpt",
        "propagation": out / "propagation.jsonl",
        "metrics_json": out / "metrics.json",
        "metrics_txt": out / "metrics.txt",
    }


def _hash_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _stage_config(stage: str, cfg: PipelineConfig) -> dict:
    """The config subset a stage's output depends on, for cache keying."""
    mlp_dict = asdict(cfg.mlp)
    mlp_dict.pop("input_dim")  # derived from the embeddings artifact
    mlp_dict["seed"] = cfg.resolved_seed("train")
    if stage == "synth":
        return {**asdict(cfg.synth), "seed": cfg.resolved_seed("synth")}
    if stage == "walk":
        return {
            "num_walks": cfg.num_walks,
            "length": cfg.walk_length,
            "cross_lingual": cfg.cross_lingual,
            "start_kind": cfg.start_kind,
            "seed": cfg.resolved_seed("walk"),
        }
    if stage == "embed":
        return {**asdict(cfg.embed), "seed": cfg.resolved_seed("embed")}
    if stage == "train":
        return {"mlp": mlp_dict, "split_seed": stage_seed(cfg.seed, "train-split")}
    if stage == "propagate":
        return {
            "mlp": mlp_dict,
            "retrain_per_wave": cfg.retrain_per_wave,
            "mask_fraction": cfg.mask_fraction,
            "mask_seed": stage_seed(cfg.seed, "propagate"),
        }
    if stage == "evaluate":
        return {
            "mlp": mlp_dict,
            "retrain_per_wave": cfg.retrain_per_wave,
            "folds": cfg.folds,
            "seed": cfg.resolved_seed("evaluate"),
        }
    raise PipelineError(f"unknown stage {stage!r}")


def _annotated_split(
    g: WordNetGraph, rng: np.random.Generator, fractions: tuple[float, ...]
) -> list[list]:
    """Shuffle annotated LUs and cut off len(fractions) leading groups
    sized round(f*N) (min 1); the remainder is the final group."""
    lus = sorted(g.annotations)
    order = rng.permutation(len(lus))
    shuffled = [lus[i] for i in order]
    groups = []
    pos = 0
    for f in fractions:
        size = max(1, round(f * len(lus)))
        groups.append(shuffled[pos : pos + size])
        pos += size
    groups.append(shuffled[pos:])
    return groups


def _load_stage_inputs(cfg: PipelineConfig, paths: dict) -> tuple[WordNetGraph, object]:
    g = parse_wordnet_file(paths["graph"])
    table = load_embeddings(paths["embeddings"])
    return g, table


def _mlp_for_table(cfg: PipelineConfig, table) -> MLPConfig:
    return replace(cfg.mlp, input_dim=table.dim, seed=cfg.resolved_seed("train"))


def _stage_synth(cfg: PipelineConfig, paths: dict) -> str:
    scfg = replace(cfg.synth, seed=cfg.resolved_seed("synth"))
    g, _gold = generate(scfg)
    write_wordnet_file(g, paths["graph"])
    return (
        f"synth: {len(g.nodes)} nodes, {len(g.edges)} edges, "
        f"{len(g.annotations)} annotated LUs -> {paths['graph']}"
    )


def _stage_walk(cfg: PipelineConfig, paths: dict) -> str:
    g = parse_wordnet_file(paths["graph"])
    corpus = generate_corpus(
        g,
        cfg.num_walks,
        cfg.walk_length,
        cfg.resolved_seed("walk"),
        cross_lingual=cfg.cross_lingual,
        start_kind=cfg.start_kind,
    )
    save_corpus(corpus, paths["corpus"])
    mode = "cross-lingual" if cfg.cross_lingual else "monolingual"
    return (
        f"walk: {len(corpus.sequences)} {mode} walks of length {cfg.walk_length} "
        f"-> {paths['corpus']}"
    )


def _stage_embed(cfg: PipelineConfig, paths: dict) -> str:
    sequences = load_corpus_sequences(paths["corpus"])
    ecfg = replace(cfg.embed, seed=cfg.resolved_seed("embed"))
    table = train_embeddings(sequences, ecfg)
    save_embeddings(table, paths["embeddings"])
    final_loss = table.loss_history[-1] if table.loss_history else float("nan")
    return (
        f"embed: {len(table.vocab.tokens)} tokens, dim {table.dim}, "
        f"final loss {final_loss:.4f} -> {paths['embeddings']}"
    )


def _require_embeddings(table, g: WordNetGraph, lus) -> None:
    missing = [node_token(lu) for lu in lus if node_token(lu) not in table]
    if missing:
        shown = ", ".join(missing[:10])
        more = f" (+{len(missing) - 10} more)" if len(missing) > 10 else ""
        raise PipelineError(f"no embedding for annotated LUs: {shown}{more}")


def _stage_train(cfg: PipelineConfig, paths: dict) -> str:
    g, table = _load_stage_inputs(cfg, paths)
    if len(g.annotations) < 2:
        raise PipelineError("train needs at least 2 annotated LUs")
    rng = np.random.default_rng(stage_seed(cfg.seed, "train-split"))
    val_lus, train_lus = _annotated_split(g, rng, (0.1,))
    _require_embeddings(table, g, (*train_lus, *val_lus))
    mcfg = _mlp_for_table(cfg, table)

    def matrix(lus):
        x = np.stack([table.vector_of(node_token(lu)) for lu in lus])
        y = np.stack([g.annotations[lu] for lu in lus])
        return x, y

    model, report = train_mlp(mcfg, matrix(train_lus), matrix(val_lus))
    save_model(model, paths["model"])
    return (
        f"train: {mcfg.variant} ({model.num_parameters()} parameters), "
        f"best val loss {report.best_val_loss:.4f} at epoch {report.best_epoch} "
        f"-> {paths['model']}"
    )


def _stage_propagate(cfg: PipelineConfig, paths: dict) -> str:
    g, table = _load_stage_inputs(cfg, paths)
    if len(g.annotations) < 3:
        raise PipelineError("propagate needs at least 3 annotated LUs")
    rng = np.random.default_rng(stage_seed(cfg.seed, "propagate"))
    targets, val_lus, seed_lus = _annotated_split(g, rng, (cfg.mask_fraction, 0.1))
    if not seed_lus:
        raise PipelineError("mask_fraction leaves no seed LUs")
    _require_embeddings(table, g, sorted(g.annotations))
    mcfg = _mlp_for_table(cfg, table)
    result = propagate(
        g,
        table,
        mcfg,
        {lu: g.annotations[lu] for lu in seed_lus},
        {lu: g.annotations[lu] for lu in val_lus},
        targets,
        retrain_per_wave=cfg.retrain_per_wave,
    )
    save_propagation(result, paths["propagation"])
    return (
        f"propagate: {len(result.predictions)} LUs in {len(result.plan.waves)} waves "
        f"({len(result.plan.unreachable)} unreachable) -> {paths['propagation']}"
    )


def _stage_evaluate(cfg: PipelineConfig, paths: dict) -> str:
    g, table = _load_stage_inputs(cfg, paths)
    _require_embeddings(table, g, sorted(g.annotations))
    mcfg = _mlp_for_table(cfg, table)
    cv = run_cv(
        g,
        table,
        mcfg,
        cfg.resolved_seed("evaluate"),
        retrain_per_wave=cfg.retrain_per_wave,
        n_folds=cfg.folds,
    )
    paths["metrics_json"].write_text(
        json.dumps(cv.aggregate, indent=2) + "\n", encoding="utf-8"
    )
    paths["metrics_txt"].write_text(
        format_metrics_table(cv.aggregate) + "\n", encoding="utf-8"
    )
    micro = cv.aggregate["micro"]["f1"]
    pooled = cv.aggregate["pooled_r"]
    return (
        f"evaluate: micro F1 {micro['mean']:.3f} ± {micro['sd']:.3f}, "
        f"pooled R {pooled['mean']:.3f} ± {pooled['sd']:.3f} "
        f"over {cfg.folds} folds -> {paths['metrics_json']}"
    )


_STAGE_FN: dict[str, Callable[[PipelineConfig, dict], str]] = {
    "synth": _stage_synth,
    "walk": _stage_walk,
    "embed": _stage_embed,
    "train": _stage_train,
    "propagate": _stage_propagate,
    "evaluate": _stage_evaluate,
}


def _cache_stamp_path(cfg: PipelineConfig, stage: str) -> Path:
    return Path(cfg.out_dir) / ".cache" / f"{stage}.json"


def run_stage(stage: str, cfg: PipelineConfig) -> tuple[str, bool]:
    """Run one stage, or skip it when the cache stamp still matches.

    Returns (one-line summary, cached flag).
    """
    if stage == "synth" and cfg.synth is None:
        raise PipelineError("synth stage requires a synth section in the config")
    paths = artifact_paths(cfg)
    for name in STAGE_INPUTS[stage]:
        if not paths[name].exists():
            producer = next(s for s, outs in STAGE_OUTPUTS.items() if name in outs)
            raise PipelineError(
                f"missing input artifact {paths[name]} (produced by the "
                f"{producer!r} stage)"
            )

    key_src = hashlib.sha256()
    key_src.update(stage.encode())
    key_src.update(
        json.dumps(_stage_config(stage, cfg), sort_keys=True, default=list).encode()
    )
    for name in STAGE_INPUTS[stage]:
        key_src.update(name.encode())
        key_src.update(_hash_file(paths[name]).encode())
    key = key_src.hexdigest()

    stamp_path = _cache_stamp_path(cfg, stage)
    outputs = {str(paths[name]): None for name in STAGE_OUTPUTS[stage]}
    if stamp_path.exists():
        try:
            stamp = json.loads(stamp_path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError):
            stamp = {}
        if stamp.get("key") == key and all(
            Path(p).exists() and _hash_file(Path(p)) == digest
            for p, digest in stamp.get("outputs", {}).items()
        ) and set(stamp.get("outputs", {})) == set(outputs):
            return f"{stage}: cached ({', '.join(sorted(outputs))})", True

    log.debug("running stage %s (key %s)", stage, key[:12])
    summary = _STAGE_FN[stage](cfg, paths)
    stamp_path.parent.mkdir(parents=True, exist_ok=True)
    stamp = {
        "key": key,
        "outputs": {str(paths[n]): _hash_file(paths[n]) for n in STAGE_OUTPUTS[stage]},
    }
    stamp_path.write_text(json.dumps(stamp, indent=2) + "\n", encoding="utf-8")
    return summary, False


def run(stage: str, cfg: PipelineConfig, echo: Callable[[str], None] = print) -> int:
    """Run one stage or, for "all", every applicable stage in dependency
    order.  Prints one summary line per stage; returns a process exit
    status (errors are raised, the CLI maps them to nonzero)."""
    if stage not in STAGES:
        raise PipelineError(f"unknown stage {stage!r}; choose from {STAGES}")
    Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
    if stage == "all":
        stages = [s for s in STAGE_ORDER if s != "synth" or cfg.synth is not None]
    else:
        stages = [stage]
    for s in stages:
        summary, _cached = run_stage(s, cfg)
        echo(summary)
    return 0
