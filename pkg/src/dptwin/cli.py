"""Command-line pipeline: gen-corpus, train, generate, evaluate, pipeline."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
from pathlib import Path

from .accountant import AccountantError, PrivacyLedger, PrivacySpec
from .classifier import ClassifierError, train_tfidf_classifier
from .corpus import Corpus, CorpusError, ToyCorpusSpec, generate_toy_corpus, load_jsonl, split, write_jsonl
from .dp_optim import DpOptimConfig, DpOptimError
from .evaluation import (
    AuditReport,
    canary_extraction,
    distribution_similarity,
    dp_classifier_baseline,
    duplicate_pairs,
    label_fidelity,
    utility_gap,
)
from .model import LanguageModel, LossConfig, ModelConfig, ModelError, SamplerConfig
from .schema import AttributeSchema, PromptTemplate, SchemaError
from .synthesis import GenerationPlan, SynthesisError, TrainPlan, generate, train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

_CONFIG_ERRORS = (SchemaError, CorpusError, SynthesisError, ModelError, DpOptimError,
                  AccountantError, ClassifierError, KeyError, TypeError, ValueError)

log = logging.getLogger("dptwin")


class ConfigError(ValueError):
    pass


def _config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def load_config(path: str, overrides: argparse.Namespace) -> dict:
    try:
        config = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if getattr(overrides, "seed", None) is not None:
        config["seed"] = overrides.seed
    if getattr(overrides, "out", None) is not None:
        config["out"] = overrides.out
    if getattr(overrides, "epsilon", None) is not None:
        eps = overrides.epsilon
        config.setdefault("train", {})["epsilon"] = None if eps in ("inf", "none") else float(eps)
    if getattr(overrides, "lam", None) is not None:
        config.setdefault("train", {})["lambda"] = overrides.lam
    config.setdefault("seed", 0)
    if "out" not in config:
        raise ConfigError("config field 'out' (output directory) is required")
    return config


def _schema(config: dict) -> AttributeSchema:
    if "schema" not in config:
        raise ConfigError("config field 'schema' is required")
    return AttributeSchema.from_dict(config["schema"])


def _template(config: dict) -> PromptTemplate:
    if "template" not in config:
        raise ConfigError("config field 'template' is required")
    return PromptTemplate(config["template"])


def _toy_spec(config: dict, schema: AttributeSchema) -> ToyCorpusSpec:
    toy = config["corpus"]["toy"]
    return ToyCorpusSpec(
        schema=schema,
        lexicons={
            name: {v: tuple(words) for v, words in table.items()}
            for name, table in toy["lexicons"].items()
        },
        neutral=tuple(toy["neutral"]),
        records_per_class=int(toy["records_per_class"]),
        length_range=tuple(toy.get("length_range", (8, 16))),
        canaries=tuple((c[0], int(c[1])) for c in toy.get("canaries", [])),
        seed=int(config["seed"]),
        signature_fraction=float(toy.get("signature_fraction", 0.7)),
        public_records=toy.get("public_records"),
    )


def _train_plan(config: dict) -> TrainPlan:
    t = dict(config.get("train", {}))
    model_cfg = None
    if "model" in t:
        m = t.pop("model")
        model_cfg = ModelConfig(
            vocab_size=8,  # placeholder; resized to the built vocabulary
            embed_dim=int(m.get("embed_dim", 64)),
            hidden_dim=int(m.get("hidden_dim", 128)),
            context_len=int(m.get("context_len", 64)),
            init_seed=int(config["seed"]),
        )
    loss = LossConfig(
        lam=float(t.pop("lambda", 0.2)),
        wrong_sample_k=t.pop("wrong_sample_k", None),
        wrong_cap_per_token=t.pop("wrong_cap_per_token", None),
    )
    eps = t.pop("epsilon", 8.0)
    if isinstance(eps, str):
        eps = None if eps in ("inf", "none") else float(eps)
    return TrainPlan(
        pretrain_epochs=int(t.pop("pretrain_epochs", 2)),
        finetune_epochs=int(t.pop("finetune_epochs", 5)),
        epsilon=eps,
        delta=t.pop("delta", None),
        clip_norm=float(t.pop("clip_norm", 1.0)),
        noise_multiplier=t.pop("noise_multiplier", None),
        batch_size=int(t.pop("batch_size", 100)),
        lr_dp=float(t.pop("lr_dp", 1e-3)),
        lr_nonprivate=float(t.pop("lr_nonprivate", 1e-4)),
        nonprivate_finetune_epochs=int(t.pop("nonprivate_finetune_epochs", 2)),
        loss=loss,
        model=model_cfg,
        vocab_max_size=int(t.pop("vocab_max_size", 1024)),
        mask_instruction_loss=bool(t.pop("mask_instruction_loss", False)),
        wrong_prompt_mode=t.pop("wrong_prompt_mode", "all_differ"),
        vocab_from_private=bool(t.pop("vocab_from_private", True)),
        master_seed=int(config["seed"]),
    )


def _generation_plan(config: dict, seed_offset: int = 0) -> GenerationPlan:
    g = config.get("generate", {})
    return GenerationPlan(
        total=int(g.get("total", 1000)),
        proportions=g.get("proportions"),
        sampler=SamplerConfig(
            nucleus_p=float(g.get("nucleus_p", 0.8)),
            max_new_tokens=g.get("max_new_tokens"),
        ),
        min_length=int(g.get("min_length", 3)),
        max_length=g.get("max_length"),
        seed=int(config["seed"]) + seed_offset,
    )


def _out_dir(config: dict) -> Path:
    out = Path(config["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _corpus_paths(out: Path) -> dict[str, Path]:
    return {
        "public": out / "public.jsonl",
        "train": out / "train.jsonl",
        "test": out / "test.jsonl",
        "manifest": out / "corpus_manifest.json",
    }


def cmd_gen_corpus(config: dict) -> int:
    out = _out_dir(config)
    schema = _schema(config)
    if "toy" not in config.get("corpus", {}):
        raise ConfigError("gen-corpus requires a corpus.toy section")
    spec = _toy_spec(config, schema)
    private, public = generate_toy_corpus(spec)
    frac = float(config["corpus"]["toy"].get("train_fraction", 0.8))
    train_c, test_c = split(private, frac, seed=int(config["seed"]))
    paths = _corpus_paths(out)
    write_jsonl(public, paths["public"])
    write_jsonl(train_c, paths["train"])
    write_jsonl(test_c, paths["test"])
    manifest = {
        "seed": config["seed"],
        "config_hash": _config_hash(config),
        "sizes": {"public": len(public), "train": len(train_c), "test": len(test_c)},
        "canaries": [[c, k] for c, k in spec.canaries],
        "files": {k: str(v) for k, v in paths.items() if k != "manifest"},
    }
    paths["manifest"].write_text(json.dumps(manifest, indent=2, sort_keys=True))
    log.info("wrote corpora to %s", out)
    return EXIT_OK


def _load_corpora(config: dict, schema: AttributeSchema) -> dict[str, Corpus]:
    out = _out_dir(config)
    corpus_cfg = config.get("corpus", {})
    if "jsonl" in corpus_cfg:
        paths = corpus_cfg["jsonl"]
        return {
            "public": load_jsonl(paths["public"], schema),
            "train": load_jsonl(paths["train"], schema),
            "test": load_jsonl(paths["test"], schema, role="test"),
        }
    paths = _corpus_paths(out)
    for key in ("public", "train", "test"):
        if not paths[key].exists():
            raise ConfigError(f"missing corpus file {paths[key]}; run gen-corpus first")
    return {
        "public": load_jsonl(paths["public"], schema),
        "train": load_jsonl(paths["train"], schema),
        "test": load_jsonl(paths["test"], schema, role="test"),
    }


def cmd_train(config: dict) -> int:
    out = _out_dir(config)
    schema = _schema(config)
    template = _template(config)
    corpora = _load_corpora(config, schema)
    plan = _train_plan(config)
    model, ledger = train(plan, corpora["public"], corpora["train"], template, schema)
    n = len(corpora["train"])
    delta = plan.delta if plan.delta is not None else 1.0 / (2.0 * n)
    spent = ledger.spent_epsilon(delta)
    sigma = ledger.entries[0][0] if ledger.entries else 0.0
    snapshot = ledger.snapshot(delta)
    snapshot.update({"sigma": sigma, "config_hash": _config_hash(config), "seed": config["seed"]})
    (out / "ledger.json").write_text(json.dumps(snapshot, indent=2, sort_keys=True))
    model.save(
        out / "model.ckpt",
        ledger_snapshot=snapshot,
        extra={"schema": schema.to_dict(), "template": template.template,
               "lambda": plan.loss.lam, "config_hash": _config_hash(config)},
    )
    print(f"noise multiplier sigma = {sigma:.6g}")
    print(f"spent epsilon = {spent:.6g} at delta = {delta:.3g}")
    return EXIT_OK


def cmd_generate(config: dict, checkpoint: str | None = None) -> int:
    out = _out_dir(config)
    ckpt = Path(checkpoint) if checkpoint else out / "model.ckpt"
    if not ckpt.exists():
        raise ConfigError(f"checkpoint not found: {ckpt}")
    model, header = LanguageModel.load(ckpt)
    schema = AttributeSchema.from_dict(header["schema"]) if "schema" in header else _schema(config)
    template = PromptTemplate(header["template"]) if "template" in header else _template(config)
    plan = _generation_plan(config)
    corpus, meta = generate(model, plan, template, schema)
    write_jsonl(corpus, out / "synthetic.jsonl")
    ledger_snap = header.get("ledger", {})
    meta.update(
        {
            "epsilon": ledger_snap.get("spent_epsilon"),
            "delta": ledger_snap.get("delta"),
            "sigma": ledger_snap.get("sigma"),
            "ledger_entries": ledger_snap.get("entries", []),
            "lambda": header.get("lambda"),
            "config_hash": _config_hash(config),
            "master_seed": config["seed"],
        }
    )
    (out / "synthetic_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    log.info("wrote %d synthetic records to %s", len(corpus), out / "synthetic.jsonl")
    return EXIT_OK


def cmd_evaluate(
    config: dict,
    synthetic_path: str | None = None,
    train_path: str | None = None,
    test_path: str | None = None,
) -> int:
    out = _out_dir(config)
    schema = _schema(config)
    paths = _corpus_paths(out)
    synth_p = Path(synthetic_path) if synthetic_path else out / "synthetic.jsonl"
    train_p = Path(train_path) if train_path else paths["train"]
    test_p = Path(test_path) if test_path else paths["test"]
    for p in (synth_p, train_p, test_p):
        if not p.exists():
            raise ConfigError(f"missing corpus file {p}")
    synthetic = load_jsonl(synth_p, schema, role="synthetic")
    real_train = load_jsonl(train_p, schema)
    real_test = load_jsonl(test_p, schema, role="test")
    if len(synthetic) == 0:
        raise ConfigError("synthetic corpus is empty; nothing to evaluate")
    attribute = schema.names[0]
    eval_cfg = config.get("evaluate", {})
    canaries = [c for c, _ in config.get("corpus", {}).get("toy", {}).get("canaries", [])]
    manifest_p = paths["manifest"]
    if not canaries and manifest_p.exists():
        canaries = [c for c, _ in json.loads(manifest_p.read_text()).get("canaries", [])]
    pairs = duplicate_pairs(synthetic, real_train)
    acc_real, acc_synth = utility_gap(real_train, synthetic, real_test, attribute)
    reference = train_tfidf_classifier(real_train, attribute)
    acc_dp = None
    if eval_cfg.get("dp_baseline", False):
        eps = eval_cfg.get("dp_baseline_epsilon")
        epochs = int(eval_cfg.get("dp_baseline_epochs", 200))
        spec = None
        if eps is not None and math.isfinite(float(eps)):
            n = len(real_train)
            q = min(int(eval_cfg.get("dp_baseline_batch", 100)) / n, 1.0)
            steps = epochs * max(1, round(1.0 / q))
            spec = PrivacySpec(epsilon=float(eps), delta=1.0 / (2 * n), n=n, q=q, steps=steps)
        acc_dp = dp_classifier_baseline(
            real_train, real_test, attribute, spec,
            DpOptimConfig(clip_norm=1.0, lr=0.05, seed=int(config["seed"])),
            epochs=epochs,
        )
    report = AuditReport(
        duplicate_pair_count=len(pairs),
        duplicate_distinct_synthetic=len({i for i, _ in pairs}),
        canary_counts=canary_extraction(synthetic, canaries),
        acc_real=acc_real,
        acc_synthetic=acc_synth,
        acc_dp_real=acc_dp,
        label_fidelity_rate=label_fidelity(synthetic, reference, attribute),
        divergence_score=distribution_similarity(real_train, synthetic),
        metadata={
            "attribute": attribute,
            "config_hash": _config_hash(config),
            "seed": config["seed"],
            "n_synthetic": len(synthetic),
            "n_train": len(real_train),
            "n_test": len(real_test),
        },
    )
    (out / "report.json").write_text(report.to_json())
    print(report.to_table())
    return EXIT_OK


def cmd_pipeline(config: dict) -> int:
    out = _out_dir(config)
    if "toy" in config.get("corpus", {}):
        cmd_gen_corpus(config)
    cmd_train(config)
    cmd_generate(config)
    cmd_evaluate(config)
    ledger = json.loads((out / "ledger.json").read_text())
    manifest = {
        "seed": config["seed"],
        "config_hash": _config_hash(config),
        "spent_epsilon": ledger.get("spent_epsilon"),
        "delta": ledger.get("delta"),
        "artifacts": {
            name: str(out / name)
            for name in ("public.jsonl", "train.jsonl", "test.jsonl", "model.ckpt",
                         "ledger.json", "synthetic.jsonl", "synthetic_meta.json", "report.json")
            if (out / name).exists()
        },
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dptwin",
        description="differentially private synthetic text twins",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("gen-corpus", "train", "generate", "evaluate", "pipeline"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="pipeline config JSON")
        p.add_argument("--seed", type=int, default=None, help="override master seed")
        p.add_argument("--epsilon", default=None,
                       help="override target epsilon ('inf' for non-private)")
        p.add_argument("--lambda", dest="lam", type=float, default=None,
                       help="override prompt-mismatch weight")
        p.add_argument("--out", default=None, help="override output directory")
        if name == "generate":
            p.add_argument("--checkpoint", default=None)
        if name == "evaluate":
            p.add_argument("--synthetic", default=None)
            p.add_argument("--train-corpus", default=None)
            p.add_argument("--test-corpus", default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("DPTWIN_LOG_LEVEL", "WARNING"))
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "gen-corpus":
            return cmd_gen_corpus(config)
        if args.command == "train":
            return cmd_train(config)
        if args.command == "generate":
            return cmd_generate(config, args.checkpoint)
        if args.command == "evaluate":
            return cmd_evaluate(config, args.synthetic, args.train_corpus, args.test_corpus)
        if args.command == "pipeline":
            return cmd_pipeline(config)
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError,) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _CONFIG_ERRORS as exc:
        # invalid configuration surfaces before any training work starts
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG if isinstance(exc, (SchemaError, CorpusError, KeyError, TypeError)) else EXIT_RUNTIME
    except OSError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
