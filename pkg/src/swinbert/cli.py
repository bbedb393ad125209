"""``swinbert`` command line: synth, featurize, train, eval, gradcheck, export."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import checkpoint
from .config import ModelConfig, RunConfig, TrainConfig, deep_merge, load_run_config, save_run_config
from .data import SynthSpec, generate_synthetic, load_examples, load_manifest
from .linguistic import CHARS, Vocabulary, char_encode
from .models import FEATURES, SwinBert, attach_acoustic_matrices, fusion_mode_select

log = logging.getLogger("swinbert")

RUN_CONFIG = "run_config.json"
VOCAB = "vocab.txt"


class CLIError(Exception):
    pass


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run config; command-line flags override it")
    p.add_argument("--variant", choices=("acoustic", "linguistic", "fusion"))
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--checkpoint")
    p.add_argument("--manifest")
    p.add_argument("--split")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--preset", choices=("desk", "full"), default="desk")
    p.add_argument("--no-demographics", action="store_true")
    p.add_argument("--no-char-branch", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swinbert", description="Acoustic/linguistic/fusion dementia-detection models")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a seeded synthetic corpus")
    p.add_argument("--n", type=int, default=8, help="recordings per class")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration", type=float, default=1.0)
    p.add_argument("--test-fraction", type=float, default=0.0)
    p.add_argument("--out", required=True)

    for name, help_ in (
        ("featurize", "cache log-mels, char matrices and acoustic matrices"),
        ("train", "train a model variant"),
        ("eval", "evaluate a trained checkpoint"),
        ("export", "export embeddings as CSV"),
    ):
        p = sub.add_parser(name, help=help_)
        _common(p)
        if name == "export":
            p.add_argument("--feature", choices=FEATURES, default="xa")

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--seed", type=int, default=0)
    return parser


# -- config resolution ---------------------------------------------------


def resolve_config(args, base: RunConfig | None = None) -> RunConfig:
    """Config file, then flags; every problem is reported at once."""
    if base is None:
        variant = args.variant or "fusion"
        char = False if args.no_char_branch else None
        model = ModelConfig.for_variant(variant, args.preset, not args.no_demographics, char)
        base = RunConfig(model=model, train=TrainConfig.for_variant(variant))
    d = base.to_dict()
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise CLIError(f"config file not found: {path}")
        d = deep_merge(d, json.loads(path.read_text()))
    if args.variant:
        d["model"]["variant"] = args.variant
    if args.no_demographics:
        d["model"]["acoustic"]["use_demographics"] = False
    if args.no_char_branch:
        d["model"]["linguistic"]["use_char_branch"] = False
    for key in ("seed", "epochs", "lr"):
        if getattr(args, key, None) is not None:
            d["train"][key] = getattr(args, key)
    if args.manifest:
        d["manifest"] = args.manifest
    if args.split:
        d["split"] = args.split
    cfg = RunConfig.from_dict(d)
    problems = cfg.problems()
    if cfg.manifest is None:
        problems.append("no manifest given (use --manifest or the config's 'manifest' key)")
    if problems:
        raise CLIError("invalid configuration:\n  " + "\n  ".join(problems))
    return cfg


def _load_run(args) -> tuple[RunConfig, SwinBert, Path]:
    if not args.checkpoint:
        raise CLIError("--checkpoint is required")
    ckpt = Path(args.checkpoint)
    if not ckpt.exists():
        raise CLIError(f"checkpoint not found: {ckpt}")
    run_cfg_path = ckpt.parent / RUN_CONFIG
    if not run_cfg_path.exists():
        raise CLIError(f"run config not found next to checkpoint: {run_cfg_path}")
    cfg = resolve_config(args, load_run_config(run_cfg_path))
    vocab_path = ckpt.parent / VOCAB
    vocab = Vocabulary.load(vocab_path) if vocab_path.exists() else None
    model = fusion_mode_select(cfg.model, vocab, cfg.train.seed)
    model.load_state_dict(checkpoint.load(ckpt))
    return cfg, model, ckpt


def _examples(cfg: RunConfig, model: SwinBert | None = None, split: str | None = None):
    manifest = load_manifest(cfg.manifest)
    exs = load_examples(manifest, split or cfg.split, cfg.model.dsp, cfg.model.fusion)
    if not exs:
        raise CLIError(f"split {split or cfg.split!r} of {cfg.manifest} is empty")
    if model is not None and model.variant == "fusion" and not cfg.model.fusion.finetune_acoustic:
        attach_acoustic_matrices(model, exs)
    return exs


# -- commands ------------------------------------------------------------


def cmd_synth(args) -> int:
    m = generate_synthetic(SynthSpec(args.n, args.duration, seed=args.seed, test_fraction=args.test_fraction), args.out)
    print(f"wrote {len(m)} recordings and {Path(args.out) / 'manifest.csv'}")
    return 0


def cmd_featurize(args) -> int:
    if args.checkpoint:
        cfg, model, _ = _load_run(args)
    else:
        cfg, model = resolve_config(args), None
    exs = _examples(cfg, split=cfg.split)
    tensors = {}
    acoustic = model.acoustic if model is not None else None
    for ex in exs:
        tensors[f"cache.{ex.id}.logmel"] = ex.spectrogram
        tensors[f"cache.{ex.id}.chars"] = char_encode(ex.char_text, CHARS, cfg.model.linguistic.char_len_max).matrix
    if acoustic is not None:
        attach_acoustic_matrices(model, exs)
        for ex in exs:
            tensors[f"cache.{ex.id}.m_acoustic"] = ex.acoustic_matrix
    out = Path(args.out or "features.ckpt")
    checkpoint.save(out, tensors)
    print(f"cached {len(tensors)} tensors for {len(exs)} recordings in {out}")
    return 0


def cmd_train(args) -> int:
    from .train import fit, save_model

    cfg = resolve_config(args)
    out = Path(args.out or "run")
    out.mkdir(parents=True, exist_ok=True)
    manifest = load_manifest(cfg.manifest)
    exs = load_examples(manifest, cfg.split, cfg.model.dsp, cfg.model.fusion)
    if not exs:
        raise CLIError(f"split {cfg.split!r} of {cfg.manifest} is empty")
    vocab = None
    if cfg.model.variant != "acoustic":
        vocab = Vocabulary.build(ex.word_text for ex in exs)
        vocab.save(out / VOCAB)
    model = fusion_mode_select(cfg.model, vocab, cfg.train.seed)
    init = args.checkpoint or cfg.acoustic_checkpoint
    if init:
        state = checkpoint.load(init)
        if model.acoustic is not None:
            state = {k: v for k, v in state.items() if k.startswith("acoustic.")}
        model.load_state_dict(state, strict=False)
        log.info("initialized %d tensors from %s", len(state), init)
    if model.variant == "fusion" and not cfg.model.fusion.finetune_acoustic:
        attach_acoustic_matrices(model, exs)
    save_run_config(cfg, out / RUN_CONFIG)
    result = fit(model, exs, cfg.train, out)
    save_model(model, out / "model.ckpt")
    print(f"trained {cfg.model.variant} for {len(result.steps)} steps; final epoch loss {result.epoch_losses[-1]:.6f}")
    print(f"checkpoint: {out / 'model.ckpt'}")
    return 0


def cmd_eval(args) -> int:
    from .train import evaluate

    cfg, model, ckpt = _load_run(args)
    metrics = evaluate(model, _examples(cfg, model))
    report = metrics.report()
    print(report, end="")
    out = Path(args.out) if args.out else ckpt.parent / f"metrics_{cfg.split}.txt"
    checkpoint.atomic_write_bytes(out, report.encode())
    return 0


def cmd_export(args) -> int:
    from .train import export_embeddings, write_embeddings

    cfg, model, ckpt = _load_run(args)
    rows = export_embeddings(model, _examples(cfg, model), args.feature)
    out = Path(args.out) if args.out else ckpt.parent / f"embeddings_{args.feature}.csv"
    write_embeddings(rows, out)
    print(f"wrote {len(rows)} {args.feature} embeddings of width {rows[0][2].size} to {out}")
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import TOLERANCE, run_suite

    results = run_suite(args.seed)
    ok = True
    for name, (err, secs) in results.items():
        status = "ok" if err < TOLERANCE else "FAIL"
        ok &= err < TOLERANCE
        print(f"{name:<22} max_rel_err={err:.3e}  {secs:6.2f}s  {status}")
    return 0 if ok else 1


COMMANDS = {
    "synth": cmd_synth,
    "featurize": cmd_featurize,
    "train": cmd_train,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "export": cmd_export,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (CLIError, ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
