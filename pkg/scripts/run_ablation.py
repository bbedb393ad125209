"""Train every ablation row on a synthetic corpus and print train/test metrics.

Rows: acoustic +/- demographics, linguistic +/- char branch, fusion +/- demographics.
Each fusion row starts from the weights of the matching acoustic row.

    python scripts/run_ablation.py --out /tmp/ablation --n 12 --test-fraction 0.25
"""

from __future__ import annotations

import argparse
import copy
import time
from pathlib import Path

from swinbert.config import ModelConfig, TrainConfig
from swinbert.data import SynthSpec, generate_synthetic, load_examples
from swinbert.linguistic import Vocabulary
from swinbert.models import attach_acoustic_matrices, fusion_mode_select
from swinbert.train import evaluate, fit

ROWS = [
    ("acoustic", dict(demographics=False)),
    ("acoustic", dict(demographics=True)),
    ("linguistic", dict(char_branch=False)),
    ("linguistic", dict(char_branch=True)),
    ("fusion", dict(demographics=False)),
    ("fusion", dict(demographics=True)),
]


def row_name(variant: str, kw: dict) -> str:
    flags = [f"{'+' if v else '-'}{k.replace('_branch', '')}" for k, v in kw.items()]
    return f"{variant} {' '.join(flags)}"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="ablation")
    ap.add_argument("--n", type=int, default=12, help="recordings per class")
    ap.add_argument("--test-fraction", type=float, default=0.25)
    ap.add_argument("--duration", type=float, default=2.0)
    ap.add_argument("--epochs", type=int, default=12)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    out = Path(args.out)
    manifest = generate_synthetic(SynthSpec(args.n, args.duration, seed=args.seed, test_fraction=args.test_fraction), out / "corpus")
    base = ModelConfig()
    train = load_examples(manifest, "train", base.dsp, base.fusion)
    test = load_examples(manifest, "test", base.dsp, base.fusion)
    vocab = Vocabulary.build(ex.word_text for ex in train)

    acoustic_weights = {}
    print(f"{'row':<26} {'train acc':>9} {'test acc':>9} {'test F':>8} {'secs':>6}")
    for variant, kw in ROWS:
        t0 = time.perf_counter()
        cfg = ModelConfig.for_variant(variant, **kw)
        model = fusion_mode_select(cfg, None if variant == "acoustic" else vocab, args.seed)
        tr, te = copy.deepcopy(train), copy.deepcopy(test)
        if variant == "fusion":
            model.load_state_dict(acoustic_weights[kw["demographics"]], strict=False)
            attach_acoustic_matrices(model, tr)
            attach_acoustic_matrices(model, te)
        tcfg = TrainConfig.for_variant(variant, epochs=args.epochs, seed=args.seed)
        fit(model, tr, tcfg, out / row_name(variant, kw).replace(" ", "_"))
        if variant == "acoustic":
            acoustic_weights[kw["demographics"]] = model.state_dict()
        m_tr = evaluate(model, tr)
        m_te = evaluate(model, te) if te else None
        te_acc = f"{m_te.accuracy:9.3f}" if m_te else f"{'-':>9}"
        te_f = f"{m_te.fscore:8.3f}" if m_te else f"{'-':>8}"
        print(f"{row_name(variant, kw):<26} {m_tr.accuracy:9.3f} {te_acc} {te_f} {time.perf_counter() - t0:6.1f}")


if __name__ == "__main__":
    main()
