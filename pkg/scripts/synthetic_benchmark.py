"""Synthetic benchmark and ablation over several seeds.

    python scripts/synthetic_benchmark.py --seeds 0,1,2,3,4

For each seed: generate the 5-class / 12-channel benchmark, fit the full model
and an ml_only model, then score full, the dl_only view of the full model,
and ml_only on the held-out runs.
"""
import argparse
import time

from tdln.datagen import ProcessSpec, generate_benchmark
from tdln.pipeline import ForestConfig, PipelineConfig, evaluate, fit_offline
from tdln.preprocess import WindowSpec
from tdln.training import NetConfig, TrainConfig


def config(args, seed, mode):
    return PipelineConfig(WindowSpec(args.w, args.s), TrainConfig(epochs=args.epochs, batch_size=args.batch_size),
                          NetConfig(args.hidden, args.hidden, tuple(args.fcnn), 0.4),
                          ForestConfig(args.trees, 31), mode=mode, seed=seed)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", default="0,1,2,3,4")
    ap.add_argument("--w", type=int, default=30)
    ap.add_argument("--s", type=int, default=20)
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--batch-size", type=int, default=64)
    ap.add_argument("--hidden", type=int, default=16)
    ap.add_argument("--fcnn", type=lambda t: [int(v) for v in t.split(",")], default=[64, 32])
    ap.add_argument("--trees", type=int, default=112)
    args = ap.parse_args()

    print("seed  full_fdr  full_auc  dl_fdr  ml_fdr  fit_s")
    for seed in (int(v) for v in args.seeds.split(",")):
        train, test = generate_benchmark(ProcessSpec.random(12, seed), 5, 40, 10, 240, 240)
        t0 = time.perf_counter()
        full = fit_offline(train, config(args, seed, "full"))
        secs = time.perf_counter() - t0
        rf = evaluate(full, test)
        rd = evaluate(full.with_mode("dl_only"), test)
        rm = evaluate(fit_offline(train, config(args, seed, "ml_only")), test)
        print(f"{seed:4d}  {rf.macro_fdr:8.4f}  {rf.micro_auc:8.4f}  {rd.macro_fdr:6.4f}  {rm.macro_fdr:6.4f}  "
              f"{secs:5.0f}", flush=True)


if __name__ == "__main__":
    main()
