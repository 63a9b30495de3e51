"""KT-pFL accuracy as a function of the public-set size used per round."""

import dataclasses

import numpy as np

from _common import load, parser, run, save_json

if __name__ == "__main__":
    p = parser(__doc__)
    p.add_argument("--sizes", type=int, nargs="+", default=[10, 100, 300, 1000])
    args = p.parse_args()
    base = load(args.config)
    pool = max(args.sizes + [base.public.pool_size or base.public.size])
    results = {}
    print("size  final_acc  std")
    for size in args.sizes:
        accs = []
        for seed in args.seeds:
            public = dataclasses.replace(base.public, size=size, pool_size=pool)
            cfg = dataclasses.replace(base, seed=seed, public=public)
            accs.append(run(cfg, f"{args.out}/public_size/{size}/seed{seed}")["final_avg_accuracy"])
        results[size] = accs
        print(f"{size:5d}  {100 * np.mean(accs):8.2f}  {100 * np.std(accs, ddof=1) if len(accs) > 1 else 0:5.2f}")
    save_json(f"{args.out}/public_size/results.json", results)
