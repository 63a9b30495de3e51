"""One-at-a-time sensitivity of KT-pFL to rho, lambda, temperature and the coefficient step size."""

import dataclasses

import numpy as np

from _common import load, parser, run, save_json

GRID = {
    "rho": [0.0, 0.05, 0.5, 2.0],
    "lam": [0.1, 0.5, 1.0, 2.0],
    "temperature": [1.0, 3.0, 5.0],
    "lr_coeff": [0.0, 0.1, 0.5, 1.0],
}

if __name__ == "__main__":
    p = parser(__doc__)
    p.add_argument("--params", nargs="+", default=list(GRID), choices=list(GRID))
    args = p.parse_args()
    base = load(args.config)
    results = {}
    for name in args.params:
        for value in GRID[name]:
            train = dataclasses.replace(base.train, **{name: value})
            accs = [run(dataclasses.replace(base, seed=s, train=train),
                        f"{args.out}/sweep/{name}={value}/seed{s}")["final_avg_accuracy"] for s in args.seeds]
            results[f"{name}={value}"] = accs
            print(f"{name:12s} {value:6g}  acc {100 * np.mean(accs):6.2f}")
    save_json(f"{args.out}/sweep/results.json", results)
