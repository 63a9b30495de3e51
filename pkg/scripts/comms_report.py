"""Bytes exchanged per round and in total, by algorithm and payload kind."""

import dataclasses

from _common import load, parser
from ktpfl.experiment import run_experiment

if __name__ == "__main__":
    p = parser(__doc__)
    p.add_argument("--rounds", type=int, default=3)
    args = p.parse_args()
    base = dataclasses.replace(load(args.config), rounds=args.rounds)
    one_group = [dataclasses.replace(base.model_groups[0], count=base.num_clients)]
    print(f"{'algorithm':18s} {'soft_pred MB':>12s} {'params MB':>10s} {'coeff MB':>9s} {'MB/round':>9s}")
    for alg in ["ktpfl", "simpfl", "topkpfl", "fedmd", "feddf", "pfeddf", "fedavg", "ktpfl_homogeneous", "local"]:
        groups = one_group if alg in ("fedavg", "ktpfl_homogeneous") else base.model_groups
        res = run_experiment(dataclasses.replace(base, algorithm=alg, model_groups=groups), write=False)
        kinds = res.server.ledger.totals_by_kind()
        total = sum(kinds.values())
        print(f"{alg:18s} {kinds['soft_prediction'] / 1e6:12.3f} {kinds['parameters'] / 1e6:10.3f} "
              f"{kinds['coefficients'] / 1e6:9.4f} {total / 1e6 / args.rounds:9.3f}")
