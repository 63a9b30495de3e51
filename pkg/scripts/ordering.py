"""Final accuracy of every algorithm on the 20-client label-skew task, mean over seeds."""

import dataclasses
import warnings

from _common import load, parser, run
from ktpfl.experiment import compare_runs, format_table, write_table_csv

ALGORITHMS = ["ktpfl", "simpfl", "topkpfl", "fedmd", "feddf", "pfeddf", "local"]

if __name__ == "__main__":
    p = parser(__doc__)
    p.add_argument("--algorithms", nargs="+", default=ALGORITHMS)
    args = p.parse_args()
    base = load(args.config)
    summaries = []
    for alg in args.algorithms:
        for seed in args.seeds:
            cfg = dataclasses.replace(base, algorithm=alg, seed=seed)
            summaries.append(run(cfg, f"{args.out}/ordering/{alg}/seed{seed}"))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rows = compare_runs(summaries)
    print(format_table(rows))
    write_table_csv(f"{args.out}/ordering/table.csv", rows)
