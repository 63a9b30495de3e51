"""Coefficient separation on two disjoint-label clusters, and the learned-teacher accuracy
check on two clusters with conflicting labels."""

import dataclasses

from _common import load, parser
from ktpfl.experiment import run_experiment
from ktpfl.fedsim import FedHyper, init_clients, init_server, simulate
from ktpfl.knowledge import KnowledgeHyper, uniform_coefficients, within_cross_mass
from ktpfl.scenarios import mixture_accuracy, two_cluster_shift

if __name__ == "__main__":
    args = parser(__doc__, config="configs/two_cluster.yaml").parse_args()
    base = load(args.config)
    print("seed  within  cross")
    for seed in args.seeds:
        res = run_experiment(dataclasses.replace(base, seed=seed), write=False)
        labels = res.federation.partition.client_labels
        w, x = within_cross_mass(res.server.c, [sorted(set(labels)).index(l) for l in labels])
        print(f"{seed:4d}  {w:.4f}  {x:.4f}")

    print("\nseed  learned  uniform  local")
    for seed in args.seeds:
        hp = FedHyper(local_epochs=20, lr_local=0.05, lr_distill=0.1, public_batch_size=16,
                      knowledge=KnowledgeHyper(rho=0.5, eta3=0.5, T=3.0), seed=seed)
        fed, _ = two_cluster_shift(hp)
        out = {}
        for alg in ("ktpfl", "local"):
            clients = init_clients(fed, [[32]] * 8, [0] * 8)
            out[alg] = simulate(fed, init_server(fed, alg, clients), clients, 30)
        server, clients, _ = out["ktpfl"]
        models = [c.model for c in clients]
        print(f"{seed:4d}  {mixture_accuracy(fed, models, server.c, 3.0):.3f}    "
              f"{mixture_accuracy(fed, models, uniform_coefficients(8), 3.0):.3f}    "
              f"{out['local'][2][-1].avg_accuracy:.3f}")
