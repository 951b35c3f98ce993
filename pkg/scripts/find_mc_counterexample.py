"""Search small random trees for a Max-Coverage prediction that turns wrong as the threshold rises.

Prints the first hit as JSON (hierarchy edges, leaf probabilities in
canonical leaf order, label, and the two thresholds).  Deterministic.
"""

import json
import sys

import numpy as np

from hiersel import infer_max_coverage, lift_to_nodes
from hiersel.synth import GeneratorConfig, random_hierarchy


def search(max_trees=2000, rows_per_tree=50):
    rng = np.random.default_rng(2024)
    for seed in range(max_trees):
        h = random_hierarchy(GeneratorConfig(seed=seed, n_leaves=int(rng.integers(3, 7)), max_branching=3))
        for _ in range(rows_per_tree):
            # two-decimal probabilities keep the fixture readable
            raw = rng.dirichlet(np.full(h.n_leaves, 0.7))
            probs = np.floor(raw * 100) / 100
            probs[np.argmax(probs)] += 1 - probs.sum()
            probs = np.round(probs, 2)
            ns = lift_to_nodes(h, probs)
            thetas = np.unique(ns)
            for label in h.leaves:
                right = [h.is_correct(infer_max_coverage(h, ns, t).node, label) for t in thetas]
                for i in range(len(thetas)):
                    if not right[i]:
                        continue
                    for j in range(i + 1, len(thetas)):
                        if not right[j]:
                            return {
                                "edges": [list(e) for e in h.edges()],
                                "leaf_order": list(h.leaf_names),
                                "probs": [float(p) for p in probs],
                                "label": h.names[label],
                                "theta_low": float(thetas[i]),
                                "theta_high": float(thetas[j]),
                                "node_low": h.names[infer_max_coverage(h, ns, thetas[i]).node],
                                "node_high": h.names[infer_max_coverage(h, ns, thetas[j]).node],
                            }
    return None


if __name__ == "__main__":
    hit = search()
    if hit is None:
        sys.exit("no counterexample found")
    print(json.dumps(hit, indent=2))
