"""Regenerate ``random_graphs.json``: 240 random simple graphs on 3 to 8 nodes.

Densities range from sparse (often disconnected) to complete; labels are
shuffled letters so node order does not follow insertion order.
"""

import itertools
import json
import pathlib

import numpy as np


def main(path=pathlib.Path(__file__).with_name("random_graphs.json"), n_graphs=240, seed=2024):
    rng = np.random.default_rng(seed)
    graphs = []
    for i in range(n_graphs):
        n = int(rng.integers(3, 9))
        p = float(rng.choice([0.2, 0.35, 0.5, 0.7, 1.0]))
        nodes = [str(x) for x in rng.permutation(list("ABCDEFGH"))[:n]]
        edges = [[a, b] for a, b in itertools.combinations(nodes, 2) if rng.random() < p]
        graphs.append({"id": i, "nodes": nodes, "edges": edges})
    path.write_text(json.dumps(graphs, indent=0) + "\n")


if __name__ == "__main__":
    main()
