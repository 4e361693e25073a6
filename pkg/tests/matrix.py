"""Small configs covering every experiment, shared by the harness tests and
the determinism acceptance criterion."""
from __future__ import annotations

MATRIX = {
    "survival": {"replicas": 2000, "params": {"n": 20}},
    "green": {"params": {"radii": [2, 4]}},
    "bcap": {"replicas": 300, "params": {"sets": [{"kind": "singleton"},
                                                  {"kind": "frame", "r": 1}],
                                         "random_sets": 1, "random_size": 3}},
    "pair_deficit": {"replicas": 500, "params": {"distances": [4, 8]}},
    "vacancy": {"replicas": 40, "params": {"K": {"kind": "singleton"},
                                           "window": {"kind": "line", "r": 1},
                                           "cap_replicas": 500, "stop_radius": None}},
    "covariance": {"replicas": 40, "params": {"distances": [4], "cap_replicas": 500}},
    "decorrelation": {"replicas": 40, "params": {"K": {"kind": "singleton"},
                                                 "distances": [4, 8],
                                                 "cap_replicas": 300}},
    "cover": {"replicas": 40, "params": {"cap_replicas": 500}},
    "gumbel": {"replicas": 10, "params": {"n_side": 2, "dims": 1, "cap_replicas": 300}},
    "crossing": {"replicas": 4, "params": {"us": [0.5, 1.0], "levels": [0],
                                           "cap_replicas": 100}},
    "embeddings": {"params": {"paths": 5, "path_n": 1, "random_embeddings": 20}},
}


def config(experiment: str, seed: int = 17) -> dict:
    return {"experiment": experiment, "seed": seed, **MATRIX[experiment]}
