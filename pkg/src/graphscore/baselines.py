"""Non-propagation scorers: max-softmax cosine and shortest-path distance.

The cosine scorer softmaxes negated per-class cosine distances and returns
the winning class's probability; higher means more in-distribution. The
manifold scorer runs a multi-source Dijkstra from every prototype and
labeled node over the graph's L2 edge distances and scores each unlabeled
node by the reciprocal of its shortest-path distance.
"""

import heapq
from dataclasses import dataclass

import numpy as np

from .graph import BlockAdjacency
from .prompts import PrototypeSet
from .store import EmbeddingMatrix


@dataclass(frozen=True)
class BaselineConfig:
    temperature: float = 1.0
    epsilon: float = 1e-9

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


def cosine_scores(samples, prototypes: PrototypeSet,
                  cfg: BaselineConfig = None) -> np.ndarray:
    """Max-softmax cosine score for each sample row.

    Per class, distance is 1 minus the best cosine similarity over that
    class's prototypes; the returned score is the largest softmax weight of
    exp(-distance / temperature) across classes, in (0, 1].
    """
    cfg = cfg or BaselineConfig()
    if prototypes.count < 1:
        raise ValueError("empty prototype set")
    data = samples.data if isinstance(samples, EmbeddingMatrix) else np.asarray(samples, dtype=np.float64)
    sims = data @ prototypes.vectors.data.T
    n_classes = prototypes.n_classes
    class_best = np.empty((data.shape[0], n_classes))
    for c, members in enumerate(prototypes.class_members):
        class_best[:, c] = sims[:, members].max(axis=1)
    logits = -(1.0 - class_best) / cfg.temperature
    logits -= logits.max(axis=1, keepdims=True)
    probs = np.exp(logits)
    probs /= probs.sum(axis=1, keepdims=True)
    return probs.max(axis=1)


def cosine_score(sample, prototypes: PrototypeSet, cfg: BaselineConfig = None) -> float:
    """Score a single unit vector; see :func:`cosine_scores`."""
    sample = np.asarray(sample, dtype=np.float64)
    return float(cosine_scores(sample[None, :], prototypes, cfg)[0])


def shortest_path_distances(adj: BlockAdjacency, sources) -> np.ndarray:
    """Multi-source Dijkstra over the graph's L2 edge distances.

    Returns the distance from the nearest source to every node; unreachable
    nodes get +inf. The stored triplets carry both edge directions, so a
    directed traversal covers the symmetric graph.
    """
    n = adj.partition.n_total
    dist = np.full(n, np.inf)
    heap = []
    for s in sources:
        dist[s] = 0.0
        heapq.heappush(heap, (0.0, int(s)))
    ptr = adj.row_ptr
    cols = adj.cols
    lengths = adj.dists
    done = np.zeros(n, dtype=bool)
    while heap:
        d, node = heapq.heappop(heap)
        if done[node]:
            continue
        done[node] = True
        for e in range(ptr[node], ptr[node + 1]):
            other = cols[e]
            candidate = d + lengths[e]
            if candidate < dist[other]:
                dist[other] = candidate
                heapq.heappush(heap, (candidate, int(other)))
    return dist


def manifold_score(adj: BlockAdjacency, cfg: BaselineConfig = None) -> np.ndarray:
    """Reciprocal shortest-path score for every unlabeled node.

    Paths start from any prototype or labeled node. Unreachable nodes score
    0; zero-distance hits score 1/epsilon.
    """
    cfg = cfg or BaselineConfig()
    part = adj.partition
    sources = range(part.unlabeled_offset)
    dist = shortest_path_distances(adj, sources)
    unlab = dist[part.unlabeled_slice]
    reachable = np.isfinite(unlab)
    scores = np.zeros(part.n_unlabeled)
    scores[reachable] = 1.0 / (unlab[reachable] + cfg.epsilon)
    return scores
