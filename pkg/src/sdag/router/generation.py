"""Turn router predictions into a subject dependency DAG.

Node selection: probability threshold, cap at 5 (ties broken by canonical
subject order), single-best fallback when nothing clears the threshold, and
removal of the catch-all subject. Edge selection: threshold among retained
nodes, then a repair step that keeps an edge only when it points from a
lower-relevance subject to a higher-relevance one, which makes the result
acyclic by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..subjects import MAX_DAG_NODES, SUBJECTS, SDag, SDagEdge, SDagNode, Subject, validate_dag

Array = np.ndarray

_OTHER_INDEX = Subject.OTHER.index


@dataclass(frozen=True)
class GenerationConfig:
    node_threshold: float = 0.5
    edge_threshold: float = 0.5
    max_nodes: int = MAX_DAG_NODES

    def __post_init__(self):
        if not (0.0 <= self.node_threshold < 1.0 and 0.0 <= self.edge_threshold < 1.0):
            raise ValueError("thresholds must lie in [0, 1)")
        if self.max_nodes < 1:
            raise ValueError("max_nodes must be >= 1")


def _best(indices: list[int], probs: Array) -> int:
    return min(indices, key=lambda i: (-probs[i], i))


def assemble_dag(node_probs: Array, edge_probs: Array, config: GenerationConfig) -> SDag:
    """Apply node/edge thresholds, the node cap, and acyclicity repair."""
    probs = np.asarray(node_probs, dtype=np.float64)
    kept = [i for i in range(len(SUBJECTS)) if probs[i] > config.node_threshold]
    if len(kept) > config.max_nodes:
        kept = sorted(kept, key=lambda i: (-probs[i], i))[: config.max_nodes]
    if not kept:
        kept = [_best(list(range(len(SUBJECTS))), probs)]
    kept = [i for i in kept if i != _OTHER_INDEX]
    if not kept:
        # Only the catch-all cleared selection; promote the best real subject.
        kept = [_best([i for i in range(len(SUBJECTS)) if i != _OTHER_INDEX], probs)]
    kept = sorted(kept)

    nodes = [SDagNode(subject=SUBJECTS[i], score=float(probs[i])) for i in kept]
    edges = []
    for i in kept:
        for j in kept:
            if i == j or edge_probs[i, j] <= config.edge_threshold:
                continue
            if probs[i] < probs[j] or (probs[i] == probs[j] and i < j):
                edges.append(
                    SDagEdge(src=SUBJECTS[i], dst=SUBJECTS[j], score=float(edge_probs[i, j]))
                )
    dag = SDag(nodes=nodes, edges=edges)
    report = validate_dag(dag)
    if not report.ok:
        raise RuntimeError(f"assembled DAG is invalid: {report.violations}")
    return dag


def generate_sdag(question, params, embedder, config: GenerationConfig = GenerationConfig()) -> SDag:
    """Embed a question, run the router, and assemble the subject DAG."""
    from .model import route

    h_q = embedder.embed(question)
    output = route(params, h_q)
    return assemble_dag(output.node_probs, output.edge_probs, config)
