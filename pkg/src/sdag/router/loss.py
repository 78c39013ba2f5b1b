"""Masked multi-task objective for the routing network.

Total loss is a weighted sum of node-relevance BCE over all 15 subjects and
edge BCE over ordered subject pairs. A pair is excluded from the edge term
exactly when both endpoints are inactive in the ground truth, so the network
is never penalized for edges between subjects the question does not involve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NonFiniteLoss
from ..subjects import NUM_SUBJECTS
from .autodiff import Tensor, backward
from .model import PAIR_DST, PAIR_SRC, ForwardTape, RouterOutput, RouterParams, _sigmoid

Array = np.ndarray

# Probabilities are clamped into [PROB_EPS, 1 - PROB_EPS] before the log.
PROB_EPS = 1e-7


@dataclass(frozen=True)
class LossConfig:
    lambda_node: float = 1.0
    lambda_edge: float = 1.0

    def __post_init__(self):
        if self.lambda_node < 0 or self.lambda_edge < 0:
            raise ValueError("loss weights must be non-negative")
        if self.lambda_node == 0 and self.lambda_edge == 0:
            raise ValueError("at least one loss weight must be positive")


def _check_labels(node_labels: Array, edge_labels: Array) -> tuple[Array, Array]:
    node_labels = np.asarray(node_labels, dtype=np.float64)
    edge_labels = np.asarray(edge_labels, dtype=np.float64)
    if node_labels.shape != (NUM_SUBJECTS,):
        raise ValueError(f"node labels have shape {node_labels.shape}")
    if edge_labels.shape != (NUM_SUBJECTS, NUM_SUBJECTS):
        raise ValueError(f"edge labels have shape {edge_labels.shape}")
    if not np.isin(node_labels, (0.0, 1.0)).all() or not np.isin(edge_labels, (0.0, 1.0)).all():
        raise ValueError("labels must be 0 or 1")
    if np.diagonal(edge_labels).any():
        raise ValueError("edge labels must have a zero diagonal")
    return node_labels, edge_labels


def edge_mask(node_labels: Array) -> Array:
    """Boolean pair mask: off-diagonal, at least one endpoint active."""
    active = np.asarray(node_labels) != 0
    mask = active[:, None] | active[None, :]
    np.fill_diagonal(mask, False)
    return mask


def _pair_mask_vector(node_labels: Array) -> Array:
    return edge_mask(node_labels)[PAIR_SRC, PAIR_DST].astype(np.float64)


def masked_bce_loss(
    output: RouterOutput,
    node_labels: Array,
    edge_labels: Array,
    config: LossConfig = LossConfig(),
) -> float:
    """Evaluate the objective on already-computed probabilities."""
    node_labels, edge_labels = _check_labels(node_labels, edge_labels)
    node_p = np.clip(np.asarray(output.node_probs, dtype=np.float64), PROB_EPS, 1.0 - PROB_EPS)
    pair_p = np.clip(
        np.asarray(output.edge_probs, dtype=np.float64)[PAIR_SRC, PAIR_DST],
        PROB_EPS,
        1.0 - PROB_EPS,
    )
    pair_y = edge_labels[PAIR_SRC, PAIR_DST]
    mask = _pair_mask_vector(node_labels)

    node_sum = (node_labels * np.log(node_p) + (1.0 - node_labels) * np.log(1.0 - node_p)).sum()
    edge_sum = ((pair_y * np.log(pair_p) + (1.0 - pair_y) * np.log(1.0 - pair_p)) * mask).sum()
    loss = config.lambda_node * (-1.0 * node_sum) + config.lambda_edge * (-1.0 * edge_sum)
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"loss is {loss}")
    return float(loss)


def loss_on_tape(
    tape: ForwardTape,
    node_labels: Array,
    edge_labels: Array,
    config: LossConfig = LossConfig(),
) -> Tensor:
    """The objective as a tape node, differentiable back to the parameters."""
    node_labels, edge_labels = _check_labels(node_labels, edge_labels)

    node_y = Tensor(node_labels.reshape(NUM_SUBJECTS, 1))
    node_y_inv = Tensor(1.0 - node_labels.reshape(NUM_SUBJECTS, 1))
    node_p = tape.node_logits.sigmoid().clamp(PROB_EPS, 1.0 - PROB_EPS)
    node_sum = (node_y * node_p.log() + node_y_inv * (1.0 - node_p).log()).sum()

    pair_y_data = edge_labels[PAIR_SRC, PAIR_DST].reshape(-1, 1)
    pair_y = Tensor(pair_y_data)
    pair_y_inv = Tensor(1.0 - pair_y_data)
    mask = Tensor(_pair_mask_vector(node_labels).reshape(-1, 1))
    pair_p = tape.edge_logits.sigmoid().clamp(PROB_EPS, 1.0 - PROB_EPS)
    edge_sum = ((pair_y * pair_p.log() + pair_y_inv * (1.0 - pair_p).log()) * mask).sum()

    return config.lambda_node * (-1.0 * node_sum) + config.lambda_edge * (-1.0 * edge_sum)


def loss_and_gradients(
    params: RouterParams,
    h_q: Array,
    node_labels: Array,
    edge_labels: Array,
    config: LossConfig = LossConfig(),
) -> tuple[float, dict[str, Array]]:
    """Forward pass, objective, and reverse-mode parameter gradients."""
    tape = ForwardTape(params, h_q)
    loss = loss_on_tape(tape, node_labels, edge_labels, config)
    value = loss.item()
    if not np.isfinite(value):
        raise NonFiniteLoss(f"loss is {value}")
    backward(loss)
    return value, tape.gradients()


def loss_for_dag_output(
    params: RouterParams, h_q: Array, node_labels: Array, edge_labels: Array,
    config: LossConfig = LossConfig(),
) -> float:
    """Objective value only, via the same forward path as training."""
    from .model import route

    return masked_bce_loss(route(params, h_q), node_labels, edge_labels, config)


__all__ = [
    "PROB_EPS",
    "LossConfig",
    "edge_mask",
    "masked_bce_loss",
    "loss_on_tape",
    "loss_and_gradients",
    "loss_for_dag_output",
    "_sigmoid",
]
