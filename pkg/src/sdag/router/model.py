"""The trainable routing network: parameters and forward pass.

Every subject node starts from a learned subject embedding fused with the
question embedding, is refined by directional message passing over the fully
connected subject graph, and feeds two classifier heads: one scoring subject
relevance, one scoring each ordered subject pair as a dependency edge.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionMismatch
from ..subjects import NUM_SUBJECTS
from .autodiff import Tensor, concat_cols, take_rows

Array = np.ndarray

# Ordered (src, dst) index pairs for the off-diagonal of the full subject graph.
PAIR_SRC = np.array([i for i in range(NUM_SUBJECTS) for j in range(NUM_SUBJECTS) if i != j])
PAIR_DST = np.array([j for i in range(NUM_SUBJECTS) for j in range(NUM_SUBJECTS) if i != j])
NUM_PAIRS = len(PAIR_SRC)

# Row i of this constant averages all rows except i (neighborhood mean).
_NEIGHBOR_MEAN = (np.ones((NUM_SUBJECTS, NUM_SUBJECTS)) - np.eye(NUM_SUBJECTS)) / (
    NUM_SUBJECTS - 1
)


@dataclass(frozen=True)
class RouterDims:
    """Dimension record: subject embedding, question embedding, hidden, layers."""

    d_s: int = 64
    d_q: int = 256
    h: int = 128
    L: int = 2
    activation: str = "relu"

    def __post_init__(self):
        if min(self.d_s, self.d_q, self.h) < 1 or self.L < 1:
            raise ValueError(f"invalid dimensions: {self}")
        if self.activation not in ("relu", "linear"):
            raise ValueError(f"unsupported activation: {self.activation}")


# Tensor names and shapes, in initialization and checkpoint order.
def tensor_shapes(dims: RouterDims) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {
        "subject_embeddings": (NUM_SUBJECTS, dims.d_s),
        "init.w": (dims.d_s + dims.d_q, dims.h),
        "init.b": (dims.h,),
    }
    for layer in range(dims.L):
        shapes[f"mp{layer}.w_self"] = (dims.h, dims.h)
        shapes[f"mp{layer}.w_in"] = (dims.h, dims.h)
        shapes[f"mp{layer}.w_out"] = (dims.h, dims.h)
        shapes[f"mp{layer}.b"] = (dims.h,)
    shapes.update(
        {
            "node_head.w1": (dims.h, dims.h),
            "node_head.b1": (dims.h,),
            "node_head.w2": (dims.h, 1),
            "node_head.b2": (1,),
            "edge_head.w1": (2 * dims.h + dims.d_q, dims.h),
            "edge_head.b1": (dims.h,),
            "edge_head.w2": (dims.h, 1),
            "edge_head.b2": (1,),
        }
    )
    return shapes


@dataclass
class RouterParams:
    """All learnable tensors, keyed by the documented naming scheme."""

    dims: RouterDims
    tensors: dict[str, Array]
    seed: int | None = None
    embedder: str | None = None

    def __post_init__(self):
        expected = tensor_shapes(self.dims)
        if set(self.tensors) != set(expected):
            missing = sorted(set(expected) - set(self.tensors))
            extra = sorted(set(self.tensors) - set(expected))
            raise DimensionMismatch(f"tensor set mismatch: missing={missing} extra={extra}")
        for name, shape in expected.items():
            if self.tensors[name].shape != shape:
                raise DimensionMismatch(
                    f"{name}: shape {self.tensors[name].shape}, expected {shape}"
                )
            if not np.all(np.isfinite(self.tensors[name])):
                raise ValueError(f"{name}: non-finite values")

    def copy(self) -> "RouterParams":
        return RouterParams(
            dims=self.dims,
            tensors={k: v.copy() for k, v in self.tensors.items()},
            seed=self.seed,
            embedder=self.embedder,
        )


def init_params(
    dims: RouterDims, seed: int = 0, scale: float = 0.1, embedder: str | None = None
) -> RouterParams:
    """Draw weights from a seeded normal (scale 0.1); biases start at zero."""
    rng = np.random.default_rng(seed)
    tensors: dict[str, Array] = {}
    for name, shape in tensor_shapes(dims).items():
        if name.endswith((".b", ".b1", ".b2")):
            tensors[name] = np.zeros(shape)
        else:
            tensors[name] = rng.standard_normal(shape) * scale
    return RouterParams(dims=dims, tensors=tensors, seed=seed, embedder=embedder)


@dataclass
class RouterOutput:
    """Per-subject relevance probabilities and pairwise edge probabilities.

    The edge matrix diagonal is never produced by the network and must not be
    consumed; it is stored as 0.
    """

    node_probs: Array
    edge_probs: Array
    node_logits: Array = field(repr=False, default=None)  # type: ignore[assignment]
    edge_logits: Array = field(repr=False, default=None)  # type: ignore[assignment]


class ForwardTape:
    """One forward pass through the network, kept alive for backprop."""

    def __init__(self, params: RouterParams, h_q: Array):
        h_q = np.asarray(h_q, dtype=np.float64)
        if h_q.shape != (params.dims.d_q,):
            raise DimensionMismatch(
                f"question embedding has shape {h_q.shape}, expected ({params.dims.d_q},)"
            )
        self.params = params
        self.param_tensors = {name: Tensor(arr, name=name) for name, arr in params.tensors.items()}
        self.h_q_rows = Tensor(np.tile(h_q, (NUM_SUBJECTS, 1)))
        self.h_q_pair_rows = Tensor(np.tile(h_q, (NUM_PAIRS, 1)))
        self._act = Tensor.relu if params.dims.activation == "relu" else (lambda t: t)

        self.x0 = self._init_features()
        self.x_final = self._message_pass(self.x0)
        self.node_logits, self.edge_logits = self._heads(self.x_final)

    def _init_features(self) -> Tensor:
        p = self.param_tensors
        fused = concat_cols([p["subject_embeddings"], self.h_q_rows])
        return self._act(fused @ p["init.w"] + p["init.b"])

    def _message_pass(self, x: Tensor) -> Tensor:
        p = self.param_tensors
        mean_op = Tensor(_NEIGHBOR_MEAN)
        for layer in range(self.params.dims.L):
            neighbor_mean = mean_op @ x
            pre = (
                x @ p[f"mp{layer}.w_self"]
                + neighbor_mean @ p[f"mp{layer}.w_in"]
                + neighbor_mean @ p[f"mp{layer}.w_out"]
                + p[f"mp{layer}.b"]
            )
            x = self._act(pre)
        return x

    def _heads(self, x: Tensor) -> tuple[Tensor, Tensor]:
        p = self.param_tensors
        node_hidden = (x @ p["node_head.w1"] + p["node_head.b1"]).relu()
        node_logits = node_hidden @ p["node_head.w2"] + p["node_head.b2"]

        pair_input = concat_cols(
            [take_rows(x, PAIR_SRC), take_rows(x, PAIR_DST), self.h_q_pair_rows]
        )
        edge_hidden = (pair_input @ p["edge_head.w1"] + p["edge_head.b1"]).relu()
        edge_logits = edge_hidden @ p["edge_head.w2"] + p["edge_head.b2"]
        return node_logits, edge_logits

    def output(self) -> RouterOutput:
        node_logits = self.node_logits.data.reshape(NUM_SUBJECTS).copy()
        pair_logits = self.edge_logits.data.reshape(NUM_PAIRS)
        edge_logit_mat = np.zeros((NUM_SUBJECTS, NUM_SUBJECTS))
        edge_logit_mat[PAIR_SRC, PAIR_DST] = pair_logits
        node_probs = _sigmoid(node_logits)
        edge_probs = np.zeros((NUM_SUBJECTS, NUM_SUBJECTS))
        edge_probs[PAIR_SRC, PAIR_DST] = _sigmoid(pair_logits)
        return RouterOutput(
            node_probs=node_probs,
            edge_probs=edge_probs,
            node_logits=node_logits,
            edge_logits=edge_logit_mat,
        )

    def gradients(self) -> dict[str, Array]:
        return {
            name: (t.grad if t.grad is not None else np.zeros_like(t.data))
            for name, t in self.param_tensors.items()
        }


def _sigmoid(x: Array) -> Array:
    ax = np.abs(x)
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-ax)), np.exp(-ax) / (1.0 + np.exp(-ax)))


def init_node_features(params: RouterParams, h_q: Array) -> Array:
    """Fused subject+question features before message passing (15 x h)."""
    return ForwardTape(params, h_q).x0.data.copy()


def message_pass(params: RouterParams, x0: Array) -> Array:
    """Apply the configured message-passing layers to given node features."""
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.shape != (NUM_SUBJECTS, params.dims.h):
        raise DimensionMismatch(
            f"node features have shape {x0.shape}, expected ({NUM_SUBJECTS}, {params.dims.h})"
        )
    tape = ForwardTape.__new__(ForwardTape)
    tape.params = params
    tape.param_tensors = {name: Tensor(arr, name=name) for name, arr in params.tensors.items()}
    tape._act = Tensor.relu if params.dims.activation == "relu" else (lambda t: t)
    return tape._message_pass(Tensor(x0)).data.copy()


def predict(params: RouterParams, x_final: Array, h_q: Array) -> RouterOutput:
    """Run only the node/edge heads on final node states."""
    x_final = np.asarray(x_final, dtype=np.float64)
    h_q = np.asarray(h_q, dtype=np.float64)
    if x_final.shape != (NUM_SUBJECTS, params.dims.h):
        raise DimensionMismatch(
            f"node states have shape {x_final.shape}, expected ({NUM_SUBJECTS}, {params.dims.h})"
        )
    if h_q.shape != (params.dims.d_q,):
        raise DimensionMismatch(
            f"question embedding has shape {h_q.shape}, expected ({params.dims.d_q},)"
        )
    tape = ForwardTape.__new__(ForwardTape)
    tape.params = params
    tape.param_tensors = {name: Tensor(arr, name=name) for name, arr in params.tensors.items()}
    tape.h_q_pair_rows = Tensor(np.tile(h_q, (NUM_PAIRS, 1)))
    tape.node_logits, tape.edge_logits = tape._heads(Tensor(x_final))
    return tape.output()


def route(params: RouterParams, h_q: Array) -> RouterOutput:
    """Full forward pass: fuse, message-pass, and score nodes and edges."""
    return ForwardTape(params, h_q).output()
