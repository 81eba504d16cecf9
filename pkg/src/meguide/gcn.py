"""Two-layer GCN with hand-derived gradients, on arbitrary subgraphs.

No autodiff: the backward pass is written out against the forward
graph logits = A_hat @ relu(A_hat @ drop(X) @ W0) @ W1 (inverted dropout
on input and hidden activations in train mode, no biases). All model
math runs in float64.

``normalize_adjacency`` is instrumented: every call bumps a module
counter and, inside :func:`record_adjacency_sizes`, logs the number of
local nodes it materialized. The training loop uses this to prove that
no iteration ever touches an adjacency larger than its subgraph.
"""

from __future__ import annotations

import json
import struct
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .exceptions import MeguideError, ShapeError, SkipBatch
from .graph import Subgraph

_adjacency_calls = 0
_size_log: list | None = None


def adjacency_call_count() -> int:
    return _adjacency_calls


@contextmanager
def record_adjacency_sizes():
    """Collect the node count of every adjacency materialized inside."""
    global _size_log
    prev = _size_log
    _size_log = [] if prev is None else prev
    mine: list[int] = []
    _size_log = mine
    try:
        yield mine
    finally:
        _size_log = prev


@dataclass(eq=False)
class GcnModel:
    W0: np.ndarray  # d x h
    W1: np.ndarray  # h x c
    hidden_dim: int
    num_classes: int
    dropout_rate: float = 0.5

    def copy(self) -> "GcnModel":
        return GcnModel(
            W0=self.W0.copy(),
            W1=self.W1.copy(),
            hidden_dim=self.hidden_dim,
            num_classes=self.num_classes,
            dropout_rate=self.dropout_rate,
        )

    def params(self) -> dict:
        return {"W0": self.W0, "W1": self.W1}


@dataclass(eq=False)
class NormalizedAdjacency:
    matrix: sp.csr_matrix  # float64, symmetric
    num_nodes: int


def glorot(shape, rng: np.random.Generator) -> np.ndarray:
    bound = np.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-bound, bound, size=shape).astype(np.float64)


def init_model(
    feature_dim: int,
    hidden_dim: int,
    num_classes: int,
    dropout_rate: float,
    rng: np.random.Generator,
) -> GcnModel:
    """Glorot-uniform initialization from the run seed; no biases."""
    return GcnModel(
        W0=glorot((feature_dim, hidden_dim), rng),
        W1=glorot((hidden_dim, num_classes), rng),
        hidden_dim=hidden_dim,
        num_classes=num_classes,
        dropout_rate=dropout_rate,
    )


def normalize_adjacency(sub: Subgraph) -> NormalizedAdjacency:
    """Symmetrically normalized adjacency with self-loops over local ids.

    Entry (i, j) is 1/sqrt((deg_i + 1) (deg_j + 1)) for each retained
    subgraph edge and each self-loop; isolated nodes keep a lone 1.0.
    """
    global _adjacency_calls
    _adjacency_calls += 1
    n = sub.num_nodes
    if _size_log is not None:
        _size_log.append(n)
    local = sub.local_edges()
    deg = np.zeros(n, dtype=np.int64)
    if local.shape[0]:
        np.add.at(deg, local[:, 0], 1)
        np.add.at(deg, local[:, 1], 1)
    dinv = 1.0 / np.sqrt(deg + 1.0)
    loops = np.arange(n, dtype=np.int64)
    rows = np.concatenate([local[:, 0], local[:, 1], loops])
    cols = np.concatenate([local[:, 1], local[:, 0], loops])
    vals = dinv[rows] * dinv[cols]
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return NormalizedAdjacency(matrix=mat, num_nodes=n)


def _dropout_mask(shape, rate, rng: np.random.Generator) -> np.ndarray:
    keep = 1.0 - rate
    return (rng.random(shape) < keep).astype(np.float64) / keep


def forward(
    model: GcnModel,
    adj: NormalizedAdjacency,
    X_sub: np.ndarray,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
):
    """Forward pass; returns (logits, cache of intermediates)."""
    X = np.asarray(X_sub, dtype=np.float64)
    if X.shape[0] != adj.num_nodes:
        raise ShapeError(
            f"feature rows {X.shape[0]} != subgraph size {adj.num_nodes}"
        )
    if X.shape[1] != model.W0.shape[0]:
        raise ShapeError(
            f"feature dim {X.shape[1]} != W0 input dim {model.W0.shape[0]}"
        )
    use_dropout = train_mode and model.dropout_rate > 0.0
    if use_dropout and rng is None:
        raise MeguideError("train-mode forward with dropout needs an rng")
    mask_in = mask_h = None
    X0 = X
    if use_dropout:
        mask_in = _dropout_mask(X.shape, model.dropout_rate, rng)
        X0 = X * mask_in
    Z1 = adj.matrix @ (X0 @ model.W0)
    H1 = np.maximum(Z1, 0.0)
    H1d = H1
    if use_dropout:
        mask_h = _dropout_mask(H1.shape, model.dropout_rate, rng)
        H1d = H1 * mask_h
    logits = adj.matrix @ (H1d @ model.W1)
    cache = {"X0": X0, "Z1": Z1, "H1d": H1d, "mask_in": mask_in, "mask_h": mask_h}
    return logits, cache


def log_softmax(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=1, keepdims=True)
    return logits - m - np.log(np.exp(logits - m).sum(axis=1, keepdims=True))


def loss_and_grads(
    model: GcnModel,
    adj: NormalizedAdjacency,
    X_sub: np.ndarray,
    labels_sub: np.ndarray,
    train_mask_sub: np.ndarray,
    weight_decay: float = 0.0,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
):
    """Mean cross-entropy over train-masked nodes plus L2 penalty.

    Raises SkipBatch when the subgraph holds no labeled train node.
    Returns (loss, grad_W0, grad_W1).
    """
    sel = np.asarray(train_mask_sub, dtype=bool) & (labels_sub >= 0)
    if not sel.any():
        raise SkipBatch("no labeled train node in subgraph")
    logits, cache = forward(model, adj, X_sub, train_mode=train_mode, rng=rng)
    logp = log_softmax(logits)
    k = int(sel.sum())
    picked = labels_sub[sel]
    data_loss = -float(logp[sel, picked].mean())
    reg = 0.5 * weight_decay * (
        float(np.sum(model.W0 * model.W0)) + float(np.sum(model.W1 * model.W1))
    )
    loss = data_loss + reg

    dlogits = np.zeros_like(logits)
    probs = np.exp(logp[sel])
    probs[np.arange(k), picked] -= 1.0
    dlogits[sel] = probs / k

    G2 = adj.matrix @ dlogits
    grad_W1 = cache["H1d"].T @ G2 + weight_decay * model.W1
    dH1d = G2 @ model.W1.T
    dH1 = dH1d if cache["mask_h"] is None else dH1d * cache["mask_h"]
    dZ1 = dH1 * (cache["Z1"] > 0.0)
    G1 = adj.matrix @ dZ1
    grad_W0 = cache["X0"].T @ G1 + weight_decay * model.W0
    return loss, grad_W0, grad_W1


def node_representations(
    model: GcnModel, adj: NormalizedAdjacency, X_sub: np.ndarray
) -> np.ndarray:
    """Hidden-layer representations A_hat @ relu(A_hat @ X @ W0), eval mode."""
    X = np.asarray(X_sub, dtype=np.float64)
    return adj.matrix @ np.maximum(adj.matrix @ (X @ model.W0), 0.0)


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def init_adam(params: dict) -> AdamState:
    return AdamState(
        m={k: np.zeros_like(p) for k, p in params.items()},
        v={k: np.zeros_like(p) for k, p in params.items()},
        t=0,
    )


def adam_step(
    state: AdamState,
    params: dict,
    grads: dict,
    lr: float = 0.01,
    betas: tuple = (0.9, 0.999),
    eps: float = 1e-8,
):
    """One bias-corrected Adam update, in place. Returns (params, state)."""
    b1, b2 = betas
    state.t += 1
    t = state.t
    for key, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            bad = int(np.sum(~np.isfinite(grad)))
            raise MeguideError(
                f"non-finite gradient for {key}: {bad}/{grad.size} entries "
                f"at adam step {t}"
            )
        state.m[key] = b1 * state.m[key] + (1 - b1) * grad
        state.v[key] = b2 * state.v[key] + (1 - b2) * (grad * grad)
        m_hat = state.m[key] / (1 - b1**t)
        v_hat = state.v[key] / (1 - b2**t)
        params[key] -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return params, state


# ---------------------------------------------------------------------------
# checkpoints: one JSON header line, then little-endian float64 weights


def save_checkpoint(model: GcnModel, path, meta: dict | None = None) -> None:
    header = {
        "feature_dim": int(model.W0.shape[0]),
        "hidden_dim": int(model.hidden_dim),
        "num_classes": int(model.num_classes),
        "dropout_rate": float(model.dropout_rate),
    }
    header.update(meta or {})
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(model.W0.astype("<f8").tobytes())
        fh.write(model.W1.astype("<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode())
        d = header["feature_dim"]
        h = header["hidden_dim"]
        c = header["num_classes"]
        W0 = np.frombuffer(fh.read(8 * d * h), dtype="<f8").reshape(d, h).copy()
        W1 = np.frombuffer(fh.read(8 * h * c), dtype="<f8").reshape(h, c).copy()
    model = GcnModel(
        W0=W0,
        W1=W1,
        hidden_dim=h,
        num_classes=c,
        dropout_rate=header["dropout_rate"],
    )
    return model, header


def masked_accuracy(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> float:
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return 0.0
    pred = np.argmax(logits[mask], axis=1)
    return float(np.mean(pred == labels[mask]))
