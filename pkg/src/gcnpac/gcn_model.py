"""One- and two-layer GCNs with hand-derived gradients and a Gaussian posterior.

Forward passes (biases omitted, phi = ReLU):

* one layer, training nodes: phi(tilde X W1)
* one layer, new node: sum_k a_k X_k W1 (linear unless ``activation=True``)
* two layers, training nodes: phi(hat phi(hat X W1) W2)
* two layers, new node: the training form with the new node spliced in through
  its attachment coefficients a (symmetric edges A_{j,n+1} = a_j)

Weights live in spectral balls of radius c_w. Training is full-batch gradient
descent followed by projection after each step. The posterior is an isotropic
Gaussian centred at the trained weights and the prior a zero-mean Gaussian with
the same scale, so their Rényi divergence is closed-form.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .graph_topology import NormalizedGraph

LOGSOFTMAX_LIPSCHITZ = math.sqrt(2.0)
RELU_LIPSCHITZ = 1.0
ARITIES = ("one_layer", "two_layer")


def state_embedding(n_states: int, d: int, c_x: float, seed) -> np.ndarray:
    """Seeded table of N feature vectors, each with Euclidean norm c_x."""
    rng = np.random.default_rng(seed)
    E = rng.standard_normal((n_states, d))
    norms = np.linalg.norm(E, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return c_x * E / norms


@dataclass(frozen=True, eq=False)
class NodeDataset:
    """Node features and labels derived from a trace of Markov states."""

    features: np.ndarray
    labels: np.ndarray
    state_trace: np.ndarray
    c_x: float
    embedding: np.ndarray
    n_classes: int

    def __post_init__(self) -> None:
        for name in ("features", "labels", "state_trace", "embedding"):
            arr = np.array(getattr(self, name), copy=True)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(np.linalg.norm(self.features, axis=1) > self.c_x + 1e-12):
            raise ValueError("feature rows exceed the c_x norm bound")

    @property
    def n(self) -> int:
        return int(self.features.shape[0])

    @property
    def d(self) -> int:
        return int(self.features.shape[1])

    def label_of(self, state) -> np.ndarray:
        return np.asarray(state) % self.n_classes


def embed_states(trace, d: int, c_x: float, K: int, seed, n_states: int | None = None) -> NodeDataset:
    """Map each state s to a fixed seeded vector of norm c_x with label s mod K."""
    s = np.asarray(trace, dtype=np.int64)
    N = int(n_states if n_states is not None else s.max() + 1)
    if d < 1 or K < 1:
        raise ValueError("d and K must be positive")
    E = state_embedding(N, d, c_x, seed)
    return NodeDataset(features=E[s], labels=s % K, state_trace=s, c_x=float(c_x), embedding=E, n_classes=int(K))


def project_spectral(w: np.ndarray, c_w: float) -> np.ndarray:
    """Scale w into the spectral ball of radius c_w when its top singular value exceeds c_w."""
    s = float(np.linalg.norm(w, 2)) if w.size else 0.0
    if s > c_w:
        return w * (c_w / s)
    return w


@dataclass(frozen=True, eq=False)
class GcnWeights:
    """Weight matrices W1 (d x h) and optionally W2 (h x K) with spectral radius cap c_w."""

    w1: np.ndarray
    w2: np.ndarray | None = None
    c_w: float = 1.0

    def __post_init__(self) -> None:
        for name in ("w1", "w2"):
            m = getattr(self, name)
            if m is None:
                continue
            m = np.array(m, dtype=float, copy=True)
            if np.linalg.norm(m, 2) > self.c_w + 1e-9:
                raise ValueError(f"{name} has spectral norm above c_w={self.c_w}")
            m.setflags(write=False)
            object.__setattr__(self, name, m)

    @property
    def arity(self) -> str:
        return "one_layer" if self.w2 is None else "two_layer"

    def matrices(self) -> list[np.ndarray]:
        return [self.w1] if self.w2 is None else [self.w1, self.w2]

    def vector(self) -> np.ndarray:
        return np.concatenate([m.reshape(-1) for m in self.matrices()])

    def with_matrices(self, mats, project: bool = True) -> "GcnWeights":
        mats = [project_spectral(np.asarray(m, dtype=float), self.c_w) if project else m for m in mats]
        return GcnWeights(mats[0], mats[1] if len(mats) > 1 else None, self.c_w)

    def zeros_like(self) -> "GcnWeights":
        return self.with_matrices([np.zeros_like(m) for m in self.matrices()], project=False)

    def to_dict(self) -> dict:
        doc = {"arity": self.arity, "c_w": self.c_w}
        for name, m in zip(("w1", "w2"), self.matrices()):
            doc[name] = {"shape": list(m.shape), "data": m.reshape(-1).tolist()}
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: dict) -> "GcnWeights":
        mats = []
        for name in ("w1", "w2"):
            if name in doc and doc[name] is not None:
                mats.append(np.asarray(doc[name]["data"], dtype=float).reshape(doc[name]["shape"]))
        return cls(mats[0], mats[1] if len(mats) > 1 else None, float(doc["c_w"]))

    @classmethod
    def from_json(cls, text: str) -> "GcnWeights":
        return cls.from_dict(json.loads(text))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def _features(data) -> np.ndarray:
    return data.features if isinstance(data, NodeDataset) else np.asarray(data, dtype=float)


def forward_one_layer(data, norm: NormalizedGraph, weights: GcnWeights) -> np.ndarray:
    """Logits phi(tilde X W1) for every training node."""
    if weights.arity != "one_layer":
        raise ValueError("forward_one_layer needs one-layer weights")
    X = _features(data)
    if X.shape[0] != norm.n or X.shape[1] != weights.w1.shape[0]:
        raise ValueError("feature matrix does not match the graph or W1")
    return relu(norm.tilde @ X @ weights.w1)


def forward_new_node_one_layer(features_ext: np.ndarray, attach: np.ndarray, weights: GcnWeights, activation: bool = False) -> np.ndarray:
    """New-node output sum_k a_k X_k W1 over the n+1 feature rows; linear by default."""
    X = np.asarray(features_ext, dtype=float)
    a = np.asarray(attach, dtype=float)
    if a.shape[-1] != X.shape[0]:
        raise ValueError(f"attach has length {a.shape[-1]}, expected {X.shape[0]}")
    out = a @ X @ weights.w1
    return relu(out) if activation else out


def forward_two_layer(data, norm: NormalizedGraph, weights: GcnWeights) -> np.ndarray:
    """Logits phi(hat phi(hat X W1) W2) for every training node."""
    if weights.arity != "two_layer":
        raise ValueError("forward_two_layer needs two-layer weights")
    X = _features(data)
    if X.shape[0] != norm.n or X.shape[1] != weights.w1.shape[0]:
        raise ValueError("feature matrix does not match the graph or W1")
    return relu(norm.hat @ relu(norm.hat @ X @ weights.w1) @ weights.w2)


def forward_new_node_two_layer(features_ext: np.ndarray, norm: NormalizedGraph, attach: np.ndarray, weights: GcnWeights) -> np.ndarray:
    """Two-layer output for the new node n+1.

    phi( sum_j a_j phi((hat X W1)_j + a_j X_{n+1} W1) W2 + a_{n+1} phi(sum_k a_k X_k W1) W2 ).
    ``attach`` may be a single sequence or a batch of sequences (rows).
    """
    X = np.asarray(features_ext, dtype=float)
    a = np.asarray(attach, dtype=float)
    n = norm.n
    if X.shape[0] != n + 1 or a.shape[-1] != n + 1:
        raise ValueError("need n+1 feature rows and length n+1 attachments")
    single = a.ndim == 1
    A = np.atleast_2d(a)
    base = norm.hat @ X[:n] @ weights.w1  # n x h
    new_w = X[n] @ weights.w1  # h
    H = relu(base[None, :, :] + A[:, :n, None] * new_w[None, None, :])  # B x n x h
    agg = np.einsum("bj,bjh->bh", A[:, :n], H)
    self_term = A[:, n : n + 1] * relu(A @ X @ weights.w1)
    out = relu((agg + self_term) @ weights.w2)
    return out[0] if single else out


def log_softmax_losses(logits: np.ndarray, labels) -> np.ndarray:
    """Per-row cross-entropy of log-softmax outputs, stabilized by max subtraction."""
    Z = np.atleast_2d(np.asarray(logits, dtype=float))
    if not np.all(np.isfinite(Z)):
        raise ValueError("non-finite logits")
    y = np.broadcast_to(np.asarray(labels, dtype=np.int64), Z.shape[:1])
    m = Z.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(Z - m).sum(axis=1))
    return np.maximum(lse - Z[np.arange(Z.shape[0]), y], 0.0)


def loss_logsoftmax(logits, label: int) -> float:
    """-log softmax(logits)[label]."""
    return float(log_softmax_losses(np.asarray(logits, dtype=float)[None, :], [label])[0])


def logit_bound(c_x: float, c_w: float, c_a: float, arity: str, relu_lipschitz: float = RELU_LIPSCHITZ) -> float:
    """Largest logit norm reachable under the norm caps."""
    if arity == "one_layer":
        return c_x * c_w * c_a
    if arity == "two_layer":
        return c_x * c_w**2 * c_a**2 * relu_lipschitz**2
    raise ValueError(f"unknown arity {arity!r}")


def loss_cap(c_x: float, c_w: float, c_a: float, K: int, arity: str, relu_lipschitz: float = RELU_LIPSCHITZ) -> float:
    """M = log K + 2 B where B caps the logit norm; log-softmax loss never exceeds it there."""
    if min(c_x, c_w, c_a) < 0 or K < 1:
        raise ValueError("constants must be non-negative and K >= 1")
    return math.log(K) + 2.0 * logit_bound(c_x, c_w, c_a, arity, relu_lipschitz)


@dataclass(frozen=True)
class LossSpec:
    """Loss constants: class count, Lipschitz constants, and the certified cap M."""

    n_classes: int
    loss_cap_M: float
    lipschitz_L: float = LOGSOFTMAX_LIPSCHITZ
    relu_lipschitz: float = RELU_LIPSCHITZ

    def evaluate(self, logits: np.ndarray, labels) -> tuple[np.ndarray, int]:
        """Losses clamped at M, with the number of clamped entries."""
        raw = log_softmax_losses(logits, labels)
        over = int(np.count_nonzero(raw > self.loss_cap_M))
        return np.minimum(raw, self.loss_cap_M), over


def make_loss_spec(c_x: float, c_w: float, c_a: float, K: int, arity: str) -> LossSpec:
    return LossSpec(n_classes=int(K), loss_cap_M=loss_cap(c_x, c_w, c_a, K, arity))


@dataclass(frozen=True)
class TrainConfig:
    arity: str = "one_layer"
    lr: float = 0.5
    epochs: int = 100
    c_w: float = 1.0
    seed: int = 0
    hidden: int = 4
    init_scale: float = 0.5

    def __post_init__(self) -> None:
        if self.arity not in ARITIES:
            raise ValueError(f"arity must be one of {ARITIES}")
        if self.lr < 0 or self.epochs < 0 or self.c_w <= 0:
            raise ValueError("lr and epochs must be non-negative and c_w positive")


def init_weights(d: int, K: int, cfg: TrainConfig) -> GcnWeights:
    """Seeded Gaussian initialization projected into the spectral ball."""
    rng = np.random.default_rng(cfg.seed)
    if cfg.arity == "one_layer":
        mats = [rng.standard_normal((d, K)) * cfg.init_scale / math.sqrt(d)]
    else:
        mats = [
            rng.standard_normal((d, cfg.hidden)) * cfg.init_scale / math.sqrt(d),
            rng.standard_normal((cfg.hidden, K)) * cfg.init_scale / math.sqrt(cfg.hidden),
        ]
    mats = [project_spectral(m, cfg.c_w) for m in mats]
    return GcnWeights(mats[0], mats[1] if len(mats) > 1 else None, cfg.c_w)


def _softmax_grad(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    Z = logits - logits.max(axis=1, keepdims=True)
    P = np.exp(Z)
    P /= P.sum(axis=1, keepdims=True)
    P[np.arange(P.shape[0]), labels] -= 1.0
    return P / logits.shape[0]


def risk_and_gradients(weights_mats, features: np.ndarray, labels: np.ndarray, norm: NormalizedGraph):
    """Mean training loss and its gradients with respect to each weight matrix.

    ``weights_mats`` is [W1] or [W1, W2]; no projection is applied here.
    The ReLU subgradient at 0 is taken as 0.
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=np.int64)
    if len(weights_mats) == 1:
        (W1,) = weights_mats
        AX = norm.tilde @ X
        Z = AX @ W1
        Y = relu(Z)
        risk = float(log_softmax_losses(Y, y).mean())
        dZ = _softmax_grad(Y, y) * (Z > 0)
        return risk, [AX.T @ dZ]
    W1, W2 = weights_mats
    AX = norm.hat @ X
    Z1 = AX @ W1
    H1 = relu(Z1)
    AH = norm.hat @ H1
    Z2 = AH @ W2
    Y = relu(Z2)
    risk = float(log_softmax_losses(Y, y).mean())
    dZ2 = _softmax_grad(Y, y) * (Z2 > 0)
    gW2 = AH.T @ dZ2
    dH1 = norm.hat.T @ dZ2 @ W2.T
    dZ1 = dH1 * (Z1 > 0)
    gW1 = AX.T @ dZ1
    return risk, [gW1, gW2]


def train(dataset: NodeDataset, norm: NormalizedGraph, cfg: TrainConfig) -> GcnWeights:
    """Full-batch projected gradient descent on the empirical log-softmax risk."""
    weights = init_weights(dataset.d, dataset.n_classes, cfg)
    mats = [m.copy() for m in weights.matrices()]
    for epoch in range(cfg.epochs):
        risk, grads = risk_and_gradients(mats, dataset.features, dataset.labels, norm)
        if not math.isfinite(risk) or not all(np.all(np.isfinite(g)) for g in grads):
            raise RuntimeError(f"training diverged at epoch {epoch}: risk={risk!r}, lr={cfg.lr}")
        with np.errstate(over="ignore", invalid="ignore"):
            stepped = [m - cfg.lr * g for m, g in zip(mats, grads)]
        if not all(np.all(np.isfinite(m)) for m in stepped):
            raise RuntimeError(f"training diverged at epoch {epoch}: non-finite weights, lr={cfg.lr}")
        mats = [project_spectral(m, cfg.c_w) for m in stepped]
    return GcnWeights(mats[0], mats[1] if len(mats) > 1 else None, cfg.c_w)


@dataclass(frozen=True, eq=False)
class PosteriorPrior:
    """Gaussian posterior N(mu_Q, sigma^2 I) and prior N(mu_P, sigma^2 I) over the weights.

    Samples are projected into the spectral ball. Both laws are pushed through
    the same projection, so the closed-form Gaussian divergence still upper-bounds
    the divergence between the projected laws.
    """

    posterior_mean: GcnWeights
    sigma: float = 0.1
    alpha: float = 2.0
    prior_mean: GcnWeights | None = field(default=None)

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.alpha > 0 or self.alpha == 1.0:
            raise ValueError("alpha must lie in (0,1) or (1,inf)")
        if self.prior_mean is None:
            object.__setattr__(self, "prior_mean", self.posterior_mean.zeros_like())


def sample_posterior_raw(pp: PosteriorPrior, rng_seed) -> list[np.ndarray]:
    """Gaussian draw around the posterior mean before projection."""
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    return [m + pp.sigma * rng.standard_normal(m.shape) for m in pp.posterior_mean.matrices()]


def sample_posterior(pp: PosteriorPrior, rng_seed) -> GcnWeights:
    """Gaussian draw around the posterior mean, projected into the spectral ball."""
    return pp.posterior_mean.with_matrices(sample_posterior_raw(pp, rng_seed), project=True)


def renyi_gaussian(pp: PosteriorPrior) -> float:
    """D_alpha(Q||P) = alpha ||mu_Q - mu_P||^2 / (2 sigma^2) for equal isotropic covariances."""
    diff = pp.posterior_mean.vector() - pp.prior_mean.vector()
    return float(pp.alpha * np.dot(diff, diff) / (2.0 * pp.sigma**2))
