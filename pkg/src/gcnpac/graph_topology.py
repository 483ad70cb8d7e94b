"""Graphs, adjacency normalizations, and new-node attachment laws.

``normalize`` produces both normalizations used by the GCN layers:

* ``tilde``: self-loop normalization, diagonal 1/(D_i+1), off-diagonal A_ij/sqrt((D_i+1)(D_j+1)).
* ``hat``: zero diagonal, off-diagonal A_ij/sqrt(D_i D_j).

The attachment laws describe how a new node n+1 aggregates the existing nodes.
Each atom is a length n+1 coefficient sequence. The auxiliary law reuses the
rows of ``tilde``; the perturbed law moves mass 1/sqrt(n) onto k extra sequences.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .markov_core import CategoricalDist


@dataclass(frozen=True, eq=False)
class UndirectedGraph:
    """Simple undirected graph without self-loops or isolated vertices."""

    adjacency: np.ndarray

    def __post_init__(self) -> None:
        A = np.asarray(self.adjacency).astype(bool)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"adjacency must be square, got {A.shape}")
        if not np.array_equal(A, A.T):
            raise ValueError("adjacency must be symmetric")
        if np.any(np.diag(A)):
            raise ValueError("self-loops are not allowed")
        if np.any(A.sum(axis=1) == 0):
            raise ValueError("isolated vertices are not allowed")
        A = A.copy()
        A.setflags(write=False)
        object.__setattr__(self, "adjacency", A)

    @property
    def n(self) -> int:
        return int(self.adjacency.shape[0])

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1).astype(np.int64)

    @property
    def n_edges(self) -> int:
        return int(self.adjacency.sum() // 2)

    def edges(self) -> list[list[int]]:
        i, j = np.nonzero(np.triu(self.adjacency, 1))
        return [[int(a), int(b)] for a, b in zip(i, j)]

    @classmethod
    def from_edges(cls, n: int, edges: Sequence[Sequence[int]]) -> "UndirectedGraph":
        A = np.zeros((n, n), dtype=bool)
        for a, b in edges:
            if a == b:
                raise ValueError(f"self-loop on node {a}")
            A[a, b] = A[b, a] = True
        return cls(A)

    def to_dict(self) -> dict:
        return {"n": self.n, "edges": self.edges()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: dict) -> "UndirectedGraph":
        return cls.from_edges(int(doc["n"]), doc["edges"])

    @classmethod
    def from_json(cls, text: str) -> "UndirectedGraph":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class NormalizedGraph:
    """A graph with both normalized adjacency matrices and the certified aggregation cap c_a.

    c_a is the largest of the Frobenius and max-row-sum norms of both matrices,
    so it caps ||tilde||_F, ||hat||_F, and every row sum of either matrix.
    """

    graph: UndirectedGraph
    tilde: np.ndarray
    hat: np.ndarray

    def __post_init__(self) -> None:
        for name in ("tilde", "hat"):
            m = np.array(getattr(self, name), dtype=float, copy=True)
            m.setflags(write=False)
            object.__setattr__(self, name, m)

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def frob_tilde_sq(self) -> float:
        return float(np.sum(self.tilde**2))

    @property
    def frob_hat_sq(self) -> float:
        return float(np.sum(self.hat**2))

    @property
    def inf_tilde(self) -> float:
        return float(np.abs(self.tilde).sum(axis=1).max())

    @property
    def inf_hat(self) -> float:
        return float(np.abs(self.hat).sum(axis=1).max())

    @property
    def c_a(self) -> float:
        return float(max(math.sqrt(self.frob_tilde_sq), math.sqrt(self.frob_hat_sq), self.inf_tilde, self.inf_hat))


def normalize(graph: UndirectedGraph) -> NormalizedGraph:
    """Self-loop normalization (tilde) and zero-diagonal normalization (hat)."""
    A = graph.adjacency.astype(float)
    d = graph.degrees.astype(float)
    dt = 1.0 / np.sqrt(d + 1.0)
    tilde = dt[:, None] * (A + np.eye(graph.n)) * dt[None, :]
    dh = 1.0 / np.sqrt(d)
    hat = dh[:, None] * A * dh[None, :]
    return NormalizedGraph(graph=graph, tilde=tilde, hat=hat)


def hub_leaf_generate(
    n: int,
    k: int,
    m_ll: int,
    seed: int,
    leaf_degree: int | None = None,
    hub_fraction: float = 1.0,
) -> UndirectedGraph:
    """Hub-leaf graph: k hubs (nodes 0..k-1) and n-k leaves.

    Hubs are joined to each other. Each leaf links to ``leaf_degree`` hubs
    (all k by default). With ``hub_fraction`` below 1, every hub additionally
    keeps only that fraction of its leaf links, while each leaf retains at least
    one hub. Finally m_ll leaf-leaf edges are placed uniformly at random.
    """
    if k < 1 or n <= k:
        raise ValueError(f"need 1 <= k < n, got k={k}, n={n}")
    if not 0.0 < hub_fraction <= 1.0:
        raise ValueError("hub_fraction must lie in (0, 1]")
    n_leaves = n - k
    max_ll = n_leaves * (n_leaves - 1) // 2
    if m_ll < 0 or m_ll > max_ll:
        raise ValueError(f"m_ll={m_ll} infeasible with {n_leaves} leaves (max {max_ll})")
    ld = k if leaf_degree is None else int(leaf_degree)
    if not 1 <= ld <= k:
        raise ValueError(f"leaf_degree must lie in [1, k], got {ld}")
    rng = np.random.default_rng(seed)
    A = np.zeros((n, n), dtype=bool)
    A[:k, :k] = True
    leaves = np.arange(k, n)
    for leaf in leaves:
        hubs = np.arange(k) if ld == k else rng.choice(k, size=ld, replace=False)
        A[leaf, hubs] = A[hubs, leaf] = True
    if hub_fraction < 1.0:
        for h in range(k):
            linked = leaves[A[h, leaves]]
            drop = rng.permutation(linked)[int(math.ceil(hub_fraction * linked.size)) :]
            for leaf in drop:
                if A[leaf, :k].sum() > 1:
                    A[h, leaf] = A[leaf, h] = False
    placed = 0
    while placed < m_ll:
        if max_ll - placed <= 4 * (m_ll - placed):
            # dense regime: draw the remaining edges from the explicit free-pair list
            a, b = np.nonzero(np.triu(~A[k:, k:], 1))
            pick = rng.choice(a.size, size=m_ll - placed, replace=False)
            A[a[pick] + k, b[pick] + k] = True
            A[b[pick] + k, a[pick] + k] = True
            break
        a, b = rng.integers(k, n, size=2)
        if a != b and not A[a, b]:
            A[a, b] = A[b, a] = True
            placed += 1
    np.fill_diagonal(A, False)
    return UndirectedGraph(A)


def uniform_generate(n: int, extra_edges: int, seed: int) -> UndirectedGraph:
    """Cycle through a random permutation of the nodes plus ``extra_edges`` uniform random edges."""
    if n < 3:
        if n == 2 and extra_edges == 0:
            return UndirectedGraph.from_edges(2, [[0, 1]])
        raise ValueError("uniform graphs need n >= 3")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    A = np.zeros((n, n), dtype=bool)
    A[order, np.roll(order, -1)] = True
    A = A | A.T
    free = n * (n - 1) // 2 - int(A.sum() // 2)
    if extra_edges < 0 or extra_edges > free:
        raise ValueError(f"extra_edges={extra_edges} infeasible (at most {free})")
    placed = 0
    while placed < extra_edges:
        a, b = rng.integers(0, n, size=2)
        if a != b and not A[a, b]:
            A[a, b] = A[b, a] = True
            placed += 1
    return UndirectedGraph(A)


def hub_leaf_frobenius_cap(graph: UndirectedGraph, k: int) -> float:
    """Degree-based cap on ||hat||_F^2 for a hub-leaf graph with hubs 0..k-1.

    2k^2/(dh_min)^2 + 2k dh_max/(dh_min dl_min) + 2 m_ll/(dl_min)^2.
    """
    d = graph.degrees.astype(float)
    dh, dl = d[:k], d[k:]
    m_ll = int(np.triu(graph.adjacency[k:, k:], 1).sum())
    return float(2 * k**2 / dh.min() ** 2 + 2 * k * dh.max() / (dh.min() * dl.min()) + 2 * m_ll / dl.min() ** 2)


@dataclass(frozen=True, eq=False)
class AttachmentDistribution:
    """Finite law over coefficient sequences (A_{n+1,1}, ..., A_{n+1,n+1}) of a new node."""

    support: np.ndarray
    probs: CategoricalDist
    kind: str
    bound: float

    def __post_init__(self) -> None:
        S = np.array(self.support, dtype=float, copy=True)
        if S.ndim != 2:
            raise ValueError("support must be a 2-D array of atoms")
        probs = self.probs if isinstance(self.probs, CategoricalDist) else CategoricalDist(self.probs)
        if probs.n != S.shape[0]:
            raise ValueError(f"{probs.n} probabilities for {S.shape[0]} atoms")
        if self.kind not in ("auxiliary", "perturbed", "custom"):
            raise ValueError(f"unknown attachment kind {self.kind!r}")
        if np.any(S < 0) or np.any(S > self.bound):
            raise ValueError(f"coefficients must lie in [0, {self.bound}]")
        S.setflags(write=False)
        object.__setattr__(self, "support", S)
        object.__setattr__(self, "probs", probs)

    @property
    def n(self) -> int:
        return int(self.support.shape[1] - 1)

    @property
    def n_atoms(self) -> int:
        return int(self.support.shape[0])

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "bound": self.bound,
            "atoms": self.support.tolist(),
            "probs": self.probs.probs.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "AttachmentDistribution":
        return cls(
            support=np.asarray(doc["atoms"], dtype=float),
            probs=CategoricalDist(np.asarray(doc["probs"], dtype=float)),
            kind=doc.get("kind", "custom"),
            bound=float(doc.get("bound", 1.0)),
        )


def _auxiliary_atoms(norm: NormalizedGraph) -> np.ndarray:
    n = norm.n
    atoms = np.zeros((n, n + 1))
    atoms[:, :n] = norm.tilde
    diag = np.diag(norm.tilde).copy()
    atoms[np.arange(n), np.arange(n)] = 0.0
    atoms[:, n] = diag
    return atoms


def auxiliary_attachment(norm: NormalizedGraph) -> AttachmentDistribution:
    """Uniform law over rows of tilde, each with its diagonal entry moved to slot n+1."""
    n = norm.n
    atoms = _auxiliary_atoms(norm)
    return AttachmentDistribution(atoms, CategoricalDist(np.full(n, 1.0 / n)), "auxiliary", bound=1.0)


def default_extra_sequences(n: int, k: int = 1) -> np.ndarray:
    """k constant sequences with every entry 1/(n+1)."""
    return np.full((k, n + 1), 1.0 / (n + 1))


def perturbed_attachment(norm: NormalizedGraph, extra: np.ndarray | None = None, bound: float = 1.0) -> AttachmentDistribution:
    """Auxiliary rows with mass 1/n - n^(-3/2) each plus k extra atoms with mass 1/(k sqrt(n))."""
    n = norm.n
    extra = default_extra_sequences(n) if extra is None else np.asarray(extra, dtype=float)
    if extra.ndim != 2 or extra.shape[1] != n + 1 or extra.shape[0] < 1:
        raise ValueError(f"extra must have shape (k, {n + 1}) with k >= 1")
    if np.any(extra < 0) or np.any(extra > bound):
        raise ValueError(f"extra sequences must lie in [0, {bound}]")
    k = extra.shape[0]
    atoms = np.vstack([_auxiliary_atoms(norm), extra])
    masses = np.concatenate([np.full(n, 1.0 / n - n**-1.5), np.full(k, 1.0 / (k * math.sqrt(n)))])
    return AttachmentDistribution(atoms, CategoricalDist(masses), "perturbed", bound=float(max(bound, 1.0)))


def perturbed_masses_exact(n: int, k: int) -> tuple[Fraction, Fraction] | None:
    """Row and extra masses as exact fractions when sqrt(n) is an integer, else None."""
    r = math.isqrt(n)
    if r * r != n:
        return None
    return Fraction(1, n) - Fraction(1, n * r), Fraction(1, k * r)


def _merged_masses(dist: AttachmentDistribution) -> dict[bytes, float]:
    out: dict[bytes, float] = {}
    for atom, p in zip(dist.support, dist.probs.probs):
        key = np.ascontiguousarray(atom).tobytes()
        out[key] = out.get(key, 0.0) + float(p)
    return out


def attachment_tv(p: AttachmentDistribution, q: AttachmentDistribution) -> float:
    """Exact TV between two attachment laws, matching atoms by exact sequence equality."""
    if p.support.shape[1] != q.support.shape[1]:
        raise ValueError("attachment laws have different sequence lengths")
    mp, mq = _merged_masses(p), _merged_masses(q)
    keys = set(mp) | set(mq)
    # sum the positive part only: it equals half the l1 distance and avoids double rounding
    return float(min(1.0, sum(max(0.0, mp.get(key, 0.0) - mq.get(key, 0.0)) for key in keys)))


def sample_attachment(dist: AttachmentDistribution, rng_seed) -> np.ndarray:
    """Draw one coefficient sequence from the law."""
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    idx = rng.choice(dist.n_atoms, p=dist.probs.probs)
    return dist.support[idx].copy()
