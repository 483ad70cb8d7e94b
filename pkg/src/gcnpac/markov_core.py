"""Finite-state Markov chain machinery.

This module holds categorical distributions, their divergences (total variation,
Rényi, Kullback-Leibler), finite Markov kernels with their stationary laws, the
ergodicity profile (rho, M(x)) certified from the Dobrushin coefficient, and the
exact dependency matrices Gamma and Gamma-tilde of a chain observed over n steps.

Two brute-force oracles validate the closed-form Markov collapses by
enumerating every state sequence:

* ``brute_force_block_tv`` enumerates suffix sequences for the entries of Gamma.
* ``term2_dependence(..., mode="exact")`` conditions the full joint law of
  (S_1, ..., S_n) for the averaged dependence term.

Every type is immutable after construction and every function is pure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

NORM_TOL = 1e-12
RENORM_TOL = 1e-9
RHO_CEIL = 1.0 - 1e-9
RHO_FLOOR = 1e-9
RATIO_FLOOR = 1e-12
ENUM_BUDGET = 10**6


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class CategoricalDist:
    """Probability vector over N outcomes.

    Entries must be non-negative. A total that drifts from 1 by less than
    ``RENORM_TOL`` is renormalized; anything further away is rejected.
    """

    probs: np.ndarray

    def __post_init__(self) -> None:
        p = np.asarray(self.probs, dtype=float).reshape(-1)
        if p.size == 0:
            raise ValueError("distribution must have at least one outcome")
        if not np.all(np.isfinite(p)):
            raise ValueError("distribution has non-finite entries")
        if np.any(p < 0):
            if np.min(p) < -NORM_TOL:
                raise ValueError(f"negative probability {np.min(p)!r}")
            p = np.clip(p, 0.0, None)
        total = p.sum()
        if abs(total - 1.0) > RENORM_TOL:
            raise ValueError(f"probabilities sum to {total!r}, not 1")
        if abs(total - 1.0) > 0.0:
            p = p / total
        object.__setattr__(self, "probs", _frozen(p))

    @property
    def n(self) -> int:
        return int(self.probs.size)

    @classmethod
    def point_mass(cls, n: int, index: int) -> "CategoricalDist":
        p = np.zeros(n)
        p[index] = 1.0
        return cls(p)

    @classmethod
    def uniform(cls, n: int) -> "CategoricalDist":
        return cls(np.full(n, 1.0 / n))


def _as_probs(p: CategoricalDist | np.ndarray | Sequence[float]) -> np.ndarray:
    if isinstance(p, CategoricalDist):
        return p.probs
    return CategoricalDist(np.asarray(p, dtype=float)).probs


def tv_distance(p, q) -> float:
    """Total variation distance, half the l1 distance between probability vectors."""
    a, b = _as_probs(p), _as_probs(q)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.size} vs {b.size}")
    return float(min(1.0, 0.5 * np.abs(a - b).sum()))


def kl_divergence(p, q) -> float:
    """Kullback-Leibler divergence KL(p||q); +inf when p is not absolutely continuous."""
    a, b = _as_probs(p), _as_probs(q)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.size} vs {b.size}")
    mask = a > 0
    if np.any(b[mask] == 0):
        return float("inf")
    return float(max(0.0, np.sum(a[mask] * np.log(a[mask] / b[mask]))))


def renyi_divergence(p, q, alpha: float) -> float:
    """Rényi divergence of order alpha, (1/(alpha-1)) log sum p^alpha q^(1-alpha).

    The order alpha = 1 is rejected; use :func:`kl_divergence` for that limit.
    Returns ``float('inf')`` when alpha > 1 and p puts mass where q has none.
    """
    if not np.isfinite(alpha) or alpha <= 0:
        raise ValueError(f"alpha must be positive and finite, got {alpha!r}")
    if alpha == 1.0:
        raise ValueError("alpha = 1 is the KL limit; call kl_divergence instead")
    a, b = _as_probs(p), _as_probs(q)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.size} vs {b.size}")
    both = (a > 0) & (b > 0)
    if alpha > 1 and np.any((a > 0) & (b == 0)):
        return float("inf")
    # terms with a zero factor vanish for alpha in (0,1) and are excluded above for alpha > 1;
    # the sum is taken in log space so subnormal masses neither underflow nor overflow
    log_s = logsumexp(alpha * np.log(a[both]) + (1.0 - alpha) * np.log(b[both]))
    return float(max(0.0, log_s / (alpha - 1.0)))


def _check_stochastic(mat: np.ndarray) -> np.ndarray:
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"transition must be square, got shape {mat.shape}")
    rows = [CategoricalDist(row).probs for row in mat]
    return np.vstack(rows)


@dataclass(frozen=True, eq=False)
class FiniteMarkovChain:
    """Markov chain on states {0, ..., N-1} with row-stochastic kernel and initial law."""

    transition: np.ndarray
    initial: CategoricalDist

    def __post_init__(self) -> None:
        P = _check_stochastic(self.transition)
        init = self.initial if isinstance(self.initial, CategoricalDist) else CategoricalDist(self.initial)
        if init.n != P.shape[0]:
            raise ValueError(f"initial law has {init.n} states, kernel has {P.shape[0]}")
        object.__setattr__(self, "transition", _frozen(P))
        object.__setattr__(self, "initial", init)

    @property
    def n_states(self) -> int:
        return int(self.transition.shape[0])

    def row(self, state: int) -> np.ndarray:
        return self.transition[int(state)]

    def with_initial(self, initial) -> "FiniteMarkovChain":
        return FiniteMarkovChain(self.transition, CategoricalDist(_as_probs(initial)))

    def to_dict(self) -> dict:
        return {
            "n_states": self.n_states,
            "transition": self.transition.reshape(-1).tolist(),
            "initial": self.initial.probs.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: dict) -> "FiniteMarkovChain":
        n = int(doc["n_states"])
        flat = np.asarray(doc["transition"], dtype=float)
        if flat.size != n * n:
            raise ValueError(f"transition has {flat.size} entries, expected {n * n}")
        return cls(flat.reshape(n, n), CategoricalDist(np.asarray(doc["initial"], dtype=float)))

    @classmethod
    def from_json(cls, text: str) -> "FiniteMarkovChain":
        return cls.from_dict(json.loads(text))


def build_example_chain(p, alphas, initial=None) -> FiniteMarkovChain:
    """Lazy chain around p with per-state stickiness alphas; its stationary law is p.

    Off-diagonal entries are P_ij = (1 - max(alpha_i, alpha_j)) p_j and the
    diagonal absorbs the remaining row mass. With a common alpha this is
    P_ij = (1 - alpha) p_j + alpha 1{i = j}. The symmetric factor gives detailed
    balance with p, so p is stationary even when the alphas differ, and
    TV(P(i,.), p) = sum_{j != i} max(alpha_i, alpha_j) p_j <= (1 - p_i) max(alpha).

    The initial law defaults to p (a stationary start).
    """
    pv = _as_probs(p)
    a = np.asarray(alphas, dtype=float).reshape(-1)
    if a.shape != pv.shape:
        raise ValueError(f"alphas has {a.size} entries, p has {pv.size}")
    if np.any(a <= 0) or np.any(a >= 1):
        raise ValueError(f"every alpha must lie in (0,1), got {a.tolist()}")
    P = (1.0 - np.maximum(a[:, None], a[None, :])) * pv[None, :]
    np.fill_diagonal(P, 0.0)
    np.fill_diagonal(P, 1.0 - P.sum(axis=1))
    init = CategoricalDist(pv) if initial is None else CategoricalDist(_as_probs(initial))
    return FiniteMarkovChain(P, init)


def iid_chain(p, initial=None) -> FiniteMarkovChain:
    """Kernel whose rows all equal p: i.i.d. sampling from p."""
    pv = _as_probs(p)
    init = CategoricalDist(pv) if initial is None else CategoricalDist(_as_probs(initial))
    return FiniteMarkovChain(np.tile(pv, (pv.size, 1)), init)


def random_ergodic_chain(n_states: int, rng: np.random.Generator, concentration: float = 1.0) -> FiniteMarkovChain:
    """Chain with Dirichlet rows (all entries positive almost surely) and a Dirichlet initial law."""
    P = rng.dirichlet(np.full(n_states, concentration), size=n_states)
    P = np.maximum(P, 1e-6)
    P = P / P.sum(axis=1, keepdims=True)
    init = rng.dirichlet(np.full(n_states, concentration))
    return FiniteMarkovChain(P, CategoricalDist(init))


def kernel_power(chain: FiniteMarkovChain, t: int) -> np.ndarray:
    """The t-step kernel P^t."""
    if int(t) != t or t < 1:
        raise ValueError(f"t must be an integer >= 1, got {t!r}")
    return np.linalg.matrix_power(chain.transition, int(t))


def is_primitive(chain: FiniteMarkovChain) -> bool:
    """True when some power P^t with t <= N^2 is entrywise positive.

    Uses boolean reachability so that small probabilities cannot underflow.
    """
    n = chain.n_states
    A = (chain.transition > 0).astype(np.int64)
    R = A.copy()
    for _ in range(n * n):
        if np.all(R > 0):
            return True
        R = ((R @ A) > 0).astype(np.int64)
    return bool(np.all(R > 0))


def stationary_distribution(chain: FiniteMarkovChain) -> CategoricalDist:
    """Unique stationary law of an irreducible aperiodic chain.

    Solves pi (P - I) = 0 with sum(pi) = 1 by least squares, then polishes with a
    few power iterations so the fixed-point residual is at machine precision.
    """
    if not is_primitive(chain):
        raise ValueError("chain is reducible or periodic: no unique stationary law")
    P = chain.transition
    n = chain.n_states
    A = np.vstack([(P - np.eye(n)).T, np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    pi = np.clip(pi, 0.0, None)
    pi = pi / pi.sum()
    for _ in range(50):
        nxt = pi @ P
        nxt = nxt / nxt.sum()
        done = np.max(np.abs(nxt - pi)) <= 1e-15
        pi = nxt
        if done:
            break
    return CategoricalDist(pi)


def dobrushin_coefficient(kernel: np.ndarray) -> float:
    """max over row pairs of the TV distance between rows of a stochastic matrix."""
    K = np.asarray(kernel, dtype=float)
    diffs = 0.5 * np.abs(K[:, None, :] - K[None, :, :]).sum(axis=2)
    return float(min(1.0, diffs.max()))


@dataclass(frozen=True, eq=False)
class ErgodicityProfile:
    """Certified geometric-ergodicity data: TV(P^t(x), pi) <= M(x) rho^t for t <= horizon."""

    rho: float
    m_values: np.ndarray
    horizon: int
    stationary: CategoricalDist

    def __post_init__(self) -> None:
        object.__setattr__(self, "m_values", _frozen(self.m_values))

    @property
    def sup_m(self) -> float:
        return float(self.m_values.max())

    def expected_m(self, law) -> float:
        return float(np.dot(_as_probs(law), self.m_values))


def estimate_ergodicity(chain: FiniteMarkovChain, horizon: int = 50) -> ErgodicityProfile:
    """Profile with rho the Dobrushin coefficient and M(x) the worst ratio up to ``horizon``.

    rho is clamped into [RHO_FLOOR, 1 - 1e-9]. Steps where rho^t falls below
    1e-12 are skipped in the ratio because TV(P^t(x), pi) <= rho^t holds there
    by contraction, so dividing floating-point noise by rho^t only inflates M.
    """
    if horizon < 2:
        raise ValueError("horizon must be >= 2")
    raw = dobrushin_coefficient(chain.transition)
    if raw >= 1.0:
        raise ValueError(
            "kernel is not a strict contraction (Dobrushin coefficient is 1); "
            "supply rho manually, for example from the second-eigenvalue modulus"
        )
    rho = float(min(max(raw, RHO_FLOOR), RHO_CEIL))
    pi = stationary_distribution(chain)
    P = chain.transition
    m = np.zeros(chain.n_states)
    Pt = np.eye(chain.n_states)
    for t in range(1, horizon + 1):
        Pt = Pt @ P
        scale = rho**t
        if scale < RATIO_FLOOR:
            break
        tvs = 0.5 * np.abs(Pt - pi.probs[None, :]).sum(axis=1)
        m = np.maximum(m, tvs / scale)
    return ErgodicityProfile(rho=rho, m_values=m, horizon=int(horizon), stationary=pi)


def _step_coefficients(chain: FiniteMarkovChain, max_t: int) -> np.ndarray:
    """delta[t] = Dobrushin coefficient of P^t for t = 0..max_t (delta[0] = 1)."""
    out = np.ones(max_t + 1)
    Pt = np.eye(chain.n_states)
    for t in range(1, max_t + 1):
        Pt = Pt @ chain.transition
        out[t] = dobrushin_coefficient(Pt)
    return out


def _toeplitz_upper(coeffs: np.ndarray, n: int) -> np.ndarray:
    idx = np.arange(n)
    lag = idx[None, :] - idx[:, None]
    G = np.where(lag >= 0, coeffs[np.clip(lag, 0, n - 1)], 0.0)
    return G


DENSE_OP_NORM_MAX_N = 2048


def _op_norm_upper_toeplitz(coeffs: np.ndarray, n: int) -> float:
    """Spectral norm of the upper Toeplitz matrix with first row ``coeffs``.

    Dense SVD up to ``DENSE_OP_NORM_MAX_N``. Beyond that the coefficient sum is
    returned: with nonnegative coefficients it is the supremum of the symbol, so
    it caps the norm for every n and the norm increases toward it as n grows.
    Iterative solvers are avoided because the leading singular values of a
    Toeplitz matrix cluster and convergence stalls short of the norm.
    """
    if n <= DENSE_OP_NORM_MAX_N:
        return float(np.linalg.norm(_toeplitz_upper(coeffs, n), 2))
    return float(np.sum(coeffs[:n]))


@dataclass(frozen=True, eq=False)
class DependencyMatrices:
    """Exact Gamma and Gamma-tilde for n consecutive states of a Markov chain.

    ``step_coeffs[t]`` is the Dobrushin coefficient of P^t, so
    Gamma_{i,j} = step_coeffs[j - i] for j >= i, and Gamma-tilde has
    ``step_coeffs[1]`` on its first superdiagonal. Matrices are built lazily
    because only their norms are needed at large n.
    """

    n: int
    step_coeffs: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "step_coeffs", _frozen(self.step_coeffs))

    @cached_property
    def gamma(self) -> np.ndarray:
        return _toeplitz_upper(self.step_coeffs, self.n)

    @cached_property
    def gamma_tilde(self) -> np.ndarray:
        G = np.zeros((self.n, self.n))
        if self.n >= 2:
            idx = np.arange(self.n - 1)
            G[idx, idx + 1] = self.step_coeffs[1]
        return G

    @cached_property
    def norm_gamma_inf(self) -> float:
        # the first row carries the longest tail, so it has the largest sum
        return float(self.step_coeffs[: self.n].sum())

    @cached_property
    def norm_gamma_op(self) -> float:
        return _op_norm_upper_toeplitz(self.step_coeffs[: self.n], self.n)

    @property
    def norm_gamma_tilde_inf(self) -> float:
        return float(self.step_coeffs[1]) if self.n >= 2 else 0.0

    def gamma_norm(self, kind: str = "inf") -> float:
        if kind == "inf":
            return self.norm_gamma_inf
        if kind == "op":
            return self.norm_gamma_op
        raise ValueError(f"unknown norm {kind!r}; expected 'inf' or 'op'")


def dependency_matrices(chain: FiniteMarkovChain, n: int) -> DependencyMatrices:
    """Gamma and Gamma-tilde of a Markov chain over n steps, via the single-coordinate collapse."""
    if n < 2:
        raise ValueError("n must be >= 2")
    return DependencyMatrices(n=int(n), step_coeffs=_step_coefficients(chain, n - 1))


def gamma_exact(chain: FiniteMarkovChain, n: int) -> np.ndarray:
    """Gamma with Gamma_{i,j} = max_{x,z} TV(P^{j-i}(x), P^{j-i}(z)) for j > i."""
    return dependency_matrices(chain, n).gamma


def gamma_tilde_exact(chain: FiniteMarkovChain, n: int) -> np.ndarray:
    """Gamma-tilde: the one-step Dobrushin coefficient on the first superdiagonal, zero elsewhere."""
    return dependency_matrices(chain, n).gamma_tilde


def joint_law(chain: FiniteMarkovChain, n: int) -> np.ndarray:
    """Joint law of (S_1, ..., S_n) as an n-dimensional probability tensor."""
    N = chain.n_states
    if float(N) ** n > ENUM_BUDGET:
        raise ValueError(f"enumeration budget exceeded: {N}^{n} > {ENUM_BUDGET}")
    J = chain.initial.probs.copy()
    for _ in range(1, n):
        J = J[..., None] * chain.transition[(None,) * (J.ndim - 1)]
        # broadcast: J[..., s_prev, s_next] = J[..., s_prev] * P[s_prev, s_next]
    return J.reshape((N,) * n)


def suffix_law(chain: FiniteMarkovChain, state: int, length: int) -> np.ndarray:
    """Law of the next ``length`` states after ``state``, as a tensor built from kernel rows."""
    N = chain.n_states
    if float(N) ** length > ENUM_BUDGET:
        raise ValueError(f"enumeration budget exceeded: {N}^{length} > {ENUM_BUDGET}")
    T = chain.row(state).copy()
    for _ in range(1, length):
        T = T[..., None] * chain.transition[(None,) * (T.ndim - 1)]
    return T.reshape((N,) * length)


def brute_force_block_tv(chain: FiniteMarkovChain, i: int, j: int, n: int, prefix: Sequence[int] | None = None) -> float:
    """Exact block-TV of the suffix S_[j,n] when only coordinate i is changed.

    Indices are 1-based with i < j <= n. For each pair of values (s_i, s_i')
    the whole suffix law of S_(i,n] is enumerated sequence by sequence from the
    process definition, marginalized onto S_[j,n], and the two tensors are
    compared in total variation. The process definition also covers prefixes
    of probability zero, where conditioning the joint law would be undefined.
    ``prefix`` (states s_1..s_{i-1}) is accepted for completeness: a Markov
    chain's suffix law does not depend on it, and the maximum runs over
    (s_i, s_i') either way.
    """
    if not (1 <= i < j <= n):
        raise ValueError(f"need 1 <= i < j <= n, got i={i}, j={j}, n={n}")
    if prefix is not None and len(prefix) != i - 1:
        raise ValueError(f"prefix must have length {i - 1}")
    N = chain.n_states
    laws = []
    for a in range(N):
        T = suffix_law(chain, a, n - i)
        skip = j - i - 1  # coordinates strictly between i and j are marginalized out
        if skip:
            T = T.sum(axis=tuple(range(skip)))
        laws.append(T.reshape(-1))
    return dobrushin_coefficient(np.vstack(laws))


def stationary_kernel_gap(chain: FiniteMarkovChain) -> float:
    """E_{S~pi} TV(P(S,.), pi)."""
    pi = stationary_distribution(chain).probs
    tvs = 0.5 * np.abs(chain.transition - pi[None, :]).sum(axis=1)
    return float(np.dot(pi, tvs))


def example_chain_gap_caps(p, alphas) -> dict:
    """Both candidate caps on the stationary kernel gap of the example chain.

    ``per_state`` is max(alpha) * sum_i p_i (1 - p_i), which is provable.
    ``quoted`` is (N - 1) max(alpha) / N^2, which can be smaller than the gap.
    """
    pv = _as_probs(p)
    amax = float(np.max(alphas))
    N = pv.size
    return {"per_state": amax * float(np.sum(pv * (1 - pv))), "quoted": (N - 1) * amax / N**2}


def _conditionals(chain: FiniteMarkovChain, trajectory: Sequence[int]) -> np.ndarray:
    s = np.asarray(trajectory, dtype=int)
    conds = np.empty((s.size, chain.n_states))
    conds[0] = chain.initial.probs
    if s.size > 1:
        conds[1:] = chain.transition[s[:-1]]
    return conds


def _validate_trajectory(chain: FiniteMarkovChain, trajectory: Sequence[int]) -> np.ndarray:
    s = np.asarray(trajectory)
    if s.ndim != 1 or s.size == 0:
        raise ValueError("trajectory must be a non-empty 1-D state sequence")
    if np.any(s < 0) or np.any(s >= chain.n_states):
        raise ValueError("trajectory contains states outside the chain")
    return s.astype(int)


def term1_discrepancy(chain: FiniteMarkovChain, trajectory: Sequence[int]) -> float:
    """(1/n) sum_i TV(P(s_n,.), law of S_i given the prefix); the first conditional is the initial law."""
    s = _validate_trajectory(chain, trajectory)
    target = chain.row(s[-1])
    tvs = 0.5 * np.abs(_conditionals(chain, s) - target[None, :]).sum(axis=1)
    return float(tvs.mean())


def term1_bound(chain: FiniteMarkovChain, trajectory: Sequence[int], stationary: CategoricalDist | None = None) -> float:
    """Triangle-inequality cap TV(P(s_n,.), pi) + (1/n) sum_i TV(conditional_i, pi)."""
    s = _validate_trajectory(chain, trajectory)
    pi = (stationary or stationary_distribution(chain)).probs
    head = 0.5 * np.abs(chain.row(s[-1]) - pi).sum()
    tvs = 0.5 * np.abs(_conditionals(chain, s) - pi[None, :]).sum(axis=1)
    return float(head + tvs.mean())


def _term2_enumerated(chain: FiniteMarkovChain, n: int) -> float:
    N = chain.n_states
    J = joint_law(chain, n)
    total = 0.0
    for i in range(1, n + 1):
        T = J.reshape(N ** (i - 1), N, N ** (n - i))
        pre_mass = T.sum(axis=(1, 2))
        ok = pre_mass > 0
        cond = T[ok] / pre_mass[ok][:, None, None]
        head = cond.sum(axis=2)
        tail = cond.sum(axis=1)
        prod = head[:, :, None] * tail[:, None, :]
        tvs = 0.5 * np.abs(cond - prod).sum(axis=(1, 2))
        total += float(np.dot(pre_mass[ok], tvs))
    return total / n


def _term2_markov(chain: FiniteMarkovChain, n: int) -> float:
    """Closed form for a Markov chain.

    Given the prefix, the pair (S_i, S_(i,n]) only depends on S_i through S_{i+1},
    so the block TV equals sum_a r(a) TV(P(a,.), rP) with r the conditional law
    of S_i. The last index contributes nothing.
    """
    P = chain.transition
    total = 0.0
    law_prev = None  # law of S_{i-1}
    for i in range(1, n):
        if i == 1:
            r = chain.initial.probs[None, :]
            weights = np.ones(1)
        else:
            law_prev = chain.initial.probs if law_prev is None else law_prev @ P
            r = P
            weights = law_prev
        mix = r @ P
        rows_tv = 0.5 * np.abs(P[None, :, :] - mix[:, None, :]).sum(axis=2)
        inner = (r * rows_tv).sum(axis=1)
        total += float(np.dot(weights, inner))
    return total / n


def term2_bound(chain: FiniteMarkovChain, n: int, profile: ErgodicityProfile | None = None) -> float:
    """Geometric-ergodicity cap on the dependence term.

    (1/n)(2 rho (1 - rho^(n-2)) E[M(S_1)] / (1 - rho) + 4 TV(P_S1, pi)) + 2 E_pi TV(P(S,.), pi).
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    prof = profile or estimate_ergodicity(chain, horizon=max(50, n + 1))
    rho = prof.rho
    em = prof.expected_m(chain.initial)
    init_tv = tv_distance(chain.initial, prof.stationary)
    geo = 2.0 * rho * (1.0 - rho ** (n - 2)) * em / (1.0 - rho)
    return float((geo + 4.0 * init_tv) / n + 2.0 * stationary_kernel_gap(chain))


def term2_dependence(chain: FiniteMarkovChain, n: int, mode: str = "markov", profile: ErgodicityProfile | None = None) -> float:
    """Averaged dependence term between present-and-future and the product of their conditionals.

    Modes:

    * ``"exact"`` enumerates the joint law (needs N^n <= 10^6) and uses no Markov structure.
    * ``"markov"`` is the exact closed form for Markov chains, usable at any n.
    * ``"bound"`` evaluates the geometric-ergodicity cap from :func:`term2_bound`.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if mode == "exact":
        return _term2_enumerated(chain, n)
    if mode == "markov":
        return _term2_markov(chain, n)
    if mode == "bound":
        return term2_bound(chain, n, profile)
    raise ValueError(f"unknown mode {mode!r}; expected exact, markov or bound")


def sample_trajectory(chain: FiniteMarkovChain, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw S_1..S_n by inverse-CDF sampling from one uniform per step."""
    u = rng.random(n)
    cdf = np.cumsum(chain.transition, axis=1)
    cdf[:, -1] = 1.0
    init_cdf = np.cumsum(chain.initial.probs)
    init_cdf[-1] = 1.0
    s = np.empty(n, dtype=np.int64)
    s[0] = int(np.searchsorted(init_cdf, u[0], side="right"))
    for t in range(1, n):
        s[t] = int(np.searchsorted(cdf[s[t - 1]], u[t], side="right"))
    return s
