"""Risks, generalization gaps, the MGF concentration check, and single trials.

The expected risk of the new node is an exact finite sum. It runs over the N
possible next states, weighted by the kernel row of the last observed state,
and over every attachment atom weighted by its mass. The only Monte-Carlo
layers left are the posterior draw W ~ Q and the trajectory itself.

The decomposition statistics E1 and E2-tilde need conditional expectations of a
node's loss given the past. For a one-layer GCN node j only sees its
neighbourhood, so the expectation enumerates the states of the neighbours at
positions >= j under the Markov law. That is exact and cheap on sparse graphs.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import bound_engine as be
from .gcn_model import (
    GcnWeights,
    LossSpec,
    NodeDataset,
    PosteriorPrior,
    TrainConfig,
    embed_states,
    forward_new_node_one_layer,
    forward_new_node_two_layer,
    forward_one_layer,
    forward_two_layer,
    log_softmax_losses,
    make_loss_spec,
    relu,
    renyi_gaussian,
    sample_posterior,
    train,
)
from .graph_topology import (
    AttachmentDistribution,
    NormalizedGraph,
    attachment_tv,
    auxiliary_attachment,
    default_extra_sequences,
    hub_leaf_generate,
    normalize,
    perturbed_attachment,
    uniform_generate,
)
from .markov_core import (
    FiniteMarkovChain,
    dependency_matrices,
    estimate_ergodicity,
    kernel_power,
    sample_trajectory,
    stationary_kernel_gap,
    term1_discrepancy,
    term2_dependence,
    tv_distance,
)

ATOM_CHUNK = 256
ENUM_LIMIT = 10**5


def aggregation_cap(norm: NormalizedGraph, attach: AttachmentDistribution | None = None) -> float:
    """Smallest cap c_a covering the graph norms and every attachment atom.

    Besides the certified graph cap, c_a must dominate each atom's total mass
    (the one-layer new-node logit) and ||hat||_inf plus the largest atom entry
    (the two-layer new-node hidden layer), so the logit bound behind M holds.
    """
    c_a = norm.c_a
    if attach is not None:
        S = attach.support
        c_a = max(c_a, float(S.sum(axis=1).max()), norm.inf_hat + float(S.max()))
    return float(c_a)


def _forward(weights: GcnWeights, features: np.ndarray, norm: NormalizedGraph) -> np.ndarray:
    if weights.arity == "one_layer":
        return forward_one_layer(features, norm, weights)
    return forward_two_layer(features, norm, weights)


def _empirical(weights, dataset, norm, loss_spec: LossSpec | None) -> tuple[float, int]:
    logits = _forward(weights, dataset.features, norm)
    if loss_spec is None:
        return float(log_softmax_losses(logits, dataset.labels).mean()), 0
    losses, clamps = loss_spec.evaluate(logits, dataset.labels)
    return float(losses.mean()), clamps


def empirical_risk(weights: GcnWeights, dataset: NodeDataset, norm: NormalizedGraph, loss_spec: LossSpec | None = None) -> float:
    """Mean per-node training loss."""
    return _empirical(weights, dataset, norm, loss_spec)[0]


def _new_node_logits(weights, dataset, norm, atoms: np.ndarray, x_new: np.ndarray, activation: bool) -> np.ndarray:
    """Logits of the new node with features x_new, one row per atom."""
    X_ext = np.vstack([dataset.features, x_new[None, :]])
    if weights.arity == "one_layer":
        return forward_new_node_one_layer(X_ext, atoms, weights, activation=activation)
    out = [forward_new_node_two_layer(X_ext, norm, atoms[i : i + ATOM_CHUNK], weights) for i in range(0, atoms.shape[0], ATOM_CHUNK)]
    return np.vstack(out)


def _expected(weights, dataset, chain, attach, norm, activation, loss_spec) -> tuple[float, int]:
    r = chain.row(dataset.state_trace[-1])
    probs = attach.probs.probs
    total, clamps = 0.0, 0
    for s_next in np.nonzero(r > 0)[0]:
        logits = _new_node_logits(weights, dataset, norm, attach.support, dataset.embedding[s_next], activation)
        label = int(dataset.label_of(s_next))
        if loss_spec is None:
            losses = log_softmax_losses(logits, label)
        else:
            losses, c = loss_spec.evaluate(logits, label)
            clamps += c
        total += float(r[s_next]) * float(np.dot(probs, losses))
    return total, clamps


def expected_risk_exact(
    weights: GcnWeights,
    dataset: NodeDataset,
    chain: FiniteMarkovChain,
    attach_dist: AttachmentDistribution,
    norm: NormalizedGraph,
    new_node_activation: bool = False,
    loss_spec: LossSpec | None = None,
) -> float:
    """Exact expected loss of the new node over next states and attachment atoms."""
    return _expected(weights, dataset, chain, attach_dist, norm, new_node_activation, loss_spec)[0]


@dataclass(frozen=True)
class GapEstimate:
    mean: float
    stderr: float
    n_samples: int
    samples: tuple = ()
    clamp_events: int = 0


def posterior_gap(
    pp: PosteriorPrior,
    dataset: NodeDataset,
    chain: FiniteMarkovChain,
    attach_dist: AttachmentDistribution,
    norm: NormalizedGraph,
    n_weight_samples: int,
    seed=0,
    new_node_activation: bool = False,
    loss_spec: LossSpec | None = None,
) -> GapEstimate:
    """Monte-Carlo mean and standard error of the gap under W ~ Q."""
    if n_weight_samples < 1:
        raise ValueError("n_weight_samples must be >= 1")
    rng = np.random.default_rng(seed)
    gaps, clamps = [], 0
    for _ in range(n_weight_samples):
        w = sample_posterior(pp, rng)
        emp, c1 = _empirical(w, dataset, norm, loss_spec)
        exp, c2 = _expected(w, dataset, chain, attach_dist, norm, new_node_activation, loss_spec)
        gaps.append(exp - emp)
        clamps += c1 + c2
    g = np.asarray(gaps)
    se = float(g.std(ddof=1) / math.sqrt(g.size)) if g.size > 1 else float("nan")
    return GapEstimate(float(g.mean()), se, int(g.size), tuple(g.tolist()), clamps)


def _future_law(chain: FiniteMarkovChain, trajectory: np.ndarray, j: int, positions: np.ndarray) -> np.ndarray:
    """Joint law of S at ``positions`` (sorted, first one = j) given s_0..s_{j-1}, as a tensor."""
    P = chain.transition
    law = chain.initial.probs if j == 0 else P[trajectory[j - 1]]
    T = law.copy()
    prev = positions[0]
    for pos in positions[1:]:
        step = kernel_power(chain, int(pos - prev))
        T = T[..., None] * step[(None,) * (T.ndim - 1)]
        prev = pos
    return T


def node_conditional_losses(weights: GcnWeights, dataset: NodeDataset, norm: NormalizedGraph, chain: FiniteMarkovChain, loss_spec: LossSpec | None = None):
    """Per-node realized loss and two conditional expectations given the past.

    Returns arrays (realized, joint, product). ``joint[j]`` is
    E[loss_j | S_[j-1]] under the joint law of the neighbours at positions >= j.
    ``product[j]`` is the same with S_j drawn independently of the later neighbours.
    One-layer weights only.
    """
    if weights.arity != "one_layer":
        raise ValueError("conditional losses are implemented for one-layer weights")
    s = dataset.state_trace
    n = dataset.n
    EW = dataset.embedding @ weights.w1  # N x K
    XW = dataset.features @ weights.w1
    N = chain.n_states
    realized_logits = relu(norm.tilde @ XW)
    if loss_spec is None:
        realized = log_softmax_losses(realized_logits, dataset.labels)
    else:
        realized = loss_spec.evaluate(realized_logits, dataset.labels)[0]
    joint = np.empty(n)
    product = np.empty(n)
    for j in range(n):
        row = norm.tilde[j]
        nbrs = np.nonzero(row)[0]
        fut = nbrs[nbrs >= j]
        if fut[0] != j:
            fut = np.concatenate([[j], fut])
        if float(N) ** fut.size > ENUM_LIMIT:
            raise ValueError(f"node {j} has {fut.size} future neighbours; enumeration too large")
        past = nbrs[nbrs < j]
        base = row[past] @ XW[past] if past.size else np.zeros(EW.shape[1])
        T = _future_law(chain, s, j, fut)
        combos = np.indices(T.shape).reshape(fut.size, -1).T  # B x |F|
        logits = relu(base[None, :] + (row[fut][None, :, None] * EW[combos]).sum(axis=1))
        labels = combos[:, 0] % dataset.n_classes
        if loss_spec is None:
            losses = log_softmax_losses(logits, labels)
        else:
            losses = loss_spec.evaluate(logits, labels)[0]
        pj = T.reshape(-1)
        joint[j] = float(np.dot(pj, losses))
        head = T.reshape(N, -1).sum(axis=1)
        tail = T.reshape(N, -1).sum(axis=0)
        product[j] = float(np.dot(np.outer(head, tail).reshape(-1), losses))
    return realized, joint, product


def e1_statistic(weights, dataset, norm, chain, loss_spec=None) -> float:
    """(1/n) sum_j (E[loss_j | past] - loss_j)."""
    realized, joint, _ = node_conditional_losses(weights, dataset, norm, chain, loss_spec)
    return float(np.mean(joint - realized))


def e2_tilde_statistic(weights, dataset, norm, chain, loss_spec=None) -> float:
    """(1/n) sum_j (E_product[loss_j | past] - E_joint[loss_j | past])."""
    _, joint, product = node_conditional_losses(weights, dataset, norm, chain, loss_spec)
    return float(np.mean(product - joint))


def lipschitz_vector(statistic: str, n: int, c_x: float, c_w: float, c_a: float, L: float, M: float, gamma_tilde_inf: float) -> np.ndarray:
    """Per-coordinate bounded-difference constants c_i of the E1 or E2-tilde statistic."""
    base = 2 * c_x * c_w * c_a * L
    not_last = np.ones(n)
    not_last[-1] = 0.0
    tail = not_last * (base + M * gamma_tilde_inf) / n
    if statistic == "e1":
        return (base + M) / n + tail
    if statistic == "e2_tilde":
        return tail
    raise ValueError(f"unknown statistic {statistic!r}; expected 'e1' or 'e2_tilde'")


@dataclass
class MgfReport:
    statistic: str
    n: int
    n_trials: int
    alpha: float
    lambdas: list
    log_mgf: list
    bound: list
    stderr: list
    point_pass: list
    gamma_c_norm: float
    gamma_norm_times_c_norm: float
    centering: str
    mean: float
    mean_stderr: float
    unstable: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.point_pass)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def mgf_concentration_check(
    chain: FiniteMarkovChain,
    dataset_builder: Callable[[np.ndarray], NodeDataset],
    statistic: str,
    lambda_grid: Sequence[float] | None,
    n_trials: int,
    *,
    n: int,
    weights: GcnWeights,
    norm: NormalizedGraph,
    loss_spec: LossSpec,
    c_x: float,
    c_a: float,
    alpha: float = 2.0,
    seed=0,
) -> MgfReport:
    """Compare the empirical log-MGF of lambda alpha (Psi - E Psi) with lambda^2 alpha^2 ||Gamma c||^2 / 8.

    E1 has mean exactly 0. E2-tilde is centred at its sample mean.
    A grid point passes when the empirical log-MGF is at most the bound plus
    three delta-method standard errors. Points whose exponential weights have
    an effective sample size under 5% of the trials are flagged unstable.
    With ``lambda_grid=None`` ten points span [0, 6 / (alpha ||Gamma c||)].
    """
    if statistic not in ("e1", "e2_tilde"):
        raise ValueError("statistic must be 'e1' or 'e2_tilde'")
    if n_trials < 2:
        raise ValueError("n_trials must be >= 2")
    dep = dependency_matrices(chain, n)
    c = lipschitz_vector(statistic, n, c_x, weights.c_w, c_a, loss_spec.lipschitz_L, loss_spec.loss_cap_M, dep.norm_gamma_tilde_inf)
    gc = float(np.linalg.norm(dep.gamma @ c))
    rng = np.random.default_rng(seed)
    fn = e1_statistic if statistic == "e1" else e2_tilde_statistic
    vals = np.empty(n_trials)
    for t in range(n_trials):
        traj = sample_trajectory(chain, n, rng)
        vals[t] = fn(weights, dataset_builder(traj), norm, chain, loss_spec)
    center = 0.0 if statistic == "e1" else float(vals.mean())
    lambdas = np.linspace(0.0, 6.0 / (alpha * gc), 10) if lambda_grid is None else np.asarray(lambda_grid, dtype=float)
    log_mgf, bound, stderr, ok, unstable = [], [], [], [], []
    for lam in lambdas:
        z = lam * alpha * (vals - center)
        zmax = z.max()
        w = np.exp(z - zmax)
        mean_w = w.mean()
        lm = float(zmax + math.log(mean_w))
        se = float(w.std(ddof=1) / (math.sqrt(n_trials) * mean_w))
        b = float(lam**2 * alpha**2 * gc**2 / 8.0)
        ess = float(w.sum() ** 2 / np.sum(w**2))
        log_mgf.append(lm)
        bound.append(b)
        stderr.append(se)
        ok.append(bool(lm <= b + 3 * se + 1e-15))
        unstable.append(bool(ess < 0.05 * n_trials))
    dev = vals - center
    return MgfReport(
        statistic=statistic,
        n=n,
        n_trials=n_trials,
        alpha=alpha,
        lambdas=lambdas.tolist(),
        log_mgf=log_mgf,
        bound=bound,
        stderr=stderr,
        point_pass=ok,
        gamma_c_norm=gc,
        gamma_norm_times_c_norm=float(dep.norm_gamma_op * np.linalg.norm(c)),
        centering="exact zero" if statistic == "e1" else "sample mean",
        mean=float(dev.mean()),
        mean_stderr=float(dev.std(ddof=1) / math.sqrt(n_trials)),
        unstable=unstable,
    )


TRIAL_COLUMNS = (
    "seed",
    "n",
    "arity",
    "empirical_risk",
    "expected_risk",
    "gap",
    "posterior_gap_mean",
    "posterior_gap_stderr",
    "bound_total",
    "corollary_total",
    "d_alpha",
    "loss_cap",
    "c_a",
    "clamp_events",
)


@dataclass
class TrialRecord:
    """Outcome of one trial; ``bound`` and ``corollary`` hold the full breakdowns."""

    seed: int
    n: int
    arity: str
    empirical_risk: float
    expected_risk: float
    gap: float
    posterior_gap_mean: float
    posterior_gap_stderr: float
    bound_total: float
    corollary_total: float
    d_alpha: float
    loss_cap: float
    c_a: float
    clamp_events: int
    bound: be.BoundReport | None = None
    corollary: be.BoundReport | None = None

    def row(self) -> dict:
        return {k: getattr(self, k) for k in TRIAL_COLUMNS}

    def to_json(self) -> str:
        doc = self.row()
        doc["bound"] = self.bound.to_dict() if self.bound else None
        doc["corollary"] = self.corollary.to_dict() if self.corollary else None
        return json.dumps(doc)


def format_value(v) -> str:
    """Stable text for CSV cells: repr for floats so output is byte-reproducible."""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def records_to_csv(records: Sequence[TrialRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRIAL_COLUMNS)
    for r in records:
        w.writerow([format_value(r.row()[k]) for k in TRIAL_COLUMNS])
    return buf.getvalue()


def records_to_jsonl(records: Sequence[TrialRecord]) -> str:
    return "".join(r.to_json() + "\n" for r in records)


@dataclass
class TrialContext:
    """Intermediate objects of a trial, kept for reports and debugging."""

    chain: FiniteMarkovChain
    trajectory: np.ndarray
    dataset: NodeDataset
    norm: NormalizedGraph
    attach: AttachmentDistribution
    weights: GcnWeights
    loss_spec: LossSpec
    c_a: float
    ingredients: be.BoundIngredients
    provenance: dict


def build_trial(config, seed: int) -> TrialContext:
    """Everything up to (but excluding) the gap evaluation, reproducible per seed."""
    from .harness.config import ConfigError, component_seeds, fixed_graph_seed

    seeds = component_seeds(config.run.master_seed, seed)
    cs, gs, ms, bs = config.chain, config.graph, config.model, config.bound
    n = gs.n
    chain = cs.build()
    traj = sample_trajectory(chain, n, np.random.default_rng(seeds["trajectory"]))
    dataset = embed_states(traj, ms.d, ms.c_x, ms.K, seeds["embedding"], n_states=chain.n_states)
    gseed = seeds["graph"] if gs.resample else fixed_graph_seed(config.run.master_seed)
    if gs.family == "hub_leaf":
        graph = hub_leaf_generate(n, gs.k, gs.m_ll_for(n), gseed, leaf_degree=gs.leaf_degree, hub_fraction=gs.hub_fraction)
    else:
        graph = uniform_generate(n, gs.extra_edges, gseed)
    norm = normalize(graph)
    aux = auxiliary_attachment(norm)
    if ms.attachment == "perturbed":
        attach = perturbed_attachment(norm, default_extra_sequences(n, ms.n_extra))
    else:
        attach = aux
    c_a_cert = aggregation_cap(norm, attach)
    if bs.c_a is not None and bs.c_a < c_a_cert - 1e-12:
        raise ConfigError("bound.c_a", f"declared {bs.c_a} is below the certified cap {c_a_cert:.6g} at n={n}")
    c_a = float(bs.c_a) if bs.c_a is not None else c_a_cert
    loss_spec = make_loss_spec(ms.c_x, ms.c_w, c_a, ms.K, ms.arity)
    tcfg = TrainConfig(arity=ms.arity, lr=ms.lr, epochs=ms.epochs, c_w=ms.c_w, seed=seeds["init"], hidden=ms.h)
    weights = train(dataset, norm, tcfg)
    pp = PosteriorPrior(weights, sigma=ms.sigma, alpha=ms.alpha_renyi)
    dep = dependency_matrices(chain, n)
    t1 = term1_discrepancy(chain, traj)
    t2 = term2_dependence(chain, n, mode="markov")
    tv3 = attachment_tv(attach, aux)
    provenance = {
        "term1": "exact (kernel rows)",
        "term2": "exact (Markov closed form, 0 Monte-Carlo samples)",
        "term3_attachment_tv": "exact (merged finite support)",
        "gamma": "exact (Dobrushin coefficients of kernel powers)",
        "D_alpha": "closed form (equal-covariance Gaussians)",
        "c_a": "declared" if bs.c_a is not None else "certified",
        "posterior_gap": f"Monte-Carlo over {ms.n_weight_samples} posterior draws",
    }
    ing = be.BoundIngredients(
        n=n,
        c_x=ms.c_x,
        c_w=ms.c_w,
        c_a=c_a,
        M=loss_spec.loss_cap_M,
        d_alpha=renyi_gaussian(pp),
        delta=bs.delta,
        gamma_norm=dep.gamma_norm(bs.gamma_norm),
        gamma_tilde_inf=dep.norm_gamma_tilde_inf,
        term1=t1,
        term2=t2,
        attach_tv=tv3,
        L=loss_spec.lipschitz_L,
        L_phi=loss_spec.relu_lipschitz,
        frob_hat_sq=norm.frob_hat_sq,
        gamma_norm_kind=bs.gamma_norm,
        gamma_norms={"inf": dep.norm_gamma_inf, "op": dep.norm_gamma_op},
        provenance=provenance,
    )
    return TrialContext(chain, traj, dataset, norm, attach, weights, loss_spec, c_a, ing, provenance)


def corollary_for(ctx: TrialContext, horizon: int = 50) -> be.BoundReport:
    """Corollary-style bound for the trial's chain, trajectory and constants."""
    chain, traj, ing = ctx.chain, ctx.trajectory, ctx.ingredients
    profile = estimate_ergodicity(chain, horizon=max(horizon, ing.n + 1))
    pi = profile.stationary.probs
    conds = [tv_distance(chain.initial, pi)] + [tv_distance(chain.row(s), pi) for s in traj[:-1]]
    return be.corollary_markov(
        profile,
        profile.sup_m,
        {"c_x": ing.c_x, "c_w": ing.c_w, "c_a": ing.c_a, "L": ing.L, "M": ing.M},
        ing.d_alpha,
        ing.n,
        ing.delta,
        initial_tv=tv_distance(chain.initial, pi),
        trajectory_tvs={"head": tv_distance(chain.row(traj[-1]), pi), "conds": conds},
        expected_m1=profile.expected_m(chain.initial),
        kernel_gap=stationary_kernel_gap(chain),
    )


def run_trial(config, seed: int) -> TrialRecord:
    """Sample, train, evaluate the gap and the bounds for one seed."""
    from .harness.config import component_seeds

    ctx = build_trial(config, seed)
    ms = config.model
    pp = PosteriorPrior(ctx.weights, sigma=ms.sigma, alpha=ms.alpha_renyi)
    emp, c1 = _empirical(ctx.weights, ctx.dataset, ctx.norm, ctx.loss_spec)
    exp, c2 = _expected(ctx.weights, ctx.dataset, ctx.chain, ctx.attach, ctx.norm, ms.new_node_activation, ctx.loss_spec)
    post = posterior_gap(
        pp,
        ctx.dataset,
        ctx.chain,
        ctx.attach,
        ctx.norm,
        ms.n_weight_samples,
        seed=component_seeds(config.run.master_seed, seed)["posterior"],
        new_node_activation=ms.new_node_activation,
        loss_spec=ctx.loss_spec,
    )
    if ms.arity == "one_layer":
        report = be.theorem3_total(ctx.ingredients)
        corollary = corollary_for(ctx, config.bound.horizon)
        cor_total = corollary.total
    else:
        report = be.theorem4_two_layer(ctx.ingredients)
        corollary, cor_total = None, float("nan")
    report.realized_gap = post.mean
    return TrialRecord(
        seed=int(seed),
        n=int(ctx.ingredients.n),
        arity=ms.arity,
        empirical_risk=emp,
        expected_risk=exp,
        gap=exp - emp,
        posterior_gap_mean=post.mean,
        posterior_gap_stderr=post.stderr,
        bound_total=report.total,
        corollary_total=cor_total,
        d_alpha=ctx.ingredients.d_alpha,
        loss_cap=ctx.loss_spec.loss_cap_M,
        c_a=ctx.c_a,
        clamp_events=c1 + c2 + post.clamp_events,
        bound=report,
        corollary=corollary,
    )
