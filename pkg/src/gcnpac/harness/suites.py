"""Quick invariant suites run by ``gcnpac verify``, one per module.

Each suite returns a list of :class:`CheckResult`. The suites are smaller
versions of the test-suite checks so that a configured installation can
self-verify without pytest.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .. import bound_engine as be
from .. import gcn_model as gm
from .. import graph_topology as gt
from .. import markov_core as mc
from .. import risk_gap as rg
from .config import ConfigError, ExperimentConfig


@dataclass
class CheckResult:
    module: str
    name: str
    passed: bool
    detail: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def _check(module: str, name: str, fn: Callable[[], tuple[bool, str]]) -> CheckResult:
    try:
        ok, detail = fn()
    except Exception as exc:  # a crashing check is a failed check
        return CheckResult(module, name, False, f"{type(exc).__name__}: {exc}")
    return CheckResult(module, name, bool(ok), detail)


def small_chains(seed: int = 0) -> list[mc.FiniteMarkovChain]:
    """Example, i.i.d. and random chains with N <= 3."""
    rng = np.random.default_rng(seed)
    chains = [
        mc.build_example_chain([0.2, 0.3, 0.5], [0.1, 0.2, 0.3]),
        mc.build_example_chain([0.5, 0.5], [0.2, 0.2], initial=[1.0, 0.0]),
        mc.iid_chain([0.3, 0.7]),
    ]
    chains += [mc.random_ergodic_chain(int(N), rng) for N in (2, 3, 3)]
    return chains


def markov_suite(cfg: ExperimentConfig) -> list[CheckResult]:
    m = "markov_core"

    def stationary():
        pi = mc.stationary_distribution(mc.build_example_chain([0.2, 0.3, 0.5], [0.1, 0.2, 0.3])).probs
        err = float(np.max(np.abs(pi - [0.2, 0.3, 0.5])))
        return err <= 1e-10, f"max error {err:.2e}"

    def gamma_oracle():
        worst = 0.0
        for chain in small_chains():
            for n in range(2, 6):
                G = mc.gamma_exact(chain, n)
                for i in range(1, n):
                    for j in range(i + 1, n + 1):
                        worst = max(worst, abs(G[i - 1, j - 1] - mc.brute_force_block_tv(chain, i, j, n)))
        return worst <= 1e-10, f"max deviation {worst:.2e}"

    def prop3():
        rng = np.random.default_rng(1)
        bad = 0
        for _ in range(20):
            chain = mc.random_ergodic_chain(int(rng.integers(2, 6)), rng)
            prof = mc.estimate_ergodicity(chain)
            dep = mc.dependency_matrices(chain, 40)
            bad += dep.norm_gamma_inf > 1 + 2 * prof.sup_m / (1 - prof.rho) + 1e-12
            bad += dep.norm_gamma_tilde_inf > 2 * prof.rho * prof.sup_m + 1e-12
        return bad == 0, f"{bad} violations"

    def term2():
        bad, worst = 0, 0.0
        for chain in small_chains():
            for n in range(2, 6):
                ex = mc.term2_dependence(chain, n, "exact")
                worst = max(worst, abs(ex - mc.term2_dependence(chain, n, "markov")))
                if mc.dobrushin_coefficient(chain.transition) < 1:
                    bad += ex > mc.term2_dependence(chain, n, "bound") + 1e-12
        return bad == 0 and worst <= 1e-12, f"{bad} violations, closed-form deviation {worst:.2e}"

    def renyi_monotone():
        rng = np.random.default_rng(2)
        for _ in range(50):
            p, q = rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(4))
            vals = [mc.renyi_divergence(p, q, a) for a in (0.5, 2, 4, 8)]
            if any(b < a - 1e-12 for a, b in zip(vals, vals[1:])):
                return False, f"non-monotone {vals}"
        return True, "50 pairs"

    return [
        _check(m, "stationary law of the example chain", stationary),
        _check(m, "Gamma equals block-TV enumeration", gamma_oracle),
        _check(m, "Gamma norm caps from the ergodicity profile", prop3),
        _check(m, "dependence term: closed form and cap", term2),
        _check(m, "Renyi divergence monotone in alpha", renyi_monotone),
    ]


def graph_suite(cfg: ExperimentConfig) -> list[CheckResult]:
    m = "graph_topology"

    def examples():
        pair = gt.normalize(gt.UndirectedGraph.from_edges(2, [[0, 1]]))
        tri = gt.normalize(gt.UndirectedGraph.from_edges(3, [[0, 1], [1, 2], [0, 2]]))
        ok = np.allclose(pair.tilde, 0.5) and np.allclose(pair.hat, [[0, 1], [1, 0]])
        ok &= np.allclose(tri.tilde, 1 / 3) and np.allclose(tri.hat, (np.ones((3, 3)) - np.eye(3)) / 2)
        return bool(ok), "pair and triangle"

    def attach_tv():
        worst = 0.0
        for n in (4, 16, 64):
            norm = gt.normalize(gt.hub_leaf_generate(n, 1, 0, 0))
            tv = gt.attachment_tv(gt.perturbed_attachment(norm), gt.auxiliary_attachment(norm))
            worst = max(worst, abs(tv - 1 / math.sqrt(n)))
        return worst <= 1e-12, f"max deviation {worst:.2e}"

    def frobenius():
        bad = 0
        for seed in range(5):
            g = gt.hub_leaf_generate(100, 2, 10, seed)
            bad += gt.normalize(g).frob_hat_sq > gt.hub_leaf_frobenius_cap(g, 2) + 1e-12
        return bad == 0, f"{bad} violations"

    return [
        _check(m, "normalization examples", examples),
        _check(m, "perturbed-vs-auxiliary TV is 1/sqrt(n)", attach_tv),
        _check(m, "hub-leaf Frobenius cap", frobenius),
    ]


def gradient_error(seed: int, arity: str) -> float:
    """Relative error between analytic and central-difference gradients on a random instance."""
    rng = np.random.default_rng(seed)
    n, d, K = int(rng.integers(4, 7)), int(rng.integers(2, 5)), 3
    norm = gt.normalize(gt.uniform_generate(n, int(rng.integers(0, 2)), seed))
    X = rng.standard_normal((n, d))
    y = rng.integers(0, K, n)
    mats = [rng.standard_normal((d, K))] if arity == "one_layer" else [rng.standard_normal((d, 3)), rng.standard_normal((3, K))]
    _, grads = gm.risk_and_gradients(mats, X, y, norm)
    h, worst = 1e-6, 0.0
    for mi, mat in enumerate(mats):
        fd = np.zeros_like(mat)
        for idx in np.ndindex(mat.shape):
            plus = [x.copy() for x in mats]
            minus = [x.copy() for x in mats]
            plus[mi][idx] += h
            minus[mi][idx] -= h
            fd[idx] = (gm.risk_and_gradients(plus, X, y, norm)[0] - gm.risk_and_gradients(minus, X, y, norm)[0]) / (2 * h)
        scale = max(np.linalg.norm(fd), np.linalg.norm(grads[mi]), 1e-12)
        worst = max(worst, float(np.linalg.norm(fd - grads[mi]) / scale))
    return worst


def gcn_suite(cfg: ExperimentConfig) -> list[CheckResult]:
    m = "gcn_model"

    def gradients():
        worst = max(gradient_error(s, a) for s in range(5) for a in gm.ARITIES)
        return worst <= 1e-5, f"max relative error {worst:.2e}"

    def lipschitz():
        rng = np.random.default_rng(3)
        a, b = rng.normal(scale=3, size=(1000, 4)), rng.normal(scale=3, size=(1000, 4))
        y = rng.integers(0, 4, 1000)
        dl = np.abs(gm.log_softmax_losses(a, y) - gm.log_softmax_losses(b, y))
        ratio = float(np.max(dl / np.linalg.norm(a - b, axis=1)))
        return ratio <= math.sqrt(2) + 1e-9, f"max ratio {ratio:.4f}"

    def loss_cap_grid():
        M = gm.loss_cap(1, 1, 1, 3, "one_layer")
        ang = np.linspace(0, 2 * np.pi, 181)
        worst = 0.0
        for t in ang:
            for u in ang[::6]:
                z = np.array([np.cos(t) * np.cos(u), np.sin(t) * np.cos(u), np.sin(u)])
                worst = max(worst, float(gm.log_softmax_losses(z, 0)[0]))
        return worst <= M, f"max loss {worst:.4f} vs cap {M:.4f}"

    def renyi_gauss():
        from scipy import integrate

        def oracle(mu, sigma, alpha):
            f = lambda x: math.exp(-alpha * (x - mu) ** 2 / (2 * sigma**2) - (1 - alpha) * x**2 / (2 * sigma**2)) / (math.sqrt(2 * math.pi) * sigma)
            val, _ = integrate.quad(f, -np.inf, np.inf)
            return math.log(val) / (alpha - 1)

        w = gm.GcnWeights(np.array([[0.6]]), c_w=1.0)
        pp = gm.PosteriorPrior(w, sigma=1.0, alpha=2.0)
        err = abs(gm.renyi_gaussian(pp) - oracle(0.6, 1.0, 2.0))
        return err <= 1e-8, f"deviation {err:.2e}"

    return [
        _check(m, "analytic gradients match finite differences", gradients),
        _check(m, "log-softmax Lipschitz constant", lipschitz),
        _check(m, "loss cap dominates losses on the logit sphere", loss_cap_grid),
        _check(m, "Gaussian Renyi divergence vs quadrature", renyi_gauss),
    ]


def _small_config(cfg: ExperimentConfig, n: int = 32) -> ExperimentConfig:
    return cfg.with_n(min(cfg.graph.n, n))


def risk_suite(cfg: ExperimentConfig) -> list[CheckResult]:
    m = "risk_gap"
    small = _small_config(cfg)

    def identity_and_determinism():
        a, b = rg.run_trial(small, 0), rg.run_trial(small, 0)
        same = a.row() == b.row()
        ident = abs(a.gap - (a.expected_risk - a.empirical_risk)) <= 1e-12
        return same and ident and a.clamp_events == 0, f"gap {a.gap:.4g}, clamps {a.clamp_events}"

    def permutation():
        ctx = rg.build_trial(small, 1)
        perm = np.random.default_rng(0).permutation(ctx.attach.n_atoms)
        shuffled = gt.AttachmentDistribution(ctx.attach.support[perm], ctx.attach.probs.probs[perm], ctx.attach.kind, ctx.attach.bound)
        x = rg.expected_risk_exact(ctx.weights, ctx.dataset, ctx.chain, ctx.attach, ctx.norm)
        y = rg.expected_risk_exact(ctx.weights, ctx.dataset, ctx.chain, shuffled, ctx.norm)
        return abs(x - y) <= 1e-12, f"difference {abs(x - y):.2e}"

    return [
        _check(m, "gap identity and per-seed determinism", identity_and_determinism),
        _check(m, "expected risk invariant to atom order", permutation),
    ]


def bound_suite(cfg: ExperimentConfig) -> list[CheckResult]:
    m = "bound_engine"
    small = _small_config(cfg)

    def reconcile():
        ctx = rg.build_trial(small, 0)
        ing = ctx.ingredients
        rep = be.theorem3_total(ing)
        p1 = be.prop1_e1_bound(ing.c_x, ing.c_w, ing.c_a, ing.L, ing.M, ing.gamma_tilde_inf, ing.gamma_norm, ing.d_alpha, ing.n, ing.delta)
        p2 = be.prop2_e2_bound(ing)
        return rep.total >= p1 + p2 - 1e-9, f"total {rep.total:.4g} vs props {p1 + p2:.4g}"

    def optimal_lambda():
        lam = be.optimal_lambda(3.0, 2.0, 0.1)
        best = be.theorem1_catoni(lam, 2.0, 3.0, 2.0, 0.1)
        grid = min(be.theorem1_catoni(x, 2.0, 3.0, 2.0, 0.1) for x in np.linspace(0.1, 20, 2000))
        closed = math.sqrt(2.0 * (3.0 + math.log(10)) / 2)
        return abs(best - closed) <= 1e-12 and best <= grid + 1e-12, f"{best:.6f} vs {closed:.6f}"

    def dominance():
        if small.model.arity != "one_layer":
            return True, "skipped for two-layer configs"
        bad = 0
        for s in range(5):
            r = rg.run_trial(small, s)
            bad += r.corollary_total < r.bound_total
        return bad == 0, f"{bad} violations"

    return [
        _check(m, "one-layer total covers both propositions", reconcile),
        _check(m, "optimal lambda closed form", optimal_lambda),
        _check(m, "corollary dominates exact-ingredient bound", dominance),
    ]


def harness_suite(cfg: ExperimentConfig) -> list[CheckResult]:
    m = "harness_cli"

    def roundtrip():
        doc = cfg.to_dict()
        return ExperimentConfig.from_dict(doc) == cfg, "config dict round trip"

    def rejects_alpha():
        doc = ExperimentConfig().to_dict()
        doc["chain"]["alphas"] = [0.1, 1.5, 0.3]
        try:
            ExperimentConfig.from_dict(doc)
        except ConfigError as exc:
            return exc.field == "chain.alphas", str(exc)
        return False, "invalid alpha accepted"

    return [
        _check(m, "config round trip", roundtrip),
        _check(m, "invalid alpha rejected with field name", rejects_alpha),
    ]


SUITES: dict[str, Callable[[ExperimentConfig], list[CheckResult]]] = {
    "markov_core": markov_suite,
    "graph_topology": graph_suite,
    "gcn_model": gcn_suite,
    "risk_gap": risk_suite,
    "bound_engine": bound_suite,
    "harness_cli": harness_suite,
}


def run_suites(cfg: ExperimentConfig, only: str | None = None) -> list[CheckResult]:
    if only is not None and only not in SUITES:
        raise ConfigError("--only", f"unknown module {only!r}; choose from {sorted(SUITES)}")
    names = [only] if only else list(SUITES)
    out: list[CheckResult] = []
    for name in names:
        out.extend(SUITES[name](cfg))
    return out
