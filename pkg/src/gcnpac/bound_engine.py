"""Evaluators for the PAC-Bayesian generalization bounds and their per-term reports.

The generic dependent-data bounds take the squared norm ||Gamma c||^2 directly.
The GCN bounds take a :class:`BoundIngredients` bundle and return a
:class:`BoundReport` whose terms add up to the total. Each reported term is the
contribution after multiplication by the loss cap M where one applies.

Field table for :class:`BoundReport` ``terms`` (also used by the JSON schema test):

=====================  ==========================================================
field                  contribution
=====================  ==========================================================
concentration_term     3 sqrt(A^2 (D_alpha + log(2 sqrt(2n)/delta)) ||Gamma||^2 / (2n-1)).
                       The corollary variant uses its own geometric form.
term1_discrepancy      M * term1, or the corollary's M TV(P(s_n),pi) + (M/n) sum TV(cond_i, pi)
term2_dependence       M * term2, or the corollary's (2M/n)(...) + 2M E_pi TV(P(S,.),pi)
term3_attachment_tv    M * TV(attachment law, auxiliary law); M/sqrt(n) in the corollary
frobenius_term         c_x c_w^2 L L_phi^2 ||hat||_F^2 / n (two-layer only)
=====================  ==========================================================
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

from .markov_core import ErgodicityProfile

TERM_FIELDS = (
    "concentration_term",
    "term1_discrepancy",
    "term2_dependence",
    "term3_attachment_tv",
    "frobenius_term",
)
THEOREMS = ("one_layer", "two_layer", "corollary")


def _check_delta(delta: float) -> None:
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0,1), got {delta!r}")


def _check_alpha(alpha: float) -> None:
    if not alpha > 0 or alpha == 1.0:
        raise ValueError(f"alpha must lie in (0,1) or (1,inf), got {alpha!r}")


def theorem1_catoni(lam: float, alpha: float, d_alpha: float, gamma_c_norm_sq: float, delta: float, prior_mgf_term: float = 0.0) -> float:
    """(prior_mgf_term + D_alpha + log(1/delta)) / lambda + lambda ||Gamma c||^2 / 8."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    _check_alpha(alpha)
    _check_delta(delta)
    if d_alpha < 0 or gamma_c_norm_sq < 0:
        raise ValueError("D_alpha and ||Gamma c||^2 must be non-negative")
    return (prior_mgf_term + d_alpha + math.log(1.0 / delta)) / lam + lam * gamma_c_norm_sq / 8.0


def optimal_lambda(d_alpha: float, gamma_c_norm_sq: float, delta: float) -> float:
    """Minimizer sqrt(8 (D_alpha + log(1/delta)) / ||Gamma c||^2) of the bound when the prior MGF term is zero."""
    return math.sqrt(8.0 * (d_alpha + math.log(1.0 / delta)) / gamma_c_norm_sq)


def theorem2_maurer(alpha: float, d_alpha: float, n: int, delta: float, gamma_c_norm_sq: float) -> float:
    """sqrt(n (D_alpha + log(sqrt(2n)/delta)) ||Gamma c||^2 / (2n - 1))."""
    _check_alpha(alpha)
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 < delta <= 1.0:
        raise ValueError("delta must lie in (0,1]")
    inner = n * (d_alpha + math.log(math.sqrt(2 * n) / delta)) * gamma_c_norm_sq / (2 * n - 1)
    return math.sqrt(max(inner, 0.0))


def theorem2_single_draw(alpha: float, i_alpha: float, delta: float, gamma_c_norm_sq: float) -> float:
    """sqrt((||Gamma c||^2 / 2)(I_alpha + log 2 + alpha/(alpha-1) log(1/delta)))."""
    _check_alpha(alpha)
    if i_alpha < 0:
        raise ValueError("I_alpha must be non-negative")
    if not 0.0 < delta <= 1.0:
        raise ValueError("delta must lie in (0,1]")
    inner = (gamma_c_norm_sq / 2.0) * (i_alpha + math.log(2.0) + alpha / (alpha - 1.0) * math.log(1.0 / delta))
    return math.sqrt(max(inner, 0.0))


def _log_term(d_alpha: float, n: int, delta: float) -> float:
    return d_alpha + math.log(2.0 * math.sqrt(2.0 * n) / delta)


def prop1_e1_bound(c_x, c_w, c_a, L, M, gamma_tilde_inf, gamma_norm, d_alpha, n, delta) -> float:
    """2 sqrt((2 c_x c_w c_a L + M max(1, ||Gamma~||_inf))^2 (D_alpha + log(2 sqrt(2n)/delta)) ||Gamma||^2 / (2n-1))."""
    _check_delta(delta)
    if n < 1 or min(c_x, c_w, c_a, L, M) < 0:
        raise ValueError("invalid constants")
    A = 2 * c_x * c_w * c_a * L + M * max(1.0, gamma_tilde_inf)
    return 2.0 * math.sqrt(A**2 * _log_term(d_alpha, n, delta) * gamma_norm**2 / (2 * n - 1))


def prop2_concentration(c_x, c_w, c_a, L, M, gamma_tilde_inf, gamma_norm, d_alpha, n, delta) -> float:
    A = 2 * c_x * c_w * c_a * L + M * gamma_tilde_inf
    return math.sqrt(A**2 * _log_term(d_alpha, n, delta) * gamma_norm**2 / (2 * n - 1))


@dataclass(frozen=True)
class BoundIngredients:
    """Everything a GCN bound needs, with provenance notes for each computed input."""

    n: int
    c_x: float
    c_w: float
    c_a: float
    M: float
    d_alpha: float
    delta: float
    gamma_norm: float
    gamma_tilde_inf: float
    term1: float = 0.0
    term2: float = 0.0
    attach_tv: float = 0.0
    L: float = math.sqrt(2.0)
    L_phi: float = 1.0
    frob_hat_sq: float | None = None
    gamma_norm_kind: str = "inf"
    gamma_norms: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        _check_delta(self.delta)
        if self.n < 2:
            raise ValueError("n must be >= 2")
        for name in ("term1", "term2", "attach_tv", "d_alpha", "M", "c_a"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


def prop2_e2_bound(ing: BoundIngredients) -> float:
    """M (term1 + term2 + attach_tv) plus the single square-root concentration term."""
    conc = prop2_concentration(ing.c_x, ing.c_w, ing.c_a, ing.L, ing.M, ing.gamma_tilde_inf, ing.gamma_norm, ing.d_alpha, ing.n, ing.delta)
    return ing.M * (ing.term1 + ing.term2 + ing.attach_tv) + conc


@dataclass
class BoundReport:
    """Per-term breakdown of one bound evaluation."""

    theorem: str
    terms: dict
    renyi_term_inputs: dict
    inputs: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    realized_gap: float | None = None

    @property
    def total(self) -> float:
        return float(sum(v for v in self.terms.values() if v is not None))

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["total"] = self.total
        return doc

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _ingredient_inputs(ing: BoundIngredients) -> dict:
    return {
        "c_x": ing.c_x,
        "c_w": ing.c_w,
        "c_a": ing.c_a,
        "L": ing.L,
        "L_phi": ing.L_phi,
        "M": ing.M,
        "gamma_norm": ing.gamma_norm,
        "gamma_norm_kind": ing.gamma_norm_kind,
        "gamma_norms": dict(ing.gamma_norms),
        "gamma_tilde_inf": ing.gamma_tilde_inf,
        "term1": ing.term1,
        "term2": ing.term2,
        "attach_tv": ing.attach_tv,
        "frob_hat_sq": ing.frob_hat_sq,
    }


def theorem3_concentration(ing: BoundIngredients) -> float:
    A = 2 * ing.c_x * ing.c_w * ing.c_a * ing.L + ing.M * max(1.0, ing.gamma_tilde_inf)
    return 3.0 * math.sqrt(A**2 * _log_term(ing.d_alpha, ing.n, ing.delta) * ing.gamma_norm**2 / (2 * ing.n - 1))


def theorem3_total(ing: BoundIngredients) -> BoundReport:
    """One-layer bound: 3 sqrt(...) + M term1 + M term2 + M attach_tv."""
    terms = {
        "concentration_term": theorem3_concentration(ing),
        "term1_discrepancy": ing.M * ing.term1,
        "term2_dependence": ing.M * ing.term2,
        "term3_attachment_tv": ing.M * ing.attach_tv,
        "frobenius_term": None,
    }
    return BoundReport(
        theorem="one_layer",
        terms=terms,
        renyi_term_inputs={"D_alpha": ing.d_alpha, "delta": ing.delta, "n": ing.n},
        inputs=_ingredient_inputs(ing),
        provenance=dict(ing.provenance),
    )


def theorem4_concentration(ing: BoundIngredients) -> float:
    A = 2 * ing.c_x * ing.c_w**2 * ing.c_a**2 * ing.L * ing.L_phi**2 + ing.M * ing.gamma_tilde_inf
    return 3.0 * math.sqrt(A**2 * _log_term(ing.d_alpha, ing.n, ing.delta) * ing.gamma_norm**2 / (2 * ing.n - 1))


def frobenius_term(c_x: float, c_w: float, L: float, L_phi: float, frob_hat_sq: float, n: int) -> float:
    """c_x c_w^2 L L_phi^2 ||hat||_F^2 / n."""
    return c_x * c_w**2 * L * L_phi**2 * frob_hat_sq / n


def theorem4_two_layer(ing: BoundIngredients) -> BoundReport:
    """Two-layer bound: 3 sqrt(...) + M (attach_tv + term1 + term2) + Frobenius term."""
    if ing.frob_hat_sq is None:
        raise ValueError("the two-layer bound needs frob_hat_sq")
    terms = {
        "concentration_term": theorem4_concentration(ing),
        "term1_discrepancy": ing.M * ing.term1,
        "term2_dependence": ing.M * ing.term2,
        "term3_attachment_tv": ing.M * ing.attach_tv,
        "frobenius_term": frobenius_term(ing.c_x, ing.c_w, ing.L, ing.L_phi, ing.frob_hat_sq, ing.n),
    }
    return BoundReport(
        theorem="two_layer",
        terms=terms,
        renyi_term_inputs={"D_alpha": ing.d_alpha, "delta": ing.delta, "n": ing.n},
        inputs=_ingredient_inputs(ing),
        provenance=dict(ing.provenance),
    )


def corollary_concentration(c_x, c_w, c_a, L, M, rho, M0, d_alpha, n, delta) -> float:
    A = 2 * c_x * c_w * c_a * L + 2 * rho * M * M0
    inner = A**2 * (1 - rho + 2 * M0) ** 2 * (d_alpha + math.log(2 * math.sqrt(n) / delta)) / (2 * (1 - rho) ** 2 * (n - 1))
    return 3.0 * math.sqrt(inner)


def corollary_markov(
    profile: ErgodicityProfile,
    M0: float,
    constants: dict,
    d_alpha: float,
    n: int,
    delta: float,
    initial_tv: float,
    trajectory_tvs: dict,
    expected_m1: float,
    kernel_gap: float,
) -> BoundReport:
    """Markov-chain bound with every dependence quantity replaced by its ergodicity cap.

    ``constants`` holds c_x, c_w, c_a, L and M. ``trajectory_tvs`` holds
    ``head`` = TV(P(s_n,.), pi) and ``conds`` = the list of TV(cond_i, pi).
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    _check_delta(delta)
    rho = profile.rho
    c_x, c_w, c_a, L, M = (constants[k] for k in ("c_x", "c_w", "c_a", "L", "M"))
    conds = list(trajectory_tvs["conds"])
    terms = {
        "concentration_term": corollary_concentration(c_x, c_w, c_a, L, M, rho, M0, d_alpha, n, delta),
        "term1_discrepancy": M * trajectory_tvs["head"] + M * sum(conds) / n,
        "term2_dependence": (2 * M / n) * (rho * (1 - rho ** (n - 2)) * expected_m1 / (1 - rho) + 2 * initial_tv) + 2 * M * kernel_gap,
        "term3_attachment_tv": M / math.sqrt(n),
        "frobenius_term": None,
    }
    inputs = dict(constants)
    inputs.update({"rho": rho, "M0": M0, "expected_m1": expected_m1, "initial_tv": initial_tv, "kernel_gap": kernel_gap})
    return BoundReport(
        theorem="corollary",
        terms=terms,
        renyi_term_inputs={"D_alpha": d_alpha, "delta": delta, "n": n},
        inputs=inputs,
        provenance={"rho": "Dobrushin coefficient (exact)", "M(x)": f"max ratio up to horizon {profile.horizon}"},
    )
