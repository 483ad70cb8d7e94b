"""Experiment configuration: a single JSON document with five sections.

Example::

    {
      "chain": {"kind": "example", "p": [0.2, 0.3, 0.5], "alphas": [0.1, 0.2, 0.3], "initial": "stationary"},
      "graph": {"family": "hub_leaf", "n": 64, "k": 2, "m_ll": null},
      "model": {"arity": "one_layer", "d": 4, "K": 3, "c_x": 1.0, "c_w": 1.0, "sigma": 0.1},
      "bound": {"delta": 0.1, "gamma_norm": "inf", "c_a": null},
      "run": {"n_trials": 20, "sweep": [64, 128], "output_dir": "results", "master_seed": 0}
    }

Missing fields take the defaults below. Unknown fields are rejected so typos
surface as configuration errors naming the offending field.

Seeds: each trial seed expands through ``numpy.random.SeedSequence([master_seed,
trial_seed])`` into one child per entry of ``SEED_COMPONENTS`` (in that order),
so any component can be re-run in isolation. When ``graph.resample`` is false
the graph seed comes from ``SeedSequence([master_seed])`` instead.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

SEED_COMPONENTS = ("trajectory", "embedding", "graph", "init", "posterior")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending dotted path."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class ChainSpec:
    kind: str = "example"
    N: int | None = None
    p: tuple = (0.2, 0.3, 0.5)
    alphas: tuple = (0.1, 0.2, 0.3)
    initial: object = "stationary"

    def build(self):
        from ..markov_core import CategoricalDist, build_example_chain, iid_chain

        p = np.asarray(self.p, dtype=float)
        init = None if self.initial == "stationary" else CategoricalDist(np.asarray(self.initial, dtype=float))
        if self.kind == "iid":
            return iid_chain(p, init)
        return build_example_chain(p, self.alphas, init)


@dataclass(frozen=True)
class GraphSpec:
    family: str = "hub_leaf"
    n: int = 64
    k: int = 2
    m_ll: int | None = None
    leaf_degree: int | None = None
    hub_fraction: float = 1.0
    extra_edges: int = 0
    resample: bool = True

    def m_ll_for(self, n: int) -> int:
        return int(math.ceil(math.sqrt(n))) if self.m_ll is None else int(self.m_ll)


@dataclass(frozen=True)
class ModelSpec:
    arity: str = "one_layer"
    d: int = 4
    h: int = 4
    K: int = 3
    c_x: float = 1.0
    c_w: float = 1.0
    lr: float = 0.5
    epochs: int = 100
    sigma: float = 0.1
    alpha_renyi: float = 2.0
    attachment: str = "perturbed"
    n_extra: int = 1
    new_node_activation: bool = False
    n_weight_samples: int = 16


@dataclass(frozen=True)
class BoundSpec:
    delta: float = 0.1
    gamma_norm: str = "inf"
    c_a: float | None = None
    horizon: int = 50


@dataclass(frozen=True)
class RunSpec:
    seeds: tuple | None = None
    n_trials: int = 20
    sweep: tuple = (64, 128)
    output_dir: str = "results"
    master_seed: int = 0

    def seed_list(self) -> list[int]:
        return list(self.seeds) if self.seeds is not None else list(range(self.n_trials))


@dataclass(frozen=True)
class ExperimentConfig:
    chain: ChainSpec = field(default_factory=ChainSpec)
    graph: GraphSpec = field(default_factory=GraphSpec)
    model: ModelSpec = field(default_factory=ModelSpec)
    bound: BoundSpec = field(default_factory=BoundSpec)
    run: RunSpec = field(default_factory=RunSpec)

    def with_n(self, n: int) -> "ExperimentConfig":
        return replace(self, graph=replace(self.graph, n=int(n)))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("<root>", "configuration must be a JSON object")
        sections = {f.name: f for f in fields(cls)}
        kinds = {"chain": ChainSpec, "graph": GraphSpec, "model": ModelSpec, "bound": BoundSpec, "run": RunSpec}
        unknown = set(doc) - set(sections)
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown section")
        built = {}
        for name, kind in kinds.items():
            sub = doc.get(name, {}) or {}
            if not isinstance(sub, dict):
                raise ConfigError(name, "section must be an object")
            allowed = {f.name for f in fields(kind)}
            bad = set(sub) - allowed
            if bad:
                raise ConfigError(f"{name}.{sorted(bad)[0]}", "unknown field")
            vals = {k: tuple(v) if isinstance(v, list) and k in ("p", "alphas", "seeds", "sweep") else v for k, v in sub.items()}
            built[name] = kind(**vals)
        cfg = cls(**built)
        validate(cfg)
        return cfg


def _positive(name: str, value) -> None:
    if value is None or not isinstance(value, (int, float)) or isinstance(value, bool) or not value > 0:
        raise ConfigError(name, f"must be a positive number, got {value!r}")


def _posint(name: str, value, minimum: int = 1) -> None:
    if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
        raise ConfigError(name, f"must be an integer >= {minimum}, got {value!r}")


def validate(cfg: ExperimentConfig) -> None:
    """Raise :class:`ConfigError` naming the first invalid field."""
    c = cfg.chain
    if c.kind not in ("example", "iid"):
        raise ConfigError("chain.kind", "must be 'example' or 'iid'")
    try:
        p = np.asarray(c.p, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError("chain.p", "must be a list of probabilities")
    if p.ndim != 1 or p.size < 2 or np.any(p <= 0) or abs(p.sum() - 1) > 1e-9:
        raise ConfigError("chain.p", "must be a positive probability vector summing to 1")
    if c.N is not None and c.N != p.size:
        raise ConfigError("chain.N", f"N={c.N} does not match len(p)={p.size}")
    if c.kind == "example":
        a = np.asarray(c.alphas, dtype=float)
        if a.shape != p.shape:
            raise ConfigError("chain.alphas", "must have one entry per state")
        if np.any(a <= 0) or np.any(a >= 1):
            raise ConfigError("chain.alphas", f"every alpha must lie in (0,1), got {list(c.alphas)}")
    if c.initial != "stationary":
        init = np.asarray(c.initial, dtype=float)
        if init.shape != p.shape or np.any(init < 0) or abs(init.sum() - 1) > 1e-9:
            raise ConfigError("chain.initial", "must be 'stationary' or a probability vector")
    g = cfg.graph
    if g.family not in ("hub_leaf", "uniform"):
        raise ConfigError("graph.family", "must be 'hub_leaf' or 'uniform'")
    _posint("graph.n", g.n, 2)
    _posint("graph.k", g.k, 1)
    if g.m_ll is not None:
        _posint("graph.m_ll", g.m_ll, 0)
    if g.leaf_degree is not None:
        _posint("graph.leaf_degree", g.leaf_degree, 1)
    if not 0 < g.hub_fraction <= 1:
        raise ConfigError("graph.hub_fraction", "must lie in (0,1]")
    _posint("graph.extra_edges", g.extra_edges, 0)
    m = cfg.model
    if m.arity not in ("one_layer", "two_layer"):
        raise ConfigError("model.arity", "must be 'one_layer' or 'two_layer'")
    for name in ("d", "h", "K", "n_extra", "n_weight_samples"):
        _posint(f"model.{name}", getattr(m, name))
    _posint("model.epochs", m.epochs, 0)
    for name in ("c_x", "c_w", "sigma"):
        _positive(f"model.{name}", getattr(m, name))
    if not isinstance(m.lr, (int, float)) or m.lr < 0:
        raise ConfigError("model.lr", "must be non-negative")
    _positive("model.alpha_renyi", m.alpha_renyi)
    if m.alpha_renyi == 1:
        raise ConfigError("model.alpha_renyi", "alpha = 1 is not a valid order")
    if m.attachment not in ("perturbed", "auxiliary"):
        raise ConfigError("model.attachment", "must be 'perturbed' or 'auxiliary'")
    b = cfg.bound
    if not isinstance(b.delta, (int, float)) or not 0 < b.delta < 1:
        raise ConfigError("bound.delta", f"must lie in (0,1), got {b.delta!r}")
    if b.gamma_norm not in ("inf", "op"):
        raise ConfigError("bound.gamma_norm", "must be 'inf' or 'op'")
    if b.c_a is not None:
        _positive("bound.c_a", b.c_a)
    _posint("bound.horizon", b.horizon, 2)
    r = cfg.run
    if r.seeds is not None:
        if not all(isinstance(s, int) and s >= 0 for s in r.seeds):
            raise ConfigError("run.seeds", "must be non-negative integers")
    _posint("run.n_trials", r.n_trials)
    if len(r.sweep) == 0:
        raise ConfigError("run.sweep", "must be non-empty")
    for v in r.sweep:
        _posint("run.sweep", v, 2)
    _posint("run.master_seed", r.master_seed, 0)


def load_config(path: str | Path | None) -> ExperimentConfig:
    """Parse a JSON config file; ``None`` gives the defaults."""
    if path is None:
        return ExperimentConfig()
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno} column {exc.colno}", exc.msg) from None
    try:
        return ExperimentConfig.from_dict(doc)
    except TypeError as exc:
        raise ConfigError("<root>", str(exc)) from None


def component_seeds(master_seed: int, trial_seed: int) -> dict[str, int]:
    """Per-component integer seeds for one trial."""
    children = np.random.SeedSequence([int(master_seed), int(trial_seed)]).spawn(len(SEED_COMPONENTS))
    return {name: int(child.generate_state(1)[0]) for name, child in zip(SEED_COMPONENTS, children)}


def fixed_graph_seed(master_seed: int) -> int:
    return int(np.random.SeedSequence([int(master_seed)]).generate_state(1)[0])
