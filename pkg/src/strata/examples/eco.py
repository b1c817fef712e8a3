"""Stylized metacommunity: seasonal climate, a patch network, prey-predator
dynamics with trait-driven dispersal, and per-patch extinction tracking.

Layer 1 drives the environment (climate signal, patch quality), layer 2 runs
the population processes, layer 3 aggregates metrics. All layer-2 streams
read the layer-entry snapshot, so each derives what it needs from the same
canonical state (prey recomputation is shared through pure helpers below);
the landscape responds to the previous tick's climate signal, which is the
one deliberate lag in the model.

The functional forms are stylized, not mechanistic: logistic growth scaled
by patch quality and a risk-sensitivity trait, Holling type-II predation,
and proportional redistribution toward more attractive patches. Every
constant sits in :class:`EcoConfig` so studies can override it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np

from ..game import Participant, ScenarioGrid, ScoreSpec
from ..kernel import Context, LayeredModel, StreamSpec, rng_substream
from ..schemas import Gene, Schema

ECO_WEIGHTS = (-1.0, -1.0)
SCORE = ScoreSpec("PREY.PREY.mean_x", "mean")
BASELINE_TRAITS = (0.55, 0.35)
CHAMPION_TRAITS = (0.9, 0.05)


@dataclass(frozen=True)
class EcoConfig:
    # climate
    amp: float = 0.6
    period: int = 35
    shock_prob: float = 0.02
    # landscape
    n_patches: int = 8
    fragmentation: float = 0.3
    move_cost: float = 0.1
    edge_prob: float = 0.3
    q_min: float = 0.05
    landscape_seed: int = 0
    # prey; the biomass scale is O(1) per patch so the type-II response
    # (attack 0.9, handling 0.1) can balance against logistic growth
    r: float = 0.25
    K: float = 1.0
    risk: float = 0.5
    beta_F: float = 1.5
    gamma_V: float = 0.1
    attack: float = 0.9
    handling: float = 0.1
    # predator
    conv: float = 0.15
    mort: float = 0.084
    # movement
    dispersal: float = 0.2
    # aggregation
    ext_thresh: float = 0.05
    extinction_penalty: float = 0.01

    def __post_init__(self):
        if self.period < 2:
            raise ValueError("period must be >= 2")
        if self.n_patches < 1:
            raise ValueError("n_patches must be >= 1")
        if self.K <= 0:
            raise ValueError("K must be positive")
        for name in ("shock_prob", "fragmentation", "move_cost", "risk",
                     "gamma_V", "mort", "dispersal"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")


def config_from_dict(data: dict) -> EcoConfig:
    known = {f.name for f in fields(EcoConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown eco config fields: {sorted(unknown)}")
    return EcoConfig(**data)


# ---------------------------------------------------------------------------
# Process steps (pure; streams wrap these)
# ---------------------------------------------------------------------------

def climate_step(t: int, amp: float, period: int, shock_prob: float, rng) -> float:
    """Seasonal sine signal with rare negative shocks of amplitude
    ``amp * U(0.5, 1.5)``."""
    signal = amp * math.sin(2.0 * math.pi * t / period)
    if rng.random() < shock_prob:
        signal -= amp * rng.uniform(0.5, 1.5)
    return signal


@dataclass(frozen=True)
class Landscape:
    """Static patch network: ring backbone plus random extra edges, with a
    per-patch climate sensitivity."""

    n: int
    edges: tuple[tuple[int, int], ...]
    neighbors: tuple[tuple[int, ...], ...]
    h: tuple[float, ...]
    move_cost: float


def landscape_init(n_patches: int, fragmentation: float, move_cost: float, rng,
                   edge_prob: float = 0.3) -> Landscape:
    """Ring backbone guarantees connectivity; every non-ring pair is added
    independently with probability ``edge_prob * (1 - fragmentation)``."""
    h = tuple(float(rng.uniform(0.5, 1.5)) for _ in range(n_patches))
    edges: list[tuple[int, int]] = []
    if n_patches == 2:
        edges.append((0, 1))
    elif n_patches > 2:
        edges.extend((i, (i + 1) % n_patches) for i in range(n_patches))
        edges = [(min(a, b), max(a, b)) for a, b in edges]
    ring = set(edges)
    p_extra = edge_prob * (1.0 - fragmentation)
    for i in range(n_patches):
        for j in range(i + 1, n_patches):
            if (i, j) not in ring and rng.random() < p_extra:
                edges.append((i, j))
    nbrs: list[list[int]] = [[] for _ in range(n_patches)]
    for a, b in edges:
        nbrs[a].append(b)
        nbrs[b].append(a)
    return Landscape(n_patches, tuple(edges), tuple(tuple(sorted(ns)) for ns in nbrs),
                     h, move_cost)


def landscape_step(signal: float, h: np.ndarray, q_min: float) -> np.ndarray:
    """Patch quality from the climate signal and per-patch sensitivity."""
    return np.maximum(q_min, 1.0 + signal * np.asarray(h))


def type_ii_consumption(x: np.ndarray, y: np.ndarray, risk: float, gamma_V: float,
                        attack: float, handling: float) -> np.ndarray:
    """Predation loss with a saturating (type-II) functional response,
    scaled up by foraging exposure."""
    return (1.0 + gamma_V * risk) * (attack * x / (1.0 + attack * handling * x)) * y


def prey_step(x: np.ndarray, y: np.ndarray, q: np.ndarray, risk: float, r: float,
              K: float, beta_F: float, gamma_V: float, attack: float = 0.9,
              handling: float = 0.1) -> np.ndarray:
    """Pre-movement prey update: risk-modulated logistic growth minus
    type-II predation, absorbing at zero."""
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y)) and np.all(np.isfinite(q))):
        raise ValueError("non-finite prey inputs")
    growth = r * (1.0 + beta_F * (risk - 0.5)) * q * x * (1.0 - x / (K * q))
    loss = type_ii_consumption(x, y, risk, gamma_V, attack, handling)
    return np.maximum(0.0, x + growth - loss)


def predator_step(y: np.ndarray, consumption: np.ndarray, conv: float, mort: float) -> np.ndarray:
    """Predator update from the same consumption the prey step computed."""
    return np.maximum(0.0, y + conv * consumption - mort * y)


def movement_step(x_pre: np.ndarray, q: np.ndarray, landscape: Landscape,
                  dispersal: float, move_cost: float, K: float) -> np.ndarray:
    """Redistribute a dispersal fraction of each patch toward strictly more
    attractive neighbors, proportionally to the attractiveness surplus;
    arrivals lose the movement cost."""
    x_pre = np.asarray(x_pre, dtype=float)
    attract = np.maximum(0.0, q * (1.0 - x_pre / (K * q)))
    out = x_pre.copy()
    if dispersal == 0.0:
        return out
    arrivals = np.zeros_like(x_pre)
    for i in range(landscape.n):
        better = [(j, attract[j] - attract[i]) for j in landscape.neighbors[i]
                  if attract[j] > attract[i]]
        if not better:
            continue
        sent = dispersal * x_pre[i]
        total_surplus = sum(s for _, s in better)
        out[i] -= sent
        for j, surplus in better:
            arrivals[j] += (1.0 - move_cost) * sent * (surplus / total_surplus)
    return out + arrivals


def count_downward_crossings(prev: np.ndarray, cur: np.ndarray, thresh: float) -> int:
    """Patch-ticks where biomass fell below the threshold this tick."""
    return int(np.sum((np.asarray(prev) >= thresh) & (np.asarray(cur) < thresh)))


def _series_cv(series) -> float:
    mean = float(np.mean(series))
    if mean == 0.0:
        return 0.0
    return float(np.std(series) / mean)


# ---------------------------------------------------------------------------
# Model assembly
# ---------------------------------------------------------------------------

def build_eco_model(config: EcoConfig) -> tuple[LayeredModel, Context]:
    """Six streams over three layers, plus the initial context (prey at K/2,
    predators at 0.2*K, neutral climate)."""
    cfg = config
    land = landscape_init(cfg.n_patches, cfg.fragmentation, cfg.move_cost,
                          rng_substream(cfg.landscape_seed, "eco:landscape"),
                          cfg.edge_prob)
    h = np.asarray(land.h)

    climate = StreamSpec(
        id="climate", layer=1,
        writes=frozenset({"CLIMATE.signal"}),
        step=lambda view, rng: {
            "CLIMATE.signal": climate_step(view.tick, cfg.amp, cfg.period, cfg.shock_prob, rng)
        },
    )

    landscape = StreamSpec(
        id="landscape", layer=1,
        reads=frozenset({"CLIMATE.signal"}),
        stateful_reads=frozenset({"CLIMATE.signal"}),
        writes=frozenset({"LAND.q"}),
        step=lambda view, rng: {
            "LAND.q": landscape_step(float(view["CLIMATE.signal"]), h, cfg.q_min)
        },
    )

    state_keys = frozenset({"PREY.x", "PRED.y"})

    def prey_fn(view, rng):
        x, y, q = view.vector("PREY.x"), view.vector("PRED.y"), view.vector("LAND.q")
        return {
            "PREY.x_pre": prey_step(x, y, q, cfg.risk, cfg.r, cfg.K, cfg.beta_F,
                                    cfg.gamma_V, cfg.attack, cfg.handling),
            "PREY.consumption": type_ii_consumption(x, y, cfg.risk, cfg.gamma_V,
                                                    cfg.attack, cfg.handling),
        }

    prey = StreamSpec(
        id="prey", layer=2,
        reads=state_keys | {"LAND.q"}, stateful_reads=state_keys,
        writes=frozenset({"PREY.x_pre", "PREY.consumption"}),
        step=prey_fn,
    )

    def predator_fn(view, rng):
        x, y = view.vector("PREY.x"), view.vector("PRED.y")
        consumption = type_ii_consumption(x, y, cfg.risk, cfg.gamma_V, cfg.attack, cfg.handling)
        return {"PRED.y": predator_step(y, consumption, cfg.conv, cfg.mort)}

    predator = StreamSpec(
        id="predator", layer=2,
        reads=state_keys, stateful_reads=state_keys,
        writes=frozenset({"PRED.y"}),
        step=predator_fn,
    )

    def movement_fn(view, rng):
        x, y, q = view.vector("PREY.x"), view.vector("PRED.y"), view.vector("LAND.q")
        x_pre = prey_step(x, y, q, cfg.risk, cfg.r, cfg.K, cfg.beta_F,
                          cfg.gamma_V, cfg.attack, cfg.handling)
        return {"PREY.x": movement_step(x_pre, q, land, cfg.dispersal, cfg.move_cost, cfg.K)}

    movement = StreamSpec(
        id="movement", layer=2,
        reads=state_keys | {"LAND.q"}, stateful_reads=state_keys,
        writes=frozenset({"PREY.x"}),
        step=movement_fn,
    )

    def aggregate_fn(view, rng):
        x = view.vector("PREY.x")
        prev = view.vector("ECO.prev_x")
        crossings = count_downward_crossings(prev, x, cfg.ext_thresh)
        return {
            "ECO.extinctions": int(view["ECO.extinctions"]) + crossings,
            "ECO.prev_x": x,
        }

    def cross_cv(view) -> float:
        x = view.vector("PREY.x")
        return _series_cv(x)

    aggregator = StreamSpec(
        id="aggregator", layer=3,
        reads=frozenset({"PREY.x", "PRED.y", "ECO.extinctions", "ECO.prev_x"}),
        stateful_reads=frozenset({"ECO.extinctions", "ECO.prev_x"}),
        writes=frozenset({"ECO.extinctions", "ECO.prev_x"}),
        step=aggregate_fn,
        metric_hooks={
            "PREY.PREY.mean_x": lambda v: float(np.mean(v.vector("PREY.x"))),
            "PRED.mean_y": lambda v: float(np.mean(v.vector("PRED.y"))),
            "ECO.total_x": lambda v: float(np.sum(v.vector("PREY.x"))),
            "ECO.extinctions": lambda v: float(v["ECO.extinctions"]),
            "ECO.cross_cv": cross_cv,
            "CLIMATE.signal": lambda v: float(v["CLIMATE.signal"]),
        },
    )

    model = LayeredModel(
        [climate, landscape, prey, predator, movement, aggregator],
        episode_aggregators={
            "mean_biomass": ("PREY.PREY.mean_x", "mean"),
            "cv": ("ECO.total_x", _series_cv),
            "pred_density": ("PRED.mean_y", "mean"),
            "extinctions": ("ECO.extinctions", "last"),
        },
    )
    x0 = tuple([cfg.K / 2.0] * cfg.n_patches)
    init = Context.from_dict({
        "PREY.x": x0,
        "PRED.y": tuple([0.2 * cfg.K] * cfg.n_patches),
        "CLIMATE.signal": 0.0,
        "ECO.extinctions": 0,
        "ECO.prev_x": x0,
    })
    return model, init


# ---------------------------------------------------------------------------
# Search and tournament bindings
# ---------------------------------------------------------------------------

def eco_schema() -> Schema:
    return Schema((Gene.float_range("risk", 0.0, 1.0), Gene.float_range("disp", 0.0, 1.0)))


def eco_objective(traits, config: EcoConfig, seed: int, steps: int = 140) -> tuple[float, float]:
    """Two-objective episode loss: negative mean biomass, and temporal
    variability plus a small extinction penalty. Both minimized."""
    from ..kernel import run_episode

    cfg = replace(config, risk=float(traits[0]), dispersal=float(traits[1]))
    model, init = build_eco_model(cfg)
    metrics = run_episode(model, init, seed, steps).episode_metrics
    return (-metrics["mean_biomass"],
            metrics["cv"] + config.extinction_penalty * metrics["extinctions"])


_AXIS_ALIASES = {"frag": "fragmentation"}


def apply_scenario(config: EcoConfig, params) -> EcoConfig:
    mapped = {_AXIS_ALIASES.get(k, k): v for k, v in params.items()}
    return replace(config, **mapped)


def eco_participant(name: str, traits, base: EcoConfig | None = None) -> Participant:
    base = base or EcoConfig()
    risk, disp = float(traits[0]), float(traits[1])

    def factory(params):
        cfg = replace(apply_scenario(base, params), risk=risk, dispersal=disp)
        return build_eco_model(cfg)

    return Participant(name, factory)


def default_grid() -> ScenarioGrid:
    return ScenarioGrid({"amp": [0.4, 0.8], "frag": [0.2, 0.5]})
