"""Two-firm enterprise model: policy/industry/market drivers, MLP-controlled
firms, alliance mediation with side payments, payoff accounting, welfare.

Firms read six namespaced signals (price, demand, tax, antitrust, subsidy,
time index) and emit continuous actions: investment intensity and
cooperation propensity, both in (0, 1). The alliance and payoff streams
derive the same actions from the same layer-entry signals through the shared
helpers below, so all layer-2 streams stay coherent under the snapshot rule.
Payoff constants are stylized; the tech sector runs a higher revenue scale
than energy. Everything is overridable through :class:`EnterpriseConfig`.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np

from ..game import Participant, ScenarioGrid, ScoreSpec
from ..kernel import Context, LayeredModel, StreamSpec, rng_substream
from ..policy import MlpSpec, forward, param_count, policy_stream

ENT_WEIGHTS = (1.0, 1.0)  # maximize mean profit and -variance
SCORE = ScoreSpec("PAY.profit_A", "mean")
FIRM_MLP = MlpSpec((6, 8, 2))

SIGNAL_KEYS = [
    "MKT.price_signal",
    "MKT.demand_norm",
    "GOV.tax",
    "MKT.atr",
    "GOV.subsidy_norm",
    "MKT.t_norm",
]

SUBSIDY_NORM_SCALE = 10.0


@dataclass(frozen=True)
class SectorParams:
    scale: float
    cost_base: float
    fine_base: float
    atr_base: float


SECTORS = {
    "energy": SectorParams(scale=1.0, cost_base=40.0, fine_base=30.0, atr_base=25.0),
    "tech": SectorParams(scale=1.6, cost_base=30.0, fine_base=30.0, atr_base=25.0),
}


@dataclass(frozen=True)
class EnterpriseConfig:
    regime: str = "cooperative"          # cooperative | directive
    tax: float = 0.2
    audit_intensity: float = 0.3
    regulation: str = "lenient"          # lenient | strict
    std_compat: float = 0.5
    base_demand: float = 100.0
    shock_amp: float = 5.0
    demand_persistence: float = 0.8
    atr: float = 0.2
    subsidy: float = 2.0
    bargain_rule: str = "equal_split"    # equal_split | proportional
    side_payment: float = 1.0
    welfare_profit: float = 1.0
    welfare_consumer: float = 0.5
    risk_penalty: float = 0.1
    sector: str = "energy"               # energy | tech

    def __post_init__(self):
        if self.regime not in ("cooperative", "directive"):
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.regulation not in ("lenient", "strict"):
            raise ValueError(f"unknown regulation {self.regulation!r}")
        if self.sector not in SECTORS:
            raise ValueError(f"unknown sector {self.sector!r}")
        if self.bargain_rule not in ("equal_split", "proportional"):
            raise ValueError(f"unknown bargain rule {self.bargain_rule!r}")
        if self.base_demand <= 0:
            raise ValueError("base_demand must be positive")
        for name in ("tax", "audit_intensity", "std_compat", "atr"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        for name in ("shock_amp", "subsidy", "side_payment", "welfare_profit",
                     "welfare_consumer", "risk_penalty"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


def config_from_dict(data: dict) -> EnterpriseConfig:
    known = {f.name for f in fields(EnterpriseConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown enterprise config fields: {sorted(unknown)}")
    return EnterpriseConfig(**data)


# ---------------------------------------------------------------------------
# Driver and accounting steps (pure)
# ---------------------------------------------------------------------------

def government_step(regime: str, tax: float, audit_intensity: float,
                    subsidy: float) -> tuple[float, float]:
    """Regime reweights the two instruments: cooperative favors subsidies,
    directive favors penalties (factor-of-2 each way)."""
    if regime == "cooperative":
        return subsidy, 0.5 * audit_intensity
    return 0.5 * subsidy, audit_intensity


def industry_step(regulation: str) -> tuple[float, float]:
    """(compliance threshold, audit probability) per oversight regime."""
    return (0.3, 0.1) if regulation == "lenient" else (0.7, 0.4)


def market_step(prev_demand: float, base_demand: float, shock_amp: float,
                persistence: float, rng) -> tuple[float, float]:
    """AR(1) demand around the baseline with uniform shocks, floored at zero."""
    demand = base_demand + persistence * (prev_demand - base_demand) + shock_amp * rng.uniform(-1.0, 1.0)
    demand = max(0.0, demand)
    return demand, demand / base_demand


def alliance_step(coop_a: float, coop_b: float, bargain_rule: str, side_payment: float,
                  prev_stability: int) -> tuple[bool, float, int]:
    """Alliance forms when the cooperation product clears 0.25 (geometric-mean
    propensity 0.5). Transfers are signed A->B and zero outside an alliance."""
    allied = coop_a * coop_b >= 0.25
    if not allied:
        return False, 0.0, 0
    if bargain_rule == "equal_split":
        transfers = side_payment * (coop_a - coop_b) / 2.0
    else:
        transfers = side_payment * (coop_a - coop_b)
    return True, transfers, prev_stability + 1


def payoff_step(action_a, action_b, demand: float, price_signal: float,
                allied: bool, transfers: float, subsidy_t: float, penalty_rate: float,
                compliance_thr: float, audit_prob: float, std_compat: float,
                cfg: EnterpriseConfig) -> tuple[float, float, float]:
    """Profits and welfare for one tick.

    Revenue scales with the demand signal and investment; costs are quadratic
    in investment; alliances add compatibility spillovers but attract the
    antitrust charge; non-compliant investment risks fines.
    """
    sector = SECTORS[cfg.sector]

    def firm(inv_i: float, inv_j: float, transfer_out: float) -> float:
        revenue = price_signal * demand * sector.scale * (0.5 + inv_i)
        cost = sector.cost_base * inv_i ** 2
        spillover = std_compat * 0.2 * inv_j if allied else 0.0
        fine = 0.0 if inv_i >= compliance_thr else penalty_rate * audit_prob * sector.fine_base
        antitrust = cfg.atr * sector.atr_base if allied else 0.0
        return revenue - cost - cfg.tax * revenue + subsidy_t + spillover - fine - antitrust - transfer_out

    profit_a = firm(action_a[0], action_b[0], transfers)
    profit_b = firm(action_b[0], action_a[0], -transfers)
    welfare = (cfg.welfare_profit * (profit_a + profit_b)
               + cfg.welfare_consumer * demand
               - cfg.risk_penalty * abs(profit_a - profit_b))
    return profit_a, profit_b, welfare


def firm_policy_step(params, signals) -> tuple[float, float]:
    """Continuous actions (investment intensity, cooperation propensity) from
    the six-signal input vector; sigmoid output keeps both in (0, 1)."""
    out = forward(FIRM_MLP, params, np.asarray(signals, dtype=float))
    return float(out[0]), float(out[1])


def reference_weights(seed: int = 11, spec: MlpSpec = FIRM_MLP) -> np.ndarray:
    """Seeded reference policy used as the fixed opponent."""
    rng = rng_substream(seed, "enterprise:reference-policy")
    return rng.normal(0.0, 0.5, param_count(spec))


# ---------------------------------------------------------------------------
# Model assembly
# ---------------------------------------------------------------------------

def _signals(view) -> np.ndarray:
    return np.array([float(view[k]) for k in SIGNAL_KEYS])


def build_enterprise_model(config: EnterpriseConfig, weights_a, weights_b,
                           steps: int = 100) -> tuple[LayeredModel, Context]:
    """Eight streams over three layers. ``steps`` fixes the scale of the
    policies' time-index input and should match the episode length."""
    cfg = config
    wa = np.asarray(weights_a, dtype=float)
    wb = np.asarray(weights_b, dtype=float)
    subsidy_t, penalty_rate = government_step(cfg.regime, cfg.tax, cfg.audit_intensity, cfg.subsidy)
    compliance_thr, audit_prob = industry_step(cfg.regulation)

    government = StreamSpec(
        id="government", layer=1,
        writes=frozenset({"GOV.subsidy", "GOV.penalty_rate", "GOV.tax", "GOV.subsidy_norm"}),
        step=lambda view, rng: {
            "GOV.subsidy": subsidy_t,
            "GOV.penalty_rate": penalty_rate,
            "GOV.tax": cfg.tax,
            "GOV.subsidy_norm": subsidy_t / SUBSIDY_NORM_SCALE,
        },
    )

    industry = StreamSpec(
        id="industry", layer=1,
        writes=frozenset({"IND.compliance_thr", "IND.audit_prob", "IND.std_compat"}),
        step=lambda view, rng: {
            "IND.compliance_thr": compliance_thr,
            "IND.audit_prob": audit_prob,
            "IND.std_compat": cfg.std_compat,
        },
    )

    def market_fn(view, rng):
        demand, price = market_step(float(view["MKT.demand"]), cfg.base_demand,
                                    cfg.shock_amp, cfg.demand_persistence, rng)
        return {
            "MKT.demand": demand,
            "MKT.price_signal": price,
            "MKT.demand_norm": demand / cfg.base_demand,
            "MKT.atr": cfg.atr,
            "MKT.t_norm": view.tick / steps,
        }

    market = StreamSpec(
        id="market", layer=1,
        reads=frozenset({"MKT.demand"}), stateful_reads=frozenset({"MKT.demand"}),
        writes=frozenset({"MKT.demand", "MKT.price_signal", "MKT.demand_norm",
                          "MKT.atr", "MKT.t_norm"}),
        step=market_fn,
    )

    firm_a = policy_stream("firm_a", 2, FIRM_MLP, wa, SIGNAL_KEYS,
                           ["FIRM_A.invest", "FIRM_A.coop"])
    firm_b = policy_stream("firm_b", 2, FIRM_MLP, wb, SIGNAL_KEYS,
                           ["FIRM_B.invest", "FIRM_B.coop"])

    def actions(view) -> tuple[np.ndarray, np.ndarray]:
        x = _signals(view)
        return forward(FIRM_MLP, wa, x), forward(FIRM_MLP, wb, x)

    alliance_keys = frozenset({"ALLIANCE.allied", "ALLIANCE.stability"})

    def alliance_fn(view, rng):
        act_a, act_b = actions(view)
        allied, transfers, stability = alliance_step(
            act_a[1], act_b[1], cfg.bargain_rule, cfg.side_payment,
            int(view["ALLIANCE.stability"]))
        return {"ALLIANCE.allied": allied, "ALLIANCE.transfers": transfers,
                "ALLIANCE.stability": stability}

    alliance = StreamSpec(
        id="alliance", layer=2,
        reads=frozenset(SIGNAL_KEYS) | alliance_keys,
        stateful_reads=alliance_keys,
        writes=frozenset({"ALLIANCE.allied", "ALLIANCE.transfers", "ALLIANCE.stability"}),
        step=alliance_fn,
    )

    def payoff_fn(view, rng):
        act_a, act_b = actions(view)
        allied, transfers, _ = alliance_step(
            act_a[1], act_b[1], cfg.bargain_rule, cfg.side_payment,
            int(view["ALLIANCE.stability"]))
        profit_a, profit_b, welfare = payoff_step(
            act_a, act_b, float(view["MKT.demand"]), float(view["MKT.price_signal"]),
            allied, transfers, float(view["GOV.subsidy"]), float(view["GOV.penalty_rate"]),
            float(view["IND.compliance_thr"]), float(view["IND.audit_prob"]),
            float(view["IND.std_compat"]), cfg)
        return {"PAY.profit_A": profit_a, "PAY.profit_B": profit_b, "PAY.welfare": welfare}

    payoff = StreamSpec(
        id="payoff", layer=2,
        reads=frozenset(SIGNAL_KEYS) | alliance_keys | frozenset({
            "MKT.demand", "GOV.subsidy", "GOV.penalty_rate",
            "IND.compliance_thr", "IND.audit_prob", "IND.std_compat"}),
        stateful_reads=alliance_keys,
        writes=frozenset({"PAY.profit_A", "PAY.profit_B", "PAY.welfare"}),
        step=payoff_fn,
    )

    capital_keys = frozenset({"ENT.capital_A", "ENT.capital_B"})
    agg_reads = frozenset({"PAY.profit_A", "PAY.profit_B", "PAY.welfare",
                           "ALLIANCE.allied", "FIRM_A.invest", "FIRM_A.coop",
                           "FIRM_B.invest", "FIRM_B.coop", "IND.compliance_thr"}) | capital_keys

    def compliance(view) -> float:
        thr = float(view["IND.compliance_thr"])
        return (float(float(view["FIRM_A.invest"]) >= thr)
                + float(float(view["FIRM_B.invest"]) >= thr)) / 2.0

    def aggregate_fn(view, rng):
        # accumulated capital never goes below zero (limited liability)
        return {
            "ENT.capital_A": max(0.0, float(view["ENT.capital_A"]) + float(view["PAY.profit_A"])),
            "ENT.capital_B": max(0.0, float(view["ENT.capital_B"]) + float(view["PAY.profit_B"])),
        }

    aggregator = StreamSpec(
        id="aggregator", layer=3,
        reads=agg_reads,
        stateful_reads=capital_keys,
        writes=capital_keys,
        step=aggregate_fn,
        metric_hooks={
            "PAY.profit_A": lambda v: float(v["PAY.profit_A"]),
            "PAY.profit_B": lambda v: float(v["PAY.profit_B"]),
            "PAY.welfare": lambda v: float(v["PAY.welfare"]),
            "ALLIANCE.allied": lambda v: float(v["ALLIANCE.allied"]),
            "ENT.compliance": compliance,
            "FIRM_A.invest": lambda v: float(v["FIRM_A.invest"]),
            "FIRM_A.coop": lambda v: float(v["FIRM_A.coop"]),
            "FIRM_B.invest": lambda v: float(v["FIRM_B.invest"]),
            "FIRM_B.coop": lambda v: float(v["FIRM_B.coop"]),
            # discrete views of the continuous actions, metrics only
            "ENT.invest_flag_A": lambda v: float(float(v["FIRM_A.invest"]) >= 0.5),
            "ENT.collab_flag_A": lambda v: float(float(v["FIRM_A.coop"]) >= 0.5),
            "ENT.invest_flag_B": lambda v: float(float(v["FIRM_B.invest"]) >= 0.5),
            "ENT.collab_flag_B": lambda v: float(float(v["FIRM_B.coop"]) >= 0.5),
            "ENT.capital_A": lambda v: float(v["ENT.capital_A"]),
            "ENT.capital_B": lambda v: float(v["ENT.capital_B"]),
        },
    )

    def variance(series) -> float:
        return float(np.var(series))

    model = LayeredModel(
        [government, industry, market, firm_a, firm_b, alliance, payoff, aggregator],
        episode_aggregators={
            "mean_profit_A": ("PAY.profit_A", "mean"),
            "mean_profit_B": ("PAY.profit_B", "mean"),
            "var_profit_A": ("PAY.profit_A", variance),
            "var_profit_B": ("PAY.profit_B", variance),
            "compliance": ("ENT.compliance", "mean"),
            "stability": ("ALLIANCE.allied", "mean"),
            "mean_welfare": ("PAY.welfare", "mean"),
        },
    )
    init = Context.from_dict({
        "MKT.demand": cfg.base_demand,
        "ALLIANCE.allied": False,
        "ALLIANCE.transfers": 0.0,
        "ALLIANCE.stability": 0,
        "ENT.capital_A": 0.0,
        "ENT.capital_B": 0.0,
    })
    return model, init


# ---------------------------------------------------------------------------
# Search and tournament bindings
# ---------------------------------------------------------------------------

def enterprise_objective(flat_weights, config: EnterpriseConfig, seed: int,
                         steps: int = 100) -> tuple[float, float]:
    """Fitness of firm A's weights against the seeded reference: episode mean
    profit and negated profit variance, both maximized."""
    from ..kernel import run_episode

    model, init = build_enterprise_model(config, flat_weights, reference_weights(), steps)
    metrics = run_episode(model, init, seed, steps).episode_metrics
    return metrics["mean_profit_A"], -metrics["var_profit_A"]


def apply_scenario(config: EnterpriseConfig, params) -> EnterpriseConfig:
    return replace(config, **dict(params))


def enterprise_participant(name: str, weights, base: EnterpriseConfig | None = None,
                           steps: int = 100) -> Participant:
    """Participant controls firm A; firm B always runs the seeded reference."""
    base = base or EnterpriseConfig()
    w = np.asarray(weights, dtype=float)

    def factory(params):
        cfg = apply_scenario(base, params)
        return build_enterprise_model(cfg, w, reference_weights(), steps)

    return Participant(name, factory)


def default_grid() -> ScenarioGrid:
    return ScenarioGrid({
        "regime": ["cooperative", "directive"],
        "sector": ["energy", "tech"],
        "tax": [0.1, 0.3],
        "atr": [0.1, 0.5],
        "subsidy": [0.0, 4.0],
    })


# ---------------------------------------------------------------------------
# Panel report (group means over the scenario grid)
# ---------------------------------------------------------------------------

def panel_report(result, ref: str, champ: str) -> list[dict]:
    """Rows of group/ref_mean/champ_mean/delta: overall, by regime, by sector."""
    groups = [("Overall", lambda p: True)]
    groups += [(f"regime={v}", lambda p, v=v: p.get("regime") == v)
               for v in ("cooperative", "directive")]
    groups += [(f"sector={v}", lambda p, v=v: p.get("sector") == v)
               for v in ("energy", "tech")]
    rows = []
    for label, selector in groups:
        names = [s for s in result.scenarios if selector(result.scenario_params[s])]
        if not names:
            continue
        ref_mean = float(np.mean([result.mean_score(s, ref) for s in names]))
        champ_mean = float(np.mean([result.mean_score(s, champ) for s in names]))
        rows.append({"group": label, "ref_mean": ref_mean, "champ_mean": champ_mean,
                     "delta": champ_mean - ref_mean})
    return rows


def report_csv(rows: list[dict]) -> str:
    lines = ["group,ref_mean,champ_mean,delta"]
    lines += [f"{r['group']},{r['ref_mean']!r},{r['champ_mean']!r},{r['delta']!r}" for r in rows]
    return "\n".join(lines) + "\n"
