"""Comparative evaluation: scenario grids x participants with voted winners.

Every participant in a given (scenario, episode) cell runs under the same
derived seed, so comparisons are paired under common random numbers. Ties
are broken lexicographically by participant name at every level (after the
score-total tie-break where one is defined), which keeps tournament outputs
fully deterministic.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from .errors import EmptyAxis
from .kernel import Context, EpisodeTrace, LayeredModel, derive_seed, run_episode


@dataclass(frozen=True)
class Scenario:
    name: str
    params: Mapping[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class ScenarioGrid:
    """Ordered axes; expansion is their cartesian product, last axis fastest."""

    axes: Mapping[str, Sequence[object]]


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def expand_grid(grid: ScenarioGrid) -> list[Scenario]:
    names = list(grid.axes)
    for axis in names:
        if not list(grid.axes[axis]):
            raise EmptyAxis(f"axis {axis!r} has no values")
    combos: list[dict] = [{}]
    for axis in names:
        combos = [dict(c, **{axis: v}) for c in combos for v in grid.axes[axis]]
    return [Scenario("|".join(f"{a}={_fmt(c[a])}" for a in names), c) for c in combos]


# A participant factory prepares a runnable simulation for one scenario:
# it returns the model plus its initial context.
Factory = Callable[[Mapping[str, object]], tuple[LayeredModel, Context]]


@dataclass(frozen=True)
class Participant:
    name: str
    factory: Factory


@dataclass(frozen=True)
class ScoreSpec:
    metric_key: str
    per_step_reduce: str = "mean"  # mean | sum | last | min | max

    def __post_init__(self):
        if self.per_step_reduce not in ("mean", "sum", "last", "min", "max"):
            raise ValueError(f"unknown reducer {self.per_step_reduce!r}")

    def score(self, trace: EpisodeTrace) -> float:
        series = [row[self.metric_key] for row in trace.per_step]
        if self.per_step_reduce == "mean":
            return sum(series) / len(series)
        if self.per_step_reduce == "sum":
            return float(sum(series))
        if self.per_step_reduce == "last":
            return series[-1]
        if self.per_step_reduce == "min":
            return min(series)
        return max(series)


def episode_seed(base_seed: int, scenario_name: str, episode: int) -> int:
    return derive_seed(base_seed, f"{scenario_name}#{episode}")


def play_match(
    scenario: Scenario,
    participants: Sequence[Participant],
    score_spec: ScoreSpec,
    episodes: int,
    steps: int,
    base_seed: int,
) -> dict[tuple[str, int], float]:
    """Scores for every (participant, episode) cell of one scenario; all
    participants share the episode's seed."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    scores: dict[tuple[str, int], float] = {}
    for participant in participants:
        model, init = participant.factory(scenario.params)
        for e in range(episodes):
            seed = episode_seed(base_seed, scenario.name, e)
            try:
                trace = run_episode(model, init, seed, steps)
                scores[(participant.name, e)] = score_spec.score(trace)
            except Exception as err:
                raise RuntimeError(
                    f"match failed: scenario={scenario.name!r} "
                    f"participant={participant.name!r} episode={e}"
                ) from err
    return scores


# ---------------------------------------------------------------------------
# Voting rules
# ---------------------------------------------------------------------------

def vote_argmax(scores: Mapping[str, float]) -> str:
    """Winner of one episode: maximal score, ties to the smallest name."""
    if not scores:
        raise ValueError("argmax vote needs at least one participant")
    return min(scores, key=lambda name: (-scores[name], name))


def vote_majority(episode_winners: Sequence[str], totals: Mapping[str, float]) -> str:
    """Scenario winner: most episode wins, then higher total score, then name."""
    if not episode_winners:
        raise ValueError("majority vote needs at least one episode")
    wins: dict[str, int] = {}
    for name in episode_winners:
        wins[name] = wins.get(name, 0) + 1
    candidates = set(episode_winners) | set(totals)
    return min(candidates, key=lambda n: (-wins.get(n, 0), -totals.get(n, 0.0), n))


@dataclass(frozen=True)
class CondorcetResult:
    winner: str
    copeland_used: bool  # set when no Condorcet winner existed (cycle/tie)


def vote_condorcet(mean_scores: Mapping[tuple[str, str], float],
                   participants: Sequence[str],
                   scenarios: Sequence[str]) -> CondorcetResult:
    """Overall winner by pairwise majorities over scenarios.

    X beats Y when X's mean score exceeds Y's in a strict majority of
    scenarios. A participant beating all others wins outright; otherwise the
    Copeland score (wins - losses) decides, ties to the smallest name, and
    the fallback is flagged in the result.
    """
    if len(participants) < 2:
        raise ValueError("condorcet vote needs at least two participants")
    beats: dict[tuple[str, str], bool] = {}
    for x in participants:
        for y in participants:
            if x == y:
                continue
            ahead = sum(1 for s in scenarios if mean_scores[(s, x)] > mean_scores[(s, y)])
            beats[(x, y)] = ahead * 2 > len(scenarios)
    for x in participants:
        if all(beats[(x, y)] for y in participants if y != x):
            return CondorcetResult(x, False)
    def copeland(x: str) -> int:
        return sum(1 if beats[(x, y)] else -1 if beats[(y, x)] else 0
                   for y in participants if y != x)
    winner = min(participants, key=lambda x: (-copeland(x), x))
    return CondorcetResult(winner, True)


# ---------------------------------------------------------------------------
# Tournaments
# ---------------------------------------------------------------------------

@dataclass
class TournamentResult:
    scenarios: list[str]
    scenario_params: dict[str, dict]
    participants: list[str]
    episodes: int
    steps: int
    base_seed: int
    overall_rule: str
    scores: dict[str, dict[str, list[float]]]       # scenario -> participant -> per-episode
    seeds: dict[str, list[int]]                     # scenario -> per-episode seed
    episode_winners: dict[str, list[str]]           # scenario -> per-episode winner
    scenario_winners: dict[str, str]
    overall_winner: str
    condorcet_cycle: bool | None = None

    def mean_score(self, scenario: str, participant: str) -> float:
        vals = self.scores[scenario][participant]
        return sum(vals) / len(vals)

    def to_json(self) -> str:
        payload = {
            "scenarios": self.scenarios,
            "scenario_params": self.scenario_params,
            "participants": self.participants,
            "episodes": self.episodes,
            "steps": self.steps,
            "base_seed": self.base_seed,
            "overall_rule": self.overall_rule,
            "scores": self.scores,
            "seeds": self.seeds,
            "episode_winners": self.episode_winners,
            "scenario_winners": self.scenario_winners,
            "overall_winner": self.overall_winner,
            "condorcet_cycle": self.condorcet_cycle,
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "TournamentResult":
        d = json.loads(text)
        return cls(
            scenarios=d["scenarios"], scenario_params=d["scenario_params"],
            participants=d["participants"], episodes=d["episodes"], steps=d["steps"],
            base_seed=d["base_seed"], overall_rule=d["overall_rule"], scores=d["scores"],
            seeds=d["seeds"], episode_winners=d["episode_winners"],
            scenario_winners=d["scenario_winners"], overall_winner=d["overall_winner"],
            condorcet_cycle=d["condorcet_cycle"],
        )

    def scores_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["scenario", "participant", "episode", "score"])
        for scenario in self.scenarios:
            for participant in self.participants:
                for e, score in enumerate(self.scores[scenario][participant]):
                    writer.writerow([scenario, participant, e, repr(score)])
        return buf.getvalue()


def run_tournament(
    grid: ScenarioGrid | Sequence[Scenario],
    participants: Sequence[Participant],
    score_spec: ScoreSpec,
    episodes: int,
    steps: int,
    seed: int,
    overall_rule: str = "majority",
    jobs: int = 1,
) -> TournamentResult:
    """Expand the grid, play every match, and vote winners per episode
    (argmax), per scenario (majority), and overall (majority or condorcet)."""
    if overall_rule not in ("majority", "condorcet"):
        raise ValueError(f"unknown overall rule {overall_rule!r}")
    scenarios = expand_grid(grid) if isinstance(grid, ScenarioGrid) else list(grid)
    if not scenarios:
        raise ValueError("tournament needs at least one scenario")
    if not participants:
        raise ValueError("tournament needs at least one participant")
    names = [p.name for p in participants]
    if len(set(names)) != len(names):
        raise ValueError("participant names must be unique")

    def one_scenario(scenario: Scenario):
        return play_match(scenario, participants, score_spec, episodes, steps, seed)

    if jobs > 1 and len(scenarios) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            per_scenario = list(pool.map(one_scenario, scenarios))
    else:
        per_scenario = [one_scenario(s) for s in scenarios]

    scores: dict[str, dict[str, list[float]]] = {}
    seeds: dict[str, list[int]] = {}
    episode_winners: dict[str, list[str]] = {}
    scenario_winners: dict[str, str] = {}
    for scenario, cell in zip(scenarios, per_scenario):
        scores[scenario.name] = {
            p.name: [cell[(p.name, e)] for e in range(episodes)] for p in participants
        }
        seeds[scenario.name] = [episode_seed(seed, scenario.name, e) for e in range(episodes)]
        winners = [
            vote_argmax({p.name: cell[(p.name, e)] for p in participants})
            for e in range(episodes)
        ]
        episode_winners[scenario.name] = winners
        totals = {p.name: sum(cell[(p.name, e)] for e in range(episodes)) for p in participants}
        scenario_winners[scenario.name] = vote_majority(winners, totals)

    cycle: bool | None = None
    if overall_rule == "condorcet" and len(names) >= 2:
        means = {
            (s.name, n): sum(scores[s.name][n]) / episodes for s in scenarios for n in names
        }
        outcome = vote_condorcet(means, names, [s.name for s in scenarios])
        overall, cycle = outcome.winner, outcome.copeland_used
    else:
        grand = {
            n: sum(sum(scores[s.name][n]) for s in scenarios) for n in names
        }
        overall = vote_majority([scenario_winners[s.name] for s in scenarios], grand)

    return TournamentResult(
        scenarios=[s.name for s in scenarios],
        scenario_params={s.name: dict(s.params) for s in scenarios},
        participants=names,
        episodes=episodes,
        steps=steps,
        base_seed=int(seed),
        overall_rule=overall_rule,
        scores=scores,
        seeds=seeds,
        episode_winners=episode_winners,
        scenario_winners=scenario_winners,
        overall_winner=overall,
        condorcet_cycle=cycle,
    )
