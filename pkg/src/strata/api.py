"""One-stop orchestration: simulate a model, optimize over a schema, and
evaluate participants across scenarios. Thin wrappers over the kernel,
evolution, and game modules for script use; the CLI mirrors them."""

from __future__ import annotations

from typing import Sequence

from .evolution import EvolutionConfig, run_mu_plus_lambda_es, run_nsga2, run_simple_ga
from .game import Participant, ScenarioGrid, ScoreSpec, run_tournament
from .kernel import Context, EpisodeTrace, LayeredModel, run_episode
from .schemas import Schema


def simulate(model: LayeredModel, init: Context | dict, seed: int, steps: int) -> EpisodeTrace:
    return run_episode(model, init, seed, steps)


def optimize(config: EvolutionConfig, space: Schema, objective, weights=None,
             algo: str = "nsga2", **kwargs):
    """Run the chosen optimizer; returns ``(hall_of_fame, logbook)``.

    ``weights`` is required for nsga2; for ``ga``/``es`` the scalar objective
    is maximized unless ``maximize=False`` is passed through.
    """
    if algo == "nsga2":
        if weights is None:
            raise ValueError("nsga2 requires objective weights")
        return run_nsga2(config, space, objective, weights, **kwargs)
    if algo == "ga":
        return run_simple_ga(config, space, objective, **kwargs)
    if algo == "es":
        return run_mu_plus_lambda_es(config, space, objective, **kwargs)
    raise ValueError(f"unknown algorithm {algo!r}")


def evaluate(grid: ScenarioGrid, participants: Sequence[Participant], score: ScoreSpec,
             episodes: int, steps: int, seed: int, **kwargs):
    return run_tournament(grid, participants, score, episodes, steps, seed, **kwargs)
