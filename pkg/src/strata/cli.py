"""Command-line orchestration: run, run-graph, tune, arena, tournament, viz.

Every command resolves its output directory (--out, then the HEAS_OUT
environment variable, then ./out), writes its data artifacts plus the
standard figures, and finishes with an atomically-written run manifest.
Exit codes are stable for scripting: 0 success, 2 configuration or usage
error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, EvaluationError, StrataError
from .evolution import EvolutionConfig, logbook_to_jsonl, run_mu_plus_lambda_es, run_nsga2, run_simple_ga
from .game import ScenarioGrid, Scenario, ScoreSpec, TournamentResult, run_tournament
from .kernel import LayeredModel, run_episode, trace_summary_json, trace_to_csv
from .schemas import decode_array, schema_to_json
from .examples import eco, enterprise
from .policy import load_policy, param_count, weight_schema

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


# ---------------------------------------------------------------------------
# Example registry: binds config files to models, objectives, participants
# ---------------------------------------------------------------------------

class EcoBinding:
    name = "eco"
    default_steps = 140
    weights = eco.ECO_WEIGHTS

    def __init__(self, config: dict):
        self.params = config.get("params", {})
        self.base = eco.config_from_dict(self.params)
        self.config = config

    def build_run(self, steps: int):
        traits = self.config.get("traits", eco.BASELINE_TRAITS)
        cfg = self.base.__class__(**{**self.params,
                                     "risk": float(traits[0]), "dispersal": float(traits[1])})
        return eco.build_eco_model(cfg)

    def schema(self):
        return eco.eco_schema()

    def objective(self, steps: int):
        base = self.base

        def f(theta, seed):
            return eco.eco_objective(theta, base, seed, steps)

        return f

    def default_score(self):
        return eco.SCORE

    def default_grid(self):
        return eco.default_grid()

    def participant(self, entry: dict, steps: int):
        name = entry["name"]
        if "traits" in entry:
            return eco.eco_participant(name, entry["traits"], self.base)
        if "hof" in entry:
            traits = _hof_genotype(entry)
            return eco.eco_participant(name, traits, self.base)
        raise ConfigError(f"participant {name!r}: expected 'traits' or 'hof'")


class EnterpriseBinding:
    name = "enterprise"
    default_steps = 100
    weights = enterprise.ENT_WEIGHTS

    def __init__(self, config: dict):
        self.params = config.get("params", {})
        self.base = enterprise.config_from_dict(self.params)
        self.config = config

    def _weights_from(self, entry: dict, steps: int):
        if "weights" in entry:
            w = np.asarray(entry["weights"], dtype=float)
        elif "policy" in entry:
            spec, w = load_policy(entry["policy"])
            if spec != enterprise.FIRM_MLP:
                raise ConfigError("policy file layer sizes do not match the firm controller")
        elif "policy_seed" in entry:
            w = enterprise.reference_weights(int(entry["policy_seed"]))
        elif "hof" in entry:
            u = np.asarray(_hof_genotype(entry), dtype=float)
            w = decode_array(weight_schema(param_count(enterprise.FIRM_MLP)), u)
        else:
            raise ConfigError("expected 'weights', 'policy', 'policy_seed', or 'hof'")
        if w.shape != (param_count(enterprise.FIRM_MLP),):
            raise ConfigError(f"firm policy needs {param_count(enterprise.FIRM_MLP)} weights")
        return w

    def build_run(self, steps: int):
        entry = {k: self.config[k] for k in ("weights", "policy", "policy_seed", "hof", "hof_index")
                 if k in self.config}
        wa = self._weights_from(entry, steps) if entry else np.zeros(param_count(enterprise.FIRM_MLP))
        return enterprise.build_enterprise_model(self.base, wa, enterprise.reference_weights(), steps)

    def schema(self):
        return weight_schema(param_count(enterprise.FIRM_MLP))

    def objective(self, steps: int):
        base = self.base
        schema = self.schema()

        def f(theta, seed):
            return enterprise.enterprise_objective(decode_array(schema, theta), base, seed, steps)

        return f

    def default_score(self):
        return enterprise.SCORE

    def default_grid(self):
        return enterprise.default_grid()

    def participant(self, entry: dict, steps: int):
        return enterprise.enterprise_participant(
            entry["name"], self._weights_from(entry, steps), self.base, steps)


BINDINGS = {"eco": EcoBinding, "enterprise": EnterpriseBinding}


def _hof_genotype(entry: dict):
    with open(entry["hof"], encoding="utf-8") as fh:
        items = json.load(fh)
    if not items:
        raise ConfigError(f"hall-of-fame file {entry['hof']!r} is empty")
    return items[int(entry.get("hof_index", entry.get("index", 0)))]["genotype"]


# ---------------------------------------------------------------------------
# Config and manifest plumbing
# ---------------------------------------------------------------------------

def load_config(path: str) -> tuple[dict, str]:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        config = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise ConfigError(f"config is not valid JSON: {err}") from err
    if not isinstance(config, dict):
        raise ConfigError("config must be a JSON object")
    digest = hashlib.sha256(
        json.dumps(config, sort_keys=True, separators=(",", ":")).encode("utf-8")
    ).hexdigest()
    return config, digest


def binding_for(config: dict):
    name = config.get("example")
    if name not in BINDINGS:
        raise ConfigError(f"config must name a registered example, one of {sorted(BINDINGS)}")
    try:
        return BINDINGS[name](config)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"bad example params: {err}") from err


def out_dir(args) -> Path:
    path = Path(args.out or os.environ.get("HEAS_OUT") or "out")
    path.mkdir(parents=True, exist_ok=True)
    return path


class ManifestWriter:
    def __init__(self, command: str, digest: str, seed: int, extra: dict | None = None):
        self.data = {
            "tool_version": __version__,
            "command": command,
            "config_digest": digest,
            "seed": int(seed),
            "started": datetime.now(timezone.utc).isoformat(),
            **(extra or {}),
        }
        self.outputs: list[str] = []

    def add(self, path: Path, content: str) -> None:
        path.write_text(content, encoding="utf-8")
        self.outputs.append(path.name)

    def note(self, path: Path) -> None:
        self.outputs.append(path.name)

    def finish(self, directory: Path) -> None:
        self.data["finished"] = datetime.now(timezone.utc).isoformat()
        self.data["outputs"] = sorted(self.outputs)
        target = directory / "manifest.json"
        tmp = directory / "manifest.json.tmp"
        tmp.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        os.replace(tmp, target)


def _say(args, message: str) -> None:
    if not getattr(args, "quiet", False):
        print(message)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_run(args) -> int:
    config, digest = load_config(args.config)
    binding = binding_for(config)
    steps = args.steps or config.get("steps", binding.default_steps)
    seed = args.seed if args.seed is not None else config.get("seed", 0)
    model, init = binding.build_run(steps)

    directory = out_dir(args)
    manifest = ManifestWriter("run", digest, seed)
    trace = run_episode(model, init, seed, steps)
    manifest.add(directory / "trace.csv", trace_to_csv(trace))
    manifest.add(directory / "episode.json", trace_summary_json(trace))

    from . import viz
    series = {key: [row[key] for row in trace.per_step] for key in trace.per_step[0]}
    viz.plot_trace(series, directory / "trace.svg")
    manifest.note(directory / "trace.svg")
    manifest.finish(directory)
    _say(args, f"ran {steps} ticks; wrote {directory}/trace.csv")
    return EXIT_OK


def model_graph(model: LayeredModel) -> dict:
    """Machine-readable layered DAG: streams per layer plus read/write edges."""
    layers = [
        {"index": idx, "streams": [
            {"id": s.id, "reads": sorted(s.reads), "writes": sorted(s.writes),
             "stateful_reads": sorted(s.stateful_reads), "metrics": sorted(s.metric_hooks)}
            for s in layer]}
        for idx, layer in zip(model.layer_indices, model.layers)
    ]
    writers: dict[str, list] = {}
    for s in model.streams:
        for key in s.writes:
            writers.setdefault(key, []).append(s)
    edges = []
    for reader in model.streams:
        for key in sorted(reader.reads):
            for writer in writers.get(key, []):
                if writer.id == reader.id:
                    continue
                edges.append({"key": key, "from": writer.id, "to": reader.id,
                              "stateful": key in reader.stateful_reads})
    edges.sort(key=lambda e: (e["from"], e["to"], e["key"]))
    return {"write_policy": model.write_policy, "layers": layers, "edges": edges}


def cmd_run_graph(args) -> int:
    config, digest = load_config(args.config)
    binding = binding_for(config)
    model, init = binding.build_run(config.get("steps", binding.default_steps))
    from .kernel import validate_model

    diags = validate_model(model, init.entries.keys())
    if diags:
        for d in diags:
            print(f"[{d.kind}] stream={d.stream_id} key={d.key}: {d.message}", file=sys.stderr)
        return EXIT_RUNTIME

    directory = out_dir(args)
    manifest = ManifestWriter("run-graph", digest, config.get("seed", 0))
    graph = model_graph(model)
    manifest.add(directory / "graph.json", json.dumps(graph, indent=2, sort_keys=True) + "\n")

    from . import viz
    viz.plot_model_graph(graph, directory / "graph.svg", title=f"{binding.name} model")
    manifest.note(directory / "graph.svg")
    manifest.finish(directory)
    _say(args, f"{len(model.streams)} streams in {len(model.layers)} layers; wrote {directory}/graph.json")
    return EXIT_OK


def cmd_tune(args) -> int:
    config, digest = load_config(args.config)
    binding = binding_for(config)
    steps = args.steps or config.get("steps", binding.default_steps)
    seed = args.seed if args.seed is not None else config.get("seed", 0)
    schema = binding.schema()
    objective = binding.objective(steps)
    evo = EvolutionConfig(
        pop_size=args.pop or config.get("pop", 24),
        generations=args.ngen or config.get("ngen", 8),
        seed=seed,
    )
    directory = out_dir(args)
    manifest = ManifestWriter("tune", digest, seed, extra={
        "config": {"algo": args.algo, "pop_size": evo.pop_size, "generations": evo.generations,
                   "cx_prob": evo.cx_prob, "mut_prob": evo.mut_prob,
                   "sbx_eta": evo.sbx_eta, "pm_eta": evo.pm_eta, "steps": steps},
        "schema": schema_to_json(schema),
    })

    def scalarized(theta, seed_):
        fit = objective(theta, seed_)
        return (float(sum(w * v for w, v in zip(binding.weights, fit))),)

    try:
        if args.algo == "nsga2":
            hof, logbook = run_nsga2(evo, schema, objective, binding.weights, jobs=args.jobs)
        elif args.algo == "ga":
            hof, logbook = run_simple_ga(evo, schema, scalarized, maximize=True, jobs=args.jobs)
        else:
            hof, logbook = run_mu_plus_lambda_es(evo, schema, scalarized, sigma0=args.sigma0,
                                                 maximize=True, jobs=args.jobs)
    except EvaluationError as err:
        if err.partial_logbook is not None:
            manifest.add(directory / "logbook.jsonl", logbook_to_jsonl(err.partial_logbook))
        if err.partial_hof is not None:
            manifest.add(directory / "hof.json", err.partial_hof.to_json())
        manifest.data["error"] = str(err)
        manifest.finish(directory)
        print(f"evaluation failed, partial logbook persisted: {err}", file=sys.stderr)
        return EXIT_RUNTIME

    manifest.add(directory / "logbook.jsonl", logbook_to_jsonl(logbook))
    manifest.add(directory / "hof.json", hof.to_json())

    from . import viz
    rows = [json.loads(line) for line in logbook_to_jsonl(logbook).strip().split("\n")]
    viz.plot_logbook(rows, directory / "logbook.svg")
    manifest.note(directory / "logbook.svg")
    if len(binding.weights) >= 2 and args.algo == "nsga2":
        viz.plot_pareto(json.loads(hof.to_json()), directory / "pareto.svg")
        manifest.note(directory / "pareto.svg")
    manifest.finish(directory)
    _say(args, f"{args.algo} finished: {len(hof.items)} archived, {len(logbook)} logbook rows")
    return EXIT_OK


def _tournament_pieces(config, binding, args):
    steps = args.steps or config.get("steps", binding.default_steps)
    episodes = args.episodes or config.get("episodes", 4)
    seed = args.seed if args.seed is not None else config.get("seed", 0)
    entries = config.get("participants")
    if not entries:
        raise ConfigError("config must list participants")
    participants = [binding.participant(e, steps) for e in entries]
    score_cfg = config.get("score")
    score = (ScoreSpec(score_cfg["metric"], score_cfg.get("reduce", "mean"))
             if score_cfg else binding.default_score())
    rule = config.get("overall_rule", "majority")
    return steps, episodes, seed, participants, score, rule


def _write_tournament(result: TournamentResult, binding, directory: Path,
                      manifest: ManifestWriter) -> None:
    manifest.add(directory / "tournament.json", result.to_json())
    manifest.add(directory / "scores.csv", result.scores_csv())
    if binding.name == "enterprise" and len(result.participants) >= 2:
        ref, champ = result.participants[0], result.participants[1]
        rows = enterprise.panel_report(result, ref, champ)
        manifest.add(directory / "report.csv", enterprise.report_csv(rows))

    from . import viz
    means = {s: {p: result.mean_score(s, p) for p in result.participants}
             for s in result.scenarios}
    viz.plot_tournament(result.scenarios, result.participants, means, directory / "heatmap.svg")
    manifest.note(directory / "heatmap.svg")


def cmd_arena(args) -> int:
    config, digest = load_config(args.config)
    binding = binding_for(config)
    steps, episodes, seed, participants, score, rule = _tournament_pieces(config, binding, args)
    scenario = Scenario(config.get("scenario_name", "arena"), config.get("scenario", {}))

    directory = out_dir(args)
    manifest = ManifestWriter("arena", digest, seed)
    result = run_tournament([scenario], participants, score, episodes, steps, seed,
                            overall_rule=rule, jobs=args.jobs)
    _write_tournament(result, binding, directory, manifest)
    manifest.finish(directory)
    _say(args, f"arena winner: {result.overall_winner}")
    return EXIT_OK


def cmd_tournament(args) -> int:
    config, digest = load_config(args.config)
    binding = binding_for(config)
    steps, episodes, seed, participants, score, rule = _tournament_pieces(config, binding, args)
    grid = ScenarioGrid(config["grid"]) if "grid" in config else binding.default_grid()

    directory = out_dir(args)
    manifest = ManifestWriter("tournament", digest, seed)
    result = run_tournament(grid, participants, score, episodes, steps, seed,
                            overall_rule=rule, jobs=args.jobs)
    _write_tournament(result, binding, directory, manifest)
    manifest.finish(directory)
    _say(args, f"{len(result.scenarios)} scenarios; overall winner: {result.overall_winner}")
    return EXIT_OK


# -- viz -------------------------------------------------------------------

def _load_trace_series(path: Path) -> dict[str, list[float]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["tick", "key", "value"]:
            raise ConfigError(f"{path} is not an episode trace (bad header {header!r})")
        series: dict[str, dict[int, float]] = {}
        for tick, key, value in reader:
            series.setdefault(key, {})[int(tick)] = float(value)
    return {key: [vals[t] for t in sorted(vals)] for key, vals in series.items()}


def cmd_viz(args) -> int:
    path = Path(args.artifact)
    if not path.is_file():
        raise ConfigError(f"artifact not found: {args.artifact}")
    directory = out_dir(args)
    digest = hashlib.sha256(path.read_bytes()).hexdigest()
    manifest = ManifestWriter("viz", digest, 0, extra={"kind": args.kind})
    from . import viz

    out_path = directory / f"{args.kind}.svg"
    try:
        if args.kind == "trace":
            viz.plot_trace(_load_trace_series(path), out_path)
        elif args.kind == "pareto":
            entries = json.loads(path.read_text(encoding="utf-8"))
            if not isinstance(entries, list) or not all("fitness" in e for e in entries):
                raise ConfigError(f"{path} is not a hall-of-fame file")
            viz.plot_pareto(entries, out_path)
        elif args.kind == "logbook":
            rows = [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line]
            if not rows or any("obj" not in r for r in rows):
                raise ConfigError(f"{path} is not a logbook file")
            viz.plot_logbook(rows, out_path)
        else:
            result = TournamentResult.from_json(path.read_text(encoding="utf-8"))
            means = {s: {p: result.mean_score(s, p) for p in result.participants}
                     for s in result.scenarios}
            viz.plot_tournament(result.scenarios, result.participants, means, out_path)
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as err:
        raise ConfigError(f"artifact does not match kind {args.kind!r}: {err}") from err
    manifest.note(out_path)
    manifest.finish(directory)
    _say(args, f"wrote {out_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="strata",
        description="Layered stream simulations with evolutionary search and tournaments.",
    )
    parser.add_argument("--version", action="version", version=f"strata {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, steps=False, episodes=False):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory (default $HEAS_OUT or ./out)")
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--quiet", action="store_true")
        if steps:
            p.add_argument("--steps", type=int, default=None)
        if episodes:
            p.add_argument("--episodes", type=int, default=None)

    p = sub.add_parser("run", help="simulate one episode")
    p.add_argument("config")
    common(p, steps=True)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("run-graph", help="emit the layered DAG as JSON and SVG")
    p.add_argument("config")
    common(p)
    p.set_defaults(fn=cmd_run_graph)

    p = sub.add_parser("tune", help="optimize parameters or policy weights")
    p.add_argument("config")
    p.add_argument("--algo", choices=["nsga2", "ga", "es"], default="nsga2")
    p.add_argument("--pop", type=int, default=None)
    p.add_argument("--ngen", type=int, default=None)
    p.add_argument("--sigma0", type=float, default=0.2)
    common(p, steps=True)
    p.set_defaults(fn=cmd_tune)

    p = sub.add_parser("arena", help="compare participants in a single scenario")
    p.add_argument("config")
    common(p, steps=True, episodes=True)
    p.set_defaults(fn=cmd_arena)

    p = sub.add_parser("tournament", help="compare participants across the scenario grid")
    p.add_argument("config")
    common(p, steps=True, episodes=True)
    p.set_defaults(fn=cmd_tournament)

    p = sub.add_parser("viz", help="render a figure from a run artifact")
    p.add_argument("artifact")
    p.add_argument("--kind", choices=["trace", "pareto", "logbook", "tournament"], required=True)
    common(p)
    p.set_defaults(fn=cmd_viz)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (StrataError, RuntimeError, OSError) as err:
        print(f"runtime error: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
