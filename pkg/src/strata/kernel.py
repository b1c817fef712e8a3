"""Layered stream scheduler over a shared key-value context.

A model is an ordered set of layers, each holding streams registered in a
fixed order. One tick applies the layers in ascending order; every stream in
a layer reads the same layer-entry snapshot, and the layer's writes are
merged into the context afterwards under the model's write policy. Reads of
absent keys are hard errors, never defaulted, so every coupling between
streams is visible in the declared read/write sets.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence, Union

import numpy as np

from .errors import (
    KernelError,
    LengthMismatch,
    NonFiniteWrite,
    UndeclaredWrite,
    UnsatisfiedRead,
    WriteConflict,
)

Value = Union[float, int, bool, str, tuple]
RngHandle = np.random.Generator


# ---------------------------------------------------------------------------
# Keys and values
# ---------------------------------------------------------------------------

def _valid_segments(dotted: str) -> bool:
    parts = dotted.split(".")
    return len(parts) >= 2 and all(p and not any(c.isspace() for c in p) for p in parts)


@dataclass(frozen=True)
class ContextKey:
    """Namespaced key rendered as ``NAMESPACE.name``. Namespaces may nest
    (``PREY.PREY.mean_x``); the name is the final segment."""

    namespace: str
    name: str

    def __post_init__(self):
        if not _valid_segments(self.render()):
            raise ValueError(f"invalid context key {self.render()!r}")

    def render(self) -> str:
        return f"{self.namespace}.{self.name}"

    @classmethod
    def parse(cls, dotted: str) -> "ContextKey":
        if not _valid_segments(dotted):
            raise ValueError(f"invalid context key {dotted!r}")
        namespace, _, name = dotted.rpartition(".")
        return cls(namespace, name)

    def __str__(self) -> str:
        return self.render()


def check_key(dotted: str) -> str:
    """Validate a rendered key and return it unchanged."""
    if not _valid_segments(dotted):
        raise ValueError(f"invalid context key {dotted!r}")
    return dotted


def _normalize_value(key: str, stream: str, value) -> Value:
    """Coerce a stream write into a storable value, rejecting non-finite
    numbers. Vectors are stored as tuples of floats so context state is
    immutable."""
    if isinstance(value, bool):
        return value
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if not math.isfinite(v):
            raise NonFiniteWrite(key, stream)
        return v
    if isinstance(value, str):
        return value
    if isinstance(value, (tuple, list, np.ndarray)):
        vec = tuple(float(v) for v in value)
        if not all(math.isfinite(v) for v in vec):
            raise NonFiniteWrite(key, stream)
        return vec
    raise TypeError(f"stream {stream!r} wrote unsupported value type {type(value).__name__} to {key!r}")


# ---------------------------------------------------------------------------
# Context and read views
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Context:
    """Immutable snapshot of the shared state at one tick."""

    entries: Mapping[str, Value]
    tick: int = 0

    @classmethod
    def from_dict(cls, entries: Mapping[str, Value], tick: int = 0) -> "Context":
        normalized = {check_key(k): _normalize_value(k, "<initial>", v) for k, v in entries.items()}
        return cls(normalized, tick)


class StepView:
    """Read access restricted to a stream's declared read set."""

    __slots__ = ("_entries", "tick", "_allowed", "_stream")

    def __init__(self, entries: Mapping[str, Value], tick: int, allowed: frozenset, stream: str):
        self._entries = entries
        self.tick = tick
        self._allowed = allowed
        self._stream = stream

    def __getitem__(self, key: str) -> Value:
        if key not in self._allowed or key not in self._entries:
            raise UnsatisfiedRead(key, self._stream)
        return self._entries[key]

    def vector(self, key: str) -> np.ndarray:
        """Declared vector key as a float array (copy; context stays frozen)."""
        return np.asarray(self[key], dtype=float)


class MetricView:
    """Unrestricted read access used by metric hooks after a tick completes."""

    __slots__ = ("_entries", "tick")

    def __init__(self, entries: Mapping[str, Value], tick: int):
        self._entries = entries
        self.tick = tick

    def __getitem__(self, key: str) -> Value:
        if key not in self._entries:
            raise UnsatisfiedRead(key, "<metric-hook>")
        return self._entries[key]

    def vector(self, key: str) -> np.ndarray:
        return np.asarray(self[key], dtype=float)


# ---------------------------------------------------------------------------
# Streams and models
# ---------------------------------------------------------------------------

StepFn = Callable[[StepView, RngHandle], Union[Mapping[str, object], None]]
MetricFn = Callable[[MetricView], float]


@dataclass(frozen=True)
class StreamSpec:
    """One process in the model.

    ``step`` receives a view restricted to ``reads`` plus this stream's rng
    substream and returns the writes for this tick (a mapping over declared
    ``writes``). ``stateful_reads`` marks keys whose value comes from a
    previous tick (written in this layer or a later one); such keys must be
    seeded in the initial context. ``metric_hooks`` emit one scalar per tick
    after all layers fire.
    """

    id: str
    layer: int
    reads: frozenset = frozenset()
    writes: frozenset = frozenset()
    step: StepFn = lambda view, rng: None
    stateful_reads: frozenset = frozenset()
    metric_hooks: Mapping[str, MetricFn] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "reads", frozenset(check_key(k) for k in self.reads))
        object.__setattr__(self, "writes", frozenset(check_key(k) for k in self.writes))
        object.__setattr__(self, "stateful_reads", frozenset(check_key(k) for k in self.stateful_reads))
        for k in self.metric_hooks:
            check_key(k)
        if self.layer < 1:
            raise ValueError(f"stream {self.id!r}: layer index must be >= 1")
        if not self.stateful_reads <= self.reads:
            raise ValueError(f"stream {self.id!r}: stateful_reads must be a subset of reads")


class WritePolicy:
    """Same-layer conflict discipline. A conflict is two streams in one layer
    writing the same key in the same tick."""

    ERROR = "error"
    LAST_WRITER_WINS = "last"
    REDUCE_SUM = "sum"
    REDUCE_MIN = "min"
    REDUCE_MAX = "max"

    ALL = (ERROR, LAST_WRITER_WINS, REDUCE_SUM, REDUCE_MIN, REDUCE_MAX)


_REDUCERS = {
    WritePolicy.REDUCE_SUM: lambda vs: sum(vs),
    WritePolicy.REDUCE_MIN: min,
    WritePolicy.REDUCE_MAX: max,
}


@dataclass(frozen=True)
class Diagnostic:
    stream_id: str
    key: str
    kind: str  # "duplicate-id" | "write-conflict" | "unsatisfied-read" | "undeclared-stateful-read"
    message: str


EpisodeReducer = Union[str, Callable[[Sequence[float]], float]]


class LayeredModel:
    """Streams grouped into ascending layers, registration order preserved.

    ``episode_aggregators`` maps an episode-metric name to ``(metric_key,
    reducer)`` where the reducer is one of ``mean``/``min``/``max``/``last``/
    ``sum`` or a callable over the per-step series.
    """

    def __init__(
        self,
        streams: Iterable[StreamSpec],
        write_policy: str = WritePolicy.ERROR,
        episode_aggregators: Mapping[str, tuple[str, EpisodeReducer]] | None = None,
    ):
        self.streams = list(streams)
        if write_policy not in WritePolicy.ALL:
            raise ValueError(f"unknown write policy {write_policy!r}")
        self.write_policy = write_policy
        self.episode_aggregators = dict(episode_aggregators or {})
        indices = sorted({s.layer for s in self.streams})
        self.layers: list[list[StreamSpec]] = [
            [s for s in self.streams if s.layer == k] for k in indices
        ]
        self.layer_indices = indices

    @property
    def metric_keys(self) -> list[str]:
        keys: list[str] = []
        for s in self.streams:
            keys.extend(s.metric_hooks)
        return keys


def validate_model(model: LayeredModel, initial_keys: Iterable[str] = ()) -> list[Diagnostic]:
    """Structural checks: unique ids, same-layer write conflicts under the
    error policy, and satisfiability of every declared read. ``initial_keys``
    are the keys present in the initial context."""
    if not model.streams:
        raise ValueError("model must have at least one layer with at least one stream")
    diags: list[Diagnostic] = []

    seen: set[str] = set()
    for s in model.streams:
        if s.id in seen:
            diags.append(Diagnostic(s.id, "", "duplicate-id", f"duplicate stream id {s.id!r}"))
        seen.add(s.id)

    if model.write_policy == WritePolicy.ERROR:
        for layer in model.layers:
            writers: dict[str, list[str]] = {}
            for s in layer:
                for k in s.writes:
                    writers.setdefault(k, []).append(s.id)
            for k, ids in writers.items():
                if len(ids) > 1:
                    diags.append(Diagnostic(ids[-1], k, "write-conflict",
                                            f"streams {ids!r} all write {k!r} in layer {layer[0].layer}"))

    init = set(initial_keys)
    written_below: dict[int, set[str]] = {}
    acc: set[str] = set()
    for idx, layer in zip(model.layer_indices, model.layers):
        written_below[idx] = set(acc)
        for s in layer:
            acc.update(s.writes)
    written_anywhere = acc

    for s in model.streams:
        for k in s.reads:
            if k in written_below[s.layer]:
                continue  # produced by an earlier layer this tick
            if k in init:
                # value comes from a previous tick (or is constant); reads of
                # keys rewritten in this or a later layer must be declared
                if k in written_anywhere and k not in s.stateful_reads:
                    diags.append(Diagnostic(s.id, k, "undeclared-stateful-read",
                                            f"stream {s.id!r} reads {k!r} across ticks without declaring it stateful"))
                continue
            diags.append(Diagnostic(s.id, k, "unsatisfied-read",
                                    f"no earlier layer writes {k!r} and it is absent from the initial context"))
    return diags


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------

def derive_seed(run_seed: int, unit_label: str) -> int:
    """Stable 64-bit seed for a named unit of work. Pure function of its
    arguments; hashing keeps distinct labels statistically independent."""
    digest = hashlib.sha256(f"{int(run_seed)}\x1f{unit_label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def rng_substream(run_seed: int, unit_label: str) -> RngHandle:
    """Independent generator derived from ``(run_seed, unit_label)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(derive_seed(run_seed, unit_label))))


def run_tick(
    model: LayeredModel,
    ctx: Context,
    rngs: Mapping[str, RngHandle],
) -> tuple[Context, dict[str, float]]:
    """Advance the context by one tick and collect all metric-hook values.

    ``rngs`` maps stream id to that stream's generator. Within each layer,
    every stream reads the layer-entry snapshot; writes are merged afterwards
    under the model write policy, so within-layer registration order matters
    only to last-writer-wins merges.
    """
    entries: dict[str, Value] = dict(ctx.entries)
    vector_len = {k: len(v) for k, v in entries.items() if isinstance(v, tuple)}

    for layer in model.layers:
        pending: dict[str, list[tuple[str, Value]]] = {}
        for stream in layer:
            view = StepView(entries, ctx.tick, stream.reads, stream.id)
            out = stream.step(view, rngs[stream.id]) or {}
            for key, raw in out.items():
                if key not in stream.writes:
                    raise UndeclaredWrite(key, stream.id)
                value = _normalize_value(key, stream.id, raw)
                if isinstance(value, tuple):
                    n = vector_len.setdefault(key, len(value))
                    if len(value) != n:
                        raise LengthMismatch(
                            f"stream {stream.id!r} wrote vector of length {len(value)} to {key!r}, expected {n}")
                pending.setdefault(key, []).append((stream.id, value))
        for key, writes in pending.items():
            if len(writes) == 1:
                entries[key] = writes[0][1]
            elif model.write_policy == WritePolicy.ERROR:
                raise WriteConflict(key, tuple(sid for sid, _ in writes))
            elif model.write_policy == WritePolicy.LAST_WRITER_WINS:
                entries[key] = writes[-1][1]
            else:
                reducer = _REDUCERS[model.write_policy]
                entries[key] = _normalize_value(key, writes[-1][0], reducer([v for _, v in writes]))

    mview = MetricView(entries, ctx.tick)
    metrics: dict[str, float] = {}
    for stream in model.streams:
        for key, hook in stream.metric_hooks.items():
            v = float(hook(mview))
            if not math.isfinite(v):
                raise NonFiniteWrite(key, stream.id)
            metrics[key] = v
    return Context(entries, ctx.tick + 1), metrics


@dataclass(frozen=True)
class EpisodeTrace:
    """Per-step metric values plus episode-level aggregates for one rollout."""

    per_step: tuple[dict[str, float], ...]
    episode_metrics: dict[str, float]
    seed: int
    steps: int


_EPISODE_REDUCERS: dict[str, Callable[[Sequence[float]], float]] = {
    "mean": lambda xs: float(np.mean(xs)),
    "min": lambda xs: float(np.min(xs)),
    "max": lambda xs: float(np.max(xs)),
    "sum": lambda xs: float(np.sum(xs)),
    "last": lambda xs: float(xs[-1]),
}


def run_episode(model: LayeredModel, init: Context | Mapping[str, Value], seed: int, steps: int) -> EpisodeTrace:
    """Run ``steps`` ticks from ``init``. Fully deterministic in its
    arguments: stream rngs are substreams of ``seed`` keyed by stream id."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    ctx = init if isinstance(init, Context) else Context.from_dict(init)
    diags = validate_model(model, ctx.entries.keys())
    if diags:
        raise ValueError("model failed validation: " + "; ".join(d.message for d in diags))

    rngs = {s.id: rng_substream(seed, f"stream:{s.id}") for s in model.streams}
    per_step: list[dict[str, float]] = []
    for t in range(steps):
        try:
            ctx, metrics = run_tick(model, ctx, rngs)
        except KernelError as err:
            err.tick = t
            raise
        per_step.append(metrics)

    episode_metrics: dict[str, float] = {}
    for name, (key, reducer) in model.episode_aggregators.items():
        series = [row[key] for row in per_step]
        fn = _EPISODE_REDUCERS[reducer] if isinstance(reducer, str) else reducer
        episode_metrics[name] = float(fn(series))
    return EpisodeTrace(tuple(per_step), episode_metrics, int(seed), steps)


# ---------------------------------------------------------------------------
# Trace serialization
# ---------------------------------------------------------------------------

def trace_to_csv(trace: EpisodeTrace) -> str:
    """Long-format ``tick,key,value`` CSV; values use shortest round-trip
    decimals, keys are sorted within each tick."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["tick", "key", "value"])
    for t, row in enumerate(trace.per_step):
        for key in sorted(row):
            writer.writerow([t, key, repr(row[key])])
    return buf.getvalue()


def trace_summary_json(trace: EpisodeTrace) -> str:
    return json.dumps(
        {"seed": trace.seed, "steps": trace.steps, "metrics": trace.episode_metrics},
        sort_keys=True,
        indent=2,
    ) + "\n"
