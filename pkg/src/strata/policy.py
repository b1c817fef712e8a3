"""Multilayer-perceptron policies with a frozen flat-parameter layout.

The flat layout is canonical and persisted with saved policies: for each
consecutive layer pair, the weight matrix in row-major order followed by the
bias vector. Hidden layers use tanh; the output is sigmoid (unit box) or
identity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch
from .kernel import StreamSpec
from .schemas import Gene, Schema

SIGMOID = "sigmoid"
IDENTITY = "identity"


@dataclass(frozen=True)
class MlpSpec:
    layer_sizes: tuple[int, ...]
    output: str = SIGMOID

    def __post_init__(self):
        if len(self.layer_sizes) < 2 or any(n < 1 for n in self.layer_sizes):
            raise ValueError("layer_sizes needs >= 2 positive entries")
        if self.output not in (SIGMOID, IDENTITY):
            raise ValueError(f"unknown output activation {self.output!r}")

    @property
    def n_in(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_out(self) -> int:
        return self.layer_sizes[-1]


def param_count(spec: MlpSpec) -> int:
    sizes = spec.layer_sizes
    return sum(sizes[i] * sizes[i + 1] + sizes[i + 1] for i in range(len(sizes) - 1))


def unflatten(spec: MlpSpec, flat: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Flat vector -> [(W, b)] per layer pair, W of shape (n_out, n_in)."""
    flat = np.asarray(flat, dtype=float)
    if flat.shape != (param_count(spec),):
        raise LengthMismatch(f"expected {param_count(spec)} parameters, got {flat.shape}")
    layers = []
    pos = 0
    sizes = spec.layer_sizes
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        w = flat[pos:pos + n_in * n_out].reshape(n_out, n_in)
        pos += n_in * n_out
        b = flat[pos:pos + n_out]
        pos += n_out
        layers.append((w, b))
    return layers


def flatten(layers: list[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    parts = []
    for w, b in layers:
        parts.append(np.asarray(w, dtype=float).reshape(-1))
        parts.append(np.asarray(b, dtype=float).reshape(-1))
    return np.concatenate(parts) if parts else np.zeros(0)


def forward(spec: MlpSpec, flat: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    x = np.asarray(inputs, dtype=float)
    if x.shape != (spec.n_in,):
        raise LengthMismatch(f"expected input of length {spec.n_in}, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite policy input")
    layers = unflatten(spec, flat)
    for w, b in layers[:-1]:
        x = np.tanh(w @ x + b)
    w, b = layers[-1]
    x = w @ x + b
    if spec.output == SIGMOID:
        x = 1.0 / (1.0 + np.exp(-x))
    return x


def weight_schema(n: int, lo: float = -3.0, hi: float = 3.0) -> Schema:
    """All-float schema mapping unit-box genotypes to weight vectors, so
    weight evolution reuses the generic search machinery."""
    width = len(str(max(n - 1, 0)))
    return Schema(tuple(Gene.float_range(f"w{idx:0{width}d}", lo, hi) for idx in range(n)))


def policy_stream(
    stream_id: str,
    layer: int,
    spec: MlpSpec,
    flat: np.ndarray,
    input_keys: list[str],
    output_keys: list[str],
) -> StreamSpec:
    """Wrap a policy as an ordinary stream: read the inputs in declared
    order, run the forward pass, write one scalar per output key."""
    if len(input_keys) != spec.n_in:
        raise LengthMismatch(f"{len(input_keys)} input keys for {spec.n_in} inputs")
    if len(output_keys) != spec.n_out:
        raise LengthMismatch(f"{len(output_keys)} output keys for {spec.n_out} outputs")
    params = np.array(flat, dtype=float, copy=True)
    if params.shape != (param_count(spec),):
        raise LengthMismatch(f"expected {param_count(spec)} parameters, got {params.shape}")

    def step(view, rng):
        x = np.array([float(view[k]) for k in input_keys])
        y = forward(spec, params, x)
        return {k: float(v) for k, v in zip(output_keys, y)}

    return StreamSpec(
        id=stream_id,
        layer=layer,
        reads=frozenset(input_keys),
        writes=frozenset(output_keys),
        step=step,
    )


def save_policy(path, spec: MlpSpec, flat: np.ndarray) -> None:
    flat = np.asarray(flat, dtype=float)
    if flat.shape != (param_count(spec),):
        raise LengthMismatch(f"expected {param_count(spec)} parameters, got {flat.shape}")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"layer_sizes": list(spec.layer_sizes), "output": spec.output,
                   "params": [float(v) for v in flat]}, fh)
        fh.write("\n")


def load_policy(path) -> tuple[MlpSpec, np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    spec = MlpSpec(tuple(int(n) for n in data["layer_sizes"]), data.get("output", SIGMOID))
    flat = np.asarray(data["params"], dtype=float)
    if flat.shape != (param_count(spec),):
        raise LengthMismatch("policy file parameter count does not match its layer sizes")
    return spec, flat
