"""Search-space declaration: ordered gene primitives and unit-box genotypes.

Genotypes are vectors in [0, 1]^n regardless of gene type; typed values only
exist after :func:`decode`. Variation operators therefore stay generic, and
evolving network weights is the same operation as evolving rule parameters.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import LengthMismatch
from .kernel import RngHandle

FLOAT = "float"
INT = "int"
CHOICE = "choice"


@dataclass(frozen=True)
class Gene:
    name: str
    kind: str
    lo: float = 0.0
    hi: float = 1.0
    choices: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind == FLOAT:
            if not self.lo < self.hi:
                raise ValueError(f"gene {self.name!r}: float range needs lo < hi")
        elif self.kind == INT:
            lo, hi = int(self.lo), int(self.hi)
            if not lo <= hi:
                raise ValueError(f"gene {self.name!r}: int range needs lo <= hi")
        elif self.kind == CHOICE:
            if not self.choices:
                raise ValueError(f"gene {self.name!r}: choice gene needs at least one item")
        else:
            raise ValueError(f"gene {self.name!r}: unknown kind {self.kind!r}")

    @classmethod
    def float_range(cls, name: str, lo: float, hi: float) -> "Gene":
        return cls(name, FLOAT, float(lo), float(hi))

    @classmethod
    def int_range(cls, name: str, lo: int, hi: int) -> "Gene":
        return cls(name, INT, int(lo), int(hi))

    @classmethod
    def choice(cls, name: str, items: Sequence[str]) -> "Gene":
        return cls(name, CHOICE, choices=tuple(items))

    def decode_one(self, u: float):
        if self.kind == FLOAT:
            return self.lo + u * (self.hi - self.lo)
        if self.kind == INT:
            lo, hi = int(self.lo), int(self.hi)
            return min(hi, max(lo, lo + math.floor(u * (hi - lo + 1))))
        idx = min(len(self.choices) - 1, max(0, math.floor(u * len(self.choices))))
        return self.choices[idx]


@dataclass(frozen=True)
class Schema:
    """Ordered genes; the order fixes the genotype layout."""

    genes: tuple[Gene, ...]

    def __post_init__(self):
        names = [g.name for g in self.genes]
        if len(set(names)) != len(names):
            raise ValueError("gene names must be unique")

    def __len__(self) -> int:
        return len(self.genes)


def decode(schema: Schema, genotype: np.ndarray) -> dict:
    """Map a unit-box genotype to named typed values."""
    g = np.asarray(genotype, dtype=float)
    if g.shape != (len(schema),):
        raise LengthMismatch(f"genotype length {g.shape} != schema length {len(schema)}")
    return {gene.name: gene.decode_one(float(u)) for gene, u in zip(schema.genes, g)}


def decode_array(schema: Schema, genotype: np.ndarray) -> np.ndarray:
    """Decoded values as a float vector; requires an all-float schema."""
    if any(g.kind != FLOAT for g in schema.genes):
        raise ValueError("decode_array requires all-float genes")
    g = np.asarray(genotype, dtype=float)
    if g.shape != (len(schema),):
        raise LengthMismatch(f"genotype length {g.shape} != schema length {len(schema)}")
    lo = np.array([gene.lo for gene in schema.genes])
    hi = np.array([gene.hi for gene in schema.genes])
    return lo + g * (hi - lo)


def sample(schema: Schema, rng: RngHandle) -> np.ndarray:
    """I.i.d. uniform genotype on the unit box."""
    return rng.random(len(schema))


def repair(genotype: np.ndarray) -> np.ndarray:
    """Clamp every component to [0, 1]; idempotent."""
    return np.clip(np.asarray(genotype, dtype=float), 0.0, 1.0)


# JSON form used by configs: [{"name": "risk", "kind": "float", "lo": 0, "hi": 1}, ...]

def schema_to_json(schema: Schema) -> list[dict]:
    out = []
    for g in schema.genes:
        if g.kind == CHOICE:
            out.append({"name": g.name, "kind": g.kind, "choices": list(g.choices)})
        else:
            out.append({"name": g.name, "kind": g.kind, "lo": g.lo, "hi": g.hi})
    return out


def schema_from_json(items: Sequence[dict]) -> Schema:
    genes = []
    for item in items:
        kind = item["kind"]
        if kind == CHOICE:
            genes.append(Gene.choice(item["name"], item["choices"]))
        elif kind == INT:
            genes.append(Gene.int_range(item["name"], item["lo"], item["hi"]))
        else:
            genes.append(Gene.float_range(item["name"], item["lo"], item["hi"]))
    return Schema(tuple(genes))


def dumps_schema(schema: Schema) -> str:
    return json.dumps(schema_to_json(schema))
