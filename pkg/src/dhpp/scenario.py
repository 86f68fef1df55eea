"""Seeded random vSDN embeddings and the add-one-vSDN event."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .topo import Topology

# Recorded in every serialized scenario.  Draws use raw 64-bit PCG64 outputs
# (seeded through numpy's SeedSequence) and rejection sampling for bounded
# integers, so the stream does not depend on numpy's Generator algorithms.
PRNG_NAME = "pcg64-raw/rejection-v1"
ADD_SEED_XOR = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1


class ScenarioError(ValueError):
    pass


class InvalidSizeRange(ScenarioError):
    pass


class KTooLarge(ScenarioError):
    pass


class _Stream:
    def __init__(self, seed: int):
        self._bits = np.random.PCG64(seed & _MASK64)

    def below(self, bound: int) -> int:
        """Uniform integer in [0, bound)."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        limit = (1 << 64) - ((1 << 64) % bound)
        while True:
            x = int(self._bits.random_raw())
            if x < limit:
                return x % bound

    def between(self, lo: int, hi: int) -> int:
        return lo + self.below(hi - lo + 1)

    def sample(self, n: int, m: int) -> list[int]:
        """m distinct values from range(n) in draw order (partial Fisher-Yates)."""
        pool = list(range(n))
        for i in range(m):
            j = i + self.below(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:m]


@dataclass(frozen=True)
class Vcp:
    vsdn_id: int
    controller_node: int
    switch_node: int


@dataclass(frozen=True)
class Vsdn:
    id: int
    controller_node: int
    switch_nodes: tuple

    def vcps(self) -> list[Vcp]:
        return [Vcp(self.id, self.controller_node, sw) for sw in self.switch_nodes]


@dataclass(frozen=True)
class Scenario:
    topology_ref: str
    k: int
    vsdns: tuple
    seed: int
    size_range: tuple = (2, 10)
    prng: str = field(default=PRNG_NAME, compare=False)

    def vcps(self) -> list[Vcp]:
        return [p for v in self.vsdns for p in v.vcps()]

    def to_dict(self) -> dict:
        return {
            "topology_ref": self.topology_ref,
            "k": self.k,
            "seed": self.seed,
            "size_range": list(self.size_range),
            "prng": self.prng,
            "vsdns": [
                {"id": v.id, "controller": v.controller_node, "switches": list(v.switch_nodes)}
                for v in self.vsdns
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        try:
            vsdns = tuple(
                Vsdn(int(v["id"]), int(v["controller"]), tuple(int(x) for x in v["switches"]))
                for v in d["vsdns"]
            )
            return cls(
                topology_ref=str(d["topology_ref"]),
                k=int(d["k"]),
                vsdns=vsdns,
                seed=int(d["seed"]),
                size_range=tuple(int(x) for x in d["size_range"]),
                prng=d.get("prng", PRNG_NAME),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"malformed scenario document: {exc}") from exc

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def loads(cls, text: str) -> "Scenario":
        return cls.from_dict(json.loads(text))

    def validate(self, t: Topology) -> None:
        if not 1 <= self.k <= t.n:
            raise KTooLarge(f"k={self.k} needs 1 <= k <= {t.n}")
        for v in self.vsdns:
            nodes = (v.controller_node, *v.switch_nodes)
            if not v.switch_nodes or len(set(v.switch_nodes)) != len(v.switch_nodes):
                raise ScenarioError(f"vSDN {v.id}: switch set empty or has duplicates")
            if any(not 0 <= x < t.n for x in nodes):
                raise ScenarioError(f"vSDN {v.id}: node id out of range")


def default_size_range(n_nodes: int) -> tuple[int, int]:
    return (min(2, n_nodes), min(10, n_nodes))


def _check_size_range(size_range, n_nodes: int) -> tuple[int, int]:
    lo, hi = (int(x) for x in size_range)
    if lo < 1 or hi < lo or hi > n_nodes:
        raise InvalidSizeRange(f"size range [{lo}, {hi}] invalid for {n_nodes} nodes")
    return lo, hi


def _draw_vsdn(stream: _Stream, vid: int, n_nodes: int, size_range) -> Vsdn:
    m = stream.between(*size_range)
    controller = stream.below(n_nodes)
    switches = tuple(stream.sample(n_nodes, m))
    return Vsdn(vid, controller, switches)


def generate_scenario(
    t: Topology,
    n_vsdns: int,
    k: int,
    seed: int,
    size_range: Optional[tuple[int, int]] = None,
) -> Scenario:
    """Draw ``n_vsdns`` vSDNs: size, then controller, then switches, per vSDN."""
    if k < 1 or k > t.n:
        raise KTooLarge(f"k={k} needs 1 <= k <= {t.n}")
    if n_vsdns < 0:
        raise ScenarioError("n_vsdns must be non-negative")
    size_range = _check_size_range(size_range or default_size_range(t.n), t.n)
    stream = _Stream(seed)
    vsdns = tuple(_draw_vsdn(stream, i, t.n, size_range) for i in range(n_vsdns))
    return Scenario(t.name, k, vsdns, seed & _MASK64, size_range)


def add_vsdn(s: Scenario, seed: int, t: Topology) -> tuple[Scenario, Vsdn]:
    """Return a new scenario with one extra vSDN drawn from ``seed``.

    ``s`` is left untouched; the new vSDN gets id ``max(existing) + 1``.
    """
    size_range = _check_size_range(s.size_range, t.n)
    vid = max((v.id for v in s.vsdns), default=-1) + 1
    new = _draw_vsdn(_Stream(seed), vid, t.n, size_range)
    return replace(s, vsdns=s.vsdns + (new,)), new


def derived_add_seed(seed: int) -> int:
    return (seed ^ ADD_SEED_XOR) & _MASK64
