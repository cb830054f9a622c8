"""Deterministic sampling: SplitMix64 generator, random points, random expressions."""

from __future__ import annotations

import numpy as np

from .expr import Chart, ScalarField, parse

__all__ = ["SplitMix64", "random_points", "random_expression"]

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB


class SplitMix64:
    """64-bit SplitMix generator.

    state += 0x9E3779B97F4A7C15
    z = (state ^ (state >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    out = z ^ (z >> 31)

    Doubles in [0, 1) use the top 53 bits: (out >> 11) * 2^-53.
    """

    def __init__(self, seed: int = 0):
        self.state = int(seed) & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * MIX1) & MASK64
        z = ((z ^ (z >> 27)) * MIX2) & MASK64
        return z ^ (z >> 31)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        return lo + (hi - lo) * ((self.next_u64() >> 11) * 2.0**-53)

    def below(self, k: int) -> int:
        """Integer in [0, k) (modulo reduction; bias is irrelevant for test sampling)."""
        return self.next_u64() % k

    def choice(self, items):
        return items[self.below(len(items))]


def random_points(rng: SplitMix64, lows, highs, count: int) -> np.ndarray:
    """``count`` points drawn coordinate by coordinate, row-major."""
    lows = [float(x) for x in lows]
    highs = [float(x) for x in highs]
    out = np.empty((count, len(lows)))
    for p in range(count):
        for k, (lo, hi) in enumerate(zip(lows, highs)):
            out[p, k] = rng.uniform(lo, hi)
    return out


# templates keep every draw defined and smooth on the whole chart
_UNARY = [
    "sin({})",
    "cos({})",
    "exp(0.3*{})",
    "sqrt(1 + ({})^2)",
    "ln(2 + sin({}))",
    "1/(2 + cos({}))",
    "tanh({})",
    "({})^2",
    "({})^3",
    "sinh(0.5*{})",
]
_BINARY = ["({}) + ({})", "({}) - ({})", "({})*({})", "({})/(1.5 + sin({}))"]


def _leaf(rng: SplitMix64, chart: Chart) -> str:
    if rng.below(4) == 0:
        return repr(round(rng.uniform(-2.0, 2.0), 3))
    name = chart.names[rng.below(chart.dim)]
    c = round(rng.uniform(0.5, 1.5), 3)
    return f"{c}*{name}"


def random_expression_text(rng: SplitMix64, chart: Chart, depth: int = 3) -> str:
    if depth <= 0 or rng.below(5) == 0:
        return _leaf(rng, chart)
    if rng.below(2) == 0:
        return rng.choice(_UNARY).format(random_expression_text(rng, chart, depth - 1))
    a = random_expression_text(rng, chart, depth - 1)
    b = random_expression_text(rng, chart, depth - 1)
    return rng.choice(_BINARY).format(a, b)


def random_expression(rng: SplitMix64, chart: Chart, depth: int = 3) -> ScalarField:
    return parse(random_expression_text(rng, chart, depth), chart)
