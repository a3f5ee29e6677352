"""Compound scaling of network depth, width and input resolution."""

from __future__ import annotations

from dataclasses import dataclass

FLOPS_BAND = (1.9, 2.1)


@dataclass(frozen=True)
class CompoundScaleSpec:
    a: float  # depth base
    b: float  # width base
    c: float  # resolution base
    x: float  # scaling exponent

    def __post_init__(self):
        if min(self.a, self.b, self.c) < 1:
            raise ValueError("scaling bases must be >= 1")


@dataclass(frozen=True)
class CompoundScale:
    depth_mult: float
    width_mult: float
    res_mult: float
    flops_factor: float
    base_in_band: bool  # a * b^2 * c^2 close to 2


def compound_scale(spec: CompoundScaleSpec) -> CompoundScale:
    base = spec.a * spec.b ** 2 * spec.c ** 2
    lo, hi = FLOPS_BAND
    return CompoundScale(spec.a ** spec.x, spec.b ** spec.x, spec.c ** spec.x, base ** spec.x, lo <= base <= hi)
