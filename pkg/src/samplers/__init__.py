"""Coupled level-difference samplers"""
from typing import Any, Dict, Optional

from .base import CoupledSampler
from .elliptic import EllipticSampler, elliptic_reference_value
from .gbm import GBMSampler, gbm_reference_value
from .rng import SampleStream
from .synthetic import SyntheticSampler

SAMPLERS = {
    GBMSampler.name: GBMSampler,
    SyntheticSampler.name: SyntheticSampler,
    EllipticSampler.name: EllipticSampler,
}


def build_sampler(name: str, params: Optional[Dict[str, Any]] = None) -> CoupledSampler:
    """Instantiate a sampler by registry name"""
    if name not in SAMPLERS:
        raise ValueError(f"unknown sampler {name!r}; choose from {sorted(SAMPLERS)}")
    return SAMPLERS[name](**(params or {}))


def reference_value(sampler: CoupledSampler) -> float:
    """Exact or quadrature reference value of the limit quantity"""
    if isinstance(sampler, EllipticSampler):
        return elliptic_reference_value(sampler)
    return sampler.reference_value()


__all__ = [
    "CoupledSampler",
    "EllipticSampler",
    "GBMSampler",
    "SampleStream",
    "SyntheticSampler",
    "build_sampler",
    "elliptic_reference_value",
    "gbm_reference_value",
    "reference_value",
]
