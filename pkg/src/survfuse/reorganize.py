"""Random feature reorganization: segment the decoupled features and
interleave segments across features into one fused vector.

For segment length ``s`` dividing C2, every feature is cut into
``L = C2 // s`` segments; output block ``l`` concatenates segment ``l`` of
every feature in feature order.  The whole operation is a fixed permutation
(a pure gather), so it is exactly norm- and multiset-preserving.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .decoupling import DecoupledBundle
from .errors import ConfigurationError, DimensionError


@dataclass(frozen=True)
class SegmentSet:
    """Candidate segment lengths; every element must divide ``c2``."""

    values: tuple[int, ...]
    c2: int

    def __post_init__(self):
        if not self.values:
            raise ConfigurationError("segment set must be nonempty")
        for s in self.values:
            if s < 1 or self.c2 % s != 0:
                raise ConfigurationError(
                    f"segment length {s} does not divide feature dim {self.c2}"
                )

    @property
    def max(self) -> int:
        return max(self.values)


def sample_segment_length(segments: SegmentSet, rng: np.random.Generator) -> int:
    """Uniform draw from the segment set; deterministic under a seeded rng."""
    return int(segments.values[rng.integers(len(segments.values))])


@dataclass(frozen=True)
class ReorgPlan:
    """Interleave permutation for segment length ``s`` over ``n_features``
    features of length ``c2``.  ``perm[i]`` is the output position of input
    position ``i`` of the concatenated bundle; ``gather`` is its inverse,
    suitable for ``out = x[..., gather]``."""

    c2: int
    s: int
    n_features: int
    perm: np.ndarray = field(repr=False)
    gather: np.ndarray = field(repr=False)


def build_plan(c2: int, s: int, n_features: int) -> ReorgPlan:
    if c2 % s != 0:
        raise ConfigurationError(f"segment length {s} does not divide feature dim {c2}")
    if n_features < 1:
        raise ConfigurationError(f"n_features must be >= 1, got {n_features}")
    perm = np.empty(n_features * c2, dtype=np.int64)
    for o in range(n_features):
        j = np.arange(c2)
        l = j // s
        perm[o * c2 + j] = l * n_features * s + o * s + (j % s)
    gather = np.argsort(perm)
    return ReorgPlan(c2=c2, s=s, n_features=n_features, perm=perm, gather=gather)


def reorganize(bundle: DecoupledBundle, plan: ReorgPlan) -> torch.Tensor:
    """Interleave the bundle into one vector of length n_features * C2."""
    feats = bundle.features()
    if len(feats) != plan.n_features:
        raise DimensionError(
            f"plan built for {plan.n_features} features, bundle has {len(feats)}"
        )
    if feats[0].shape[-1] != plan.c2:
        raise DimensionError(
            f"plan built for feature dim {plan.c2}, bundle has {feats[0].shape[-1]}"
        )
    x = torch.cat(feats, dim=-1)
    idx = torch.from_numpy(plan.gather)
    return x.index_select(-1, idx)


def inverse_reorganize(fused: torch.Tensor, plan: ReorgPlan) -> torch.Tensor:
    """Undo :func:`reorganize`, recovering the plain concatenation."""
    idx = torch.from_numpy(plan.perm)
    return fused.index_select(-1, idx)
