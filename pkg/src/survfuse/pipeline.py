"""End-to-end model: encode -> decouple -> reorganize -> MoE -> hazards.

Ablation variants (config switches):

* ``no_explore`` - drop the explored feature; three-feature bundle, all
  downstream dims shrink from 4*C2 to 3*C2.
* ``no_rca``     - shared/explored features become the elementwise mean of
  the two linear embeddings (each instance keeps its own parameters).
* ``no_rfr``     - the interleave is frozen at s = C2, i.e. plain
  concatenation, for every step.
* ``no_moe``     - hazards come from a single affine head on the fused
  vector, bypassing gate and experts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch
import torch.nn as nn

from .decoupling import DecoupledBundle, RegionalCrossAttention, SpecificHead
from .encoders import AttentionPoolEncoder
from .errors import ConfigurationError
from .moe import DenseMoE, HazardHead
from .reorganize import ReorgPlan, SegmentSet, build_plan, reorganize

ABLATIONS = ("none", "no_explore", "no_rca", "no_rfr", "no_moe")


@dataclass
class TrainConfig:
    c0: int = 16
    c1: int = 256
    c2: int = 128
    n_bins: int = 4
    n_experts: int = 4
    segment_set: tuple[int, ...] = (2, 8, 16, 32, 64)
    alpha: float = 1.0
    learning_rate: float = 5e-4
    weight_decay: float = 1e-5
    epochs: int = 30
    batch_size: int = 16
    seed: int = 0
    distance_metric: str = "mse"
    ablation: str = "none"
    rca_scale_logits: bool = False
    eval_segment: Optional[int] = None  # defaults to max(segment_set)

    def validate(self) -> None:
        for name in ("c0", "c1", "c2", "n_bins", "n_experts", "epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.alpha < 0:
            raise ConfigurationError(f"alpha must be >= 0, got {self.alpha}")
        if self.ablation not in ABLATIONS:
            raise ConfigurationError(
                f"unknown ablation {self.ablation!r}; expected one of {ABLATIONS}"
            )
        SegmentSet(tuple(self.segment_set), self.c2)  # validates divisibility
        if self.eval_segment is not None and self.c2 % self.eval_segment != 0:
            raise ConfigurationError(
                f"eval_segment {self.eval_segment} does not divide c2 {self.c2}"
            )

    @property
    def n_features(self) -> int:
        return 3 if self.ablation == "no_explore" else 4

    @property
    def fusion_dim(self) -> int:
        return self.n_features * self.c2

    def segments(self) -> SegmentSet:
        return SegmentSet(tuple(self.segment_set), self.c2)

    def inference_segment(self) -> int:
        if self.ablation == "no_rfr":
            return self.c2
        return self.eval_segment if self.eval_segment is not None else max(self.segment_set)


class FusionSurvivalModel(nn.Module):
    """The full pipeline over a batch of two-modality token matrices."""

    def __init__(self, cfg: TrainConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        c0, c1, c2 = cfg.c0, cfg.c1, cfg.c2
        self.encoder_m1 = AttentionPoolEncoder(c0, c1)
        self.encoder_m2 = AttentionPoolEncoder(c0, c1)
        self.specific_m1 = SpecificHead(c1, c2)
        self.specific_m2 = SpecificHead(c1, c2)
        self.rca_share = RegionalCrossAttention(c1, c2, scale_logits=cfg.rca_scale_logits)
        if cfg.ablation != "no_explore":
            self.rca_explore = RegionalCrossAttention(c1, c2, scale_logits=cfg.rca_scale_logits)
        if cfg.ablation == "no_moe":
            self.direct_head = HazardHead(cfg.fusion_dim, cfg.n_bins)
        else:
            self.moe = DenseMoE(cfg.fusion_dim, c2, cfg.n_experts)
            self.head = HazardHead(cfg.n_experts * c2, cfg.n_bins)
        self._plans: dict[int, ReorgPlan] = {}

    def plan_for(self, s: int) -> ReorgPlan:
        if s not in self._plans:
            self._plans[s] = build_plan(self.cfg.c2, s, self.cfg.n_features)
        return self._plans[s]

    def _shared_or_explored(self, rca: RegionalCrossAttention, v1, v2) -> torch.Tensor:
        if self.cfg.ablation == "no_rca":
            e1, e2 = rca.embeddings(v1, v2)
            return 0.5 * (e1 + e2)
        return rca(v1, v2)

    def decouple(self, tokens_m1: torch.Tensor, tokens_m2: torch.Tensor) -> DecoupledBundle:
        v1 = self.encoder_m1(tokens_m1)
        v2 = self.encoder_m2(tokens_m2)
        bundle = DecoupledBundle(
            sp1=self.specific_m1(v1),
            sp2=self.specific_m2(v2),
            share=self._shared_or_explored(self.rca_share, v1, v2),
        )
        if self.cfg.ablation != "no_explore":
            bundle.explore = self._shared_or_explored(self.rca_explore, v1, v2)
        return bundle

    def forward(
        self,
        tokens_m1: torch.Tensor,
        tokens_m2: torch.Tensor,
        segment_length: Optional[int] = None,
    ) -> dict:
        """Returns hazards, the decoupled bundle, gate weights (None under
        no_moe) and the fused vector.  ``segment_length`` defaults to the
        deterministic inference segment."""
        if segment_length is None or self.cfg.ablation == "no_rfr":
            segment_length = self.cfg.inference_segment()
        bundle = self.decouple(tokens_m1, tokens_m2)
        fused = reorganize(bundle, self.plan_for(segment_length))
        if self.cfg.ablation == "no_moe":
            hazards = self.direct_head(fused)
            gates = None
        else:
            expert_out, gates = self.moe(fused)
            hazards = self.head(expert_out)
        return {
            "hazards": hazards,
            "bundle": bundle,
            "gate_weights": gates,
            "fused": fused,
            "segment_length": segment_length,
        }


def init_params(model: FusionSurvivalModel, rng: np.random.Generator) -> None:
    """Uniform fan-in initialization, +-1/sqrt(fan_in), drawn from an explicit
    numpy generator so initialization is independent of torch's global seed."""
    with torch.no_grad():
        for module in model.modules():
            if isinstance(module, nn.Linear):
                bound = 1.0 / math.sqrt(module.in_features)
                module.weight.copy_(
                    torch.from_numpy(
                        rng.uniform(-bound, bound, size=tuple(module.weight.shape))
                    )
                )
                if module.bias is not None:
                    module.bias.copy_(
                        torch.from_numpy(rng.uniform(-bound, bound, size=module.bias.shape[0]))
                    )
        for enc in (model.encoder_m1, model.encoder_m2):
            bound = 1.0 / math.sqrt(enc.c1)
            enc.class_token.copy_(
                torch.from_numpy(rng.uniform(-bound, bound, size=enc.c1))
            )


def build_model(cfg: TrainConfig) -> FusionSurvivalModel:
    """Construct and deterministically initialize a float64 model."""
    model = FusionSurvivalModel(cfg).double()
    init_params(model, np.random.default_rng(cfg.seed))
    return model


def param_paths(model: nn.Module) -> dict[str, torch.Tensor]:
    return dict(model.named_parameters())


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
