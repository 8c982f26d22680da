"""Dense mixture-of-experts fusion and the hazard prediction head.

A single weight matrix gates the fused vector onto the N-expert simplex;
every expert (two linear layers with a rectifier) sees the same input, and
their outputs, each scaled by its gate weight, are concatenated.  The head is
one affine map followed by an elementwise sigmoid, producing per-bin hazards
strictly inside (0, 1).
"""

import torch
import torch.nn as nn

from .errors import DimensionError


def gate_weights(v_fusion: torch.Tensor, w: torch.Tensor) -> torch.Tensor:
    """Softmax of the N gate logits ``w @ v_fusion`` (w: (N, in_dim))."""
    if w.shape[1] != v_fusion.shape[-1]:
        raise DimensionError(
            f"gate expects input dim {w.shape[1]}, got {v_fusion.shape[-1]}"
        )
    logits = v_fusion @ w.T
    return torch.softmax(logits, dim=-1)


class Expert(nn.Module):
    def __init__(self, in_dim: int, c2: int):
        super().__init__()
        self.fc1 = nn.Linear(in_dim, c2)
        self.fc2 = nn.Linear(c2, c2)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(torch.relu(self.fc1(x)))


class DenseMoE(nn.Module):
    """All-experts-active fusion; output is the gate-weighted concatenation
    of the N expert outputs, length N * C2."""

    def __init__(self, in_dim: int, c2: int, n_experts: int):
        super().__init__()
        if n_experts < 1:
            raise DimensionError(f"need at least one expert, got {n_experts}")
        self.in_dim = in_dim
        self.c2 = c2
        self.n_experts = n_experts
        self.gate = nn.Linear(in_dim, n_experts, bias=False)
        self.experts = nn.ModuleList(Expert(in_dim, c2) for _ in range(n_experts))

    def forward(self, v_fusion: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Returns (fused (.., N*C2), gates (.., N))."""
        gates = gate_weights(v_fusion, self.gate.weight)
        blocks = [
            gates[..., i : i + 1] * expert(v_fusion)
            for i, expert in enumerate(self.experts)
        ]
        return torch.cat(blocks, dim=-1), gates


class HazardHead(nn.Module):
    """Single affine map to n_bins logits, squashed through a sigmoid."""

    def __init__(self, in_dim: int, n_bins: int):
        super().__init__()
        self.fc = nn.Linear(in_dim, n_bins)

    def forward(self, v: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.fc(v))
