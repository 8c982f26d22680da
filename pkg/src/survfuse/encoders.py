"""Class-token attention pooling over a variable-length token matrix.

One encoder per modality maps tokens of shape (I, C0) to a single feature
vector of length C1.  A learned class token attends over the projected
tokens (scaled dot-product, softmax over tokens), so the output is invariant
to token order.
"""

import math

import torch
import torch.nn as nn

from .errors import DimensionError


class AttentionPoolEncoder(nn.Module):
    def __init__(self, c0: int, c1: int):
        super().__init__()
        self.c0 = c0
        self.c1 = c1
        self.token_proj = nn.Linear(c0, c1)
        self.class_token = nn.Parameter(torch.zeros(c1))
        self.query = nn.Linear(c1, c1, bias=False)
        self.key = nn.Linear(c1, c1, bias=False)
        self.value = nn.Linear(c1, c1, bias=False)

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        """tokens: (I, C0) or (B, I, C0) -> (C1,) or (B, C1)."""
        squeezed = tokens.dim() == 2
        if squeezed:
            tokens = tokens.unsqueeze(0)
        if tokens.dim() != 3 or tokens.shape[-1] != self.c0:
            raise DimensionError(
                f"expected tokens (..., I, {self.c0}), got {tuple(tokens.shape)}"
            )
        if tokens.shape[1] == 0:
            raise DimensionError("encoder requires at least one token")
        proj = self.token_proj(tokens)  # (B, I, C1)
        q = self.query(self.class_token)  # (C1,)
        k = self.key(proj)  # (B, I, C1)
        v = self.value(proj)
        logits = k @ q / math.sqrt(self.c1)  # (B, I)
        attn = torch.softmax(logits, dim=1)
        out = torch.einsum("bi,bic->bc", attn, v)
        return out.squeeze(0) if squeezed else out
