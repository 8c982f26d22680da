"""Feature decoupling: specific heads, regional cross-attention, distance loss.

Each pair of modality features (V_m1, V_m2) is decoupled into four C2-length
vectors: two modality-specific ones (per-modality feed-forward heads) and a
shared plus an explored one, both produced by independently parameterized
regional cross-attention blocks.  A distance-based loss pulls the shared and
explored vectors toward the specific ones while pushing the two specific
vectors apart.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import torch
import torch.nn as nn

logger = logging.getLogger(__name__)


class DistanceMetric(str, Enum):
    MSE = "mse"
    L1 = "l1"
    KL = "kl"
    COS = "cos"


@dataclass
class DecoupledBundle:
    """The four decoupled vectors; ``explore`` is absent under the
    no-explore ablation.  Tensors are (C2,) or batched (B, C2)."""

    sp1: torch.Tensor
    sp2: torch.Tensor
    share: torch.Tensor
    explore: Optional[torch.Tensor] = None

    @property
    def n_features(self) -> int:
        return 3 if self.explore is None else 4

    def features(self) -> list[torch.Tensor]:
        out = [self.sp1, self.sp2, self.share]
        if self.explore is not None:
            out.append(self.explore)
        return out


class SpecificHead(nn.Module):
    """Per-modality feed-forward head: linear C1 -> C2 plus a rectifier."""

    def __init__(self, c1: int, c2: int):
        super().__init__()
        self.fc = nn.Linear(c1, c2)

    def forward(self, v: torch.Tensor) -> torch.Tensor:
        return torch.relu(self.fc(v))


def column_softmax(m: torch.Tensor) -> torch.Tensor:
    """Softmax over the rows of each column (dim -2), max-subtracted."""
    return torch.softmax(m, dim=-2)


class RegionalCrossAttention(nn.Module):
    """Cross-attention over sub-blocks of the outer product of the two
    concatenated modality embeddings.

    Two linear maps produce embeddings v1, v2 of length d = C2.  The 2d x 2d
    matrix M = [v1,v2]^T [v2,v1] is split into d x d blocks

        M = [[M_12, M_11],
             [M_22, M_21]]

    and two attention branches are averaged:

        A = [v1,v2] . colsoftmax(vstack(M_12, M_22))
        B = [v2,v1] . colsoftmax(hstack(M_12, M_11)^T)

    where colsoftmax normalizes each of the d columns over its 2d rows.
    Logits are unscaled by default; ``scale_logits`` divides by sqrt(d).
    """

    def __init__(self, c1: int, c2: int, scale_logits: bool = False):
        super().__init__()
        self.c2 = c2
        self.scale_logits = scale_logits
        self.fc1 = nn.Linear(c1, c2)
        self.fc2 = nn.Linear(c1, c2)

    def embeddings(self, v_m1: torch.Tensor, v_m2: torch.Tensor):
        return self.fc1(v_m1), self.fc2(v_m2)

    def forward(self, v_m1: torch.Tensor, v_m2: torch.Tensor) -> torch.Tensor:
        squeezed = v_m1.dim() == 1
        if squeezed:
            v_m1 = v_m1.unsqueeze(0)
            v_m2 = v_m2.unsqueeze(0)
        v1, v2 = self.embeddings(v_m1, v_m2)  # (B, d) each
        d = self.c2
        cat_a = torch.cat([v1, v2], dim=-1)  # [v1, v2], (B, 2d)
        cat_b = torch.cat([v2, v1], dim=-1)  # [v2, v1]
        m = torch.einsum("bi,bj->bij", cat_a, cat_b)  # (B, 2d, 2d)
        if self.scale_logits:
            m = m / (d ** 0.5)
        m_12 = m[:, :d, :d]
        m_11 = m[:, :d, d:]
        m_22 = m[:, d:, :d]
        # branch A: stack the inter- and intra-modality blocks row-wise
        attn_a = column_softmax(torch.cat([m_12, m_22], dim=1))  # (B, 2d, d)
        branch_a = torch.einsum("bi,bij->bj", cat_a, attn_a)
        # branch B: the transposed row-block [M_12, M_11]
        attn_b = column_softmax(torch.cat([m_12, m_11], dim=2).transpose(1, 2))
        branch_b = torch.einsum("bi,bij->bj", cat_b, attn_b)
        out = 0.5 * (branch_a + branch_b)
        return out.squeeze(0) if squeezed else out


def distance(u: torch.Tensor, v: torch.Tensor, metric: DistanceMetric) -> torch.Tensor:
    """Pairwise dissimilarity of two feature tensors (last dim = C2).

    Batched inputs are averaged over all elements/rows, so the result is
    always a scalar tensor.  KL operates on softmax-normalized copies and is
    symmetrized; cosine distance of a zero vector is defined as 1.
    """
    metric = DistanceMetric(metric)
    if u.shape != v.shape:
        raise ValueError(f"shape mismatch: {tuple(u.shape)} vs {tuple(v.shape)}")
    if metric is DistanceMetric.MSE:
        return ((u - v) ** 2).mean()
    if metric is DistanceMetric.L1:
        return (u - v).abs().mean()
    if metric is DistanceMetric.KL:
        log_p = torch.log_softmax(u, dim=-1)
        log_q = torch.log_softmax(v, dim=-1)
        p, q = log_p.exp(), log_q.exp()
        kl_pq = (p * (log_p - log_q)).sum(dim=-1)
        kl_qp = (q * (log_q - log_p)).sum(dim=-1)
        return (0.5 * (kl_pq + kl_qp)).mean()
    # cosine
    nu = torch.linalg.vector_norm(u, dim=-1)
    nv = torch.linalg.vector_norm(v, dim=-1)
    zero = (nu == 0) | (nv == 0)
    if bool(zero.any()):
        logger.warning("cosine distance saw a zero vector; using orthogonality convention (=1)")
    denom = torch.where(zero, torch.ones_like(nu), nu * nv)
    cos = torch.where(zero, torch.zeros_like(nu), (u * v).sum(dim=-1) / denom)
    return (1.0 - cos).mean()


def decoupling_loss(
    bundle: DecoupledBundle,
    metric: DistanceMetric = DistanceMetric.MSE,
    cap_specific_distance: Optional[float] = None,
) -> torch.Tensor:
    """Distance loss over the decoupled bundle.

    Sum of the five attract terms (every feature toward share/explore) minus
    the sp1-sp2 repel term.  Under the no-explore ablation the three explore
    terms vanish.  ``cap_specific_distance`` optionally clamps the repel term
    (the loss is otherwise unbounded below); off by default.
    """
    sp1, sp2, share = bundle.sp1, bundle.sp2, bundle.share
    loss = distance(sp1, share, metric) + distance(sp2, share, metric)
    if bundle.explore is not None:
        loss = (
            loss
            + distance(sp1, bundle.explore, metric)
            + distance(sp2, bundle.explore, metric)
            + distance(share, bundle.explore, metric)
        )
    repel = distance(sp1, sp2, metric)
    if cap_specific_distance is not None:
        repel = repel.clamp(max=cap_specific_distance)
    return loss - repel
