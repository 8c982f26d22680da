"""Discrete-time survival mathematics.

Hazards are per-bin conditional event probabilities h_1..h_n in (0, 1); the
survival function through bin k is the running product of (1 - h_j).  The
censored negative log-likelihood charges an event at bin n with
-log h_n - log S(n-1) and a censored subject with -log S(n).
"""

from __future__ import annotations

import torch

LOG_FLOOR = 1e-12

# incremented whenever a log argument had to be clamped away from zero;
# reset with reset_clamp_count() before a run you want to audit
_clamp_count = 0


def reset_clamp_count() -> None:
    global _clamp_count
    _clamp_count = 0


def clamp_count() -> int:
    return _clamp_count


def _safe_log(x: torch.Tensor) -> torch.Tensor:
    global _clamp_count
    below = int((x < LOG_FLOOR).sum())
    if below:
        _clamp_count += below
    return torch.log(x.clamp(min=LOG_FLOOR))


def survival_function(h: torch.Tensor, k: int) -> torch.Tensor:
    """Product of (1 - h_j) for j = 1..k; k = 0 is the empty product 1.

    ``h`` may be (n_bins,) or batched (B, n_bins); the result is a scalar or
    (B,) tensor.
    """
    n = h.shape[-1]
    if not 0 <= k <= n:
        raise ValueError(f"k must be in [0, {n}], got {k}")
    if k == 0:
        return torch.ones(h.shape[:-1], dtype=h.dtype, device=h.device)
    return (1.0 - h[..., :k]).prod(dim=-1)


def nll_loss(h: torch.Tensor, bins: torch.Tensor, censored: torch.Tensor) -> torch.Tensor:
    """Censored discrete-time negative log-likelihood, averaged over the batch.

    ``bins`` are 1-based time-bin labels, ``censored`` is 1 for censored
    subjects (i.e. 1 - event flag).  Log arguments are clamped at
    ``LOG_FLOOR``; clamp events are counted (see :func:`clamp_count`).
    """
    if h.dim() == 1:
        h = h.unsqueeze(0)
    bins = torch.as_tensor(bins, device=h.device).reshape(-1).long()
    censored = torch.as_tensor(censored, dtype=h.dtype, device=h.device).reshape(-1)
    n_bins = h.shape[-1]
    if bins.min() < 1 or bins.max() > n_bins:
        raise ValueError(f"bin labels must lie in [1, {n_bins}]")
    # cumulative survival S(k) for k = 0..n_bins, per sample
    one_minus = 1.0 - h
    surv = torch.cumprod(one_minus, dim=-1)
    surv = torch.cat([torch.ones_like(surv[..., :1]), surv], dim=-1)  # S(0)=1
    idx = torch.arange(h.shape[0], device=h.device)
    s_n = surv[idx, bins]
    s_prev = surv[idx, bins - 1]
    h_n = h[idx, bins - 1]
    loss = -censored * _safe_log(s_n) - (1.0 - censored) * (
        _safe_log(h_n) + _safe_log(s_prev)
    )
    return loss.mean()


def total_loss(l_surv: torch.Tensor, l_dis: torch.Tensor, alpha: float) -> torch.Tensor:
    """Total objective: survival NLL plus alpha times the decoupling loss."""
    return l_surv + alpha * l_dis


def risk_score(h: torch.Tensor) -> torch.Tensor:
    """Scalar ranking risk: negative sum of the per-bin survival probabilities.

    Strictly increasing in every hazard; (B, n_bins) input gives (B,) output.
    """
    return -torch.cumprod(1.0 - h, dim=-1).sum(dim=-1)
