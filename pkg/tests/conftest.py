import numpy as np
import pytest
import torch

from survfuse.data import SynthConfig, assign_time_bins, generate_synthetic_cohort

torch.set_default_dtype(torch.float64)


@pytest.fixture(scope="session")
def small_cohort():
    cfg = SynthConfig(n_patients=24, i1=3, i2=3, c0=5, seed=7)
    return assign_time_bins(generate_synthetic_cohort(cfg), 4)


def brute_force_cindex(risks, times, events):
    """Independent O(N^2) pair-counting oracle for Harrell's C."""
    concordant = ties = comparable = 0
    n = len(risks)
    for i in range(n):
        for j in range(n):
            if times[i] < times[j] and events[i] == 1:
                comparable += 1
                if risks[i] > risks[j]:
                    concordant += 1
                elif risks[i] == risks[j]:
                    ties += 1
    if comparable == 0:
        return None
    return (concordant + 0.5 * ties) / comparable


def central_difference_grads(fn, params, step=1e-5):
    """Central-difference gradient of scalar fn() w.r.t. a list of tensors.

    Mutates each tensor entry in place under no_grad, matching the analytic
    gradient layout.
    """
    grads = []
    for p in params:
        flat = p.detach().reshape(-1)
        g = torch.zeros_like(flat)
        for i in range(flat.numel()):
            orig = float(flat[i])
            with torch.no_grad():
                flat[i] = orig + step
                plus = float(fn())
                flat[i] = orig - step
                minus = float(fn())
                flat[i] = orig
            g[i] = (plus - minus) / (2 * step)
        grads.append(g.reshape(p.shape))
    return grads


def max_rel_err(analytic, numeric, floor=1e-6):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = torch.maximum(torch.maximum(a.abs(), n.abs()), torch.full_like(a, floor))
        worst = max(worst, float(((a - n).abs() / denom).max()))
    return worst
