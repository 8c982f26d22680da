import numpy as np
import pytest
import torch

from conftest import central_difference_grads, max_rel_err
from survfuse.encoders import AttentionPoolEncoder
from survfuse.errors import DimensionError


def _encoder(c0=4, c1=6, seed=0):
    torch.manual_seed(seed)
    enc = AttentionPoolEncoder(c0, c1).double()
    for p in enc.parameters():
        with torch.no_grad():
            p.copy_(torch.randn_like(p) * 0.3)
    return enc


def test_single_token_output_is_value_of_projection():
    enc = _encoder()
    tokens = torch.randn(1, 4, dtype=torch.float64)
    out = enc(tokens)
    expected = enc.value(enc.token_proj(tokens[0]))
    assert torch.allclose(out, expected)


def test_permutation_invariance():
    enc = _encoder(seed=3)
    tokens = torch.randn(7, 4, dtype=torch.float64)
    out = enc(tokens)
    perm = torch.randperm(7)
    assert torch.allclose(out, enc(tokens[perm]), atol=1e-12, rtol=0)


def test_output_length_matches_default_dim():
    enc = AttentionPoolEncoder(16, 256).double()
    out = enc(torch.randn(5, 16, dtype=torch.float64))
    assert out.shape == (256,)


def test_empty_token_matrix_rejected():
    enc = _encoder()
    with pytest.raises(DimensionError):
        enc(torch.zeros(0, 4, dtype=torch.float64))


def test_batched_matches_single():
    enc = _encoder(seed=5)
    tokens = torch.randn(3, 5, 4, dtype=torch.float64)
    batched = enc(tokens)
    for i in range(3):
        assert torch.allclose(batched[i], enc(tokens[i]))


def test_gradients_match_central_differences():
    enc = _encoder(seed=9)
    tokens = torch.randn(4, 4, dtype=torch.float64)

    def loss():
        return enc(tokens).sum()

    value = loss()
    enc.zero_grad()
    value.backward()
    params = list(enc.parameters())
    numeric = central_difference_grads(loss, params)
    analytic = [p.grad for p in params]
    assert max_rel_err(analytic, numeric) < 1e-4
