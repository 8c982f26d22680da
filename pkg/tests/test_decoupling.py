import math

import pytest
import torch

from conftest import central_difference_grads, max_rel_err
from survfuse.decoupling import (
    DecoupledBundle,
    DistanceMetric,
    RegionalCrossAttention,
    SpecificHead,
    column_softmax,
    decoupling_loss,
    distance,
)


def _const_rca(c1, c2, fill=1.0):
    rca = RegionalCrossAttention(c1, c2).double()
    with torch.no_grad():
        rca.fc1.weight.fill_(fill)
        rca.fc1.bias.zero_()
        rca.fc2.weight.fill_(fill)
        rca.fc2.bias.zero_()
    return rca


class TestSpecificHead:
    def test_zero_params_give_zero_output(self):
        head = SpecificHead(4, 3).double()
        with torch.no_grad():
            head.fc.weight.zero_()
            head.fc.bias.zero_()
        assert torch.equal(head(torch.randn(4, dtype=torch.float64)), torch.zeros(3))

    def test_output_length_matches_default_config(self):
        head = SpecificHead(256, 128).double()
        assert head(torch.randn(256, dtype=torch.float64)).shape == (128,)

    def test_gradient_matches_central_differences(self):
        torch.manual_seed(0)
        head = SpecificHead(5, 4).double()
        v = torch.randn(5, dtype=torch.float64)

        def loss():
            return (head(v) ** 2).sum()

        loss().backward()
        params = list(head.parameters())
        numeric = central_difference_grads(loss, params)
        assert max_rel_err([p.grad for p in params], numeric) < 1e-4


class TestRegionalCrossAttention:
    def test_zero_embeddings_give_zero_output(self):
        rca = _const_rca(3, 2, fill=0.0)
        out = rca(torch.randn(3, dtype=torch.float64), torch.randn(3, dtype=torch.float64))
        assert torch.equal(out, torch.zeros(2, dtype=torch.float64))

    def test_equal_embeddings_collapse_branches(self):
        rca = RegionalCrossAttention(4, 4).double()
        with torch.no_grad():
            rca.fc1.weight.copy_(torch.eye(4))
            rca.fc1.bias.zero_()
            rca.fc2.weight.copy_(torch.eye(4))
            rca.fc2.bias.zero_()
        v = torch.tensor([0.3, -1.2, 0.8, 0.1], dtype=torch.float64)
        out = rca(v, v)
        # with v1 = v2 all four sub-blocks equal vv^T, so both branches agree
        d = 4
        m = torch.outer(torch.cat([v, v]), torch.cat([v, v]))
        attn = column_softmax(torch.cat([m[:d, :d], m[d:, :d]], dim=0))
        branch_a = torch.cat([v, v]) @ attn
        assert torch.allclose(out, branch_a, atol=1e-12)

    def test_hand_fixture_d1(self):
        # v1=1, v2=2 with identity FC: M=[[2,1],[4,2]],
        # A=(e^2+2e^4)/(e^2+e^4), B=(2e^2+e)/(e^2+e), out=(A+B)/2
        rca = _const_rca(1, 1)
        out = rca(torch.tensor([1.0], dtype=torch.float64),
                  torch.tensor([2.0], dtype=torch.float64))
        e = math.e
        a = (1 * e**2 + 2 * e**4) / (e**2 + e**4)
        b = (2 * e**2 + 1 * e) / (e**2 + e)
        assert abs(float(out.detach()) - (a + b) / 2) < 1e-9
        assert abs(float(out.detach()) - 1.8059278) < 1e-6

    def test_column_softmax_columns_sum_to_one(self):
        m = torch.randn(10, 4, dtype=torch.float64) * 5
        sums = column_softmax(m).sum(dim=0)
        assert torch.allclose(sums, torch.ones(4, dtype=torch.float64), atol=1e-12)

    def test_output_length_is_c2_and_deterministic(self):
        torch.manual_seed(1)
        rca = RegionalCrossAttention(6, 3).double()
        v1 = torch.randn(6, dtype=torch.float64)
        v2 = torch.randn(6, dtype=torch.float64)
        out = rca(v1, v2)
        assert out.shape == (3,)
        assert torch.equal(out, rca(v1, v2))

    def test_share_and_explore_params_are_independent(self):
        torch.manual_seed(2)
        share = RegionalCrossAttention(4, 3).double()
        explore = RegionalCrossAttention(4, 3).double()
        v1 = torch.randn(4, dtype=torch.float64)
        v2 = torch.randn(4, dtype=torch.float64)
        before = explore(v1, v2).detach().clone()
        with torch.no_grad():
            share.fc1.weight.add_(1.0)
        assert torch.equal(explore(v1, v2), before)

    def test_gradients_match_central_differences(self):
        torch.manual_seed(4)
        rca = RegionalCrossAttention(5, 3).double()
        v1 = torch.randn(5, dtype=torch.float64)
        v2 = torch.randn(5, dtype=torch.float64)

        def loss():
            return (rca(v1, v2) ** 2).sum()

        loss().backward()
        params = list(rca.parameters())
        numeric = central_difference_grads(loss, params)
        assert max_rel_err([p.grad for p in params], numeric) < 1e-4


class TestDistance:
    @pytest.mark.parametrize("metric", list(DistanceMetric))
    def test_identity_is_zero(self, metric):
        u = torch.tensor([0.4, -1.0, 2.0], dtype=torch.float64)
        assert float(distance(u, u, metric)) == pytest.approx(0.0, abs=1e-12)

    def test_mse_mean_convention(self):
        u = torch.tensor([0.0, 0.0], dtype=torch.float64)
        v = torch.tensor([1.0, 1.0], dtype=torch.float64)
        assert float(distance(u, v, "mse")) == 1.0

    def test_cosine_of_orthogonal_vectors(self):
        u = torch.tensor([1.0, 0.0], dtype=torch.float64)
        v = torch.tensor([0.0, 1.0], dtype=torch.float64)
        assert float(distance(u, v, "cos")) == 1.0

    def test_cosine_zero_vector_convention(self):
        u = torch.zeros(2, dtype=torch.float64)
        v = torch.tensor([1.0, 1.0], dtype=torch.float64)
        assert float(distance(u, v, "cos")) == 1.0

    def test_kl_is_symmetric(self):
        u = torch.tensor([0.2, 1.5, -0.3], dtype=torch.float64)
        v = torch.tensor([-1.0, 0.4, 0.9], dtype=torch.float64)
        assert float(distance(u, v, "kl")) == pytest.approx(float(distance(v, u, "kl")))


class TestDecouplingLoss:
    def test_all_equal_vectors_give_zero(self):
        v = torch.tensor([1.0, 2.0], dtype=torch.float64)
        b = DecoupledBundle(sp1=v, sp2=v, share=v, explore=v)
        for metric in DistanceMetric:
            assert float(decoupling_loss(b, metric)) == pytest.approx(0.0, abs=1e-12)

    def test_hand_fixture_mse(self):
        # four attract terms of 0.25 each, zero share-explore term, repel 1
        b = DecoupledBundle(
            sp1=torch.tensor([1.0, 0.0], dtype=torch.float64),
            sp2=torch.tensor([0.0, 1.0], dtype=torch.float64),
            share=torch.tensor([0.5, 0.5], dtype=torch.float64),
            explore=torch.tensor([0.5, 0.5], dtype=torch.float64),
        )
        assert float(decoupling_loss(b, "mse")) == pytest.approx(0.0, abs=1e-12)

    def test_zero_bundle_gives_zero_for_mse_and_l1(self):
        z = torch.zeros(3, dtype=torch.float64)
        b = DecoupledBundle(sp1=z, sp2=z, share=z, explore=z)
        assert float(decoupling_loss(b, "mse")) == 0.0
        assert float(decoupling_loss(b, "l1")) == 0.0

    def test_no_explore_drops_three_terms(self):
        torch.manual_seed(0)
        sp1, sp2, share = (torch.randn(4, dtype=torch.float64) for _ in range(3))
        b = DecoupledBundle(sp1=sp1, sp2=sp2, share=share)
        expected = (
            distance(sp1, share, "mse")
            + distance(sp2, share, "mse")
            - distance(sp1, sp2, "mse")
        )
        assert float(decoupling_loss(b, "mse")) == pytest.approx(float(expected))

    def test_gradients_match_central_differences(self):
        torch.manual_seed(6)
        tensors = [torch.randn(4, dtype=torch.float64, requires_grad=True) for _ in range(4)]

        def loss():
            b = DecoupledBundle(*tensors)
            return decoupling_loss(b, "mse")

        loss().backward()
        numeric = central_difference_grads(loss, tensors)
        assert max_rel_err([t.grad for t in tensors], numeric) < 1e-4
