"""
Unit tests for the distillation loss.

Tests for:
- teacher_probabilities / student_probabilities: closed forms, centering, errors
- distill_loss: pair counts, entropy bound, brute-force oracle, gradients
"""

import math

import pytest
import torch

from distill.losses import (
    cross_entropy,
    distill_loss,
    entropy,
    loss_pairs,
    mean_entropy,
    student_probabilities,
    teacher_probabilities,
)
from geodistill.exceptions import InvalidArgument


def random_probs(generator, views, batch=4, k=3):
    return [torch.softmax(torch.randn(batch, k, generator=generator, dtype=torch.float64), dim=-1) for _ in range(views)]


# ============================================================================
# PROBABILITY TESTS
# ============================================================================

@pytest.mark.unit
class TestProbabilities:
    """Test suite for temperature softmax with centering"""

    def test_equal_logits_uniform(self):
        """Test equal logits give 1/K everywhere"""
        probs = teacher_probabilities(torch.full((2, 5), 3.0, dtype=torch.float64), 0.0, 0.04)

        assert torch.allclose(probs, torch.full((2, 5), 0.2, dtype=torch.float64), atol=1e-12)

    def test_scalar_case(self):
        """Test logits (1, 0) at temperature 0.5 give softmax(2, 0)"""
        probs = teacher_probabilities(torch.tensor([[1.0, 0.0]], dtype=torch.float64), 0.0, 0.5)

        assert probs[0, 0].item() == pytest.approx(0.8808, abs=1e-4)
        assert probs[0, 1].item() == pytest.approx(0.1192, abs=1e-4)

    def test_center_cancels_logits(self):
        """Test centering on the logits themselves gives a uniform row"""
        logits = torch.tensor([[0.3, -1.2, 4.0, 0.0]], dtype=torch.float64)

        probs = teacher_probabilities(logits, logits[0], 0.07)

        assert torch.allclose(probs, torch.full_like(probs, 0.25), atol=1e-12)

    def test_centering_subtracts(self):
        """Test a positive center lowers that prototype's probability"""
        logits = torch.zeros(1, 3, dtype=torch.float64)
        center = torch.tensor([1.0, 0.0, 0.0], dtype=torch.float64)

        probs = teacher_probabilities(logits, center, 1.0)

        assert probs[0, 0] < probs[0, 1]

    def test_student_matches_teacher_without_center(self):
        """Test student softmax equals teacher softmax with zero center"""
        logits = torch.randn(6, 7, generator=torch.Generator().manual_seed(0), dtype=torch.float64)

        assert torch.allclose(student_probabilities(logits, 0.1), teacher_probabilities(logits, 0.0, 0.1))

    def test_rows_sum_to_one(self):
        """Test rows sum to 1 within 1e-9"""
        logits = 10 * torch.randn(32, 64, generator=torch.Generator().manual_seed(1), dtype=torch.float64)

        for probs in (teacher_probabilities(logits, logits.mean(0), 0.04), student_probabilities(logits, 0.1)):
            assert torch.allclose(probs.sum(-1), torch.ones(32, dtype=torch.float64), atol=1e-9)

    @pytest.mark.parametrize('temperature', [0.0, -0.1])
    def test_non_positive_temperature_rejected(self, temperature):
        """Test non-positive temperatures raise InvalidArgument"""
        logits = torch.zeros(1, 2)

        with pytest.raises(InvalidArgument):
            teacher_probabilities(logits, 0.0, temperature)
        with pytest.raises(InvalidArgument):
            student_probabilities(logits, temperature)


# ============================================================================
# LOSS TESTS
# ============================================================================

@pytest.mark.unit
class TestDistillLoss:
    """Test suite for distill_loss"""

    def test_pair_counts(self):
        """Test 2 globals over 8 views give 14 pairs and 3 over 9 give 24"""
        assert len(loss_pairs(2, 8)) == 14
        assert len(loss_pairs(3, 9)) == 24
        assert (0, 0) not in loss_pairs(2, 8)
        assert (1, 1) not in loss_pairs(2, 8)

    def test_equal_distributions_give_teacher_entropy(self):
        """Test P_s = P_t for every pair gives the mean teacher entropy"""
        row = torch.softmax(torch.tensor([[0.5, 1.0, -2.0]], dtype=torch.float64), dim=-1)
        views = [row.clone() for _ in range(8)]

        loss = distill_loss(views[:2], views)

        assert loss.item() == pytest.approx(entropy(row).item(), abs=1e-12)

    def test_one_hot_teacher(self):
        """Test a one-hot teacher reduces each term to -log P_s[j]"""
        teacher = torch.tensor([[0.0, 1.0, 0.0]], dtype=torch.float64)
        student = torch.tensor([[0.2, 0.5, 0.3]], dtype=torch.float64)

        assert cross_entropy(teacher, student).item() == pytest.approx(-math.log(0.5), abs=1e-12)

    def test_brute_force_oracle(self):
        """Test loss equals a direct double-loop summation"""
        generator = torch.Generator().manual_seed(7)
        teacher = random_probs(generator, 2)
        student = random_probs(generator, 8)

        total, count = 0.0, 0
        for g in range(2):
            for v in range(8):
                if v == g:
                    continue
                for b in range(4):
                    total += -sum(teacher[g][b, k].item() * math.log(student[v][b, k].item()) for k in range(3)) / 4
                count += 1

        assert distill_loss(teacher, student).item() == pytest.approx(total / count, abs=1e-9)

    def test_loss_bounded_by_teacher_entropy(self):
        """Test loss >= mean teacher entropy on random instances"""
        generator = torch.Generator().manual_seed(11)
        for _ in range(20):
            teacher = random_probs(generator, 2, k=5)
            student = random_probs(generator, 8, k=5)

            assert distill_loss(teacher, student).item() >= mean_entropy(teacher).item() - 1e-12

    def test_no_gradient_reaches_teacher(self):
        """Test teacher logits receive no gradient"""
        generator = torch.Generator().manual_seed(3)
        teacher_logits = torch.randn(4, 6, generator=generator, dtype=torch.float64, requires_grad=True)
        student_logits = torch.randn(8, 4, 6, generator=generator, dtype=torch.float64, requires_grad=True)

        teacher = [teacher_probabilities(teacher_logits, 0.0, 0.04)] * 2
        student = [student_probabilities(s, 0.1) for s in student_logits]
        distill_loss(teacher, student).backward()

        assert teacher_logits.grad is None or bool((teacher_logits.grad == 0).all())
        assert student_logits.grad is not None

    def test_gradient_matches_finite_differences(self):
        """Test student-logit gradient against central differences in float64"""
        generator = torch.Generator().manual_seed(5)
        for _ in range(20):
            teacher = [p.detach() for p in random_probs(generator, 2, batch=2, k=4)]
            logits = torch.randn(8, 2, 4, generator=generator, dtype=torch.float64, requires_grad=True)

            def loss_fn(x):
                return distill_loss(teacher, [student_probabilities(v, 0.1) for v in x])

            assert torch.autograd.gradcheck(loss_fn, (logits,), eps=1e-6, atol=1e-8, rtol=1e-4)

    def test_too_few_student_views_rejected(self):
        """Test fewer student views than teacher globals raises"""
        generator = torch.Generator().manual_seed(0)

        with pytest.raises(InvalidArgument):
            distill_loss(random_probs(generator, 3), random_probs(generator, 2))

    def test_mean_entropy_of_uniform(self):
        """Test mean entropy of uniform rows is ln K"""
        probs = [torch.full((3, 8), 1 / 8, dtype=torch.float64)] * 2

        assert mean_entropy(probs).item() == pytest.approx(math.log(8), abs=1e-12)
