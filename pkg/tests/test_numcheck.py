import numpy as np
import pytest

from dcloss.losses import LossSpec, kl_loss, loss_from_logits, softmax
from dcloss.numcheck import NonFiniteEvaluation, check, finite_diff_grad, random_case, reference_loss


def test_quadratic():
    g = finite_diff_grad(lambda z: float(np.sum(z * z)), [1.0, 2.0])
    np.testing.assert_allclose(g, [2.0, 4.0], atol=1e-8)


def test_kl_minimum_has_zero_gradient():
    z = np.array([0.3, -1.2, 2.0, 0.1])
    q = softmax(z)
    g = finite_diff_grad(lambda v: kl_loss(softmax(v), q).value, z)
    np.testing.assert_allclose(g, 0.0, atol=1e-9)


def test_rejects_bad_step():
    with pytest.raises(ValueError):
        finite_diff_grad(lambda z: 0.0, [1.0], h=0.0)


def test_non_finite_reports_coordinate():
    def f(z):
        return np.inf if z[2] > 0.5 else float(z.sum())

    with pytest.raises(NonFiniteEvaluation) as err:
        finite_diff_grad(f, [0.0, 0.0, 0.5 - 1e-7])
    assert err.value.index == 2


@pytest.mark.parametrize("kind", ["dc", "kl", "ce", "ce_mv"])
def test_check_passes(kind):
    rep = check(LossSpec(kind, alpha=0.1), trials=100, tol=1e-5, seed=7)
    assert rep.passed and rep.max_rel_err < 1e-5 and rep.max_abs_err >= 0


def test_zero_tolerance_fails():
    assert not check(LossSpec("dc"), trials=5, tol=0.0, seed=7).passed


def test_deterministic():
    a = check(LossSpec("dc", alpha=0.3), trials=20, seed=11)
    b = check(LossSpec("dc", alpha=0.3), trials=20, seed=11)
    assert a == b


@pytest.mark.parametrize("kind", ["dc", "kl", "ce", "ce_mv"])
@pytest.mark.parametrize("h", [1e-4, 5e-5, 2e-5, 1e-5, 5e-6, 2e-6, 1e-6])
def test_step_halving_keeps_passing(kind, h):
    assert check(LossSpec(kind, alpha=0.1), trials=30, tol=1e-5, seed=3, h=h).passed


@pytest.mark.parametrize("kind", ["dc", "kl", "ce", "ce_mv"])
def test_reference_agrees_with_float64_losses(kind, rng):
    spec = LossSpec(kind, alpha=0.3)
    for _ in range(20):
        z, q, y = random_case(rng, 12)
        target = q if spec.uses_distribution else y
        ref = float(reference_loss(spec, z, target))
        assert ref == pytest.approx(loss_from_logits(z, target, spec).value, rel=1e-12, abs=1e-15)


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("kind", ["kl", "ce_mv"])
def test_check_not_seed_sensitive(kind, seed):
    assert check(LossSpec(kind), trials=30, tol=1e-5, seed=seed).max_rel_err < 1e-6


def test_trials_must_be_positive():
    with pytest.raises(ValueError):
        check(LossSpec("dc"), trials=0)
