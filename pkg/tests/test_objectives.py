import numpy as np
import pytest

from conftest import check_loss_grads, random_triple
from kdalign.errors import (BadConfig, BadTemperature, DimMismatch, EmptyQueue)
from kdalign.objectives import (AnchorTriple, Temperatures, combined_loss,
                                dr_distribution, dr_loss, ed_loss, fd_loss,
                                mcl_loss, sd_loss)
from kdalign.tensormath import (cosine_sim, cross_entropy, row_entropies,
                                softmax)


# -- FD ------------------------------------------------------------------

def test_fd_perfect_alignment(rng):
    Z = rng.standard_normal((3, 4))
    rep = fd_loss(AnchorTriple(Z.copy(), rng.standard_normal((3, 4)), Z.copy()))
    assert rep.value == 0.0
    assert np.all(rep.grad_zS_m == 0)


def test_fd_closed_form_single_pair():
    t = AnchorTriple(np.zeros((1, 2)), np.zeros((1, 2)), np.ones((1, 2)))
    rep = fd_loss(t)
    assert rep.value == 2.0
    assert np.array_equal(rep.grad_zS_m, [[-2.0, -2.0]])
    assert np.all(rep.grad_zS_e == 0)


def test_fd_matches_scalar_loop(rng):
    t = random_triple(rng, 3, 4)
    expected = sum(
        sum((t.zS_m[i, d] - t.zT_e[i, d]) ** 2 for d in range(4))
        for i in range(3)) / 3
    assert abs(fd_loss(t).value - expected) < 1e-12


def test_fd_gradcheck(rng):
    for _ in range(5):
        assert check_loss_grads(fd_loss, random_triple(rng, 3, 4)) < 1e-6


def test_fd_shape_mismatch():
    with pytest.raises(DimMismatch):
        AnchorTriple(np.zeros((2, 3)), np.zeros((2, 3)), np.zeros((2, 4)))


# -- ED ------------------------------------------------------------------

def test_ed_zero_at_equality(rng):
    Z = rng.standard_normal((2, 5))
    assert ed_loss(AnchorTriple(Z.copy(), Z.copy(), Z.copy())).value == 0.0


def test_ed_decomposes_into_two_fd_terms(rng):
    t = random_triple(rng, 4, 3)
    swapped = AnchorTriple(t.zS_e, t.zS_e, t.zT_e)
    assert ed_loss(t).value == pytest.approx(
        fd_loss(t).value + fd_loss(swapped).value, abs=1e-12)


def test_ed_gradcheck(rng):
    for _ in range(5):
        assert check_loss_grads(ed_loss, random_triple(rng, 2, 6)) < 1e-6


# -- SD ------------------------------------------------------------------

def test_sd_uniform_entropy_anchor():
    Z = np.full((3, 4), 0.7)
    rep = sd_loss(AnchorTriple(Z.copy(), Z.copy(), Z.copy()), tau_sd=1.0)
    assert rep.value == pytest.approx(np.log(4))
    assert np.all(rep.grad_zS_e == 0)


def test_sd_bounded_by_teacher_entropy(rng):
    for _ in range(20):
        t = random_triple(rng, 3, 5)
        pT = softmax(t.zT_e, 1.0)
        floor = row_entropies(pT).mean()
        assert sd_loss(t, 1.0).value >= floor - 1e-12


def test_sd_matches_composition_oracle(rng):
    t = random_triple(rng, 2, 3)
    expected = np.mean([
        cross_entropy(softmax(t.zT_e[i], 1.0), softmax(t.zS_m[i], 1.0))
        for i in range(2)])
    assert abs(sd_loss(t, 1.0).value - expected) < 1e-12


def test_sd_gradcheck(rng):
    for tau in (0.5, 1.0, 2.0):
        t = random_triple(rng, 3, 5)
        assert check_loss_grads(lambda tr: sd_loss(tr, tau), t) < 1e-6


def test_sd_bad_temperature(rng):
    with pytest.raises(BadTemperature):
        sd_loss(random_triple(rng, 2, 2), tau_sd=-1.0)


# -- MCL -----------------------------------------------------------------

def test_mcl_single_pair_is_zero(rng):
    t = random_triple(rng, 1, 4)
    assert mcl_loss(t, 0.07).value == 0.0


def test_mcl_nonnegative(rng):
    for _ in range(20):
        assert mcl_loss(random_triple(rng, 4, 3), 0.07).value >= 0.0


def test_mcl_hand_value():
    I = np.eye(2)
    t = AnchorTriple(I.copy(), I.copy(), I.copy())
    expected = np.log(1 + np.exp(-1.0))
    assert mcl_loss(t, tau=1.0).value == pytest.approx(expected, abs=1e-12)


def test_mcl_matches_scalar_oracle(rng):
    t = random_triple(rng, 3, 4)
    tau = 0.3
    total = 0.0
    for Z in (t.zS_e, t.zS_m):
        for i in range(3):
            sims = np.array([cosine_sim(Z[i], t.zT_e[j]) for j in range(3)])
            p = softmax(sims, tau)
            total += -np.log(p[i])
    expected = total / (2 * 3)
    assert abs(mcl_loss(t, tau).value - expected) < 1e-12


def test_mcl_gradcheck(rng):
    for tau in (0.07, 0.5):
        t = random_triple(rng, 3, 4)
        assert check_loss_grads(lambda tr: mcl_loss(tr, tau), t) < 1e-5


def test_mcl_dot_similarity_gradcheck(rng):
    t = random_triple(rng, 3, 4)
    assert check_loss_grads(lambda tr: mcl_loss(tr, 0.5, sim="dot"), t) < 1e-6


# -- DR ------------------------------------------------------------------

def test_dr_distribution_single_key(rng):
    Z = rng.standard_normal((3, 4))
    Q = rng.standard_normal((1, 4))
    assert np.array_equal(dr_distribution(Z, Q, 0.05), np.ones((3, 1)))


def test_dr_distribution_identical_keys(rng):
    Z = rng.standard_normal((2, 4))
    Q = np.tile(rng.standard_normal(4), (5, 1))
    assert np.allclose(dr_distribution(Z, Q, 0.07), 1 / 5)


def test_dr_distribution_scalar_oracle():
    Z = np.array([[1.0, 0.0]])
    Q = np.array([[1.0, 0.0], [0.0, 1.0]])
    row = dr_distribution(Z, Q, tau=0.05)[0]
    e = np.exp(-20.0)
    assert row == pytest.approx([1 / (1 + e), e / (1 + e)], abs=1e-15)


def test_dr_distribution_rows_sum_to_one_sharp(rng):
    Z = rng.standard_normal((4, 3))
    Q = np.vstack([Z * 1.5, rng.standard_normal((4, 3))])  # cosines near +-1
    P = dr_distribution(Z, Q, tau=0.01)
    assert np.allclose(P.sum(axis=1), 1.0, atol=1e-9)


def test_dr_loss_entropy_at_equality(rng):
    Z = rng.standard_normal((3, 4))
    Q = rng.standard_normal((6, 4))
    rep = dr_loss(AnchorTriple(Z.copy(), Z.copy(), Z.copy()), Q, 0.05, 0.05)
    expected = row_entropies(dr_distribution(Z, Q, 0.05)).mean()
    assert rep.value == pytest.approx(expected, abs=1e-12)


def test_dr_loss_point_mass_zero(rng):
    t = random_triple(rng, 1, 3)
    Q = rng.standard_normal((1, 3))
    assert dr_loss(t, Q, 0.05, 0.07).value == pytest.approx(0.0, abs=1e-15)


def test_dr_loss_matches_composition_oracle(rng):
    t = random_triple(rng, 2, 2)
    Q = rng.standard_normal((4, 2))
    pT = dr_distribution(t.zT_e, Q, 0.05)
    pcon = dr_distribution(t.zS_e, Q, 0.07)
    pgen = dr_distribution(t.zS_m, Q, 0.07)
    expected = np.mean([
        (-np.sum(pT[i] * np.log(pcon[i])) - np.sum(pT[i] * np.log(pgen[i]))) / 2
        for i in range(2)])
    assert abs(dr_loss(t, Q, 0.05, 0.07).value - expected) < 1e-12


def test_dr_gradcheck(rng):
    for K in (1, 4, 16):
        t = random_triple(rng, 2, 8)
        Q = rng.standard_normal((K, 8))
        err = check_loss_grads(lambda tr: dr_loss(tr, Q, 0.05, 0.07), t)
        assert err < 1e-5


def test_dr_empty_queue(rng):
    with pytest.raises(EmptyQueue):
        dr_loss(random_triple(rng, 2, 3), np.zeros((0, 3)), 0.05, 0.07)


# -- combined --------------------------------------------------------------

def test_combined_single_component_bit_exact(rng):
    t = random_triple(rng, 3, 4)
    rep = combined_loss(t, None, {"FD": 1.0}, Temperatures())
    ref = fd_loss(t)
    assert rep.value == ref.value
    assert np.array_equal(rep.grad_zS_m, ref.grad_zS_m)
    assert np.array_equal(rep.grad_zS_e, ref.grad_zS_e)


def test_combined_homogeneity(rng):
    t = random_triple(rng, 3, 4)
    one = combined_loss(t, None, {"FD": 1.0})
    two = combined_loss(t, None, {"FD": 2.0})
    assert two.value == pytest.approx(2 * one.value, abs=1e-15)
    assert np.allclose(two.grad_zS_m, 2 * one.grad_zS_m, atol=1e-15)


def test_combined_additivity(rng):
    t = random_triple(rng, 4, 5)
    Q = rng.standard_normal((8, 5))
    both = combined_loss(t, Q, {"DR": 1.0, "FD": 1.0})
    assert both.value == pytest.approx(
        dr_loss(t, Q).value + fd_loss(t).value, abs=1e-12)
    assert both.components == {
        "FD": fd_loss(t).value, "DR": dr_loss(t, Q).value}


def test_combined_dr_requires_queue(rng):
    with pytest.raises(EmptyQueue):
        combined_loss(random_triple(rng, 2, 3), None, {"DR": 1.0})


def test_combined_rejects_bad_weights(rng):
    t = random_triple(rng, 2, 3)
    with pytest.raises(BadConfig):
        combined_loss(t, None, {"FD": 0.0})
    with pytest.raises(BadConfig):
        combined_loss(t, None, {"XX": 1.0})
    with pytest.raises(BadConfig):
        combined_loss(t, None, {"FD": -1.0})


# -- shared properties -----------------------------------------------------

def test_batch_permutation_invariance(rng):
    t = random_triple(rng, 5, 4)
    Q = rng.standard_normal((6, 4))
    perm = rng.permutation(5)
    tp = AnchorTriple(t.zS_m[perm], t.zS_e[perm], t.zT_e[perm])
    for fn in (fd_loss, ed_loss,
               lambda x: sd_loss(x, 1.0),
               lambda x: mcl_loss(x, 0.07),
               lambda x: dr_loss(x, Q, 0.05, 0.07)):
        assert fn(tp).value == pytest.approx(fn(t).value, abs=1e-12)


def test_loss_lower_bounds(rng):
    for _ in range(10):
        t = random_triple(rng, 3, 4)
        Q = rng.standard_normal((5, 4))
        assert fd_loss(t).value >= 0
        assert ed_loss(t).value >= 0
        assert mcl_loss(t, 0.07).value >= 0
        pT = dr_distribution(t.zT_e, Q, 0.05)
        assert dr_loss(t, Q, 0.05, 0.07).value >= \
            row_entropies(pT).mean() - 1e-9
