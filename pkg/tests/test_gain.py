import math

import numpy as np
import pytest

from adcon.gain import (AssumptionError, GainDesign, LeaderModel,
                        SynthesisError, check_detectability,
                        check_neutral_stability, design_gain, required_mu,
                        riccati_residual, solve_care, stacked_matrix,
                        synthesize_k, verify_stacked_hurwitz)
from adcon.graph import AugmentedSpec, build_augmented_h
from helpers import closed_form_p0_2x2, random_digraph, random_leader

OSC = LeaderModel(A=[[0.0, 1.0], [-1.0, 0.0]], C=[1.0, 0.0], x0_init=[1.0, -1.0])


class TestNeutralStability:
    def test_rotation_accepted(self):
        check_neutral_stability(OSC.A)

    def test_zero_matrix_accepted(self):
        check_neutral_stability(np.zeros((2, 2)))  # semi-simple double zero

    def test_jordan_block_rejected(self):
        with pytest.raises(AssumptionError, match="semi-simple"):
            check_neutral_stability(np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_stable_pole_rejected(self):
        with pytest.raises(AssumptionError, match="zero real part"):
            check_neutral_stability(np.array([[-1.0]]))


class TestDetectability:
    def test_oscillator_ok(self):
        check_detectability(OSC.A, OSC.C)

    def test_duplicate_frequency_single_output_fails(self):
        blk = np.array([[0.0, 1.0], [-1.0, 0.0]])
        a = np.block([[blk, np.zeros((2, 2))], [np.zeros((2, 2)), blk]])
        with pytest.raises(AssumptionError, match="not detectable"):
            check_detectability(a, np.array([1.0, 0.0, 1.0, 0.0]))


class TestSolveCare:
    def test_scalar_integrator(self):
        leader = LeaderModel(A=[[0.0]], C=[1.0], x0_init=[0.0])
        p0 = solve_care(leader)
        assert p0[0, 0] == pytest.approx(1.0, abs=1e-12)

    def test_scalar_stable(self):
        # -2p + 1 - p^2 = 0 with p > 0
        leader = LeaderModel(A=[[-1.0]], C=[1.0], x0_init=[0.0])
        p0 = solve_care(leader)
        assert p0[0, 0] == pytest.approx(math.sqrt(2.0) - 1.0, abs=1e-12)

    def test_oscillator_closed_form(self):
        p0 = solve_care(OSC)
        assert np.abs(p0 - closed_form_p0_2x2()).max() < 1e-9

    def test_residual_invariant_random_leaders(self):
        rng = np.random.default_rng(1)
        for _ in range(25):
            leader = random_leader(rng, int(rng.choice([1, 2, 4])))
            p0 = solve_care(leader)
            assert riccati_residual(p0, leader.A, leader.C) <= 1e-8
            assert np.abs(p0 - p0.T).max() <= 1e-12
            assert np.linalg.eigvalsh(p0).min() > 0

    def test_undetectable_pair_raises(self):
        blk = np.array([[0.0, 1.0], [-1.0, 0.0]])
        a = np.block([[blk, np.zeros((2, 2))], [np.zeros((2, 2)), blk]])
        leader = LeaderModel(A=a, C=[1.0, 0.0, 1.0, 0.0], x0_init=np.zeros(4))
        with pytest.raises((AssumptionError, SynthesisError), match="detect"):
            solve_care(leader)


class TestSynthesizeK:
    def test_reproduces_published_gain(self):
        p0 = solve_care(OSC)
        k = synthesize_k(p0, OSC.C, 12.8)
        assert np.abs(k - np.array([17.3081, 5.3019])).max() < 5e-4

    def test_below_bound_rejected_with_minimum(self):
        p0 = solve_care(OSC)
        with pytest.raises(SynthesisError, match="1"):
            synthesize_k(p0, OSC.C, 0.0, mu_min=1.0)

    def test_scalar(self):
        k = synthesize_k(np.array([[1.0]]), [1.0], 2.0)
        assert np.array_equal(k, [2.0])


class TestVerifyStackedHurwitz:
    def test_hand_block(self):
        leader = LeaderModel(A=[[0.0]], C=[1.0], x0_init=[0.0])
        h_aug = np.array([[1.0, -1.0], [0.0, 1.0]])
        big = stacked_matrix(leader, [2.0], h_aug)
        assert np.array_equal(big, np.array([[-2.0, 2.0], [0.0, -2.0]]))
        report = verify_stacked_hurwitz(leader, [2.0], h_aug)
        assert report.spectral_abscissa == pytest.approx(-2.0, abs=1e-12)
        assert report.consistent

    def test_zero_gain_keeps_neutral_spectrum(self):
        h_aug = np.array([[1.0, -1.0], [0.0, 1.0]])
        report = verify_stacked_hurwitz(OSC, [0.0, 0.0], h_aug)
        assert report.spectral_abscissa == pytest.approx(0.0, abs=1e-9)
        assert report.consistent  # both routes agree it is not contracting

    def test_paper_design_contracts(self):
        p0 = solve_care(OSC)
        k = synthesize_k(p0, OSC.C, 12.8)
        orders = AugmentedSpec((2, 2, 2, 1, 1))
        edges = [(i, i + 1, 1.0) for i in range(5)]
        from adcon.graph import DiGraph
        h_aug = build_augmented_h(DiGraph.from_edges(5, edges), orders)
        report = verify_stacked_hurwitz(OSC, k, h_aug)
        assert report.spectral_abscissa < 0
        assert report.dimension == 2 * orders.dimension

    def test_single_first_order_agent_contracts(self):
        # smallest nontrivial bank: one first-order agent on a leader link
        from adcon.graph import DiGraph
        p0 = solve_care(OSC)
        k = synthesize_k(p0, OSC.C, 12.8)
        h_aug = build_augmented_h(DiGraph.from_edges(1, [(0, 1, 1.0)]),
                                  AugmentedSpec((1,)))
        report = verify_stacked_hurwitz(OSC, k, h_aug)
        assert report.dimension == 4
        assert report.spectral_abscissa < 0
        assert report.consistent

    def test_dimension_mismatch(self):
        with pytest.raises(SynthesisError, match="dimension"):
            verify_stacked_hurwitz(OSC, [1.0], np.eye(2))


def test_contraction_holds_at_and_above_the_bound():
    # random designs stay contracting whenever mu clears the spectral bound,
    # including right at it
    rng = np.random.default_rng(7)
    for trial in range(40):
        nu = int(rng.choice([1, 2, 4]))
        n = int(rng.integers(1, 6))
        leader = random_leader(rng, nu)
        g = random_digraph(rng, n, extra_edge_prob=0.3)
        orders = AugmentedSpec(tuple(int(rng.integers(1, 4)) for _ in range(n)))
        h_aug = build_augmented_h(g, orders)
        p0 = solve_care(leader)
        mu = required_mu(h_aug) * (1.0 if trial % 4 == 0 else rng.uniform(1.0, 2.5))
        k = synthesize_k(p0, leader.C, mu)
        report = verify_stacked_hurwitz(leader, k, h_aug)
        assert report.spectral_abscissa < 0
        assert report.consistent


def test_kronecker_spectrum_consistency():
    # the stacked spectrum equals the union over coupling eigenvalues of the
    # per-block spectra; instances are filtered for a separated coupling
    # spectrum because a defective one makes the direct eigensolve itself
    # ill-conditioned far beyond the comparison tolerance
    rng = np.random.default_rng(12)
    checked = 0
    while checked < 30:
        nu = int(rng.choice([1, 2]))
        n = int(rng.integers(2, 5))
        leader = random_leader(rng, nu)
        g = random_digraph(rng, n, extra_edge_prob=0.7)
        orders = AugmentedSpec(tuple(int(rng.integers(1, 3)) for _ in range(n)))
        h_aug = build_augmented_h(g, orders)
        lam = np.linalg.eigvals(h_aug)
        gaps = np.abs(lam[:, None] - lam[None, :]) + np.eye(len(lam))
        if gaps.min() < 0.05:
            continue
        p0 = solve_care(leader)
        k = synthesize_k(p0, leader.C, required_mu(h_aug) * 1.4)
        big = stacked_matrix(leader, k, h_aug)
        direct = np.linalg.eigvals(big)
        kc = np.outer(k, leader.C)
        union = np.concatenate(
            [np.linalg.eigvals(leader.A - lam_i * kc) for lam_i in lam])
        # nearest matching; plain sorting reorders conjugate pairs with
        # nearly-equal real parts
        scale = 1.0 + np.abs(direct).max()
        used = np.zeros(len(union), dtype=bool)
        worst = 0.0
        for z in direct:
            dist = np.where(used, np.inf, np.abs(union - z))
            j = int(np.argmin(dist))
            worst = max(worst, float(dist[j]))
            used[j] = True
        assert worst <= 1e-8 * scale
        checked += 1


def test_design_gain_pipeline():
    orders = AugmentedSpec((2, 2, 2, 1, 1))
    from adcon.graph import DiGraph
    h_aug = build_augmented_h(
        DiGraph.from_edges(5, [(i, i + 1, 1.0) for i in range(5)]), orders)
    design = design_gain(OSC, h_aug, mu=12.8)
    assert design.riccati_residual <= 1e-8
    assert design.spectral_abscissa < 0
    assert design.mu_min == pytest.approx(1.0)
    # automatic mu applies the documented 5% margin
    auto = design_gain(OSC, h_aug)
    assert auto.mu == pytest.approx(1.05)


def test_gain_design_invariants_enforced():
    with pytest.raises(SynthesisError, match="residual"):
        GainDesign(P0=np.eye(2), mu=1.0, K=np.ones(2), spectral_abscissa=-1.0,
                   riccati_residual=1.0, mu_min=1.0)
    p0 = solve_care(OSC)
    with pytest.raises(SynthesisError, match="Hurwitz"):
        GainDesign(P0=p0, mu=12.8, K=synthesize_k(p0, OSC.C, 12.8),
                   spectral_abscissa=0.5,
                   riccati_residual=riccati_residual(p0, OSC.A, OSC.C),
                   mu_min=1.0)
