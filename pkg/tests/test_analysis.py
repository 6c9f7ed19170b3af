import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qbcsim.analysis import (
    AnalysisConfig,
    DiscriminationInstance,
    ReducedStateMismatch,
    achieved_overlap,
    check_concealment_bound,
    cheat_unitary,
    distinguishing_error,
    measurement_error,
    optimal_projector,
    reduced_fidelity,
    schmidt_decompose,
    schmidt_reconstruction_error,
    uhlmann_unitary,
)
from qbcsim.oneway import gen_family
from qbcsim.qstate import (
    PAULI_X,
    Basis,
    DensityMatrix,
    StateVector,
    UnitaryOp,
    apply_unitary,
    bb84_state,
    fidelity,
    partial_trace,
    random_density,
    random_state,
    random_unitary,
    tensor,
    trace_distance,
)

import oracles

S = 1 / np.sqrt(2)
AB = (["a"], ["b"])


def bell(a=(0, 0), b=(1, 1)):
    amps = np.zeros(4)
    amps[2 * a[0] + a[1]] = S
    amps[2 * b[0] + b[1]] = S
    return StateVector.from_amplitudes([("a", 1), ("b", 1)], amps)


def pure(v):
    v = np.asarray(v, dtype=complex)
    return DensityMatrix(np.outer(v, v.conj()))


class TestSchmidt:
    def test_product_state(self):
        s = tensor(bb84_state(0, 0, "a"), bb84_state(1, 0, "b"))
        dec = schmidt_decompose(s, AB)
        np.testing.assert_allclose(dec.coefficients, [1.0], atol=1e-12)

    def test_bell_state(self):
        dec = schmidt_decompose(bell(), AB)
        np.testing.assert_allclose(dec.coefficients, [0.5, 0.5], atol=1e-12)
        assert schmidt_reconstruction_error(bell(), dec) <= 1e-12

    @pytest.mark.parametrize("theta", [0, 1])
    def test_post_commit_gamma(self, theta):
        n = 2
        fam = gen_family(n, 5)
        y = 2
        w0 = int(np.flatnonzero(fam.tables[2 * theta] == y)[0])
        w1 = int(np.flatnonzero(fam.tables[2 * theta + 1] == y)[0])
        amps = sum(
            np.kron(
                np.kron(oracles.word_ket(w, n), oracles.word_ket(y, n)),
                np.kron(oracles.basis_ket(theta, z), oracles.basis_ket(theta, z)),
            )
            for w, z in ((w0, 0), (w1, 1))
        ) * S
        s = StateVector.from_amplitudes([("r_w", n), ("r_f", n), ("rA_z", 1), ("rB_z", 1)], amps)
        # by hand: rB_z sees |z>_theta with weight 1/2 each and no coherence, so rho_B = I/2
        m = amps.reshape(-1, 2)
        np.testing.assert_allclose(m.T @ m.conj(), np.eye(2) / 2, atol=1e-12)
        dec = schmidt_decompose(s, (["r_w", "r_f", "rA_z"], ["rB_z"]))
        np.testing.assert_allclose(dec.coefficients, [0.5, 0.5], atol=1e-12)

    def test_bipartition_must_cover(self, rng):
        s = random_state([("a", 1), ("b", 1), ("c", 1)], rng)
        with pytest.raises(ValueError):
            schmidt_decompose(s, (["a"], ["b"]))
        with pytest.raises(ValueError):
            schmidt_decompose(s, ([], ["a", "b", "c"]))

    @given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.integers(1, 4))
    @settings(max_examples=80, deadline=None)
    def test_invariants(self, seed, wa, wb):
        s = random_state([("a", wa), ("b", wb)], np.random.default_rng(seed))
        dec = schmidt_decompose(s, AB)
        assert abs(dec.coefficients.sum() - 1) <= 1e-9
        assert np.all(np.diff(dec.coefficients) <= 1e-15)
        for vecs in (dec.a_vectors, dec.b_vectors):
            np.testing.assert_allclose(vecs.conj().T @ vecs, np.eye(dec.rank), atol=1e-9)
        assert schmidt_reconstruction_error(s, dec) <= 1e-9
        for side in ("a", "b"):
            spec = np.sort(partial_trace(s, [side]).eigenvalues())[::-1][: dec.rank]
            np.testing.assert_allclose(spec, dec.coefficients, atol=1e-9)

    def test_reversed_register_order(self, rng):
        s = random_state([("a", 2), ("b", 1)], rng)
        dec = schmidt_decompose(s, (["b"], ["a"]))
        assert schmidt_reconstruction_error(s, dec) <= 1e-9

    def test_degenerate_spectrum_reconstructs(self, rng):
        # maximally entangled 4x4 state rotated locally: all coefficients equal
        base = np.eye(4).reshape(-1) / 2
        s = StateVector.from_amplitudes([("a", 2), ("b", 2)], base)
        s = apply_unitary(s, random_unitary(4, rng), ["a"])
        dec = schmidt_decompose(s, AB)
        np.testing.assert_allclose(dec.coefficients, [0.25] * 4, atol=1e-12)
        assert schmidt_reconstruction_error(s, dec) <= 1e-9


class TestCheatUnitary:
    def test_bell_to_flipped_bell(self):
        phi0 = bell((0, 0), (1, 1))
        phi1 = bell((1, 0), (0, 1))
        u = cheat_unitary(phi0, phi1, AB)
        moved = apply_unitary(phi0, u, ["a"])
        np.testing.assert_allclose(moved.amplitudes, phi1.amplitudes, atol=1e-12)
        # on the support the map is the bit flip
        np.testing.assert_allclose(u.matrix, PAULI_X, atol=1e-12)

    def test_same_state(self, rng):
        s = random_state([("a", 2), ("b", 1)], rng)
        u = cheat_unitary(s, s, AB)
        assert achieved_overlap(s, u, s) >= 1 - 1e-9

    def test_random_witnesses(self, rng):
        for k in range(50):
            wa, wb = 1 + k % 3, 1 + (k // 3) % 3
            phi0 = random_state([("a", wa), ("b", wb)], rng)
            v = random_unitary(2**wa, rng)
            phi1 = apply_unitary(phi0, v, ["a"])
            u = cheat_unitary(phi0, phi1, AB)
            np.testing.assert_allclose(u.matrix.conj().T @ u.matrix, np.eye(2**wa), atol=1e-9)
            assert achieved_overlap(phi0, u, phi1) >= 1 - 1e-9

    def test_mismatch_rejected(self):
        phi0 = tensor(bb84_state(0, 0, "a"), bb84_state(0, 0, "b"))
        phi1 = tensor(bb84_state(0, 0, "a"), bb84_state(0, 1, "b"))
        with pytest.raises(ReducedStateMismatch):
            cheat_unitary(phi0, phi1, AB)

    def test_low_rank_support(self, rng):
        # side A wider than B, so the completion off the support matters
        phi0 = random_state([("a", 3), ("b", 1)], rng)
        phi1 = apply_unitary(phi0, random_unitary(8, rng), ["a"])
        u = cheat_unitary(phi0, phi1, AB)
        assert achieved_overlap(phi0, u, phi1) >= 1 - 1e-9


class TestUhlmann:
    def test_equal_reductions(self, rng):
        psi0 = random_state([("a", 1), ("b", 2)], rng)
        phi1 = apply_unitary(psi0, random_unitary(2, rng), ["a"])
        u, overlap = uhlmann_unitary(psi0, phi1, AB)
        assert overlap == pytest.approx(1.0, abs=1e-7)
        assert achieved_overlap(psi0, u, phi1) == pytest.approx(1.0, abs=1e-7)

    def test_orthogonal_supports(self):
        psi0 = tensor(bb84_state(1, 0, "a"), bb84_state(0, 0, "b"))
        phi1 = tensor(bb84_state(0, 1, "a"), bb84_state(0, 1, "b"))
        u, overlap = uhlmann_unitary(psi0, phi1, AB)
        assert overlap == pytest.approx(0.0, abs=1e-7)
        assert achieved_overlap(psi0, u, phi1) == pytest.approx(0.0, abs=1e-7)

    def test_matches_fidelity(self, rng):
        for _ in range(50):
            psi0 = random_state([("a", 2), ("b", 2)], rng)
            phi1 = random_state([("a", 2), ("b", 2)], rng)
            u, overlap = uhlmann_unitary(psi0, phi1, AB)
            f = reduced_fidelity(psi0, phi1, ["b"])
            got = achieved_overlap(psi0, u, phi1)
            assert got == pytest.approx(overlap, abs=1e-9)
            assert abs(got - f) <= 1e-6
            assert got <= f + 1e-7

    def test_brute_force_oracle(self, rng):
        for _ in range(6):
            psi0 = random_state([("a", 1), ("b", 1)], rng)
            phi1 = random_state([("a", 1), ("b", 1)], rng)
            _, overlap = uhlmann_unitary(psi0, phi1, AB)
            m0 = psi0.amplitudes.reshape(2, 2)
            m1 = phi1.amplitudes.reshape(2, 2)
            assert abs(overlap - oracles.brute_force_overlap(m0, m1)) <= 1e-4

    def test_random_unitaries_never_beat_it(self, rng):
        psi0 = random_state([("a", 1), ("b", 2)], rng)
        phi1 = random_state([("a", 1), ("b", 2)], rng)
        _, overlap = uhlmann_unitary(psi0, phi1, AB)
        for _ in range(200):
            v = random_unitary(2, rng)
            assert achieved_overlap(psi0, UnitaryOp(v.matrix, ("a",)), phi1) <= overlap + 1e-9


class TestDistinguishingError:
    @pytest.mark.parametrize("prior0", [0.5, 0.2, 0.9])
    def test_identical_states(self, rng, prior0):
        r = random_density(2, rng)
        pe = distinguishing_error(DiscriminationInstance(r, r, prior0))
        assert pe == pytest.approx(min(prior0, 1 - prior0), abs=1e-9)

    def test_orthogonal(self):
        inst = DiscriminationInstance(pure([1, 0]), pure([0, 1]))
        assert distinguishing_error(inst) == pytest.approx(0.0, abs=1e-9)

    def test_zero_vs_plus(self):
        inst = DiscriminationInstance(pure([1, 0]), pure([S, S]))
        brute = oracles.brute_force_discrimination(inst.rho0.matrix, inst.rho1.matrix, 0.5)
        assert brute == pytest.approx((1 - S) / 2, abs=1e-6)
        assert distinguishing_error(inst) == pytest.approx(brute, abs=1e-6)
        assert distinguishing_error(inst) == pytest.approx((1 - S) / 2, abs=1e-9)

    def test_oracle_agreement(self, rng):
        for k in range(12):
            prior0 = (0.5, 0.3, 0.8)[k % 3]
            inst = DiscriminationInstance(random_density(2, rng), random_density(2, rng), prior0)
            brute = oracles.brute_force_discrimination(inst.rho0.matrix, inst.rho1.matrix, prior0, grid=31)
            assert abs(brute - distinguishing_error(inst)) <= 1e-4
            assert distinguishing_error(inst) <= brute + 1e-9

    def test_projector_attains_error(self, rng):
        for _ in range(20):
            inst = DiscriminationInstance(random_density(4, rng), random_density(4, rng), 0.4)
            p = optimal_projector(inst)
            assert measurement_error(inst, p) == pytest.approx(distinguishing_error(inst), abs=1e-9)

    def test_equal_priors_relation(self, rng):
        for _ in range(20):
            a, b = random_density(4, rng), random_density(4, rng)
            pe = distinguishing_error(DiscriminationInstance(a, b))
            assert pe == pytest.approx((1 - trace_distance(a, b)) / 2, abs=1e-9)

    def test_bad_inputs(self, rng):
        with pytest.raises(ValueError):
            DiscriminationInstance(random_density(2, rng), random_density(2, rng), 1.5)
        with pytest.raises(ValueError):
            DiscriminationInstance(random_density(2, rng), random_density(4, rng))

    def test_monotone_along_interpolation(self):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            a, b = random_density(4, rng), random_density(4, rng)
            errors = []
            for t in np.linspace(0, 1, 11):
                mid = DensityMatrix((1 - t) * a.matrix + t * b.matrix)
                errors.append(distinguishing_error(DiscriminationInstance(a, mid)))
            assert errors[0] == pytest.approx(0.5, abs=1e-12)
            assert np.all(np.diff(errors) <= 1e-12)
            assert errors[-1] < 0.5


class TestConcealmentBound:
    def test_equal_states(self, rng):
        r = random_density(2, rng)
        for alpha, n in ((0.5, 4), (2.0, 10), (1.0, 1)):
            assert check_concealment_bound(DiscriminationInstance(r, r), AnalysisConfig(alpha, n))

    def test_orthogonal_states(self):
        inst = DiscriminationInstance(pure([1, 0]), pure([0, 1]))
        assert not check_concealment_bound(inst, AnalysisConfig(1.0, 10))

    def test_threshold(self, rng):
        cfg = AnalysisConfig(1.0, 4)
        for _ in range(40):
            a = random_density(2, rng)
            mix = rng.uniform(0, 0.3)
            b = DensityMatrix((1 - mix) * a.matrix + mix * random_density(2, rng).matrix)
            d = trace_distance(a, b)
            if abs(d / 2 - cfg.bound) < 1e-9:
                continue
            assert check_concealment_bound(DiscriminationInstance(a, b), cfg) == (d / 2 <= cfg.bound)

    @pytest.mark.parametrize("alpha,n", [(0, 3), (-1, 3), (1.0, 0), (1e-300, 1)])
    def test_config_validation(self, alpha, n):
        with pytest.raises(ValueError):
            AnalysisConfig(alpha, n)

    def test_bb84_mixtures_conceal(self):
        # the per-basis mixtures are equal, so Bob has no edge at any security level
        plus = DensityMatrix.mixture([0.5, 0.5], [bb84_state(0, 0), bb84_state(0, 1)])
        cross = DensityMatrix.mixture([0.5, 0.5], [bb84_state(1, 0), bb84_state(1, 1)])
        assert check_concealment_bound(DiscriminationInstance(plus, cross), AnalysisConfig(3.0, 10))


def test_fidelity_chain(rng):
    # small discrimination gap forces high reduced fidelity, hence a good switch
    for _ in range(20):
        psi0 = random_state([("a", 2), ("b", 1)], rng)
        phi1 = random_state([("a", 2), ("b", 1)], rng)
        r0, r1 = partial_trace(psi0, ["b"]), partial_trace(phi1, ["b"])
        gap = 0.5 - distinguishing_error(DiscriminationInstance(r0, r1))
        _, overlap = uhlmann_unitary(psi0, phi1, AB)
        assert overlap >= 1 - 2 * gap - 1e-7
        assert overlap == pytest.approx(fidelity(r0, r1), abs=1e-6)
