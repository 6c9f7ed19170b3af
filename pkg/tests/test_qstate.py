import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qbcsim.oneway import gen_family
from qbcsim.qstate import (
    HADAMARD,
    PAULI_X,
    Basis,
    DensityMatrix,
    RegisterMap,
    StateVector,
    UnitaryOp,
    apply_permutation,
    apply_unitary,
    bb84_state,
    fidelity,
    measure,
    measurement_branches,
    outcome_probabilities,
    partial_trace,
    random_density,
    random_state,
    random_unitary,
    tensor,
    trace_distance,
)

import oracles

S = 1 / np.sqrt(2)


class TestRegisterMap:
    def test_big_endian_offsets(self):
        layout = RegisterMap.of(("a", 1), ("b", 2), ("c", 3))
        assert layout.total_width == 6
        assert [layout.qubit_offset(n) for n in "abc"] == [0, 1, 3]
        assert layout.qubits(["b"]) == [1, 2]

    def test_basis_state_index(self):
        s = StateVector.basis_state([("a", 1), ("b", 2)], [1, 2])
        assert np.flatnonzero(s.amplitudes).tolist() == [6]

    @pytest.mark.parametrize("regs", [[("a", 1), ("a", 2)], [("a", 0)], []])
    def test_rejects_bad_layouts(self, regs):
        with pytest.raises(ValueError):
            RegisterMap(tuple(regs))


class TestConstruction:
    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError):
            StateVector.from_amplitudes([("q", 1)], [1, 1])

    def test_density_validation(self):
        with pytest.raises(ValueError):
            DensityMatrix(np.array([[0.5, 0.1], [0.2, 0.5]]))
        with pytest.raises(ValueError):
            DensityMatrix(np.eye(2))
        with pytest.raises(ValueError):
            DensityMatrix(np.diag([1.5, -0.5]))

    def test_unitary_validation(self):
        with pytest.raises(ValueError):
            UnitaryOp(np.array([[1, 1], [0, 1]]))


class TestBB84State:
    @pytest.mark.parametrize(
        "x,z,expected",
        [
            (0, 0, [1, 0]),
            (0, 1, [0, 1]),
            (1, 0, [S, S]),
            (1, 1, [S, -S]),
        ],
    )
    def test_coding_table(self, x, z, expected):
        np.testing.assert_allclose(bb84_state(x, z).amplitudes, expected, atol=1e-15)

    def test_rejects_non_bits(self):
        with pytest.raises(ValueError):
            bb84_state(2, 0)


class TestTensor:
    def test_zero_one(self):
        s = tensor(StateVector.basis_state([("a", 1)], [0]), StateVector.basis_state([("b", 1)], [1]))
        np.testing.assert_allclose(s.amplitudes, [0, 1, 0, 0])
        assert s.layout.names == ["a", "b"]

    def test_plus_zero(self):
        s = tensor(bb84_state(1, 0, "a"), bb84_state(0, 0, "b"))
        np.testing.assert_allclose(s.amplitudes, [S, 0, S, 0], atol=1e-15)

    def test_duplicate_names(self):
        with pytest.raises(ValueError):
            tensor(bb84_state(0, 0, "a"), bb84_state(0, 0, "a"))

    @given(st.integers(1, 3), st.integers(1, 3), st.integers(0, 2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_norm_multiplicative(self, wa, wb, seed):
        rng = np.random.default_rng(seed)
        s = tensor(random_state([("a", wa)], rng), random_state([("b", wb)], rng))
        assert abs(s.norm() - 1) <= 1e-9


class TestApplyUnitary:
    def test_bit_flip(self):
        s = apply_unitary(bb84_state(0, 0), PAULI_X, ["q"])
        np.testing.assert_allclose(s.amplitudes, [0, 1])

    def test_identity(self, rng):
        s = random_state([("a", 2), ("b", 1)], rng)
        out = apply_unitary(s, np.eye(2), ["b"])
        np.testing.assert_allclose(out.amplitudes, s.amplitudes)

    def test_hadamard_twice(self, rng):
        for _ in range(20):
            s = random_state([("a", 1), ("b", 2)], rng)
            out = apply_unitary(apply_unitary(s, HADAMARD, ["a"]), HADAMARD, ["a"])
            np.testing.assert_allclose(out.amplitudes, s.amplitudes, atol=1e-12)

    def test_targets_middle_register(self):
        s = StateVector.basis_state([("a", 1), ("b", 1), ("c", 1)], [0, 0, 1])
        out = apply_unitary(s, PAULI_X, ["b"])
        assert out.branches() == {(0, 1, 1): 1}

    def test_target_order_matters(self):
        # CNOT with control listed first
        cnot = np.eye(4)[[0, 1, 3, 2]]
        s = StateVector.basis_state([("a", 1), ("b", 1)], [0, 1])
        assert apply_unitary(s, cnot, ["b", "a"]).branches() == {(1, 1): 1}
        assert apply_unitary(s, cnot, ["a", "b"]).branches() == {(0, 1): 1}

    def test_dimension_mismatch(self, rng):
        with pytest.raises(ValueError):
            apply_unitary(random_state([("a", 2)], rng), np.eye(2), ["a"])

    def test_matches_explicit_kron(self, rng):
        s = random_state([("a", 1), ("b", 2)], rng)
        u = random_unitary(4, rng)
        expected = np.kron(np.eye(2), u.matrix) @ s.amplitudes
        np.testing.assert_allclose(apply_unitary(s, u, ["b"]).amplitudes, expected, atol=1e-12)

    def test_permutation_matches_dense(self, rng):
        s = random_state([("a", 2), ("b", 1)], rng)
        mapping = rng.permutation(8)
        dense = apply_unitary(s, UnitaryOp.permutation(mapping), ["a", "b"])
        fast = apply_permutation(s, mapping, ["a", "b"])
        np.testing.assert_allclose(fast.amplitudes, dense.amplitudes, atol=1e-14)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_norm_preserved(self, seed):
        rng = np.random.default_rng(seed)
        s = random_state([("a", 2), ("b", 2)], rng)
        target = ["a"] if seed % 2 else ["b"]
        out = apply_unitary(s, random_unitary(4, rng), target)
        assert abs(out.norm() - 1) <= 1e-9


class TestMeasure:
    def test_definite_outcome(self, rng):
        outcome, post, p = measure(bb84_state(0, 1), ["q"], [Basis.RECTILINEAR], rng)
        assert (outcome, p) == ("1", pytest.approx(1.0))
        np.testing.assert_allclose(post.amplitudes, [0, 1])

    def test_diagonal_in_rectilinear_is_fair(self):
        rng = np.random.default_rng(7)
        trials = 10_000
        ones = sum(measure(bb84_state(1, 0), ["q"], [Basis.RECTILINEAR], rng)[0] == "1" for _ in range(trials))
        sigma = np.sqrt(trials * 0.25)
        assert abs(ones - trials / 2) <= 5 * sigma

    def test_diagonal_post_state(self, rng):
        outcome, post, p = measure(bb84_state(1, 1), ["q"], [Basis.DIAGONAL], rng)
        assert outcome == "1" and p == pytest.approx(1.0)
        np.testing.assert_allclose(post.amplitudes, [S, -S], atol=1e-15)

    def test_seeded_determinism(self, rng):
        s = random_state([("a", 3)], rng)
        a = measure(s, ["a"], Basis.DIAGONAL, np.random.default_rng(3))
        b = measure(s, ["a"], Basis.DIAGONAL, np.random.default_rng(3))
        assert a[0] == b[0]
        np.testing.assert_array_equal(a[1].amplitudes, b[1].amplitudes)

    def test_basis_count_checked(self, rng):
        with pytest.raises(ValueError):
            measure(random_state([("a", 2)], rng), ["a"], [Basis.RECTILINEAR], rng)

    def test_gamma_rf_projection_n2(self):
        # oracle: build |gamma> amplitude by amplitude and project by hand
        n = 2
        fam = gen_family(n, 11)
        for theta in (0, 1):
            amps = oracles.gamma_amplitudes(fam.tables, theta, n)
            s = StateVector.from_amplitudes([("r_w", n), ("r_f", n), ("rA_z", 1), ("rB_z", 1)], amps)
            for seed in range(6):
                outcome, post, p = measure(s, ["r_f"], Basis.RECTILINEAR, np.random.default_rng(seed))
                y = int(outcome, 2)
                t = amps.reshape(2**n, 2**n, 4).copy()
                mask = np.zeros_like(t)
                mask[:, y, :] = 1
                projected = (t * mask).reshape(-1)
                assert p == pytest.approx(np.vdot(projected, projected).real, abs=1e-12)
                np.testing.assert_allclose(post.amplitudes, projected / np.sqrt(p), atol=1e-12)
                # exactly one preimage per z survives once the z registers are read in theta
                if theta:
                    post = apply_unitary(apply_unitary(post, HADAMARD, ["rA_z"]), HADAMARD, ["rB_z"])
                keys = post.branches()
                assert sorted(k[2] for k in keys) == [0, 1]
                assert all(k[1] == y and k[2] == k[3] for k in keys)
                assert all(fam.tables[2 * theta + k[2]][k[0]] == y for k in keys)

    @pytest.mark.parametrize("widths", [(1,), (2, 1), (3, 2), (2, 2, 3, 3)])
    def test_completeness(self, rng, widths):
        regs = [(f"r{k}", w) for k, w in enumerate(widths)]
        s = random_state(regs, rng)
        targets = [name for name, _ in regs][::2]
        nq = sum(w for _, w in regs[::2])
        for bases in itertools.islice(itertools.product(list(Basis), repeat=nq), 8):
            branches = measurement_branches(s, targets, list(bases))
            assert abs(sum(p for _, p, _ in branches) - 1) <= 1e-9
            assert abs(outcome_probabilities(s, targets, list(bases)).sum() - 1) <= 1e-9
            for _, _, post in branches:
                assert abs(post.norm() - 1) <= 1e-9


class TestPartialTrace:
    def test_bell_pair(self):
        bell = StateVector.from_amplitudes([("a", 1), ("b", 1)], [S, 0, 0, S])
        np.testing.assert_allclose(partial_trace(bell, ["a"]).matrix, np.eye(2) / 2, atol=1e-15)

    def test_product_state(self, rng):
        a = random_state([("a", 2)], rng)
        b = random_state([("b", 1)], rng)
        s = tensor(a, b)
        np.testing.assert_allclose(
            partial_trace(s, ["a"]).matrix, np.outer(a.amplitudes, a.amplitudes.conj()), atol=1e-9
        )
        np.testing.assert_allclose(
            partial_trace(s, ["b"]).matrix, np.outer(b.amplitudes, b.amplitudes.conj()), atol=1e-9
        )

    def test_density_matrix_route_agrees(self, rng):
        s = random_state([("a", 1), ("b", 2), ("c", 1)], rng)
        rho = DensityMatrix.from_state(s)
        for keep in (["a"], ["c", "a"], ["b"], ["b", "c"]):
            np.testing.assert_allclose(partial_trace(rho, keep).matrix, partial_trace(s, keep).matrix, atol=1e-12)

    def test_keep_everything_in_new_order(self, rng):
        s = random_state([("a", 1), ("b", 1)], rng)
        r = partial_trace(s, ["b", "a"]).matrix
        swapped = s.reorder(["b", "a"]).amplitudes
        np.testing.assert_allclose(r, np.outer(swapped, swapped.conj()), atol=1e-12)

    def test_empty_keep(self, rng):
        with pytest.raises(ValueError):
            partial_trace(random_state([("a", 1)], rng), [])

    @given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.integers(1, 3))
    @settings(max_examples=60, deadline=None)
    def test_reduced_spectra_coincide(self, seed, wa, wb):
        s = random_state([("a", wa), ("b", wb)], np.random.default_rng(seed))
        ea = np.sort(partial_trace(s, ["a"]).eigenvalues())[::-1]
        eb = np.sort(partial_trace(s, ["b"]).eigenvalues())[::-1]
        k = min(len(ea), len(eb))
        np.testing.assert_allclose(ea[:k], eb[:k], atol=1e-9)
        assert np.all(np.abs(ea[k:]) <= 1e-9) and np.all(np.abs(eb[k:]) <= 1e-9)


class TestMetrics:
    def test_rho_plus_equals_rho_cross(self):
        plus = DensityMatrix.mixture([0.5, 0.5], [bb84_state(0, 0), bb84_state(0, 1)])
        cross = DensityMatrix.mixture([0.5, 0.5], [bb84_state(1, 0), bb84_state(1, 1)])
        assert trace_distance(plus, cross) <= 1e-12

    def test_identical_and_orthogonal(self, rng):
        r = random_density(3, rng)
        assert trace_distance(r, r) == 0
        assert trace_distance(bb84_state(0, 0), bb84_state(0, 1)) == pytest.approx(1.0)
        assert fidelity(r, r) == pytest.approx(1.0, abs=1e-9)
        assert fidelity(bb84_state(1, 0), bb84_state(1, 1)) == pytest.approx(0.0, abs=1e-9)

    def test_pure_fidelity_is_inner_product(self, rng):
        for _ in range(20):
            a = random_state([("q", 2)], rng)
            b = random_state([("q", 2)], rng)
            assert fidelity(a, b) == pytest.approx(abs(np.vdot(a.amplitudes, b.amplitudes)), abs=1e-9)

    def test_dimension_mismatch(self, rng):
        with pytest.raises(ValueError):
            trace_distance(random_density(2, rng), random_density(4, rng))
        with pytest.raises(ValueError):
            fidelity(random_density(2, rng), random_density(4, rng))

    def test_symmetry(self, rng):
        a, b = random_density(4, rng), random_density(4, rng)
        assert trace_distance(a, b) == pytest.approx(trace_distance(b, a), abs=1e-12)
        assert fidelity(a, b) == pytest.approx(fidelity(b, a), abs=1e-9)

    @given(st.integers(0, 2**32 - 1), st.sampled_from([2, 4]), st.integers(1, 4))
    @settings(max_examples=80, deadline=None)
    def test_fuchs_van_de_graaf(self, seed, dim, rank):
        rng = np.random.default_rng(seed)
        a = random_density(dim, rng, rank=min(rank, dim))
        b = random_density(dim, rng, rank=min(rank, dim))
        f, d = fidelity(a, b), trace_distance(a, b)
        assert 1 - f <= d + 1e-7
        assert d <= np.sqrt(max(0.0, 1 - f**2)) + 1e-7
