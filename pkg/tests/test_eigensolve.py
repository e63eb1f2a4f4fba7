import numpy as np
import pytest
import scipy.sparse as sp

from wgcutoff import (
    assemble_scalar_te,
    assemble_scalar_tm,
    assemble_vector_te,
    assemble_vector_tm,
    generate_annulus,
    generate_rectangle,
)
from wgcutoff.eigensolve import (
    EigenSolveError,
    SolveOptions,
    Spectrum,
    classify_near_zero,
    dense_saddle_bruteforce,
    solve_definite,
    solve_saddle,
)
from wgcutoff.femcore import (
    KIND_EDGE_ALL,
    KIND_NODAL_ALL,
    LAYOUT_PLAIN,
    LAYOUT_SADDLE,
    DofMap,
    HermitianPencil,
)


def plain_pencil(K, M):
    K = sp.csr_matrix(np.asarray(K, dtype=complex))
    M = sp.csr_matrix(np.asarray(M, dtype=complex))
    n = K.shape[0]
    return HermitianPencil(K=K, M=M, layout=LAYOUT_PLAIN,
                           primal_map=DofMap(KIND_NODAL_ALL,
                                             np.arange(n), n))


def saddle_pencil(K, M, p):
    K = sp.csr_matrix(np.asarray(K, dtype=complex))
    M = sp.csr_matrix(np.asarray(M, dtype=complex))
    n = K.shape[0]
    return HermitianPencil(
        K=K, M=M, layout=LAYOUT_SADDLE,
        primal_map=DofMap(KIND_EDGE_ALL, np.arange(p), p),
        multiplier_map=DofMap(KIND_NODAL_ALL, np.arange(n - p), n - p),
    )


class TestSolveDefinite:
    def test_diagonal(self):
        spectrum = solve_definite(plain_pencil(np.diag([0.0, 2.0]), np.eye(2)),
                                  SolveOptions(num_modes=2))
        assert np.allclose(spectrum.eigenvalues, [0.0, 2.0], atol=1e-12)

    def test_two_by_two(self):
        K = [[2.0, -1.0], [-1.0, 2.0]]
        spectrum = solve_definite(plain_pencil(K, np.eye(2)),
                                  SolveOptions(num_modes=2))
        assert np.allclose(spectrum.eigenvalues, [1.0, 3.0], atol=1e-12)

    def test_laplacian_smallest_mode_is_constant(self, gyro_medium):
        mesh = generate_rectangle(1.0, 1.0, 4, 4)
        pencil = assemble_scalar_te(mesh, gyro_medium)
        spectrum = solve_definite(pencil, SolveOptions(num_modes=3))
        lam = spectrum.eigenvalues
        assert abs(lam[0]) <= 1e-9 * lam[-1]
        vec = spectrum.eigenvectors[:, 0]
        assert np.abs(vec - vec.mean()).max() <= 1e-6 * np.abs(vec).max()

    def test_m_orthonormal(self, gyro_medium):
        mesh = generate_rectangle(1.0, 0.8, 4, 3)
        pencil = assemble_scalar_tm(mesh, gyro_medium)
        spectrum = solve_definite(pencil, SolveOptions(num_modes=4))
        v = spectrum.eigenvectors
        gram = v.conj().T @ (pencil.M @ v)
        assert np.allclose(gram, np.eye(4), atol=1e-10)

    def test_num_modes_exceeding_dimension_rejected(self):
        with pytest.raises(EigenSolveError, match="dimension"):
            solve_definite(plain_pencil(np.eye(2), np.eye(2)),
                           SolveOptions(num_modes=5))

    def test_sparse_path_matches_dense(self, gyro_medium):
        mesh = generate_rectangle(1.1e-3, 0.9e-3, 5, 5)
        pencil = assemble_scalar_tm(mesh, gyro_medium)
        dense = solve_definite(pencil, SolveOptions(num_modes=4))
        sparse = solve_definite(pencil,
                                SolveOptions(num_modes=4, dense_cutoff=0))
        assert np.allclose(sparse.eigenvalues, dense.eigenvalues, rtol=1e-10)


class TestSolveSaddle:
    def test_toy_pencil_single_finite_eigenvalue(self):
        K = [[2.0, 0.0, 1.0], [0.0, 3.0, 0.0], [1.0, 0.0, 0.0]]
        M = np.diag([1.0, 1.0, 0.0])
        pencil = saddle_pencil(K, M, p=2)
        spectrum = solve_saddle(pencil, SolveOptions(num_modes=1))
        assert np.allclose(spectrum.eigenvalues, [3.0], atol=1e-10)
        # the constraint row x1 = 0 holds for the returned pair
        assert abs(spectrum.eigenvectors[0, 0]) <= 1e-10
        brute = dense_saddle_bruteforce(pencil, SolveOptions(num_modes=1))
        assert np.allclose(brute, [3.0], atol=1e-10)

    def test_requesting_more_than_finite_count_rejected(self):
        K = [[2.0, 0.0, 1.0], [0.0, 3.0, 0.0], [1.0, 0.0, 0.0]]
        M = np.diag([1.0, 1.0, 0.0])
        with pytest.raises(EigenSolveError, match="finite"):
            solve_saddle(saddle_pencil(K, M, p=2), SolveOptions(num_modes=3))

    def test_coax_tm_has_near_zero_mode(self, gyro_medium):
        mesh = generate_annulus(1e-3, 2e-3, 2, 16)
        pencil = assemble_vector_tm(mesh, gyro_medium)
        spectrum = solve_saddle(pencil, SolveOptions(num_modes=4))
        lam = spectrum.eigenvalues
        assert abs(lam[0]) <= 1e-6 * lam[1]
        assert (spectrum.residuals <= 1e-8).all()

    def test_sparse_matches_dense_and_bruteforce(self, gyro_medium):
        mesh = generate_annulus(1e-3, 2e-3, 2, 12)
        for assemble in (assemble_vector_te, assemble_vector_tm):
            pencil = assemble(mesh, gyro_medium)
            opts = SolveOptions(num_modes=4)
            dense = solve_saddle(pencil, opts)
            sparse = solve_saddle(pencil,
                                  SolveOptions(num_modes=4, dense_cutoff=0))
            brute = dense_saddle_bruteforce(pencil, opts)
            scale = max(abs(dense.eigenvalues).max(), 1.0)
            assert np.allclose(sparse.eigenvalues, dense.eigenvalues,
                               rtol=1e-8, atol=1e-8 * scale)
            assert np.allclose(brute, dense.eigenvalues,
                               rtol=1e-8, atol=1e-8 * scale)

    def test_scaling_invariance(self, gyro_medium):
        mesh = generate_annulus(1e-3, 2e-3, 2, 12)
        pencil = assemble_vector_tm(mesh, gyro_medium)
        scaled = HermitianPencil(
            K=(pencil.K * 7.5).tocsr(), M=(pencil.M * 7.5).tocsr(),
            layout=pencil.layout, primal_map=pencil.primal_map,
            multiplier_map=pencil.multiplier_map,
        )
        a = solve_saddle(pencil, SolveOptions(num_modes=4)).eigenvalues
        b = solve_saddle(scaled, SolveOptions(num_modes=4)).eigenvalues
        assert np.allclose(a, b, rtol=1e-10, atol=1e-10 * max(abs(a).max(), 1))

    def test_shift_choice_does_not_move_eigenvalues(self, gyro_medium):
        mesh = generate_annulus(1e-3, 2e-3, 2, 16)
        pencil = assemble_vector_tm(mesh, gyro_medium)
        base = solve_saddle(pencil, SolveOptions(num_modes=4,
                                                 dense_cutoff=0)).eigenvalues
        shifted = solve_saddle(
            pencil, SolveOptions(num_modes=4, dense_cutoff=0,
                                 shift=0.3 * base[1])).eigenvalues
        assert np.allclose(base, shifted, rtol=1e-8,
                           atol=1e-8 * abs(base).max())

    def test_deterministic_across_runs(self, gyro_medium):
        mesh = generate_annulus(1e-3, 2e-3, 2, 16)
        pencil = assemble_vector_tm(mesh, gyro_medium)
        opts = SolveOptions(num_modes=3, dense_cutoff=0)
        a = solve_saddle(pencil, opts)
        b = solve_saddle(pencil, opts)
        assert np.array_equal(a.eigenvalues, b.eigenvalues)
        assert np.array_equal(a.eigenvectors, b.eigenvectors)


class TestOracleEquivalence:
    """Shift-invert must agree with the dense brute force on small pencils."""

    def coarse_pencils(self, gyro_medium):
        meshes = {
            "rectangle": generate_rectangle(1.2e-3, 1.0e-3, 3, 3),
            "disc": generate_annulus(0.0, 2e-3, 2, 8),
            "coax": generate_annulus(1e-3, 2e-3, 2, 8),
        }
        for mesh in meshes.values():
            yield assemble_scalar_te(mesh, gyro_medium)
            yield assemble_scalar_tm(mesh, gyro_medium)
            if (~mesh.boundary_edge).any():
                yield assemble_vector_te(mesh, gyro_medium)
            yield assemble_vector_tm(mesh, gyro_medium)

    def test_all_small_pencils(self, gyro_medium):
        import scipy.linalg as la
        for pencil in self.coarse_pencils(gyro_medium):
            assert pencil.dim <= 200
            k = min(4, (pencil.dim if pencil.layout == LAYOUT_PLAIN
                        else pencil.primal_dim - pencil.multiplier_dim))
            sparse_opts = SolveOptions(num_modes=k, dense_cutoff=0)
            if pencil.layout == LAYOUT_PLAIN:
                got = solve_definite(pencil, sparse_opts).eigenvalues
                ref = la.eigh(pencil.K.toarray(), pencil.M.toarray(),
                              eigvals_only=True)[:k]
            else:
                got = solve_saddle(pencil, sparse_opts).eigenvalues
                ref = dense_saddle_bruteforce(pencil, SolveOptions(num_modes=k))
            scale = max(np.abs(ref).max(), 1.0)
            assert np.allclose(got, ref, rtol=1e-8, atol=1e-8 * scale)


class TestClassifyNearZero:
    def fake_spectrum(self, eigenvalues):
        lam = np.asarray(eigenvalues, dtype=float)
        return Spectrum(eigenvalues=lam,
                        eigenvectors=np.zeros((2, lam.size), dtype=complex),
                        multipliers=None, residuals=np.zeros(lam.size))

    def test_coax_vector_pattern(self):
        zero, nonzero = classify_near_zero(
            self.fake_spectrum([1e-12, 2e7, 2.2e7, 2.5e7]))
        assert list(zero) == [0]
        assert list(nonzero) == [1, 2, 3]

    def test_rectangle_pattern(self):
        zero, nonzero = classify_near_zero(
            self.fake_spectrum([3e7, 7e7, 9e7, 1.3e8]))
        assert zero.size == 0

    def test_scalar_te_pattern(self):
        zero, _ = classify_near_zero(
            self.fake_spectrum([-1e-9, 2.1e6, 5.6e6, 5.9e6, 1.2e7]))
        assert list(zero) == [0]

    def test_all_near_zero_rejected(self):
        with pytest.raises(EigenSolveError, match="near zero"):
            classify_near_zero(self.fake_spectrum([1e-30, 2e-30, 3e-30]),
                               reference_scale=1e3)

    def test_reference_scale_override(self):
        zero, _ = classify_near_zero(self.fake_spectrum([1.0, 4e6]),
                                     reference_scale=1e6)
        assert list(zero) == [0]
