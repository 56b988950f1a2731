"""Dense ground-truth path: explicit matrices, spectrum, perturbation."""

import math

import numpy as np
import pytest

from conftest import analysis_config, dense_M_reference
from stclust.errors import TooLargeError
from stclust.feature_chains import build_feature_matrix
from stclust.motion_graph import build_chains, build_motion_graph, temporal_kernel
from stclust.oracle import (
    build_explicit,
    dense_power_iteration,
    perturbation_bound,
    reorder_by_mask,
    spectrum,
)
from stclust.pipeline import base_feature_maps, build_context


def explicit_instance(analysis_family, idx=0, lam=0.0):
    _, flow, gt = analysis_family[idx]
    config = analysis_config()
    ctx = build_context(flow, config)
    F = build_feature_matrix(
        ctx.chains, base_feature_maps(flow), config.q, config.standardize, config.bias
    )
    return build_explicit(ctx.graph, F, lam), ctx, F, gt


class TestBuildExplicit:
    def test_single_edge_matrix(self):
        from stclust.flow_io import FlowField

        z = np.zeros((1, 1, 1, 2))
        chains = build_chains(FlowField(z, z.copy()))
        graph = build_motion_graph(chains, p=1, sigma_t=2.0)
        F = np.eye(2)
        eg = build_explicit(graph, F, 0.0)
        k1 = temporal_kernel(1, 2.0)
        np.testing.assert_allclose(eg.M, [[0, k1], [k1, 0]], atol=0)

    def test_identity_features_give_A_equals_M(self):
        from stclust.flow_io import FlowField

        z = np.zeros((1, 4, 5, 2))
        chains = build_chains(FlowField(z, z.copy()))
        graph = build_motion_graph(chains, p=1, sigma_t=2.0)
        F = np.eye(graph.n)
        eg = build_explicit(graph, F, 0.0)
        np.testing.assert_allclose(eg.P, np.eye(graph.n), atol=1e-10)
        np.testing.assert_allclose(eg.A, eg.M, atol=1e-10)

    def test_matrices_consistent(self, analysis_family):
        eg, ctx, F, _ = explicit_instance(analysis_family)
        np.testing.assert_array_equal(eg.M, dense_M_reference(ctx.graph))
        assert np.abs(eg.A - eg.A.T).max() <= 1e-10
        assert np.abs(eg.P - eg.P.T).max() <= 1e-8
        np.testing.assert_allclose(eg.P @ eg.P, eg.P, atol=1e-8)

    def test_a_equals_projected_m(self, analysis_family):
        eg, _, _, _ = explicit_instance(analysis_family, idx=1)
        ref = eg.P @ eg.M @ eg.P
        assert np.abs(eg.A - ref).max() <= 1e-10 * max(1.0, np.abs(ref).max())

    def test_size_cap(self):
        from stclust.flow_io import FlowField

        z = np.zeros((9, 32, 32, 2))
        chains = build_chains(FlowField(z, z.copy()))
        graph = build_motion_graph(chains, p=1, sigma_t=2.0)
        with pytest.raises(TooLargeError):
            build_explicit(graph, np.ones((graph.n, 1)), 0.0)


class TestDensePowerIteration:
    def test_diagonal(self):
        res = dense_power_iteration(np.diag([3.0, 1.0]), seed=0)
        assert res.value == pytest.approx(3.0, abs=1e-10)
        assert abs(res.vector[0]) == pytest.approx(1.0, abs=1e-8)
        assert res.converged

    def test_identity_flagged_degenerate(self):
        x0 = np.array([0.6, 0.8])
        res = dense_power_iteration(np.eye(2), x0=x0)
        np.testing.assert_allclose(res.vector, x0, atol=1e-12)
        assert res.value == pytest.approx(1.0, abs=1e-12)
        assert not res.converged  # no spectral gap

    def test_block_matrix_against_characteristic_polynomial(self):
        # ones-block of size 4, all remaining entries 0.01; the top eigenvalue
        # solves (4-x)(0.04-x) = 0.0016 on the 2d symmetric subspace
        A = np.full((8, 8), 0.01)
        A[:4, :4] = 1.0
        res = dense_power_iteration(A, seed=3)
        lam_ref = (4.04 + math.sqrt(4.04**2 - 4 * 0.1584)) / 2.0
        assert res.value == pytest.approx(lam_ref, rel=1e-10)
        v = res.vector
        assert np.linalg.norm(v[:4]) ** 2 > 0.99  # concentrated on the block

    def test_residual_contract(self, analysis_family):
        eg, _, _, _ = explicit_instance(analysis_family, idx=2)
        res = dense_power_iteration(eg.A, iters=5000, tol=1e-13, seed=1)
        assert res.residual <= max(1e-13 * abs(res.value), 1e-12) * 10


class TestSpectrum:
    def test_diagonal_values(self):
        rep = spectrum(np.diag([5.0, 2.0, 1.0]), k=3)
        np.testing.assert_allclose(rep.eigenvalues, [5, 2, 1], atol=1e-9)
        assert rep.eigengap == pytest.approx(3.0, abs=1e-9)
        assert rep.ratio == pytest.approx(2.5, abs=1e-9)

    def test_against_dense_eigendecomposition(self, analysis_family):
        eg, _, _, _ = explicit_instance(analysis_family, idx=3)
        rep = spectrum(eg.A, k=6)
        evals = np.linalg.eigvalsh(eg.A)
        by_mag = evals[np.argsort(-np.abs(evals))][:6]
        np.testing.assert_allclose(
            rep.eigenvalues, np.sort(by_mag)[::-1], rtol=1e-6, atol=1e-8
        )

    def test_eigenvalues_non_increasing(self, analysis_family):
        eg, _, _, _ = explicit_instance(analysis_family, idx=4)
        rep = spectrum(eg.A, k=6)
        assert (np.diff(rep.eigenvalues) <= 1e-10).all()

    def test_reconstruction_improves_with_k(self, analysis_family):
        eg, _, _, _ = explicit_instance(analysis_family, idx=5)
        errs = []
        for k in (1, 2, 4, 6):
            rep = spectrum(eg.A, k=k)
            approx = (rep.vectors * rep.eigenvalues) @ rep.vectors.T
            errs.append(np.linalg.norm(eg.A - approx, "fro"))
        assert all(b <= a + 1e-9 for a, b in zip(errs, errs[1:]))

    def test_residuals_small(self, analysis_family):
        eg, _, _, _ = explicit_instance(analysis_family, idx=6)
        rep = spectrum(eg.A, k=4)
        scale = abs(rep.eigenvalues[0])
        assert (rep.residuals <= 1e-8 * max(scale, 1.0)).all()

    def test_k_validation(self):
        with pytest.raises(ValueError):
            spectrum(np.eye(3), k=4)


class TestPerturbation:
    def test_zero_perturbation(self):
        rep = perturbation_bound(np.eye(4), np.zeros((4, 4)))
        assert rep.epsilon == 0.0

    def test_ratio_arithmetic(self):
        A = np.random.default_rng(0).standard_normal((5, 5))
        rep = perturbation_bound(A, A / 8.0)
        assert rep.epsilon == pytest.approx(1.0, rel=1e-12)

    def test_rotation_within_bound(self, analysis_family):
        eg, _, _, _ = explicit_instance(analysis_family, idx=7)
        rng = np.random.default_rng(5)
        E = rng.standard_normal(eg.A.shape)
        E = (E + E.T) / 2
        E *= 0.01 * np.linalg.norm(eg.A, "fro") / np.linalg.norm(E, "fro")
        rep = perturbation_bound(eg.A, E)
        base = dense_power_iteration(eg.A, iters=4000, tol=1e-13, seed=2)
        noisy = dense_power_iteration(eg.A + E, iters=4000, tol=1e-13, seed=2)
        angle = math.acos(min(1.0, abs(base.vector @ noisy.vector)))
        assert angle <= rep.epsilon


class TestReorder:
    def test_object_nodes_first(self):
        A = np.arange(16.0).reshape(4, 4)
        labels = np.array([0, 1, 0, 1])
        ordered, perm = reorder_by_mask(A, labels)
        np.testing.assert_array_equal(perm, [1, 3, 0, 2])
        np.testing.assert_array_equal(ordered, A[np.ix_(perm, perm)])
