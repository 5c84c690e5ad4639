import numpy as np
import pytest

from orthofit.core.cpc import fit, group_stats, loglik, loglik_ncpc
from orthofit.core.errors import DegenerateGroupError, NoConvergenceError
from orthofit.core.flury_gautschi import fg_algorithm, fg_stationarity_residual
from orthofit.core.linalg import column_discrepancy, symmetric_eigen
from orthofit.core.models import N_CPC, GroupedDataset, GroupStats, OrthogonalMatrix, ParamSet


def _stats(scatters, sizes):
    d = scatters[0].shape[0]
    return [GroupStats(n, np.zeros(d), s) for s, n in zip(scatters, sizes, strict=True)]


class TestStationarityResidual:
    def test_single_group_eigenvectors(self, rng):
        a = rng.standard_normal((4, 4))
        s = a @ a.T + np.eye(4)
        _, vectors = symmetric_eigen(s)
        assert fg_stationarity_residual(vectors, _stats([s], [30])) <= 1e-10

    def test_equal_scatters(self, rng):
        a = rng.standard_normal((3, 3))
        s = a @ a.T + np.eye(3)
        _, vectors = symmetric_eigen(s)
        assert fg_stationarity_residual(vectors, _stats([s, s, s], [10, 20, 30])) <= 1e-10

    def test_matches_rotation_derivative(self, rng, random_orthogonal):
        scatters = []
        for _ in range(2):
            a = rng.standard_normal((3, 3))
            scatters.append(a @ a.T + 0.5 * np.eye(3))
        stats = _stats(scatters, [25, 40])
        q = random_orthogonal(3, rng)

        def profiled(angle):
            rotation = np.eye(3)
            c, s = np.cos(angle), np.sin(angle)
            rotation[np.ix_([0, 2], [0, 2])] = [[c, -s], [s, c]]
            rotated = q @ rotation
            lam = np.array([np.diag(rotated.T @ st.scatter @ rotated) for st in stats])
            params = ParamSet(np.zeros((2, 3)), lam, q_common=OrthogonalMatrix(rotated))
            return loglik_ncpc(params, stats, 65, 3, 2)

        step = 1e-6
        derivative = (profiled(step) - profiled(-step)) / (2 * step)
        lam = np.array([np.diag(q.T @ st.scatter @ q) for st in stats])
        weighted = sum(
            st.n * (lam[j, 0] - lam[j, 2]) / (lam[j, 0] * lam[j, 2]) * st.scatter for j, st in enumerate(stats)
        )
        assert abs(derivative) == pytest.approx(abs(q[:, 0] @ weighted @ q[:, 2]), rel=1e-5)

    def test_degenerate(self):
        s = np.diag([1.0, 0.0])
        with pytest.raises(DegenerateGroupError):
            fg_stationarity_residual(np.eye(2), _stats([s], [10]))


class TestFGAlgorithm:
    def test_commuting_scatters(self, rng, random_orthogonal):
        q = random_orthogonal(4, rng)
        scatters = [(q * rng.uniform(0.5, 5.0, size=4)) @ q.T for _ in range(3)]
        result = fg_algorithm(_stats(scatters, [20, 30, 40]))
        assert result.residual <= 1e-10
        assert column_discrepancy(q, result.q.values) <= 1e-8
        for j, s in enumerate(scatters):
            np.testing.assert_allclose(result.lam[j], np.diag(result.q.values.T @ s @ result.q.values))

    def test_agrees_with_plr_fit(self, rng, cpc_dataset):
        data = cpc_dataset(rng, angle=0.3)
        plr = fit(data, N_CPC)
        fg = fg_algorithm(group_stats(data))
        assert column_discrepancy(fg.q.values, plr.params.q_common.values) <= 1e-3

    def test_same_likelihood_as_plr_fit(self, rng):
        data = GroupedDataset.from_arrays(
            {
                "a": rng.multivariate_normal(np.zeros(3), np.diag([3.0, 1.0, 0.5]), size=60),
                "b": rng.multivariate_normal(np.zeros(3), [[2.0, 0.6, 0.0], [0.6, 1.0, 0.2], [0.0, 0.2, 0.4]], size=60),
            }
        )
        plr = fit(data, N_CPC)
        stats = group_stats(data)
        fg = fg_algorithm(stats)
        means = np.array([s.mean for s in stats])
        fg_params = ParamSet(means, fg.lam, q_common=fg.q)
        assert loglik(fg_params, data, N_CPC) == pytest.approx(plr.loglik, abs=1e-4)

    def test_no_convergence(self, rng):
        scatters = []
        for _ in range(2):
            a = rng.standard_normal((3, 3))
            scatters.append(a @ a.T + np.eye(3))
        with pytest.raises(NoConvergenceError):
            fg_algorithm(_stats(scatters, [10, 10]), max_sweeps=0)
