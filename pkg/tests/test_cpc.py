import math

import numpy as np
import pytest

from orthofit.core.cpc import (
    _adapt_start,
    fit,
    fit_from,
    frames_of,
    from_unconstrained,
    group_stats,
    initialize,
    loglik,
    loglik_lncpc,
    loglik_ncpc,
    loglik_unconstrained,
    param_count,
    to_unconstrained,
)
from orthofit.core.errors import (
    BetaOnBoundaryError,
    DegenerateGroupError,
    LengthMismatchError,
    NotNestedError,
)
from orthofit.core.linalg import symmetric_eigen
from orthofit.core.models import (
    LN_CPC,
    LN_PC,
    N_CPC,
    N_PC,
    Family,
    FitConfig,
    GroupedDataset,
    LNParams,
    MVNormalParams,
    OrthogonalMatrix,
    ParamSet,
)
from orthofit.core.mvdist import beta_max, ln_logpdf, normal_logpdf
from orthofit.core.services import fit_models


def _random_params(rng, random_orthogonal, k, d, *, common=True, leptokurtic=False):
    mu = rng.standard_normal((k, d))
    lam = rng.uniform(0.3, 3.0, size=(k, d))
    beta = rng.uniform(0.1, beta_max(d) - 0.1, size=k) if leptokurtic else None
    if common:
        return ParamSet(mu, lam, q_common=OrthogonalMatrix(random_orthogonal(d, rng)), beta=beta)
    q_group = tuple(OrthogonalMatrix(random_orthogonal(d, rng)) for _ in range(k))
    return ParamSet(mu, lam, q_group=q_group, beta=beta)


def _random_data(rng, k, d, n=30):
    return GroupedDataset.from_arrays({f"g{j}": rng.standard_normal((n, d)) * (j + 1) for j in range(k)})


class TestGroupStats:
    def test_unit_square(self):
        data = GroupedDataset.from_arrays({"a": [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]})
        (stats,) = group_stats(data)
        np.testing.assert_allclose(stats.mean, [0.5, 0.5])
        np.testing.assert_allclose(stats.scatter, 0.25 * np.eye(2))

    def test_too_few_observations(self):
        with pytest.raises(DegenerateGroupError):
            GroupedDataset.from_arrays({"a": [[0.0, 0.0], [2.0, 0.0]]})

    def test_rank_deficient(self):
        data = GroupedDataset.from_arrays({"a": [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]})
        with pytest.raises(DegenerateGroupError):
            group_stats(data)

    def test_small_scale_is_not_degenerate(self, rng):
        data = GroupedDataset.from_arrays({"a": rng.standard_normal((30, 2)) * 1e-7})
        (stats,) = group_stats(data)
        assert 0 < np.linalg.eigvalsh(stats.scatter).min() < 1e-12

    def test_off_center_scatter_dominates(self, rng):
        data = _random_data(rng, 2, 3)
        centers = rng.standard_normal((2, 3))
        for centered, shifted in zip(group_stats(data), group_stats(data, centers=centers), strict=True):
            assert np.linalg.eigvalsh(shifted.scatter - centered.scatter).min() >= -1e-12


class TestParamCount:
    @pytest.mark.parametrize(
        ("spec", "d", "k", "expected"),
        [
            (N_CPC, 2, 2, 9),
            (LN_CPC, 2, 2, 11),
            (N_PC, 2, 2, 10),
            (LN_PC, 2, 2, 12),
            (N_CPC, 3, 2, 15),
            (LN_CPC, 3, 2, 17),
            (N_PC, 3, 2, 18),
            (LN_PC, 3, 2, 20),
        ],
    )
    def test_counts(self, spec, d, k, expected):
        assert param_count(spec, d, k) == expected


class TestLoglik:
    def test_saturated_single_group(self, rng):
        x = rng.standard_normal((40, 3)) @ np.array([[2.0, 0.0, 0.0], [0.5, 1.0, 0.0], [0.1, 0.2, 0.3]])
        data = GroupedDataset.from_arrays({"a": x})
        (stats,) = group_stats(data)
        values, vectors = symmetric_eigen(stats.scatter)
        params = ParamSet(stats.mean[None, :], values[None, :], q_common=OrthogonalMatrix(vectors))
        expected = float(np.sum(normal_logpdf(x, MVNormalParams(stats.mean, stats.scatter))))
        assert loglik_ncpc(params, group_stats(data, centers=params.mu), 40, 3, 1) == pytest.approx(expected)

    def test_per_observation_oracle(self, rng, random_orthogonal):
        for _ in range(100):
            k, d = int(rng.integers(1, 4)), int(rng.integers(2, 5))
            data = _random_data(rng, k, d, n=12)
            params = _random_params(rng, random_orthogonal, k, d, leptokurtic=True)
            normal = sum(
                float(np.sum(normal_logpdf(g.observations, MVNormalParams(params.mu[j], params.covariance(j)))))
                for j, g in enumerate(data.groups)
            )
            ln = sum(
                float(
                    np.sum(
                        ln_logpdf(
                            g.observations,
                            LNParams(params.mu[j], params.covariance(j), beta=float(params.beta[j])),
                        )
                    )
                )
                for j, g in enumerate(data.groups)
            )
            stats = group_stats(data, centers=params.mu)
            assert loglik_ncpc(params, stats, data.n, d, k) == pytest.approx(normal, abs=1e-8)
            assert loglik_lncpc(params, data) == pytest.approx(ln, abs=1e-8)

    def test_zero_beta_is_normal(self, rng, random_orthogonal):
        data = _random_data(rng, 2, 3)
        base = _random_params(rng, random_orthogonal, 2, 3)
        params = ParamSet(base.mu, base.lam, q_common=base.q_common, beta=np.zeros(2))
        assert loglik_lncpc(params, data) == pytest.approx(loglik(base, data, N_CPC), abs=1e-9)

    def test_single_group_unconstrained_matches_cpc(self, rng, random_orthogonal):
        data = _random_data(rng, 1, 3)
        cpc = _random_params(rng, random_orthogonal, 1, 3, leptokurtic=True)
        pc = ParamSet(cpc.mu, cpc.lam, q_group=(cpc.q_common,), beta=cpc.beta)
        assert loglik_unconstrained(pc, data, Family.LEPTOKURTIC) == pytest.approx(loglik_lncpc(cpc, data))


class TestReparameterization:
    @pytest.mark.parametrize("spec", [N_CPC, LN_CPC, N_PC, LN_PC])
    def test_round_trip(self, spec, rng, random_orthogonal):
        data = _random_data(rng, 3, 3)
        for _ in range(20):
            params = _random_params(
                rng, random_orthogonal, 3, 3, common=spec.is_cpc, leptokurtic=spec.is_leptokurtic
            )
            v = to_unconstrained(params)
            assert v.size == param_count(spec, 3, 3)
            back = from_unconstrained(v, spec, 3, 3, frames_of(params))
            np.testing.assert_allclose(back.mu, params.mu, atol=1e-10)
            np.testing.assert_allclose(back.lam, params.lam, rtol=1e-10)
            for j in range(3):
                np.testing.assert_allclose(back.rotation(j), params.rotation(j), atol=1e-10)
            if spec.is_leptokurtic:
                np.testing.assert_allclose(back.beta, params.beta, atol=1e-10)
            assert loglik(back, data, spec) == pytest.approx(loglik(params, data, spec), abs=1e-8)

    def test_fixed_points(self):
        params = ParamSet(
            np.zeros((1, 2)), np.ones((1, 2)), q_common=OrthogonalMatrix(np.eye(2)), beta=np.array([3.2])
        )
        np.testing.assert_allclose(to_unconstrained(params), np.zeros(6), atol=1e-15)

    def test_beta_transform(self):
        params = ParamSet(
            np.zeros((1, 2)), np.ones((1, 2)), q_common=OrthogonalMatrix(np.eye(2)), beta=np.array([4.753])
        )
        assert to_unconstrained(params)[-1] == pytest.approx(math.log(4.753 / 1.647), abs=1e-4)

    def test_beta_on_boundary(self):
        params = ParamSet(
            np.zeros((1, 2)), np.ones((1, 2)), q_common=OrthogonalMatrix(np.eye(2)), beta=np.array([0.0])
        )
        with pytest.raises(BetaOnBoundaryError):
            to_unconstrained(params)

    def test_length_mismatch(self):
        params = ParamSet(np.zeros((1, 2)), np.ones((1, 2)), q_common=OrthogonalMatrix(np.eye(2)))
        frames = frames_of(params)
        with pytest.raises(LengthMismatchError):
            from_unconstrained(np.zeros(4), N_CPC, 2, 1, frames)


class TestInitialize:
    def test_single_group_is_pca(self, rng):
        data = _random_data(rng, 1, 3)
        init = initialize(data, N_CPC)
        values, _ = symmetric_eigen(group_stats(data)[0].scatter)
        np.testing.assert_allclose(init.params.lam[0], values, rtol=1e-10)

    def test_duplicated_groups_pool_to_single_basis(self, rng):
        x = rng.standard_normal((30, 3)) * np.array([3.0, 2.0, 1.0])
        init = initialize(GroupedDataset.from_arrays({"a": x, "b": x.copy()}), N_CPC)
        _, vectors = symmetric_eigen(group_stats(GroupedDataset.from_arrays({"a": x}))[0].scatter)
        np.testing.assert_allclose(init.params.q_common.values, vectors, atol=1e-10)

    def test_beta_clamping(self, rng):
        # uniform data are platykurtic, so the starting kurtosis is clamped up
        data = GroupedDataset.from_arrays({"a": rng.uniform(size=(200, 2)), "b": rng.standard_t(4, size=(200, 2))})
        init = initialize(data, LN_CPC)
        assert init.beta_clamped[0]
        assert init.params.beta[0] == pytest.approx(0.01)
        assert 0.01 <= init.params.beta[1] <= beta_max(2) - 0.01


class TestFit:
    def test_npc_closed_form(self, rng):
        data = _random_data(rng, 2, 3)
        result = fit(data, N_PC)
        expected = 0.0
        for g in data.groups:
            mean = g.observations.mean(axis=0)
            centered = g.observations - mean
            expected += float(np.sum(normal_logpdf(g.observations, MVNormalParams(mean, centered.T @ centered / g.n))))
        assert result.loglik == pytest.approx(expected)
        assert result.optim.iterations == 0
        assert result.m == 18

    def test_ncpc_is_stationary(self, rng, cpc_dataset):
        data = cpc_dataset(rng)
        result = fit(data, N_CPC)
        assert result.stationarity_residual <= 1e-5
        assert result.loglik >= loglik(initialize(data, N_CPC).params, data, N_CPC)
        q = result.params.q_common.values
        np.testing.assert_allclose(q.T @ q, np.eye(2), atol=1e-8)

    def test_ln_on_gaussian_data(self, rng, cpc_dataset):
        data = cpc_dataset(rng, n=(2000, 2000))
        normal = fit(data, N_CPC)
        leptokurtic = fit(data, LN_CPC, starts=[normal.params])
        assert np.all(leptokurtic.params.beta < 0.5)
        assert leptokurtic.loglik - normal.loglik <= 2.0
        assert leptokurtic.loglik >= normal.loglik - 1e-6

    def test_nesting_dominance(self, rng, cpc_dataset):
        cfg = FitConfig()
        for _ in range(20):
            data = cpc_dataset(rng, n=(40, 60), means=[[0.0, 0.0], [1.0, -1.0]])
            ncpc, lncpc, npc, lnpc = fit_models(data, [N_CPC, LN_CPC, N_PC, LN_PC], cfg)
            assert ncpc.loglik <= lncpc.loglik + 1e-6
            assert ncpc.loglik <= npc.loglik + 1e-6
            assert lncpc.loglik <= lnpc.loglik + 1e-6
            assert npc.loglik <= lnpc.loglik + 1e-6

    def test_eigenvalue_order_indifference(self, rng, cpc_dataset):
        data = cpc_dataset(rng, n=(150, 150))
        init = initialize(data, N_CPC).params
        swapped = ParamSet(
            init.mu,
            init.lam[:, ::-1],
            q_common=OrthogonalMatrix(init.q_common.values[:, ::-1]),
        )
        cfg = FitConfig()
        default = fit_from(data, N_CPC, init, cfg)
        reordered = fit_from(data, N_CPC, swapped, cfg)
        assert reordered.loglik == pytest.approx(default.loglik, abs=1e-4)
        for j in range(data.k):
            difference = reordered.params.covariance(j) - default.params.covariance(j)
            assert np.linalg.norm(difference) <= 1e-4

    def test_lnpc_separates_over_groups(self, rng, cpc_dataset):
        data = cpc_dataset(rng, n=(60, 60))
        joint = fit(data, LN_PC)
        parts = [fit(data.subset(j), LN_CPC) for j in range(data.k)]
        assert joint.loglik == pytest.approx(sum(p.loglik for p in parts), abs=1e-8)
        assert joint.m == 12
        assert len(joint.params.q_group) == 2
        np.testing.assert_allclose(joint.optim.x_opt, to_unconstrained(joint.params), atol=1e-10)

    def test_lnpc_on_cauchy_tailed_groups(self):
        rng = np.random.default_rng(5)
        data = GroupedDataset.from_arrays(
            {"a": rng.standard_t(1.0, size=(400, 2)), "b": 2.0 * rng.standard_t(1.5, size=(400, 2))}
        )
        result = fit(data, LN_PC)
        assert np.all(result.params.beta <= beta_max(2))
        assert result.optim.x_opt.size == param_count(LN_PC, 2, 2)
        again = from_unconstrained(result.optim.x_opt, LN_PC, 2, 2, frames_of(result.params))
        np.testing.assert_allclose(again.beta, result.params.beta)
        np.testing.assert_allclose(again.lam, result.params.lam)

    def test_unconstrained_start_cannot_seed_cpc(self, rng, cpc_dataset):
        data = cpc_dataset(rng)
        npc = fit(data, N_PC)
        with pytest.raises(NotNestedError):
            _adapt_start(npc.params, LN_CPC, data.d, data.k)

    def test_fg_check(self, rng, cpc_dataset):
        data = cpc_dataset(rng)
        result = fit(data, N_CPC, FitConfig(fg_check=True))
        assert result.fg_discrepancy <= 1e-3
