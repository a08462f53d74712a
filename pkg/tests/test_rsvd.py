import math
import warnings

import numpy as np
import pytest
from numpy.testing import assert_allclose

from rsvdspike.errors import DomainError, RankDeficiencyWarning
from rsvdspike.mp_law import ModelParams, bulk_edges
from rsvdspike.rsvd import full_svd_reference, range_finder, reduced_singular_values, rsvd
from rsvdspike.sketch import SKETCH_KINDS, make_sketch
from rsvdspike.spiked import sample_spiked


def low_rank(rng, n, m, k):
    return rng.standard_normal((n, k)) @ rng.standard_normal((k, m))


def check_result(res, y, q):
    d = res.sing_vals.size
    assert np.max(np.abs(res.u_hat.T @ res.u_hat - np.eye(d))) < 1e-10
    assert np.max(np.abs(res.v_hat.T @ res.v_hat - np.eye(d))) < 1e-10
    assert np.all(np.diff(res.sing_vals) <= 0) and np.all(res.sing_vals >= 0)
    proj = q @ (q.T @ y)
    assert np.linalg.norm(res.reconstruct() - proj) <= 1e-10 * np.linalg.norm(proj)


class TestRangeFinder:
    def test_exact_low_rank_captured(self, rng):
        y = low_rank(rng, 60, 80, 4)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RankDeficiencyWarning)
            q = range_finder(y, make_sketch("gaussian", 10, 80, 1), 0)
        assert np.linalg.norm(q @ (q.T @ y) - y) <= 1e-9 * np.linalg.norm(y)

    def test_rank_deficiency_reported(self, rng):
        y = low_rank(rng, 60, 80, 4)
        with pytest.warns(RankDeficiencyWarning):
            range_finder(y, make_sketch("gaussian", 10, 80, 1), 0)

    @pytest.mark.parametrize("kind", SKETCH_KINDS)
    @pytest.mark.parametrize("q", [0, 1, 3])
    def test_orthonormal(self, kind, q, rng):
        y = rng.standard_normal((50, 64))
        qm = range_finder(y, make_sketch(kind, 12, 64, 2), q)
        assert qm.shape == (50, 12)
        assert np.max(np.abs(qm.T @ qm - np.eye(12))) < 1e-12

    def test_spans_sketch(self, rng):
        y = rng.standard_normal((40, 30))
        op = make_sketch("gaussian", 6, 30, 0)
        qm = range_finder(y, op, 0)
        s = y @ op.matrix().T
        assert np.linalg.norm(s - qm @ (qm.T @ s)) < 1e-10 * np.linalg.norm(s)

    def test_bad_q(self, rng):
        with pytest.raises(DomainError):
            range_finder(rng.standard_normal((5, 8)), make_sketch("gaussian", 2, 8, 0), -1)

    @pytest.mark.slow
    def test_power_iteration_helps(self):
        # q = 1 should not do worse than q = 0 on average
        n, d = 1000, 100
        p = ModelParams(1.0, d / n)
        sigma = 1.2 * 3.0
        gains = []
        for t in range(50):
            inst = sample_spiked(n, n, [sigma], seed=t)
            op = make_sketch("gaussian", d, n, 10_000 + t)
            o = []
            for q in (0, 1):
                res = rsvd(inst.Y, op, q, k=1)
                o.append(abs(inst.u_factors[:, 0] @ res.u_hat[:, 0]) * abs(inst.v_factors[:, 0] @ res.v_hat[:, 0]))
            gains.append(o[1] - o[0])
        assert p.beta == 0.1
        assert np.mean(gains) >= 0.0


class TestRsvd:
    def test_rank_one_exact(self, rng):
        n, m = 40, 50
        u = rng.standard_normal(n)
        v = rng.standard_normal(m)
        u /= np.linalg.norm(u)
        v /= np.linalg.norm(v)
        y = 3.5 * np.outer(u, v)
        for kind in ("gaussian", "haar", "coord"):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RankDeficiencyWarning)
                res = rsvd(y, make_sketch(kind, 8, m, 3), 0)
            if kind == "coord" and res.sing_vals[0] < 1:
                continue  # sampled coordinates may miss support; not the case for a dense v
            assert abs(res.sing_vals[0] - 3.5) < 1e-9
            assert np.all(res.sing_vals[1:] < 1e-9)

    @pytest.mark.parametrize("seed", range(20))
    def test_invariants_random(self, seed):
        rng = np.random.default_rng(seed)
        n, m = rng.integers(20, 60), rng.integers(20, 60)
        d = int(rng.integers(2, min(n, m)))
        y = rng.standard_normal((n, m))
        kind = ("gaussian", "haar", "coord")[seed % 3]  # srht needs power-of-two m
        op = make_sketch(kind, d, m, seed)
        res = rsvd(y, op, seed % 2)
        check_result(res, y, range_finder(y, op, seed % 2))
        assert res.q_used == seed % 2
        # projection contracts singular values
        full = np.linalg.svd(y, compute_uv=False)
        assert np.all(res.sing_vals <= full[:d] + 1e-10)
        assert res.sing_vals.size <= d

    def test_srht(self, rng):
        y = rng.standard_normal((30, 64))
        op = make_sketch("srht", 16, 64, 0)
        check_result(rsvd(y, op), y, range_finder(y, op))

    def test_deterministic(self, rng):
        y = rng.standard_normal((30, 40))
        a = rsvd(y, make_sketch("gaussian", 10, 40, 5), 1)
        b = rsvd(y, make_sketch("gaussian", 10, 40, 5), 1)
        assert np.array_equal(a.sing_vals, b.sing_vals) and np.array_equal(a.u_hat, b.u_hat)

    def test_top_k_matches_full(self, rng):
        y = rng.standard_normal((80, 100))
        op = make_sketch("gaussian", 30, 100, 1)
        full = rsvd(y, op)
        top = rsvd(y, op, k=3)
        assert_allclose(top.sing_vals, full.sing_vals[:3], rtol=1e-10)
        for j in range(3):
            assert abs(abs(top.u_hat[:, j] @ full.u_hat[:, j]) - 1) < 1e-8
            assert abs(abs(top.v_hat[:, j] @ full.v_hat[:, j]) - 1) < 1e-8
        with pytest.raises(DomainError):
            rsvd(y, op, k=31)

    def test_top_k_degenerate_falls_back(self, rng):
        y = low_rank(rng, 30, 40, 2)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RankDeficiencyWarning)
            res = rsvd(y, make_sketch("gaussian", 6, 40, 0), k=4)
        assert np.max(np.abs(res.v_hat.T @ res.v_hat - np.eye(4))) < 1e-10

    def test_reduced_values(self, rng):
        y = rng.standard_normal((30, 40))
        op = make_sketch("haar", 10, 40, 2)
        assert_allclose(reduced_singular_values(y, op), rsvd(y, op).sing_vals, rtol=1e-12)

    def test_no_reduction_matches_full_svd(self, rng):
        # with d >= n the range finder spans everything and the SVD is exact
        y = rng.standard_normal((20, 40))
        res = rsvd(y, make_sketch("gaussian", 30, 40, 0))
        ref = full_svd_reference(y, 20)
        assert_allclose(res.sing_vals, ref.sing_vals, rtol=1e-10)

    def test_halko_bound(self):
        rng = np.random.default_rng(3)
        n, m, k, d = 120, 150, 5, 20
        errs, bound = [], None
        y = low_rank(rng, n, m, k) + 0.05 * rng.standard_normal((n, m))
        s = np.linalg.svd(y, compute_uv=False)
        for t in range(20):
            res = rsvd(y, make_sketch("gaussian", d, m, t))
            errs.append(np.linalg.norm(y - res.reconstruct(), 2))
        bound = (1 + 4 * math.sqrt(d) / (d - k - 1) * math.sqrt(min(n, m))) * s[k]
        assert np.mean(errs) <= bound

    @pytest.mark.slow
    def test_pure_noise_edge(self):
        p = ModelParams(1.0, 0.5)
        inst = sample_spiked(2000, 2000, [], seed=1)
        res = rsvd(inst.Y, make_sketch("gaussian", 1000, 2000, 2), k=1)
        assert abs(res.sing_vals[0] ** 2 - bulk_edges(p)[1]) < 0.1


class TestFullSvd:
    def test_eckart_young(self, rng):
        y = rng.standard_normal((30, 25))
        s = np.linalg.svd(y, compute_uv=False)
        for k in (1, 5, 24):
            ref = full_svd_reference(y, k)
            assert abs(np.linalg.norm(y - ref.reconstruct(), 2) - s[k]) < 1e-10

    def test_zero_rank(self, rng):
        y = rng.standard_normal((10, 12))
        ref = full_svd_reference(y, 0)
        assert np.array_equal(ref.reconstruct(), np.zeros((10, 12)))
        assert_allclose(np.linalg.norm(y - ref.reconstruct(), 2), np.linalg.norm(y, 2))

    def test_bad_k(self, rng):
        with pytest.raises(DomainError):
            full_svd_reference(rng.standard_normal((4, 5)), 5)
