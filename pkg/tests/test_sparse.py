"""Dictionary construction, the multi-band solver, and classification."""

import numpy as np
import pytest

from oracles import objective_reference, solve_by_sign_enumeration
from sgfb.csp import FeatureVector
from sgfb.errors import DimensionError, EmptyClassError, ParameterError
from sgfb.sparse import (
    TOL_KKT,
    BandDictionary,
    SgfbHyperparams,
    build_dictionary,
    cap_unit_norm,
    centering_matrix,
    classify,
    coupling_penalty_sum,
    coupling_penalty_trace,
    kkt_violation,
    mutual_coherence,
    normalize_columns,
    objective_value,
    sgfb_solve,
    src_classify,
    src_solve,
)


def random_dictionary(rng, bands=2, dim=4, cols=5, shared=False, capped=True):
    blocks = []
    base = rng.normal(size=(dim, cols))
    for _ in range(bands):
        D = base.copy() if shared else rng.normal(size=(dim, cols))
        if capped:
            D = D / np.maximum(np.linalg.norm(D, axis=0), 1.0)
        blocks.append(D)
    half = cols // 2
    classes = np.array([1] * half + [2] * (cols - half))
    return BandDictionary(
        blocks=tuple(blocks),
        column_class=classes,
        column_trial=np.arange(cols),
    )


def random_y(rng, dic):
    return [cap_unit_norm(rng.normal(size=dic.feature_dim)) for _ in range(dic.band_count)]


def make_features(rng, n_per_class, bands, dim):
    feats = []
    for label in (1, 2):
        for _ in range(n_per_class):
            feats.append(
                FeatureVector(
                    per_band=tuple(rng.normal(size=dim) for _ in range(bands)),
                    label=label,
                )
            )
    return feats


class TestCenteringMatrix:
    def test_idempotent_symmetric_zero_rowsum(self):
        for b in (1, 2, 5, 9):
            M = centering_matrix(b)
            assert np.max(np.abs(M - M.T)) <= 1e-12
            assert np.max(np.abs(M @ M - M)) <= 1e-12
            assert np.max(np.abs(M.sum(axis=1))) <= 1e-12

    def test_identity_sum_vs_trace(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            u = rng.normal(size=(6, 4))
            assert abs(coupling_penalty_sum(u) - coupling_penalty_trace(u)) <= 1e-10


class TestBuildDictionary:
    def test_shape_and_class_order(self):
        rng = np.random.default_rng(1)
        feats = make_features(rng, 1, bands=2, dim=2)
        dic = build_dictionary(feats)
        assert dic.band_count == 2
        assert all(b.shape == (2, 2) for b in dic.blocks)
        assert list(dic.column_class) == [1, 2]

    def test_class_column_monotone(self):
        rng = np.random.default_rng(2)
        feats = make_features(rng, 4, bands=3, dim=5)
        rng.shuffle(feats)
        dic = build_dictionary(feats)
        assert np.all(np.diff(dic.column_class) >= 0)

    def test_round_trip_entries(self):
        rng = np.random.default_rng(3)
        feats = make_features(rng, 3, bands=2, dim=4)
        dic = build_dictionary(feats)
        for b in range(2):
            for j in range(dic.n_columns):
                src = feats[dic.column_trial[j]]
                assert np.array_equal(dic.blocks[b][:, j], src.per_band[b])

    def test_missing_class_rejected(self):
        rng = np.random.default_rng(4)
        feats = [
            FeatureVector(per_band=(rng.normal(size=3),), label=1) for _ in range(3)
        ]
        with pytest.raises(EmptyClassError):
            build_dictionary(feats)


class TestNormalizeColumns:
    def test_long_column_scaled(self):
        dic = BandDictionary(
            blocks=(np.array([[3.0], [4.0]]),),
            column_class=np.array([1]),
            column_trial=np.array([0]),
        )
        # a one-class dictionary is not buildable, but normalization is
        # independent of classes; patch in a second column
        dic = BandDictionary(
            blocks=(np.array([[3.0, 0.3], [4.0, 0.4]]),),
            column_class=np.array([1, 2]),
            column_trial=np.array([0, 1]),
        )
        out = normalize_columns(dic)
        assert np.allclose(out.blocks[0][:, 0], [0.6, 0.8])
        assert np.allclose(out.blocks[0][:, 1], [0.3, 0.4])  # norm 0.5: untouched

    def test_max_norm_capped(self):
        rng = np.random.default_rng(5)
        dic = random_dictionary(rng, bands=3, dim=6, cols=8, capped=False)
        out = normalize_columns(dic)
        assert out.max_column_norm() <= 1.0 + 1e-12
        assert out.scale_factors is not None

    def test_zero_column_flagged(self):
        dic = BandDictionary(
            blocks=(np.array([[0.0, 1.0], [0.0, 1.0]]),),
            column_class=np.array([1, 2]),
            column_trial=np.array([0, 1]),
        )
        out = normalize_columns(dic)
        assert out.zero_columns == ((0, 0),)
        assert np.all(out.blocks[0][:, 0] == 0.0)


class TestMutualCoherence:
    def test_identical_identity_columns(self):
        assert mutual_coherence(np.eye(3), np.eye(3)) == 1.0

    def test_orthogonal(self):
        e1 = np.array([[1.0], [0.0]])
        e2 = np.array([[0.0], [1.0]])
        assert mutual_coherence(e1, e2) == 0.0

    def test_matches_exhaustive_scan(self):
        rng = np.random.default_rng(6)
        L = rng.normal(size=(4, 3))
        R = rng.normal(size=(4, 3))
        L /= np.linalg.norm(L, axis=0)
        R /= np.linalg.norm(R, axis=0)
        expected = max(
            abs(float(L[:, j] @ R[:, k])) for j in range(3) for k in range(3)
        )
        assert abs(mutual_coherence(L, R) - expected) <= 1e-14

    def test_symmetric_and_bounded(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            L = rng.normal(size=(5, 4))
            R = rng.normal(size=(5, 6))
            L /= np.linalg.norm(L, axis=0)
            R /= np.linalg.norm(R, axis=0)
            m1 = mutual_coherence(L, R)
            m2 = mutual_coherence(R, L)
            assert abs(m1 - m2) <= 1e-14
            assert 0.0 <= m1 <= 1.0 + 1e-12

    def test_row_mismatch_rejected(self):
        with pytest.raises(DimensionError):
            mutual_coherence(np.eye(3), np.eye(4))


class TestObjective:
    def test_zero_code(self):
        rng = np.random.default_rng(8)
        dic = random_dictionary(rng)
        y = random_y(rng, dic)
        hp = SgfbHyperparams(lam=0.1, lam1=0.2)
        u = np.zeros((dic.n_columns, dic.band_count))
        expected = 0.5 * sum(float(np.dot(v, v)) for v in y)
        assert abs(objective_value(u, y, dic, hp) - expected) <= 1e-12

    def test_matches_independent_reference(self):
        rng = np.random.default_rng(9)
        dic = random_dictionary(rng, bands=3, dim=5, cols=6)
        y = random_y(rng, dic)
        hp = SgfbHyperparams(lam=0.17, lam1=0.31)
        for _ in range(10):
            u = rng.normal(size=(6, 3))
            ref = objective_reference(u, y, dic.blocks, hp.lam, hp.lam1)
            assert abs(objective_value(u, y, dic, hp) - ref) <= 1e-10


class TestSolver:
    def test_null_threshold_gives_exact_zero(self):
        rng = np.random.default_rng(10)
        dic = random_dictionary(rng)
        y = random_y(rng, dic)
        lam = max(float(np.max(np.abs(b.T @ v))) for b, v in zip(dic.blocks, y))
        code = sgfb_solve(y, dic, SgfbHyperparams(lam=lam, lam1=0.0))
        assert np.all(code.coeffs == 0.0)
        assert np.all(code.signs == 0)

    def test_orthonormal_unconstrained(self):
        rng = np.random.default_rng(11)
        Q1 = np.linalg.qr(rng.normal(size=(4, 4)))[0]
        Q2 = np.linalg.qr(rng.normal(size=(4, 4)))[0]
        dic = BandDictionary(
            blocks=(Q1, Q2),
            column_class=np.array([1, 1, 2, 2]),
            column_trial=np.arange(4),
        )
        y = [0.3 * rng.normal(size=4), 0.3 * rng.normal(size=4)]
        code = sgfb_solve(y, dic, SgfbHyperparams(lam=0.0, lam1=0.0))
        assert np.max(np.abs(code.coeffs[:, 0] - Q1.T @ y[0])) <= 1e-10
        assert np.max(np.abs(code.coeffs[:, 1] - Q2.T @ y[1])) <= 1e-10

    def test_oracle_equivalence_small(self):
        rng = np.random.default_rng(12)
        for _ in range(5):
            dic = random_dictionary(rng)
            y = random_y(rng, dic)
            for lam, lam1 in ((0.05, 0.0), (0.2, 0.1)):
                code = sgfb_solve(y, dic, SgfbHyperparams(lam=lam, lam1=lam1))
                ref_obj, _ = solve_by_sign_enumeration(y, dic.blocks, lam, lam1)
                assert abs(code.objective - ref_obj) <= 1e-6

    def test_kkt_and_monotone_trace(self):
        rng = np.random.default_rng(13)
        for _ in range(10):
            dic = random_dictionary(rng, bands=3, dim=6, cols=8)
            y = random_y(rng, dic)
            hp = SgfbHyperparams(lam=0.1, lam1=0.2)
            code = sgfb_solve(y, dic, hp)
            assert kkt_violation(code.coeffs, y, dic, hp) <= TOL_KKT
            trace = code.objective_trace
            for a, b in zip(trace, trace[1:]):
                assert b <= a + 1e-9 * max(1.0, abs(a))
            assert np.array_equal(np.sign(code.coeffs), code.signs)

    def test_signs_match_coeffs(self):
        rng = np.random.default_rng(14)
        dic = random_dictionary(rng)
        y = random_y(rng, dic)
        code = sgfb_solve(y, dic, SgfbHyperparams(lam=0.05, lam1=0.1))
        assert np.array_equal(np.sign(code.coeffs).astype(np.int8), code.signs)

    def test_coupling_limit_pulls_columns_together(self):
        rng = np.random.default_rng(15)
        dic = random_dictionary(rng, bands=3, dim=4, cols=6)
        y = random_y(rng, dic)
        code = sgfb_solve(
            y, dic, SgfbHyperparams(lam=0.05, lam1=1e6, max_outer_iters=3000)
        )
        u = code.coeffs
        ubar = u.mean(axis=1)
        dev = max(np.linalg.norm(u[:, b] - ubar) for b in range(3))
        assert dev <= 1e-3 * (1.0 + np.linalg.norm(ubar))

    def test_single_band_reduces_to_src(self):
        rng = np.random.default_rng(16)
        dic = random_dictionary(rng, bands=1, dim=4, cols=6)
        y = random_y(rng, dic)
        code = sgfb_solve(y, dic, SgfbHyperparams(lam=0.12, lam1=0.0))
        theta = src_solve(y[0], dic.blocks[0], 0.12)
        obj_src = 0.5 * float(np.sum((y[0] - dic.blocks[0] @ theta) ** 2)) + 0.12 * float(
            np.abs(theta).sum()
        )
        assert abs(code.objective - obj_src) <= 1e-8

    def test_cross_band_bound_shared_columns(self):
        # with the same column serving both bands, stationarity forces
        # lam1 * (u_i - u_j) = alpha^T (r_i - r_j) for same-sign actives
        rng = np.random.default_rng(17)
        for _ in range(20):
            dic = random_dictionary(rng, bands=2, shared=True)
            y = random_y(rng, dic)
            for lam1 in (0.1, 0.4):
                code = sgfb_solve(y, dic, SgfbHyperparams(lam=0.1, lam1=lam1))
                u = code.coeffs
                r = [y[b] - dic.blocks[b] @ u[:, b] for b in range(2)]
                bound = np.linalg.norm(r[0] - r[1]) / lam1 + TOL_KKT
                for k in range(dic.n_columns):
                    if u[k, 0] != 0 and u[k, 1] != 0 and np.sign(u[k, 0]) == np.sign(u[k, 1]):
                        delta = abs(u[k, 0] - u[k, 1])
                        assert delta <= bound
                        exact = abs(float(dic.blocks[0][:, k] @ (r[0] - r[1]))) / lam1
                        assert abs(delta - exact) <= 3 * TOL_KKT / lam1

    def test_unnormalized_dictionary_rejected(self):
        rng = np.random.default_rng(18)
        dic = random_dictionary(rng, capped=False)
        if dic.max_column_norm() <= 1.0:
            pytest.skip("random draw happened to be normalized")
        y = random_y(rng, dic)
        with pytest.raises(ParameterError):
            sgfb_solve(y, dic, SgfbHyperparams(lam=0.1, lam1=0.1))

    def test_rank_deficient_lam_zero_reaches_exact_fit(self):
        # more columns than rows with lam = 0: the data term can reach zero
        # and the degenerate-active-set machinery must still terminate
        rng = np.random.default_rng(19)
        dic = random_dictionary(rng, bands=1, dim=3, cols=6)
        y = random_y(rng, dic)
        code = sgfb_solve(y, dic, SgfbHyperparams(lam=0.0, lam1=0.0))
        resid = y[0] - dic.blocks[0] @ code.coeffs[:, 0]
        assert np.linalg.norm(resid) <= 1e-8
        assert code.objective <= 1e-12


class TestClassify:
    def test_self_representation(self):
        rng = np.random.default_rng(20)
        dic = random_dictionary(rng, bands=2, dim=6, cols=8)
        dic = normalize_columns(dic)
        y = [dic.blocks[b][:, 0].copy() for b in range(2)]  # class-1 column
        code = sgfb_solve(y, dic, SgfbHyperparams(lam=1e-6, lam1=0.0))
        decision = classify(y, dic, code)
        assert decision.label == 1
        assert decision.residuals[0] <= 1e-3

    def test_zero_code_ties_to_class_one(self):
        rng = np.random.default_rng(21)
        dic = random_dictionary(rng)
        y = random_y(rng, dic)
        lam = max(float(np.max(np.abs(b.T @ v))) for b, v in zip(dic.blocks, y))
        code = sgfb_solve(y, dic, SgfbHyperparams(lam=lam, lam1=0.0))
        decision = classify(y, dic, code)
        stacked = np.sqrt(sum(float(np.dot(v, v)) for v in y))
        assert decision.tie
        assert decision.label == 1
        assert abs(decision.residuals[0] - stacked) <= 1e-12
        assert abs(decision.residuals[1] - stacked) <= 1e-12

    def test_agreement_with_nearest_neighbor(self):
        # separable synthetic features: sparse-residual labels should agree
        # with 1-NN on the stacked features in >= 90% of trials
        rng = np.random.default_rng(22)
        bands, dim, n_train = 2, 6, 10
        mu1 = rng.normal(size=bands * dim)
        mu2 = rng.normal(size=bands * dim)
        mu2 = mu2 / np.linalg.norm(mu2) * np.linalg.norm(mu1)

        def draw(label, n):
            mu = mu1 if label == 1 else mu2
            return [mu + 0.15 * rng.normal(size=bands * dim) for _ in range(n)]

        train = [(v, 1) for v in draw(1, n_train)] + [(v, 2) for v in draw(2, n_train)]
        feats = [
            FeatureVector(
                per_band=tuple(v[b * dim:(b + 1) * dim] for b in range(bands)),
                label=label,
            )
            for v, label in train
        ]
        dic = normalize_columns(build_dictionary(feats))
        train_stack = np.column_stack(
            [np.concatenate(f.per_band) for f in (feats[i] for i in dic.column_trial)]
        )
        hp = SgfbHyperparams(lam=0.05, lam1=0.1)
        agree = 0
        total = 40
        for label in (1, 2):
            for v in draw(label, total // 2):
                y = [cap_unit_norm(v[b * dim:(b + 1) * dim]) for b in range(bands)]
                code = sgfb_solve(y, dic, hp)
                pred = classify(y, dic, code).label
                from oracles import nearest_neighbor_label

                nn = nearest_neighbor_label(
                    np.concatenate(y), train_stack, dic.column_class
                )
                agree += int(pred == nn)
        assert agree >= int(0.9 * total)


class TestSrc:
    def test_self_column_classified(self):
        rng = np.random.default_rng(23)
        X = rng.normal(size=(6, 8))
        X /= np.maximum(np.linalg.norm(X, axis=0), 1.0)
        classes = np.array([1, 1, 1, 1, 2, 2, 2, 2])
        y = X[:, 5].copy()
        theta = src_solve(y, X, 1e-6)
        decision = src_classify(y, X, theta, classes)
        assert decision.label == 2

    def test_null_threshold(self):
        rng = np.random.default_rng(24)
        X = rng.normal(size=(5, 7))
        X /= np.maximum(np.linalg.norm(X, axis=0), 1.0)
        y = cap_unit_norm(rng.normal(size=5))
        lam = float(np.max(np.abs(X.T @ y)))
        assert np.all(src_solve(y, X, lam) == 0.0)

    def test_small_instance_matches_oracle(self):
        rng = np.random.default_rng(25)
        for _ in range(5):
            X = rng.normal(size=(4, 5))
            X /= np.maximum(np.linalg.norm(X, axis=0), 1.0)
            y = cap_unit_norm(rng.normal(size=4))
            lam = 0.1
            theta = src_solve(y, X, lam)
            obj = 0.5 * float(np.sum((y - X @ theta) ** 2)) + lam * float(
                np.abs(theta).sum()
            )
            ref_obj, _ = solve_by_sign_enumeration([y], [X], lam, 0.0)
            assert abs(obj - ref_obj) <= 1e-6
