"""Covariance estimation, spatial-filter fitting, feature extraction."""

import numpy as np
import pytest

from sgfb.csp import (
    CspModel,
    class_covariance,
    extract_features,
    fit_csp,
    fit_csp_model,
    normalized_covariance,
)
from sgfb.epochs import EegEpoch
from sgfb.errors import DimensionError, EmptyClassError, ParameterError


def make_epoch(data, label=1, fs=100.0):
    return EegEpoch(data=np.asarray(data, dtype=float), fs_hz=fs, label=label)


class TestNormalizedCovariance:
    def test_identity_rows(self):
        C = normalized_covariance(np.eye(2))
        assert np.allclose(C, np.diag([0.5, 0.5]))

    def test_unit_trace(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            C = normalized_covariance(rng.standard_normal((4, 50)))
            assert abs(np.trace(C) - 1.0) <= 1e-12
            assert np.allclose(C, C.T)

    def test_hand_computed(self):
        X = np.array([[1.0, 1.0], [1.0, -1.0]])
        assert np.allclose(normalized_covariance(X), 0.25 * np.diag([2.0, 2.0]))

    def test_zero_epoch_rejected(self):
        with pytest.raises(ParameterError):
            normalized_covariance(np.zeros((2, 10)))


class TestClassCovariance:
    def test_single_trial(self):
        rng = np.random.default_rng(1)
        data = rng.standard_normal((3, 40))
        ep = make_epoch(data, label=1)
        centered = data - data.mean(axis=1, keepdims=True)
        assert np.allclose(class_covariance([ep], 1), normalized_covariance(centered))

    def test_two_identical_trials(self):
        rng = np.random.default_rng(2)
        data = rng.standard_normal((3, 40))
        eps = [make_epoch(data, 1), make_epoch(data, 1)]
        assert np.allclose(class_covariance(eps, 1), class_covariance(eps[:1], 1))

    def test_three_trials_match_direct_average(self):
        rng = np.random.default_rng(3)
        eps = [make_epoch(rng.standard_normal((4, 30)), 2) for _ in range(3)]
        expected = np.zeros((4, 4))
        for ep in eps:
            c = ep.data - ep.data.mean(axis=1, keepdims=True)
            expected += (c @ c.T) / np.trace(c @ c.T)
        expected /= 3
        assert np.max(np.abs(class_covariance(eps, 2) - expected)) <= 1e-12

    def test_only_requested_class_used(self):
        rng = np.random.default_rng(4)
        a = make_epoch(rng.standard_normal((3, 30)), 1)
        b = make_epoch(rng.standard_normal((3, 30)), 2)
        assert np.allclose(class_covariance([a, b], 1), class_covariance([a], 1))

    def test_empty_class_rejected(self):
        ep = make_epoch(np.random.default_rng(5).standard_normal((3, 30)), 1)
        with pytest.raises(EmptyClassError):
            class_covariance([ep], 2)


def random_class_covs(rng, n):
    A = rng.standard_normal((n, n))
    s1 = A @ A.T + 0.5 * np.eye(n)
    B = rng.standard_normal((n, n))
    s2 = B @ B.T + 0.5 * np.eye(n)
    s1 /= np.trace(s1)
    s2 /= np.trace(s2)
    return s1, s2


class TestFitCsp:
    def test_symmetric_classes_no_discrimination(self):
        # identical class covariances: every generalized eigenvalue is 0.5
        s = np.eye(2) / 2.0
        W = fit_csp(s, s, 1, shrinkage=0.0)
        for w in W.T:
            lam = w @ s @ w  # w is scaled so w^T (s1+s2) w = 1
            assert abs(lam - 0.5) <= 1e-10

    def test_analytic_diagonal_case(self):
        s1 = np.diag([4.0, 1.0]) / 5.0
        s2 = np.diag([1.0, 4.0]) / 5.0
        W = fit_csp(s1, s2, 1)
        top, bottom = W[:, 0], W[:, 1]
        assert abs(top @ [1, 0]) / np.linalg.norm(top) >= 0.999
        assert abs(bottom @ [0, 1]) / np.linalg.norm(bottom) >= 0.999

    def test_rayleigh_dominance_over_random_vectors(self):
        rng = np.random.default_rng(6)
        for _ in range(3):
            s1, s2 = random_class_covs(rng, 6)
            W = fit_csp(s1, s2, 1)
            top = W[:, 0]
            j_top = (top @ s1 @ top) / (top @ s2 @ top)
            V = rng.standard_normal((10_000, 6))
            num = np.einsum("ij,jk,ik->i", V, s1, V)
            den = np.einsum("ij,jk,ik->i", V, s2, V)
            assert j_top >= np.max(num / den)

    def test_eigenvalue_pairing(self):
        # lambda against (s1+s2) lies in (0,1); the s2 eigenvalue is 1-lambda
        rng = np.random.default_rng(7)
        s1, s2 = random_class_covs(rng, 5)
        W = fit_csp(s1, s2, 2, shrinkage=0.0)
        for w in W.T:
            lam1 = w @ s1 @ w
            lam2 = w @ s2 @ w
            assert 0.0 < lam1 < 1.0
            assert abs(lam1 + lam2 - 1.0) <= 1e-8

    def test_whitened_orthogonality(self):
        rng = np.random.default_rng(8)
        s1, s2 = random_class_covs(rng, 6)
        W = fit_csp(s1, s2, 3, shrinkage=0.0)
        G = W.T @ (s1 + s2) @ W
        assert np.max(np.abs(G - np.eye(6))) <= 1e-7

    def test_denominator_form_ordering_equivalence(self):
        # eigenvalue order against (s1+s2) matches the order against s2
        # (the map lam -> lam/(1-lam) is monotone)
        rng = np.random.default_rng(9)
        s1, s2 = random_class_covs(rng, 6)
        W = fit_csp(s1, s2, 3, shrinkage=0.0)
        lam_comp = np.array([w @ s1 @ w for w in W.T])
        j_ratio = np.array([(w @ s1 @ w) / (w @ s2 @ w) for w in W.T])
        assert np.array_equal(np.argsort(-lam_comp), np.argsort(-j_ratio))

    def test_too_many_pairs_rejected(self):
        s1, s2 = random_class_covs(np.random.default_rng(10), 4)
        with pytest.raises(ParameterError):
            fit_csp(s1, s2, 3)


class TestExtractFeatures:
    def _model_identity(self, channels, bands=1):
        W = np.eye(channels)
        return CspModel(per_band=tuple(W.copy() for _ in range(bands)),
                        m_pairs=channels // 2)

    def test_unit_variance_gives_zero(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal(400)
        x = (x - x.mean()) / x.std()
        data = np.vstack([x, x])
        fv = extract_features(self._model_identity(2), [make_epoch(data)])
        assert np.allclose(fv.per_band[0], 0.0, atol=1e-12)

    def test_variance_100_gives_log_100(self):
        rng = np.random.default_rng(12)
        x = rng.standard_normal(400)
        x = 10.0 * (x - x.mean()) / x.std()
        data = np.vstack([x, x])
        fv = extract_features(self._model_identity(2), [make_epoch(data)])
        assert np.allclose(fv.per_band[0], np.log(100.0), atol=1e-9)

    def test_scaling_adds_two_log_c(self):
        rng = np.random.default_rng(13)
        data = rng.standard_normal((3, 200))
        model = self._model_identity(3)
        f1 = extract_features(model, [make_epoch(data)])
        f2 = extract_features(model, [make_epoch(3.0 * data)])
        assert np.allclose(
            f2.per_band[0] - f1.per_band[0], 2.0 * np.log(3.0), atol=1e-12
        )

    def test_dc_offset_invariance(self):
        rng = np.random.default_rng(14)
        data = rng.standard_normal((3, 200))
        shifted = data + np.array([[5.0], [-2.0], [40.0]])
        model = self._model_identity(3)
        f1 = extract_features(model, [make_epoch(data)])
        f2 = extract_features(model, [make_epoch(shifted)])
        assert np.allclose(f1.per_band[0], f2.per_band[0], atol=1e-9)

    def test_zero_variance_floored_and_counted(self):
        data = np.zeros((2, 100))
        data[0] = np.linspace(-1, 1, 100)  # channel 2 constant
        fv = extract_features(self._model_identity(2), [make_epoch(data)])
        assert fv.n_floored == 1
        assert fv.per_band[0][1] == np.log(1e-12)

    def test_band_count_mismatch_rejected(self):
        model = self._model_identity(2, bands=2)
        with pytest.raises(DimensionError):
            extract_features(model, [make_epoch(np.random.randn(2, 50))])


class TestEndToEndSeparation:
    def test_top_feature_separates_classes(self):
        # class 1: 10 Hz rhythm on channel 1; class 2: on channel 2
        rng = np.random.default_rng(15)
        fs = 100.0
        t = np.arange(200) / fs
        trials = []
        for label in (1, 2):
            for _ in range(30):
                noise = 0.3 * rng.standard_normal((4, t.size))
                tone = np.sin(2 * np.pi * 10.0 * t + rng.uniform(0, 2 * np.pi))
                noise[label - 1] += tone
                trials.append(make_epoch(noise, label=label, fs=fs))
        model = fit_csp_model([trials], m_pairs=1)
        feats = np.array(
            [extract_features(model, [tr]).per_band[0][0] for tr in trials]
        )
        labels = np.array([tr.label for tr in trials])
        f1, f2 = feats[labels == 1], feats[labels == 2]
        pooled_sd = np.sqrt(0.5 * (f1.var(ddof=1) + f2.var(ddof=1)))
        assert abs(f1.mean() - f2.mean()) >= 3.0 * pooled_sd
