import numpy as np
import pytest

import queryguard.ensemble as ensemble_mod
from queryguard.ensemble import (
    DEFAULT_SPECS,
    LogisticSpec,
    MlpSpec,
    RandomForestSpec,
    TooFewSamples,
    fit_base,
    out_of_fold_scores,
    stack_fit,
    stratified_folds,
)
from queryguard.features import DegenerateLabels
from queryguard.svm import decision_values


def _blobs(seed=0, n_per=30, d=4):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(-1.5, 0.8, size=(n_per, d)), rng.normal(1.5, 0.8, size=(n_per, d))])
    y = np.array([-1.0] * n_per + [1.0] * n_per)
    return X, y


class TestStratifiedFolds:
    def test_balanced_within_class(self):
        y = np.array([1.0] * 13 + [-1.0] * 22)
        folds = stratified_folds(y, 5, seed=0)
        for cls in (1.0, -1.0):
            counts = np.bincount(folds[y == cls], minlength=5)
            assert counts.max() - counts.min() <= 1

    def test_every_fold_nonempty(self):
        y = np.array([1.0] * 6 + [-1.0] * 6)
        folds = stratified_folds(y, 5, seed=1)
        assert set(folds.tolist()) == set(range(5))

    def test_seeded(self):
        y = np.array([1.0] * 10 + [-1.0] * 10)
        assert np.array_equal(stratified_folds(y, 4, 7), stratified_folds(y, 4, 7))
        assert not np.array_equal(stratified_folds(y, 4, 7), stratified_folds(y, 4, 8))


class TestBaseLearners:
    @pytest.mark.parametrize("spec", DEFAULT_SPECS, ids=lambda s: s.kind)
    def test_scores_bounded_and_separating(self, spec):
        X, y = _blobs()
        model = fit_base(spec, X, y)
        scores = model.score(X)
        assert scores.shape == (len(y),)
        assert np.all(scores >= -1.0) and np.all(scores <= 1.0)
        # easy blobs: sign agreement on nearly all training points
        assert np.mean(np.sign(scores) == y) >= 0.9

    @pytest.mark.parametrize("spec", DEFAULT_SPECS, ids=lambda s: s.kind)
    def test_deterministic(self, spec):
        X, y = _blobs(3)
        a = fit_base(spec, X, y).score(X)
        b = fit_base(spec, X, y).score(X)
        assert np.array_equal(a, b)

    def test_single_class_rejected(self):
        X = np.random.default_rng(0).normal(size=(10, 3))
        with pytest.raises(DegenerateLabels):
            fit_base(LogisticSpec(), X, np.ones(10))

    def test_forest_votes_average(self):
        X, y = _blobs(5, n_per=20)
        model = fit_base(RandomForestSpec(trees=7, max_depth=3), X, y)
        scores = model.score(X)
        # mean of 7 votes in {-1,1}: multiples of 1/7
        assert np.allclose(np.round(scores * 7), scores * 7, atol=1e-9)

    def test_unknown_spec(self):
        with pytest.raises(TypeError):
            fit_base(object(), np.zeros((4, 2)), np.array([1.0, 1.0, -1.0, -1.0]))


class TestOutOfFoldScores:
    def test_no_leakage_instrumented(self):
        # P8: every held-out row must be absent from the matrix its scorer saw
        X, y = _blobs(11, n_per=20)
        row_key = {X[i].tobytes(): i for i in range(len(y))}
        fits = []
        real_fit = ensemble_mod.fit_base

        def spying_fit(spec, Xf, yf):
            fits.append({row_key[row.tobytes()] for row in Xf})
            return real_fit(spec, Xf, yf)

        ensemble_mod.fit_base = spying_fit
        try:
            S, folds = out_of_fold_scores(X, y, DEFAULT_SPECS, k=4, seed=2)
        finally:
            ensemble_mod.fit_base = real_fit
        assert len(fits) == 4 * len(DEFAULT_SPECS)
        for fold in range(4):
            held = set(np.flatnonzero(folds == fold).tolist())
            for spec_i in range(len(DEFAULT_SPECS)):
                train_rows = fits[fold * len(DEFAULT_SPECS) + spec_i]
                assert not (train_rows & held)
                assert train_rows | held == set(range(len(y)))

    def test_every_row_scored(self):
        X, y = _blobs(12, n_per=15)
        S, folds = out_of_fold_scores(X, y, DEFAULT_SPECS, k=3, seed=0)
        assert S.shape == (len(y), len(DEFAULT_SPECS))
        # all-zero score rows would mean a row was never held out
        assert set(folds.tolist()) == {0, 1, 2}

    def test_oof_worse_than_in_sample_for_memorizer(self):
        # a deep forest memorizes its training rows; the OOF path must not
        # benefit from that memory
        X, y = _blobs(13, n_per=25)
        spec = RandomForestSpec(trees=15, max_depth=12)
        in_sample = fit_base(spec, X, y).score(X)
        S, _ = out_of_fold_scores(X, y, [spec], k=5, seed=1)
        agree_in = np.mean(np.sign(in_sample) == y)
        agree_oof = np.mean(np.sign(S[:, 0]) == y)
        assert agree_in >= agree_oof


class TestStackFit:
    def test_decision_separates(self):
        X, y = _blobs(20, n_per=25)
        stack = stack_fit(X, y, meta_C=0.5, k_folds=5, seed=0)
        f = stack.decision_values(X)
        assert np.mean(np.sign(f) == y) >= 0.9

    def test_meta_features_shape(self):
        X, y = _blobs(21, n_per=20)
        stack = stack_fit(X, y, k_folds=4, seed=0)
        M = stack.meta_features(X[:7])
        assert M.shape == (7, len(DEFAULT_SPECS))
        assert np.all(np.abs(M) <= 1.0)

    def test_too_few_samples(self):
        X, y = _blobs(22, n_per=2)  # minority class of 2 < 5 folds
        with pytest.raises(TooFewSamples):
            stack_fit(X, y, k_folds=5, seed=0)
        with pytest.raises(TooFewSamples):
            stack_fit(X[:3], np.array([1.0, -1.0, 1.0]), k_folds=4, seed=0)

    def test_deterministic(self):
        X, y = _blobs(23, n_per=15)
        a = stack_fit(X, y, k_folds=3, seed=9)
        b = stack_fit(X, y, k_folds=3, seed=9)
        assert np.array_equal(a.meta.coeffs, b.meta.coeffs)
        assert a.meta.bias == b.meta.bias
        assert np.array_equal(a.oof_decision, b.oof_decision)

    def test_row_order_invariance_with_ids(self):
        # same pool in a different order plus stable ids: identical model
        X, y = _blobs(24, n_per=15)
        ids = np.arange(len(y))
        rng = np.random.default_rng(4)
        perm = rng.permutation(len(y))
        a = stack_fit(X, y, k_folds=3, seed=5, ids=ids)
        b = stack_fit(X[perm], y[perm], k_folds=3, seed=5, ids=ids[perm])
        assert np.array_equal(a.meta.coeffs, b.meta.coeffs)
        assert a.meta.bias == b.meta.bias
        assert np.array_equal(a.oof_decision[perm], b.oof_decision)
        probe = X[:5]
        assert np.array_equal(a.decision_values(probe), b.decision_values(probe))

    def test_oof_decision_is_out_of_fold(self):
        # P8: the stored training decisions equal the meta SVM applied to the
        # out-of-fold score matrix, not to refit-base features
        X, y = _blobs(25, n_per=20)
        stack = stack_fit(X, y, meta_C=0.5, k_folds=4, seed=3)
        S, _ = out_of_fold_scores(X, y, stack.specs, 4, seed=3)
        want = decision_values(stack.meta, S)
        assert np.allclose(stack.oof_decision, want, atol=1e-12)
        in_sample = stack.decision_values(X)
        assert not np.allclose(stack.oof_decision, in_sample)
