import io
import math

import numpy as np
import pytest
from helpers import toy_dataset

from troplr._rng import stream
from troplr.core import normalize, trop_distance, trop_distances
from troplr.evaluation import misclassification_rate, roc_and_auc
from troplr.regression import (
    LAMBDA_BRACKET,
    ClassicalModel,
    DegenerateCentersError,
    OneSpeciesModel,
    TwoSpeciesModel,
    classify,
    decision_function,
    fit_classical_baseline,
    fit_one_species,
    fit_two_species,
    h_general,
    h_one_species,
    h_two_species,
    load_model,
    log_likelihood,
    predict_proba,
    save_model,
    sigmoid,
    two_species_score,
)
from troplr.sampling import TropicalLaplace, sample_points
from troplr.treeio import Dataset

O0 = normalize((0, 0, 0))
O1 = normalize((3, 2, 0))


def one_species_data(seed, n, s0, s1, center=(0, 0, 0), tag="one"):
    X0 = sample_points(TropicalLaplace(center, s0), n, stream(seed, tag, 0))
    X1 = sample_points(TropicalLaplace(center, s1), n, stream(seed, tag, 1))
    return Dataset(np.vstack([X0, X1]), np.r_[np.zeros(n, int), np.ones(n, int)])


def direct_loglik(p, y):
    return sum(math.log(pi) if yi == 1 else math.log(1 - pi) for pi, yi in zip(p, y)) / len(y)


class TestDecisionFunctions:
    def test_general_examples(self):
        rng = np.random.default_rng(0)
        for x in rng.normal(size=(20, 3)):
            assert h_general(x, O0, O0, 0.7, 0.7, 0.5) == 0
        assert h_general((0, 0, 0), O0, O1, 0.5, 0.5, 0.5) == -6

    def test_reductions(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            e = int(rng.integers(3, 8))
            x = rng.normal(size=e) * 3
            w0 = normalize(rng.normal(size=e))
            w1 = normalize(rng.normal(size=e))
            s0, s1 = sorted(rng.uniform(0.2, 5, size=2))
            r = float(rng.uniform(0.1, 0.9))
            one = OneSpeciesModel(w0, s0, s1, prior=r)
            assert h_general(x, w0, w0, s0, s1, r) == pytest.approx(h_one_species(one, x), abs=1e-12 * max(1, abs(h_one_species(one, x))))
            two = TwoSpeciesModel(w0, w1, s0, prior=r)
            assert h_general(x, w0, w1, s0, s0, r) == pytest.approx(h_two_species(two, x), abs=1e-12 * max(1, abs(h_two_species(two, x))))

    def test_one_species_threshold(self):
        m = OneSpeciesModel(O0, 1.0, 5.0)
        assert m.threshold == pytest.approx(1.25 * 2 * math.log(5))
        assert m.threshold == pytest.approx(4.0236, abs=1e-4)
        x = (m.threshold, 0.0, 0.0)
        assert h_one_species(m, x) == pytest.approx(0, abs=1e-12)
        assert predict_proba(m, x) == pytest.approx(0.5)
        # outside the circle the wider class wins, and the swap flag flips it
        assert h_one_species(m, (10, 0, 0)) > 0
        assert h_one_species(OneSpeciesModel(O0, 1.0, 5.0, swapped=True), (10, 0, 0)) < 0

    def test_two_species_examples(self):
        m = TwoSpeciesModel(O0, O1, 0.5)
        assert h_two_species(m, (1.5, 1, 0)) == pytest.approx(0.0)
        assert predict_proba(m, (1.5, 1.0, 0.0)) == pytest.approx(0.5)
        assert h_two_species(m, (3, 2, 0)) == 6
        assert predict_proba(m, (3, 2, 0)) == pytest.approx(0.9975, abs=1e-4)

    def test_sigmoid(self):
        assert sigmoid(0.0) == 0.5
        assert sigmoid(-6.0) == pytest.approx(0.00247, abs=1e-5)
        h = np.linspace(-800, 800, 101)
        np.testing.assert_allclose(sigmoid(-h), 1 - sigmoid(h), atol=1e-15)
        assert np.all(np.isfinite(sigmoid(h)))

    def test_label_swap_complements(self):
        m = TwoSpeciesModel(O0, O1, 0.5)
        flipped = TwoSpeciesModel(O1, O0, 0.5)
        X = np.random.default_rng(2).normal(size=(50, 3))
        np.testing.assert_allclose(predict_proba(m, X) + predict_proba(flipped, X), 1.0, atol=1e-15)

    def test_quotient_invariance(self):
        rng = np.random.default_rng(3)
        m = TwoSpeciesModel(O0, O1, 0.5)
        X = np.round(rng.normal(size=(200, 3)) * 1024) / 1024
        for c in (-3.5, 0.25, 17.0):
            np.testing.assert_array_equal(classify(m, X + c), classify(m, X))
            for x in X[:20]:
                assert h_general(x + c, np.asarray(O0) + c, np.asarray(O1) + c, 0.5, 0.7) == h_general(x, O0, O1, 0.5, 0.7)

    def test_model_validation(self):
        with pytest.raises(DegenerateCentersError):
            TwoSpeciesModel(O0, O0, 1.0)
        with pytest.raises(ValueError):
            OneSpeciesModel(O0, 2.0, 1.0)
        with pytest.raises(ValueError):
            TwoSpeciesModel(O0, O1, 1.0, prior=1.0)
        with pytest.raises(TypeError):
            decision_function(object(), (0, 0, 0))


class TestLogLikelihood:
    def test_zero_model(self):
        m = OneSpeciesModel(O0, 1.0, 1.0)
        ds = toy_dataset(0, n=10)
        assert log_likelihood(m, ds) == pytest.approx(-math.log(2))

    def test_confident_model(self):
        ds = Dataset([(0, 0, 0), (3, 2, 0)], [0, 1])
        vals = [log_likelihood(TwoSpeciesModel(O0, O1, s), ds) for s in (1.0, 0.1, 0.01)]
        assert vals[0] < vals[1] < vals[2] <= 0
        assert vals[2] > -1e-100

    def test_direct_summation(self):
        ds = toy_dataset(1, n=30)
        for m in (TwoSpeciesModel(O0, O1, 0.8), OneSpeciesModel(O0, 0.5, 2.0, True, 0.3),
                  ClassicalModel(np.array([1.0, -0.5]), 0.2)):
            p = predict_proba(m, ds.X)
            assert log_likelihood(m, ds) == pytest.approx(direct_loglik(p, ds.y), rel=1e-12)


class TestFitOneSpecies:
    def test_recovers_parameters(self):
        ds = one_species_data(0, 10_000, 1.0, 5.0)
        m = fit_one_species(ds)
        assert 0.9 <= m.sigma0 <= 1.1
        assert 4.5 <= m.sigma1 <= 5.5
        assert trop_distance(m.omega, (0, 0, 0)) < 0.2
        assert not m.swapped
        assert m.class_sigmas == (m.sigma0, m.sigma1)

    def test_label_swap(self):
        ds = one_species_data(1, 2000, 1.0, 4.0)
        flipped = Dataset(ds.X, 1 - ds.y)
        a, b = fit_one_species(ds), fit_one_species(flipped)
        assert a.swapped != b.swapped
        assert a.sigma0 == pytest.approx(b.sigma0, rel=1e-8)
        assert a.sigma1 == pytest.approx(b.sigma1, rel=1e-8)
        np.testing.assert_allclose(predict_proba(a, ds.X), 1 - predict_proba(b, ds.X), atol=1e-9)

    def test_equal_dispersions_give_coin_flip(self):
        ds = one_species_data(2, 5000, 2.0, 2.0)
        m = fit_one_species(ds)
        assert m.sigma1 / m.sigma0 < 1.05
        test = one_species_data(3, 5000, 2.0, 2.0)
        auc = roc_and_auc(decision_function(m, test.X), test.y).auc
        assert 0.45 <= auc <= 0.55

    def test_dispersions_maximize_likelihood_given_center(self):
        for seed in range(5):
            ds = one_species_data(seed, 300, 1.0, 3.0, tag="ml")
            m = fit_one_species(ds)
            best = log_likelihood(m, ds)
            for f0 in (0.9, 1.0, 1.1):
                for f1 in (0.9, 1.0, 1.1):
                    s0, s1 = m.sigma0 * f0, m.sigma1 * f1
                    assert best >= log_likelihood(OneSpeciesModel(m.omega, s0, s1), ds) - 1e-9
            assert best >= log_likelihood(OneSpeciesModel(m.omega, 1.0, 3.0), ds) - 1e-9

    def test_empirical_prior(self):
        ds = one_species_data(4, 200, 1.0, 3.0).subset(np.r_[0:200, 200:260])
        assert fit_one_species(ds, prior="empirical").prior == pytest.approx(60 / 260)

    def test_needs_both_classes(self):
        ds = one_species_data(5, 20, 1.0, 3.0)
        with pytest.raises(ValueError):
            fit_one_species(ds.subset(ds.y == 0))


class TestFitTwoSpecies:
    def test_toy_misclassifications(self):
        errors = []
        for seed in range(10):
            ds = toy_dataset(seed)
            m = fit_two_species(ds)
            errors.append(int((classify(m, ds.X) != ds.y).sum()))
            assert errors[-1] <= 20
        assert 2 <= np.mean(errors) <= 14

    def test_single_point_per_class(self):
        ds = Dataset([(0, 0, 0), (3, 2, 0)], [0, 1])
        m = fit_two_species(ds)
        assert m.omega0 == O0 and m.omega1 == O1
        np.testing.assert_array_equal(classify(m, ds.X), ds.y)
        X = np.random.default_rng(0).uniform(-2, 5, size=(500, 3))
        expected = (trop_distances(X, O1) <= trop_distances(X, O0)).astype(int)
        np.testing.assert_array_equal(classify(m, X), expected)

    def test_score_decreasing_at_root(self):
        for seed in range(5):
            ds = toy_dataset(seed, n=80, tag="score")
            m = fit_two_species(ds)
            margin = trop_distances(ds.X, m.omega0) - trop_distances(ds.X, m.omega1)
            lam = 1 / m.sigma
            assert LAMBDA_BRACKET[0] < lam < LAMBDA_BRACKET[1]
            assert two_species_score(lam, margin, ds.y, 0.0) == pytest.approx(0, abs=1e-10)
            assert two_species_score(lam * 0.99, margin, ds.y, 0.0) > two_species_score(lam * 1.01, margin, ds.y, 0.0)
            assert two_species_score(LAMBDA_BRACKET[0], margin, ds.y, 0.0) > 0 > two_species_score(LAMBDA_BRACKET[1], margin, ds.y, 0.0)

    def test_degenerate(self):
        ds = Dataset([(0, 0, 0), (0, 0, 0)], [0, 1])
        with pytest.raises(DegenerateCentersError):
            fit_two_species(ds)

    @pytest.mark.slow
    def test_consistency(self):
        w0, w1 = (0, 0, 0, 0), (3, 2, 1, 0)
        med_d, med_lam = [], []
        for N in (200, 800, 3200):
            dd, le = [], []
            for rep in range(30):
                n = N // 2
                X0 = sample_points(TropicalLaplace(w0, 0.5), n, stream(rep, "t2", N, 0))
                X1 = sample_points(TropicalLaplace(w1, 0.5), n, stream(rep, "t2", N, 1))
                m = fit_two_species(Dataset(np.vstack([X0, X1]), np.r_[np.zeros(n), np.ones(n)]))
                dd.append(max(trop_distance(m.omega0, w0), trop_distance(m.omega1, w1)))
                le.append(abs(1 / m.sigma - 2.0))
            med_d.append(np.median(dd))
            med_lam.append(np.median(le))
        assert med_d[0] > med_d[1] > med_d[2]
        assert med_lam[0] > med_lam[1] > med_lam[2]


class TestClassical:
    def test_separable_1d(self):
        X = np.array([(-2.0, 0), (-1.5, 0), (-1.0, 0), (1.0, 0), (1.5, 0), (2.0, 0)])
        m = fit_classical_baseline(Dataset(X, [0, 0, 0, 1, 1, 1]))
        boundary = -m.intercept / m.weights[0]
        assert -1.0 < boundary < 1.0
        np.testing.assert_array_equal(classify(m, X), [0, 0, 0, 1, 1, 1])

    def test_gradient_converged(self):
        ds = toy_dataset(0, n=50, sigma=1.0)
        m = fit_classical_baseline(ds)
        Z = np.column_stack([ds.X[:, :-1], np.ones(ds.n)])
        p = predict_proba(m, ds.X)
        beta = np.r_[m.weights, m.intercept]
        grad = Z.T @ (ds.y - p) / ds.n - 1e-6 * beta
        assert np.max(np.abs(grad)) < 1e-8

    def test_beats_tropical_on_gaussian_classes(self):
        sigma = 0.2
        et, ec = [], []
        for seed in range(10):
            r = stream(seed, "gauss")

            def make(n):
                X0 = np.column_stack([r.normal(0, sigma, (n, 2)), np.zeros(n)])
                X1 = np.column_stack([r.normal(0, sigma, (n, 2)) + [0.5, 0.3], np.zeros(n)])
                return Dataset(np.vstack([X0, X1]), np.r_[np.zeros(n), np.ones(n)])

            train, test = make(100), make(1000)
            et.append(misclassification_rate(fit_two_species(train), test))
            ec.append(misclassification_rate(fit_classical_baseline(train), test))
        assert np.mean(ec) < np.mean(et)

    @pytest.mark.parametrize("sigma", [0.4, 0.6, 0.8, 1.0])
    def test_loses_on_tropical_laplace(self, sigma):
        et, ec = [], []
        for seed in range(10):
            train = toy_dataset(seed, sigma=sigma, tag="cmp-train")
            test = toy_dataset(seed, n=2000, sigma=sigma, tag="cmp-test")
            et.append(misclassification_rate(fit_two_species(train), test))
            ec.append(misclassification_rate(fit_classical_baseline(train), test))
        assert np.mean(et) < np.mean(ec)


class TestPersistence:
    @pytest.mark.parametrize("kind", ["one", "two", "classical"])
    def test_round_trip_exact(self, kind):
        ds = toy_dataset(3, n=60)
        fit = {"one": fit_one_species, "two": fit_two_species, "classical": fit_classical_baseline}[kind]
        m = fit(ds)
        buf = io.StringIO()
        save_model(m, buf)
        back = load_model(io.StringIO(buf.getvalue()))
        assert type(back) is type(m)
        np.testing.assert_array_equal(predict_proba(back, ds.X), predict_proba(m, ds.X))
        buf2 = io.StringIO()
        save_model(back, buf2)
        assert buf2.getvalue() == buf.getvalue()

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            load_model(io.StringIO('{"kind": "nope"}'))
