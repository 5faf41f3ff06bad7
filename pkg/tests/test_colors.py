import numpy as np
import pytest

from mapseg.colors import (
    COV_REG,
    ColorModel,
    GaussianMixture,
    InsufficientDataError,
    fit_color_model,
    fit_gaussian_mixture,
    load_default_color_model,
    sample_color,
)


class TestEmFitting:
    def test_single_gaussian_recovers_sample_mean(self):
        rng = np.random.default_rng(0)
        true_mean = np.array([120.0, 80.0, 200.0])
        samples = rng.normal(true_mean, 15.0, size=(2000, 3))
        gm = fit_gaussian_mixture(samples, components=1, max_iter=50)
        # oracle: the sample mean; EM with one component must land on it
        sample_mean = samples.mean(axis=0)
        se = samples.std(axis=0, ddof=1) / np.sqrt(len(samples))
        assert np.all(np.abs(gm.means[0] - sample_mean) < 2 * se)
        sample_cov = np.cov(samples.T)
        assert np.allclose(gm.covs[0], sample_cov + COV_REG * np.eye(3), rtol=0.05, atol=0.5)

    def test_two_separated_clusters(self):
        rng = np.random.default_rng(1)
        a = rng.normal([40, 40, 40], 4.0, size=(600, 3))
        b = rng.normal([200, 210, 190], 4.0, size=(400, 3))
        samples = np.vstack([a, b])
        gm = fit_gaussian_mixture(samples, components=2, max_iter=200)
        # oracle: per-cluster sample means after nearest-mean assignment
        cluster_means = np.array([a.mean(axis=0), b.mean(axis=0)])
        for fitted in gm.means:
            nearest = cluster_means[np.argmin(np.linalg.norm(cluster_means - fitted, axis=1))]
            assert np.linalg.norm(fitted - nearest) < 5.0
        assert sorted(np.round(gm.weights, 1)) == [0.4, 0.6]

    def test_identical_samples_degenerate(self):
        samples = np.tile([10.0, 20.0, 30.0], (50, 1))
        gm = fit_gaussian_mixture(samples, components=1, max_iter=30)
        assert np.allclose(gm.means[0], [10, 20, 30], atol=1e-6)
        assert np.allclose(gm.covs[0], COV_REG * np.eye(3), atol=1e-6)

    def test_log_likelihood_monotone_20_random_datasets(self):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            k = int(rng.integers(1, 4))
            centers = rng.uniform(0, 255, size=(k, 3))
            samples = np.vstack([
                rng.normal(c, rng.uniform(3, 25), size=(int(rng.integers(80, 300)), 3))
                for c in centers
            ])
            gm = fit_gaussian_mixture(samples, components=k, max_iter=60, seed=seed)
            lls = np.asarray(gm.log_likelihoods)
            assert len(lls) >= 2
            drops = np.diff(lls)
            assert (drops >= -1e-8 * np.abs(lls[:-1])).all(), f"LL decreased (seed {seed})"

    def test_insufficient_samples_names_class(self):
        with pytest.raises(InsufficientDataError, match="WATER"):
            fit_color_model({4: np.zeros((5, 3))}, components=3)


class TestSampling:
    def _delta_model(self, mean=(10, 200, 30)):
        gm = GaussianMixture(weights=[1.0], means=[list(mean)], covs=[np.zeros((3, 3))])
        return ColorModel(mixtures={2: gm})

    def test_zero_covariance_always_the_mean(self):
        model = self._delta_model()
        rng = np.random.default_rng(9)
        for _ in range(20):
            assert sample_color(model, 2, rng) == (10, 200, 30)

    def test_fixed_seed_reproducible(self):
        model = load_default_color_model()
        a = sample_color(model, 4, np.random.default_rng(123))
        b = sample_color(model, 4, np.random.default_rng(123))
        assert a == b

    def test_component_frequencies_within_3_sigma(self):
        w = np.array([0.3, 0.7])
        gm = GaussianMixture(weights=w, means=[[0, 0, 0], [255, 255, 255]],
                             covs=[np.eye(3) * 0.01] * 2)
        rng = np.random.default_rng(77)
        n = 10_000
        draws = gm.sample(rng, n)
        high = (draws.mean(axis=1) > 128).sum()
        # binomial oracle for the bright component
        sigma = np.sqrt(n * w[1] * (1 - w[1]))
        assert abs(high - n * w[1]) < 3 * sigma

    def test_missing_class_raises(self):
        with pytest.raises(KeyError):
            sample_color(self._delta_model(), 5, np.random.default_rng(0))

    def test_clamped_to_rgb_range(self):
        gm = GaussianMixture(weights=[1.0], means=[[250.0, 5.0, 128.0]],
                             covs=[np.eye(3) * 400.0])
        rng = np.random.default_rng(3)
        draws = gm.sample(rng, 500)
        assert draws.min() >= 0 and draws.max() <= 255


class TestModelIO:
    def test_json_round_trip(self, tmp_path):
        model = load_default_color_model()
        path = tmp_path / "colors.json"
        model.save(path)
        back = ColorModel.load(path)
        assert back.classes() == model.classes()
        for cls in model.classes():
            assert np.allclose(back.mixture(cls).means, model.mixture(cls).means)
            assert np.allclose(back.mixture(cls).covs, model.mixture(cls).covs)

    def test_default_model_covers_all_classes(self):
        model = load_default_color_model()
        assert model.classes() == [0, 1, 2, 3, 4, 5]

    def test_pure_blue_scores_water_highest(self):
        model = load_default_color_model()
        blue = np.array([[0.0, 0.0, 255.0]])
        dens = {cls: float(model.mixture(cls).log_density(blue)[0]) for cls in model.classes()}
        assert max(dens, key=dens.get) == 4

    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValueError):
            GaussianMixture(weights=[0.5, 0.4], means=np.zeros((2, 3)),
                            covs=np.stack([np.eye(3)] * 2))
