"""Per-class RGB color models: Gaussian mixtures fitted with EM.

Each semantic class gets its own mixture over RGB in [0, 255]^3.
Fitting runs standard EM independently per class, with covariances
regularized by +eps*I (eps = 1e-3) so degenerate sample sets stay
well-posed. The fitted log-likelihood trajectory is kept on the model
for monotonicity checks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .classes import NUM_CLASSES, SemanticClass

COV_REG = 1e-3
_LOG2PI = np.log(2 * np.pi)


class InsufficientDataError(ValueError):
    pass


@dataclass
class GaussianMixture:
    """One class's mixture: weights (K,), means (K,3), covs (K,3,3)."""

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    log_likelihoods: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.means = np.asarray(self.means, dtype=np.float64)
        self.covs = np.asarray(self.covs, dtype=np.float64)
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError(f"mixture weights sum to {self.weights.sum()}, expected 1")

    @property
    def n_components(self) -> int:
        return len(self.weights)

    def log_density(self, rgb: np.ndarray) -> np.ndarray:
        """Log p(x) for an (n,3) array of RGB values, shape (n,)."""
        x = np.atleast_2d(np.asarray(rgb, dtype=np.float64))
        comp = _component_log_densities(x, self.means, self.covs)
        comp += np.log(np.maximum(self.weights, 1e-300))
        m = comp.max(axis=1, keepdims=True)
        return (m + np.log(np.exp(comp - m).sum(axis=1, keepdims=True)))[:, 0]

    def sample(self, rng: np.random.Generator, n: int = 1) -> np.ndarray:
        """Draw n RGB samples, clamped to [0, 255]; shape (n, 3)."""
        ks = rng.choice(self.n_components, size=n, p=self.weights)
        out = np.empty((n, 3))
        for i, k in enumerate(ks):
            L = np.linalg.cholesky(self.covs[k] + 1e-12 * np.eye(3))
            out[i] = self.means[k] + L @ rng.standard_normal(3)
        return np.clip(out, 0.0, 255.0)


def _component_log_densities(x: np.ndarray, means: np.ndarray, covs: np.ndarray) -> np.ndarray:
    """(n, K) log N(x | mu_k, Sigma_k)."""
    n, d = x.shape
    k = len(means)
    out = np.empty((n, k))
    for j in range(k):
        L = np.linalg.cholesky(covs[j])
        diff = (x - means[j]).T
        sol = np.linalg.solve(L, diff)
        out[:, j] = -0.5 * (d * _LOG2PI + (sol ** 2).sum(axis=0)) - np.log(np.diag(L)).sum()
    return out


def fit_gaussian_mixture(
    samples: np.ndarray,
    components: int,
    max_iter: int = 100,
    tol: float = 1e-6,
    seed: int = 0,
) -> GaussianMixture:
    """EM fit of one mixture; log-likelihood is non-decreasing per iteration."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("samples must be (n, d)")
    n, d = x.shape
    rng = np.random.default_rng(seed)

    # init: distinct sample points as means, pooled covariance
    idx = rng.choice(n, size=components, replace=False)
    means = x[idx].copy()
    base_cov = np.cov(x.T) if n > 1 else np.zeros((d, d))
    base_cov = np.atleast_2d(base_cov) + COV_REG * np.eye(d)
    covs = np.repeat(base_cov[None, :, :], components, axis=0)
    weights = np.full(components, 1.0 / components)

    lls: list[float] = []
    for _ in range(max_iter):
        # E-step
        logp = _component_log_densities(x, means, covs) + np.log(np.maximum(weights, 1e-300))
        m = logp.max(axis=1, keepdims=True)
        lse = m + np.log(np.exp(logp - m).sum(axis=1, keepdims=True))
        ll = float(lse.sum())
        resp = np.exp(logp - lse)
        lls.append(ll)
        # M-step
        nk = resp.sum(axis=0)
        nk = np.maximum(nk, 1e-12)
        weights = nk / nk.sum()
        means = (resp.T @ x) / nk[:, None]
        for j in range(components):
            diff = x - means[j]
            covs[j] = (resp[:, j, None] * diff).T @ diff / nk[j] + COV_REG * np.eye(d)
        if len(lls) >= 2:
            prev = lls[-2]
            if abs(ll - prev) <= tol * max(abs(prev), 1.0):
                break
    return GaussianMixture(weights=weights, means=means, covs=covs, log_likelihoods=lls)


@dataclass
class ColorModel:
    """Per-class Gaussian mixtures over RGB."""

    mixtures: dict[int, GaussianMixture]

    def __contains__(self, cls) -> bool:
        return int(cls) in self.mixtures

    def mixture(self, cls) -> GaussianMixture:
        try:
            return self.mixtures[int(cls)]
        except KeyError:
            raise KeyError(f"color model has no class {int(cls)}") from None

    def classes(self) -> list[int]:
        return sorted(self.mixtures)

    def to_json(self) -> dict:
        return {
            str(cls): {
                "weights": gm.weights.tolist(),
                "means": gm.means.tolist(),
                "covs": gm.covs.tolist(),
            }
            for cls, gm in self.mixtures.items()
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ColorModel":
        mixtures = {
            int(k): GaussianMixture(weights=v["weights"], means=v["means"], covs=v["covs"])
            for k, v in obj.items()
        }
        return cls(mixtures=mixtures)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=1, sort_keys=True)

    @classmethod
    def load(cls, path) -> "ColorModel":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def fit_color_model(
    pixels_by_class: dict[int, np.ndarray],
    components: int = 3,
    max_iter: int = 100,
    tol: float = 1e-6,
    seed: int = 0,
) -> ColorModel:
    """Fit one mixture per class; each class needs >= components*10 samples."""
    mixtures = {}
    for cls, samples in sorted(pixels_by_class.items()):
        x = np.asarray(samples, dtype=np.float64).reshape(-1, 3)
        if len(x) < components * 10:
            name = SemanticClass(cls).name if 0 <= int(cls) < NUM_CLASSES else str(cls)
            raise InsufficientDataError(
                f"class {name}: {len(x)} samples < {components * 10} required for {components} components"
            )
        mixtures[int(cls)] = fit_gaussian_mixture(x, components, max_iter=max_iter, tol=tol, seed=seed)
    return ColorModel(mixtures=mixtures)


def sample_color(model: ColorModel, cls, rng: np.random.Generator) -> tuple[int, int, int]:
    """One RGB draw for a class, rounded to ints in [0, 255]."""
    rgb = model.mixture(cls).sample(rng, 1)[0]
    r, g, b = np.rint(rgb).astype(int)
    return int(r), int(g), int(b)


def load_default_color_model() -> ColorModel:
    """The packaged default model (fitted offline from reference palettes)."""
    with resources.files("mapseg.data").joinpath("default_colors.json").open("r") as fh:
        return ColorModel.from_json(json.load(fh))
