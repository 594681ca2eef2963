"""Evaluation metrics: 2-D Frechet distance, total variation, mode coverage, NLL."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MIN_FRECHET_SAMPLES = 32
COV_REG = 1e-6


@dataclass
class GaussianFit:
    mean: np.ndarray
    cov: np.ndarray
    count: int

    @classmethod
    def of(cls, samples):
        samples = np.asarray(samples, dtype=np.float64)
        if samples.ndim != 2 or samples.shape[0] < 2:
            raise ValueError("need at least two samples")
        return cls(samples.mean(axis=0), np.cov(samples, rowvar=False), samples.shape[0])


def sqrt_spd_2x2(M):
    """Principal square root of a 2x2 SPD matrix in closed form."""
    M = np.asarray(M, dtype=np.float64)
    det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    tr = M[0, 0] + M[1, 1]
    if det <= 0 or tr <= 0:
        raise ValueError("matrix is not symmetric positive definite")
    s = np.sqrt(det)
    return (M + s * np.eye(2)) / np.sqrt(tr + 2.0 * s)


def frechet_gaussian(mu1, cov1, mu2, cov2):
    """||mu1 - mu2||^2 + tr(cov1 + cov2 - 2 (cov1 cov2)^(1/2)) for 2-D Gaussians."""
    r1 = sqrt_spd_2x2(cov1)
    cross = sqrt_spd_2x2(r1 @ cov2 @ r1)
    d = np.asarray(mu1) - np.asarray(mu2)
    val = float(d @ d + np.trace(cov1) + np.trace(cov2) - 2.0 * np.trace(cross))
    return max(val, 0.0) if val > -1e-8 else val


def _regularized_fit(samples):
    if len(samples) < MIN_FRECHET_SAMPLES:
        raise ValueError(f"Frechet distance needs >= {MIN_FRECHET_SAMPLES} samples, got {len(samples)}")
    fit = GaussianFit.of(samples)
    return fit.mean, fit.cov + COV_REG * np.eye(2)


def frechet_2d(samples_a, samples_b):
    mu1, c1 = _regularized_fit(samples_a)
    mu2, c2 = _regularized_fit(samples_b)
    return frechet_gaussian(mu1, c1, mu2, c2)


def frechet_to_reference(samples, mean, cov):
    mu1, c1 = _regularized_fit(samples)
    return frechet_gaussian(mu1, c1, mean, np.asarray(cov) + COV_REG * np.eye(2))


def tv_distance(p, q):
    p, q = np.asarray(p, dtype=np.float64), np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("probability vectors differ in length")
    if abs(p.sum() - 1) > 1e-9 or abs(q.sum() - 1) > 1e-9:
        raise ValueError("inputs must sum to 1")
    return 0.5 * float(np.abs(p - q).sum())


def empirical_distribution(world, tokens):
    counts = np.bincount(world.index_of(tokens), minlength=world.K).astype(np.float64)
    return counts / counts.sum()


def mode_coverage(samples, world, cls, radius_multiplier=3.0):
    """Fraction of the class's components with a sample within r * sqrt(lambda_max) of the mean."""
    if radius_multiplier <= 0:
        raise ValueError("radius_multiplier must be positive")
    comps = world.components(cls)
    samples = np.asarray(samples, dtype=np.float64).reshape(-1, 2)
    if len(samples) == 0:
        return 0.0
    hit = 0
    for j in comps:
        radius = radius_multiplier * np.sqrt(np.linalg.eigvalsh(world.covs[j]).max())
        if np.any(np.linalg.norm(samples - world.means[j], axis=1) <= radius):
            hit += 1
    return hit / len(comps)


def avg_nll(samples, world, cls=None):
    samples = np.asarray(samples)
    if len(samples) == 0:
        raise ValueError("no samples")
    return float(-np.mean(world.log_density(samples, None if cls is None else cls)))
