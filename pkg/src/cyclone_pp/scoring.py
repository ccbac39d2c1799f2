"""CRPS machinery: closed form, integral-definition oracle, gradients, skill.

The continuous ranked probability score of a predictive CDF F against an
observation y is the squared L2 distance between F and the step function at
y. For a Gaussian N(mu, sigma^2) it collapses to

    CRPS = sigma * (z * (2 * Phi(z) - 1) + 2 * phi(z) - 1 / sqrt(pi)),
    z = (y - mu) / sigma,

which is what the training loop differentiates. The quadrature routine
evaluates the defining integral directly and exists purely as an independent
cross-check of the closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import ndtr

SQRT_PI = np.sqrt(np.pi)
SQRT_2PI = np.sqrt(2.0 * np.pi)


def _check_sigma(sigma) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0) or not np.all(np.isfinite(sigma)):
        raise ValueError("sigma must be finite and > 0")
    return sigma


def crps_gaussian(mu, sigma, y):
    """Closed-form Gaussian CRPS, elementwise over broadcastable arrays.

    Parameters
    ----------
    mu, sigma : array_like
        Predictive mean and standard deviation; sigma must be > 0.
    y : array_like
        Verifying observation.

    Returns
    -------
    ndarray or float
        Non-negative score in the units of y (mm here).
    """
    sigma = _check_sigma(sigma)
    mu = np.asarray(mu, dtype=float)
    y = np.asarray(y, dtype=float)
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(y))):
        raise ValueError("mu and y must be finite")
    z = (y - mu) / sigma
    phi = np.exp(-0.5 * z * z) / SQRT_2PI
    out = sigma * (z * (2.0 * ndtr(z) - 1.0) + 2.0 * phi - 1.0 / SQRT_PI)
    # guard against tiny negative round-off in the z ~ 0, sigma ~ 0 corner
    out = np.maximum(out, 0.0)
    return out if out.ndim else float(out)


def crps_gradient(mu, sigma, y):
    """Analytic partial derivatives of :func:`crps_gaussian`.

    Returns (dCRPS/dmu, dCRPS/dsigma) with

        dCRPS/dmu    = -(2 * Phi(z) - 1)
        dCRPS/dsigma = 2 * phi(z) - 1 / sqrt(pi)
    """
    sigma = _check_sigma(sigma)
    mu = np.asarray(mu, dtype=float)
    y = np.asarray(y, dtype=float)
    z = (y - mu) / sigma
    phi = np.exp(-0.5 * z * z) / SQRT_2PI
    dmu = -(2.0 * ndtr(z) - 1.0)
    dsigma = 2.0 * phi - 1.0 / SQRT_PI
    return dmu, dsigma


def crps_quadrature_oracle(mu: float, sigma: float, y: float) -> float:
    """Gaussian CRPS by numerical quadrature of the defining integral.

    Integrates [F(q) - 1{q >= y}]^2 over a wide truncated range, split at
    the observation so the integrand is smooth on each piece. Slow and
    scalar by design; it is the independent reference the closed form is
    verified against.
    """
    sigma = float(_check_sigma(sigma))
    mu = float(mu)
    y = float(y)

    lo = min(mu - 12.0 * sigma, y - sigma)
    hi = max(mu + 12.0 * sigma, y + sigma)

    def left(q):
        return ndtr((q - mu) / sigma) ** 2

    def right(q):
        return (ndtr((q - mu) / sigma) - 1.0) ** 2

    total = 0.0
    if lo < y:
        val, _ = quad(left, lo, y, epsabs=1e-13, epsrel=1e-11, limit=200)
        total += val
    if y < hi:
        val, _ = quad(right, y, hi, epsabs=1e-13, epsrel=1e-11, limit=200)
        total += val
    return total


@dataclass(frozen=True)
class GaussianField:
    """Per-cell (mu, sigma) forecast distribution over the grid."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        sigma = np.asarray(self.sigma, dtype=float)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        if mu.shape != sigma.shape:
            raise ValueError("mu and sigma must have the same shape")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
            raise ValueError("GaussianField values must be finite")
        if np.any(sigma <= 0):
            raise ValueError("sigma must be > 0 everywhere")

    def crps(self, observation: np.ndarray) -> np.ndarray:
        return crps_gaussian(self.mu, self.sigma, observation)


@dataclass(frozen=True)
class WeightScheme:
    """Per-report training weights keyed by fractional report index.

    Raw weight doubles with each successive distinct index (oldest = 1),
    and every report sharing an index (a noise copy and its source) shares
    the weight. Stored normalized so the weights of all reports that were
    used to build the scheme sum to 1.
    """

    weight_by_index: dict[float, float]

    def weights_for(self, indices) -> np.ndarray:
        try:
            return np.array([self.weight_by_index[float(i)] for i in indices])
        except KeyError as e:
            raise ValueError(f"no weight for report index {e.args[0]}") from e


def make_weights(indices, n_original: int) -> WeightScheme:
    """Build the temporal weight scheme for a list of training-report indices.

    ``indices`` may contain duplicates (noise copies share their source's
    fractional index). Distinct indices sorted ascending get raw weights
    1, 2, 4, ...; three plain originals therefore come out 1:2:4 and the
    six-slot augmented case 1:1:2:2:4:4. Normalization is over the report
    list, so duplicated indices count as many times as they appear.
    """
    idx = [float(i) for i in indices]
    if any(i < 1 or i > n_original for i in idx):
        raise ValueError(f"report indices must lie within [1, {n_original}]")
    distinct = sorted(set(idx))
    raw = {d: 2.0 ** rank for rank, d in enumerate(distinct)}
    total = sum(raw[i] for i in idx)
    return WeightScheme({d: raw[d] / total for d in distinct})


def weighted_loss(predictions, reports, weights: WeightScheme, mask: np.ndarray) -> float:
    """Temporally weighted mean CRPS over masked cells.

    Sum over reports of w_r times the mean closed-form CRPS over ``mask``
    cells, with w_r looked up by the report's fractional index.
    """
    if len(predictions) != len(reports):
        raise ValueError(f"{len(predictions)} predictions vs {len(reports)} reports")
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("mask selects no cells")
    w = weights.weights_for([r.index for r in reports])
    total = 0.0
    for wr, pred, rep in zip(w, predictions, reports):
        if rep.observation is None:
            raise ValueError(f"report {rep.index} has no observation")
        scores = crps_gaussian(pred.mu[mask], pred.sigma[mask], rep.observation[mask])
        total += wr * float(np.mean(scores))
    return total


def crpss(model_crps, reference_crps):
    """Skill score 1 - model/reference per cell; positive beats the reference.

    Cells where the reference score is exactly 0 are undefined and come back
    as NaN so callers can exclude them.
    """
    model_crps = np.asarray(model_crps, dtype=float)
    reference_crps = np.asarray(reference_crps, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = model_crps / reference_crps
    out = np.where(reference_crps > 0, 1.0 - ratio, np.nan)
    return out if out.ndim else float(out)
