"""Left-truncated (at zero) normal distribution: density, moment-matching MLE and least-squares fits.

For X ~ N(mu, sigma^2) conditioned on X > 0, with r = mu / sigma and
Q(r) = phi(r) / Phi(r)::

    E[X | X > 0]   = mu + sigma * Q(r)
    Var[X | X > 0] = sigma^2 * (1 - Q(r) * (r + Q(r)))

so the ratio mean/std of the truncated sample depends on r alone and is
strictly increasing in it. ``fit_mle`` inverts that ratio with ``solve_r``
and back-substitutes sigma and mu.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import optimize
from scipy.special import log_ndtr
from scipy.stats import norm


logger = logging.getLogger(__name__)

R_BRACKET = (-40.0, 40.0)
SOLVER_XTOL = 1e-14
SOLVER_MAXITER = 200
RESIDUAL_TOLERANCE = 1e-10
OLS_GRID = 100
OLS_REFINE_PASSES = 3
OLS_REFINE_CELLS = 2


class DomainError(ValueError):
    """Raised for parameters outside a function's domain."""


class FitError(ValueError):
    """Raised when the data cannot support a fit."""


class NumericalError(RuntimeError):
    """Raised when the root solver does not converge; carries the residual."""

    def __init__(self, message: str, residual: Optional[float] = None):
        super().__init__(message)
        self.residual = residual


class FitMethod(str, Enum):
    OLS = "OLS"
    MLE = "MLE"


@dataclass(frozen=True)
class TruncNormalFit:
    mu: float
    sigma: float
    method: FitMethod
    diagnostics: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": self.method.value,
            "mu": self.mu,
            "sigma": self.sigma,
            "diagnostics": dict(self.diagnostics),
        }


@dataclass(frozen=True)
class Histogram:
    """Left-closed bins [k*w, (k+1)*w) starting at zero."""

    bin_width: float
    counts: np.ndarray
    sample_size: int

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(len(self.counts)) + 0.5) * self.bin_width

    @property
    def density(self) -> np.ndarray:
        return self.counts / (self.sample_size * self.bin_width)

    def rows(self) -> List[Tuple[float, float]]:
        return list(zip(self.centers.tolist(), self.density.tolist()))


def Q(r: float) -> float:
    """Standard normal density over its CDF at r, computed in log space."""
    return float(np.exp(norm.logpdf(r) - log_ndtr(r)))


def r_prime(r: float) -> float:
    """Mean over standard deviation of the truncated normal with mu/sigma = r."""
    q = Q(r)
    return (r + q) / math.sqrt(1.0 - q * (r + q))


def _variance_factor(r: float) -> float:
    q = Q(r)
    return 1.0 - q * (r + q)


def solve_r(target: float) -> float:
    """Invert r_prime by bracketed root finding.

    Args:
        target: Sample mean over sample standard deviation (> 0)

    Returns:
        r with |r_prime(r) - target| < 1e-10

    Raises:
        DomainError: If target <= 0
        NumericalError: If target lies below the attainable range or the solver fails
    """
    root, _ = _solve_r(target)
    return root


def _solve_r(target: float) -> Tuple[float, int]:
    if not target > 0:
        raise DomainError(f"r' must be positive, got {target}")
    low, high = R_BRACKET
    # far above the bracket the truncation vanishes and r' -> r
    high = max(high, 2.0 * target)

    def residual(r: float) -> float:
        return r_prime(r) - target

    floor = r_prime(low)
    if target <= floor:
        raise NumericalError(
            f"r'={target:.6g} is at or below r'({low:g})={floor:.12g}; no truncated normal has "
            f"a coefficient of variation this large",
            residual=floor - target,
        )
    try:
        root, result = optimize.brentq(
            residual, low, high, xtol=SOLVER_XTOL, maxiter=SOLVER_MAXITER, full_output=True
        )
    except (ValueError, RuntimeError) as e:
        raise NumericalError(f"Root solve for r'={target:.6g} failed: {e}") from e

    final = abs(residual(root))
    if not result.converged or final >= RESIDUAL_TOLERANCE:
        raise NumericalError(
            f"Root solve for r'={target:.6g} stopped at r={root!r} with residual {final:.3g}",
            residual=final,
        )
    logger.debug("solve_r(%r) = %r after %d iterations", target, root, result.iterations)
    return root, result.iterations


def truncnorm_pdf(x: Union[float, np.ndarray], mu: float, sigma: float) -> Union[float, np.ndarray]:
    """Density of N(mu, sigma^2) truncated to (0, inf); zero for x <= 0."""
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    values = np.asarray(x, dtype=float)
    log_density = norm.logpdf((values - mu) / sigma) - math.log(sigma) - log_ndtr(mu / sigma)
    density = np.where(values > 0, np.exp(log_density), 0.0)
    if np.ndim(x) == 0:
        return float(density)
    return density


def fit_mle(samples: Iterable[float]) -> TruncNormalFit:
    """Moment-matching fit of the truncated normal.

    Raises:
        FitError: Fewer than two samples, non-positive samples, or zero variance
        NumericalError: If r cannot be solved for
    """
    data = np.asarray(list(samples), dtype=float)
    if data.size < 2:
        raise FitError(f"MLE needs at least 2 samples, got {data.size}")
    if np.any(data <= 0):
        raise FitError("MLE samples must all be positive")
    mean = float(np.mean(data))
    std = float(np.std(data))
    if std == 0:
        raise FitError("MLE samples have zero variance")

    r, iterations = _solve_r(mean / std)
    sigma = std / math.sqrt(_variance_factor(r))
    return TruncNormalFit(
        mu=r * sigma,
        sigma=sigma,
        method=FitMethod.MLE,
        diagnostics={
            "samples": int(data.size),
            "sample_mean": mean,
            "sample_std": std,
            "r": r,
            "iterations": iterations,
            "residual": abs(r_prime(r) - mean / std),
        },
    )


def _sum_squares(centers: np.ndarray, density: np.ndarray,
                 mus: np.ndarray, sigmas: np.ndarray) -> np.ndarray:
    """Residual sum of squares on a (mu, sigma) grid."""
    rss = np.empty((len(mus), len(sigmas)))
    z_scale = sigmas[:, None]
    normalizer = np.log(sigmas)[:, None]
    for i, mu in enumerate(mus):
        log_pdf = norm.logpdf((centers[None, :] - mu) / z_scale) - normalizer - log_ndtr(mu / sigmas)[:, None]
        rss[i] = np.sum((np.exp(log_pdf) - density[None, :]) ** 2, axis=1)
    return rss


def fit_ols(histogram: Union[Histogram, Sequence[Tuple[float, float]]]) -> TruncNormalFit:
    """Least-squares fit of truncnorm_pdf to (bin_center, density) pairs.

    A 100x100 grid with mu over [min, max] of the centers and sigma over
    (0, range], followed by three passes of a 100x100 grid spanning two
    cells either side of the running best point.

    Raises:
        FitError: If fewer than three bins have positive density
    """
    pairs = histogram.rows() if isinstance(histogram, Histogram) else list(histogram)
    if not pairs:
        raise FitError("OLS needs a non-empty histogram")
    centers = np.asarray([c for c, _ in pairs], dtype=float)
    density = np.asarray([d for _, d in pairs], dtype=float)
    informative = int(np.count_nonzero(density > 0))
    if informative < 3:
        raise FitError(f"OLS needs at least 3 bins with positive density, got {informative}")

    low, high = float(centers.min()), float(centers.max())
    span = high - low
    mus = np.linspace(low, high, OLS_GRID)
    sigmas = np.linspace(span / OLS_GRID, span, OLS_GRID)

    rss = _sum_squares(centers, density, mus, sigmas)
    for _ in range(OLS_REFINE_PASSES):
        i, j = np.unravel_index(np.argmin(rss), rss.shape)
        mu_step = mus[1] - mus[0]
        sigma_step = sigmas[1] - sigmas[0]
        best_mu, best_sigma = mus[i], sigmas[j]
        mus = np.linspace(best_mu - OLS_REFINE_CELLS * mu_step,
                          best_mu + OLS_REFINE_CELLS * mu_step, OLS_GRID)
        sigma_low = max(best_sigma - OLS_REFINE_CELLS * sigma_step, sigma_step / OLS_GRID)
        sigmas = np.linspace(sigma_low, best_sigma + OLS_REFINE_CELLS * sigma_step, OLS_GRID)
        rss = _sum_squares(centers, density, mus, sigmas)

    i, j = np.unravel_index(np.argmin(rss), rss.shape)
    return TruncNormalFit(
        mu=float(mus[i]),
        sigma=float(sigmas[j]),
        method=FitMethod.OLS,
        diagnostics={
            "rss": float(rss[i, j]),
            "bins": len(pairs),
            "informative_bins": informative,
        },
    )


def estimate_pdf(values: Iterable[float], bin_width: float) -> Histogram:
    """Empirical density on left-closed bins from zero; sum(density * width) == 1.

    Raises:
        DomainError: For an empty sample, a non-positive width or negative values
    """
    if not bin_width > 0:
        raise DomainError(f"bin_width must be positive, got {bin_width}")
    data = np.asarray(list(values), dtype=float)
    if data.size == 0:
        raise DomainError("estimate_pdf needs at least one value")
    if np.any(data < 0):
        raise DomainError("estimate_pdf bins start at zero; negative values are not allowed")
    indices = np.floor(data / bin_width).astype(np.int64)
    return Histogram(bin_width=float(bin_width), counts=np.bincount(indices), sample_size=int(data.size))


@dataclass
class SeriesFit:
    """Histogram plus both fits of one positive-valued series."""

    name: str
    sample_size: int
    dropped_non_positive: int
    histogram: Optional[Histogram]
    fits: List[TruncNormalFit] = field(default_factory=list)
    errors: Dict[str, str] = field(default_factory=dict)
    numerical_failure: bool = False

    def to_dict(self) -> dict:
        return {
            "series": self.name,
            "samples": self.sample_size,
            "dropped_non_positive": self.dropped_non_positive,
            "fits": [fit.to_dict() for fit in self.fits],
            "errors": dict(self.errors),
        }


def fit_series(name: str, values: Iterable[float], bin_width: float) -> SeriesFit:
    """Drop non-positive values, then histogram and fit by both methods.

    Fit failures are recorded per method rather than raised so one degenerate
    series does not stop a report.
    """
    raw = [float(v) for v in values]
    positive = [v for v in raw if v > 0]
    series = SeriesFit(
        name=name,
        sample_size=len(positive),
        dropped_non_positive=len(raw) - len(positive),
        histogram=estimate_pdf(positive, bin_width) if positive else None,
    )
    for method, fit in ((FitMethod.MLE, lambda: fit_mle(positive)),
                        (FitMethod.OLS, lambda: fit_ols(series.histogram or []))):
        try:
            series.fits.append(fit())
        except (FitError, DomainError) as e:
            series.errors[method.value] = str(e)
            logger.info("%s fit of %s skipped: %s", method.value, name, e)
        except NumericalError as e:
            series.errors[method.value] = str(e)
            series.numerical_failure = True
            logger.error("%s fit of %s failed: %s", method.value, name, e)
    return series
