"""Effective sample size via Geyer's initial monotone sequence estimator."""

from dataclasses import dataclass

import numpy as np

# series up to this length use direct summation with early exit
DIRECT_MAX = 10_000


class DegenerateSeries(ValueError):
    """Raised when a series has zero sample variance."""


def _centered(series):
    x = np.asarray(series, dtype=float).ravel()
    if x.size < 2:
        raise DegenerateSeries("need at least two values")
    x = x - x.mean()
    if not np.any(x):
        raise DegenerateSeries("series has zero variance")
    return x


def _autocov_direct(x, max_lag):
    n = x.size
    return np.array([x[: n - k] @ x[k:] for k in range(max_lag + 1)]) / n


def _autocov_fft(x, max_lag):
    n = x.size
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conj(f), size)[: max_lag + 1]
    return acov / n


def autocovariance(series, max_lag=None, method="auto") -> np.ndarray:
    """Biased sample autocovariances ``gamma(k) = sum_t x_t x_{t+k} / B``.

    Args:
        series: One-dimensional chain of length ``B``.
        max_lag: Largest lag returned; defaults to ``B // 2``.
        method: ``"direct"``, ``"fft"`` or ``"auto"`` (direct for ``B <= 10^4``).

    Raises:
        DegenerateSeries: if the series is constant or too short.
    """
    x = _centered(series)
    n = x.size
    max_lag = n // 2 if max_lag is None else min(int(max_lag), n - 1)
    if method == "auto":
        method = "direct" if n <= DIRECT_MAX else "fft"
    if method == "direct":
        return _autocov_direct(x, max_lag)
    if method == "fft":
        return _autocov_fft(x, max_lag)
    raise ValueError(f"unknown method {method!r}")


def _monotone_pair_sum(pair_at, n_pairs_max):
    """Sum of Geyer pair sums, truncated and monotonised.

    ``pair_at(m)`` returns ``gamma(2m) + gamma(2m+1)``. Returns the sum and
    the number of pairs kept.
    """
    total = 0.0
    prev = np.inf
    m = 0
    while m < n_pairs_max:
        pair = pair_at(m)
        if pair < 0:
            break
        prev = min(prev, pair)
        total += prev
        m += 1
    return total, m


def initial_monotone_sum(series, max_lag=None):
    """Return ``(tau, n_pairs)`` where ``tau = 1 + 2 sum_k rho(k)``.

    Lags are consumed in pairs ``(2m, 2m + 1)`` until the first negative
    pair sum; kept pair sums are forced to be non-increasing.
    """
    x = _centered(series)
    n = x.size
    max_lag = n // 2 if max_lag is None else min(int(max_lag), n - 1)
    n_pairs_max = (max_lag + 1) // 2
    if n <= DIRECT_MAX:
        gamma0 = float(x @ x) / n

        def pair_at(m):
            k = 2 * m
            return (x[: n - k] @ x[k:] + x[: n - k - 1] @ x[k + 1:]) / n
    else:
        acov = _autocov_fft(x, 2 * n_pairs_max)
        gamma0 = float(acov[0])

        def pair_at(m):
            return acov[2 * m] + acov[2 * m + 1]

    total, kept = _monotone_pair_sum(pair_at, n_pairs_max)
    return -1.0 + 2.0 * total / gamma0, kept


def ess_initial_monotone(series, max_lag=None) -> float:
    """Effective sample size ``B / (1 + 2 sum_k rho(k))`` clamped to ``[1, B]``."""
    n = np.asarray(series).size
    tau, _ = initial_monotone_sum(series, max_lag)
    if tau <= 1.0:
        return float(n)
    return float(min(max(n / tau, 1.0), n))


@dataclass
class EssReport:
    per_dimension_ess: np.ndarray
    min: float
    median: float
    max: float
    min_ess_per_second: float

    @property
    def triple(self):
        return (self.min, self.median, self.max)

    def format(self) -> str:
        return "({:.0f},{:.0f},{:.0f})".format(*self.triple)


def ess_per_dimension(samples) -> np.ndarray:
    """ESS of each column; constant columns count as a single effective draw."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    out = np.empty(samples.shape[1])
    for d in range(samples.shape[1]):
        try:
            out[d] = ess_initial_monotone(samples[:, d])
        except DegenerateSeries:
            out[d] = 1.0
    return out


def summarize(samples, seconds) -> EssReport:
    """Per-dimension ESS, its (min, median, max) and ``min ESS / seconds``.

    ``seconds`` is the total time spent producing the kept samples.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.shape[0] < 2:
        raise DegenerateSeries("need at least two kept samples")
    ess = ess_per_dimension(samples)
    lo = float(ess.min())
    rate = lo / seconds if seconds > 0 else np.inf
    return EssReport(ess, lo, float(np.median(ess)), float(ess.max()), rate)
