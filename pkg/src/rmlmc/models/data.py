"""Dataset loading and deterministic synthetic generators."""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit


class ParseError(ValueError):
    """Raised for malformed or empty data files."""


class DimensionMismatch(ValueError):
    """Raised when rows or columns of a data file disagree."""


@dataclass
class Dataset:
    """Design matrix and response with a record of where they came from.

    Observation-only datasets (mixture, banana) keep the observations in
    ``y`` and an empty ``(N, 0)`` design matrix.
    """

    name: str
    X: np.ndarray
    y: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.X.shape[0] != self.y.shape[0]:
            raise DimensionMismatch(f"{self.X.shape[0]} design rows vs {self.y.shape[0]} responses")

    @property
    def n(self) -> int:
        return self.y.shape[0]


# (name, D with intercept, N) for the standard binary classification benchmarks.
# The files are not distributed with the package; place them under data/ as CSV.
BENCHMARK_DATASETS = {
    "australian": {"dim": 15, "n": 690, "source": "UCI Statlog (Australian Credit Approval)"},
    "german": {"dim": 25, "n": 1000, "source": "UCI Statlog (German Credit Data), numeric version"},
    "heart": {"dim": 14, "n": 270, "source": "UCI Statlog (Heart)"},
    "pima": {"dim": 8, "n": 532, "source": "Pima Indians Diabetes (MASS Pima.tr + Pima.te)"},
    "ripley": {"dim": 3, "n": 250, "source": "Ripley synthetic two-class data (MASS synth.tr)"},
}


def fetch_instructions(name) -> str:
    info = BENCHMARK_DATASETS[name]
    return (f"{name}: download '{info['source']}' ({info['n']} rows), convert to CSV with a "
            f"header row and the binary label in the last column, save as data/{name}.csv")


def _read_csv(path):
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except FileNotFoundError:
        raise
    except (OSError, UnicodeDecodeError) as exc:
        raise ParseError(f"{path}: {exc}") from None
    if len(rows) < 2:
        raise ParseError(f"{path}: expected a header row and at least one data row")
    header, body = rows[0], rows[1:]
    width = len(header)
    for i, r in enumerate(body, start=2):
        if len(r) != width:
            raise DimensionMismatch(f"{path}:{i}: {len(r)} fields, header has {width}")
    try:
        values = np.array([[float(c) for c in r] for r in body])
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None
    return header, values


def standardize(X):
    """Zero-mean, unit-variance columns (constant columns are only centred)."""
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    return (X - mean) / sd


def load_dataset(path, format="classification", name=None) -> Dataset:
    """Read a CSV file with a header row.

    ``format="classification"``: the last column holds a two-valued label,
    mapped to {0, 1} in sorted order; remaining columns are standardised and
    an intercept column is prepended. ``format="observations"``: a single
    column of real values.
    """
    path = Path(path)
    header, values = _read_csv(path)
    name = name or path.stem
    prov = {"source": "file", "path": str(path)}
    if format == "observations":
        if values.shape[1] != 1:
            raise DimensionMismatch(f"{path}: expected one column, found {values.shape[1]}")
        y = values[:, 0]
        return Dataset(name, np.empty((y.size, 0)), y, prov)
    if format != "classification":
        raise ValueError(f"unknown dataset format {format!r}")
    if values.shape[1] < 2:
        raise DimensionMismatch(f"{path}: need at least one covariate and a label column")
    labels = values[:, -1]
    levels = np.unique(labels)
    if levels.size != 2:
        raise ParseError(f"{path}: label column has {levels.size} distinct values, expected 2")
    y = (labels == levels[1]).astype(float)
    X = np.hstack([np.ones((y.size, 1)), standardize(values[:, :-1])])
    return Dataset(name, X, y, prov)


def synthesize_logreg(n, dim, seed, alpha=100.0, theta_scale=None) -> Dataset:
    """Logistic regression data with standard-normal covariates.

    The returned design has ``dim + 1`` columns (intercept first). The true
    coefficients are drawn from ``N(0, alpha I)`` unless ``theta_scale`` gives
    a different standard deviation.
    """
    if n < 1 or dim < 1:
        raise ValueError("n and dim must be positive")
    rng = np.random.default_rng(seed)
    sd = np.sqrt(alpha) if theta_scale is None else float(theta_scale)
    X = np.hstack([np.ones((n, 1)), rng.standard_normal((n, dim))])
    theta = sd * rng.standard_normal(dim + 1)
    y = (rng.random(n) < expit(X @ theta)).astype(float)
    prov = {"source": "synthesized", "generator": "logreg", "seed": int(seed),
            "n": int(n), "dim": int(dim), "theta_sd": float(sd), "theta_true": theta.tolist()}
    return Dataset(f"logreg_N{n}_D{dim}", X, y, prov)


# weight, mean, sd
MIXTURE_DENSITIES = {
    "kurtotic": [(2 / 3, 0.0, 1.0), (1 / 3, 0.0, 0.1)],
    "bimodal": [(0.5, -1.0, 2 / 3), (0.5, 1.0, 2 / 3)],
    "skewed": [(0.75, 0.0, 1.0), (0.25, 1.5, 1 / 3)],
    "trimodal": [(9 / 20, -6 / 5, 3 / 5), (9 / 20, 6 / 5, 3 / 5), (1 / 10, 0.0, 1 / 4)],
    "claw": [(0.5, 0.0, 1.0)] + [(0.1, i / 2 - 1, 0.1) for i in range(5)],
}


def synthesize_gmm(name, n, seed) -> Dataset:
    """Draw ``n`` points from one of the named mixture densities."""
    if name not in MIXTURE_DENSITIES:
        raise ValueError(f"unknown mixture {name!r}; choose from {sorted(MIXTURE_DENSITIES)}")
    if n < 1:
        raise ValueError("n must be positive")
    comps = MIXTURE_DENSITIES[name]
    weights = np.array([c[0] for c in comps])
    means = np.array([c[1] for c in comps])
    sds = np.array([c[2] for c in comps])
    rng = np.random.default_rng(seed)
    labels = rng.choice(len(comps), size=n, p=weights / weights.sum())
    x = means[labels] + sds[labels] * rng.standard_normal(n)
    prov = {"source": "synthesized", "generator": "gmm", "density": name,
            "seed": int(seed), "n": int(n), "components": len(comps)}
    return Dataset(name, np.empty((n, 0)), x, prov)


def synthesize_banana(n, seed, mean=1.0, sigma_y=2.0) -> Dataset:
    """Observations ``y ~ N(mean, sigma_y^2)`` where ``mean = theta_1 + theta_2^2``."""
    if n < 1 or not sigma_y > 0:
        raise ValueError("n and sigma_y must be positive")
    rng = np.random.default_rng(seed)
    y = mean + sigma_y * rng.standard_normal(n)
    prov = {"source": "synthesized", "generator": "banana", "seed": int(seed),
            "n": int(n), "mean": float(mean), "sigma_y": float(sigma_y)}
    return Dataset("banana", np.empty((n, 0)), y, prov)
