"""
Synthetic surrogate cohort.

The real cohort is not redistributable, so tables are generated from per-class
marginal quartiles (the descriptive statistics table). Each (feature, class)
column is drawn from a log-normal whose median matches the given median and
whose quartiles match the given quartiles in the least-squares sense.
Columns are independent unless a Spearman target matrix is supplied, in which
case a Gaussian copula couples them.
"""

import json
import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.stats import norm

from .core.exceptions import InputError
from .core.seeding import make_rng
from .data_models import CATALOG, FeatureTable

logger = logging.getLogger(__name__)

DEFAULT_SPEC_PATH = Path(__file__).parent / "data" / "table3_spec.json"

# z-score of the upper quartile of the standard normal
_Z75 = float(norm.ppf(0.75))

Quartiles = Tuple[float, float, float]


@dataclass(frozen=True)
class MarginalFit:
    """Shifted log-normal X = shift + exp(mu + sigma * Z); sigma == 0 means constant."""
    mu: float
    sigma: float
    shift: float
    constant: Optional[float] = None

    def transform(self, z: np.ndarray) -> np.ndarray:
        if self.constant is not None:
            return np.full(z.shape, self.constant)
        return self.shift + np.exp(self.mu + self.sigma * z)


@dataclass(frozen=True)
class SyntheticSpec:
    """
    Per-class marginals of every feature plus class sizes and seed.

    ``marginals`` maps feature_no to ``{0: (median, q25, q75), 1: (...)}``.
    ``spearman`` optionally holds a target rank-correlation matrix in the
    order of the sorted feature numbers.
    """
    marginals: Dict[int, Dict[int, Quartiles]]
    n_survived: int = 2364
    n_nonsurvived: int = 233
    seed: int = 0
    spearman: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.n_survived < 1 or self.n_nonsurvived < 1:
            raise InputError("Class sizes must be positive")
        if not self.marginals:
            raise InputError("Synthetic spec has no features")
        for feature_no, per_class in self.marginals.items():
            CATALOG.get(feature_no)
            for label in (0, 1):
                if label not in per_class:
                    raise InputError(f"Feature {feature_no} lacks quartiles for class {label}")
                median, q25, q75 = per_class[label]
                if not q25 <= median <= q75:
                    raise InputError(
                        f"Feature {CATALOG.name(feature_no)} class {label}: "
                        f"need q25 <= median <= q75, got ({median}, {q25}, {q75})")
        if self.spearman is not None:
            size = len(self.marginals)
            if np.shape(self.spearman) != (size, size):
                raise InputError(f"Spearman target must be {size}x{size}")

    @property
    def feature_nos(self) -> Tuple[int, ...]:
        return tuple(sorted(self.marginals))


def fit_marginal(median: float, q25: float, q75: float) -> MarginalFit:
    """
    Fit a shifted log-normal to a (median, q25, q75) triple.

    The median is matched exactly. With the median pinned, the least-squares
    fit of the two log-quartiles gives sigma = (ln q75' - ln q25') / (2 z75).
    When q25 <= 0 the distribution is shifted so that q25 maps to half the
    interquartile range above the shift.
    """
    if q25 == q75:
        return MarginalFit(mu=0.0, sigma=0.0, shift=0.0, constant=float(median))

    shift = 0.0
    if q25 <= 0:
        shift = q25 - 0.5 * (q75 - q25)
    median_s, q25_s, q75_s = median - shift, q25 - shift, q75 - shift
    mu = math.log(median_s)
    sigma = (math.log(q75_s) - math.log(q25_s)) / (2.0 * _Z75)
    return MarginalFit(mu=mu, sigma=sigma, shift=shift)


def _latent_correlation(spearman: np.ndarray) -> np.ndarray:
    """Gaussian correlation reproducing a Spearman target, projected to be positive definite."""
    rho = np.clip(np.asarray(spearman, dtype=float), -1.0, 1.0)
    latent = 2.0 * np.sin(np.pi * rho / 6.0)
    latent = 0.5 * (latent + latent.T)
    np.fill_diagonal(latent, 1.0)
    eigval, eigvec = np.linalg.eigh(latent)
    eigval = np.clip(eigval, 1e-8, None)
    latent = (eigvec * eigval) @ eigvec.T
    scale = np.sqrt(np.diag(latent))
    return latent / np.outer(scale, scale)


def generate_synthetic(spec: SyntheticSpec) -> FeatureTable:
    """
    Draw a surrogate cohort from per-class marginals.

    Rows are ordered survived first, then non-survived. The output is
    bit-reproducible for a fixed ``spec.seed``.

    Args:
        spec: Marginals, class sizes and seed

    Returns:
        Finalized feature table with ``n_survived + n_nonsurvived`` rows
    """
    rng = make_rng(spec.seed)
    feature_nos = spec.feature_nos
    chol = None
    if spec.spearman is not None:
        chol = np.linalg.cholesky(_latent_correlation(spec.spearman))

    blocks = []
    for label, size in ((0, spec.n_survived), (1, spec.n_nonsurvived)):
        z = rng.standard_normal((size, len(feature_nos)))
        if chol is not None:
            z = z @ chol.T
        block = np.empty_like(z)
        for col, feature_no in enumerate(feature_nos):
            block[:, col] = fit_marginal(*spec.marginals[feature_no][label]).transform(z[:, col])
        blocks.append(block)

    values = np.vstack(blocks)
    labels = np.concatenate([np.zeros(spec.n_survived, dtype=np.int64),
                             np.ones(spec.n_nonsurvived, dtype=np.int64)])
    logger.info("Generated synthetic cohort: %d survived, %d non-survived, %d features",
                spec.n_survived, spec.n_nonsurvived, len(feature_nos))
    return FeatureTable(
        values=values,
        labels=labels,
        missing_mask=np.zeros(values.shape, dtype=bool),
        feature_nos=feature_nos,
    )


def load_synthetic_spec(path: Optional[Union[str, os.PathLike]] = None,
                        n_survived: int = 2364, n_nonsurvived: int = 233, seed: int = 0,
                        spearman: Optional[np.ndarray] = None) -> SyntheticSpec:
    """
    Load a spec file: a JSON object keyed by feature name, each value
    ``{"survived": [median, q25, q75], "non_survived": [median, q25, q75]}``.

    Args:
        path: Spec file; None loads the bundled descriptive-statistics table
        n_survived: Survived class size
        n_nonsurvived: Non-survived class size
        seed: Generator seed
        spearman: Optional Spearman target for copula mode

    Raises:
        InputError: On a missing file, unknown feature or malformed entry
    """
    path = Path(path) if path is not None else DEFAULT_SPEC_PATH
    if not path.exists():
        raise InputError(f"Synthetic spec '{path}' not found")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as exc:
        raise InputError(f"Synthetic spec '{path}' is not valid JSON: {exc}") from exc

    marginals: Dict[int, Dict[int, Quartiles]] = {}
    for name, entry in data.items():
        feature_no = CATALOG.resolve(name).feature_no
        try:
            marginals[feature_no] = {
                0: _triple(entry["survived"]),
                1: _triple(entry["non_survived"]),
            }
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"Malformed spec entry for '{name}': {exc}") from exc

    return SyntheticSpec(marginals=marginals, n_survived=n_survived,
                         n_nonsurvived=n_nonsurvived, seed=seed, spearman=spearman)


def _triple(values: Sequence[float]) -> Quartiles:
    if len(values) != 3:
        raise ValueError("expected [median, q25, q75]")
    median, q25, q75 = (float(v) for v in values)
    return median, q25, q75


def save_synthetic_spec(spec: SyntheticSpec, path: Union[str, os.PathLike]) -> str:
    """Write the marginals of a spec in the spec-file format."""
    data = {
        CATALOG.name(f): {"survived": list(spec.marginals[f][0]),
                          "non_survived": list(spec.marginals[f][1])}
        for f in spec.feature_nos
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=4)
    return os.fspath(path)
