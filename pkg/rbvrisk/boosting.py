"""
Histogram-based gradient boosting for the binary outcome.

Features are quantized once into at most ``max_bins`` bins. Every boosting
round fits one tree to the gradients and hessians of the logistic loss:
per-node gradient/hessian histograms are summed over bins, the best split is
the bin boundary maximizing

    G_L^2 / (H_L + l2) + G_R^2 / (H_R + l2) - G^2 / (H + l2)

and trees grow best-first (largest gain first) up to ``max_leaves``. Leaf
values are Newton steps -G / (H + l2) shrunk by the learning rate.
When a root holding both classes has no positive-gain split, its best
zero-gain split is taken instead, so structure that only pays off one level
down (XOR layouts) can still be learned.

The hot loops (histogram build, split scan, tree traversal) are numba kernels.
Histograms are parallel over features and traversal over rows; each output
cell is summed in one thread, so results match sequential execution exactly.
"""

import heapq
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from numba import njit, prange
from scipy.special import expit

from .core.exceptions import InputError
from .data_models import FeatureTable, HGBConfig

logger = logging.getLogger(__name__)

BIN_DTYPE = np.uint8
PROBA_EPS = 1e-15
# zero-gain root splits are admitted up to this rounding slack
ZERO_GAIN_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class BinMapper:
    """Per-feature bin edges. A value x falls in bin ``searchsorted(edges, x, 'left')``, so x <= edges[t] iff bin(x) <= t."""
    edges: Tuple[np.ndarray, ...]
    max_bins: int
    feature_nos: Tuple[int, ...]

    @property
    def n_features(self) -> int:
        return len(self.edges)

    @property
    def n_bins(self) -> np.ndarray:
        return np.array([e.size + 1 for e in self.edges], dtype=np.int64)

    def transform(self, values: np.ndarray) -> np.ndarray:
        """Bin a (rows x features) matrix."""
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] != self.n_features:
            raise InputError(
                f"Expected {self.n_features} feature column(s), got shape {values.shape}")
        binned = np.empty(values.shape, dtype=BIN_DTYPE)
        for col, edges in enumerate(self.edges):
            binned[:, col] = np.searchsorted(edges, values[:, col], side="left")
        return binned

    def to_dict(self) -> Dict[str, Any]:
        return {
            'max_bins': self.max_bins,
            'feature_nos': list(self.feature_nos),
            'edges': [e.tolist() for e in self.edges],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'BinMapper':
        return cls(
            edges=tuple(np.asarray(e, dtype=np.float64) for e in data['edges']),
            max_bins=int(data['max_bins']),
            feature_nos=tuple(int(f) for f in data['feature_nos']),
        )


def _column_edges(column: np.ndarray, max_bins: int) -> np.ndarray:
    distinct = np.unique(column)
    if distinct.size <= max_bins:
        lo, hi = distinct[:-1], distinct[1:]
        mid = lo + (hi - lo) / 2.0
        # adjacent floats: keep hi in its own bin
        return np.where(mid >= hi, lo, mid)
    percentiles = np.linspace(0, 100, max_bins + 1)[1:-1]
    return np.unique(np.percentile(column, percentiles, method="linear"))


def fit_bins(table: Union[FeatureTable, np.ndarray], max_bins: int = 255,
             feature_nos: Optional[Sequence[int]] = None) -> BinMapper:
    """
    Fit bin edges for every column.

    A column with at most ``max_bins`` distinct values gets one edge at each
    midpoint between consecutive distinct values (exact binning). Otherwise
    the edges are the equal-frequency percentiles of the column.

    Raises:
        InputError: On an empty table or max_bins outside [2, 256]
    """
    if not 2 <= max_bins <= 256:
        raise InputError(f"max_bins must be in [2, 256], got {max_bins}")
    if isinstance(table, FeatureTable):
        table.require_finalized()
        values, feature_nos = table.values, table.feature_nos
    else:
        values = np.asarray(table, dtype=np.float64)
        if feature_nos is None:
            feature_nos = tuple(range(1, values.shape[1] + 1))
    if values.ndim != 2 or values.shape[0] == 0 or values.shape[1] == 0:
        raise InputError("Cannot fit bins on an empty table")

    edges = tuple(_column_edges(values[:, col], max_bins) for col in range(values.shape[1]))
    return BinMapper(edges=edges, max_bins=max_bins, feature_nos=tuple(int(f) for f in feature_nos))


# numba kernels

@njit(parallel=True, cache=True)
def build_histograms(binned_t, sample_idx, gradients, hessians, n_bins):
    """Per-feature sums of gradients, hessians and row counts for the rows in ``sample_idx``."""
    n_features = binned_t.shape[0]
    sum_g = np.zeros((n_features, n_bins))
    sum_h = np.zeros((n_features, n_bins))
    count = np.zeros((n_features, n_bins), dtype=np.int64)
    for f in prange(n_features):
        row = binned_t[f]
        for i in range(sample_idx.shape[0]):
            s = sample_idx[i]
            b = row[s]
            sum_g[f, b] += gradients[s]
            sum_h[f, b] += hessians[s]
            count[f, b] += 1
    return sum_g, sum_h, count


@njit(cache=True)
def subtract_histograms(parent_g, parent_h, parent_c, child_g, child_h, child_c):
    """Sibling histograms: parent minus child."""
    return parent_g - child_g, parent_h - child_h, parent_c - child_c


@njit(cache=True)
def find_best_split(sum_g, sum_h, count, n_bins, feature_order, g_total, h_total, n_total,
                    l2, min_samples_leaf, min_gain):
    """
    Scan every (feature, bin) boundary.

    Features are visited in ``feature_order`` and bins ascending; a candidate
    replaces the incumbent only on strictly larger gain, so ties keep the
    lowest feature then the lowest bin.

    Returns:
        (gain, column, bin_threshold, g_left, h_left, n_left); column is -1
        when no split beats ``min_gain``
    """
    parent_score = g_total * g_total / (h_total + l2) if h_total + l2 > 0 else 0.0
    best_gain = min_gain
    best_col = -1
    best_bin = -1
    best_gl = 0.0
    best_hl = 0.0
    best_nl = 0
    for k in range(feature_order.shape[0]):
        f = feature_order[k]
        gl = 0.0
        hl = 0.0
        nl = 0
        for t in range(n_bins[f] - 1):
            gl += sum_g[f, t]
            hl += sum_h[f, t]
            nl += count[f, t]
            nr = n_total - nl
            if nl < min_samples_leaf:
                continue
            if nr < min_samples_leaf:
                break
            gr = g_total - gl
            hr = h_total - hl
            if hl + l2 <= 0 or hr + l2 <= 0:
                continue
            gain = gl * gl / (hl + l2) + gr * gr / (hr + l2) - parent_score
            if gain > best_gain:
                best_gain = gain
                best_col = f
                best_bin = t
                best_gl = gl
                best_hl = hl
                best_nl = nl
    return best_gain, best_col, best_bin, best_gl, best_hl, best_nl


@njit(parallel=True, cache=True)
def predict_binned(binned, feature, bin_threshold, left, right, value):
    """Leaf value reached by every row."""
    n_rows = binned.shape[0]
    out = np.empty(n_rows)
    for i in prange(n_rows):
        node = 0
        while left[node] != -1:
            if binned[i, feature[node]] <= bin_threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


class TreeNode(NamedTuple):
    """View of one node. Leaves have ``feature_no == -1`` and children -1."""
    node_id: int
    feature_no: int
    bin_threshold: int
    threshold: float
    left: int
    right: int
    value: float
    n_samples: int
    gain: float

    @property
    def is_leaf(self) -> bool:
        return self.left == -1


@dataclass(frozen=True, eq=False)
class Tree:
    """Flat array representation; node 0 is the root."""
    column: np.ndarray
    feature_no: np.ndarray
    bin_threshold: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    gain: np.ndarray

    _FIELDS = ('column', 'feature_no', 'bin_threshold', 'threshold', 'left', 'right',
               'value', 'n_samples', 'gain')
    _INT_FIELDS = ('column', 'feature_no', 'bin_threshold', 'left', 'right', 'n_samples')

    @property
    def n_nodes(self) -> int:
        return self.left.size

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.left == -1))

    def node(self, node_id: int) -> TreeNode:
        return TreeNode(node_id, int(self.feature_no[node_id]), int(self.bin_threshold[node_id]),
                        float(self.threshold[node_id]), int(self.left[node_id]),
                        int(self.right[node_id]), float(self.value[node_id]),
                        int(self.n_samples[node_id]), float(self.gain[node_id]))

    def nodes(self) -> List[TreeNode]:
        return [self.node(i) for i in range(self.n_nodes)]

    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.left[i] != -1:
                depths[self.left[i]] = depths[self.right[i]] = depths[i] + 1
        return int(depths.max())

    def predict_binned(self, binned: np.ndarray) -> np.ndarray:
        return predict_binned(binned, self.column, self.bin_threshold, self.left, self.right,
                              self.value)

    def to_dict(self) -> Dict[str, list]:
        return {name: getattr(self, name).tolist() for name in self._FIELDS}

    @classmethod
    def from_dict(cls, data: Dict[str, list]) -> 'Tree':
        return cls(**{name: np.asarray(data[name], dtype=np.int64 if name in cls._INT_FIELDS
                                       else np.float64) for name in cls._FIELDS})


def _is_impure(gradients: np.ndarray) -> bool:
    """Both classes present: logistic gradients of the two classes have opposite signs."""
    return bool(gradients.min() < 0.0 < gradients.max())


class _GrowingNode:
    __slots__ = ('node_id', 'samples', 'g', 'h', 'depth', 'hist', 'split')

    def __init__(self, node_id, samples, g, h, depth, hist):
        self.node_id = node_id
        self.samples = samples
        self.g = g
        self.h = h
        self.depth = depth
        self.hist = hist
        self.split = None


class TreeGrower:
    """Best-first growth of one regression tree on binned data."""

    def __init__(self, binned: np.ndarray, bin_mapper: BinMapper, config: HGBConfig):
        self.binned = binned
        self.binned_t = np.ascontiguousarray(binned.T)
        self.bin_mapper = bin_mapper
        self.config = config
        self.n_bins = bin_mapper.n_bins
        self.max_n_bins = int(self.n_bins.max())
        self.feature_order = np.argsort(np.asarray(bin_mapper.feature_nos), kind="stable").astype(np.int64)

    def _histograms(self, samples, gradients, hessians):
        return build_histograms(self.binned_t, samples, gradients, hessians, self.max_n_bins)

    def _evaluate(self, node: _GrowingNode, min_gain: Optional[float] = None) -> None:
        cfg = self.config
        if min_gain is None:
            min_gain = cfg.min_gain_to_split
        if cfg.max_depth is not None and node.depth >= cfg.max_depth:
            return
        if node.samples.size < 2 * cfg.min_samples_leaf:
            return
        gain, col, bin_t, gl, hl, nl = find_best_split(
            node.hist[0], node.hist[1], node.hist[2], self.n_bins, self.feature_order,
            node.g, node.h, node.samples.size, cfg.l2_regularization, cfg.min_samples_leaf,
            min_gain)
        if col >= 0:
            node.split = (gain, col, bin_t, gl, hl, nl)

    def _leaf_value(self, g: float, h: float) -> float:
        denom = h + self.config.l2_regularization
        if denom <= 0:
            return 0.0
        return -g / denom * self.config.learning_rate

    def grow(self, gradients: np.ndarray, hessians: np.ndarray) -> Optional[Tree]:
        """
        Grow one tree.

        Returns:
            The tree, or None when the root has no admissible split
        """
        cfg = self.config
        samples = np.arange(self.binned.shape[0], dtype=np.int64)
        root = _GrowingNode(0, samples, float(gradients.sum()), float(hessians.sum()), 0,
                            self._histograms(samples, gradients, hessians))
        self._evaluate(root)
        if root.split is None and cfg.min_gain_to_split <= 0 and _is_impure(gradients):
            # symmetric layouts (XOR) only show gain below the root
            self._evaluate(root, min_gain=-ZERO_GAIN_TOLERANCE)
        if root.split is None:
            return None

        nodes: List[Dict[str, Any]] = [None]
        pending = {0: root}
        heap: List[Tuple[float, int]] = [(-root.split[0], 0)]
        n_leaves = 1

        while heap and n_leaves < cfg.max_leaves:
            _, node_id = heapq.heappop(heap)
            node = pending.pop(node_id)
            gain, col, bin_t, gl, hl, nl = node.split

            go_left = self.binned[node.samples, col] <= bin_t
            left_samples = node.samples[go_left]
            right_samples = node.samples[~go_left]

            small, large = (left_samples, right_samples) if nl <= node.samples.size - nl else (right_samples, left_samples)
            small_hist = self._histograms(small, gradients, hessians)
            large_hist = subtract_histograms(*node.hist, *small_hist)
            left_hist, right_hist = (small_hist, large_hist) if small is left_samples else (large_hist, small_hist)

            left_id, right_id = len(nodes), len(nodes) + 1
            nodes.append(None)
            nodes.append(None)
            nodes[node_id] = {
                'column': col,
                'feature_no': self.bin_mapper.feature_nos[col],
                'bin_threshold': bin_t,
                'threshold': float(self.bin_mapper.edges[col][bin_t]),
                'left': left_id,
                'right': right_id,
                'value': 0.0,
                'n_samples': node.samples.size,
                'gain': gain,
            }
            node.hist = None
            n_leaves += 1

            for child_id, child_samples, g, h, hist in (
                    (left_id, left_samples, gl, hl, left_hist),
                    (right_id, right_samples, node.g - gl, node.h - hl, right_hist)):
                child = _GrowingNode(child_id, child_samples, g, h, node.depth + 1, hist)
                self._evaluate(child)
                pending[child_id] = child
                if child.split is not None:
                    heapq.heappush(heap, (-child.split[0], child_id))

        for node_id, node in pending.items():
            nodes[node_id] = {
                'column': -1, 'feature_no': -1, 'bin_threshold': -1, 'threshold': np.nan,
                'left': -1, 'right': -1, 'value': self._leaf_value(node.g, node.h),
                'n_samples': node.samples.size, 'gain': 0.0,
            }

        return Tree(**{
            name: np.asarray([n[name] for n in nodes],
                             dtype=np.int64 if name in Tree._INT_FIELDS else np.float64)
            for name in Tree._FIELDS
        })


def logistic_loss(labels: np.ndarray, raw: np.ndarray) -> float:
    """Mean binary cross-entropy of raw log-odds predictions."""
    return float(np.mean(np.logaddexp(0.0, raw) - labels * raw))


@dataclass(eq=False)
class BoostedEnsemble:
    """
    Trained histogram gradient-boosting classifier.

    Probabilities are sigmoid(base_score + sum of tree outputs); class 1 is
    predicted iff the probability is at least 0.5.
    """
    bin_mapper: BinMapper
    trees: List[Tree]
    learning_rate: float
    base_score: float
    config: HGBConfig
    training_loss_: List[float] = field(default_factory=list)

    @property
    def feature_nos(self) -> Tuple[int, ...]:
        return self.bin_mapper.feature_nos

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def _values(self, rows: Union[FeatureTable, np.ndarray]) -> np.ndarray:
        if isinstance(rows, FeatureTable):
            return rows.select_features(self.feature_nos).values
        values = np.asarray(rows, dtype=np.float64)
        if values.ndim == 1:
            values = values.reshape(-1, self.bin_mapper.n_features)
        return values

    def decision_function(self, rows: Union[FeatureTable, np.ndarray]) -> np.ndarray:
        """Raw log-odds of class 1."""
        binned = self.bin_mapper.transform(self._values(rows))
        raw = np.full(binned.shape[0], self.base_score)
        for tree in self.trees:
            raw += tree.predict_binned(binned)
        return raw

    def predict_proba(self, rows: Union[FeatureTable, np.ndarray]) -> np.ndarray:
        """Probability of class 1 (non-survived), strictly inside (0, 1)."""
        return np.clip(expit(self.decision_function(rows)), PROBA_EPS, 1.0 - PROBA_EPS)

    def predict(self, rows: Union[FeatureTable, np.ndarray]) -> np.ndarray:
        return (self.predict_proba(rows) >= 0.5).astype(np.int64)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'bin_mapper': self.bin_mapper.to_dict(),
            'trees': [t.to_dict() for t in self.trees],
            'learning_rate': self.learning_rate,
            'base_score': self.base_score,
            'config': self.config.model_dump(mode='json'),
            'training_loss': list(self.training_loss_),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'BoostedEnsemble':
        return cls(
            bin_mapper=BinMapper.from_dict(data['bin_mapper']),
            trees=[Tree.from_dict(t) for t in data['trees']],
            learning_rate=float(data['learning_rate']),
            base_score=float(data['base_score']),
            config=HGBConfig(**data['config']),
            training_loss_=[float(v) for v in data.get('training_loss', [])],
        )

    def save_to_file(self, filepath: Union[str, os.PathLike]) -> str:
        """Save the model as JSON (floats round-trip exactly)."""
        with open(filepath, 'w', encoding='utf-8') as f:
            json.dump(self.to_dict(), f)
        return os.fspath(filepath)

    @classmethod
    def load_from_file(cls, filepath: Union[str, os.PathLike]) -> 'BoostedEnsemble':
        if not os.path.exists(filepath):
            raise InputError(f"Model file '{filepath}' not found")
        with open(filepath, 'r', encoding='utf-8') as f:
            return cls.from_dict(json.load(f))


def fit_hgb(table: FeatureTable, config: HGBConfig = HGBConfig()) -> BoostedEnsemble:
    """
    Train a boosted ensemble on a finalized table.

    Boosting stops after ``config.max_iter`` rounds or as soon as a round's
    root has no admissible split (every feature constant, ``min_samples_leaf``
    unmet, or nothing above a positive ``config.min_gain_to_split``).

    Raises:
        InputError: On single-class input or a table with missing values
    """
    table.require_finalized()
    table.require_both_classes()
    labels = table.labels.astype(np.float64)
    prior = labels.mean()
    base_score = float(np.log(prior / (1.0 - prior)))

    bin_mapper = fit_bins(table, config.max_bins)
    binned = bin_mapper.transform(table.values)
    grower = TreeGrower(binned, bin_mapper, config)

    raw = np.full(table.n_rows, base_score)
    losses = [logistic_loss(labels, raw)]
    trees: List[Tree] = []
    for round_no in range(config.max_iter):
        proba = expit(raw)
        gradients = proba - labels
        hessians = proba * (1.0 - proba)
        tree = grower.grow(gradients, hessians)
        if tree is None:
            logger.debug("No admissible root split at round %d; stopping", round_no)
            break
        raw += tree.predict_binned(binned)
        trees.append(tree)
        losses.append(logistic_loss(labels, raw))

    logger.debug("Trained HGB on %d rows x %d features: %d trees, loss %.6g -> %.6g",
                 table.n_rows, table.n_features, len(trees), losses[0], losses[-1])
    return BoostedEnsemble(bin_mapper=bin_mapper, trees=trees, learning_rate=config.learning_rate,
                           base_score=base_score, config=config, training_loss_=losses)
