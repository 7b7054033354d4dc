"""Global and scan detection tests for the finite-template model.

Both scan statistics are linear template scans: the mean scan correlates X
with the template, the variance scan correlates X**2 with the per-coordinate
log-likelihood weights and subtracts a constant.  Each scan runs either by
brute-force enumeration of the placement family or, for consecutive and
circular families, by a sliding-window correlation.
"""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import BudgetExceededError, ConfigurationError, DomainError
from .model import Block, Kind, Observation, Placement, TemplateFamily, candidate_blocks

DEFAULT_DELTA = 0.5
NONCON_SCAN_BUDGET = 10 ** 6


class TestId(str, enum.Enum):
    __test__ = False

    SUM = "sum"
    QUAD = "quad"
    MEAN_SCAN = "mean-scan"
    VAR_SCAN = "var-scan"

    @classmethod
    def parse(cls, value) -> "TestId":
        if isinstance(value, cls):
            return value
        aliases = {"meanscan": cls.MEAN_SCAN, "mean_scan": cls.MEAN_SCAN,
                   "varscan": cls.VAR_SCAN, "var_scan": cls.VAR_SCAN}
        value = str(value).lower()
        try:
            return aliases.get(value) or cls(value)
        except ValueError:
            raise ConfigurationError(f"unknown test {value!r}") from None


class Strategy(str, enum.Enum):
    BRUTE = "brute"
    SLIDING = "sliding"


@dataclass(frozen=True)
class ScanPlan:
    block_family: Placement
    strategy: Strategy = Strategy.SLIDING
    delta: float = DEFAULT_DELTA

    def __post_init__(self):
        placement = Placement.parse(self.block_family)
        strategy = Strategy(self.strategy)
        object.__setattr__(self, "block_family", placement)
        object.__setattr__(self, "strategy", strategy)
        if strategy is Strategy.SLIDING and placement is Placement.NONCON:
            raise ConfigurationError("sliding-window scans need a consecutive or circular family")
        if not self.delta > 0:
            raise ConfigurationError(f"delta must be positive, got {self.delta}")

    @classmethod
    def default(cls, placement, delta: float = DEFAULT_DELTA) -> "ScanPlan":
        placement = Placement.parse(placement)
        strategy = Strategy.BRUTE if placement is Placement.NONCON else Strategy.SLIDING
        return cls(placement, strategy, delta)


@dataclass(frozen=True)
class TestDecision:
    __test__ = False

    test_id: TestId
    statistic_value: float
    threshold: float
    decision: int
    argmax_block: Block | None = None
    argmax_template: int | None = None

    def to_json(self) -> dict:
        return {
            "test_id": self.test_id.value,
            "statistic": self.statistic_value,
            "threshold": self.threshold,
            "decision": self.decision,
            "argmax_block": None if self.argmax_block is None else self.argmax_block.to_json(),
            "argmax_template": self.argmax_template,
        }


def _decide(test_id, value, threshold, block=None, template=None) -> TestDecision:
    return TestDecision(test_id, float(value), float(threshold), int(value >= threshold),
                        block, template)


def _matrix(obs) -> np.ndarray:
    data = obs.data if isinstance(obs, Observation) else np.asarray(obs, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] != data.shape[1]:
        raise ConfigurationError(f"expected a square matrix, got shape {data.shape}")
    return data


def _require(family: TemplateFamily, kind: Kind):
    if family.kind is not kind:
        raise ConfigurationError(f"test needs a {kind.value}-shift family, got {family.kind.value}")


# ---------------------------------------------------------------- global tests

def sum_statistic(obs, mu_det: float) -> float:
    if mu_det == 0:
        raise DomainError("sum test undefined: zero total mean mass")
    return math.copysign(1.0, mu_det) * float(np.sum(_matrix(obs)))


def sum_test(obs, family: TemplateFamily) -> TestDecision:
    _require(family, Kind.MEAN)
    mu_det = family.mu_det
    return _decide(TestId.SUM, sum_statistic(obs, mu_det), abs(mu_det) / 2)


def quad_statistic(obs) -> float:
    x = _matrix(obs)
    return float(np.sum(x * x) - x.size)


def quad_test(obs, family: TemplateFamily) -> TestDecision:
    _require(family, Kind.VARIANCE)
    nu_det = family.nu_det
    if nu_det == 0:
        raise DomainError("degenerate variance family")
    return _decide(TestId.QUAD, quad_statistic(obs), nu_det / 2)


# ---------------------------------------------------------------- scan kernels

def _sliding_scores(y: np.ndarray, weights: np.ndarray, circular: bool) -> np.ndarray:
    """scores[i, j] = sum_{u,v} weights[u, v] * y[i+u, j+v] (indices mod n if circular)."""
    k = weights.shape[0]
    if circular:
        y = np.pad(y, ((0, k - 1), (0, k - 1)), mode="wrap")
    size = y.shape[0] - k + 1
    out = np.zeros((size, size))
    for u in range(k):
        for v in range(k):
            w = weights[u, v]
            if w != 0.0:
                out += w * y[u:u + size, v:v + size]
    return out


def _sliding_scan(y, weights, placement) -> tuple[float, Block]:
    n, k = y.shape[0], weights.shape[0]
    circular = placement is Placement.CIRC
    scores = _sliding_scores(y, weights, circular)
    flat = int(np.argmax(scores))  # first maximum in row-major order
    i, j = divmod(flat, scores.shape[1])
    block = Block.circular(i, j, k, n) if circular else Block.consecutive(i, j, k)
    return float(scores[i, j]), block


def _enumerated_scan(y, weights, placement) -> tuple[float, Block]:
    best, best_block = -math.inf, None
    for block in candidate_blocks(placement, y.shape[0], weights.shape[0]):
        score = float(np.sum(weights * y[block.index]))
        if score > best:
            best, best_block = score, block
    return best, best_block


def _noncon_scan(y, weights) -> tuple[float, Block]:
    n, k = y.shape[0], weights.shape[0]
    n_subsets = math.comb(n, k)
    if n_subsets ** 2 > NONCON_SCAN_BUDGET:
        raise BudgetExceededError(
            f"non-consecutive scan budget exceeded: {n_subsets ** 2} candidate blocks "
            f"> {NONCON_SCAN_BUDGET}")
    subsets = np.array(list(itertools.combinations(range(n), k)), dtype=np.intp).reshape(-1, k)
    positions = np.arange(k)
    best, best_block = -math.inf, None
    for rows in subsets:
        # col_weights[v, c] = sum_u weights[u, v] * y[rows[u], c]
        col_weights = weights.T @ y[rows]
        scores = col_weights[positions, subsets].sum(axis=1)
        t = int(np.argmax(scores))
        if scores[t] > best:
            best, best_block = float(scores[t]), Block(rows, subsets[t])
    return best, best_block


def _linear_scan(y: np.ndarray, weights: np.ndarray, plan: ScanPlan) -> tuple[float, Block]:
    n, k = y.shape[0], weights.shape[0]
    if weights.shape != (k, k):
        raise ConfigurationError(f"template must be square, got shape {weights.shape}")
    if k > n:
        raise ConfigurationError(f"template side {k} exceeds matrix side {n}")
    if plan.block_family is Placement.NONCON:
        return _noncon_scan(y, weights)
    if plan.strategy is Strategy.SLIDING:
        return _sliding_scan(y, weights, plan.block_family)
    return _enumerated_scan(y, weights, plan.block_family)


# ---------------------------------------------------------------- scan statistics

def mean_scan_statistic(obs, template, plan: ScanPlan) -> tuple[float, Block]:
    """Max over the block family of sum_{(i,j) in B} M[phi_B(i,j)] X[i,j]."""
    return _linear_scan(_matrix(obs), np.asarray(template, dtype=np.float64), plan)


def variance_weights(template) -> tuple[np.ndarray, float]:
    """Per-coordinate weights on X**2 and the constant subtracted from each block score."""
    sigma = np.asarray(template, dtype=np.float64)
    if sigma.min() < 0 or sigma.max() >= 1:
        raise DomainError("variance template entries must lie in [0, 1)")
    return 0.5 * sigma / (1.0 + sigma), 0.5 * float(np.sum(np.log1p(sigma)))


def var_scan_statistic(obs, template, plan: ScanPlan) -> tuple[float, Block]:
    """Max over the block family of the blockwise variance log-likelihood ratio."""
    x = _matrix(obs)
    weights, offset = variance_weights(template)
    value, block = _linear_scan(x * x, weights, plan)
    return value - offset, block


# ---------------------------------------------------------------- scan tests

def _log_family_size(placement: Placement, n: int, k: int) -> float:
    """The log-cardinality term used by the scan thresholds."""
    if placement is Placement.NONCON:
        return k * math.log(math.e * n / k)
    return math.log(n)


def mean_scan_threshold(frob_sq: float, placement, n: int, k: int, delta: float,
                        m: int = 1, joint: bool = False) -> float:
    """sqrt((4+delta) ||M_max||_F^2 L) with L = k log(en/k) or log n.

    With ``joint=True`` the scan also ranges over all m templates and L gains
    an additive log m.
    """
    size_term = _log_family_size(Placement.parse(placement), n, k)
    if joint:
        size_term += math.log(m)
    return math.sqrt((4.0 + delta) * frob_sq * size_term)


def var_scan_threshold(placement, n: int, k: int, m: int, delta: float) -> float:
    placement = Placement.parse(placement)
    size_term = 2 * _log_family_size(placement, n, k)
    return (1.0 + delta) * (size_term + math.log(m))


def strongest_mean_template(family: TemplateFamily) -> int:
    frob = np.sum(family.templates ** 2, axis=(1, 2))
    if not np.any(frob > 0):
        raise DomainError("degenerate mean family")
    return int(np.argmax(frob))


def mean_scan_test(obs, family: TemplateFamily, plan: ScanPlan, joint: bool = False) -> TestDecision:
    """Scan with the largest-energy template against the union-bound threshold.

    ``joint=True`` is the experimental variant that also maximises over
    templates, with the threshold inflated by log m.
    """
    _require(family, Kind.MEAN)
    x = _matrix(obs)
    l_max = strongest_mean_template(family)
    frob_sq = float(np.sum(family.templates[l_max] ** 2))
    threshold = mean_scan_threshold(frob_sq, plan.block_family, x.shape[0], family.k,
                                    plan.delta, family.m, joint)
    if not joint:
        value, block = mean_scan_statistic(x, family.templates[l_max], plan)
        return _decide(TestId.MEAN_SCAN, value, threshold, block)
    best = (-math.inf, None, None)
    for ell, template in enumerate(family.templates):
        value, block = mean_scan_statistic(x, template, plan)
        if value > best[0]:
            best = (value, block, ell)
    return _decide(TestId.MEAN_SCAN, best[0], threshold, best[1], best[2])


def var_scan_test(obs, family: TemplateFamily, plan: ScanPlan) -> TestDecision:
    _require(family, Kind.VARIANCE)
    x = _matrix(obs)
    threshold = var_scan_threshold(plan.block_family, x.shape[0], family.k, family.m, plan.delta)
    best = (-math.inf, None, None)
    for ell, template in enumerate(family.templates):
        value, block = var_scan_statistic(x, template, plan)
        if value > best[0]:
            best = (value, block, ell)
    return _decide(TestId.VAR_SCAN, best[0], threshold, best[1], best[2])


def run_test(test_id, obs, family: TemplateFamily, plan: ScanPlan) -> TestDecision:
    """Dispatch one of the four tests by id."""
    test_id = TestId.parse(test_id)
    if test_id is TestId.SUM:
        return sum_test(obs, family)
    if test_id is TestId.QUAD:
        return quad_test(obs, family)
    if test_id is TestId.MEAN_SCAN:
        return mean_scan_test(obs, family, plan)
    return var_scan_test(obs, family, plan)
