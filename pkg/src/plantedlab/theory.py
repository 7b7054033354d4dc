"""Closed-form quantities behind the detection and impossibility bounds.

Covers the entrywise chi-square divergences, the effective chi-square energy
``theta_star``, the signal energy, the smooth-signal checks, the finite-n
evaluation of every bound, the exact overlap laws, and an exhaustive
second-moment oracle for tiny instances.

Conditions that are asymptotic (``o(.)`` / ``omega(.)``) are reported as
numeric ratios ``lhs / rhs`` and never turned into booleans.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import BranchInapplicableError, BudgetExceededError, ConfigurationError, DomainError
from .model import (Kind, Placement, PlacementConfig, TemplateFamily, candidate_blocks,
                    count_blocks)
from .detectors import strongest_mean_template

LOG_OVERFLOW = 700.0
SECOND_MOMENT_BUDGET = 10 ** 6


# ---------------------------------------------------------------- divergences

def chi2_mean(mu: float) -> float:
    """chi^2(N(mu, 1) || N(0, 1)) = exp(mu^2) - 1."""
    return math.expm1(mu * mu)


def chi2_var(sigma: float) -> float:
    """chi^2(N(0, 1 + sigma) || N(0, 1)) = 1 / sqrt(1 - sigma^2) - 1."""
    if not 0.0 <= sigma < 1.0:
        raise DomainError(f"variance shift must lie in [0, 1), got {sigma}")
    return 1.0 / math.sqrt(1.0 - sigma * sigma) - 1.0


def chi2_grid(family: TemplateFamily) -> np.ndarray:
    """Entrywise divergences, shape (m, k, k)."""
    t = family.templates
    if family.kind is Kind.MEAN:
        return np.expm1(t * t)
    if t.min() < 0 or t.max() >= 1:
        raise DomainError("variance shifts must lie in [0, 1)")
    return 1.0 / np.sqrt(1.0 - t * t) - 1.0


def log_a(chi2: np.ndarray, h: float, m: int) -> float:
    """log of (1/k^2) sum_u exp(m^2 h chi2_u) for one template's divergences."""
    chi2 = np.ravel(chi2)
    return float(logsumexp(m * m * h * chi2) - math.log(chi2.size))


def theta_star(grid, m: int | None = None, k: int | None = None) -> float:
    """Effective chi-square energy, evaluated in log space.

    max over templates of (1/(m^2 k^2)) log((1/k^2) sum_u exp(m^2 k^2 chi2_u)).
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim == 2:
        grid = grid[None]
    if m is not None and grid.shape[0] != m or k is not None and grid.shape[1:] != (k, k):
        raise ConfigurationError(f"grid shape {grid.shape} does not match m={m}, k={k}")
    m, k = grid.shape[0], grid.shape[1]
    scale = m * m * k * k
    return max(log_a(row, k * k, m) / scale for row in grid)


def kl_sigma(sigma) -> float:
    """Blockwise KL divergence of a variance template, 1/2 sum(s - log(1 + s))."""
    sigma = np.asarray(sigma, dtype=np.float64)
    return 0.5 * float(np.sum(sigma - np.log1p(sigma)))


def energy(family: TemplateFamily) -> tuple[float, list[float]]:
    per_template = [float(v) for v in np.sum(family.templates ** 2, axis=(1, 2))]
    return max(per_template), per_template


# ---------------------------------------------------------------- smooth signals

@dataclass(frozen=True)
class SmoothSignalReport:
    sup_norm: float
    spikiness: float
    per_template_spikiness: list[float]
    bounded: bool
    non_spiky: bool


def smooth_signal_check(family: TemplateFamily, bound: float = 1.0,
                        spikiness: float = 4.0) -> SmoothSignalReport:
    """Uniform boundedness and non-spikiness of a template family.

    ``bound`` caps the largest absolute entry; ``spikiness`` caps
    k^2 max|theta|^2 / E_l, which equals 1 for a constant template.
    """
    t = family.templates
    k2 = family.k ** 2
    sup = np.max(np.abs(t), axis=(1, 2))
    _, per_energy = energy(family)
    ratios = [math.inf if e == 0 else float(k2 * s * s / e) for s, e in zip(sup, per_energy)]
    worst = max(ratios)
    return SmoothSignalReport(float(sup.max()), worst, ratios,
                              bool(sup.max() <= bound), bool(worst <= spikiness))


# ---------------------------------------------------------------- bound evaluation

@dataclass(frozen=True)
class Condition:
    """One evaluated inequality ``lhs <= rhs`` or, when ``satisfied`` is None, a ratio."""

    lhs: float
    rhs: float
    satisfied: bool | None = None

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs else math.inf

    def to_json(self) -> dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "satisfied": self.satisfied,
                "ratio": self.ratio}


def _check(lhs, rhs) -> Condition:
    return Condition(float(lhs), float(rhs), bool(lhs <= rhs))


def _ratio(lhs, rhs) -> Condition:
    return Condition(float(lhs), float(rhs), None)


def noncon_impossibility_rhs(n: int, k: int, m: int, delta: float) -> float:
    return min(1.0 / k, n * n * math.log1p(delta) / (2 * m * m * k ** 4))


def circ_impossibility_rhs(n: int, k: int, m: int, delta: float) -> float:
    return math.log1p(n * n * math.log1p(delta) / (4 * k * k * m * m)) / (k * k)


def homogeneous_amplitude(family: TemplateFamily) -> float | None:
    """The common value lambda when every template is the same constant matrix."""
    t = family.templates
    if np.all(t == t.flat[0]):
        return float(t.flat[0])
    return None


def lower_bound_conditions(family: TemplateFamily, config: PlacementConfig,
                           delta: float = 0.1) -> dict[str, Condition]:
    """Impossibility inequalities and the smooth-signal energy ratios at finite n.

    ``delta`` stands in for the vanishing sequence of the asymptotic statement.
    The circular inequality needs k <= n/2 and is omitted when that fails for a
    non-consecutive configuration; consecutive configurations require it.
    """
    n, k, m = config.n, config.k, config.m
    family.check_dims(config.dims)
    if not delta > 0:
        raise ConfigurationError(f"delta must be positive, got {delta}")
    circ_ok = 2 * k <= n
    if config.placement is not Placement.NONCON and not circ_ok:
        raise ConfigurationError(f"consecutive lower bounds need k <= n/2 (k={k}, n={n})")
    theta = theta_star(chi2_grid(family))
    e, _ = energy(family)
    global_scale = n * n / (m * m * k * k)
    out = {
        "impossibility_noncon": _check(theta, noncon_impossibility_rhs(n, k, m, delta)),
        "smooth_impossibility_noncon": _ratio(e, min(k, global_scale)),
    }
    if circ_ok:
        out["impossibility_circ"] = _check(theta, circ_impossibility_rhs(n, k, m, delta))
        out["smooth_impossibility_circ"] = _ratio(e, math.log1p(global_scale))
    if config.placement is Placement.CON:
        out["coupling_mk_over_n"] = _ratio(m * k, n)
    lam = homogeneous_amplitude(family)
    if lam is not None and family.kind is Kind.MEAN:
        # E = k^2 lambda^2 turns the energy ratio into |lambda| / (k^-1/2 ^ n/(m k^2)), squared
        out["homogeneous_lambda_noncon"] = _ratio(abs(lam), min(1 / math.sqrt(k), n / (m * k * k)))
    return out


def upper_bound_conditions(family: TemplateFamily, config: PlacementConfig) -> dict[str, Condition]:
    """Signal-to-threshold ratios for the global and scan tests (large means detectable)."""
    n, k, m = config.n, config.k, config.m
    e, _ = energy(family)
    log_size = math.log(count_blocks(config.placement, n, k))
    scan_scale = k * math.log(n / k) if config.placement is Placement.NONCON else math.log(n)
    out = {
        "smooth_global_energy": _ratio(e, n * n / (m * m * k * k)),
    }
    if family.kind is Kind.MEAN:
        out["sum_signal"] = _ratio(abs(family.mu_det), n)
        if e > 0:
            frob = float(np.sum(family.templates[strongest_mean_template(family)] ** 2))
            out["mean_scan_signal"] = _ratio(frob, scan_scale)
        out["smooth_mean_scan_energy"] = _ratio(e, log_size)
    else:
        kl_max = max(kl_sigma(s) for s in family.templates)
        out["quad_signal"] = _ratio(family.nu_det, n)
        out["var_scan_signal"] = _ratio(kl_max, scan_scale + math.log(m))
        out["smooth_var_scan_energy"] = _ratio(e, log_size + math.log(m))
    return out


@dataclass(frozen=True)
class BoundReport:
    theta_star: float
    energy: float
    per_template_energy: list[float]
    kl_values: list[float] | None
    mu_det: float | None
    nu_det: float | None
    conditions: dict[str, Condition] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "theta_star": self.theta_star,
            "energy": self.energy,
            "per_template_energy": self.per_template_energy,
            "kl_values": self.kl_values,
            "mu_det": self.mu_det,
            "nu_det": self.nu_det,
            "conditions": {name: c.to_json() for name, c in self.conditions.items()},
        }

    def satisfied(self, name: str) -> bool | None:
        cond = self.conditions.get(name)
        return None if cond is None else cond.satisfied


def bound_report(family: TemplateFamily, config: PlacementConfig, delta: float = 0.1) -> BoundReport:
    e, per = energy(family)
    conditions = dict(lower_bound_conditions(family, config, delta))
    conditions.update(upper_bound_conditions(family, config))
    is_mean = family.kind is Kind.MEAN
    return BoundReport(
        theta_star=theta_star(chi2_grid(family)),
        energy=e,
        per_template_energy=per,
        kl_values=None if is_mean else [kl_sigma(s) for s in family.templates],
        mu_det=family.mu_det if is_mean else None,
        nu_det=None if is_mean else family.nu_det,
        conditions=conditions,
    )


# ---------------------------------------------------------------- overlap laws

@dataclass(frozen=True)
class OverlapLaw:
    family: Placement
    pmf: dict[int, float]

    def mean(self) -> float:
        return sum(z * p for z, p in self.pmf.items())


def overlap_law(placement, n: int, k: int) -> OverlapLaw:
    """Exact law of the row overlap |S n S'| of two independent uniform blocks."""
    placement = Placement.parse(placement)
    if not 1 <= k <= n:
        raise DomainError(f"need 1 <= k <= n (k={k}, n={n})")
    if placement is Placement.NONCON:
        total = math.comb(n, k)
        pmf = {z: math.comb(k, z) * math.comb(n - k, k - z) / total for z in range(k + 1)}
    elif placement is Placement.CIRC:
        if 2 * k > n:
            raise DomainError(f"circular overlap law needs k <= n/2 (k={k}, n={n})")
        pmf = {0: (n - 2 * k + 1) / n, k: 1 / n}
        pmf.update({z: 2 / n for z in range(1, k)})
    else:
        starts = n - k + 1
        counts = [0] * (k + 1)
        for a in range(starts):
            for b in range(starts):
                counts[max(0, k - abs(a - b))] += 1
        pmf = {z: c / starts ** 2 for z, c in enumerate(counts)}
    return OverlapLaw(placement, {z: p for z, p in sorted(pmf.items()) if p > 0})


# ---------------------------------------------------------------- second moment

def rho_overlap(kind, theta: float, theta_prime: float) -> float:
    """E_Q[L_theta(Z) L_theta'(Z)] for two entrywise likelihood ratios."""
    kind = Kind.parse(kind)
    if kind is Kind.MEAN:
        return math.exp(theta * theta_prime)
    if theta <= -1 or theta_prime <= -1:
        raise DomainError("variance shifts must exceed -1")
    a = theta / (1 + theta)
    b = theta_prime / (1 + theta_prime)
    if a + b >= 1:
        raise DomainError("overlap factor is not integrable: a + a' >= 1")
    return 1.0 / math.sqrt((1 + theta) * (1 + theta_prime) * (1 - a - b))


def _log_rho_table(family: TemplateFamily) -> np.ndarray:
    """log rho for every (label, label', coord, coord'), shape (m, m, k^2, k^2)."""
    flat = family.templates.reshape(family.m, -1)
    a = flat[:, None, :, None]
    b = flat[None, :, None, :]
    if family.kind is Kind.MEAN:
        return a * b
    sa, sb = a / (1 + a), b / (1 + b)
    if np.any(sa + sb >= 1):
        raise DomainError("overlap factor is not integrable: a + a' >= 1")
    return -0.5 * (np.log1p(a) + np.log1p(b) + np.log1p(-(sa + sb)))


def labelled_placements(config: PlacementConfig, limit: int | None = None) -> list[tuple]:
    """Ordered disjoint m-tuples of blocks; position l carries template l.

    Uniform weighting over these tuples is the same law as a uniform unordered
    collection with a uniform labelling.
    """
    blocks = list(candidate_blocks(config.placement, config.n, config.k))
    out = []
    for combo in itertools.product(blocks, repeat=config.m):
        if all(not a.intersects(b) for a, b in itertools.combinations(combo, 2)):
            out.append(combo)
            if limit is not None and len(out) > limit:
                break
    return out


def exact_second_moment(config: PlacementConfig, family: TemplateFamily,
                        budget: int = SECOND_MOMENT_BUDGET) -> float:
    """E_H0[L_n^2] by exhaustive enumeration of pairs of labelled placements."""
    family.check_dims(config.dims)
    config.check_samplable()
    n, k = config.n, config.k
    if count_blocks(config.placement, n, k) ** config.m > 50 * budget:
        raise BudgetExceededError(
            f"second-moment enumeration over {count_blocks(config.placement, n, k)}^{config.m} "
            f"block tuples exceeds budget {budget} pairs")
    limit = math.isqrt(budget)
    tuples = labelled_placements(config, limit)
    if len(tuples) > limit:
        raise BudgetExceededError(
            f"second-moment enumeration needs more than {limit}^2 placement pairs (budget {budget})")
    if not tuples:
        raise ConfigurationError("placement family is empty for these dimensions")
    # per placement: template label and flattened template coordinate of every cell
    labels = np.full((len(tuples), n * n), -1, dtype=np.intp)
    coords = np.zeros((len(tuples), n * n), dtype=np.intp)
    for p, combo in enumerate(tuples):
        for ell, block in enumerate(combo):
            for u, i in enumerate(block.rows):
                for v, j in enumerate(block.cols):
                    labels[p, i * n + j] = ell
                    coords[p, i * n + j] = u * k + v
    table = _log_rho_table(family)
    planted = labels >= 0
    safe = np.where(planted, labels, 0)
    terms = []
    for p in range(len(tuples)):
        both = planted[p] & planted
        log_prod = np.where(both, table[safe[p], safe, coords[p], coords], 0.0).sum(axis=1)
        terms.extend(np.exp(log_prod).tolist())
    return math.fsum(terms) / len(tuples) ** 2


def log_second_moment_bound_from_theta(theta: float, config: PlacementConfig) -> float:
    """Log of the closed-form upper bound on E_H0[L_n^2] for a given theta_star."""
    n, k, m = config.n, config.k, config.m
    if config.placement is Placement.NONCON:
        if theta > 1.0 / k:
            raise BranchInapplicableError(
                f"bound branch inapplicable: theta_star = {theta:.6g} > 1/k = {1 / k:.6g}")
        return k * m * m * math.log1p(k / n * math.expm1(2 * k * k * theta / n))
    if config.placement is Placement.CIRC:
        if 2 * k > n:
            raise BranchInapplicableError(f"bound branch inapplicable: k = {k} > n/2")
        exponent = theta * k * k
        if exponent > LOG_OVERFLOW:
            # log(1 + c (e^x - 1)) ~ x + log c once e^x dominates
            return m * m * (exponent + math.log(4 * k * k / (n * n)))
        return m * m * math.log1p(4 * k * k / (n * n) * math.expm1(exponent))
    raise BranchInapplicableError(
        "bound branch inapplicable: standard consecutive placements have no direct bound")


def second_moment_bound_from_theta(theta: float, config: PlacementConfig) -> float:
    log_value = log_second_moment_bound_from_theta(theta, config)
    return math.exp(log_value) if log_value <= LOG_OVERFLOW else math.inf


def second_moment_upper_bound(config: PlacementConfig, family: TemplateFamily,
                              log: bool = False) -> float:
    """Closed-form upper bound on E_H0[L_n^2]; ``log=True`` returns its logarithm.

    Raises BranchInapplicableError when the bound's standing assumption fails.
    Without ``log`` a bound whose logarithm exceeds 700 is returned as inf.
    """
    family.check_dims(config.dims)
    theta = theta_star(chi2_grid(family))
    if log:
        return log_second_moment_bound_from_theta(theta, config)
    return second_moment_bound_from_theta(theta, config)
