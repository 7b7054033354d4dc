"""Monte Carlo risk estimation, parameter sweeps and CSV/JSON reports.

Every trial draws from its own generator keyed by ``(master_seed,
hypothesis, trial)``, so a run is reproducible bit-for-bit and does not depend
on how many worker threads execute it.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from .detectors import DEFAULT_DELTA, ScanPlan, TestDecision, TestId, run_test
from .errors import ConfigurationError, PlantedLabError
from .model import (Dimensions, Hypothesis, Kind, Placement, PlacementConfig, TemplateFamily,
                    generate, stream_rng)
from .theory import BoundReport, bound_report

Z95 = 1.959963984540054


# ---------------------------------------------------------------- template recipes

def _ramp(k: int, ell: int) -> np.ndarray:
    """Linear gradient from 0.5 to 1 whose direction turns with the template index."""
    t = np.linspace(0.5, 1.0, k) if k > 1 else np.ones(1)
    if ell % 4 == 0:
        return np.repeat(t[:, None], k, axis=1)
    if ell % 4 == 1:
        return np.repeat(t[None, :], k, axis=0)
    if ell % 4 == 2:
        return np.repeat(t[::-1, None], k, axis=1)
    return np.repeat(t[None, ::-1], k, axis=0)


def _smooth_bump(k: int, rng: np.random.Generator) -> np.ndarray:
    """Low-frequency pattern with entries in [0.5, 1]."""
    grid = np.arange(k) / max(k, 1)
    fx, fy = rng.uniform(0.5, 1.5, size=2)
    px, py = rng.uniform(0, 2 * np.pi, size=2)
    wave = np.sin(2 * np.pi * fx * grid + px)[:, None] * np.sin(2 * np.pi * fy * grid + py)[None, :]
    return 0.75 + 0.25 * wave


def recipe_templates(recipe: str, k: int, m: int, seed: int = 0) -> np.ndarray:
    """Unit-amplitude template shapes, shape (m, k, k), max entry 1.

    homogeneous   constant 1; smooth (spikiness ratio 1).
    gradient      linear ramps in [0.5, 1]; smooth (spikiness below 2).
    random-smooth seeded low-frequency patterns in [0.5, 1]; smooth (below 4).
    spike         one nonzero centre entry; not smooth (spikiness k^2).
    """
    if recipe == "homogeneous":
        shapes = np.ones((m, k, k))
    elif recipe == "gradient":
        shapes = np.stack([_ramp(k, ell) for ell in range(m)])
    elif recipe == "random-smooth":
        rng = np.random.default_rng(seed)
        shapes = np.stack([_smooth_bump(k, rng) for _ in range(m)])
    elif recipe == "spike":
        shapes = np.zeros((m, k, k))
        shapes[:, k // 2, k // 2] = 1.0
    else:
        raise ConfigurationError(f"unknown template recipe {recipe!r}")
    return shapes / shapes.max(axis=(1, 2), keepdims=True)


def make_family(recipe: str, kind, k: int, m: int, amplitude: float | None = None,
                energy: float | None = None, seed: int = 0) -> TemplateFamily:
    """Build a family from a recipe scaled by its peak ``amplitude`` or to a target ``energy``.

    With ``energy`` the whole family is scaled so that the largest per-template
    energy equals the target.
    """
    shapes = recipe_templates(recipe, k, m, seed)
    if (amplitude is None) == (energy is None):
        raise ConfigurationError("give exactly one of amplitude and energy")
    return _rescale(Kind.parse(kind), shapes, amplitude=amplitude, energy=energy)


def _scaled(family: TemplateFamily, amplitude=None, energy=None) -> TemplateFamily:
    return _rescale(family.kind, family.templates, amplitude, energy)


def _rescale(kind: Kind, t: np.ndarray, amplitude=None, energy=None) -> TemplateFamily:
    if energy is not None:
        current = float(np.max(np.sum(t ** 2, axis=(1, 2))))
        if current == 0:
            raise ConfigurationError("cannot rescale an all-zero family to a target energy")
        scale = math.sqrt(energy / current)
    else:
        scale = amplitude / float(np.max(np.abs(t)))
    scaled = t * scale
    if kind is Kind.VARIANCE:
        top = float(scaled.max())
        if top >= 1:
            raise ConfigurationError(f"variance shifts must stay below 1 (largest {top:.4g})")
        return TemplateFamily(kind, scaled, top)
    return TemplateFamily(kind, scaled)


# ---------------------------------------------------------------- configuration

@dataclass(frozen=True)
class Sweep:
    param: str
    values: tuple

    SWEEPABLE = ("energy", "amplitude", "n", "k", "m", "delta")

    def __post_init__(self):
        if self.param not in self.SWEEPABLE:
            raise ConfigurationError(f"cannot sweep over {self.param!r}; choose from {self.SWEEPABLE}")
        if not self.values:
            raise ConfigurationError("sweep grid must be non-empty")
        object.__setattr__(self, "values", tuple(self.values))


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce a risk estimate or a sweep.

    The template family is either given inline (``family``) or built from a
    ``recipe`` dict: ``{"name", "kind", "amplitude" | "energy", "seed"}``.
    """

    n: int
    k: int
    m: int
    placement: Placement
    tests: tuple
    family: TemplateFamily | None = None
    recipe: dict | None = None
    delta: float = DEFAULT_DELTA
    trials: int = 200
    master_seed: int = 0
    sweep: Sweep | None = None
    bound_delta: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "placement", Placement.parse(self.placement))
        object.__setattr__(self, "tests", tuple(
            t if callable(t) else TestId.parse(t) for t in self.tests))
        Dimensions(self.n, self.k, self.m)
        if self.trials < 1:
            raise ConfigurationError("trials must be at least 1")
        if not self.tests:
            raise ConfigurationError("at least one test is required")
        if (self.family is None) == (self.recipe is None):
            raise ConfigurationError("give exactly one of family and recipe")

    @property
    def placement_config(self) -> PlacementConfig:
        return PlacementConfig.of(self.n, self.k, self.m, self.placement)

    def template_family(self) -> TemplateFamily:
        if self.family is not None:
            self.family.check_dims(Dimensions(self.n, self.k, self.m))
            return self.family
        r = self.recipe
        try:
            return make_family(r["name"], r["kind"], self.k, self.m, r.get("amplitude"),
                               r.get("energy"), r.get("seed", 0))
        except KeyError as exc:
            raise ConfigurationError(f"template recipe lacks field {exc}") from None

    def at(self, param: str, value) -> "ExperimentConfig":
        """This configuration with one sweep parameter set to ``value``."""
        if param in ("n", "k", "m"):
            return dataclasses.replace(self, sweep=None, **{param: int(value)})
        if param == "delta":
            return dataclasses.replace(self, sweep=None, delta=float(value))
        if self.recipe is not None:
            recipe = {key: v for key, v in self.recipe.items() if key not in ("amplitude", "energy")}
            recipe[param] = float(value)
            return dataclasses.replace(self, sweep=None, recipe=recipe)
        family = _scaled(self.family, **{param: float(value)})
        return dataclasses.replace(self, sweep=None, family=family)

    def to_json(self) -> dict:
        return {
            "n": self.n, "k": self.k, "m": self.m, "placement": self.placement.value,
            "tests": [t.value if isinstance(t, TestId) else getattr(t, "__name__", str(t))
                      for t in self.tests],
            "family": None if self.family is None else self.family.to_json(),
            "recipe": self.recipe, "delta": self.delta, "trials": self.trials,
            "seed": self.master_seed, "bound_delta": self.bound_delta,
            "sweep": None if self.sweep is None else
            {"param": self.sweep.param, "values": list(self.sweep.values)},
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ExperimentConfig":
        try:
            sweep = doc.get("sweep")
            family = doc.get("family")
            return cls(
                n=doc["n"], k=doc["k"], m=doc["m"], placement=doc["placement"],
                tests=tuple(doc["tests"]),
                family=None if family is None else TemplateFamily.from_json(family),
                recipe=doc.get("recipe"),
                delta=doc.get("delta", DEFAULT_DELTA), trials=doc.get("trials", 200),
                master_seed=doc.get("seed", 0),
                sweep=None if sweep is None else Sweep(sweep["param"], tuple(sweep["values"])),
                bound_delta=doc.get("bound_delta", 0.1),
            )
        except KeyError as exc:
            raise ConfigurationError(f"experiment config lacks field {exc}") from None


# ---------------------------------------------------------------- risk estimation

def half_width(errors: int, trials: int) -> float:
    """95% half-width: normal approximation, Clopper-Pearson near 0 or 1."""
    p = errors / trials
    if min(errors, trials - errors) >= 5:
        return Z95 * math.sqrt(p * (1 - p) / trials)
    lo = stats.beta.ppf(0.025, errors, trials - errors + 1) if errors > 0 else 0.0
    hi = stats.beta.ppf(0.975, errors + 1, trials - errors) if errors < trials else 1.0
    return float(max(p - lo, hi - p))


@dataclass(frozen=True)
class TestRisk:
    __test__ = False

    test_id: str
    type_i: float
    type_ii: float
    risk: float
    h0_trials: int
    h1_trials: int
    type_i_half_width: float
    type_ii_half_width: float

    @property
    def ci_half_width(self) -> float:
        return math.hypot(self.type_i_half_width, self.type_ii_half_width)


@dataclass(frozen=True)
class RiskReport:
    n: int
    k: int
    m: int
    placement: Placement
    delta: float
    trials: int
    tests: dict[str, TestRisk] = field(default_factory=dict)

    def __getitem__(self, test_id) -> TestRisk:
        key = test_id.value if isinstance(test_id, TestId) else str(test_id)
        return self.tests[key]


def _test_name(test) -> str:
    return test.value if isinstance(test, TestId) else getattr(test, "__name__", str(test))


def _apply(test, obs, family, plan) -> int:
    if isinstance(test, TestId):
        return run_test(test, obs, family, plan).decision
    out = test(obs, family)
    return out.decision if isinstance(out, TestDecision) else int(out)


def _trial(config: ExperimentConfig, family, plan, hypothesis: Hypothesis, t: int) -> list[int]:
    key = 0 if hypothesis is Hypothesis.H0 else 1
    rng = stream_rng(config.master_seed, key, t)
    try:
        obs = generate(config.placement_config, family, hypothesis, rng)
        return [_apply(test, obs, family, plan) for test in config.tests]
    except PlantedLabError as exc:
        raise type(exc)(f"trial {t} under {hypothesis.value} failed: {exc}") from exc


def estimate_risk(config: ExperimentConfig, threads: int = 1) -> RiskReport:
    """Empirical Type-I and Type-II rates of every configured test.

    ``trials`` observations are drawn under each hypothesis; every test sees
    the same observations.
    """
    family = config.template_family()
    plan = ScanPlan.default(config.placement, config.delta)
    jobs = [(h, t) for h in (Hypothesis.H0, Hypothesis.H1) for t in range(config.trials)]

    def work(job):
        return _trial(config, family, plan, *job)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            decisions = list(pool.map(work, jobs))
    else:
        decisions = [work(job) for job in jobs]
    decisions = np.array(decisions, dtype=np.int64).reshape(2, config.trials, len(config.tests))
    false_alarms = decisions[0].sum(axis=0)
    misses = config.trials - decisions[1].sum(axis=0)
    out = {}
    for idx, test in enumerate(config.tests):
        fa, miss = int(false_alarms[idx]), int(misses[idx])
        type_i, type_ii = fa / config.trials, miss / config.trials
        out[_test_name(test)] = TestRisk(
            _test_name(test), type_i, type_ii, type_i + type_ii, config.trials, config.trials,
            half_width(fa, config.trials), half_width(miss, config.trials))
    return RiskReport(config.n, config.k, config.m, config.placement, config.delta,
                      config.trials, out)


# ---------------------------------------------------------------- sweeps

@dataclass(frozen=True)
class SweepPoint:
    param: str | None
    value: float | None
    report: RiskReport
    bounds: BoundReport | None


def _bounds_or_none(config: ExperimentConfig) -> BoundReport | None:
    try:
        return bound_report(config.template_family(), config.placement_config, config.bound_delta)
    except ConfigurationError:
        return None


def run_sweep(config: ExperimentConfig, threads: int = 1) -> list[SweepPoint]:
    """One risk estimate (with its bound report) per sweep grid value."""
    if config.sweep is None:
        return [SweepPoint(None, None, estimate_risk(config, threads), _bounds_or_none(config))]
    points = []
    for value in config.sweep.values:
        point_config = config.at(config.sweep.param, value)
        points.append(SweepPoint(config.sweep.param, float(value),
                                 estimate_risk(point_config, threads),
                                 _bounds_or_none(point_config)))
    return points


# ---------------------------------------------------------------- reports

@dataclass(frozen=True)
class ReportRow:
    sweep_param: str | None
    sweep_value: float | None
    n: int
    k: int
    m: int
    family: str
    test_id: str
    delta: float
    trials: int
    type_i: float
    type_ii: float
    risk: float
    ci_half_width: float
    theta_star: float | None
    energy: float | None
    lb_noncon_satisfied: bool | None
    lb_circ_satisfied: bool | None


COLUMNS = [f.name for f in dataclasses.fields(ReportRow)]
_INTS = {"n", "k", "m", "trials"}
_FLOATS = {"sweep_value", "delta", "type_i", "type_ii", "risk", "ci_half_width",
           "theta_star", "energy"}
_BOOLS = {"lb_noncon_satisfied", "lb_circ_satisfied"}


def report_rows(points: Sequence[SweepPoint]) -> list[ReportRow]:
    rows = []
    for point in points:
        r, b = point.report, point.bounds
        for risk in r.tests.values():
            rows.append(ReportRow(
                point.param, point.value, r.n, r.k, r.m, r.placement.value, risk.test_id,
                r.delta, r.trials, risk.type_i, risk.type_ii, risk.risk, risk.ci_half_width,
                None if b is None else b.theta_star, None if b is None else b.energy,
                None if b is None else b.satisfied("impossibility_noncon"),
                None if b is None else b.satisfied("impossibility_circ")))
    return rows


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_cell(name: str, text: str):
    if text == "":
        return None
    if name in _INTS:
        return int(text)
    if name in _FLOATS:
        return float(text)
    if name in _BOOLS:
        return text == "True"
    return text


def emit_report(points: Sequence[SweepPoint], path=None, format: str = "csv") -> str:
    """Serialise sweep points; writes to ``path`` when given and returns the text."""
    rows = report_rows(points)
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(COLUMNS)
        for row in rows:
            writer.writerow([_cell(getattr(row, c)) for c in COLUMNS])
        text = buf.getvalue()
    elif format == "json":
        text = json.dumps([dataclasses.asdict(row) for row in rows], indent=1) + "\n"
    else:
        raise ConfigurationError(f"unknown report format {format!r}")
    if path is not None:
        Path(path).write_text(text)
    return text


def parse_report(text: str, format: str = "csv") -> list[ReportRow]:
    if format == "json":
        return [ReportRow(**row) for row in json.loads(text)]
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is not None and reader.fieldnames != COLUMNS:
        raise ConfigurationError(f"unexpected report columns {reader.fieldnames}")
    return [ReportRow(**{c: _parse_cell(c, row[c]) for c in COLUMNS}) for row in reader]


def read_report(path, format: str | None = None) -> list[ReportRow]:
    path = Path(path)
    format = format or ("json" if path.suffix == ".json" else "csv")
    return parse_report(path.read_text(), format)

