"""Monte Carlo parameter-recovery studies for the bivariate scenarios.

Each scenario fixes a true distribution; a study draws ``replicates``
independent samples of size ``n`` (per-replicate seeds derived from the
master seed by index), refits the generating model, and summarizes every
parameter by median bias, median absolute deviation, and interquartile
range.  Non-converged or failed replicates are counted and excluded;
a failure share above twenty percent aborts the study with diagnostics.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .bce import BceDistribution
from .families import Family
from .mle import FitSpec, fit
from .rng import spawn_seed
from .transform import BoxCoxParams
from .truncated import GibbsConfig

__all__ = [
    "SCENARIOS",
    "Scenario",
    "StudyConfig",
    "StudyFailureError",
    "StudySummary",
    "run_study",
]

_THREADS_ENV = "BCE_THREADS"


class StudyFailureError(RuntimeError):
    """More than a fifth of the replicates failed to produce estimates."""


@dataclass(frozen=True)
class Scenario:
    """A true bivariate model and the fit specification that targets it."""

    name: str
    kind: str
    mu: tuple[float, ...]
    lam: tuple[float, ...]
    sigma: tuple[tuple[float, ...], ...]
    eta: float | None = None

    @property
    def family(self) -> Family:
        if self.kind == "normal":
            return Family.normal(len(self.mu))
        return Family(self.kind, (self.eta,), len(self.mu))

    def distribution(self) -> BceDistribution:
        return BceDistribution(
            BoxCoxParams(self.mu, self.lam), np.asarray(self.sigma), self.family
        )

    def fit_spec(self) -> FitSpec:
        zero = all(l == 0.0 for l in self.lam)
        return FitSpec(
            kind=self.kind,
            lambda_constraints="zero" if zero else "free",
        )

    @property
    def parameter_names(self) -> tuple[str, ...]:
        p = len(self.mu)
        names = [f"mu{k + 1}" for k in range(p)]
        if any(l != 0.0 for l in self.lam):
            names += [f"lambda{k + 1}" for k in range(p)]
        names += [f"sigma{j + 1}{k + 1}" for j in range(p) for k in range(j, p)]
        if self.eta is not None:
            names.append({"t": "tau", "pexp": "beta", "slash": "q"}[self.kind])
        return tuple(names)

    @property
    def truth(self) -> tuple[float, ...]:
        p = len(self.mu)
        sig = np.asarray(self.sigma)
        values = list(self.mu)
        if any(l != 0.0 for l in self.lam):
            values += list(self.lam)
        values += [sig[j, k] for j in range(p) for k in range(j, p)]
        if self.eta is not None:
            values.append(self.eta)
        return tuple(values)

    def estimate_vector(self, result) -> np.ndarray:
        p = len(self.mu)
        sig = np.asarray(result.sigma)
        values = list(result.mu)
        if any(l != 0.0 for l in self.lam):
            values += list(result.lam)
        values += [sig[j, k] for j in range(p) for k in range(j, p)]
        if self.eta is not None:
            values.append(float(result.eta))
        return np.array(values)


SCENARIOS = {
    "LogNormal2": Scenario(
        "LogNormal2", "normal", (8.0, 8.0), (0.0, 0.0), ((0.8, -0.5), (-0.5, 1.0))
    ),
    "LogT2": Scenario(
        "LogT2", "t", (7.0, 10.0), (0.0, 0.0), ((1.2, 0.6), (0.6, 1.4)), 5.0
    ),
    "BoxCoxNormal2": Scenario(
        "BoxCoxNormal2", "normal", (5.0, 4.0), (-1.0, 0.5), ((0.6, 0.2), (0.2, 0.8))
    ),
    "BoxCoxT2": Scenario(
        "BoxCoxT2", "t", (20.0, 15.0), (0.4, 0.3), ((0.4, 0.1), (0.1, 0.3)), 6.0
    ),
}


@dataclass(frozen=True)
class StudyConfig:
    """Scenario, sample size, replicate count, seeding, and parallelism."""

    scenario: str
    n: int = 500
    replicates: int = 200
    master_seed: int = 0
    n_jobs: int = 1
    thin: int = 3

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(
                f"unknown scenario {self.scenario!r}; choose from {sorted(SCENARIOS)}"
            )
        if self.replicates < 10:
            raise ValueError("a study needs at least 10 replicates")
        if self.n < 10:
            raise ValueError("sample size must be at least 10")
        if self.n_jobs < 1:
            raise ValueError("parallelism degree must be positive")
        if self.thin < 1:
            raise ValueError("chain thinning must be positive")


@dataclass(frozen=True)
class StudySummary:
    """Per-parameter recovery summaries plus failure and timing records."""

    scenario: str
    n: int
    replicates: int
    master_seed: int
    parameter_names: tuple[str, ...]
    truth: tuple[float, ...]
    mb: tuple[float, ...]
    mad: tuple[float, ...]
    iqr: tuple[float, ...]
    failures: int
    wall_time: float
    estimates: np.ndarray

    def __post_init__(self):
        est = np.asarray(self.estimates, dtype=float)
        est.flags.writeable = False
        object.__setattr__(self, "estimates", est)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "n": self.n,
            "replicates": self.replicates,
            "master_seed": self.master_seed,
            "parameters": list(self.parameter_names),
            "truth": list(self.truth),
            "mb": list(self.mb),
            "mad": list(self.mad),
            "iqr": list(self.iqr),
            "failures": self.failures,
            "wall_time": self.wall_time,
        }


def _worker_count(requested: int) -> int:
    cap = os.environ.get(_THREADS_ENV)
    if cap is not None:
        try:
            requested = min(requested, max(1, int(cap)))
        except ValueError:
            pass
    return max(1, requested)


def _one_replicate(scenario: Scenario, spec: FitSpec, n: int, seed: int, thin: int):
    data = scenario.distribution().sample(n, GibbsConfig(seed=seed, thin=thin))
    result = fit(data, spec)
    if not result.converged:
        return None, "non-converged"
    return scenario.estimate_vector(result), None


def run_study(config: StudyConfig) -> StudySummary:
    """Sample, refit, and summarize ``config.replicates`` replicates."""
    scenario = SCENARIOS[config.scenario]
    spec = replace(scenario.fit_spec(), compute_se=False)
    seeds = [spawn_seed(config.master_seed, i) for i in range(config.replicates)]
    start = time.perf_counter()

    def task(seed: int):
        try:
            return _one_replicate(scenario, spec, config.n, seed, config.thin)
        except Exception as exc:  # noqa: BLE001 - replicate failures are data
            return None, f"{type(exc).__name__}: {exc}"

    jobs = _worker_count(config.n_jobs)
    if jobs == 1:
        outcomes = [task(seed) for seed in seeds]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(task, seeds))

    rows = [est for est, _ in outcomes if est is not None]
    errors = [msg for _, msg in outcomes if msg is not None]
    failures = len(errors)
    if failures > 0.2 * config.replicates:
        sample_msgs = sorted(set(errors))[:5]
        raise StudyFailureError(
            f"{failures} of {config.replicates} replicates failed: "
            + "; ".join(sample_msgs)
        )

    estimates = np.vstack(rows)
    med = np.median(estimates, axis=0)
    truth = np.array(scenario.truth)
    mb = med - truth
    mad = np.median(np.abs(estimates - med), axis=0)
    q75, q25 = np.percentile(estimates, [75, 25], axis=0)
    return StudySummary(
        scenario=config.scenario,
        n=config.n,
        replicates=config.replicates,
        master_seed=config.master_seed,
        parameter_names=scenario.parameter_names,
        truth=scenario.truth,
        mb=tuple(mb),
        mad=tuple(mad),
        iqr=tuple(q75 - q25),
        failures=failures,
        wall_time=time.perf_counter() - start,
        estimates=estimates,
    )
