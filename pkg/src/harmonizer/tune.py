"""Hyperparameter search: a self-contained Tree-structured Parzen Estimator.

Maximizes a black-box objective over a box-bounded space. Completed trials
split into a good quantile and the rest; each dimension gets two Parzen
mixtures (truncated Gaussian kernel per sample plus a flat prior component
over the bounds), and the next point maximizes the density ratio l(x)/g(x)
over candidates drawn from l. No external optimization framework involved.
"""

from __future__ import annotations

import json
import logging
import math
import random
import time
from dataclasses import dataclass, field
from pathlib import Path
from statistics import NormalDist
from typing import Callable, Optional, Sequence

from .errors import ConfigError, InputError

log = logging.getLogger(__name__)

_STD_NORMAL = NormalDist()

# Bounds: weights stay in (0, 1]; the threshold spans the useful score range;
# resolution reaches past 1 so communities can be forced smaller; bridgeness
# below 0 effectively disables pruning, above 1 loosens it.
DEFAULT_SPACE: tuple[tuple[str, float, float], ...] = (
    ("w_token", 0.1, 1.0),
    ("w_first_token", 0.1, 1.0),
    ("w_url_text", 0.1, 1.0),
    ("w_domain", 0.1, 1.0),
    ("w_cos", 0.1, 1.0),
    ("threshold", 0.5, 5.0),
    ("resolution", 0.001, 2.0),
    ("bridgeness", -2.0, 2.0),
    ("location_boost", 0.0, 2.0),
)


class SearchSpace:
    """Ordered box bounds, one (name, lo, hi) per dimension."""

    def __init__(self, dims: Sequence[tuple[str, float, float]]):
        if not dims:
            raise ConfigError("search space needs at least one dimension")
        seen = set()
        for name, lo, hi in dims:
            if name in seen:
                raise ConfigError(f"duplicate search dimension {name!r}")
            seen.add(name)
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo >= hi:
                raise ConfigError(f"dimension {name!r} needs finite lo < hi, got [{lo}, {hi}]")
        self.dims: tuple[tuple[str, float, float], ...] = tuple(
            (name, float(lo), float(hi)) for name, lo, hi in dims
        )

    @classmethod
    def default(cls) -> "SearchSpace":
        return cls(DEFAULT_SPACE)

    @property
    def names(self) -> list[str]:
        return [name for name, _, _ in self.dims]

    def bounds(self, name: str) -> tuple[float, float]:
        for dim, lo, hi in self.dims:
            if dim == name:
                return lo, hi
        raise KeyError(name)

    def validate_point(self, params: dict[str, float]) -> None:
        if set(params) != set(self.names):
            raise ConfigError(f"point keys {sorted(params)} do not match space {self.names}")
        for name, lo, hi in self.dims:
            if not lo <= params[name] <= hi:
                raise ConfigError(f"{name}={params[name]} outside [{lo}, {hi}]")

    def uniform(self, rng: random.Random) -> dict[str, float]:
        return {name: rng.uniform(lo, hi) for name, lo, hi in self.dims}


@dataclass(frozen=True)
class Trial:
    trial_id: int
    params: dict[str, float]
    objective: float
    seed: int
    elapsed_s: float
    error: Optional[str] = None

    def to_json(self) -> str:
        return json.dumps(
            {
                "trial_id": self.trial_id,
                "params": self.params,
                "objective": self.objective,
                "seed": self.seed,
                "elapsed_s": self.elapsed_s,
                "error": self.error,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, line: str) -> "Trial":
        try:
            payload = json.loads(line)
        except json.JSONDecodeError as exc:
            raise InputError(f"bad trial line: {exc}") from exc
        return cls(
            trial_id=payload["trial_id"],
            params=dict(payload["params"]),
            objective=payload["objective"],
            seed=payload.get("seed", 0),
            elapsed_s=payload.get("elapsed_s", 0.0),
            error=payload.get("error"),
        )


@dataclass(frozen=True)
class TpeConfig:
    gamma: float = 0.25
    n_startup: int = 10
    n_candidates: int = 24
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError(f"tune.gamma must be in (0, 1), got {self.gamma}")
        if self.n_startup < 0:
            raise ConfigError(f"tune.n_startup must be >= 0, got {self.n_startup}")
        if self.n_candidates < 1:
            raise ConfigError(f"tune.n_candidates must be >= 1, got {self.n_candidates}")


def split_trials(history: Sequence[Trial], gamma: float) -> tuple[list[Trial], list[Trial]]:
    """Top ceil(gamma * n) trials by objective (ties by trial_id) vs the rest."""
    if not history:
        return [], []
    n_good = math.ceil(gamma * len(history))
    ranked = sorted(history, key=lambda t: (-t.objective, t.trial_id))
    return list(ranked[:n_good]), list(ranked[n_good:])


class ParzenEstimator:
    """1-D mixture over [lo, hi]: one truncated Gaussian per sample plus a
    flat prior component, all equally weighted. Integrates to 1 over the
    bounds; with no samples the density is exactly uniform."""

    def __init__(self, samples: Sequence[float], lo: float, hi: float):
        if not lo < hi:
            raise ConfigError(f"ParzenEstimator needs lo < hi, got [{lo}, {hi}]")
        for x in samples:
            if not lo <= x <= hi:
                raise ConfigError(f"sample {x} outside [{lo}, {hi}]")
        self.lo = lo
        self.hi = hi
        self.samples = list(samples)
        interval = hi - lo
        self.bandwidth = max(interval / min(100, len(self.samples) + 1), 1e-3 * interval)
        # Per-kernel truncation mass for the normalization of each Gaussian.
        self._masses = [
            _STD_NORMAL.cdf((hi - mu) / self.bandwidth) - _STD_NORMAL.cdf((lo - mu) / self.bandwidth)
            for mu in self.samples
        ]

    def pdf(self, x: float) -> float:
        if x < self.lo or x > self.hi:
            return 0.0
        k = len(self.samples)
        weight = 1.0 / (k + 1)
        density = weight / (self.hi - self.lo)  # flat prior component
        for mu, mass in zip(self.samples, self._masses):
            z = (x - mu) / self.bandwidth
            density += weight * _STD_NORMAL.pdf(z) / (self.bandwidth * mass)
        return density

    def sample(self, rng: random.Random) -> float:
        k = len(self.samples)
        choice = rng.randrange(k + 1)
        if choice == k:
            return rng.uniform(self.lo, self.hi)
        mu = self.samples[choice]
        a = _STD_NORMAL.cdf((self.lo - mu) / self.bandwidth)
        b = _STD_NORMAL.cdf((self.hi - mu) / self.bandwidth)
        u = rng.uniform(a, b)
        # Guard the open interval; inv_cdf rejects 0 and 1.
        u = min(max(u, 1e-12), 1.0 - 1e-12)
        x = mu + self.bandwidth * _STD_NORMAL.inv_cdf(u)
        return min(max(x, self.lo), self.hi)


def suggest(
    history: Sequence[Trial],
    space: SearchSpace,
    config: TpeConfig,
    rng: random.Random,
) -> dict[str, float]:
    """Next point to try. Uniform during startup; afterwards, per dimension,
    the candidate maximizing l(x)/g(x) among draws from l."""
    if len(history) < config.n_startup:
        return space.uniform(rng)
    good, bad = split_trials(history, config.gamma)
    point: dict[str, float] = {}
    for name, lo, hi in space.dims:
        l_est = ParzenEstimator([t.params[name] for t in good], lo, hi)
        g_est = ParzenEstimator([t.params[name] for t in bad], lo, hi)
        best_x = None
        best_ratio = -math.inf
        for _ in range(config.n_candidates):
            x = l_est.sample(rng)
            ratio = l_est.pdf(x) / g_est.pdf(x)  # g > 0 inside bounds (prior)
            if ratio > best_ratio:
                best_ratio = ratio
                best_x = x
        point[name] = best_x
    return point


@dataclass
class TrialHistory:
    trials: list[Trial] = field(default_factory=list)
    elapsed_s: float = 0.0

    @property
    def best(self) -> Trial:
        if not self.trials:
            raise InputError("no trials recorded")
        return max(self.trials, key=lambda t: (t.objective, -t.trial_id))


def load_trials(path: str | Path) -> list[Trial]:
    path = Path(path)
    trials = []
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                trials.append(Trial.from_json(line))
            except (InputError, KeyError) as exc:
                raise InputError(f"{path} line {line_no}: {exc}") from exc
    return trials


def optimize(
    objective: Callable[[dict[str, float]], float],
    space: SearchSpace,
    n_trials: int,
    config: TpeConfig = TpeConfig(),
    *,
    initial: Optional[Sequence[dict[str, float]]] = None,
    store_path: str | Path | None = None,
) -> TrialHistory:
    """Run n_trials sequential trials and return them all plus the argmax.

    ``initial`` points (the incumbent config, say) are evaluated first, before
    any sampling. A trial whose objective raises is recorded with objective
    0.0 and the error message; it still counts toward the budget.
    """
    if n_trials < 1:
        raise ConfigError(f"n_trials must be >= 1, got {n_trials}")
    rng = random.Random(config.seed)
    history = TrialHistory()
    store = Path(store_path).open("a", encoding="utf-8") if store_path else None
    t_start = time.perf_counter()
    try:
        for trial_id in range(n_trials):
            if initial is not None and trial_id < len(initial):
                params = dict(initial[trial_id])
                space.validate_point(params)
            else:
                params = suggest(history.trials, space, config, rng)
            t0 = time.perf_counter()
            error = None
            try:
                value = float(objective(params))
            except Exception as exc:  # objective bugs must not kill the search
                value = 0.0
                error = f"{type(exc).__name__}: {exc}"
                log.warning("trial %d failed: %s", trial_id, error)
            trial = Trial(
                trial_id=trial_id,
                params=params,
                objective=value,
                seed=config.seed,
                elapsed_s=time.perf_counter() - t0,
                error=error,
            )
            history.trials.append(trial)
            if store is not None:
                store.write(trial.to_json() + "\n")
                store.flush()
    finally:
        if store is not None:
            store.close()
    history.elapsed_s = time.perf_counter() - t_start
    return history
