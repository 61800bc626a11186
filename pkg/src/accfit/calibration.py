"""Bounded parameter estimation of a model variant against one observed follower."""

from __future__ import annotations

import json
import statistics
from concurrent.futures import Executor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from accfit.errors import CalibrationError, ConfigError
from accfit.gof import DEFAULT_PENALTY, GofConfig, MoP, evaluate, mop_errors, penalized_objective
from accfit.models import ModelSpec
from accfit.simulator import PhysicsConfig, simulate_batch, simulate_follower
from accfit.trajectory_data import KinematicSeries, PlatoonTrajectory, consistent_series

VEHICLE_TYPES = ("Tesla", "BMW", "AudiA6", "Mercedes")

_SHARED_BOUNDS = {
    "delta": (0.1, 10.0),
    "v0": (30.0, 35.0),
    "d0": (1.0, 5.0),
    "th": (0.1, 3.0),
    "a_max": (0.5, 5.0),
    "a_min": (-5.0, -0.5),
    "a_min_hat": (-5.0, -0.5),
    "theta": (0.0, 3.0),
    "tau_a": (0.3, 0.8),
    "tau_p": (0.1, 0.8),
    "m_load": (230.0, 300.0),
    "ks": (0.01, 5.0),
    "kv": (0.01, 5.0),
    "k0": (0.01, 5.0),
}

# road-load coefficient ranges per vehicle type (Tesla, BMW, AudiA6, Mercedes)
_ROAD_LOAD_BOUNDS = {
    "f0": ((185.1, 190.3, 154.9, 139.5), (226.3, 232.6, 189.4, 170.4)),
    "f1": ((0.0, -0.63, 0.64, 0.56), (0.0, -0.52, 0.78, 0.69)),
    "f2": ((0.025, 0.042, 0.026, 0.027), (0.031, 0.051, 0.031, 0.033)),
}


def vehicle_type(label: str) -> str:
    """Canonical vehicle-type key (``"Audi A6"`` -> ``"AudiA6"``)."""
    key = label.replace(" ", "").replace("_", "").replace("-", "").lower()
    for vt in VEHICLE_TYPES:
        if vt.lower() == key:
            return vt
    raise ConfigError(f"unknown vehicle type {label!r}; expected one of {VEHICLE_TYPES}")


@dataclass(frozen=True)
class ParameterBounds:
    """Closed interval per parameter name. Degenerate intervals fix the parameter."""

    bounds: Mapping[str, tuple[float, float]]

    def __post_init__(self):
        clean = {}
        for name, (lo, hi) in self.bounds.items():
            lo, hi = float(lo), float(hi)
            if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
                raise ConfigError(f"invalid bounds for {name}: [{lo}, {hi}]")
            clean[name] = (lo, hi)
        object.__setattr__(self, "bounds", clean)

    @classmethod
    def default(cls, vehicle: str | None = None) -> ParameterBounds:
        """Shared ranges, plus road-load ranges when ``vehicle`` is given."""
        b = dict(_SHARED_BOUNDS)
        if vehicle is not None:
            i = VEHICLE_TYPES.index(vehicle_type(vehicle))
            for name, (lows, highs) in _ROAD_LOAD_BOUNDS.items():
                b[name] = (lows[i], highs[i])
        return cls(b)

    def override(self, updates: Mapping[str, Sequence[float]]) -> ParameterBounds:
        b = dict(self.bounds)
        b.update({k: tuple(v) for k, v in updates.items()})
        return ParameterBounds(b)

    def for_spec(self, spec: ModelSpec) -> tuple[tuple[str, ...], np.ndarray, np.ndarray]:
        names = spec.param_names
        missing = [n for n in names if n not in self.bounds]
        if missing:
            raise ConfigError(f"no bounds for {missing} required by model {spec.model_id}")
        lo = np.array([self.bounds[n][0] for n in names])
        hi = np.array([self.bounds[n][1] for n in names])
        return names, lo, hi

    def contains(self, params: Mapping[str, float]) -> bool:
        return all(self.bounds[k][0] <= v <= self.bounds[k][1] for k, v in params.items())


# -- genetic algorithm ---------------------------------------------------------------

@dataclass(frozen=True)
class OptimizerConfig:
    """Real-coded GA settings. Every random draw derives from ``seed``."""

    population: int = 50
    generations: int = 300
    crossover_rate: float = 0.5
    mutation_rate: float = 0.1
    mutation_scale: float = 0.1
    tournament: int = 2
    elite: int = 1
    stagnation: int = 50
    seed: int = 0
    polish: bool = True
    polish_evaluations: int = 1500
    polish_xtol: float = 1e-8
    polish_ftol: float = 1e-12

    def __post_init__(self):
        if self.population < 4:
            raise ConfigError("population must be at least 4")
        if self.generations < 1:
            raise ConfigError("generations must be at least 1")
        if not 0 <= self.elite < self.population:
            raise ConfigError("elite count must be in [0, population)")
        if self.tournament < 1:
            raise ConfigError("tournament size must be positive")
        if self.mutation_scale <= 0:
            raise ConfigError("mutation scale must be positive")
        if self.polish_evaluations < 0:
            raise ConfigError("polish budget must be non-negative")
        for name in ("crossover_rate", "mutation_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")


@dataclass
class GAResult:
    x: np.ndarray
    fun: float
    history: list[float]
    evaluations: int
    generations: int


def _evaluate(objective, pop, vectorized, executor):
    if vectorized:
        values = np.asarray(objective(pop), dtype=float)
    elif executor is not None:
        values = np.array(list(executor.map(objective, list(pop))), dtype=float)
    else:
        values = np.array([objective(x) for x in pop], dtype=float)
    return np.where(np.isfinite(values), values, np.inf)


def ga_minimize(
    objective: Callable,
    lower: Sequence[float],
    upper: Sequence[float],
    opt: OptimizerConfig = OptimizerConfig(),
    vectorized: bool = False,
    executor: Executor | None = None,
    callback: Callable[[int, float], None] | None = None,
) -> GAResult:
    """Minimise ``objective`` over the box ``[lower, upper]``.

    Tournament selection, uniform crossover, Gaussian mutation clipped to
    the box, elitism. Offspring of a generation are fully drawn before they
    are evaluated, so parallel evaluation (``executor``) or a vectorised
    objective taking the whole ``(pop, dim)`` matrix cannot change the
    random stream. Non-finite objective values count as +inf.
    """
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    if lo.shape != hi.shape or lo.ndim != 1:
        raise ConfigError("bounds must be 1-D and of equal length")
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))) or np.any(lo > hi):
        raise ConfigError("bounds must be finite with lower <= upper")
    rng = np.random.default_rng(opt.seed)
    n, d = opt.population, lo.size
    span = hi - lo
    sigma = opt.mutation_scale * span

    pop = lo + rng.random((n, d)) * span
    fit = _evaluate(objective, pop, vectorized, executor)
    evals = n
    best = int(np.argmin(fit))
    best_x, best_f = pop[best].copy(), float(fit[best])
    history = [best_f]
    flat = 0
    gen = 0
    for gen in range(1, opt.generations + 1):
        order = np.argsort(fit, kind="stable")
        elite_x = pop[order[: opt.elite]]
        elite_f = fit[order[: opt.elite]]
        n_child = n - opt.elite
        n_pairs = (n_child + 1) // 2
        # tournament: best of `tournament` random entrants, one per parent slot
        entrants = rng.integers(0, n, size=(2 * n_pairs, opt.tournament))
        winners = entrants[np.arange(2 * n_pairs), np.argmin(fit[entrants], axis=1)]
        p1 = pop[winners[0::2]]
        p2 = pop[winners[1::2]]
        swap = rng.random((n_pairs, d)) < opt.crossover_rate
        c1 = np.where(swap, p2, p1)
        c2 = np.where(swap, p1, p2)
        children = np.concatenate([c1, c2])[:n_child]
        mutate = rng.random(children.shape) < opt.mutation_rate
        noise = rng.standard_normal(children.shape) * sigma
        children = np.clip(np.where(mutate, children + noise, children), lo, hi)

        child_f = _evaluate(objective, children, vectorized, executor)
        evals += len(children)
        pop = np.concatenate([elite_x, children])
        fit = np.concatenate([elite_f, child_f])
        k = int(np.argmin(fit))
        if fit[k] < best_f:
            best_x, best_f = pop[k].copy(), float(fit[k])
            flat = 0
        else:
            flat += 1
        history.append(best_f)
        if callback is not None:
            callback(gen, best_f)
        if opt.stagnation and flat >= opt.stagnation:
            break
    return GAResult(best_x, best_f, history, evals, gen)


def polish_minimum(objective: Callable, x0, lower, upper, opt: OptimizerConfig = OptimizerConfig()):
    """Bounded Nelder-Mead refinement of a GA optimum.

    The GA's axis-aligned operators are slow inside narrow valleys formed by
    correlated parameters; the simplex follows them cheaply. ``objective``
    takes one parameter vector. Returns ``(x, value, evaluations)``; ``x0``
    is returned unchanged when the refinement does not improve on it.
    """
    from scipy.optimize import minimize

    x0 = np.asarray(x0, dtype=float)
    f0 = float(objective(x0))
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    free = lo < hi
    if opt.polish_evaluations == 0 or not free.any():
        return x0, f0, 1

    def reduced(z):
        x = x0.copy()
        x[free] = z
        return objective(x)

    res = minimize(
        reduced, x0[free], method="Nelder-Mead", bounds=list(zip(lo[free], hi[free])),
        options={"maxfev": opt.polish_evaluations, "xatol": opt.polish_xtol,
                 "fatol": opt.polish_ftol, "adaptive": True},
    )
    evals = int(res.nfev) + 1
    if not float(res.fun) < f0:
        return x0, f0, evals
    x = x0.copy()
    x[free] = np.clip(res.x, lo[free], hi[free])
    return x, float(objective(x)), evals + 1


# -- calibration of a model variant ----------------------------------------------------

@dataclass(frozen=True)
class CalibrationData:
    """One car-following experiment: recorded leader and the observed follower behind it."""

    leader: KinematicSeries
    follower: KinematicSeries
    length: float
    slope: np.ndarray | None = None
    vehicle: str | None = None
    platoon: str | None = None

    def __post_init__(self):
        # the acceleration channel is compared too, so derive it when absent
        for name in ("leader", "follower"):
            series = getattr(self, name)
            if series.a is None:
                object.__setattr__(self, name, consistent_series(series))

    @classmethod
    def from_platoon(cls, traj: PlatoonTrajectory, vehicle_id: str) -> CalibrationData:
        i = traj.index_of(vehicle_id)
        if i == 0:
            raise ConfigError("the platoon leader cannot be calibrated (it has no predecessor)")
        lead = traj.vehicles[i - 1]
        return cls(lead.series, traj.vehicles[i].series, lead.length, traj.slope, vehicle_id, traj.platoon_id)

    @property
    def init(self) -> tuple[float, float]:
        return float(self.follower.x[0]), float(self.follower.v[0])

    @property
    def observed(self) -> MoP:
        s = self.leader.x - self.follower.x - self.length
        return MoP(s, self.follower.v, self.follower.a)


@dataclass
class CalibrationResult:
    model_id: int
    params: dict[str, float]
    objective: float
    errors: dict[str, float]
    evaluations: int
    generations: int
    seed: int
    gof: str
    history: list[float] = field(default_factory=list, repr=False)
    replicate_objectives: list[float] | None = None
    replicate_seeds: list[int] | None = None
    cv: float | None = None

    def to_json(self) -> dict:
        d = asdict(self)
        d.pop("history")
        return d

    @classmethod
    def from_json(cls, d: Mapping) -> CalibrationResult:
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def make_objective(data: CalibrationData, spec: ModelSpec, names, gof: GofConfig,
                   physics: PhysicsConfig | None = None):
    """Vectorised objective: ``(n, dim)`` parameter matrix -> n penalised GoF values."""
    obs = data.observed

    def objective(matrix):
        matrix = np.atleast_2d(matrix)
        params = {name: matrix[:, j] for j, name in enumerate(names)}
        res = simulate_batch(data.leader, data.init, spec, params, data.length, data.slope, physics)
        sim = MoP(res.s, res.v, res.a)
        with np.errstate(invalid="ignore"):
            values = np.asarray(evaluate(sim, obs, gof, start=res.gof_start_index), dtype=float)
        return np.where(res.failed, gof.penalty, values)

    return objective


def calibrate(
    data: CalibrationData,
    spec: ModelSpec,
    bounds: ParameterBounds | None = None,
    gof: GofConfig = GofConfig(),
    opt: OptimizerConfig = OptimizerConfig(),
    physics: PhysicsConfig | None = None,
) -> CalibrationResult:
    """Best-found parameters of ``spec`` for ``data`` within ``bounds``.

    Raises:
        ConfigError: the bounds do not cover the model's parameters.
        CalibrationError: every evaluated candidate collided or diverged.
    """
    if bounds is None:
        bounds = ParameterBounds.default(data.vehicle if _known_vehicle(data.vehicle) else None)
    names, lo, hi = bounds.for_spec(spec)
    objective = make_objective(data, spec, names, gof, physics)
    ga = ga_minimize(objective, lo, hi, opt, vectorized=True)
    if not ga.fun < gof.penalty:
        raise CalibrationError(
            f"model {spec.model_id}: no collision-free parameter set found "
            f"after {ga.evaluations} evaluations",
            evaluations=ga.evaluations,
        )
    best_x, best_f, evaluations = ga.x, ga.fun, ga.evaluations
    if opt.polish:
        best_x, best_f, extra = polish_minimum(lambda x: objective(x)[0], ga.x, lo, hi, opt)
        evaluations += extra
    params = {name: float(val) for name, val in zip(names, best_x)}
    # recompute through the single-run path and cross-check the optimizer's value
    sim = simulate_follower(data.leader, data.init, spec, params, data.length, data.slope, physics)
    value = penalized_objective(sim, data.observed, gof)
    if sim.collision is not None or not np.isclose(value, best_f, rtol=1e-9, atol=1e-12):
        raise CalibrationError(
            f"model {spec.model_id}: re-simulated objective {value!r} disagrees with optimizer {best_f!r}"
        )
    return CalibrationResult(
        model_id=spec.model_id,
        params=params,
        objective=value,
        errors=mop_errors(sim, data.observed),
        evaluations=evaluations,
        generations=ga.generations,
        seed=opt.seed,
        gof=gof.kind.value,
        history=ga.history,
    )


def coefficient_of_variation(values: Sequence[float]) -> float:
    """Population standard deviation over mean (0 for identical values)."""
    values = [float(v) for v in values]
    sd = statistics.pstdev(values)
    if sd == 0:
        return 0.0
    mean = statistics.fmean(values)
    if mean == 0:
        return float("inf")
    return sd / abs(mean)


def replicate(
    data: CalibrationData,
    spec: ModelSpec,
    bounds: ParameterBounds | None = None,
    gof: GofConfig = GofConfig(),
    opt: OptimizerConfig = OptimizerConfig(),
    n_replicates: int = 10,
    seeds: Sequence[int] | None = None,
    physics: PhysicsConfig | None = None,
) -> CalibrationResult:
    """Independent calibrations from different seeds; returns the best with replicate statistics."""
    if seeds is None:
        seeds = [opt.seed + i for i in range(n_replicates)]
    seeds = list(seeds)
    if len(seeds) < 2:
        raise ConfigError("replication needs at least two runs")
    runs = [calibrate(data, spec, bounds, gof, replace(opt, seed=s), physics) for s in seeds]
    best = min(runs, key=lambda r: r.objective)
    objectives = [r.objective for r in runs]
    best = replace(best, replicate_objectives=objectives, replicate_seeds=seeds,
                   cv=coefficient_of_variation(objectives))
    return best


def _known_vehicle(label: str | None) -> bool:
    if label is None:
        return False
    try:
        vehicle_type(label)
    except ConfigError:
        return False
    return True


__all__ = [
    "CalibrationData",
    "CalibrationResult",
    "DEFAULT_PENALTY",
    "GAResult",
    "OptimizerConfig",
    "ParameterBounds",
    "VEHICLE_TYPES",
    "calibrate",
    "coefficient_of_variation",
    "ga_minimize",
    "make_objective",
    "polish_minimum",
    "replicate",
    "vehicle_type",
]
