"""Wall-clock benchmark of the steering checks, split by phase."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from critzone.models import ModelKind, build_system, longitudinal_closed_form, steering_limits
from critzone.presets import three_root_problem, urban_approach
from critzone.scenario import Scenario
from critzone.steering import (
    Algorithm,
    RootConfig,
    avoid_by_steering,
    forward_plan,
    halley,
    longitudinal_travel,
    newton_raphson,
    sample_states,
    steering_time,
)

__all__ = ["BenchReport", "PhaseStats", "bench", "bench_solvers", "time_call"]

PHASES = ("t_s", "states", "x_s", "total")


@dataclass(frozen=True)
class PhaseStats:
    median_us: float
    p95_us: float

    @classmethod
    def of(cls, samples_s) -> "PhaseStats":
        a = np.asarray(samples_s) * 1e6
        return cls(float(np.median(a)), float(np.percentile(a, 95)))


@dataclass(frozen=True)
class BenchRow:
    model: str
    algorithm: int
    phases: dict[str, PhaseStats]
    iterations: int


@dataclass(frozen=True)
class BenchReport:
    rows: list[BenchRow]
    solvers: dict[str, dict[str, float]] = field(default_factory=dict)
    repeat: int = 0
    warmup: int = 0

    def total(self, model: str, algorithm: int) -> float:
        for r in self.rows:
            if r.model == model and r.algorithm == algorithm:
                return r.phases["total"].median_us
        raise KeyError((model, algorithm))

    def as_dict(self) -> dict:
        return asdict(self)


def time_call(fn, repeat: int = 1000, warmup: int = 100) -> np.ndarray:
    """Per-call wall times in seconds."""
    for _ in range(warmup):
        fn()
    out = np.empty(repeat)
    clock = time.perf_counter
    for i in range(repeat):
        t = clock()
        fn()
        out[i] = clock() - t
    return out


def _phase_fns(scenario: Scenario, kind: ModelKind, algorithm: Algorithm, config: RootConfig, dt: float):
    # each phase rebuilds what it needs so the timings stay independent
    def setup():
        system = build_system(scenario.params, kind, scenario.v_x)
        limits = steering_limits(scenario.params, scenario.comfort, scenario.mu, scenario.v_x, kind)
        return system, limits, scenario.initial_state(kind), scenario.y_L(kind)

    system, limits, x0, y_L = setup()
    if algorithm is Algorithm.FORWARD:
        t_f = (scenario.gap - scenario.x_margin) / scenario.closing_speed
        return {"states": lambda: forward_plan(system, x0, limits, t_f)}

    plan = steering_time(system, x0, limits, y_L, scenario.y_margin, config)

    def solve():
        s, lim, x, yl = setup()
        return steering_time(s, x, lim, yl, scenario.y_margin, config)

    fns = {"t_s": solve}
    if algorithm is Algorithm.SIMPLIFIED:
        fns["x_s"] = lambda: scenario.v_x * plan.t_s
        return fns
    if kind is ModelKind.DM:
        ts, states = sample_states(plan, dt)
        fns["states"] = lambda: sample_states(plan, dt)
        fns["x_s"] = lambda: longitudinal_travel(system, ts, states)[-1]
    else:
        fns["x_s"] = lambda: longitudinal_closed_form(system, x0, plan.t_s, plan.t_sa, limits)
    return fns


def bench(
    scenario: Scenario | None = None,
    models=("dm", "sscm", "km", "pmm"),
    algorithms=(2, 3, 4),
    repeat: int = 1000,
    warmup: int = 100,
    config: RootConfig = RootConfig(),
    dt: float = 0.01,
    solvers: bool = True,
) -> BenchReport:
    """Median and 95th-percentile per-call times for each (model, algorithm)."""
    if repeat < 1 or warmup < 0:
        raise ValueError("repeat must be positive and warmup nonnegative")
    scenario = scenario or urban_approach(70.0)
    rows = []
    for m in models:
        kind = ModelKind.parse(m)
        for a in algorithms:
            alg = Algorithm.parse(a)
            phases = {}
            for name, fn in _phase_fns(scenario, kind, alg, config, dt).items():
                phases[name] = PhaseStats.of(time_call(fn, repeat, warmup))
            outcome = avoid_by_steering(scenario, kind, alg, config, dt)
            phases["total"] = PhaseStats.of(
                time_call(lambda: avoid_by_steering(scenario, kind, alg, config, dt), repeat, warmup)
            )
            rows.append(BenchRow(kind.value, alg.number, phases, outcome.iterations))
    return BenchReport(rows, bench_solvers(repeat, warmup) if solvers else {}, repeat, warmup)


def bench_solvers(repeat: int = 1000, warmup: int = 100) -> dict[str, dict[str, float]]:
    """Newton against Halley on the three-root reference residual."""
    out = {}
    for name, fn in (("newton", newton_raphson), ("halley", halley)):
        def call(fn=fn):
            return fn(three_root_problem(), RootConfig(solver=name))

        res = call()
        times = time_call(call, repeat, warmup)
        out[name] = {
            "root_s": res.root,
            "iterations": res.iterations,
            "median_us": float(np.median(times) * 1e6),
            "p95_us": float(np.percentile(times, 95) * 1e6),
        }
    return out
