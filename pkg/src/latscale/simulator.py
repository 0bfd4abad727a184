"""Deterministic workload-and-latency simulator for the Robot Shop call graph.

Each service is modeled as a queueing station whose per-request latency
grows as 1/(1 - utilization) on top of a base service time, so pod
count, CPU, and memory causally drive end-to-end latency.  One
simulation step aggregates one interval of wall time (nominally one
second) and records the p95 latency per trace.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Mapping

import numpy as np

from .trace_data import MetricSeries, SeriesKind, TraceDataset, p95

if TYPE_CHECKING:  # avoid a runtime cycle; apply_plan duck-types the plan
    from .scaler import ScalingPlan

# Queueing constants.  Utilization is capped below 1 so latency stays
# finite; the floor on (1 - rho) bounds worst-case amplification.
RHO_CAP = 0.98
UTIL_FLOOR = 0.02
MEM_PENALTY = 2.0  # base-latency multiplier when memory is below the floor
CPU_MIN_CORES = 0.05
MEM_MIN_BYTES = 2**24  # 16 MiB


class UnconfiguredServiceError(KeyError):
    """A path references a service with no ServiceConfig."""


class UnknownServiceError(KeyError):
    """A scaling plan references a service not present in the configs."""


@dataclass(frozen=True)
class TracePath:
    """One request chain, identified by the trace color it belongs to."""

    color: str
    hops: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "hops", tuple(self.hops))
        if len(self.hops) < 2:
            raise ValueError(f"path {self.color!r} needs at least two hops")


@dataclass(frozen=True)
class CallGraph:
    nodes: tuple[str, ...]
    edges: tuple[tuple[str, str], ...]
    paths: tuple[TracePath, ...]

    def __post_init__(self):
        edge_set = set(self.edges)
        for path in self.paths:
            for parent, child in zip(path.hops, path.hops[1:]):
                if (parent, child) not in edge_set:
                    raise ValueError(f"path {path.color!r} uses missing edge {parent}->{child}")
        self._check_acyclic()

    def _check_acyclic(self):
        indeg = {n: 0 for n in self.nodes}
        for _, child in self.edges:
            indeg[child] += 1
        frontier = [n for n, d in indeg.items() if d == 0]
        seen = 0
        while frontier:
            node = frontier.pop()
            seen += 1
            for parent, child in self.edges:
                if parent == node:
                    indeg[child] -= 1
                    if indeg[child] == 0:
                        frontier.append(child)
        if seen != len(self.nodes):
            raise ValueError("call graph contains a cycle")

    @property
    def colors(self) -> list[str]:
        seen: dict[str, None] = {}
        for p in self.paths:
            seen.setdefault(p.color)
        return list(seen)

    def services_for(self, color: str) -> list[str]:
        """Services a request of this trace touches, in first-visit order.

        A color may own several chains (the green trace fans out from
        cart to catalogue); shared hops are counted once.
        """
        seen: dict[str, None] = {}
        for p in self.paths:
            if p.color == color:
                for hop in p.hops:
                    seen.setdefault(hop)
        if not seen:
            raise KeyError(f"no path with color {color!r}")
        return list(seen)


def build_robotshop_graph() -> CallGraph:
    """The Robot Shop topology with its five colored trace paths."""
    paths = (
        TracePath("purple", ("front-end", "shipping", "cart", "cart-db")),
        TracePath("green", ("front-end", "cart", "cart-db")),
        TracePath("green", ("cart", "catalogue", "catalogue-db")),
        TracePath("blue", ("front-end", "catalogue", "catalogue-db")),
        TracePath("red", ("front-end", "user", "user-db")),
        TracePath("black", ("front-end", "payment", "user", "user-db")),
    )
    edges: dict[tuple[str, str], None] = {}
    nodes: dict[str, None] = {}
    for p in paths:
        for hop in p.hops:
            nodes.setdefault(hop)
        for pair in zip(p.hops, p.hops[1:]):
            edges.setdefault(pair)
    return CallGraph(nodes=tuple(nodes), edges=tuple(edges), paths=paths)


@dataclass(frozen=True)
class Walk:
    """Piecewise-constant multiplicative variation of a resource.

    Every ``period`` steps a new factor is drawn uniformly from
    [low, high]; the resource value is the configured base scaled by
    the current factor.
    """

    period: int
    low: float
    high: float

    def __post_init__(self):
        if self.period < 1 or self.low <= 0 or self.high < self.low:
            raise ValueError("walk needs period >= 1 and 0 < low <= high")

    def factors(self, steps: int, rng: np.random.Generator) -> np.ndarray:
        n_segments = -(-steps // self.period)
        draws = rng.uniform(self.low, self.high, size=n_segments)
        return np.repeat(draws, self.period)[:steps]


@dataclass
class ServiceConfig:
    """Capacity and resource settings for one microservice.

    ``per_pod_rate`` is the request rate one pod sustains at 1.0 CPU
    core; effective capacity scales linearly with cores.
    """

    name: str
    base_service_ms: float
    per_pod_rate: float
    pods: int = 1
    cpu_cores: float = 1.0
    mem_bytes: float = 512e6
    pods_max: int = 16
    cpu_max_cores: float = 32.0
    mem_max_bytes: float = 64e9
    mem_floor_bytes: float = 0.0
    pods_walk: Walk | None = None
    cpu_walk: Walk | None = None
    mem_walk: Walk | None = None

    def __post_init__(self):
        if self.base_service_ms <= 0 or self.per_pod_rate <= 0:
            raise ValueError(f"service {self.name!r}: base time and rate must be positive")
        if self.pods < 1 or int(self.pods) != self.pods:
            raise ValueError(f"service {self.name!r}: pods must be a positive integer")
        if self.cpu_cores <= 0 or self.mem_bytes <= 0:
            raise ValueError(f"service {self.name!r}: cpu and memory must be positive")


@dataclass
class WorkloadProfile:
    """Calls-per-second generator for one trace.

    rate(t) = base + amplitude * sin(2*pi*t/period + phase) + N(0, sigma)
    plus any scheduled bursts, clamped at zero.
    """

    base: float
    amplitude: float = 0.0
    period: float = 300.0
    phase: float = 0.0
    noise_sigma: float = 0.0
    bursts: tuple[tuple[int, int, float], ...] = ()  # (start, duration, magnitude)
    seed: int | None = None

    def rates(self, steps: int, rng: np.random.Generator) -> np.ndarray:
        t = np.arange(steps)
        rate = self.base + self.amplitude * np.sin(2 * np.pi * t / self.period + self.phase)
        if self.noise_sigma > 0:
            rate = rate + rng.normal(0.0, self.noise_sigma, size=steps)
        for start, duration, magnitude in self.bursts:
            rate[start : start + duration] += magnitude
        return np.maximum(rate, 0.0)


def utilization(arrival_rate: float, pods: float, per_pod_rate: float, cpu_cores: float) -> float:
    """Offered load over capacity; capacity scales with pods and cores."""
    return arrival_rate / (pods * per_pod_rate * cpu_cores)


def service_latency_ms(base_ms: float, rho: float, mem_low: bool = False) -> float:
    """Per-request latency at utilization rho, before noise."""
    latency = base_ms / max(UTIL_FLOOR, 1.0 - min(rho, RHO_CAP))
    return latency * MEM_PENALTY if mem_low else latency


def _resource_timeline(base: float, walk: Walk | None, steps: int, rng: np.random.Generator) -> np.ndarray:
    if walk is None:
        return np.full(steps, float(base))
    return base * walk.factors(steps, rng)


def simulate(
    graph: CallGraph,
    workload: Mapping[str, WorkloadProfile],
    configs: Mapping[str, ServiceConfig],
    duration_steps: int,
    seed: int,
    noise_sigma: float = 0.1,
) -> TraceDataset:
    """Run the workload through the graph and record one TraceDataset.

    Per step and service: arrival rate is the sum of calls-per-second
    of every trace touching it, utilization follows from the pod/CPU
    capacity, and per-request latency is the base service time
    amplified by 1/(1 - rho) and multiplied by lognormal noise.  The
    per-trace target is the p95 over that step's simulated requests.
    Identical seeds give bit-identical datasets.
    """
    if duration_steps < 1:
        raise ValueError("duration_steps must be >= 1")
    colors = graph.colors
    for color in colors:
        if color not in workload:
            raise ValueError(f"no workload profile for trace {color!r}")
    trace_services = {color: graph.services_for(color) for color in colors}
    for color, services in trace_services.items():
        for svc in services:
            if svc not in configs:
                raise UnconfiguredServiceError(
                    f"service {svc!r} on trace {color!r} has no configuration"
                )
    services = sorted({svc for svcs in trace_services.values() for svc in svcs})

    # Independent, deterministically derived random streams.
    cps = {}
    for idx, color in enumerate(sorted(colors)):
        profile = workload[color]
        stream = (
            np.random.default_rng(profile.seed)
            if profile.seed is not None
            else np.random.default_rng([seed, 1, idx])
        )
        cps[color] = profile.rates(duration_steps, stream)
    pods_t, cpu_t, mem_t = {}, {}, {}
    for idx, svc in enumerate(services):
        cfg = configs[svc]
        walk_rng = np.random.default_rng([seed, 2, idx])
        raw_pods = _resource_timeline(cfg.pods, cfg.pods_walk, duration_steps, walk_rng)
        pods_t[svc] = np.clip(np.round(raw_pods), 1, cfg.pods_max)
        cpu_t[svc] = np.clip(
            _resource_timeline(cfg.cpu_cores, cfg.cpu_walk, duration_steps, walk_rng),
            CPU_MIN_CORES,
            cfg.cpu_max_cores,
        )
        mem_t[svc] = np.clip(
            _resource_timeline(cfg.mem_bytes, cfg.mem_walk, duration_steps, walk_rng),
            MEM_MIN_BYTES,
            cfg.mem_max_bytes,
        )
    noise_rng = np.random.default_rng([seed, 3])

    latency = {color: np.zeros(duration_steps) for color in colors}
    for t in range(duration_steps):
        rate_at = {svc: 0.0 for svc in services}
        for color in colors:
            for svc in trace_services[color]:
                rate_at[svc] += cps[color][t]
        det = {}
        for svc in services:
            cfg = configs[svc]
            rho = utilization(rate_at[svc], pods_t[svc][t], cfg.per_pod_rate, cpu_t[svc][t])
            mem_low = mem_t[svc][t] < cfg.mem_floor_bytes
            det[svc] = service_latency_ms(cfg.base_service_ms, rho, mem_low)
        for color in sorted(colors):
            hops = np.array([det[svc] for svc in trace_services[color]])
            n_req = max(1, int(round(cps[color][t])))
            if noise_sigma > 0:
                noise = noise_rng.lognormal(0.0, noise_sigma, size=(n_req, len(hops)))
                requests = (hops[None, :] * noise).sum(axis=1)
            else:
                requests = np.full(n_req, hops.sum())
            latency[color][t] = p95(requests)

    series: list[MetricSeries] = []
    for color in colors:
        series.append(MetricSeries(f"cps.{color}", SeriesKind.FRONT_END_CALLS, cps[color]))
    for svc in services:
        series.append(MetricSeries(f"pods.{svc}", SeriesKind.HORIZONTAL_RESOURCE, pods_t[svc], svc))
        series.append(MetricSeries(f"cpu.{svc}", SeriesKind.VERTICAL_RESOURCE, cpu_t[svc], svc))
        series.append(MetricSeries(f"mem.{svc}", SeriesKind.VERTICAL_RESOURCE, mem_t[svc], svc))
    for color in colors:
        series.append(MetricSeries(f"latency_p95.{color}", SeriesKind.TARGET_LATENCY, latency[color]))
    return TraceDataset(time_index=np.arange(duration_steps), series=tuple(series))


def apply_plan(configs: Mapping[str, ServiceConfig], plan: "ScalingPlan") -> dict[str, ServiceConfig]:
    """Return new service configs with the plan's scaling factors applied.

    Pod counts are rounded and clamped to [1, pods_max]; CPU and memory
    scale continuously within their bounds.  Advisory (calls-per-
    second) entries are left untouched.
    """
    out = {name: replace(cfg) for name, cfg in configs.items()}
    for action in plan.actions:
        if action.service not in out:
            raise UnknownServiceError(f"plan references unknown service {action.service!r}")
        cfg = out[action.service]
        if action.resource == "pods":
            cfg.pods = int(np.clip(round(action.factor * cfg.pods), 1, cfg.pods_max))
        elif action.resource == "cpu":
            cfg.cpu_cores = float(np.clip(action.factor * cfg.cpu_cores, CPU_MIN_CORES, cfg.cpu_max_cores))
        elif action.resource == "mem":
            cfg.mem_bytes = float(np.clip(action.factor * cfg.mem_bytes, MEM_MIN_BYTES, cfg.mem_max_bytes))
        else:
            raise ValueError(f"unknown resource {action.resource!r} in plan")
    return out


# ---------------------------------------------------------------------------
# Scenario files


@dataclass
class Scenario:
    """Complete description of one simulation run.

    ``step_seconds`` documents the aggregation interval one simulation
    step represents; the p95 target is computed per interval.
    """

    configs: dict[str, ServiceConfig]
    workloads: dict[str, WorkloadProfile]
    duration_steps: int
    seed: int
    noise_sigma: float = 0.1
    step_seconds: float = 1.0
    graph: CallGraph = field(default_factory=build_robotshop_graph)

    def run(self, seed: int | None = None) -> TraceDataset:
        return simulate(
            self.graph,
            self.workloads,
            self.configs,
            self.duration_steps,
            self.seed if seed is None else seed,
            noise_sigma=self.noise_sigma,
        )


def _walk_from_dict(doc) -> Walk | None:
    if doc is None:
        return None
    return Walk(period=int(doc["period"]), low=float(doc["low"]), high=float(doc["high"]))


def scenario_from_dict(doc: dict) -> Scenario:
    try:
        graph = build_robotshop_graph()
        if "graph" in doc:
            paths = tuple(TracePath(p["color"], tuple(p["hops"])) for p in doc["graph"]["paths"])
            edges: dict[tuple[str, str], None] = {}
            nodes: dict[str, None] = {}
            for p in paths:
                for hop in p.hops:
                    nodes.setdefault(hop)
                for pair in zip(p.hops, p.hops[1:]):
                    edges.setdefault(pair)
            graph = CallGraph(tuple(nodes), tuple(edges), paths)
        configs = {}
        for name, svc in doc["services"].items():
            configs[name] = ServiceConfig(
                name=name,
                base_service_ms=float(svc["base_service_ms"]),
                per_pod_rate=float(svc["per_pod_rate"]),
                pods=int(svc.get("pods", 1)),
                cpu_cores=float(svc.get("cpu_cores", 1.0)),
                mem_bytes=float(svc.get("mem_bytes", 512e6)),
                pods_max=int(svc.get("pods_max", 16)),
                cpu_max_cores=float(svc.get("cpu_max_cores", 32.0)),
                mem_max_bytes=float(svc.get("mem_max_bytes", 64e9)),
                mem_floor_bytes=float(svc.get("mem_floor_bytes", 0.0)),
                pods_walk=_walk_from_dict(svc.get("pods_walk")),
                cpu_walk=_walk_from_dict(svc.get("cpu_walk")),
                mem_walk=_walk_from_dict(svc.get("mem_walk")),
            )
        workloads = {}
        for color, wl in doc["workloads"].items():
            workloads[color] = WorkloadProfile(
                base=float(wl["base"]),
                amplitude=float(wl.get("amplitude", 0.0)),
                period=float(wl.get("period", 300.0)),
                phase=float(wl.get("phase", 0.0)),
                noise_sigma=float(wl.get("noise_sigma", 0.0)),
                bursts=tuple(tuple(b) for b in wl.get("bursts", [])),
                seed=wl.get("seed"),
            )
        return Scenario(
            configs=configs,
            workloads=workloads,
            duration_steps=int(doc["duration_steps"]),
            seed=int(doc.get("seed", 0)),
            noise_sigma=float(doc.get("noise_sigma", 0.1)),
            step_seconds=float(doc.get("step_seconds", 1.0)),
            graph=graph,
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"bad scenario document: {exc}") from exc


def scenario_to_dict(scenario: Scenario) -> dict:
    def walk_doc(walk: Walk | None):
        return None if walk is None else {"period": walk.period, "low": walk.low, "high": walk.high}

    return {
        "seed": scenario.seed,
        "duration_steps": scenario.duration_steps,
        "noise_sigma": scenario.noise_sigma,
        "step_seconds": scenario.step_seconds,
        "graph": {"paths": [{"color": p.color, "hops": list(p.hops)} for p in scenario.graph.paths]},
        "services": {
            name: {
                "base_service_ms": cfg.base_service_ms,
                "per_pod_rate": cfg.per_pod_rate,
                "pods": cfg.pods,
                "cpu_cores": cfg.cpu_cores,
                "mem_bytes": cfg.mem_bytes,
                "pods_max": cfg.pods_max,
                "cpu_max_cores": cfg.cpu_max_cores,
                "mem_max_bytes": cfg.mem_max_bytes,
                "mem_floor_bytes": cfg.mem_floor_bytes,
                "pods_walk": walk_doc(cfg.pods_walk),
                "cpu_walk": walk_doc(cfg.cpu_walk),
                "mem_walk": walk_doc(cfg.mem_walk),
            }
            for name, cfg in scenario.configs.items()
        },
        "workloads": {
            color: {
                "base": wl.base,
                "amplitude": wl.amplitude,
                "period": wl.period,
                "phase": wl.phase,
                "noise_sigma": wl.noise_sigma,
                "bursts": [list(b) for b in wl.bursts],
                "seed": wl.seed,
            }
            for color, wl in scenario.workloads.items()
        },
    }


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        return scenario_from_dict(json.load(fh))


def save_scenario(scenario: Scenario, path) -> None:
    with open(path, "w") as fh:
        json.dump(scenario_to_dict(scenario), fh, indent=2, sort_keys=True)
        fh.write("\n")
