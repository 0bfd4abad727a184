"""Walk through the workload simulator: the Robot Shop call graph, a
scenario with drifting pod counts, and the dataset it produces."""
import numpy as np

from latscale import build_robotshop_graph
from latscale.cli import resolve_scenario

graph = build_robotshop_graph()
print("Robot Shop services:", ", ".join(graph.nodes))
print("\nTrace paths:")
for path in graph.paths:
    print(f"  {path.color:7s} {' -> '.join(path.hops)}")

scenario = resolve_scenario("robotshop_green")
print(f"\nScenario: {scenario.duration_steps} steps, seed {scenario.seed}, "
      f"latency noise sigma {scenario.noise_sigma}")
print("Cart pod walk:", scenario.configs["cart"].pods_walk)

dataset = scenario.run()
print(f"\nDataset: {dataset.n_steps} steps, {len(dataset.series)} series, "
      f"traces {dataset.traces}")

y = dataset.target("green").values
pods = dataset.get("pods.cart").values
print("\nGreen-trace p95 latency (ms):")
print(f"  min {y.min():6.1f}   median {np.median(y):6.1f}   "
      f"p95 {np.percentile(y, 95):6.1f}   max {y.max():6.1f}")
print(f"Cart pods ranged over {sorted({int(p) for p in pods})}")

# more pods -> lower latency, visible directly in the simulated series
for level in sorted({int(p) for p in pods}):
    mask = pods == level
    print(f"  pods={level}: mean green latency {y[mask].mean():6.1f} ms over {mask.sum()} steps")
