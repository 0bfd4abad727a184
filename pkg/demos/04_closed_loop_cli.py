"""The same closed loop as demo 03, but driven entirely through the CLI
the way an operator would run it."""
import json
import sys
import tempfile
from importlib import resources
from pathlib import Path

from latscale.cli import main

out = Path(tempfile.mkdtemp(prefix="latscale-demo-"))
config = resources.files("latscale") / "configs" / "demo.ini"

with resources.as_file(config) as cfg_path:
    rc = main(["e2e", "--scenario", "sla_demo", "--config", str(cfg_path), "--out", str(out)])
if rc != 0:
    sys.exit(rc)

summary = json.loads((out / "summary.json").read_text())
print("\nartifacts in", out)
for name in sorted(p.name for p in out.iterdir()):
    print("  ", name)
print(f"""
summary
  SLA                 {summary['sla_ms']:.1f} ms
  violation fraction  {summary['violation_fraction']:.3f}
  plan converged      {summary['plan_converged']}
  p95 before / after  {summary['before_p95_ms']:.1f} / {summary['after_p95_ms']:.1f} ms
  within 1.05 x SLA   {summary['sla_met_within_5pct']}""")
for action in summary["actions"]:
    print(f"  action: {action['service']} {action['resource']} "
          f"{action['current']:.0f} -> {action['recommended']:.0f}")
