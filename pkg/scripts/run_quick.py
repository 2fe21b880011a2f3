"""Quick profile: convergence table and structural checks on the unit square."""
import sys
from pathlib import Path

from gplump.cli import load_config, run_convergence, run_verification

out = Path(sys.argv[1] if len(sys.argv) > 1 else "results/quick")
cfg = load_config("quick")
res = run_convergence(cfg, out)
for method, recs in res.records.items():
    for r in recs:
        print(f"{method:8s} L{r.level}  L2 {r.l2_error:.3e} ({r.eoc_l2:.2f})  H1 {r.h1_error:.3e} ({r.eoc_h1:.2f})")
rows = run_verification(cfg, out / "verify")
print(f"{sum(r.passed for r in rows)}/{len(rows)} checks passed; results in {out}")
