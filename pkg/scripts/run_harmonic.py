"""Harmonic trap, kappa = 1000: both methods on levels 4-7 against a level-9 reference.

Takes a few minutes, most of it in the reference solve.
"""
import sys
from pathlib import Path

from gplump.cli import load_config, run_convergence

out = Path(sys.argv[1] if len(sys.argv) > 1 else "results/harmonic")
res = run_convergence(load_config("harmonic"), out)
print(f"reference energy {res.reference.energy_h!r}, eigenvalue {res.reference.lambda_h!r}")
print("level  E_lumped           E_standard         lambda_lumped      lambda_standard")
for level, El, Es, ll, ls in res.energies:
    print(f"{level:5d}  {El:.15f}  {Es:.15f}  {ll:.15f}  {ls:.15f}")
for r in res.records["lumped"]:
    print(f"lumped L{r.level}: {r.iterations} iterations, residual {r.residual:.2e}")
