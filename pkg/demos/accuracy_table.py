"""Error table for the Keller-Segel problem with a manufactured steady solution.

dt = h, final time 1, nodes 9..129 per axis.  Pass --quick for the first three rows.
"""
import sys

from gflowfd.driver import run_convergence

nodes = [9, 17, 33] if "--quick" in sys.argv else [9, 17, 33, 65, 129]
report = run_convergence("ks_steady_source", orders=[1, 2], nodes=nodes, T=1.0, workers=2)
print(report.to_text())
