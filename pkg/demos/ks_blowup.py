"""Sub- and supercritical Keller-Segel runs.

The subcritical case settles to a steady state.  In the supercritical case
the mass concentrates at the origin and the discrete peak grows until the
mesh can no longer resolve it.
"""
import numpy as np

from gflowfd.driver import run_preset

sub = run_preset("ks_subcritical", {"order": 1, "cells": 40})
print(f"subcritical: stopped at t = {sub.summary['t_final']:.2f} after {sub.summary['steps']} steps")

peaks = []
sup = run_preset("ks_supercritical", {"order": 2, "cells": 40}, callback=lambda s: peaks.append(s.rho.max()))
print(f"supercritical: status {sup.status}, peak rho {peaks[0]:.1f} -> {peaks[-1]:.1f}")
print(f"  mass drift {sup.summary['relative_mass_drift']:.1e}, min rho {sup.summary['min_rho_over_run']:.3e}")
for k in np.linspace(0, len(peaks) - 1, 6).astype(int):
    print(f"  step {k:3d}: peak rho {peaks[k]:8.1f}")
