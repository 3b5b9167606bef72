"""Entropy decay along a three-species mixing run.

Runs a sine-mixed initial state on a periodic interval and prints the
entropy at each recorded snapshot together with the largest per-step
increment, which should be negative throughout: the scheme dissipates
entropy at every step.
"""

import numpy as np

from msdiff.flux import DiffusionMatrix
from msdiff.grid import PeriodicGrid
from msdiff.sim import Scenario, run


def main():
    D = DiffusionMatrix([[0.0, 1.0, 2.0], [1.0, 0.0, 3.0], [2.0, 3.0, 0.0]])
    sc = Scenario(n=3, D=D, grid=PeriodicGrid((64,)), t_final=0.002,
                  amplitude=0.4, cadence=16)
    traj = run(sc)

    print(f"{'time':>10} {'entropy':>16}")
    series = np.asarray(traj.entropy_series)
    steps = np.arange(series.size) * traj.dt
    for k in range(0, series.size, max(1, series.size // 10)):
        print(f"{steps[k]:10.5f} {series[k]:16.12f}")
    print(f"{steps[-1]:10.5f} {series[-1]:16.12f}")

    inc = np.diff(series)
    print(f"\nlargest per-step increment: {inc.max():.3e} (negative means decay)")
    print(f"total entropy drop        : {series[0] - series[-1]:.6e}")
    print(f"mass drift                : {traj.species_mass_drift():.3e}")
    print(f"simplex defect            : {traj.simplex_defect():.3e}")


if __name__ == "__main__":
    main()
