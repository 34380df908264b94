"""
Adiabatic levels of merging and splitting traps
===============================================

Three repulsive atoms in three Gaussian wells, and three attractive atoms
in two wells, as the well separation ``d`` grows from zero.
"""

import numpy as np

from cattrap.hamiltonian import gap, scan_levels
from cattrap.potential import FIG2_STAGE_I, FIG4_STAGE_II
from cattrap.qgrid import Grid

d = np.linspace(0.0, 3.0, 16)

# Repulsive atoms: the ground level stays isolated all the way, so a slow
# enough sweep turns one merged cloud into one atom per well.
grid = Grid.for_trap(FIG2_STAGE_I, d_max=3.0, spacing=0.2)
three = scan_levels(FIG2_STAGE_I, d, k=4, grid=grid)
g = gap(three)
print(f"three wells: smallest gap {g.minimum:.3f} at d = {g.argmin_d:.2f}")

# Attractive atoms: the two lowest levels close up into a doublet,
# all atoms left or all atoms right, split only by the well asymmetry.
grid = Grid.for_trap(FIG4_STAGE_II, d_max=3.0, spacing=0.2)
two = scan_levels(FIG4_STAGE_II, d, k=3, grid=grid)
for row_d, e in zip(two.d[::3], two.energies[::3]):
    print(f"d = {row_d:4.1f}   E0 = {e[0]:9.4f}   E1 - E0 = {e[1] - e[0]:.3e}   E2 - E1 = {e[2] - e[1]:.3f}")

three.to_csv("levels_three_wells.csv")
two.to_csv("levels_two_wells.csv")
