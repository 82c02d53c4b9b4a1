"""The traveling potential well.

Solves the six unit gate potentials for the default device, then steps
through one drive period and tracks the moving well: the dot should
advance one gate pitch per quarter period at nearly constant depth.
"""

import numpy as np

from shuttlesim.device import DeviceGeometry, DriveWaveform, voltage_vector
from shuttlesim.electrostatics import (
    solve_unit_potentials,
    track_dot_position,
    well_profile,
)


def main():
    geom = DeviceGeometry()
    drive = DriveWaveform()
    print(f"cell {geom.cell_length:g} nm, four clavier gates of "
          f"{geom.gate_width:g} nm at {geom.gate_gap:g} nm gaps")
    units = solve_unit_potentials(geom, ge_fraction=0.3)
    print(f"grid {units.grid.nx} x {units.grid.ny} x {units.grid.nz} "
          f"at {units.grid.h:g} nm\n")

    print(" t/T    gate voltages (V)          x_dot (nm)   depth (V)")
    for t_over_T in np.linspace(0.0, 1.0, 9):
        t = drive.period * t_over_T
        v = voltage_vector(drive, t)
        phi = units.superpose(v)
        x = track_dot_position(phi, geom, units.grid)
        prof = well_profile(phi, geom, units.grid)
        print(f" {t_over_T:4.2f}   " + " ".join(f"{q:+.2f}" for q in v[:4])
              + f"      {x:7.2f}     {prof.max():+.3f}")
    print("\nthe well returns to its start after one period; speed in m/s"
          "\nis set later by assigning a real duration to that period")


if __name__ == "__main__":
    main()
