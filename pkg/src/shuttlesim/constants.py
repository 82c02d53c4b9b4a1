"""Physical constants and material parameters used across the simulator.

Units follow the conventions of the rest of the package: lengths in nm
(atomic-scale quantities in Angstrom where noted), energies in eV, voltages
in V, time in s.  Keeping hbar in eV*s avoids Joule round trips in the
two-level dynamics.
"""

# fundamental
HBAR_EVS = 6.582119569e-16      # reduced Planck constant, eV*s
ELEMENTARY_CHARGE = 1.602176634e-19  # C

# hbar^2 / (m_e * Angstrom^2) in eV; handy for tight-binding mass calibration
HBAR2_OVER_ME_A2_EV = 7.6199682

# silicon lattice
A0_ANGSTROM = 5.43              # conventional diamond cell, Angstrom
A0_NM = 0.543
LAYER_SPACING_ANGSTROM = A0_ANGSTROM / 4.0   # atomic layer pitch along z

# conduction-band valley position along z, fraction of 2*pi/a0
VALLEY_K_FRACTION = 0.84

# effective masses (units of m_e) for the z valleys of strained Si
LONGITUDINAL_MASS = 0.916
TRANSVERSE_MASS = 0.19

# relative permittivities
EPS_SI = 11.7
EPS_GE = 16.2
EPS_OXIDE = 9.0                 # Al2O3 gate dielectric


def eps_sige(x_ge: float) -> float:
    """Linear interpolation of the SiGe relative permittivity."""
    return (1.0 - x_ge) * EPS_SI + x_ge * EPS_GE


# conversion: (N/m) * Angstrom^2 -> eV, used by the valence force field
NM_PER_M_A2_TO_EV = 1.0e-20 / ELEMENTARY_CHARGE
