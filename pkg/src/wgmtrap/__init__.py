"""Two-color optical dipole trap next to a whispering-gallery-mode resonator.

Subpackages and modules
-----------------------
atomdata   species data files, units, constants
angular    Wigner symbols and spherical tensors
stark      polarizabilities, Stark matrices, hfs diagonalization
trapfield  standing-wave trap potential and resonator coupling profile
dynamics   classical trajectories, position histograms, adiabatic lowering
cqed       weak-drive cavity QED formulas and master-equation oracle
cli        command-line pipelines
"""

__version__ = "0.1.0"
