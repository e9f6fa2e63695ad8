"""Surface-wave elastography toolkit.

Estimates the thickness and stiffness of a soft layer on a rigid foundation
from surface-wave motion: forward simulation, sub-pixel motion extraction,
f-k dispersion images, FEM Bloch-Floquet dispersion curves, and grid-search
inversion that maximizes image similarity.
"""

__version__ = "0.1.0"
