"""Physical constants in SI units (CODATA 2018 exact or recommended values).

Values quoted to nine significant digits:

    HBAR       1.05457182e-34  J s
    EPSILON_0  8.85418781e-12  F/m
    K_B        1.38064900e-23  J/K
    C_LIGHT    2.99792458e+08  m/s
    E_CHARGE   1.60217663e-19  C
"""

HBAR = 1.054571817e-34
EPSILON_0 = 8.8541878128e-12
K_B = 1.380649e-23
C_LIGHT = 299792458.0
E_CHARGE = 1.602176634e-19
