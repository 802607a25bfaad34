"""Frozen reference values and closed-form oracles used across the suite."""

import math

# critical masses from the shooting pipeline (Richardson over n = 4096, 8192); the N = 2
# value is half the squared L^2 norm of the Townes profile, 11.70089.../2
M1_FROZEN = {2: 5.8504482622815, 3: 31.891557892188, 4: 204.42844334140}
M1_RTOL = 1e-8

# peak of the unit-frequency Townes profile (N = 2, cubic)
TOWNES_PEAK = 2.20620086465
TOWNES_NORM2 = 11.7008965   # int Q^2 over the plane, literature value to 8 digits


def gaussian_grad2(N: int) -> float:
    """int |grad e^{-r^2/2}|^2 dx over R^N: (N/2) pi^{N/2}."""
    return 0.5 * N * math.pi ** (N / 2)


def gaussian_mass(N: int) -> float:
    """(1/2) int e^{-r^2} dx = pi^{N/2}/2."""
    return 0.5 * math.pi ** (N / 2)


def sobolev_bubble_grad2() -> float:
    """int |grad U|^2 = int U^6 for U = (1 + r^2/3)^{-1/2} in R^3: 3^{3/2} pi^2 / 4."""
    return 3 ** 1.5 * math.pi**2 / 4
