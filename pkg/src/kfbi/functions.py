"""Closed-form test functions built from complex exponential modes.

Every function here is a finite sum ``Re sum_k A_k exp(alpha_k x + beta_k y)``,
so partial derivatives of any order, the Laplacian and the bilaplacian are
exact and cheap. These cover all of the manufactured solutions used in the
convergence experiments.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ExpSum:
    """``u(x, y) = Re sum_k coef_k * exp(alpha_k * x + beta_k * y)``."""

    terms: tuple[tuple[complex, complex, complex], ...] = field(default_factory=tuple)

    def derivative(self, x, y, mx: int = 0, my: int = 0):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.zeros(np.broadcast(x, y).shape)
        for coef, a, b in self.terms:
            out = out + np.real(coef * a**mx * b**my * np.exp(a * x + b * y))
        return out

    def __call__(self, x, y):
        return self.derivative(x, y)

    def grad(self, x, y):
        return self.derivative(x, y, 1, 0), self.derivative(x, y, 0, 1)

    def _lap_power(self, x, y, power: int):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.zeros(np.broadcast(x, y).shape)
        for coef, a, b in self.terms:
            out = out + np.real(coef * (a * a + b * b) ** power * np.exp(a * x + b * y))
        return out

    def laplacian(self, x, y):
        return self._lap_power(x, y, 1)

    def bilaplacian(self, x, y):
        return self._lap_power(x, y, 2)

    def normal_derivative(self, x, y, nx, ny):
        gx, gy = self.grad(x, y)
        return nx * gx + ny * gy

    def __add__(self, other: "ExpSum") -> "ExpSum":
        return ExpSum(self.terms + other.terms)

    def __neg__(self) -> "ExpSum":
        return self.scaled(-1.0)

    def __sub__(self, other: "ExpSum") -> "ExpSum":
        return self + (-other)

    def scaled(self, s: complex) -> "ExpSum":
        return ExpSum(tuple((s * c, a, b) for c, a, b in self.terms))


def zero() -> ExpSum:
    return ExpSum(())


def constant(c: float) -> ExpSum:
    return ExpSum(((complex(c), 0j, 0j),))


def exp_sin() -> ExpSum:
    """``exp(x) sin(cos(pi/3) x + sin(pi/3) y)``, the ellipse test solution."""
    c, s = np.cos(np.pi / 3), np.sin(np.pi / 3)
    return ExpSum(((-1j, 1 + 1j * c, 1j * s),))


def exp_linear(ax: float = 0.6, ay: float = 0.8) -> ExpSum:
    """``exp(ax x + ay y)``."""
    return ExpSum(((1 + 0j, complex(ax), complex(ay)),))


def sin_product() -> ExpSum:
    """``sin(pi (x + 1) / 2) sin(pi (y + 1) / 2)``."""
    k = 0.5j * np.pi
    return ExpSum(((0.5 + 0j, k, -k), (0.5 + 0j, k, k)))


def exp_x_sin_y() -> ExpSum:
    """``exp(x) sin(y)`` (harmonic)."""
    return ExpSum(((-1j, 1 + 0j, 1j),))


def sin_x_exp_y() -> ExpSum:
    """``sin(x) exp(y)`` (harmonic)."""
    return ExpSum(((-1j, 1j, 1 + 0j),))


def trig_mode(kx: float, ky: float, phase: float = 0.0, amp: float = 1.0) -> ExpSum:
    """``amp * cos(kx x + ky y + phase)``."""
    return ExpSum(((amp * np.exp(1j * phase), 1j * kx, 1j * ky),))


def random_smooth(rng: np.random.Generator, n_modes: int = 4, max_wavenumber: float = 2.0) -> ExpSum:
    """Sum of a few low-wavenumber plane waves with random phases and amplitudes."""
    out = zero()
    for _ in range(n_modes):
        kx, ky = rng.uniform(-max_wavenumber, max_wavenumber, size=2)
        out = out + trig_mode(kx, ky, rng.uniform(0, 2 * np.pi), rng.uniform(0.2, 1.0))
    return out


REGISTRY = {
    "zero": zero,
    "exp_sin": exp_sin,
    "exp_linear": exp_linear,
    "sin_product": sin_product,
    "exp_x_sin_y": exp_x_sin_y,
    "sin_x_exp_y": sin_x_exp_y,
}


def lookup(name: str) -> ExpSum:
    if name.startswith("constant:"):
        return constant(float(name.split(":", 1)[1]))
    try:
        return REGISTRY[name]()
    except KeyError:
        raise KeyError(f"unknown function {name!r}; known: {sorted(REGISTRY)} or constant:<c>") from None
