"""Closed-form manufactured solutions for the three test problems.

Each case provides the exact fields and the forcings induced by
``f_s = -nu Lap(u) + grad p`` and ``f_d = -kappa Lap(phi)``.  Derivatives
are written out by hand.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import MacGrid, unit_grid


@dataclass(frozen=True)
class PhysicalParams:
    nu: float = 1.0
    kappa: float = 1.0
    alpha: float = 1.0

    def __post_init__(self):
        for name in ("nu", "kappa", "alpha"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")


class ManufacturedCase:
    """Base class; subclasses fill in the fields and their Laplacians."""

    example: int = 0

    def __init__(self, params: PhysicalParams):
        self.check(params)
        self.params = params

    def check(self, params: PhysicalParams) -> None:
        pass

    def grid(self, n: int) -> MacGrid:
        return unit_grid(n, self.example)

    def u(self, x, y): raise NotImplementedError
    def v(self, x, y): raise NotImplementedError
    def p(self, x, y): raise NotImplementedError
    def phi(self, x, y): raise NotImplementedError

    def lap_u(self, x, y): raise NotImplementedError
    def lap_v(self, x, y): raise NotImplementedError
    def lap_phi(self, x, y): raise NotImplementedError
    def p_x(self, x, y): raise NotImplementedError
    def p_y(self, x, y): raise NotImplementedError

    def f1(self, x, y):
        return -self.params.nu * self.lap_u(x, y) + self.p_x(x, y)

    def f2(self, x, y):
        return -self.params.nu * self.lap_v(x, y) + self.p_y(x, y)

    def fd(self, x, y):
        return -self.params.kappa * self.lap_phi(x, y)


def _require(params: PhysicalParams, example: int, **fixed: float) -> None:
    for name, value in fixed.items():
        if not np.isclose(getattr(params, name), value, rtol=1e-14, atol=0.0):
            raise ValueError(
                f"example {example} is only a solution for "
                + ", ".join(f"{k}={v:g}" for k, v in fixed.items())
                + f"; got {name}={getattr(params, name)!r}")


class Example1(ManufacturedCase):
    example = 1

    def check(self, params):
        _require(params, 1, alpha=1.0, nu=1.0)

    def u(self, x, y):
        return -np.exp(y) * np.sin(np.pi * x) / np.pi

    def v(self, x, y):
        return (np.exp(y) - np.e) * np.cos(np.pi * x)

    def p(self, x, y):
        return 2 * np.exp(y) * np.cos(np.pi * x)

    def phi(self, x, y):
        return (np.exp(y) - y * np.e) * np.cos(np.pi * x)

    def lap_u(self, x, y):
        return np.exp(y) * np.sin(np.pi * x) * (np.pi - 1 / np.pi)

    def lap_v(self, x, y):
        return np.cos(np.pi * x) * (np.exp(y) - np.pi ** 2 * (np.exp(y) - np.e))

    def lap_phi(self, x, y):
        return np.cos(np.pi * x) * (np.exp(y) - np.pi ** 2 * (np.exp(y) - y * np.e))

    def p_x(self, x, y):
        return -2 * np.pi * np.exp(y) * np.sin(np.pi * x)

    def p_y(self, x, y):
        return 2 * np.exp(y) * np.cos(np.pi * x)


class Example2(ManufacturedCase):
    example = 2

    def check(self, params):
        _require(params, 2, alpha=1.0, nu=1.0, kappa=1.0)

    def u(self, x, y):
        return (y - 1) ** 2 + x * (y - 1) + 3 * x - 1

    def v(self, x, y):
        return x * (x - 1) - 0.5 * (y - 1) ** 2 - 3 * y + 1

    def p(self, x, y):
        return 2 * x + y - 1

    def phi(self, x, y):
        return x * (1 - x) * (y - 1) + (y - 1) ** 3 / 3 + 2 * x + 2 * y + 4

    def lap_u(self, x, y):
        return np.full(np.broadcast(x, y).shape, 2.0)

    def lap_v(self, x, y):
        return np.full(np.broadcast(x, y).shape, 1.0)

    def lap_phi(self, x, y):
        return np.zeros(np.broadcast(x, y).shape)

    def p_x(self, x, y):
        return np.full(np.broadcast(x, y).shape, 2.0)

    def p_y(self, x, y):
        return np.full(np.broadcast(x, y).shape, 1.0)


class Example3(ManufacturedCase):
    """Admits any positive parameters; alpha defaults to nu."""

    example = 3

    def _eta(self, y):
        nu, kappa, alpha = self.params.nu, self.params.kappa, self.params.alpha
        c2 = -alpha / (4 * nu ** 2) + kappa / 2
        return -kappa - y / (2 * nu) + c2 * y ** 2, -1 / (2 * nu) + 2 * c2 * y, 2 * c2

    def eta(self, y):
        return self._eta(y)[0]

    def u(self, x, y):
        return self._eta(y)[1] * np.cos(x)

    def v(self, x, y):
        return self._eta(y)[0] * np.sin(x)

    def p(self, x, y):
        return np.zeros(np.broadcast(x, y).shape)

    def phi(self, x, y):
        return np.exp(y) * np.sin(x)

    def lap_u(self, x, y):
        # eta''' = 0
        return -self._eta(y)[1] * np.cos(x)

    def lap_v(self, x, y):
        eta, _, d2 = self._eta(y)
        return (d2 - eta) * np.sin(x)

    def lap_phi(self, x, y):
        return np.zeros(np.broadcast(x, y).shape)

    def p_x(self, x, y):
        return np.zeros(np.broadcast(x, y).shape)

    def p_y(self, x, y):
        return np.zeros(np.broadcast(x, y).shape)


EXAMPLES = {1: Example1, 2: Example2, 3: Example3}


def default_params(example: int, nu: float = 1.0, kappa: float = 1.0,
                   alpha: float | None = None) -> PhysicalParams:
    """Parameters with the per-example alpha default (forced 1 for examples 1-2)."""
    if example in (1, 2):
        return PhysicalParams(nu=nu, kappa=kappa, alpha=1.0 if alpha is None else alpha)
    return PhysicalParams(nu=nu, kappa=kappa, alpha=nu if alpha is None else alpha)


def make_case(example: int, params: PhysicalParams) -> ManufacturedCase:
    try:
        cls = EXAMPLES[int(example)]
    except (KeyError, ValueError):
        raise ValueError(f"unknown example {example!r}; expected 1, 2 or 3") from None
    return cls(params)
