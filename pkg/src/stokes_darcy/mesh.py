"""Staggered MAC grid over a Stokes square stacked on a Darcy square.

Unknown locations use the usual MAC convention with integer grid indices
counted from the lower-left corner of the Stokes square (the interface
edge is ``j = 0``; Darcy cells carry negative ``j``):

    phi_{i+1/2, j+1/2}   i = 0..n-1,  j = -n..-1     Darcy cell centres
    u_{i, j+1/2}         i = 1..n-1,  j = 0..n-1     vertical faces
    v_{i+1/2, j}         i = 0..n-1,  j = 0..n-1     horizontal faces (j=0 on the interface)
    p_{i+1/2, j+1/2}     i = 0..n-1,  j = 0..n-1     Stokes cell centres

Global ordering is (phi, u, v_interface, v_interior, p), each field
lexicographic with x fastest and rows from bottom to top.  This puts the
interface-adjacent phi row last and the interface-adjacent u and p rows
first, so the interface blocks of the system are contiguous slices.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Square:
    x_min: float
    x_max: float
    y_min: float
    y_max: float

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min


@dataclass(frozen=True)
class MacGrid:
    n: int
    stokes: Square
    darcy: Square

    @property
    def side(self) -> float:
        return self.stokes.width

    @property
    def h(self) -> float:
        return self.side / self.n

    @property
    def interface_y(self) -> float:
        return self.stokes.y_min

    @property
    def x0(self) -> float:
        return self.stokes.x_min

    def coords(self, pos2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Physical (x, y) of doubled integer positions relative to (x0, interface)."""
        pos2 = np.asarray(pos2)
        half = 0.5 * self.h
        return self.x0 + pos2[..., 0] * half, self.interface_y + pos2[..., 1] * half


def _close(a: float, b: float, scale: float) -> bool:
    return abs(a - b) <= 1e-12 * max(1.0, abs(scale))


def build_grid(n: int, stokes_domain, darcy_domain) -> MacGrid:
    """Build the grid; domains are ``Square`` or ``(x_min, x_max, y_min, y_max)``."""
    if int(n) != n or n < 2:
        raise ValueError(f"n must be an integer >= 2, got {n!r}")
    s = stokes_domain if isinstance(stokes_domain, Square) else Square(*map(float, stokes_domain))
    d = darcy_domain if isinstance(darcy_domain, Square) else Square(*map(float, darcy_domain))
    L = s.width
    if L <= 0:
        raise ValueError("degenerate Stokes domain")
    for name, sq in (("stokes", s), ("darcy", d)):
        if not _close(sq.width, sq.height, L):
            raise ValueError(f"{name} domain is not a square: {sq}")
    if not (_close(d.width, L, L) and _close(d.x_min, s.x_min, L)):
        raise ValueError("Stokes and Darcy squares must have the same horizontal extent")
    if not _close(d.y_max, s.y_min, L):
        raise ValueError("Darcy square must lie directly below the Stokes square")
    return MacGrid(int(n), s, d)


def unit_grid(n: int, example: int = 3) -> MacGrid:
    """Grid for the manufactured examples (examples 1 and 2 put the interface at y=1)."""
    if example in (1, 2):
        return build_grid(n, (0.0, 1.0, 1.0, 2.0), (0.0, 1.0, 0.0, 1.0))
    return build_grid(n, (0.0, 1.0, 0.0, 1.0), (0.0, 1.0, -1.0, 0.0))


@dataclass(frozen=True)
class DofLayout:
    n: int
    n_phi: int = field(init=False)
    n_u: int = field(init=False)
    n_vg: int = field(init=False)
    n_vi: int = field(init=False)
    n_p: int = field(init=False)

    def __post_init__(self):
        n = self.n
        object.__setattr__(self, "n_phi", n * n)
        object.__setattr__(self, "n_u", n * (n - 1))
        object.__setattr__(self, "n_vg", n)
        object.__setattr__(self, "n_vi", n * (n - 1))
        object.__setattr__(self, "n_p", n * n)

    @property
    def n_v(self) -> int:
        return self.n_vg + self.n_vi

    @property
    def n_vel(self) -> int:
        return self.n_u + self.n_v

    @property
    def total(self) -> int:
        return self.n_phi + self.n_vel + self.n_p

    # offsets of each field in the global vector
    @property
    def off_u(self) -> int:
        return self.n_phi

    @property
    def off_vg(self) -> int:
        return self.n_phi + self.n_u

    @property
    def off_vi(self) -> int:
        return self.off_vg + self.n_vg

    @property
    def off_p(self) -> int:
        return self.n_phi + self.n_vel

    @property
    def phi(self) -> slice:
        return slice(0, self.n_phi)

    @property
    def vel(self) -> slice:
        return slice(self.n_phi, self.off_p)

    @property
    def p(self) -> slice:
        return slice(self.off_p, self.total)

    # field-local flat indices
    def phi_index(self, i, j):
        return (np.asarray(j) + self.n) * self.n + np.asarray(i)

    def u_index(self, i, j):
        return np.asarray(j) * (self.n - 1) + np.asarray(i) - 1

    def v_index(self, i, j):
        """Velocity-block index of v_{i+1/2, j}; j = 0 is the interface row."""
        i, j = np.asarray(i), np.asarray(j)
        return self.n_u + np.where(j == 0, i, self.n + (j - 1) * self.n + i)

    def p_index(self, i, j):
        return np.asarray(j) * self.n + np.asarray(i)

    def phi_ij(self, k):
        k = np.asarray(k)
        return k % self.n, k // self.n - self.n

    def u_ij(self, k):
        k = np.asarray(k)
        return k % (self.n - 1) + 1, k // (self.n - 1)

    def v_ij(self, k):
        k = np.asarray(k) - self.n_u
        return k % self.n, k // self.n

    def p_ij(self, k):
        k = np.asarray(k)
        return k % self.n, k // self.n

    def positions2(self) -> dict[str, np.ndarray]:
        """Doubled integer positions (2x/h, 2(y - y_interface)/h) of every unknown."""
        n = self.n
        k = np.arange(self.n_phi)
        i, j = self.phi_ij(k)
        phi = np.stack([2 * i + 1, 2 * j + 1], axis=-1)
        i, j = self.u_ij(np.arange(self.n_u))
        u = np.stack([2 * i, 2 * j + 1], axis=-1)
        i, j = self.v_ij(self.n_u + np.arange(self.n_v))
        v = np.stack([2 * i + 1, 2 * j], axis=-1)
        i, j = self.p_ij(np.arange(n * n))
        p = np.stack([2 * i + 1, 2 * j + 1], axis=-1)
        return {"phi": phi, "u": u, "v": v, "p": p}


def dof_layout(grid: MacGrid) -> DofLayout:
    return DofLayout(grid.n)
