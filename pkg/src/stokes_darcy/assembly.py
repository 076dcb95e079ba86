"""MAC assembly of the coupled Stokes-Darcy double saddle-point system.

The system in its natural form is

    [ A_d  -G^T   0  ] [phi]   [g1]
    [ G     A_s   B^T] [ u ] = [g2]
    [ 0     B     0  ] [ p ]   [g3]

and the solvers work with the sign-flipped form ``K`` acting on
``(phi, -u, p)`` with right-hand side ``(g1, g2, -g3)``.  ``B`` is the
negated discrete divergence so that ``B^T`` is the discrete gradient.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .manufactured import ManufacturedCase, PhysicalParams
from .mesh import DofLayout, MacGrid, dof_layout


class _Triplets:
    def __init__(self):
        self.rows, self.cols, self.vals = [], [], []

    def add(self, r, c, v):
        r, c = np.broadcast_arrays(np.asarray(r), np.asarray(c))
        v = np.broadcast_to(np.asarray(v, dtype=float), r.shape)
        self.rows.append(r.ravel())
        self.cols.append(c.ravel())
        self.vals.append(v.ravel())

    def tocsr(self, shape) -> sp.csr_matrix:
        if not self.rows:
            return sp.csr_matrix(shape)
        A = sp.coo_matrix((np.concatenate(self.vals),
                           (np.concatenate(self.rows), np.concatenate(self.cols))), shape=shape)
        A = A.tocsr()
        A.sum_duplicates()
        A.eliminate_zeros()
        A.sort_indices()
        return A


def _zero_source(x, y):
    return np.zeros(np.broadcast(x, y).shape)


def bjs_ghost_coefficients(h: float, params: PhysicalParams) -> tuple[float, float]:
    """(r, s) with u_{i,-1/2} = r u_{i,1/2} + s (v_{i+1/2,0} - v_{i-1/2,0})."""
    nu, alpha = params.nu, params.alpha
    return (2 * nu - h * alpha) / (2 * nu + h * alpha), 2 * nu / (2 * nu + h * alpha)


def assemble_darcy(grid: MacGrid, params: PhysicalParams, case: ManufacturedCase | None = None):
    """Return ``(A_d, g1)``; ``g1`` is zero when no case is given."""
    n, h, kap = grid.n, grid.h, params.kappa
    lay = dof_layout(grid)
    c = kap / h ** 2
    j, i = np.meshgrid(np.arange(-n, 0), np.arange(n), indexing="ij")
    i, j = i.ravel(), j.ravel()
    row = lay.phi_index(i, j)
    g1 = np.zeros(lay.n_phi)
    gD = case.phi if case is not None else _zero_source
    xs = grid.x0 + (i + 0.5) * h
    ys = grid.interface_y + (j + 0.5) * h

    T = _Triplets()
    diag = np.full(row.shape, 4 * c)
    for di, dj, xb, yb in ((-1, 0, grid.darcy.x_min, None), (1, 0, grid.darcy.x_max, None),
                           (0, -1, None, grid.darcy.y_min)):
        ni, nj = i + di, j + dj
        inside = (ni >= 0) & (ni < n) & (nj >= -n)
        T.add(row[inside], lay.phi_index(ni[inside], nj[inside]), -c)
        out = ~inside
        diag[out] += c
        bx = xs[out] if xb is None else np.full(out.sum(), xb)
        by = ys[out] if yb is None else np.full(out.sum(), yb)
        g1[row[out]] += 2 * c * gD(bx, by)
    # top neighbour: interior, or the ghost above the interface removed by mass conservation
    top = j < -1
    T.add(row[top], lay.phi_index(i[top], j[top] + 1), -c)
    diag[~top] -= c
    T.add(row, row, diag)
    if case is not None:
        g1 += case.fd(xs, ys)
    return T.tocsr((lay.n_phi, lay.n_phi)), g1


def assemble_stokes(grid: MacGrid, params: PhysicalParams, case: ManufacturedCase | None = None):
    """Return ``(A_s, g2)`` in the velocity ordering (u, v_interface, v_interior)."""
    n, h, nu = grid.n, grid.h, params.nu
    lay = dof_layout(grid)
    c = nu / h ** 2
    nvel = lay.n_vel
    g2 = np.zeros(nvel)
    T = _Triplets()
    uD = case.u if case is not None else _zero_source
    vD = case.v if case is not None else _zero_source
    xl, xr, ytop = grid.stokes.x_min, grid.stokes.x_max, grid.stokes.y_max

    # u-momentum rows at (x_i, y_{j+1/2})
    j, i = np.meshgrid(np.arange(n), np.arange(1, n), indexing="ij")
    i, j = i.ravel(), j.ravel()
    row = lay.u_index(i, j)
    xs, ys = grid.x0 + i * h, grid.interface_y + (j + 0.5) * h
    diag = np.full(row.shape, 4 * c)
    for di in (-1, 1):
        ni = i + di
        inside = (ni >= 1) & (ni <= n - 1)
        T.add(row[inside], lay.u_index(ni[inside], j[inside]), -c)
        out = ~inside
        g2[row[out]] += c * uD(np.full(out.sum(), xl if di < 0 else xr), ys[out])
    up = j < n - 1
    T.add(row[up], lay.u_index(i[up], j[up] + 1), -c)
    diag[~up] += c
    g2[row[~up]] += 2 * c * uD(xs[~up], np.full((~up).sum(), ytop))
    down = j > 0
    T.add(row[down], lay.u_index(i[down], j[down] - 1), -c)
    # BJS elimination of the ghost u_{i,-1/2} below the interface
    r, s = bjs_ghost_coefficients(h, params)
    bot = ~down
    diag[bot] -= c * r
    T.add(row[bot], lay.v_index(i[bot], 0), -c * s)
    T.add(row[bot], lay.v_index(i[bot] - 1, 0), c * s)
    T.add(row, row, diag)
    if case is not None:
        g2[row] += case.f1(xs, ys)

    # interface v rows: balance of normal forces divided by h; the phi and p
    # parts live in G and B^T
    ig = np.arange(n)
    rg = lay.v_index(ig, 0)
    T.add(rg, rg, 2 * c)
    T.add(rg, lay.v_index(ig, 1), -2 * c)

    # interior v-momentum rows at (x_{i+1/2}, y_j)
    j, i = np.meshgrid(np.arange(1, n), np.arange(n), indexing="ij")
    i, j = i.ravel(), j.ravel()
    row = lay.v_index(i, j)
    xs, ys = grid.x0 + (i + 0.5) * h, grid.interface_y + j * h
    diag = np.full(row.shape, 4 * c)
    for di in (-1, 1):
        ni = i + di
        inside = (ni >= 0) & (ni <= n - 1)
        T.add(row[inside], lay.v_index(ni[inside], j[inside]), -c)
        out = ~inside
        diag[out] += c
        g2[row[out]] += 2 * c * vD(np.full(out.sum(), xl if di < 0 else xr), ys[out])
    up = j < n - 1
    T.add(row[up], lay.v_index(i[up], j[up] + 1), -c)
    g2[row[~up]] += c * vD(xs[~up], np.full((~up).sum(), ytop))
    T.add(row, lay.v_index(i, j - 1), -c)
    T.add(row, row, diag)
    if case is not None:
        g2[row] += case.f2(xs, ys)
    return T.tocsr((nvel, nvel)), g2


def assemble_divergence(grid: MacGrid, case: ManufacturedCase | None = None):
    """Return ``(B, g3)`` with ``B = -div`` acting on (u, v_interface, v_interior)."""
    n, h = grid.n, grid.h
    lay = dof_layout(grid)
    j, i = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    i, j = i.ravel(), j.ravel()
    row = lay.p_index(i, j)
    g3 = np.zeros(lay.n_p)
    uD = case.u if case is not None else _zero_source
    vD = case.v if case is not None else _zero_source
    ys = grid.interface_y + (j + 0.5) * h
    xs = grid.x0 + (i + 0.5) * h
    T = _Triplets()
    right = i + 1 <= n - 1
    T.add(row[right], lay.u_index(i[right] + 1, j[right]), -1 / h)
    g3[row[~right]] += uD(np.full((~right).sum(), grid.stokes.x_max), ys[~right]) / h
    left = i >= 1
    T.add(row[left], lay.u_index(i[left], j[left]), 1 / h)
    g3[row[~left]] -= uD(np.full((~left).sum(), grid.stokes.x_min), ys[~left]) / h
    up = j + 1 <= n - 1
    T.add(row[up], lay.v_index(i[up], j[up] + 1), -1 / h)
    g3[row[~up]] += vD(xs[~up], np.full((~up).sum(), grid.stokes.y_max)) / h
    T.add(row, lay.v_index(i, j), 1 / h)
    return T.tocsr((lay.n_p, lay.n_vel)), g3


def assemble_coupling(grid: MacGrid) -> sp.csr_matrix:
    """G: velocity rows x phi columns, -I/h between interface v and the top Darcy row."""
    n, h = grid.n, grid.h
    lay = dof_layout(grid)
    i = np.arange(n)
    T = _Triplets()
    T.add(lay.v_index(i, 0), lay.phi_index(i, -1), -1 / h)
    return T.tocsr((lay.n_vel, lay.n_phi))


def assemble_rhs(grid: MacGrid, params: PhysicalParams, case: ManufacturedCase):
    """(g1, g2, g3) including forcing, Dirichlet data and interface eliminations."""
    case.check(params)
    _, g1 = assemble_darcy(grid, params, case)
    _, g2 = assemble_stokes(grid, params, case)
    _, g3 = assemble_divergence(grid, case)
    return g1, g2, g3


@dataclass(frozen=True)
class BlockSystem:
    grid: MacGrid
    params: PhysicalParams
    A_d: sp.csr_matrix
    A_s: sp.csr_matrix
    G: sp.csr_matrix
    B: sp.csr_matrix
    g1: np.ndarray
    g2: np.ndarray
    g3: np.ndarray
    case: ManufacturedCase | None = field(default=None, compare=False)

    @property
    def layout(self) -> DofLayout:
        return dof_layout(self.grid)

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def h(self) -> float:
        return self.grid.h

    # named sub-blocks of A_s (Fig. 4 partition)
    def _as_block(self, a: int, b: int) -> sp.csr_matrix:
        lay = self.layout
        cuts = [0, lay.n_u, lay.n_u + lay.n_vg, lay.n_vel]
        return self.A_s[cuts[a]:cuts[a + 1], :][:, cuts[b]:cuts[b + 1]].tocsr()

    @property
    def A11(self): return self._as_block(0, 0)

    @property
    def A12(self): return self._as_block(0, 1)

    @property
    def A22(self): return self._as_block(1, 1)

    @property
    def A23(self): return self._as_block(1, 2)

    @property
    def A32(self): return self._as_block(2, 1)

    @property
    def A33(self): return self._as_block(2, 2)

    @property
    def B_x(self): return self.B[:, :self.layout.n_u].tocsr()

    @property
    def B_0(self):
        lay = self.layout
        return self.B[:, lay.n_u:lay.n_u + lay.n_vg].tocsr()

    @property
    def B_y(self):
        lay = self.layout
        return self.B[:, lay.n_u + lay.n_vg:].tocsr()

    @property
    def B_bar(self):
        return sp.hstack([self.B_x, self.B_y]).tocsr()

    @cached_property
    def K12(self) -> sp.csr_matrix:
        """Coefficient matrix of the natural form."""
        return sp.bmat([[self.A_d, -self.G.T, None],
                        [self.G, self.A_s, self.B.T],
                        [None, self.B, None]], format="csr")

    @cached_property
    def K(self) -> sp.csr_matrix:
        """Sign-flipped operator acting on (phi, -u, p)."""
        return sp.bmat([[self.A_d, self.G.T, None],
                        [self.G, -self.A_s, self.B.T],
                        [None, self.B, None]], format="csr")

    @property
    def rhs12(self) -> np.ndarray:
        return np.concatenate([self.g1, self.g2, self.g3])

    @property
    def rhs(self) -> np.ndarray:
        """Right-hand side of the K form."""
        return np.concatenate([self.g1, self.g2, -self.g3])

    def to_natural(self, xK: np.ndarray) -> np.ndarray:
        """Map a K-form solution (phi, -u, p) back to (phi, u, p)."""
        x = np.array(xK, dtype=float, copy=True)
        x[self.layout.vel] *= -1
        return x

    def to_K(self, x12: np.ndarray) -> np.ndarray:
        return self.to_natural(x12)

    def split(self, x: np.ndarray):
        lay = self.layout
        return x[lay.phi], x[lay.vel], x[lay.p]

    def exact_vector(self, case: ManufacturedCase | None = None) -> np.ndarray:
        """Manufactured solution sampled at every unknown (natural form)."""
        case = case or self.case
        lay = self.layout
        pos = lay.positions2()
        out = np.empty(lay.total)
        x, y = self.grid.coords(pos["phi"])
        out[lay.phi] = case.phi(x, y)
        x, y = self.grid.coords(pos["u"])
        out[lay.off_u:lay.off_vg] = case.u(x, y)
        x, y = self.grid.coords(pos["v"])
        out[lay.off_vg:lay.off_p] = case.v(x, y)
        x, y = self.grid.coords(pos["p"])
        out[lay.p] = case.p(x, y)
        return out


def assemble_system(grid: MacGrid, params: PhysicalParams,
                    case: ManufacturedCase | None = None) -> BlockSystem:
    if case is not None:
        case.check(params)
    A_d, g1 = assemble_darcy(grid, params, case)
    A_s, g2 = assemble_stokes(grid, params, case)
    B, g3 = assemble_divergence(grid, case)
    G = assemble_coupling(grid)
    return BlockSystem(grid, params, A_d, A_s, G, B, g1, g2, g3, case)


def field_errors(system: BlockSystem, x12: np.ndarray,
                 case: ManufacturedCase | None = None) -> dict[str, float]:
    """Discrete L2 errors (h^2 sum e^2)^(1/2) per field against the exact solution."""
    lay = system.layout
    e = x12 - system.exact_vector(case)
    h = system.h
    parts = {
        "u": e[lay.off_u:lay.off_vg],
        "v": e[lay.off_vg:lay.off_p],
        "p": e[lay.p],
        "phi": e[lay.phi],
    }
    return {k: float(h * np.linalg.norm(v)) for k, v in parts.items()}
