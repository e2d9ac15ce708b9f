"""P1 finite-element discretization of the damped star network.

Each edge carries continuous piecewise-linear elements on a per-edge node set;
the common vertex x = 0 is a single shared degree of freedom (displacement
continuity), the outer ends are eliminated (clamped).  The assembled matrices
are

    K  stiffness   sum_j int u' phi'          (SPD)
    M  mass        sum_j int u  phi           (SPD)
    D  damping     sum_j int d_j(x) u' phi'   (PSD, zero iff undamped)

giving the semi-discrete system M u'' + D u' + K u = 0 and the first-order
generator S = [[0, I], [-M^-1 K, -M^-1 D]] whose energy inner product is
gram = blockdiag(K, M).  The flux-balance condition at the vertex is the
natural condition of this weak form; it is not imposed explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import AssemblyError, ConfigError, DomainError
from .network import StarNetwork, Zero, eval_d

__all__ = ["Mesh", "AssembledSystem", "build_mesh", "assemble", "build_generator"]

# 4-point Gauss-Legendre on [0, 1], used for the damping-coefficient integrals
_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(4)
_GAUSS_X = (_GAUSS_X + 1.0) / 2.0
_GAUSS_W = _GAUSS_W / 2.0


@dataclass(frozen=True)
class Mesh:
    """Per-edge node coordinates (vertex first) and grading exponents."""

    nodes: tuple          # tuple of arrays, nodes[j][0] = 0, nodes[j][-1] = length_j
    gradings: tuple       # grading exponent per edge, >= 1

    def __post_init__(self):
        for xs in self.nodes:
            if xs[0] != 0.0 or np.any(np.diff(xs) <= 0.0):
                raise ValueError("edge nodes must increase strictly from 0")

    @property
    def n_edges(self):
        return len(self.nodes)

    @property
    def h_min(self):
        return min(float(np.min(np.diff(xs))) for xs in self.nodes)

    @property
    def h_max(self):
        return max(float(np.max(np.diff(xs))) for xs in self.nodes)


def build_mesh(network, n_per_edge, grading=2.0):
    """Mesh the network with n_per_edge elements per edge.

    The elastic edge is meshed uniformly; damped edges use the graded node
    set  length * (i/n)**grading, clustering at the vertex where the damping
    coefficient degenerates.
    """
    if n_per_edge < 2:
        raise ConfigError(f"n_per_edge must be >= 2, got {n_per_edge}")
    if grading < 1.0:
        raise ConfigError(f"grading must be >= 1, got {grading}")
    i = np.arange(n_per_edge + 1) / n_per_edge
    nodes = [network.length_0 * i]
    gradings = [1.0]
    for edge in network.damped_edges:
        nodes.append(edge.length * i**grading)
        gradings.append(grading)
    return Mesh(nodes=tuple(nodes), gradings=tuple(gradings))


@dataclass
class AssembledSystem:
    """Discretised generator data: sparse K, M, D plus the DOF map.

    DOF 0 is the shared vertex value; the remaining DOFs are the interior
    nodes of each edge in order.  ``dof_map[j][i]`` is the global index of
    node i on edge j, with -1 marking the eliminated clamped end.  The dense
    ``generator`` block matrix is materialised on demand by
    :func:`build_generator`; large systems are handled sparsely throughout.
    """

    network: StarNetwork
    mesh: Mesh
    n_u: int
    K: sp.csr_matrix
    M: sp.csr_matrix
    D: sp.csr_matrix
    dof_map: tuple
    generator: np.ndarray | None = None
    _m_lu: object = field(default=None, repr=False)
    _k_lu: object = field(default=None, repr=False)

    @property
    def n_state(self):
        return 2 * self.n_u

    @property
    def gram(self):
        """Energy Gram matrix blockdiag(K, M) (sparse)."""
        return sp.block_diag([self.K, self.M], format="csr")

    @property
    def is_damped(self):
        return self.D.nnz > 0

    def m_solve(self, b):
        if self._m_lu is None:
            self._m_lu = spla.splu(self.M.tocsc())
        return self._m_lu.solve(b)

    def k_solve(self, b):
        if self._k_lu is None:
            self._k_lu = spla.splu(self.K.tocsc())
        return self._k_lu.solve(b)

    def apply_generator(self, x):
        """S x without forming S densely."""
        u, v = x[: self.n_u], x[self.n_u :]
        return np.concatenate([v, -self.m_solve(self.K @ u + self.D @ v)])

    def mesh_cutoff(self):
        """Highest sweep frequency the mesh resolves: half the smallest
        per-element dispersion limit pi/h, i.e. 0.5*pi/h_max."""
        return 0.5 * np.pi / self.mesh.h_max

    def spectral_band(self):
        """|Im| band within which computed eigenvalues are trusted."""
        return 0.5 / self.mesh.h_max


def _edge_dof_indices(mesh, offset, n_elem):
    """Global indices for one edge's nodes: vertex, interiors, clamped end."""
    idx = np.empty(n_elem + 1, dtype=int)
    idx[0] = 0
    idx[1:-1] = offset + np.arange(n_elem - 1)
    idx[-1] = -1
    return idx


def assemble(network, mesh):
    """Assemble K, M, D for the network on the given mesh."""
    if mesh.n_edges != network.n_damped + 1:
        raise AssemblyError(
            f"mesh has {mesh.n_edges} edges, network has {network.n_damped + 1}"
        )
    profiles = [Zero()] + [e.profile for e in network.damped_edges]
    lengths = network.lengths
    for j, xs in enumerate(mesh.nodes):
        if abs(xs[-1] - lengths[j]) > 1e-12 * lengths[j]:
            raise AssemblyError(f"edge {j} mesh ends at {xs[-1]}, expected {lengths[j]}")

    n_u = 1 + sum(len(xs) - 2 for xs in mesh.nodes)
    rows, cols, kv, mv, dv = [], [], [], [], []
    dof_map = []
    offset = 1
    for j, xs in enumerate(mesh.nodes):
        n_elem = len(xs) - 1
        idx = _edge_dof_indices(mesh, offset, n_elem)
        offset += n_elem - 1
        dof_map.append(idx)

        h = np.diff(xs)
        # element damping integrals int_e d(x) dx by 4-point Gauss
        if isinstance(profiles[j], Zero):
            dint = np.zeros(n_elem)
        else:
            xq = xs[:-1, None] + h[:, None] * _GAUSS_X[None, :]
            try:
                dq = eval_d(profiles[j], xq, ell=lengths[j])
            except DomainError as exc:
                raise AssemblyError(f"damping coefficient on edge {j}: {exc}") from exc
            dint = h * (dq @ _GAUSS_W)

        a, b = idx[:-1], idx[1:]
        for (i0, i1, sgn_k, sgn_m) in (
            (a, a, 1.0, 2.0),
            (b, b, 1.0, 2.0),
            (a, b, -1.0, 1.0),
            (b, a, -1.0, 1.0),
        ):
            keep = (i0 >= 0) & (i1 >= 0)
            rows.append(i0[keep])
            cols.append(i1[keep])
            kv.append(sgn_k / h[keep])
            mv.append(sgn_m * h[keep] / 6.0)
            dv.append(sgn_k * dint[keep] / h[keep] ** 2)

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    shape = (n_u, n_u)
    K = sp.coo_matrix((np.concatenate(kv), (rows, cols)), shape=shape).tocsr()
    M = sp.coo_matrix((np.concatenate(mv), (rows, cols)), shape=shape).tocsr()
    D = sp.coo_matrix((np.concatenate(dv), (rows, cols)), shape=shape).tocsr()
    D.eliminate_zeros()
    # symmetrise exactly: assembly order must not leave roundoff skew
    K = ((K + K.T) / 2.0).tocsr()
    M = ((M + M.T) / 2.0).tocsr()
    D = ((D + D.T) / 2.0).tocsr()
    return AssembledSystem(
        network=network, mesh=mesh, n_u=n_u, K=K, M=M, D=D, dof_map=tuple(dof_map)
    )


def build_generator(system, dense_budget=6000):
    """Populate the dense first-order generator S = [[0, I], [-M^-1 K, -M^-1 D]].

    The gram-energy inner product of the state space is blockdiag(K, M); S is
    dissipative in that inner product.  Refuses above the dense budget (the
    sparse block form is used instead throughout).
    """
    if system.generator is not None:
        return system
    if system.n_state > dense_budget:
        raise ConfigError(
            f"state dimension {system.n_state} exceeds dense budget {dense_budget}"
        )
    n = system.n_u
    lu = spla.splu(system.M.tocsc())
    S = np.zeros((2 * n, 2 * n))
    S[:n, n:] = np.eye(n)
    S[n:, :n] = -lu.solve(system.K.toarray())
    S[n:, n:] = -lu.solve(system.D.toarray())
    system.generator = S
    return system
