"""IMEX spectral deferred corrections on Gauss-Lobatto nodes.

The integrators here are written against a small problem interface:

``eval_fi(x)``, ``eval_fe(x)``
    implicit (stiff) and explicit right-hand sides;
``solve_implicit(b, c)``
    returns ``x`` with ``x - c * eval_fi(x) = b``.

States are numpy arrays of any fixed shape.
"""

from __future__ import annotations

import dataclasses

import numpy as np

SUPPORTED_NODES = (2, 3, 5)


@dataclasses.dataclass(frozen=True)
class QuadratureTables:
    """Nodes on ``[0, 1]`` and the integration matrices for one level.

    ``Q[m, j]`` integrates the ``j``-th Lagrange polynomial from 0 to
    ``nodes[m]``; ``QE`` holds forward-Euler substeps and ``QI`` the
    LU-based implicit weights.
    """

    nodes: np.ndarray
    Q: np.ndarray
    QE: np.ndarray
    QI: np.ndarray

    @property
    def M(self) -> int:
        return self.nodes.size - 1


def lobatto_nodes(n: int) -> np.ndarray:
    """Gauss-Lobatto nodes on ``[0, 1]``: endpoints plus roots of ``P'_{n-1}``."""
    if n < 2:
        raise ValueError("need at least two Lobatto nodes")
    inner = np.polynomial.legendre.Legendre.basis(n - 1).deriv().roots()
    x = np.concatenate([[-1.0], np.sort(inner.real), [1.0]])
    return 0.5 * (x + 1.0)


def lagrange_matrix(from_nodes: np.ndarray, to_nodes: np.ndarray) -> np.ndarray:
    """``L[i, j] = l_j(to_nodes[i])`` for the Lagrange basis on ``from_nodes``."""
    from_nodes = np.asarray(from_nodes, dtype=float)
    to_nodes = np.asarray(to_nodes, dtype=float)
    n = from_nodes.size
    L = np.ones((to_nodes.size, n))
    for j in range(n):
        for k in range(n):
            if k != j:
                L[:, j] *= (to_nodes - from_nodes[k]) / (from_nodes[j] - from_nodes[k])
    # snap exact hits so injection is bit-exact
    for i, t in enumerate(to_nodes):
        hit = np.flatnonzero(np.abs(from_nodes - t) < 1e-14)
        if hit.size:
            L[i] = 0.0
            L[i, hit[0]] = 1.0
    return L


def integration_matrix(nodes: np.ndarray) -> np.ndarray:
    """``Q[m, j] = int_0^{nodes[m]} l_j(t) dt``.

    Gauss-Legendre quadrature with ``n`` points is exact for the degree
    ``n - 1`` Lagrange polynomials.
    """
    n = nodes.size
    x, w = np.polynomial.legendre.leggauss(n)
    Q = np.zeros((n, n))
    for m, t in enumerate(nodes):
        pts = 0.5 * t * (x + 1.0)
        Q[m] = 0.5 * t * (w @ lagrange_matrix(nodes, pts))
    return Q


def lu_no_pivot(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Doolittle factorization ``A = L U`` with unit-diagonal ``L``."""
    n = A.shape[0]
    L = np.eye(n)
    U = np.array(A, dtype=float)
    for k in range(n - 1):
        for i in range(k + 1, n):
            L[i, k] = U[i, k] / U[k, k]
            U[i, k:] -= L[i, k] * U[k, k:]
    return L, np.triu(U)


def build_tables(num_nodes: int) -> QuadratureTables:
    if num_nodes not in SUPPORTED_NODES:
        raise ValueError(
            f"unsupported node count {num_nodes}; choose one of {SUPPORTED_NODES}")
    nodes = lobatto_nodes(num_nodes)
    Q = integration_matrix(nodes)
    Q[0] = 0.0
    QE = np.zeros_like(Q)
    for m in range(1, num_nodes):
        QE[m, :m] = np.diff(nodes)[:m]
    QI = np.zeros_like(Q)
    _, U = lu_no_pivot(Q[1:, 1:].T)
    QI[1:, 1:] = U.T
    for arr in (nodes, Q, QE, QI):
        arr.setflags(write=False)
    return QuadratureTables(nodes, Q, QE, QI)


@dataclasses.dataclass
class SpaceTimeState:
    """Solution and cached right-hand sides at all nodes of one time step.

    ``u``, ``fi``, ``fe`` have shape ``(M+1,) + state_shape``.
    """

    u: np.ndarray
    fi: np.ndarray
    fe: np.ndarray

    @classmethod
    def spread(cls, problem, u0: np.ndarray, num_nodes: int) -> "SpaceTimeState":
        """Copy ``u0`` to every node, evaluating the right-hand sides once."""
        fi = problem.eval_fi(u0)
        fe = problem.eval_fe(u0)
        rep = (num_nodes,) + (1,) * u0.ndim
        return cls(np.tile(u0, rep), np.tile(fi, rep), np.tile(fe, rep))

    def copy(self) -> "SpaceTimeState":
        return SpaceTimeState(self.u.copy(), self.fi.copy(), self.fe.copy())

    @property
    def f(self) -> np.ndarray:
        return self.fi + self.fe

    def reevaluate(self, problem, nodes=None) -> None:
        nodes = range(self.u.shape[0]) if nodes is None else nodes
        for m in nodes:
            self.fi[m] = problem.eval_fi(self.u[m])
            self.fe[m] = problem.eval_fe(self.u[m])


def node_integrals(Q: np.ndarray, f: np.ndarray) -> np.ndarray:
    """``(Q kron I) f`` on a stacked node array."""
    return np.tensordot(Q, f, axes=(1, 0))


def sweep(problem, sts: SpaceTimeState, dt: float, tables: QuadratureTables,
          tau: np.ndarray | None = None) -> SpaceTimeState:
    """One IMEX correction sweep over all nodes, in place.

    Node 0 is left untouched; its cached right-hand sides must match the
    current initial value. ``tau`` is the FAS correction in node-to-node
    cumulative form (same shape as ``sts.u``).
    """
    M = tables.M
    u0 = sts.u[0]
    integ = dt * node_integrals(tables.Q, sts.f)
    fi_old = sts.fi.copy()
    fe_old = sts.fe.copy()
    for m in range(M):
        rhs = u0 + integ[m + 1]
        for j in range(m + 1):
            if tables.QE[m + 1, j]:
                rhs = rhs + dt * tables.QE[m + 1, j] * (sts.fe[j] - fe_old[j])
        for j in range(1, m + 1):
            rhs = rhs + dt * tables.QI[m + 1, j] * (sts.fi[j] - fi_old[j])
        c = dt * tables.QI[m + 1, m + 1]
        rhs = rhs - c * fi_old[m + 1]
        if tau is not None:
            rhs = rhs + tau[m + 1]
        sts.u[m + 1] = problem.solve_implicit(rhs, c)
        sts.fi[m + 1] = problem.eval_fi(sts.u[m + 1])
        sts.fe[m + 1] = problem.eval_fe(sts.u[m + 1])
    return sts


def collocation_residual(sts: SpaceTimeState, dt: float, tables: QuadratureTables,
                         tau: np.ndarray | None = None, u0: np.ndarray | None = None
                         ) -> float:
    """Max-norm of ``A(U) - tau - 1 (x) u0`` using the cached right-hand sides."""
    u0 = sts.u[0] if u0 is None else u0
    res = sts.u - dt * node_integrals(tables.Q, sts.f) - u0[None]
    if tau is not None:
        res = res - tau
    return float(np.max(np.abs(res)))


def sdc_step(problem, u0: np.ndarray, dt: float, tables: QuadratureTables,
             num_sweeps: int, residuals: list | None = None) -> np.ndarray:
    """Advance ``u0`` by one step of SDC(M+1, num_sweeps)."""
    sts = SpaceTimeState.spread(problem, u0, tables.M + 1)
    if residuals is not None:
        residuals.append(collocation_residual(sts, dt, tables))
    for _ in range(num_sweeps):
        sweep(problem, sts, dt, tables)
        if residuals is not None:
            residuals.append(collocation_residual(sts, dt, tables))
    return sts.u[-1].copy()
