"""Two-level machinery: spectral/temporal transfer, FAS correction and MLSDC.

Spatial coarsening truncates the spherical-harmonic expansion and spatial
interpolation pads it with zeros, so both act on the trailing coefficient
axis of a state array. Time transfer applies Lagrange matrices across the
leading node axis.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .sdc import (QuadratureTables, SpaceTimeState, build_tables,
                  collocation_residual, lagrange_matrix, node_integrals, sweep)
from .spherical_harmonics import ConfigurationError, n_coeffs, spectral_index

SUPPORTED_PAIRS = ((3, 2), (5, 3), (2, 2), (3, 3), (5, 5))


def coarse_truncation(R_f: int, alpha: float) -> int:
    """``round(alpha * R_f)``, validated."""
    if not 0 < alpha <= 1:
        raise ConfigurationError(f"coarsening ratio must lie in (0, 1], got {alpha}")
    R_c = int(round(alpha * R_f))
    if R_c < 1:
        raise ConfigurationError(f"alpha={alpha} leaves no coarse modes at R_f={R_f}")
    return R_c


def truncation_map(R_f: int, R_c: int) -> np.ndarray:
    """Fine flat indices of the coarse modes, in coarse r-major order."""
    if R_c > R_f:
        raise ConfigurationError(f"coarse truncation {R_c} exceeds fine {R_f}")
    fine = spectral_index(R_f)
    coarse = spectral_index(R_c)
    idx = np.array([fine.flat(r, s) for r, s in zip(coarse.r, coarse.s)], dtype=int)
    idx.setflags(write=False)
    return idx


def restrict_space(x: np.ndarray, R_f: int, R_c: int) -> np.ndarray:
    """Keep modes with ``r <= s <= R_c`` (acts on the last axis)."""
    return np.ascontiguousarray(x[..., truncation_map(R_f, R_c)])


def interpolate_space(x: np.ndarray, R_c: int, R_f: int) -> np.ndarray:
    """Zero-pad coarse coefficients to truncation ``R_f`` (last axis)."""
    out = np.zeros(x.shape[:-1] + (n_coeffs(R_f),), dtype=np.result_type(x, complex))
    out[..., truncation_map(R_f, R_c)] = x
    return out


@dataclasses.dataclass
class Level:
    """A problem at one truncation paired with its quadrature tables."""

    problem: object
    tables: QuadratureTables

    @property
    def R(self) -> int:
        return self.problem.R

    @property
    def num_nodes(self) -> int:
        return self.tables.M + 1


class TransferPair:
    """Restriction and interpolation between a fine and a coarse level."""

    def __init__(self, fine: Level, coarse: Level):
        pair = (fine.num_nodes, coarse.num_nodes)
        if pair not in SUPPORTED_PAIRS:
            raise ConfigurationError(
                f"unsupported node pair {pair}; use (3, 2) or (5, 3), or equal counts")
        if coarse.R > fine.R:
            raise ConfigurationError("coarse truncation exceeds fine truncation")
        self.fine = fine
        self.coarse = coarse
        self.Pi_restrict = lagrange_matrix(fine.tables.nodes, coarse.tables.nodes)
        self.Pi_interp = lagrange_matrix(coarse.tables.nodes, fine.tables.nodes)
        self.map = truncation_map(fine.R, coarse.R)
        self.identical_space = coarse.R == fine.R

    @property
    def alpha(self) -> float:
        return self.coarse.R / self.fine.R

    def restrict_space(self, x: np.ndarray) -> np.ndarray:
        if self.identical_space:
            return x.copy()
        return np.ascontiguousarray(x[..., self.map])

    def interpolate_space(self, x: np.ndarray) -> np.ndarray:
        if self.identical_space:
            return x.copy()
        out = np.zeros(x.shape[:-1] + (n_coeffs(self.fine.R),), dtype=x.dtype)
        out[..., self.map] = x
        return out

    def restrict_time(self, u: np.ndarray) -> np.ndarray:
        return np.tensordot(self.Pi_restrict, u, axes=(1, 0))

    def interpolate_time(self, u: np.ndarray) -> np.ndarray:
        return np.tensordot(self.Pi_interp, u, axes=(1, 0))

    def restrict(self, u: np.ndarray) -> np.ndarray:
        """Space-time restriction of a node-stacked array."""
        return self.restrict_space(self.restrict_time(u))

    def interpolate(self, u: np.ndarray) -> np.ndarray:
        """Space-time interpolation of a node-stacked array."""
        return self.interpolate_time(self.interpolate_space(u))


def fas_correction(fine_sts: SpaceTimeState, coarse_sts: SpaceTimeState,
                   dt: float, pair: TransferPair) -> np.ndarray:
    """Coarse FAS term ``A_c(R u_f) - R A_f(u_f)`` (two levels, fine tau zero).

    ``coarse_sts`` must hold the restricted fine iterate with its coarse
    right-hand sides. The state terms cancel, leaving only integrals.
    """
    fine_int = node_integrals(pair.fine.tables.Q, fine_sts.f)
    coarse_int = node_integrals(pair.coarse.tables.Q, coarse_sts.f)
    return dt * (pair.restrict(fine_int) - coarse_int)


def restrict_state(fine_sts: SpaceTimeState, pair: TransferPair) -> SpaceTimeState:
    """Restrict the fine iterate and re-evaluate coarse right-hand sides."""
    u = pair.restrict(fine_sts.u)
    problem = pair.coarse.problem
    fi = np.stack([problem.eval_fi(v) for v in u])
    fe = np.stack([problem.eval_fe(v) for v in u])
    return SpaceTimeState(u, fi, fe)


def interpolate_increment(fine_sts: SpaceTimeState, coarse_new: SpaceTimeState,
                          coarse_old: SpaceTimeState, pair: TransferPair,
                          nodes=None) -> None:
    """Add the interpolated coarse change in state and right-hand sides, in place."""
    du = pair.interpolate(coarse_new.u - coarse_old.u)
    dfi = pair.interpolate(coarse_new.fi - coarse_old.fi)
    dfe = pair.interpolate(coarse_new.fe - coarse_old.fe)
    sl = slice(None) if nodes is None else nodes
    fine_sts.u[sl] += du[sl]
    fine_sts.fi[sl] += dfi[sl]
    fine_sts.fe[sl] += dfe[sl]


def mlsdc_iteration(fine_sts: SpaceTimeState, dt: float, pair: TransferPair,
                    residuals: list | None = None) -> SpaceTimeState:
    """Fine sweep, FAS-corrected coarse sweep, increment interpolation (in place)."""
    sweep(pair.fine.problem, fine_sts, dt, pair.fine.tables)
    if residuals is not None:
        residuals.append(collocation_residual(fine_sts, dt, pair.fine.tables))
    coarse = restrict_state(fine_sts, pair)
    saved = coarse.copy()
    tau = fas_correction(fine_sts, coarse, dt, pair)
    sweep(pair.coarse.problem, coarse, dt, pair.coarse.tables, tau)
    interpolate_increment(fine_sts, coarse, saved, pair)
    return fine_sts


def mlsdc_step(u0: np.ndarray, dt: float, pair: TransferPair, num_iters: int,
               residuals: list | None = None) -> np.ndarray:
    """Advance ``u0`` by one step of MLSDC(M_f+1, M_c+1, num_iters, alpha)."""
    fine = pair.fine
    sts = SpaceTimeState.spread(fine.problem, u0, fine.num_nodes)
    for _ in range(num_iters):
        mlsdc_iteration(sts, dt, pair, residuals)
    return sts.u[-1].copy()


def make_pair(fine_problem, coarse_problem, fine_nodes: int, coarse_nodes: int
              ) -> TransferPair:
    return TransferPair(Level(fine_problem, build_tables(fine_nodes)),
                        Level(coarse_problem, build_tables(coarse_nodes)))
