"""Shallow-water right-hand sides in vorticity-divergence form.

A model state is a complex array of shape ``(3, K)`` holding the spectral
coefficients of geopotential, vorticity and divergence (in that order).
:class:`PrognosticState` wraps such an array with named views for the API
and checkpoint I/O; the time integrators work on the bare arrays.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from .spherical_harmonics import (
    ConfigurationError, SpectralField, TransformPlan, inv_laplacian_array,
    laplacian_eigenvalues, n_coeffs)

PHI, VORT, DIV = 0, 1, 2
VARIABLES = ("phi", "vort", "div")


@dataclasses.dataclass(frozen=True)
class ModelParams:
    """Physical constants; defaults are the Williamson et al. standard values."""

    a: float = 6.37122e6
    omega: float = 7.292e-5
    g: float = 9.80616
    phibar: float = 9.80616 * 29400.0
    nu: float = 1e5

    def __post_init__(self):
        if self.a <= 0 or self.phibar <= 0 or self.nu < 0:
            raise ConfigurationError(f"invalid model parameters {self}")


@dataclasses.dataclass
class PrognosticState:
    """Geopotential, vorticity and divergence sharing one truncation."""

    phi: SpectralField
    vort: SpectralField
    div: SpectralField

    def __post_init__(self):
        if not self.phi.R == self.vort.R == self.div.R:
            raise ConfigurationError("prognostic fields must share one truncation")

    @property
    def R(self) -> int:
        return self.phi.R

    def as_array(self) -> np.ndarray:
        return np.stack([self.phi.coeffs, self.vort.coeffs, self.div.coeffs])

    @classmethod
    def from_array(cls, x: np.ndarray, R: int) -> "PrognosticState":
        x = np.asarray(x)
        if x.shape != (3, n_coeffs(R)):
            raise ConfigurationError(f"state array shape {x.shape} does not fit R={R}")
        return cls(*(SpectralField(R, x[k].copy()) for k in range(3)))

    @classmethod
    def zeros(cls, R: int) -> "PrognosticState":
        return cls.from_array(np.zeros((3, n_coeffs(R)), dtype=complex), R)

    def to_dict(self) -> dict:
        return {name: getattr(self, name).to_dict() for name in VARIABLES}

    @classmethod
    def from_dict(cls, d: dict) -> "PrognosticState":
        return cls(*(SpectralField.from_dict(d[name]) for name in VARIABLES))

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "PrognosticState":
        return cls.from_dict(json.loads(Path(path).read_text()))


def eval_linear_array(x: np.ndarray, params: ModelParams) -> np.ndarray:
    """Stiff part: gravity-wave coupling of geopotential/divergence plus diffusion."""
    R = _truncation(x.shape[-1])
    lam = laplacian_eigenvalues(R, params.a)
    out = params.nu * lam * x
    out[PHI] -= params.phibar * x[DIV]
    out[DIV] -= lam * x[PHI]
    return out


def eval_nonlinear_array(x: np.ndarray, params: ModelParams,
                         plan: TransformPlan) -> np.ndarray:
    """Advective and Coriolis terms, evaluated pseudo-spectrally."""
    R = plan.R
    a = params.a
    psi = inv_laplacian_array(x[VORT], R, a)
    chi = inv_laplacian_array(x[DIV], R, a)
    phi_g, vort_g, U, V = plan.advection_grids(x[PHI], x[VORT], psi, chi)
    U /= a
    V /= a
    phi_g -= params.phibar
    absvort = vort_g + 2.0 * params.omega * plan.mu[:, None]
    energy = 0.5 * (U * U + V * V) / plan.coslat2[:, None]
    curl_q, div_q, div_phi, e_hat = plan.flux_tendencies(
        absvort * U, absvort * V, phi_g * U, phi_g * V, energy)

    out = np.empty_like(x)
    out[PHI] = -div_phi / a
    out[VORT] = -div_q / a
    out[DIV] = curl_q / a - laplacian_eigenvalues(R, a) * e_hat
    return out


def solve_implicit_array(b: np.ndarray, c: float, params: ModelParams,
                         substeps: bool = False) -> np.ndarray:
    """Solve ``x - c * L(x) = b`` mode by mode.

    The default solves the coupled geopotential/divergence 2x2 system with
    diffusion in one go, which is exact. ``substeps=True`` instead applies a
    gravity-wave solve followed by a separate diffusion solve; that variant
    carries an ``O(c^2 nu)`` splitting error.
    """
    if c < 0:
        raise ValueError("implicit coefficient must be non-negative")
    if c == 0:
        return b.copy()
    R = _truncation(b.shape[-1])
    lam = laplacian_eigenvalues(R, params.a)
    out = np.empty_like(b)
    if substeps:
        det = 1.0 - c * c * params.phibar * lam
        div = (b[DIV] - c * lam * b[PHI]) / det
        phi = b[PHI] - c * params.phibar * div
        diff = 1.0 - c * params.nu * lam
        out[PHI] = phi / diff
        out[VORT] = b[VORT] / diff
        out[DIV] = div / diff
        return out
    diag = 1.0 - c * params.nu * lam
    det = diag * diag - c * c * params.phibar * lam
    if np.any(det <= 0):
        raise ArithmeticError("singular implicit system")
    out[PHI] = (diag * b[PHI] - c * params.phibar * b[DIV]) / det
    out[DIV] = (diag * b[DIV] - c * lam * b[PHI]) / det
    out[VORT] = b[VORT] / diag
    return out


def _truncation(K: int) -> int:
    R = int(round((np.sqrt(8 * K + 1) - 3) / 2))
    if n_coeffs(R) != K:
        raise ConfigurationError(f"{K} is not a triangular coefficient count")
    return R


class SWEProblem:
    """IMEX-split shallow-water problem at one spectral truncation.

    ``eval_fi`` is the linear stiff part, ``eval_fe`` the nonlinear part
    (which also carries the Coriolis term). States are ``(3, K)`` arrays.
    """

    def __init__(self, R: int, params: ModelParams | None = None,
                 plan: TransformPlan | None = None, substeps: bool = False):
        self.R = R
        self.params = params or ModelParams()
        self.plan = plan or TransformPlan(R)
        if self.plan.R != R:
            raise ConfigurationError("transform plan truncation does not match problem")
        self.substeps = substeps
        self.shape = (3, n_coeffs(R))

    def eval_fi(self, x: np.ndarray) -> np.ndarray:
        return eval_linear_array(x, self.params)

    def eval_fe(self, x: np.ndarray) -> np.ndarray:
        return eval_nonlinear_array(x, self.params, self.plan)

    def solve_implicit(self, b: np.ndarray, c: float) -> np.ndarray:
        return solve_implicit_array(b, c, self.params, self.substeps)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape, dtype=complex)


# -- API on PrognosticState ---------------------------------------------------

def eval_linear(state: PrognosticState, params: ModelParams) -> PrognosticState:
    return PrognosticState.from_array(eval_linear_array(state.as_array(), params), state.R)


def eval_nonlinear(state: PrognosticState, params: ModelParams,
                   plan: TransformPlan) -> PrognosticState:
    if plan.R != state.R:
        raise ConfigurationError("state truncation does not match plan")
    out = eval_nonlinear_array(state.as_array(), params, plan)
    return PrognosticState.from_array(out, state.R)


def imex_split(state: PrognosticState, params: ModelParams, plan: TransformPlan):
    """Return ``(F_I, F_E)`` for ``state``."""
    return eval_linear(state, params), eval_nonlinear(state, params, plan)


def solve_implicit(b: PrognosticState, c: float, params: ModelParams,
                   substeps: bool = False) -> PrognosticState:
    out = solve_implicit_array(b.as_array(), c, params, substeps)
    return PrognosticState.from_array(out, b.R)
