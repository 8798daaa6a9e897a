"""Error norms, spectra and the theoretical cost/speedup model."""

from __future__ import annotations

import csv
import dataclasses
from pathlib import Path

import numpy as np

from .spherical_harmonics import spectral_index
from .swe_rhs import VARIABLES, _truncation

CSV_COLUMNS = ("case", "scheme", "dt", "R_norm", "E_phi", "E_vort", "E_div",
               "wall_seconds", "theoretical_speedup")


class UndefinedErrorNorm(ArithmeticError):
    """The reference vanishes on the retained modes."""


@dataclasses.dataclass(frozen=True)
class ErrorReport:
    R_norm: int
    errors: dict

    def __getitem__(self, name: str) -> float:
        return self.errors[name]

    def as_row(self) -> tuple[float, float, float]:
        return tuple(self.errors[v] for v in VARIABLES)


def _retained(R: int, R_norm: int) -> np.ndarray:
    idx = spectral_index(R)
    return idx.s <= R_norm


def field_error(x: np.ndarray, ref: np.ndarray, R_norm: int) -> float:
    """Normalized max-norm error of one coefficient vector over ``s <= R_norm``."""
    x = np.asarray(x)
    ref = np.asarray(ref)
    if x.shape != ref.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {ref.shape}")
    keep = _retained(_truncation(ref.shape[-1]), R_norm)
    denom = np.max(np.abs(ref[keep]), initial=0.0)
    if denom == 0.0:
        raise UndefinedErrorNorm(f"reference is zero on modes s <= {R_norm}")
    return float(np.max(np.abs(x[keep] - ref[keep])) / denom)


def spectral_error(x: np.ndarray, ref: np.ndarray, R_norm: int) -> ErrorReport:
    """Per-variable errors of two ``(3, K)`` states.

    Raises :class:`UndefinedErrorNorm` if any reference variable vanishes
    on the retained modes.
    """
    errors = {name: field_error(x[k], ref[k], R_norm) for k, name in enumerate(VARIABLES)}
    return ErrorReport(R_norm, errors)


def max_spectrum(coeffs: np.ndarray) -> np.ndarray:
    """``out[n] = max_r |x^r_n|`` for total wavenumbers ``n = 0..R``."""
    coeffs = np.asarray(coeffs)
    R = _truncation(coeffs.shape[-1])
    idx = spectral_index(R)
    out = np.zeros(R + 1)
    np.maximum.at(out, idx.s, np.abs(coeffs))
    return out


# -- cost model -----------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class CostParams:
    """Parameters of PFASST(n_ts, M_f+1, M_c+1, N_PF, alpha) and its baselines.

    Coarse unit costs default to ``alpha**2`` times the fine ones.
    """

    n_ts: int
    M_f: int
    M_c: int
    N_PF: int
    alpha: float
    N_S: int = 0
    N_ML: int = 0
    Cs_f: float = 1.0
    Cfi_f: float = 1.0
    Cfe_f: float = 1.0
    Cs_c: float | None = None
    Cfi_c: float | None = None
    Cfe_c: float | None = None

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        for name in ("n_ts", "M_f", "M_c", "N_PF"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.N_S < 0 or self.N_ML < 0:
            raise ValueError("iteration counts must be non-negative")
        a2 = self.alpha ** 2
        for lev in ("Cs", "Cfi", "Cfe"):
            if getattr(self, lev + "_c") is None:
                object.__setattr__(self, lev + "_c", a2 * getattr(self, lev + "_f"))


def cost_prediction(p: CostParams) -> float:
    fc = p.Cfi_c + p.Cfe_c
    return (p.M_c + 1) * fc + p.n_ts * fc + p.n_ts * p.M_c * (p.Cs_c + fc)


def cost_iteration(p: CostParams) -> float:
    ff = p.Cfi_f + p.Cfe_f
    fc = p.Cfi_c + p.Cfe_c
    return (p.M_f * (p.Cs_f + ff) + p.M_c * fc + fc
            + p.M_c * (p.Cs_c + fc) + ff)


def cost_pfasst(p: CostParams) -> float:
    """Prediction plus ``N_PF`` iterations; communication is not modelled."""
    return cost_prediction(p) + p.N_PF * cost_iteration(p)


def cost_sdc(p: CostParams) -> float:
    ff = p.Cfi_f + p.Cfe_f
    return p.n_ts * p.M_f * ff + p.n_ts * p.N_S * p.M_f * (p.Cs_f + ff)


def cost_mlsdc(p: CostParams) -> float:
    """Serial MLSDC over the same block with ``N_ML`` iterations per step."""
    ff = p.Cfi_f + p.Cfe_f
    fc = p.Cfi_c + p.Cfe_c
    per_iter = p.M_f * (p.Cs_f + ff) + p.M_c * fc + p.M_c * (p.Cs_c + fc)
    return p.n_ts * p.M_f * ff + p.n_ts * p.N_ML * per_iter


def _coefficients(p: CostParams) -> dict:
    n, Mf, Mc = p.n_ts, p.M_f, p.M_c
    top = 2 * Mc + (3 * Mc + 2) * n + 2
    return dict(a=2.0 / 3.0,
                b=(3 * Mf + 2) / (3 * n * Mf),
                c=(5 * Mc + 2) / (3 * n * Mf),
                d=top / (3 * n * Mf),
                e=(3 * Mf + 2) / (5 * n * Mc),
                f=(5 * Mc + 2) / (5 * n * Mc),
                g=top / (5 * n * Mc))


def speedup_vs_sdc(p: CostParams, dt_ratio: float = 1.0) -> float:
    """Closed-form theoretical speedup over SDC(M_f+1, N_S).

    ``dt_ratio`` is ``dt_PF / dt_SDC``; it rescales the result when the two
    schemes need different steps for the same accuracy. The closed form
    assumes unit fine costs and ``alpha**2`` coarse costs.
    """
    k = _coefficients(p)
    a2 = p.alpha ** 2
    value = (p.N_S + k["a"]) / (k["b"] * p.N_PF + k["c"] * a2 * p.N_PF + k["d"] * a2)
    return dt_ratio * value


def speedup_vs_mlsdc(p: CostParams, dt_ratio: float = 1.0) -> float:
    """Closed-form theoretical speedup over MLSDC(M_f+1, M_c+1, N_ML, alpha)."""
    k = _coefficients(p)
    a2 = p.alpha ** 2
    first = (p.N_ML + k["a"]) / (k["b"] * p.N_PF + k["c"] * a2 * p.N_PF + k["d"] * a2)
    second = p.N_ML / (k["e"] * p.N_PF / a2 + k["f"] * p.N_PF + k["g"])
    return dt_ratio * (first + second)


# -- tabular output -------------------------------------------------------------

def write_error_table(path, rows) -> None:
    """Write dict rows keyed by :data:`CSV_COLUMNS`."""
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow({k: row.get(k, "") for k in CSV_COLUMNS})


def write_spectrum(path, state: np.ndarray) -> None:
    spectra = [max_spectrum(state[k]) for k in range(len(VARIABLES))]
    rows = np.column_stack([np.arange(spectra[0].size)] + spectra)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("n",) + VARIABLES)
        for r in rows:
            w.writerow([int(r[0])] + [repr(float(v)) for v in r[1:]])


def read_error_table(path) -> list[dict]:
    with open(Path(path), newline="") as fh:
        return list(csv.DictReader(fh))
