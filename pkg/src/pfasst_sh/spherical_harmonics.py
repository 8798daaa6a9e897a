"""Spherical harmonic transform on a Gaussian grid with triangular truncation.

Spectral coefficients are stored as flat complex vectors in r-major order
(zonal wavenumber ``r = 0..R`` outer, total wavenumber ``s = r..R`` inner).
Only ``r >= 0`` is stored; negative zonal wavenumbers are the complex
conjugates. The associated Legendre functions are normalized so that
``int_{-1}^{1} P^r_s(mu)^2 dmu = 1``.

Internally the transforms work on a padded ``(R+1, R+1)`` layout indexed by
``[r, s]`` (entries with ``s < r`` are zero), which lets the Legendre sums
run as batched matrix products.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np
import scipy.fft


class ConfigurationError(ValueError):
    """Raised when fields and transform plans do not fit together."""


def n_coeffs(R: int) -> int:
    """Number of stored coefficients for triangular truncation ``R``."""
    return (R + 1) * (R + 2) // 2


@dataclasses.dataclass(frozen=True)
class SpectralIndex:
    """Wavenumber bookkeeping for one truncation limit."""

    R: int
    r: np.ndarray
    s: np.ndarray

    @classmethod
    def build(cls, R: int) -> "SpectralIndex":
        r = np.concatenate([np.full(R + 1 - m, m) for m in range(R + 1)])
        s = np.concatenate([np.arange(m, R + 1) for m in range(R + 1)])
        r.setflags(write=False)
        s.setflags(write=False)
        return cls(R, r, s)

    def flat(self, r: int, s: int) -> int:
        if not 0 <= r <= s <= self.R:
            raise IndexError(f"mode (r={r}, s={s}) outside truncation R={self.R}")
        return r * (self.R + 1) - r * (r - 1) // 2 + (s - r)

    def to_padded(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros(x.shape[:-1] + (self.R + 1, self.R + 1), dtype=complex)
        out[..., self.r, self.s] = x
        return out

    def from_padded(self, x: np.ndarray) -> np.ndarray:
        return x[..., self.r, self.s]


_INDEX_CACHE: dict[int, SpectralIndex] = {}


def spectral_index(R: int) -> SpectralIndex:
    if R not in _INDEX_CACHE:
        _INDEX_CACHE[R] = SpectralIndex.build(R)
    return _INDEX_CACHE[R]


@dataclasses.dataclass
class SpectralField:
    """Triangular-truncated coefficients of one scalar field."""

    R: int
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.shape != (n_coeffs(self.R),):
            raise ConfigurationError(
                f"expected {n_coeffs(self.R)} coefficients for R={self.R}, "
                f"got shape {self.coeffs.shape}")

    @classmethod
    def zeros(cls, R: int) -> "SpectralField":
        return cls(R, np.zeros(n_coeffs(R), dtype=complex))

    @classmethod
    def mode(cls, R: int, r: int, s: int, value: complex = 1.0) -> "SpectralField":
        f = cls.zeros(R)
        f.coeffs[spectral_index(R).flat(r, s)] = value
        return f

    def __getitem__(self, rs: tuple[int, int]) -> complex:
        return self.coeffs[spectral_index(self.R).flat(*rs)]

    def to_dict(self) -> dict:
        return {
            "R": self.R,
            "order": "r-major",
            "coeffs": [[float(c.real), float(c.imag)] for c in self.coeffs],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SpectralField":
        if d.get("order", "r-major") != "r-major":
            raise ConfigurationError(f"unsupported coefficient order {d['order']!r}")
        c = np.array(d["coeffs"], dtype=float).reshape(-1, 2)
        return cls(int(d["R"]), c[:, 0] + 1j * c[:, 1])


def dump_spectral(field: SpectralField, path) -> None:
    Path(path).write_text(json.dumps(field.to_dict()))


def load_spectral(path) -> SpectralField:
    return SpectralField.from_dict(json.loads(Path(path).read_text()))


@dataclasses.dataclass
class GridField:
    """Real values on the ``nlat x nlon`` Gaussian grid."""

    values: np.ndarray
    mu: np.ndarray
    weights: np.ndarray

    @property
    def nlat(self) -> int:
        return self.values.shape[0]

    @property
    def nlon(self) -> int:
        return self.values.shape[1]


def gauss_legendre(n: int, tol: float = 1e-15, maxiter: int = 100):
    """Roots of ``P_n`` and the Gauss-Legendre weights, sorted ascending.

    Newton iteration on the three-term recurrence, started from the
    Tricomi approximation of each root.
    """
    k = np.arange(1, n + 1)
    x = np.cos(np.pi * (k - 0.25) / (n + 0.5))
    for _ in range(maxiter):
        p0 = np.ones_like(x)
        p1 = x.copy()
        for j in range(2, n + 1):
            p0, p1 = p1, ((2 * j - 1) * x * p1 - (j - 1) * p0) / j
        dp = n * (x * p1 - p0) / (x * x - 1)
        dx = p1 / dp
        x = x - dx
        if np.max(np.abs(dx)) < tol:
            break
    p0 = np.ones_like(x)
    p1 = x.copy()
    for j in range(2, n + 1):
        p0, p1 = p1, ((2 * j - 1) * x * p1 - (j - 1) * p0) / j
    dp = n * (x * p1 - p0) / (x * x - 1)
    w = 2.0 / ((1 - x * x) * dp * dp)
    order = np.argsort(x)
    return x[order], w[order]


def legendre_table(R: int, mu: np.ndarray, smax: int | None = None) -> np.ndarray:
    """Normalized associated Legendre values ``P[i, r, s]`` for ``s <= smax``.

    Sectoral seed ``P^r_r`` from the closed-form product, then the
    three-term recurrence upward in ``s``. No Condon-Shortley phase.
    """
    smax = R if smax is None else smax
    mu = np.asarray(mu, dtype=float)
    cphi = np.sqrt(1.0 - mu * mu)
    P = np.zeros((mu.size, R + 1, smax + 1))
    sect = np.full(mu.size, np.sqrt(0.5))
    for r in range(R + 1):
        if r > 0:
            sect = sect * np.sqrt((2 * r + 1) / (2 * r)) * cphi
        P[:, r, r] = sect
        if r + 1 <= smax:
            P[:, r, r + 1] = np.sqrt(2 * r + 3) * mu * sect
        for s in range(r + 2, smax + 1):
            a = np.sqrt((4 * s * s - 1) / (s * s - r * r))
            b = np.sqrt(((s - 1) ** 2 - r * r) / (4 * (s - 1) ** 2 - 1))
            P[:, r, s] = a * (mu * P[:, r, s - 1] - b * P[:, r, s - 2])
    return P


def _epsilon(r: np.ndarray, s: np.ndarray) -> np.ndarray:
    num = s * s - r * r
    return np.sqrt(np.where(num > 0, num, 0) / (4.0 * s * s - 1.0))


def fft_friendly_nlon(R: int) -> int:
    n = scipy.fft.next_fast_len(3 * R + 1, real=True)
    while n % 2:
        n = scipy.fft.next_fast_len(n + 1, real=True)
    return n


class TransformPlan:
    """Precomputed tables for the transform at truncation ``R``.

    Parameters
    ----------
    R : int
        Triangular truncation limit.
    nlon, nlat : int, optional
        Grid size. Defaults give quadratic dealiasing: ``nlon >= 3R+1``
        (5-smooth, even) and ``nlat = nlon / 2``.
    """

    def __init__(self, R: int, nlon: int | None = None, nlat: int | None = None):
        if R < 0:
            raise ConfigurationError("truncation must be non-negative")
        nlon = fft_friendly_nlon(R) if nlon is None else nlon
        nlat = nlon // 2 if nlat is None else nlat
        if nlon < 2 * R + 2 or nlat < R + 1:
            raise ConfigurationError(
                f"grid {nlat}x{nlon} too small for exact transforms at R={R}")
        self.R = R
        self.nlon = nlon
        self.nlat = nlat
        self.index = spectral_index(R)
        self.mu, self.weights = gauss_legendre(nlat)
        self.coslat2 = 1.0 - self.mu ** 2
        self.lons = 2 * np.pi * np.arange(nlon) / nlon
        self.lats = np.arcsin(self.mu)

        ext = legendre_table(R, self.mu, smax=R + 1)
        P = ext[:, :, : R + 1]
        r = np.arange(R + 1)[:, None]
        s = np.arange(R + 1)[None, :]
        # (1 - mu^2) dP^r_s/dmu = -s eps^r_{s+1} P^r_{s+1} + (s+1) eps^r_s P^r_{s-1}
        Pm1 = np.concatenate([np.zeros((nlat, R + 1, 1)), P[:, :, :-1]], axis=2)
        H = (-s * _epsilon(r, s + 1) * ext[:, :, 1:]
             + (s + 1) * _epsilon(r, s) * Pm1)
        H = np.where(s >= r, H, 0.0)
        # batched layouts: [r, i, s] for synthesis, [r, s, i] for analysis
        self._P = np.ascontiguousarray(P.transpose(1, 0, 2))
        self._H = np.ascontiguousarray(H.transpose(1, 0, 2))
        wP = self.weights[:, None, None] * P
        wH = self.weights[:, None, None] * H
        self._wP = np.ascontiguousarray(wP.transpose(1, 2, 0))
        self._wPc = np.ascontiguousarray(
            (wP / self.coslat2[:, None, None]).transpose(1, 2, 0))
        self._wHc = np.ascontiguousarray(
            (wH / self.coslat2[:, None, None]).transpose(1, 2, 0))
        self._im = 1j * np.arange(R + 1)
        # fused tables for the nonlinear terms: one matmul each way
        self._PH = np.ascontiguousarray(np.concatenate([self._P, self._H], axis=1))
        self._wPHP = np.ascontiguousarray(
            np.concatenate([self._wPc, self._wHc, self._wP], axis=2))
        for arr in (self._P, self._H, self._wP, self._wPc, self._wHc,
                    self._PH, self._wPHP):
            arr.setflags(write=False)

    @property
    def legendre(self) -> np.ndarray:
        """``P[i, r, s]`` at the Gaussian latitudes."""
        return self._P.transpose(1, 0, 2)

    # -- Legendre sums -------------------------------------------------------
    @staticmethod
    def _leg_sum(table: np.ndarray, c: np.ndarray) -> np.ndarray:
        """``out[..., r, i] = sum_s table[r, i, s] c[..., r, s]`` via real matmuls."""
        lead = c.shape[:-2]
        R1 = c.shape[-2]
        cc = c.reshape((-1,) + c.shape[-2:])
        stacked = np.concatenate([cc.real, cc.imag], axis=0)  # (2B, r, s)
        rhs = np.ascontiguousarray(stacked.transpose(1, 2, 0))  # (r, s, 2B)
        out = table @ rhs  # (r, i or s, 2B)
        B = cc.shape[0]
        res = out[..., :B] + 1j * out[..., B:]
        return res.transpose(2, 0, 1).reshape(lead + (R1, table.shape[1]))

    def _fourier_to_grid(self, F: np.ndarray) -> np.ndarray:
        """``F[..., r, i]`` Fourier coefficients to real grid values ``[..., i, j]``."""
        lead = F.shape[:-2]
        full = np.zeros(lead + (self.nlat, self.nlon // 2 + 1), dtype=complex)
        full[..., : self.R + 1] = np.swapaxes(F, -1, -2)
        return scipy.fft.irfft(full, n=self.nlon, axis=-1) * self.nlon

    def _grid_to_fourier(self, g: np.ndarray) -> np.ndarray:
        """Real grid ``[..., i, j]`` to Fourier coefficients ``[..., r, i]``."""
        F = scipy.fft.rfft(g, axis=-1)[..., : self.R + 1] / self.nlon
        return np.swapaxes(F, -1, -2)

    def _check_grid(self, g: np.ndarray) -> None:
        if g.shape[-2:] != (self.nlat, self.nlon):
            raise ConfigurationError(
                f"grid shape {g.shape[-2:]} does not match plan "
                f"({self.nlat}, {self.nlon})")

    def _check_coeffs(self, x: np.ndarray) -> None:
        if x.shape[-1] != n_coeffs(self.R):
            raise ConfigurationError(
                f"{x.shape[-1]} coefficients do not match plan R={self.R}")

    # -- array-level transforms ----------------------------------------------
    def synth(self, x: np.ndarray) -> np.ndarray:
        """Flat coefficients ``[..., K]`` to grid values ``[..., nlat, nlon]``."""
        self._check_coeffs(x)
        return self._fourier_to_grid(self._leg_sum(self._P, self.index.to_padded(x)))

    def anal(self, g: np.ndarray) -> np.ndarray:
        """Grid values ``[..., nlat, nlon]`` to flat coefficients ``[..., K]``."""
        g = np.asarray(g, dtype=float)
        self._check_grid(g)
        F = self._grid_to_fourier(g)
        return self.index.from_padded(self._leg_sum(self._wP, F))

    def uv_cos(self, psi: np.ndarray, chi: np.ndarray):
        """Grid ``(u cos(phi), v cos(phi))`` times ``a`` from ``psi``, ``chi``."""
        p = self.index.to_padded(np.stack([psi, chi]))
        im = self._im[:, None]
        Pp = self._leg_sum(self._P, p)
        Hp = self._leg_sum(self._H, p)
        U = -Hp[0] + im * Pp[1]
        V = im * Pp[0] + Hp[1]
        UV = self._fourier_to_grid(np.stack([U, V]))
        return UV[0], UV[1]

    def curl_div_cos(self, A: np.ndarray, B: np.ndarray):
        """Spectral ``(curl, div)`` times ``a`` of the field whose cos-weighted
        components on the grid are ``(A, B)``. Leading batch axes allowed."""
        F = self._grid_to_fourier(np.stack([A, B]))
        im = self._im[:, None]
        FP = self._leg_sum(self._wPc, im * F)
        FH = self._leg_sum(self._wHc, F)
        curl = FP[1] + FH[0]
        div = FP[0] - FH[1]
        return self.index.from_padded(curl), self.index.from_padded(div)

    def advection_grids(self, phi, vort, psi, chi):
        """Grid values of ``phi``, ``vort`` and ``a (u, v) cos(phi)`` in one pass."""
        n = self.nlat
        c = self.index.to_padded(np.stack([phi, vort, psi, chi]))
        out = self._leg_sum(self._PH, c)
        P, H = out[..., :n], out[..., n:]
        im = self._im[:, None]
        F = np.stack([P[0], P[1], -H[2] + im * P[3], im * P[2] + H[3]])
        return self._fourier_to_grid(F)

    def flux_tendencies(self, A0, B0, A1, B1, E):
        """``a curl(A0, B0)``, ``a div(A0, B0)``, ``a div(A1, B1)`` and the
        analysis of ``E``, where ``(A, B)`` are cos-weighted grid components."""
        F = self._grid_to_fourier(np.stack([A0, B0, A1, B1, E]))
        im = self._im[:, None]
        zero = np.zeros_like(F[0])
        X = np.stack([
            np.concatenate([im * F[1], F[0], zero], axis=-1),
            np.concatenate([im * F[0], -F[1], zero], axis=-1),
            np.concatenate([im * F[2], -F[3], zero], axis=-1),
            np.concatenate([zero, zero, F[4]], axis=-1),
        ])
        return self.index.from_padded(self._leg_sum(self._wPHP, X))


# -- module-level API on typed fields -----------------------------------------

def analyse(plan: TransformPlan, g: GridField | np.ndarray) -> SpectralField:
    values = g.values if isinstance(g, GridField) else np.asarray(g)
    return SpectralField(plan.R, plan.anal(values))


def synthesise(plan: TransformPlan, x: SpectralField) -> GridField:
    if x.R != plan.R:
        raise ConfigurationError(f"field truncation {x.R} != plan truncation {plan.R}")
    return GridField(plan.synth(x.coeffs), plan.mu, plan.weights)


def laplacian_eigenvalues(R: int, a: float = 1.0) -> np.ndarray:
    s = spectral_index(R).s
    return -s * (s + 1.0) / (a * a)


def laplacian(x: SpectralField, a: float = 1.0) -> SpectralField:
    return SpectralField(x.R, x.coeffs * laplacian_eigenvalues(x.R, a))


def inv_laplacian(x: SpectralField, a: float = 1.0) -> SpectralField:
    return SpectralField(x.R, inv_laplacian_array(x.coeffs, x.R, a))


def inv_laplacian_array(c: np.ndarray, R: int, a: float = 1.0) -> np.ndarray:
    lam = laplacian_eigenvalues(R, a)
    out = np.zeros_like(c)
    out[..., 1:] = c[..., 1:] / lam[1:]
    return out


def uv_from_vortdiv(plan: TransformPlan, vort: SpectralField, div: SpectralField,
                    a: float = 1.0) -> tuple[GridField, GridField]:
    """Velocity components on the grid from vorticity and divergence."""
    if vort.R != plan.R or div.R != plan.R:
        raise ConfigurationError("vorticity/divergence truncation does not match plan")
    psi = inv_laplacian_array(vort.coeffs, plan.R, a)
    chi = inv_laplacian_array(div.coeffs, plan.R, a)
    U, V = plan.uv_cos(psi, chi)
    c = np.sqrt(plan.coslat2)[:, None] * a
    return (GridField(U / c, plan.mu, plan.weights),
            GridField(V / c, plan.mu, plan.weights))


def vortdiv_from_uv(plan: TransformPlan, u: GridField | np.ndarray,
                    v: GridField | np.ndarray, a: float = 1.0
                    ) -> tuple[SpectralField, SpectralField]:
    """Vorticity and divergence coefficients from grid velocity components."""
    u = u.values if isinstance(u, GridField) else np.asarray(u)
    v = v.values if isinstance(v, GridField) else np.asarray(v)
    plan._check_grid(u)
    plan._check_grid(v)
    c = np.sqrt(plan.coslat2)[:, None]
    curl, div = plan.curl_div_cos(u * c, v * c)
    return SpectralField(plan.R, curl / a), SpectralField(plan.R, div / a)
