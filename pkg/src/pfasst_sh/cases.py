"""Initial conditions for the three benchmark flows.

Default parameters follow the published benchmark definitions (Williamson
et al. 1992 for the Rossby-Haurwitz wave, Galewsky et al. 2004 for the
barotropic jet). The Gaussian-dome width is a free parameter, ``width``.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from scipy import integrate

from .spherical_harmonics import TransformPlan, vortdiv_from_uv
from .swe_rhs import ModelParams, PrognosticState, SWEProblem, DIV

CASES = ("gaussian", "rossby", "galewsky")


@dataclasses.dataclass(frozen=True)
class GaussianDome:
    hbar: float = 29400.0
    amplitude: float = 6000.0
    width: float = 10.0
    lon_c: float = np.pi
    lat_c: float = np.pi / 4
    nu: float = 1e5
    t_end: float = 102400.0


@dataclasses.dataclass(frozen=True)
class RossbyHaurwitz:
    omega_rh: float = 7.848e-6
    K: float = 7.848e-6
    wavenumber: int = 4
    h0: float = 8000.0
    nu: float = 1e5
    t_end: float = 102400.0


@dataclasses.dataclass(frozen=True)
class Galewsky:
    umax: float = 80.0
    lat0: float = np.pi / 7
    lat1: float = np.pi / 2 - np.pi / 7
    hmean: float = 10000.0
    bump: float = 120.0
    bump_lat: float = np.pi / 4
    bump_alpha: float = 1.0 / 3.0
    bump_beta: float = 1.0 / 15.0
    nu: float = 1e5
    t_end: float = 144 * 3600.0


def _grids(plan: TransformPlan):
    lon, lat = np.meshgrid(plan.lons, plan.lats)
    return lon, lat


def default_params(case: str, **overrides) -> tuple[ModelParams, object]:
    """Model constants and case parameters for ``case``."""
    base = ModelParams()
    try:
        cfg = {"gaussian": GaussianDome, "rossby": RossbyHaurwitz,
               "galewsky": Galewsky}[case]()
    except KeyError:
        raise ValueError(f"unknown case {case!r}; choose one of {CASES}") from None
    case_fields = {f.name for f in dataclasses.fields(cfg)}
    cfg = dataclasses.replace(cfg, **{k: v for k, v in overrides.items() if k in case_fields})
    h = getattr(cfg, {"gaussian": "hbar", "rossby": "h0", "galewsky": "hmean"}[case])
    model = {k: v for k, v in overrides.items() if k in {"a", "omega", "g", "nu"}}
    model.setdefault("nu", cfg.nu)
    g = model.get("g", base.g)
    return dataclasses.replace(base, phibar=g * h, **model), cfg


def init_gaussian_dome(plan: TransformPlan, params: ModelParams,
                       cfg: GaussianDome = GaussianDome()) -> PrognosticState:
    """Fluid at rest with a Gaussian bump in the height field."""
    lon, lat = _grids(plan)
    a = params.a
    x = a * (np.cos(lon) * np.cos(lat) - np.cos(cfg.lon_c) * np.cos(cfg.lat_c))
    y = a * (np.sin(lon) * np.cos(lat) - np.sin(cfg.lon_c) * np.cos(cfg.lat_c))
    z = a * (np.sin(lat) - np.sin(cfg.lat_c))
    d2 = x * x + y * y + z * z
    h = cfg.hbar + cfg.amplitude * np.exp(-cfg.width * d2 / (a * a))
    phi = plan.anal(params.g * h)
    zero = np.zeros_like(phi)
    return PrognosticState.from_array(np.stack([phi, zero, zero.copy()]), plan.R)


def init_rossby_haurwitz(plan: TransformPlan, params: ModelParams,
                         cfg: RossbyHaurwitz = RossbyHaurwitz()) -> PrognosticState:
    """Wavenumber-``R`` Rossby-Haurwitz wave (Williamson test case 6)."""
    lon, lat = _grids(plan)
    a, Om, g = params.a, params.omega, params.g
    w, K, R = cfg.omega_rh, cfg.K, cfg.wavenumber
    c = np.cos(lat)
    s = np.sin(lat)
    vort = 2 * w * s - K * s * c ** R * (R * R + 3 * R + 2) * np.cos(R * lon)
    A = (0.5 * w * (2 * Om + w) * c * c
         + 0.25 * K * K * c ** (2 * R) * ((R + 1) * c * c + (2 * R * R - R - 2)
                                         - 2 * R * R / (c * c)))
    B = (2 * (Om + w) * K / ((R + 1) * (R + 2)) * c ** R
         * ((R * R + 2 * R + 2) - (R + 1) ** 2 * c * c))
    C = 0.25 * K * K * c ** (2 * R) * ((R + 1) * c * c - (R + 2))
    h = cfg.h0 + a * a / g * (A + B * np.cos(R * lon) + C * np.cos(2 * R * lon))
    phi = plan.anal(g * h)
    zeta = plan.anal(vort)
    return PrognosticState.from_array(np.stack([phi, zeta, np.zeros_like(phi)]), plan.R)


def galewsky_u(lat: np.ndarray, cfg: Galewsky = Galewsky()) -> np.ndarray:
    lat = np.asarray(lat, dtype=float)
    en = np.exp(-4.0 / (cfg.lat1 - cfg.lat0) ** 2)
    inside = (lat > cfg.lat0) & (lat < cfg.lat1)
    out = np.zeros_like(lat)
    li = lat[inside]
    out[inside] = cfg.umax / en * np.exp(1.0 / ((li - cfg.lat0) * (li - cfg.lat1)))
    return out


def init_galewsky(plan: TransformPlan, params: ModelParams,
                  cfg: Galewsky = Galewsky()) -> PrognosticState:
    """Balanced mid-latitude jet plus a localized height perturbation."""
    a, Om, g = params.a, params.omega, params.g

    def dh(lat):
        u = galewsky_u(np.array([lat]), cfg)[0]
        return -a * u * (2 * Om * np.sin(lat) + np.tan(lat) * u / a) / g

    # height from gradient-wind balance, integrated from the south pole
    # the jet has compact support, so integrate only across [lat0, lat1]
    pts = np.concatenate([[cfg.lat0], np.clip(plan.lats, cfg.lat0, cfg.lat1)])
    seg = [integrate.quad(dh, lo, hi, epsabs=1e-12, limit=200)[0] if hi > lo else 0.0
           for lo, hi in zip(pts[:-1], pts[1:])]
    h_lat = np.cumsum(seg)
    lon, lat = _grids(plan)
    h = np.broadcast_to(h_lat[:, None], lon.shape).copy()
    # shift to the prescribed global mean
    h += cfg.hmean - np.sum(plan.weights * h[:, 0]) / 2.0
    if cfg.bump:
        lam = np.where(lon > np.pi, lon - 2 * np.pi, lon)
        h += (cfg.bump * np.cos(lat) * np.exp(-(lam / cfg.bump_alpha) ** 2)
              * np.exp(-((cfg.bump_lat - lat) / cfg.bump_beta) ** 2))
    u = np.broadcast_to(galewsky_u(plan.lats, cfg)[:, None], lon.shape)
    vort, div = vortdiv_from_uv(plan, u, np.zeros_like(u), a)
    phi = plan.anal(g * h)
    return PrognosticState.from_array(
        np.stack([phi, vort.coeffs, np.zeros_like(phi)]), plan.R)


def initial_state(case: str, plan: TransformPlan, params: ModelParams,
                  cfg=None) -> PrognosticState:
    init = {"gaussian": init_gaussian_dome, "rossby": init_rossby_haurwitz,
            "galewsky": init_galewsky}[case]
    if cfg is None:
        _, cfg = default_params(case)
    return init(plan, params, cfg)


def balance_residual(problem: SWEProblem, state: PrognosticState) -> float:
    """Max divergence tendency of ``state``, for balance checks."""
    x = state.as_array()
    return float(np.max(np.abs((problem.eval_fi(x) + problem.eval_fe(x))[DIV])))
