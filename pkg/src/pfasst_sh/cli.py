"""Command-line driver: run one benchmark with SDC, MLSDC or PFASST.

Every flag can also be set through an environment variable named
``PFASST_SH_<FLAG>`` (upper case, dashes as underscores), for example
``PFASST_SH_DT=200``. Command-line values win over the environment.

Example::

    python -m pfasst_sh --case gaussian --scheme sdc --rf 32 --dt 200 \\
        --tend 102400 --nodes 5 --sweeps 8 --out runs/ref
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import analysis
from .cases import CASES, default_params, initial_state
from .multilevel import SUPPORTED_PAIRS, coarse_truncation, make_pair, mlsdc_step
from .pfasst import BlockConfig, dump_message_log, run_pfasst
from .sdc import SUPPORTED_NODES, build_tables, sdc_step
from .spherical_harmonics import ConfigurationError
from .swe_rhs import PrognosticState, SWEProblem

log = logging.getLogger("pfasst_sh")

ENV_PREFIX = "PFASST_SH_"
SCHEMES = ("sdc", "mlsdc", "pfasst")
RUN_MODES = ("serial-emulation", "parallel", "threads")


@dataclasses.dataclass
class RunConfig:
    case: str = "gaussian"
    scheme: str = "sdc"
    rf: int = 32
    dt: float = 200.0
    tend: float | None = None
    nodes: int = 5
    coarse_nodes: int = 3
    iters: int = 4
    alpha: float = 0.5
    nts: int = 4
    nu: float | None = None
    mode: str = "serial-emulation"
    out: str = "pfasst_out"
    ref: str | None = None
    rnorm: int | None = None
    baseline_sweeps: int | None = None

    @property
    def num_steps(self) -> int:
        return int(round(self.tend / self.dt))

    def validate(self) -> None:
        """Reject inconsistent settings with a message saying how to fix them."""
        if self.case not in CASES:
            raise ConfigurationError(f"--case must be one of {CASES}")
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"--scheme must be one of {SCHEMES}")
        if self.rf < 1:
            raise ConfigurationError("--rf must be a positive truncation")
        if self.dt <= 0 or self.tend is None or self.tend <= 0:
            raise ConfigurationError("--dt and --tend must be positive")
        if self.nodes not in SUPPORTED_NODES:
            raise ConfigurationError(f"--nodes must be one of {SUPPORTED_NODES}")
        if self.iters < 1:
            raise ConfigurationError("--sweeps/--iters must be at least 1")
        if self.mode not in RUN_MODES:
            raise ConfigurationError(f"--mode must be one of {RUN_MODES}")
        if abs(self.tend / self.dt - self.num_steps) > 1e-9 * self.num_steps:
            raise ConfigurationError(
                f"--tend {self.tend} is not a multiple of --dt {self.dt}")
        if self.scheme != "sdc":
            pair = (self.nodes, self.coarse_nodes)
            if pair not in SUPPORTED_PAIRS:
                raise ConfigurationError(
                    f"unsupported node pair {pair}; supported (fine, coarse) pairs are "
                    f"{SUPPORTED_PAIRS}")
            coarse_truncation(self.rf, self.alpha)
        if self.scheme == "pfasst":
            if self.nts < 1:
                raise ConfigurationError("--nts must be at least 1")
            if self.num_steps % self.nts:
                raise ConfigurationError(
                    f"--tend must be a multiple of nts*dt = {self.nts * self.dt}; "
                    f"got {self.num_steps} steps for blocks of {self.nts}")
        if self.rnorm is not None and not 0 <= self.rnorm <= self.rf:
            raise ConfigurationError("--rnorm must lie in [0, rf]")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="pfasst-sh",
        description="Shallow-water benchmarks on the sphere with SDC, MLSDC and PFASST.")
    add = p.add_argument
    add("--case", choices=CASES, help="benchmark flow")
    add("--scheme", choices=SCHEMES, help="time integrator")
    add("--rf", type=int, help="fine spectral truncation")
    add("--dt", type=float, help="time step in seconds")
    add("--tend", type=float, help="simulated time in seconds (default: case horizon)")
    add("--nodes", type=int, help="fine Lobatto nodes M_f+1")
    add("--coarse-nodes", type=int, help="coarse Lobatto nodes M_c+1")
    add("--sweeps", "--iters", dest="iters", type=int,
        help="SDC sweeps, or MLSDC/PFASST iterations")
    add("--alpha", type=float, help="spatial coarsening ratio R_c/R_f")
    add("--nts", type=int, help="time steps per PFASST block")
    add("--nu", type=float, help="diffusion coefficient (default: case value)")
    add("--mode", choices=RUN_MODES, help="PFASST execution mode")
    add("--out", help="output directory")
    add("--ref", help="reference checkpoint (JSON) for the error table")
    add("--rnorm", type=int, help="largest total wavenumber in the error norm")
    add("--baseline-sweeps", type=int,
        help="N_S of the SDC baseline in the theoretical speedup (default: iterations)")
    add("-v", "--verbose", action="store_true", help="log progress")
    defaults = dataclasses.asdict(RunConfig())
    env = {}
    for action in p._actions:
        if action.dest in defaults:
            raw = os.environ.get(ENV_PREFIX + action.dest.upper())
            # string defaults go through the action's type conversion
            env[action.dest] = raw if raw is not None else defaults[action.dest]
    p.set_defaults(**env)
    return p


def parse_config(argv=None) -> tuple[RunConfig, argparse.Namespace]:
    ns = build_parser().parse_args(argv)
    fields = {f.name for f in dataclasses.fields(RunConfig)}
    cfg = RunConfig(**{k: v for k, v in vars(ns).items() if k in fields})
    if cfg.tend is None and cfg.case in CASES:
        cfg.tend = default_params(cfg.case)[1].t_end
    cfg.validate()
    return cfg, ns


def _problems(cfg: RunConfig):
    overrides = {} if cfg.nu is None else {"nu": cfg.nu}
    params, case_cfg = default_params(cfg.case, **overrides)
    fine = SWEProblem(cfg.rf, params)
    coarse = None
    if cfg.scheme != "sdc":
        R_c = coarse_truncation(cfg.rf, cfg.alpha)
        coarse = fine if R_c == cfg.rf else SWEProblem(R_c, params)
    return params, case_cfg, fine, coarse


def theoretical_speedup(cfg: RunConfig) -> float | None:
    if cfg.scheme != "pfasst":
        return None
    cp = analysis.CostParams(
        n_ts=cfg.nts, M_f=cfg.nodes - 1, M_c=cfg.coarse_nodes - 1, N_PF=cfg.iters,
        alpha=coarse_truncation(cfg.rf, cfg.alpha) / cfg.rf,
        N_S=cfg.baseline_sweeps or cfg.iters)
    return analysis.speedup_vs_sdc(cp)


def integrate(cfg: RunConfig, fine, coarse, u0: np.ndarray) -> tuple[np.ndarray, dict]:
    """Advance ``u0`` to ``cfg.tend``; returns the final state and diagnostics."""
    diag: dict = {"residuals": []}
    n = cfg.num_steps
    if cfg.scheme == "sdc":
        tables = build_tables(cfg.nodes)
        u = u0
        for step in range(n):
            res: list = []
            u = sdc_step(fine, u, cfg.dt, tables, cfg.iters, res)
            diag["residuals"].append(res)
            log.info("step %d/%d residual %.3e", step + 1, n, res[-1])
        return u, diag
    pair = make_pair(fine, coarse, cfg.nodes, cfg.coarse_nodes)
    if cfg.scheme == "mlsdc":
        u = u0
        for step in range(n):
            res = []
            u = mlsdc_step(u, cfg.dt, pair, cfg.iters, res)
            diag["residuals"].append(res)
            log.info("step %d/%d residual %.3e", step + 1, n, res[-1])
        return u, diag
    block = BlockConfig(pair, cfg.nts, cfg.dt, cfg.iters)
    mode = "processes" if cfg.mode == "parallel" else cfg.mode

    def on_block(b, res):
        log.info("block %d/%d last residual %.3e", b + 1, n // cfg.nts, res.residuals[-1][-1])

    u, results = run_pfasst(block, u0, n // cfg.nts, mode, on_block)
    diag["residuals"] = [r.residuals for r in results]
    diag["messages"] = [m for r in results for m in r.messages]
    diag["block_wall_seconds"] = [r.wall_seconds for r in results]
    return u, diag


def run(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    params, case_cfg, fine, coarse = _problems(cfg)
    u0 = initial_state(cfg.case, fine.plan, params, case_cfg).as_array()

    t0 = time.perf_counter()
    u, diag = integrate(cfg, fine, coarse, u0)
    wall = time.perf_counter() - t0

    final = PrognosticState.from_array(u, cfg.rf)
    final.dump(out / "final.json")
    analysis.write_spectrum(out / "spectrum.csv", u)
    if cfg.scheme == "pfasst":
        dump_message_log(diag.pop("messages"), out / "messages.jsonl")

    speedup = theoretical_speedup(cfg)
    if cfg.ref:
        ref = PrognosticState.load(cfg.ref)
        if ref.R != cfg.rf:
            raise ConfigurationError(
                f"reference truncation {ref.R} differs from --rf {cfg.rf}")
        rnorm = cfg.rf if cfg.rnorm is None else cfg.rnorm
        err = analysis.spectral_error(u, ref.as_array(), rnorm)
        analysis.write_error_table(out / "errors.csv", [dict(
            case=cfg.case, scheme=cfg.scheme, dt=cfg.dt, R_norm=rnorm,
            E_phi=err["phi"], E_vort=err["vort"], E_div=err["div"],
            wall_seconds=wall, theoretical_speedup="" if speedup is None else speedup)])

    meta = {
        "config": dataclasses.asdict(cfg),
        "model": dataclasses.asdict(params),
        "case_parameters": dataclasses.asdict(case_cfg),
        "case_defaults_from_external_benchmark": cfg.case in ("rossby", "galewsky"),
        "coarse_truncation": None if coarse is None else coarse.R,
        "grid": {"nlat": fine.plan.nlat, "nlon": fine.plan.nlon},
        "wall_seconds": wall,
        "theoretical_speedup_vs_sdc": speedup,
        **diag,
    }
    (out / "metadata.json").write_text(json.dumps(meta, indent=1))
    print(f"{cfg.scheme} {cfg.case} R={cfg.rf} dt={cfg.dt} steps={cfg.num_steps} "
          f"wall={wall:.2f}s -> {out}")
    return 0


def main(argv=None) -> int:
    try:
        cfg, ns = parse_config(argv)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return run(cfg)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
