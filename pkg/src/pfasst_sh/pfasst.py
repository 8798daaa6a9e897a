"""Two-level PFASST block scheduler.

Each time step of a block is owned by a :class:`Worker`. Workers talk only
through a communicator with two forward channels (``"fine"`` and
``"coarse"``) from worker ``n - 1`` to worker ``n``. The same worker code
runs under three executors:

``serial-emulation``
    one thread, fixed order (iteration, then worker, then step letter);
``threads``
    one thread per worker with blocking queues;
``processes``
    one long-lived forked process per worker (the ``parallel`` CLI mode).

All three produce bit-identical states and message logs.
"""

from __future__ import annotations

import collections
import dataclasses
import json
import multiprocessing as mp
import queue
import threading
import time
import traceback
from pathlib import Path

import numpy as np

from .multilevel import TransferPair, fas_correction, restrict_state
from .sdc import SpaceTimeState, collocation_residual, sweep

MODES = ("serial-emulation", "threads", "processes")
LEVELS = ("fine", "coarse")


class CommunicationError(RuntimeError):
    """A receive timed out or found no message; the block is aborted."""


@dataclasses.dataclass(frozen=True)
class BlockConfig:
    pair: TransferPair
    n_ts: int
    dt: float
    num_iters: int
    timeout: float = 600.0

    def __post_init__(self):
        if self.n_ts < 1 or self.num_iters < 1:
            raise ValueError("need n_ts >= 1 and at least one iteration")


@dataclasses.dataclass(frozen=True)
class Message:
    iteration: int
    sender: int
    receiver: int
    level: str
    node: int

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self))


@dataclasses.dataclass
class BlockResult:
    """Final fine values per step, residual history and the message log.

    ``residuals[n][k]`` is the fine collocation residual of worker ``n``
    after the fine sweep of iteration ``k + 1``.
    """

    states: list
    residuals: list
    messages: list
    wall_seconds: float = 0.0

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def dump_message_log(messages, path) -> None:
    Path(path).write_text("".join(m.to_json() + "\n" for m in messages))


# -- communicators -------------------------------------------------------------

class _Comm:
    """Shared bookkeeping: a per-worker log of sends in program order."""

    def __init__(self, rank: int, n_ts: int):
        self.rank = rank
        self.n_ts = n_ts
        self.log: list[Message] = []

    @property
    def has_next(self) -> bool:
        return self.rank < self.n_ts - 1

    def send(self, level: str, data: np.ndarray, iteration: int, node: int) -> None:
        self.log.append(Message(iteration, self.rank, self.rank + 1, level, node))
        self._put(level, np.array(data, copy=True))

    def recv(self, level: str) -> np.ndarray:
        return self._get(level)


class DequeComm(_Comm):
    def __init__(self, rank, n_ts, channels):
        super().__init__(rank, n_ts)
        self.channels = channels

    def _put(self, level, data):
        self.channels[(self.rank + 1, level)].append(data)

    def _get(self, level):
        box = self.channels[(self.rank, level)]
        if not box:
            raise CommunicationError(
                f"worker {self.rank}: no {level} message pending in serial schedule")
        return box.popleft()


class QueueComm(_Comm):
    def __init__(self, rank, n_ts, channels, timeout):
        super().__init__(rank, n_ts)
        self.channels = channels
        self.timeout = timeout

    def _put(self, level, data):
        self.channels[(self.rank + 1, level)].put(data)

    def _get(self, level):
        try:
            return self.channels[(self.rank, level)].get(timeout=self.timeout)
        except queue.Empty:
            raise CommunicationError(
                f"worker {self.rank}: timed out after {self.timeout}s waiting for "
                f"{level} message (deadlock?)") from None


# -- worker ---------------------------------------------------------------------

class Worker:
    """State and schedule of the worker owning one time step of a block."""

    def __init__(self, rank: int, config: BlockConfig):
        self.rank = rank
        self.config = config
        self.fine: SpaceTimeState | None = None
        self.coarse: SpaceTimeState | None = None
        self.residuals: list[float] = []

    @property
    def pair(self) -> TransferPair:
        return self.config.pair

    def predict(self, u0: np.ndarray, comm: _Comm) -> None:
        """Serial coarse sweeps, then increment interpolation to the fine level."""
        pair, dt = self.pair, self.config.dt
        cp = pair.coarse.problem
        self.residuals = []
        coarse = SpaceTimeState.spread(cp, pair.restrict_space(u0), pair.coarse.num_nodes)
        base = coarse.u.copy()
        for j in range(self.rank + 1):
            if j > 0:
                coarse.u[0] = comm.recv("coarse")
                coarse.reevaluate(cp, [0])
            sweep(cp, coarse, dt, pair.coarse.tables)
            if comm.has_next:
                comm.send("coarse", coarse.u[-1], 0, pair.coarse.tables.M)
        nf = pair.fine.num_nodes
        u = np.tile(u0, (nf,) + (1,) * u0.ndim) + pair.interpolate(coarse.u - base)
        fine = SpaceTimeState(u, np.empty_like(u), np.empty_like(u))
        fine.reevaluate(pair.fine.problem)
        self.fine = fine
        self.coarse = coarse

    def iterate(self, k: int, comm: _Comm) -> None:
        """Iteration ``k`` (1-based) of the two-level PFASST cycle."""
        pair, dt = self.pair, self.config.dt
        fp, cp = pair.fine.problem, pair.coarse.problem
        fine = self.fine
        # A: fine sweep
        sweep(fp, fine, dt, pair.fine.tables)
        self.residuals.append(collocation_residual(fine, dt, pair.fine.tables))
        if k == self.config.num_iters:
            return
        if comm.has_next:
            comm.send("fine", fine.u[-1], k, pair.fine.tables.M)
        # B: restrict, re-evaluate, save, FAS
        coarse = restrict_state(fine, pair)
        saved = coarse.copy()
        tau = fas_correction(fine, coarse, dt, pair)
        # C: new coarse initial condition, coarse sweep, send
        if self.rank > 0:
            coarse.u[0] = comm.recv("coarse")
        coarse.reevaluate(cp, [0])
        sweep(cp, coarse, dt, pair.coarse.tables, tau)
        if comm.has_next:
            comm.send("coarse", coarse.u[-1], k, pair.coarse.tables.M)
        # D: interpolate coarse increments, new fine initial condition
        du = pair.interpolate(coarse.u - saved.u)
        fine.u += du
        fine.fi += pair.interpolate(coarse.fi - saved.fi)
        fine.fe += pair.interpolate(coarse.fe - saved.fe)
        if self.rank > 0:
            # the node-0 increment is taken relative to the received value;
            # measuring it against the old initial value counts the fine
            # update twice and makes the iteration diverge
            q0 = comm.recv("fine")
            fine.u[0] = q0 + pair.interpolate_space(coarse.u[0] - pair.restrict_space(q0))
        fine.reevaluate(fp, [0])
        self.coarse = coarse

    def run(self, u0: np.ndarray, comm: _Comm) -> tuple[np.ndarray, list[float]]:
        self.predict(u0, comm)
        for k in range(1, self.config.num_iters + 1):
            self.iterate(k, comm)
        return self.fine.u[-1].copy(), list(self.residuals)


def _broadcast_log(n_ts: int) -> list[Message]:
    return [Message(0, 0, n, "fine", 0) for n in range(1, n_ts)]


def _merge_logs(logs: list[list[Message]]) -> list[Message]:
    """Canonical order: iteration, then sender, then program order."""
    keyed = [(m.iteration, m.sender, i, m) for log in logs for i, m in enumerate(log)]
    keyed.sort(key=lambda t: t[:3])
    return [t[3] for t in keyed]


# -- executors ------------------------------------------------------------------

class SerialEmulation:
    """Deterministic single-threaded schedule, steppable for inspection."""

    def __init__(self, config: BlockConfig):
        self.config = config
        self.workers = [Worker(n, config) for n in range(config.n_ts)]
        self.channels = collections.defaultdict(collections.deque)
        self.comms = [DequeComm(n, config.n_ts, self.channels) for n in range(config.n_ts)]

    def predict(self, u0: np.ndarray) -> None:
        for w, c in zip(self.workers, self.comms):
            c.log.clear()
            w.predict(u0, c)

    def iterate(self, k: int) -> None:
        for w, c in zip(self.workers, self.comms):
            w.iterate(k, c)

    def run_block(self, u0: np.ndarray) -> BlockResult:
        t0 = time.perf_counter()
        self.channels.clear()
        self.predict(u0)
        for k in range(1, self.config.num_iters + 1):
            self.iterate(k)
        if any(self.channels.values()):
            raise CommunicationError("undelivered messages at end of block")
        return BlockResult(
            [w.fine.u[-1].copy() for w in self.workers],
            [list(w.residuals) for w in self.workers],
            _broadcast_log(self.config.n_ts) + _merge_logs([c.log for c in self.comms]),
            time.perf_counter() - t0)

    def close(self) -> None:
        pass


class ThreadExecutor:
    """One thread per worker, blocking queues between neighbours."""

    def __init__(self, config: BlockConfig):
        self.config = config
        self.workers = [Worker(n, config) for n in range(config.n_ts)]

    def run_block(self, u0: np.ndarray) -> BlockResult:
        cfg = self.config
        t0 = time.perf_counter()
        channels = {(n, lev): queue.Queue() for n in range(cfg.n_ts) for lev in LEVELS}
        comms = [QueueComm(n, cfg.n_ts, channels, cfg.timeout) for n in range(cfg.n_ts)]
        results: list = [None] * cfg.n_ts
        errors: list = []

        def target(n):
            try:
                results[n] = self.workers[n].run(u0, comms[n])
            except Exception as exc:  # surfaced below
                errors.append((n, exc))

        threads = [threading.Thread(target=target, args=(n,), daemon=True)
                   for n in range(cfg.n_ts)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        if errors:
            n, exc = errors[0]
            raise CommunicationError(f"worker {n} failed: {exc!r}") from exc
        return BlockResult(
            [r[0] for r in results], [r[1] for r in results],
            _broadcast_log(cfg.n_ts) + _merge_logs([c.log for c in comms]),
            time.perf_counter() - t0)

    def close(self) -> None:
        pass


def _process_main(rank, config, commands, results, channels):
    worker = Worker(rank, config)
    comm = QueueComm(rank, config.n_ts, channels, config.timeout)
    while True:
        u0 = commands.get()
        if u0 is None:
            return
        comm.log = []
        try:
            final, res = worker.run(u0, comm)
            results.put((rank, final, res, comm.log, None))
        except Exception:
            results.put((rank, None, None, None, traceback.format_exc()))


class ProcessExecutor:
    """Long-lived forked worker processes, reused across blocks."""

    def __init__(self, config: BlockConfig):
        self.config = config
        ctx = mp.get_context("fork")
        n = config.n_ts
        self.channels = {(r, lev): ctx.Queue() for r in range(n) for lev in LEVELS}
        self.commands = [ctx.Queue() for _ in range(n)]
        self.results = ctx.Queue()
        self.procs = [ctx.Process(target=_process_main,
                                  args=(r, config, self.commands[r], self.results,
                                        self.channels), daemon=True)
                      for r in range(n)]
        for p in self.procs:
            p.start()

    def run_block(self, u0: np.ndarray) -> BlockResult:
        cfg = self.config
        t0 = time.perf_counter()
        for q in self.commands:
            q.put(u0)
        out = [None] * cfg.n_ts
        for _ in range(cfg.n_ts):
            try:
                rank, final, res, log, err = self.results.get(timeout=cfg.timeout)
            except queue.Empty:
                self.close()
                raise CommunicationError("worker processes did not finish the block") from None
            if err is not None:
                self.close()
                raise CommunicationError(f"worker {rank} failed:\n{err}")
            out[rank] = (final, res, log)
        return BlockResult(
            [o[0] for o in out], [o[1] for o in out],
            _broadcast_log(cfg.n_ts) + _merge_logs([o[2] for o in out]),
            time.perf_counter() - t0)

    def close(self) -> None:
        for q in self.commands:
            q.put(None)
        for p in self.procs:
            p.join(timeout=5)
            if p.is_alive():
                p.terminate()
        self.procs = []

    def __del__(self):
        if getattr(self, "procs", None):
            self.close()


def make_executor(config: BlockConfig, mode: str = "serial-emulation"):
    if mode == "parallel":
        mode = "processes"
    try:
        cls = {"serial-emulation": SerialEmulation, "threads": ThreadExecutor,
               "processes": ProcessExecutor}[mode]
    except KeyError:
        raise ValueError(f"unknown execution mode {mode!r}; choose from {MODES}") from None
    return cls(config)


def run_block(config: BlockConfig, u0: np.ndarray, mode: str = "serial-emulation"
              ) -> BlockResult:
    """Solve one block of ``n_ts`` steps starting from ``u0``."""
    ex = make_executor(config, mode)
    try:
        return ex.run_block(u0)
    finally:
        ex.close()


def run_pfasst(config: BlockConfig, u0: np.ndarray, num_blocks: int,
               mode: str = "serial-emulation", on_block=None) -> tuple[np.ndarray, list]:
    """Chain ``num_blocks`` blocks; returns the final state and block results."""
    ex = make_executor(config, mode)
    results = []
    u = u0
    try:
        for b in range(num_blocks):
            res = ex.run_block(u)
            results.append(res)
            u = res.final
            if on_block is not None:
                on_block(b, res)
    finally:
        ex.close()
    return u, results
