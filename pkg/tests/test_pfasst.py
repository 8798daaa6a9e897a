import json
import queue

import numpy as np
import pytest

from pfasst_sh.multilevel import make_pair
from pfasst_sh.pfasst import (BlockConfig, CommunicationError, Message, QueueComm,
                              SerialEmulation, dump_message_log, make_executor,
                              run_block, run_pfasst)
from pfasst_sh.sdc import build_tables, sdc_step
from pfasst_sh.swe_rhs import SWEProblem


@pytest.fixture(scope="module")
def coarse8(dome15):
    return SWEProblem(8, dome15[0].params)


def _config(dome15, coarse, n_ts=4, iters=3, dt=100.0):
    return BlockConfig(make_pair(dome15[0], coarse, 5, 3), n_ts, dt, iters)


def test_executors_agree_bitwise(dome15, coarse8):
    cfg = _config(dome15, coarse8)
    u0 = dome15[1]
    ref = run_block(cfg, u0, "serial-emulation")
    for mode in ("threads", "processes"):
        out = run_block(cfg, u0, mode)
        assert all(np.array_equal(a, b) for a, b in zip(ref.states, out.states))
        assert out.messages == ref.messages
        assert out.residuals == ref.residuals


def test_message_log_counts(dome15, coarse8):
    res = run_block(_config(dome15, coarse8, n_ts=4, iters=3), dome15[1])
    msgs = res.messages
    # broadcast 3, prediction 1+2+3, then fine+coarse from 3 senders in 2 iterations
    assert len(msgs) == 3 + 6 + 12
    assert all(m.receiver == m.sender + 1 for m in msgs if m.iteration > 0)
    assert [m.iteration for m in msgs] == sorted(m.iteration for m in msgs)
    assert {m.level for m in msgs if m.iteration == 0 and m.sender > 0} == {"coarse"}
    assert not any(m.iteration == 3 for m in msgs)


def test_message_log_json(tmp_path):
    msgs = [Message(1, 0, 1, "fine", 4), Message(1, 0, 1, "coarse", 2)]
    dump_message_log(msgs, tmp_path / "m.jsonl")
    lines = (tmp_path / "m.jsonl").read_text().splitlines()
    assert json.loads(lines[1]) == {"iteration": 1, "sender": 0, "receiver": 1,
                                    "level": "coarse", "node": 2}


def test_single_step_equals_sdc(dome15):
    problem, u0 = dome15
    cfg = BlockConfig(make_pair(problem, problem, 5, 5), 1, 100.0, 3)
    out = run_block(cfg, u0).final
    ref = sdc_step(problem, u0, 100.0, build_tables(5), 6)
    assert np.max(np.abs(out - ref)) <= 1e-12 * np.max(np.abs(ref))


def test_chained_single_step_blocks_match_serial_run(dome15):
    problem, u0 = dome15
    cfg = BlockConfig(make_pair(problem, problem, 3, 3), 1, 100.0, 2)
    u, results = run_pfasst(cfg, u0, 3)
    ref = u0
    for _ in range(3):
        ref = sdc_step(problem, ref, 100.0, build_tables(3), 4)
    assert len(results) == 3
    assert np.max(np.abs(u - ref)) <= 1e-12 * np.max(np.abs(ref))


def test_converges_to_serial_collocation(dome15, coarse8):
    problem, u0 = dome15
    cfg = _config(dome15, coarse8, n_ts=4, iters=12)
    out = run_block(cfg, u0)
    ref = u0
    for _ in range(4):
        ref = sdc_step(problem, ref, 100.0, build_tables(5), 30)
    for k in range(3):
        assert np.max(np.abs(out.final[k] - ref[k])) < 1e-9 * np.max(np.abs(ref[k]))


def test_more_iterations_reduce_error(dome15, coarse8):
    problem, u0 = dome15
    ref = u0
    for _ in range(4):
        ref = sdc_step(problem, ref, 100.0, build_tables(5), 30)
    errs = [np.max(np.abs(run_block(_config(dome15, coarse8, iters=k), u0).final - ref))
            for k in (2, 5, 8)]
    assert errs[0] > errs[1] > errs[2]


def test_serial_emulation_is_steppable(dome15, coarse8):
    cfg = _config(dome15, coarse8, n_ts=2, iters=2)
    ex = SerialEmulation(cfg)
    ex.predict(dome15[1])
    ex.iterate(1)
    ex.iterate(2)
    assert [len(w.residuals) for w in ex.workers] == [2, 2]
    assert np.array_equal(ex.workers[-1].fine.u[-1], run_block(cfg, dome15[1]).final)


def test_receive_timeout_signals_deadlock():
    channels = {(r, lev): queue.Queue() for r in range(2) for lev in ("fine", "coarse")}
    comm = QueueComm(1, 2, channels, timeout=0.05)
    with pytest.raises(CommunicationError):
        comm.recv("fine")


def test_invalid_block_and_mode(dome15, coarse8):
    with pytest.raises(ValueError):
        BlockConfig(make_pair(dome15[0], coarse8, 5, 3), 0, 100.0, 2)
    with pytest.raises(ValueError):
        make_executor(_config(dome15, coarse8), "mpi")
