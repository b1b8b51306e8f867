"""Markov chain stepping: propose, accept, and track (q, Q).

``q`` is the position wrapped into the configuration space, ``Q`` the
unperiodized displacement built from accepted increments. Each step consumes
exactly one (G, U) pair, Gaussian first, from the chain's ``RngStream`` at the
counter equal to the step index.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from ._io import write_csv, write_json
from .accept import AcceptanceRule, acceptance_probability
from .model import Model1D, wrap_position
from .parallel import block_ranges, map_blocks
from .proposal import Proposal, _raise_for_status, propose
from .rng import RngStream

__all__ = [
    "ChainState",
    "Trajectory",
    "RecordPolicy",
    "RecordMode",
    "EnsembleResult",
    "LengthNotDivisible",
    "initial_state",
    "step",
    "run_trajectory",
    "run_ensemble",
    "coarsen_increments",
    "write_trajectory_csv",
    "write_accumulators_json",
]

ENSEMBLE_BLOCK = 256


class LengthNotDivisible(ValueError):
    pass


@dataclass(frozen=True)
class ChainState:
    q: float
    Q: float
    n_steps: int = 0
    n_accepted: int = 0
    sum_one_minus_A: float = 0.0
    sum_two_A_minus_one: float = 0.0
    sum_abs_two_A_minus_one: float = 0.0

    def accumulators(self) -> dict:
        n = self.n_steps
        mean = (lambda s: s / n) if n else (lambda s: 0.0)
        return {
            "n_steps": n,
            "n_accepted": self.n_accepted,
            "mean_one_minus_A": mean(self.sum_one_minus_A),
            "mean_two_A_minus_one": mean(self.sum_two_A_minus_one),
            "mean_abs_two_A_minus_one": mean(self.sum_abs_two_A_minus_one),
        }


def initial_state(model: Model1D, q0: float) -> ChainState:
    q = wrap_position(model.space, q0)
    return ChainState(q=q, Q=q)


class RecordMode(enum.Enum):
    NONE = "none"
    EVERY = "every"
    INCREMENTS = "increments"


@dataclass(frozen=True)
class RecordPolicy:
    """What ``run_trajectory`` keeps: nothing, every m-th state, or all increments."""

    mode: RecordMode = RecordMode.NONE
    stride: int = 1

    def __post_init__(self):
        if self.stride < 1:
            raise ValueError(f"record stride must be >= 1, got {self.stride}")

    @classmethod
    def none(cls) -> "RecordPolicy":
        return cls(RecordMode.NONE)

    @classmethod
    def every(cls, m: int = 1) -> "RecordPolicy":
        return cls(RecordMode.EVERY, m)

    @classmethod
    def increments(cls) -> "RecordPolicy":
        return cls(RecordMode.INCREMENTS)


@dataclass
class Trajectory:
    """Recorded output of one chain.

    ``steps[i]`` is the step index of ``states[i]`` and ``displacements[i]``.
    ``increments`` holds one entry per step (zero for rejections) when recorded.
    """

    dt: float
    steps: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    states: np.ndarray = field(default_factory=lambda: np.empty(0))
    displacements: np.ndarray = field(default_factory=lambda: np.empty(0))
    increments: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.states)


def step(state: ChainState, proposal: Proposal, rule: AcceptanceRule, model: Model1D,
         dt: float, G: float, U: float) -> ChainState:
    out = propose(proposal, model, state.q, G, dt)
    A = float(acceptance_probability(rule, out.alpha))
    accepted = U <= A
    q, Q = state.q, state.Q
    if accepted:
        Q = Q + (out.q_proposed - state.q)
        q = wrap_position(model.space, out.q_proposed)
    return ChainState(
        q=q,
        Q=Q,
        n_steps=state.n_steps + 1,
        n_accepted=state.n_accepted + int(accepted),
        sum_one_minus_A=state.sum_one_minus_A + (1.0 - A),
        sum_two_A_minus_one=state.sum_two_A_minus_one + (2.0 * A - 1.0),
        sum_abs_two_A_minus_one=state.sum_abs_two_A_minus_one + abs(2.0 * A - 1.0),
    )


def _kernel_args(proposal: Proposal, rule: AcceptanceRule, model: Model1D, dt: float):
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    kind, dk = proposal.codes()
    return (kind, rule.code, model.potential.code, dk, model.beta, model.space.code,
            float(dt), proposal.tol, proposal.max_iter)


def run_trajectory(proposal: Proposal, rule: AcceptanceRule, model: Model1D, dt: float,
                   n_steps: int, rng: RngStream, record: RecordPolicy | None = None,
                   state: ChainState | float = 0.0) -> tuple[ChainState, Trajectory]:
    """Run one chain for ``n_steps`` steps starting from ``state``.

    ``state`` may be a ChainState (continued, drawing counters from its
    ``n_steps`` onwards) or a starting position.
    """
    if n_steps < 0:
        raise ValueError(f"n_steps must be >= 0, got {n_steps}")
    record = record or RecordPolicy.none()
    if not isinstance(state, ChainState):
        state = initial_state(model, state)
    args = _kernel_args(proposal, rule, model, dt)
    stride = 0
    if record.mode is RecordMode.EVERY:
        stride = record.stride
    elif record.mode is RecordMode.INCREMENTS:
        stride = 1
    n_rec = n_steps // stride + 1 if stride else 0
    rec_q = np.empty((1, max(n_rec, 1)))
    rec_qq = np.empty((1, max(n_rec, 1)))
    q, qq, nacc, s1, s2, s3, status = K.run_chains(
        *args, np.uint64(rng.seed), rng.substream, np.array([rng.stream_id], dtype=np.uint64),
        np.array([state.q]), n_steps, state.n_steps, stride, rec_q, rec_qq)
    _raise_for_status(status, dt)
    offset = state.Q - state.q
    new = ChainState(
        q=float(q[0]),
        Q=float(qq[0]) + offset,
        n_steps=state.n_steps + n_steps,
        n_accepted=state.n_accepted + int(nacc[0]),
        sum_one_minus_A=state.sum_one_minus_A + float(s1[0]),
        sum_two_A_minus_one=state.sum_two_A_minus_one + float(s2[0]),
        sum_abs_two_A_minus_one=state.sum_abs_two_A_minus_one + float(s3[0]),
    )
    traj = Trajectory(dt=float(dt))
    if n_steps == 0:
        return new, traj
    if stride:
        traj.steps = state.n_steps + stride * np.arange(n_rec, dtype=np.int64)
        traj.states = rec_q[0, :n_rec].copy()
        traj.displacements = rec_qq[0, :n_rec] + offset
        if record.mode is RecordMode.INCREMENTS:
            traj.increments = np.diff(rec_qq[0, :n_rec])
    return new, traj


def coarsen_increments(G_ref, k: int) -> np.ndarray:
    """Block sums of ``k`` consecutive Gaussians divided by sqrt(k)."""
    G_ref = np.asarray(G_ref, dtype=float)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if G_ref.shape[0] % k:
        raise LengthNotDivisible(f"length {G_ref.shape[0]} is not divisible by k={k}")
    return G_ref.reshape(-1, k).sum(axis=1) / math.sqrt(k)


@dataclass
class EnsembleResult:
    """Final states and optional recordings of independent chains."""

    q: np.ndarray
    Q: np.ndarray
    n_accepted: np.ndarray
    sum_one_minus_A: np.ndarray
    sum_two_A_minus_one: np.ndarray
    sum_abs_two_A_minus_one: np.ndarray
    rec_q: np.ndarray | None = None
    rec_Q: np.ndarray | None = None


def _ensemble_block(args, seed, substream, stream_ids, q0, n_steps, step_offset, stride):
    n = len(q0)
    n_rec = n_steps // stride + 1 if stride else 1
    rec_q = np.empty((n, n_rec))
    rec_qq = np.empty((n, n_rec))
    out = K.run_chains(*args, np.uint64(seed), substream, stream_ids, q0, n_steps,
                       step_offset, stride, rec_q, rec_qq)
    return out, (rec_q, rec_qq) if stride else None


def run_ensemble(proposal: Proposal, rule: AcceptanceRule, model: Model1D, dt: float,
                 n_steps: int, seed: int, q0, stream_ids=None, substream: int = 0,
                 step_offset: int = 0, record_stride: int = 0, workers: int | None = None,
                 block: int = ENSEMBLE_BLOCK) -> EnsembleResult:
    """Independent chains started at ``q0``; chain i uses stream ``stream_ids[i]``."""
    q0 = np.ascontiguousarray(q0, dtype=float)
    n = q0.shape[0]
    if stream_ids is None:
        stream_ids = np.arange(n, dtype=np.uint64)
    stream_ids = np.ascontiguousarray(stream_ids, dtype=np.uint64)
    if stream_ids.shape != q0.shape:
        raise ValueError("stream_ids and q0 must have the same length")
    args = _kernel_args(proposal, rule, model, dt)
    tasks = [(args, seed, substream, stream_ids[a:b], q0[a:b], n_steps, step_offset, record_stride)
             for a, b in block_ranges(n, block)]
    parts = map_blocks(_ensemble_block, tasks, workers)
    for (out, _) in parts:
        _raise_for_status(out[6], dt)
    cat = [np.concatenate([p[0][i] for p in parts]) if parts else np.empty(0) for i in range(6)]
    res = EnsembleResult(*cat)
    if record_stride and parts:
        res.rec_q = np.concatenate([p[1][0] for p in parts])
        res.rec_Q = np.concatenate([p[1][1] for p in parts])
    return res


def write_trajectory_csv(path, traj: Trajectory) -> None:
    write_csv(path, ["step", "q", "Q"],
              zip((int(s) for s in traj.steps), traj.states, traj.displacements))


def write_accumulators_json(path, state: ChainState) -> None:
    write_json(path, state.accumulators())
