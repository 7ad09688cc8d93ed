"""Turning expert state sequences into subgoal supervision.

``pip_parse`` asks the current lower primitive which demo states it can
actually reach from where it stands and cuts the demo at the farthest such
states; ``fixed_window_parse`` cuts every ``k`` states regardless of the
primitive.  ``brute_force_parse`` is an independent, slow re-implementation of
the PIP walk used as a test oracle.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import GoalEnv, InvalidStateError

PARSERS = ("pip", "window")


class EmptyDatasetError(RuntimeError):
    """Every demo was skipped during repopulation."""


@dataclass
class StepMeter:
    """Counts environment interactions spent on relabeling rollouts."""

    steps: int = 0

    def charge(self, n: int) -> None:
        self.steps += int(n)


@dataclass(frozen=True)
class SubgoalTransition:
    initial_state: np.ndarray
    subgoal: np.ndarray
    final_goal: np.ndarray
    verified: bool = True
    demo: int = -1
    start: int = 0
    end: int = 0

    def to_json(self) -> dict:
        return {
            "initial_state": self.initial_state.tolist(),
            "subgoal": self.subgoal.tolist(),
            "final_goal": self.final_goal.tolist(),
            "verified": self.verified,
            "demo": self.demo,
            "start": self.start,
            "end": self.end,
        }

    @classmethod
    def from_json(cls, d: dict) -> "SubgoalTransition":
        return cls(
            np.array(d["initial_state"], dtype=np.float64),
            np.array(d["subgoal"], dtype=np.float64),
            np.array(d["final_goal"], dtype=np.float64),
            bool(d["verified"]),
            int(d["demo"]),
            int(d["start"]),
            int(d["end"]),
        )


def _emit(demo, env, start, end, verified, demo_index):
    return SubgoalTransition(
        np.array(demo.states[start], dtype=np.float64),
        env.achieved_goal(demo.states[end]),
        np.array(demo.goal, dtype=np.float64),
        verified,
        demo_index,
        start,
        end,
    )


# ------------------------------------------------------------------ reachability


def reach_batch(env: GoalEnv, lower, start_state, targets: np.ndarray, c: int, delta: float):
    """Roll ``lower`` deterministically from ``start_state`` toward each target for at most ``c`` steps.

    Returns ``(reached, steps)``: per target, whether it came within
    ``delta`` and how many steps were taken (rollouts stop once reached).
    """
    env.reset_to(start_state)
    n = len(targets)
    states = np.repeat(np.asarray(start_state, dtype=np.float64)[None, :], n, axis=0)
    reached = np.zeros(n, dtype=bool)
    steps = np.zeros(n, dtype=np.int64)
    for _ in range(c):
        live = ~reached
        if not live.any():
            break
        idx = np.flatnonzero(live)
        a, _ = env.clamp_actions(lower.act_batch(states[idx], targets[idx], True))
        nxt, _ = env.transition(states[idx], a)
        states[idx] = nxt
        steps[idx] += 1
        d = np.linalg.norm(env.batch_achieved_goal(nxt) - targets[idx], axis=1)
        reached[idx] = d <= delta
    return reached, steps


def _walk(n_states, first_failure):
    """The PIP walk over a demo of ``n_states`` states.

    ``first_failure(j, i0)`` returns the first index ``i >= i0`` not reachable
    from demo state ``j`` (or ``None``).  Yields ``(start, end, verified)``.
    """
    last = n_states - 1
    j = 0
    i = 1
    failed_any = False
    while i <= last:
        f = first_failure(j, i)
        if f is None:
            break
        failed_any = True
        if f - 1 == j:
            # even the next demo state is out of reach: step over it unverified
            yield j, f, False
            j = f
        else:
            yield j, f - 1, True
            j = f - 1
        i = f + 1
    if failed_any and j != last:
        yield j, last, True


def pip_parse(demo, lower, env: GoalEnv, c: int, delta: float, meter: StepMeter | None = None,
              demo_index: int = -1) -> list[SubgoalTransition]:
    """Primitive-informed parse of one demo with the lower primitive in deterministic mode.

    Only the rollouts the sequential walk actually performs are charged to
    ``meter``, although a whole remaining tail is simulated in one batch.
    """
    states = np.asarray(demo.states, dtype=np.float64)
    goals = env.batch_achieved_goal(states)
    env.validate_state(states[0])

    def first_failure(j, i0):
        reached, steps = reach_batch(env, lower, states[j], goals[i0:], c, delta)
        miss = np.flatnonzero(~reached)
        f = None if len(miss) == 0 else i0 + int(miss[0])
        if meter is not None:
            upto = len(reached) if f is None else f - i0 + 1
            meter.charge(steps[:upto].sum())
        return f

    return [_emit(demo, env, s, e, v, demo_index) for s, e, v in _walk(len(states), first_failure)]


def brute_force_parse(demo, lower, env: GoalEnv, c: int, delta: float) -> list[SubgoalTransition]:
    """Oracle: simulate every ``(s_j, s_i)`` pair from scratch with single steps, then walk."""
    states = np.asarray(demo.states, dtype=np.float64)
    n = len(states)
    reach = np.zeros((n, n), dtype=bool)
    for j in range(n):
        for i in range(j + 1, n):
            target = env.achieved_goal(states[i])
            env.reset_to(states[j])
            s = states[j]
            for _ in range(c):
                s = env.step(lower.act(s, target, True)).next_state
                if np.linalg.norm(env.achieved_goal(s) - target) <= delta:
                    reach[j, i] = True
                    break

    def first_failure(j, i0):
        miss = np.flatnonzero(~reach[j, i0:])
        return None if len(miss) == 0 else i0 + int(miss[0])

    return [_emit(demo, env, s, e, v, -1) for s, e, v in _walk(n, first_failure)]


def fixed_window_parse(demo, k: int, env: GoalEnv, demo_index: int = -1) -> list[SubgoalTransition]:
    """Cut the demo into full windows of ``k`` states; a demo shorter than one window gives one transition to its end."""
    if k < 1:
        raise ValueError(f"window size must be >= 1, got {k}")
    last = len(demo.states) - 1
    if k > last:
        return [_emit(demo, env, 0, last, True, demo_index)]
    return [_emit(demo, env, s, s + k, True, demo_index) for s in range(0, last - k + 1, k)]


# ------------------------------------------------------------------ dataset


@dataclass
class SubgoalDataset:
    transitions: list[SubgoalTransition] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.transitions)

    @property
    def epoch(self) -> int:
        return int(self.provenance.get("epoch", -1))

    def arrays(self):
        """``(initial_states, subgoals, final_goals)`` stacked for sampling."""
        if not self.transitions:
            raise EmptyDatasetError("subgoal dataset is empty")
        if getattr(self, "_arrays", None) is None:
            self._arrays = (
                np.stack([t.initial_state for t in self.transitions]),
                np.stack([t.subgoal for t in self.transitions]),
                np.stack([t.final_goal for t in self.transitions]),
            )
        return self._arrays

    def subgoals_per_demo(self) -> float:
        if not self.transitions:
            return 0.0
        n = self.provenance.get("demos_parsed") or len({t.demo for t in self.transitions})
        return len(self.transitions) / max(1, n)

    def lower_pairs(self, demos, env: GoalEnv, verified_only: bool = True):
        """Consecutive demo state pairs inside parsed segments, each tagged with its segment's subgoal.

        Returns ``(states, subgoals, actions)`` with actions inferred from the state pairs.
        """
        s, g, a = [], [], []
        for t in self.transitions:
            if verified_only and not t.verified:
                continue
            traj = demos[t.demo].states
            for k in range(t.start, t.end):
                s.append(traj[k])
                g.append(t.subgoal)
                a.append(env.infer_action(np.asarray(traj[k]), np.asarray(traj[k + 1])))
        if not s:
            return None
        return np.array(s, dtype=np.float64), np.array(g, dtype=np.float64), np.array(a, dtype=np.float64)


def repopulate(
    previous: SubgoalDataset | None,
    demos,
    lower,
    env: GoalEnv,
    parser: str,
    epoch: int,
    c: int = 1,
    delta: float | None = None,
    k: int = 5,
    meter: StepMeter | None = None,
    checkpoint_id: str = "",
) -> SubgoalDataset:
    """Fresh parse of every demo with the current primitive; the old dataset is dropped wholesale."""
    if parser not in PARSERS:
        raise ValueError(f"parser must be one of {PARSERS}, got {parser!r}")
    if previous is not None and previous.provenance and epoch <= previous.epoch:
        raise ValueError(f"repopulation epoch {epoch} does not advance past {previous.epoch}")
    delta = env.delta if delta is None else delta
    out, parsed, skipped = [], 0, 0
    for idx, demo in enumerate(demos):
        try:
            if parser == "pip":
                out.extend(pip_parse(demo, lower, env, c, delta, meter, demo_index=idx))
            else:
                out.extend(fixed_window_parse(demo, k, env, demo_index=idx))
            parsed += 1
        except InvalidStateError as exc:
            skipped += 1
            warnings.warn(f"demo {idx} skipped: {exc}", stacklevel=2)
    if parsed == 0:
        raise EmptyDatasetError(f"all {skipped} demos were skipped")
    prov = {
        "epoch": int(epoch),
        "checkpoint": checkpoint_id,
        "parser": parser if parser == "pip" else f"window-{k}",
        "demos_parsed": parsed,
        "demos_skipped": skipped,
    }
    return SubgoalDataset(out, prov)


def save_subgoals(ds: SubgoalDataset, path) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps({"version": 1, "count": len(ds), "provenance": ds.provenance}) + "\n")
        for t in ds.transitions:
            fh.write(json.dumps(t.to_json()) + "\n")


def load_subgoals(path) -> SubgoalDataset:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty file, expected a header line")
    head = json.loads(lines[0])
    if head.get("version") != 1:
        raise ValueError(f"{path}: unsupported version {head.get('version')}")
    body = [SubgoalTransition.from_json(json.loads(line)) for line in lines[1:] if line.strip()]
    if len(body) != head["count"]:
        raise ValueError(f"{path}: header promises {head['count']} transitions, found {len(body)}")
    return SubgoalDataset(body, head["provenance"])
