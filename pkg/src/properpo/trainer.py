"""Synthetic preference data and a tabular policy trained by gradient descent."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core_math import sigmoid
from .pipeline import PipelineSpec, objective, objective_and_grad, softmax
from .proper_loss import check_F_condition


class TrainingDivergence(RuntimeError):
    def __init__(self, message, step):
        super().__init__(message)
        self.step = step


@dataclass
class TabularPolicy:
    logits: np.ndarray

    @property
    def probs(self) -> np.ndarray:
        return softmax(self.logits)

    def copy(self) -> "TabularPolicy":
        return TabularPolicy(self.logits.copy())


@dataclass
class SyntheticTask:
    """Ground-truth rewards, the link that generated preferences and the data.

    ``triples`` rows are ``(x, winner, loser)``; ``abstentions`` counts draws in
    which neither action was chosen.  ``pi_ref`` is the reference policy.
    """

    rewards: np.ndarray
    F_gen: Callable
    seed: int
    triples: np.ndarray
    abstentions: int
    pi_ref: np.ndarray
    draws: int = 0

    @property
    def m(self) -> int:
        return self.rewards.shape[0]

    @property
    def n(self) -> int:
        return self.rewards.shape[1]

    def expected_data(self) -> tuple[np.ndarray, np.ndarray]:
        """Every ordered pair ``(x, i, j)``, weighted by the probability that a
        uniformly drawn state and unordered pair yields ``i`` beating ``j``."""
        m, n = self.rewards.shape
        rows, wts = [], []
        n_pairs = n * (n - 1) / 2
        for x in range(m):
            for i in range(n):
                for j in range(n):
                    if i == j:
                        continue
                    p = float(self.F_gen(np.array(self.rewards[x, i] - self.rewards[x, j])))
                    rows.append((x, i, j))
                    wts.append(p / (m * n_pairs))
        return np.asarray(rows, dtype=int), np.asarray(wts)


def generate(rewards, F_gen: Callable = sigmoid, n_samples: int = 1000, seed: int = 0,
             pi_ref=None) -> SyntheticTask:
    """Draw ``n_samples`` comparisons: a uniform state, a uniform unordered pair
    of distinct actions, then an outcome from ``F_gen`` of the reward gap.

    With probability ``1 - F(z) - F(-z)`` the draw is an abstention; such draws
    produce no triple and are counted.
    """
    rewards = np.atleast_2d(np.asarray(rewards, dtype=float))
    m, n = rewards.shape
    if n < 2:
        raise ValueError("need at least two actions")
    fc = check_F_condition(F_gen)
    if not fc.passed:
        raise ValueError(f"F_gen violates F(z) + F(-z) <= 1 at z = {fc.worst_z:g}")
    rng = np.random.default_rng(seed)
    x = rng.integers(0, m, size=n_samples)
    i = rng.integers(0, n, size=n_samples)
    j = (i + rng.integers(1, n, size=n_samples)) % n
    z = rewards[x, i] - rewards[x, j]
    p_i = np.asarray(F_gen(z), dtype=float)
    p_j = np.asarray(F_gen(-z), dtype=float)
    u = rng.random(n_samples)
    i_wins = u < p_i
    j_wins = (u >= p_i) & (u < p_i + p_j)
    win = np.where(i_wins, i, j)
    lose = np.where(i_wins, j, i)
    keep = i_wins | j_wins
    triples = np.stack([x, win, lose], axis=1)[keep]
    if pi_ref is None:
        pi_ref = np.full((m, n), 1.0 / n)
    pi_ref = np.atleast_2d(np.asarray(pi_ref, dtype=float))
    return SyntheticTask(rewards, F_gen, seed, triples, int(np.count_nonzero(~keep)), pi_ref,
                         n_samples)


@dataclass
class TraceRow:
    step: int
    objective: float
    grad_norm: float
    accuracy: float


@dataclass
class TrainResult:
    policy: TabularPolicy
    trace: list = field(default_factory=list)
    final_lr: float = 0.0


def train(spec: PipelineSpec, task: SyntheticTask, steps: int = 500, lr: float = 1.0,
          expected: bool = False, init: Optional[np.ndarray] = None,
          log_every: int = 1, tol: float = 0.0) -> TrainResult:
    """Gradient descent on the policy logits.

    A step that increases the objective, or makes it non-finite, is retried
    with half the learning rate.  ``expected=True`` trains on the exact
    expected objective instead of the sampled triples.  An objective that is
    non-finite at the start, or stays non-finite once the step has shrunk
    below ``1e-12``, raises :class:`TrainingDivergence` with the step index.
    """
    if expected:
        triples, weights = task.expected_data()
    else:
        triples, weights = task.triples, None

    def value_and_grad(logits):
        try:
            return objective_and_grad(spec, logits, task.pi_ref, triples, weights)
        except ValueError:
            return np.nan, None

    logits = np.log(task.pi_ref).copy() if init is None else np.array(init, dtype=float)
    policy = TabularPolicy(logits)
    trace = []
    value, grad = value_and_grad(policy.logits)
    if not np.isfinite(value):
        raise TrainingDivergence(f"objective is {value} at step 0", 0)
    for step in range(steps + 1):
        gnorm = float(np.linalg.norm(grad))
        if step % log_every == 0 or step == steps:
            acc = evaluate(policy, task, spec)["accuracy"]
            trace.append(TraceRow(step, value, gnorm, acc))
        if step == steps or lr == 0.0 or gnorm <= tol:
            break
        while True:
            cand = policy.logits - lr * grad
            c_val, c_grad = value_and_grad(cand)
            if np.isfinite(c_val) and c_val <= value:
                break
            if lr < 1e-12:
                if not np.isfinite(c_val):
                    raise TrainingDivergence(f"objective is {c_val} at step {step + 1}", step + 1)
                break
            lr /= 2.0
        policy = TabularPolicy(cand)
        value, grad = c_val, c_grad
    return TrainResult(policy, trace, lr)


def implied_reward_diffs(spec: PipelineSpec, policy: TabularPolicy, pi_ref) -> np.ndarray:
    """``D[x, i, j] = G_i(pi) - G_i(pi_ref) - G_j(pi) + G_j(pi_ref)`` for every state."""
    g = spec.lb.G(policy.probs) - spec.lb.G(np.atleast_2d(pi_ref))
    return g[:, :, None] - g[:, None, :]


def evaluate(policy: TabularPolicy, task: SyntheticTask, spec: PipelineSpec,
             margin: float = 0.0) -> dict:
    """Pairwise ranking accuracy, reward-difference correlation and objective.

    Accuracy counts pairs ``i < j`` with ``|r_i - r_j| >= margin`` (and nonzero) whose implied
    reward difference has the sign of the true one; ties in the implied
    difference count as half.
    """
    D = implied_reward_diffs(spec, policy, task.pi_ref)
    R = task.rewards[:, :, None] - task.rewards[:, None, :]
    iu = np.triu_indices(task.n, k=1)
    d = D[:, iu[0], iu[1]].ravel()
    r = R[:, iu[0], iu[1]].ravel()
    sel = (np.abs(r) >= margin) & (np.abs(r) > 0)
    if np.any(sel):
        agree = np.sign(d[sel]) == np.sign(r[sel])
        ties = d[sel] == 0
        acc = float(np.mean(np.where(ties, 0.5, agree.astype(float))))
    else:
        acc = float("nan")
    if np.std(d) > 0 and np.std(r) > 0:
        corr = float(np.corrcoef(d, r)[0, 1])
    else:
        corr = float("nan")
    obj = float("nan")
    if task.triples.shape[0]:
        obj = objective(spec, policy.probs, task.pi_ref, task.triples)
    return {"accuracy": acc, "correlation": corr, "objective": obj}


def write_trace(trace: list, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "objective", "grad_norm", "accuracy"])
        for row in trace:
            w.writerow([row.step, repr(row.objective), repr(row.grad_norm), repr(row.accuracy)])
