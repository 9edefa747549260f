"""
Trajectory Sampler Service - exact skeleton-chain sampling of gamma (L_B - I)
Holding times are exponential with rate gamma(x), drawn by inverse CDF from counter-based
Philox streams; the next word is ax with probability kernel(x, a)
"""

from dataclasses import dataclass
from typing import Iterable, Optional
import logging

import numpy as np
import pandas as pd

from core.config import get_settings
from core.exceptions import ArgumentError
from models.fields import KernelField, Measure, PotentialField, require_same_space
from models.trajectory import EmpiricalMeasure, Trajectory

logger = logging.getLogger(__name__)


def trajectory_stream(seed: int, *path: int) -> np.random.Generator:
    """Independent stream for the work item identified by (seed, *path)"""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *path])))


class _UniformBuffer:
    """Uniform draws fetched from the generator in fixed-size chunks"""

    def __init__(self, rng: np.random.Generator, chunk: int):
        self.rng = rng
        self.chunk = chunk
        self.values = rng.random(chunk)
        self.position = 0

    def next(self) -> float:
        if self.position == self.chunk:
            self.values = self.rng.random(self.chunk)
            self.position = 0
        value = self.values[self.position]
        self.position += 1
        return float(value)

    def next_positive(self) -> float:
        """Uniform on (0, 1); a zero draw would give a zero holding time"""
        value = self.next()
        while value == 0.0:
            value = self.next()
        return value


def sample_word(measure: Measure, rng: np.random.Generator) -> int:
    """One word drawn from a probability by inverse CDF"""
    cumulative = np.cumsum(measure.mass)
    return int(min(np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right"), measure.space.size - 1))


def sample_path(
    gamma: PotentialField,
    kernel: KernelField,
    x0: int,
    T: float,
    rng: np.random.Generator,
) -> Trajectory:
    """Skeleton-chain path on [0, T] drawn from an explicit generator"""
    space = require_same_space(gamma, kernel)
    if gamma.min() <= 0.0:
        raise ArgumentError("rates must be strictly positive")
    if not kernel.is_normalized:
        raise ArgumentError("simulation needs a normalized kernel")
    if T < 0:
        raise ArgumentError(f"time horizon must be nonnegative, got {T}")
    if not 0 <= x0 < space.size:
        raise ArgumentError(f"word index {x0} outside 0..{space.size - 1}")

    cumulative = np.cumsum(kernel.weights, axis=1)
    table = space.preimage_table
    rates = gamma.values
    draws = _UniformBuffer(rng, get_settings().montecarlo.chunk)

    times, states = [], [x0]
    t, x = 0.0, x0
    while True:
        t += -np.log1p(-draws.next_positive()) / rates[x]
        if t > T:
            break
        symbol = int(np.searchsorted(cumulative[x], draws.next() * cumulative[x, -1], side="right"))
        x = int(table[x, min(symbol, space.d - 1)])
        times.append(t)
        states.append(x)
    return Trajectory(space, x0, np.array(times), np.array(states), float(T))


def simulate(
    gamma: PotentialField,
    kernel: KernelField,
    x0: int,
    T: float,
    seed: int,
    index: int = 0,
) -> Trajectory:
    """
    Exact path of the chain gamma (L_kernel - I) from x0 over [0, T]

    Args:
        gamma: positive rates
        kernel: normalized kernel
        x0: start word index
        T: horizon
        seed: root seed
        index: trajectory number; stream (seed, index) makes every path reproducible alone

    Returns:
        Trajectory
    """
    return sample_path(gamma, kernel, x0, T, trajectory_stream(seed, index))


def empirical_measure(traj: Trajectory) -> EmpiricalMeasure:
    """Exact occupation fractions of a trajectory"""
    if traj.horizon <= 0.0:
        raise ArgumentError("empirical measure needs a positive horizon")
    words, durations = traj.segments()
    occupation = np.bincount(words, weights=durations, minlength=traj.space.size)
    return EmpiricalMeasure(traj.space, occupation / occupation.sum(), traj.horizon)


def time_integral(traj: Trajectory, f: PotentialField) -> float:
    """int_0^T f(X_s) ds for the piecewise-constant path"""
    require_same_space(traj, f)
    words, durations = traj.segments()
    return float(np.dot(durations, f.values[words]))


def jump_sum(traj: Trajectory, G: PotentialField) -> float:
    """Sum of G at the parent word of every clock ring"""
    require_same_space(traj, G)
    return float(G.values[traj.states[:-1]].sum())


def log_rn(
    traj: Trajectory,
    A_kernel: KernelField,
    gamma_tilde: PotentialField,
    kernel_tilde: KernelField,
) -> float:
    """
    log dP_tilde / dP on the path, against the a-priori chain with unit rate

    Each ring at parent x with symbol a adds log w_tilde(x, a) + log gamma_tilde(x)
    - log w_A(x, a); the holding part subtracts int (gamma_tilde - 1) ds.
    """
    require_same_space(traj, A_kernel, gamma_tilde, kernel_tilde)
    parents = traj.states[:-1]
    symbols = traj.jump_symbols
    per_jump = (
        kernel_tilde.log_weights[parents, symbols]
        + np.log(gamma_tilde.values[parents])
        - A_kernel.log_weights[parents, symbols]
    )
    return float(per_jump.sum() - time_integral(traj, gamma_tilde - 1.0))


def trajectory_frame(traj: Trajectory) -> pd.DataFrame:
    """Path as a table of (time, word_index, word), starting with (0, x0)"""
    times = np.concatenate(([0.0], traj.jump_times))
    return pd.DataFrame(
        {
            "time": times,
            "word_index": traj.states,
            "word": [traj.space.label(int(x)) for x in traj.states],
        }
    )


@dataclass
class TransitionStatistics:
    """Pooled transition counts and occupation times over a set of paths"""

    counts: np.ndarray  # rings per (word, symbol)
    occupation: np.ndarray  # time spent per word

    @property
    def exits(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def empirical_kernel(self) -> np.ndarray:
        exits = np.maximum(self.exits, 1)
        return self.counts / exits[:, None]

    @property
    def rate_estimates(self) -> np.ndarray:
        """Rings per unit time at each word (inverse of the mean holding time)"""
        return np.divide(self.exits, self.occupation, out=np.zeros_like(self.occupation), where=self.occupation > 0)

    def kernel_z_scores(self, kernel: KernelField) -> np.ndarray:
        """Binomial z-scores of the symbol frequencies at words with at least one ring"""
        p = kernel.weights
        n = self.exits[:, None]
        spread = np.sqrt(np.maximum(p * (1.0 - p), 1e-300) / np.maximum(n, 1))
        z = (self.empirical_kernel - p) / spread
        return np.where(n > 0, z, 0.0)

    def rate_z_scores(self, gamma: PotentialField) -> np.ndarray:
        """Poisson z-scores of the ring counts given the time spent at each word"""
        expected = gamma.values * self.occupation
        return np.divide(
            self.exits - expected, np.sqrt(expected), out=np.zeros_like(expected), where=expected > 0
        )


def transition_statistics(trajectories: Iterable[Trajectory]) -> TransitionStatistics:
    counts, occupation = None, None
    for traj in trajectories:
        if counts is None:
            counts = np.zeros((traj.space.size, traj.space.d))
            occupation = np.zeros(traj.space.size)
        np.add.at(counts, (traj.states[:-1], traj.jump_symbols), 1.0)
        words, durations = traj.segments()
        occupation += np.bincount(words, weights=durations, minlength=traj.space.size)
    if counts is None:
        raise ArgumentError("transition statistics need at least one trajectory")
    return TransitionStatistics(counts, occupation)
