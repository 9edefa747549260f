"""
Trajectory Models - sampled paths of continuous-time chains on depth-k words
A path is its skeleton: the visited words and the times of the clock rings
"""

from dataclasses import dataclass
from typing import Any, Dict, Tuple

import numpy as np

from core.exceptions import ArgumentError
from models.cylinder_space import CylinderSpace
from models.fields import Measure


@dataclass(frozen=True, eq=False)
class Trajectory:
    """
    Path on [0, horizon] started at x0

    states[n] is the word held after the n-th clock ring (states[0] = x0) and
    jump_times[n-1] the time of that ring. Rings that reproduce the same word are kept.
    """

    space: CylinderSpace
    x0: int
    jump_times: np.ndarray
    states: np.ndarray
    horizon: float

    def __post_init__(self):
        times = np.array(self.jump_times, dtype=float)
        states = np.array(self.states, dtype=int)
        if self.horizon < 0:
            raise ArgumentError(f"horizon must be nonnegative, got {self.horizon}")
        if states.size != times.size + 1 or states[0] != self.x0:
            raise ArgumentError("states must start at x0 and hold one word per ring plus one")
        if times.size and (np.any(np.diff(times) <= 0.0) or times[0] <= 0.0 or times[-1] > self.horizon):
            raise ArgumentError("jump times must increase strictly within (0, horizon]")
        if np.any(states < 0) or np.any(states >= self.space.size):
            raise ArgumentError("state index outside the word range")
        parents, children = states[:-1], states[1:]
        if np.any(children // self.space.d != parents % (self.space.size // self.space.d)):
            raise ArgumentError("every transition must go from x to a preimage ax")
        times.setflags(write=False)
        states.setflags(write=False)
        object.__setattr__(self, "jump_times", times)
        object.__setattr__(self, "states", states)

    @property
    def n_jumps(self) -> int:
        return int(self.jump_times.size)

    @property
    def jump_symbols(self) -> np.ndarray:
        """0-based symbol a - 1 prepended at each ring"""
        return self.states[1:] % self.space.d

    def segments(self) -> Tuple[np.ndarray, np.ndarray]:
        """
        Piecewise-constant decomposition of the path

        Returns:
            Tuple of (words, durations), durations summing to the horizon
        """
        edges = np.concatenate(([0.0], self.jump_times, [self.horizon]))
        return self.states, np.diff(edges)

    def to_document(self) -> Dict[str, Any]:
        return {
            **self.space.to_document(),
            "x0": self.x0,
            "jump_times": self.jump_times.tolist(),
            "states": self.states.tolist(),
            "horizon": self.horizon,
        }

    @classmethod
    def from_document(cls, doc: Dict[str, Any]) -> "Trajectory":
        return cls(
            CylinderSpace.from_document(doc),
            int(doc["x0"]),
            doc["jump_times"],
            doc["states"],
            float(doc["horizon"]),
        )

    def __repr__(self):
        return f"<Trajectory({self.space!r}, jumps={self.n_jumps}, horizon={self.horizon})>"


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure(Measure):
    """Occupation-time distribution of one trajectory"""

    horizon: float = 0.0

    def to_document(self) -> Dict[str, Any]:
        return {**super().to_document(), "horizon": self.horizon}

    @classmethod
    def from_document(cls, doc: Dict[str, Any]) -> "EmpiricalMeasure":
        return cls(CylinderSpace.from_document(doc), doc["mass"], float(doc["horizon"]))
