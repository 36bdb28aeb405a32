"""Execution-horizon policies driven by per-round refinement-update magnitudes.

Chunked action generation refines the whole chunk over K iterative steps. The
size of the update each action receives at the final step is a free confidence
signal: an action still moving at the last step is one the model is unsure
about. The confidence-threshold policy walks the chunk front to back and cuts
the horizon just before the first action whose final update is out of line
with that action's earlier updates. A static policy ignores the magnitudes
and returns a fixed horizon.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

DEFAULT_THRESHOLD = 0.4
DEFAULT_MIN_HORIZON = 5

STATIC = "static"
CONFIDENCE_THRESHOLD = "confidence_threshold"


@dataclass(frozen=True, eq=False)
class UpdateMagnitudes:
    """K x N matrix of per-step, per-action update magnitudes.

    Entry [k, n] is the L2 norm of the update applied to action n at
    refinement step k. Traces store these scalar norms rather than raw update
    vectors; the policy needs nothing more. At least two steps are required so
    the final step has earlier steps to be compared against.
    """

    u: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.u, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"update magnitudes must be 2-D (K x N), got shape {arr.shape}")
        k, n = arr.shape
        if k < 2:
            raise ValueError(f"need at least 2 refinement steps, got {k}")
        if n < 1:
            raise ValueError("chunk size must be >= 1")
        if not np.all(np.isfinite(arr)):
            raise ValueError("update magnitudes must be finite")
        if np.any(arr < 0):
            raise ValueError("update magnitudes must be >= 0")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "u", arr)

    @property
    def steps(self) -> int:
        return self.u.shape[0]

    @property
    def chunk_size(self) -> int:
        return self.u.shape[1]


@dataclass(frozen=True)
class HorizonPolicyConfig:
    """Either a fixed horizon or a confidence threshold with a floor.

    kind: "static" uses `static_h` (capped at the chunk size); the
    confidence policy trips on the first action whose final update exceeds
    (1 + threshold) times the mean of its earlier updates and never returns
    less than `min_horizon`.
    """

    kind: str
    static_h: int = 0
    threshold: float = DEFAULT_THRESHOLD
    min_horizon: int = DEFAULT_MIN_HORIZON

    def __post_init__(self) -> None:
        if self.kind not in (STATIC, CONFIDENCE_THRESHOLD):
            raise ValueError(f"unknown horizon policy kind {self.kind!r}")
        if self.kind == STATIC and self.static_h < 1:
            raise ValueError(f"static horizon must be >= 1, got {self.static_h}")
        if self.kind == CONFIDENCE_THRESHOLD:
            if self.threshold < 0:
                raise ValueError(f"threshold must be >= 0, got {self.threshold}")
            if self.min_horizon < 1:
                raise ValueError(f"min_horizon must be >= 1, got {self.min_horizon}")

    @classmethod
    def static(cls, horizon: int) -> "HorizonPolicyConfig":
        return cls(kind=STATIC, static_h=horizon)

    @classmethod
    def confidence(
        cls,
        threshold: float = DEFAULT_THRESHOLD,
        min_horizon: int = DEFAULT_MIN_HORIZON,
    ) -> "HorizonPolicyConfig":
        return cls(kind=CONFIDENCE_THRESHOLD, threshold=threshold, min_horizon=min_horizon)

    @property
    def floor(self) -> int:
        """Smallest horizon this policy can return (before chunk-size capping)."""
        return self.static_h if self.kind == STATIC else self.min_horizon


def decide_horizon(cfg: HorizonPolicyConfig, magnitudes: UpdateMagnitudes) -> int:
    """Map one round's update magnitudes to the execution horizon.

    Confidence policy: for action n (front to back), compare the final-step
    update f_n against the mean m_n of all earlier steps. The first n with
    f_n > (1 + t) * m_n marks the unconverged boundary; the horizon is the
    converged prefix length n - 1, floored at min_horizon and capped at the
    chunk size. If no action trips, the whole chunk is converged.

    A zero m_n with a positive f_n trips (movement after stillness); a zero
    f_n never trips.
    """
    n_actions = magnitudes.chunk_size
    if cfg.kind == STATIC:
        return min(cfg.static_h, n_actions)

    u = magnitudes.u
    earlier_mean = u[:-1].mean(axis=0)
    final = u[-1]
    trips = final > (1.0 + cfg.threshold) * earlier_mean
    if trips.any():
        h_thresh = int(np.argmax(trips))
    else:
        h_thresh = n_actions
    return min(max(h_thresh, cfg.min_horizon), n_actions)


def sweep_thresholds(
    cfgs: Sequence[HorizonPolicyConfig],
    magnitude_sequence: Iterable[UpdateMagnitudes],
) -> list[float]:
    """Mean decided horizon of each config over a sequence of rounds.

    The mean horizon is the efficiency proxy for parameter sweeps: longer
    horizons mean fewer inference rounds for the same number of actions.
    """
    seq = list(magnitude_sequence)
    if not cfgs:
        raise ValueError("no policy configurations given")
    if not seq:
        raise ValueError("no update-magnitude rounds given")
    return [
        sum(decide_horizon(cfg, mags) for mags in seq) / len(seq) for cfg in cfgs
    ]
