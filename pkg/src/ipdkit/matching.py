"""One-to-one pairing of registered instance centers.

A cost matrix of Euclidean distances (real vs. transformed synthetic
centers) is fed to the Hungarian solver; assignments farther apart than
the gate distance are discarded rather than forced. Distances beyond the
gate enter the solve saturated at the gate value, so hopeless rows and
columns are interchangeable and can never pull a close pair apart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InputValidationError
from .geometry import AffineTransform2D, BBox, Point2, points_to_array, transform_points


def _is_partition(indices: list[int]) -> bool:
    return sorted(indices) == list(range(len(indices)))


@dataclass(frozen=True)
class InstancePairing:
    """Matched (real_index, synth_index, distance) triples plus the
    leftovers on each side.

    Pairs and the unmatched sets partition both index ranges; every pair's
    distance is within gate_distance.
    """

    pairs: tuple[tuple[int, int, float], ...]
    unmatched_real: tuple[int, ...]
    unmatched_synth: tuple[int, ...]
    gate_distance: float = math.inf

    def __post_init__(self):
        if not self.gate_distance > 0.0:
            raise InputValidationError("gate_distance must be positive")
        for _, _, d in self.pairs:
            if not 0.0 <= d <= self.gate_distance:
                raise InputValidationError(
                    f"pair distance {d} exceeds the gate {self.gate_distance}"
                )
        reals = [r for r, _, _ in self.pairs] + list(self.unmatched_real)
        synths = [s for _, s, _ in self.pairs] + list(self.unmatched_synth)
        if not _is_partition(reals) or not _is_partition(synths):
            raise InputValidationError(
                "pairs and unmatched sets must partition both index ranges"
            )


def assignment_min_cost(cost: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Minimum-total-cost assignment on a rectangular cost matrix.

    Returns (row_indices, col_indices) of the min(n_rows, n_cols) chosen
    cells, sorted by row. Among assignments of equal total cost the
    solver's pick is returned; only the total is guaranteed optimal.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise InputValidationError("cost must be a 2D matrix")
    if cost.size and not np.all(np.isfinite(cost)):
        raise InputValidationError("cost entries must be finite")
    rows, cols = linear_sum_assignment(cost)
    return rows, cols


def default_gate_distance(boxes: Sequence[BBox]) -> float:
    """Half the median box diagonal; a scale-aware cap on how far a pair's
    centers may sit apart after registration."""
    if not boxes:
        raise InputValidationError("default_gate_distance requires at least one box")
    diags = [math.hypot(b.w, b.h) for b in boxes]
    return 0.5 * float(np.median(diags))


def match_instances(
    transform: AffineTransform2D,
    synth_centers: Sequence[Point2] | np.ndarray,
    real_centers: Sequence[Point2] | np.ndarray,
    gate_distance: float = math.inf,
) -> InstancePairing:
    """Pair real instances with transformed synthetic instances.

    The assignment minimizes total center distance with distances capped
    at gate_distance; pairs still beyond the gate afterwards are split
    into the unmatched sets. The cap makes every beyond-gate cell equally
    expensive: a forced far assignment then never benefits from breaking
    up a within-gate pair (which the raw-distance optimum may do when one
    side has leftover instances).
    """
    if not (gate_distance > 0.0) or math.isnan(gate_distance):
        raise InputValidationError("gate_distance must be positive")
    synth = points_to_array(synth_centers)
    real = points_to_array(real_centers)
    if len(synth) == 0 or len(real) == 0:
        return InstancePairing(
            pairs=(),
            unmatched_real=tuple(range(len(real))),
            unmatched_synth=tuple(range(len(synth))),
            gate_distance=gate_distance,
        )

    moved = transform_points(transform, synth)
    diff = real[:, None, :] - moved[None, :, :]
    cost = np.sqrt((diff**2).sum(axis=2))
    solver_cost = cost if math.isinf(gate_distance) else np.minimum(cost, gate_distance)
    rows, cols = assignment_min_cost(solver_cost)

    pairs: list[tuple[int, int, float]] = []
    for r, s in zip(rows, cols):
        d = float(cost[r, s])
        if d <= gate_distance:
            pairs.append((int(r), int(s), d))

    matched_real = {r for r, _, _ in pairs}
    matched_synth = {s for _, s, _ in pairs}
    unmatched_real = tuple(i for i in range(len(real)) if i not in matched_real)
    unmatched_synth = tuple(j for j in range(len(synth)) if j not in matched_synth)
    return InstancePairing(
        pairs=tuple(pairs),
        unmatched_real=unmatched_real,
        unmatched_synth=unmatched_synth,
        gate_distance=gate_distance,
    )
