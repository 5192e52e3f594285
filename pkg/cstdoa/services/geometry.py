"""Direction of arrival, bearing triangulation, and analytic TDOA for simulated scenarios."""

import logging
import math
from typing import List, Sequence, Tuple

import numpy as np

from cstdoa.exceptions import (
    DegenerateGeometryError,
    InadmissibleDelayError,
    UnsupportedTrajectoryError,
)
from cstdoa.models import Point, Scenario, SensorPair, TriangulationResult
from cstdoa.services.sigsim import source_position

logger = logging.getLogger(__name__)

# Relative slack on |c tau| <= d before a delay counts as inadmissible
ADMISSIBLE_SLACK = 1e-12
# Condition number above which bearing lines count as parallel
MAX_CONDITION = 1e10


def doa_from_tdoa(tau: float, spacing: float, speed_of_sound: float) -> float:
    """
    Plane-wave arrival angle theta = arccos(c tau / d) in [0, pi].

    theta is measured from the baseline direction pointing from the
    non-reference sensor to the reference sensor; tau = d / c (endfire)
    gives 0, tau = 0 (broadside) gives pi/2.

    Raises:
        InadmissibleDelayError: |c tau| > d
    """
    ratio = speed_of_sound * tau / spacing
    if abs(ratio) > 1.0 + ADMISSIBLE_SLACK:
        raise InadmissibleDelayError(
            f"delay {tau:.6g} s exceeds the {spacing:g} m baseline travel time "
            f"{spacing / speed_of_sound:.6g} s"
        )
    return math.acos(max(-1.0, min(1.0, ratio)))


def analytic_tdoa(scn: Scenario, sensor: int, t) -> np.ndarray:
    """
    (|source(t) - p_i| - |source(t) - p_0|) / c for closed-form trajectories.

    Raises:
        UnsupportedTrajectoryError: file-backed path trajectory
    """
    if scn.trajectory.kind == "path":
        raise UnsupportedTrajectoryError("analytic TDOA needs a circle or static trajectory")
    sx, sy = source_position(scn.trajectory, t)
    px, py = scn.sensors[sensor]
    rx, ry = scn.sensors[0]
    return (np.hypot(sx - px, sy - py) - np.hypot(sx - rx, sy - ry)) / scn.speed_of_sound


def bearing_direction(pair: SensorPair, theta: float, source_side: int = 1) -> np.ndarray:
    """
    Unit vector from the pair midpoint toward the source.

    source_side +1 picks the half-plane toward +y of the baseline (toward +x
    for a baseline parallel to the y-axis), -1 the other one.
    """
    axis = np.subtract(pair.reference, pair.sensor) / pair.spacing
    normal = np.array([-axis[1], axis[0]])
    if normal[1] < 0 or (normal[1] == 0 and normal[0] < 0):
        normal = -normal
    return math.cos(theta) * axis + source_side * math.sin(theta) * normal


def intersect_bearings(origins: np.ndarray, directions: np.ndarray) -> Tuple[np.ndarray, float]:
    """
    Point minimizing the summed squared distance to the bearing lines.

    Returns:
        (point, root of the summed squared distances)

    Raises:
        DegenerateGeometryError: the lines are (nearly) parallel
    """
    normal_matrix = np.zeros((2, 2))
    rhs = np.zeros(2)
    projectors = []
    for origin, direction in zip(origins, directions):
        proj = np.eye(2) - np.outer(direction, direction)
        projectors.append(proj)
        normal_matrix += proj
        rhs += proj @ origin

    if np.linalg.cond(normal_matrix) > MAX_CONDITION:
        raise DegenerateGeometryError("bearing lines are parallel")

    point = np.linalg.solve(normal_matrix, rhs)
    residual = math.sqrt(
        sum(float(np.sum((proj @ (point - origin)) ** 2)) for proj, origin in zip(projectors, origins))
    )
    return point, residual


def triangulate(
    pairs: Sequence[Tuple[SensorPair, float]], source_side: int = 1
) -> TriangulationResult:
    """
    Cross the bearings of several sensor pairs.

    Each pair's plane-wave angle gives a bearing from the pair midpoint on
    the configured side of its baseline. One pair, or parallel bearings,
    give a bearing-only result.
    """
    origins: List[Point] = []
    directions = []
    bearings = []
    for pair, theta in pairs:
        direction = bearing_direction(pair, theta, source_side)
        origins.append(pair.midpoint)
        directions.append(direction)
        bearings.append(math.atan2(direction[1], direction[0]))

    if len(pairs) < 2:
        return TriangulationResult(bearings=bearings, n_pairs_used=len(pairs))

    try:
        point, residual = intersect_bearings(np.asarray(origins), np.asarray(directions))
    except DegenerateGeometryError as e:
        logger.warning(f"Triangulation fell back to bearings only: {e}")
        return TriangulationResult(bearings=bearings, n_pairs_used=len(pairs), degenerate=True)

    return TriangulationResult(
        position=(float(point[0]), float(point[1])),
        residual=residual,
        bearings=bearings,
        n_pairs_used=len(pairs),
    )
