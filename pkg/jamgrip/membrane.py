"""
Membrane (balloon analog): a closed ring of mass nodes joined by stretch
springs, with an optional bending penalty, a pinned top arc that follows
the rig mount, and an inward pressure load that models the vacuum.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Any, Dict, List, Optional, Tuple

import numpy as np

from . import kernels
from .errors import ConfigurationError, DomainError

if TYPE_CHECKING:
    from .dem_core import GrainWorld

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MembraneSpec:
    """Construction parameters for a circular membrane ring."""

    node_count: int = 96
    radius: float = 22.5
    k_stretch: float = 10.0
    k_bend: float = 0.5
    thickness: float = 0.3
    node_mass: float = 0.1
    damping_ratio: float = 0.1
    cap_half_angle: float = 45.0

    def __post_init__(self):
        if self.node_count != 0 and self.node_count < 3:
            raise ConfigurationError("a membrane ring needs >= 3 nodes")
        if self.radius <= 0 or self.thickness <= 0 or self.node_mass <= 0:
            raise ConfigurationError(
                "membrane radius, thickness and node mass must be positive"
            )
        if self.k_stretch <= 0 or self.k_bend < 0:
            raise ConfigurationError(
                "k_stretch must be positive and k_bend non-negative"
            )
        if not 0.0 <= self.damping_ratio <= 1.0:
            raise ConfigurationError("membrane damping_ratio must be in [0, 1]")
        if not 0.0 <= self.cap_half_angle < 180.0:
            raise ConfigurationError("cap_half_angle must be in [0, 180)")

    @property
    def enabled(self) -> bool:
        return self.node_count > 0

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MembraneSpec":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in data.items() if k in known})

    def to_dict(self) -> Dict[str, Any]:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}

    def scaled(self, stiffness_factor: float) -> "MembraneSpec":
        return replace(
            self,
            k_stretch=self.k_stretch * stiffness_factor,
            k_bend=self.k_bend * stiffness_factor,
        )


@dataclass
class PressureState:
    """
    Pressure difference across the membrane in kPa, positive meaning the
    inside is below ambient. Ramps linearly from zero over ramp_time.
    """

    delta_p: float = 40.0
    ramp_time: float = 0.5

    def __post_init__(self):
        if self.delta_p < 0:
            raise DomainError("delta_p must be >= 0 during a grip")
        if self.ramp_time < 0:
            raise DomainError("ramp_time must be >= 0")

    def effective(self, t: float) -> float:
        if t < 0:
            raise DomainError(f"pressure time must be >= 0, got {t}")
        if self.ramp_time == 0:
            return self.delta_p
        return self.delta_p * min(1.0, t / self.ramp_time)

    def effective_many(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if t.size and t.min() < 0:
            raise DomainError("pressure times must be >= 0")
        if self.ramp_time == 0:
            return np.full(t.shape, self.delta_p)
        return self.delta_p * np.minimum(1.0, t / self.ramp_time)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PressureState":
        return cls(
            delta_p=float(data.get("delta_p", 40.0)),
            ramp_time=float(data.get("ramp_time", 0.5)),
        )


@dataclass
class Membrane:
    positions: np.ndarray
    velocities: np.ndarray
    masses: np.ndarray
    rest_length: np.ndarray
    rest_angle: np.ndarray
    k_stretch: float
    k_bend: float = 0.0
    thickness: float = 0.3
    damping_ratio: float = 0.0
    pinned: Tuple[int, int] = (0, 0)
    pin_offsets: Optional[np.ndarray] = None

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=float)
        self.velocities = np.ascontiguousarray(self.velocities, dtype=float)
        self.masses = np.ascontiguousarray(self.masses, dtype=float)
        self.rest_length = np.ascontiguousarray(self.rest_length, dtype=float)
        self.rest_angle = np.ascontiguousarray(self.rest_angle, dtype=float)
        count = self.positions.shape[0]
        if count < 3:
            raise ConfigurationError("a membrane ring needs >= 3 nodes")
        if np.any(self.rest_length <= 0):
            raise ConfigurationError("membrane rest lengths must be positive")
        start, stop = self.pinned
        if not 0 <= start <= stop <= count:
            raise ConfigurationError(f"invalid pinned range {self.pinned}")
        if self.pin_offsets is None:
            offsets = np.zeros((count, 2))
            offsets[start:stop] = self.positions[start:stop]
            self.pin_offsets = offsets
        if self.pin_offsets.shape != (count, 2):
            raise ConfigurationError("pin_offsets must have one row per node")
        self.pin_offsets = np.ascontiguousarray(self.pin_offsets, dtype=float)

    @property
    def node_count(self) -> int:
        return int(self.positions.shape[0])

    def pinned_mask(self) -> np.ndarray:
        mask = np.zeros(self.node_count, dtype=np.bool_)
        mask[self.pinned[0]:self.pinned[1]] = True
        return mask

    def edge_vectors(self) -> np.ndarray:
        return np.roll(self.positions, -1, axis=0) - self.positions

    def edge_lengths(self) -> np.ndarray:
        return np.linalg.norm(self.edge_vectors(), axis=1)

    def area(self) -> float:
        """Signed shoelace area; positive for a counter-clockwise ring."""
        x = self.positions[:, 0]
        y = self.positions[:, 1]
        return 0.5 * float(
            np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))
        )

    def centroid(self) -> np.ndarray:
        return self.positions.mean(axis=0)

    def contains(self, points: np.ndarray) -> np.ndarray:
        return point_in_polygon(points, self.positions)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "positions": self.positions.tolist(),
            "velocities": self.velocities.tolist(),
            "masses": self.masses.tolist(),
            "rest_length": self.rest_length.tolist(),
            "rest_angle": self.rest_angle.tolist(),
            "k_stretch": self.k_stretch,
            "k_bend": self.k_bend,
            "thickness": self.thickness,
            "damping_ratio": self.damping_ratio,
            "pinned": list(self.pinned),
            "pin_offsets": self.pin_offsets.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Membrane":
        return cls(
            positions=np.array(data["positions"], dtype=float),
            velocities=np.array(data["velocities"], dtype=float),
            masses=np.array(data["masses"], dtype=float),
            rest_length=np.array(data["rest_length"], dtype=float),
            rest_angle=np.array(data["rest_angle"], dtype=float),
            k_stretch=float(data["k_stretch"]),
            k_bend=float(data["k_bend"]),
            thickness=float(data["thickness"]),
            damping_ratio=float(data["damping_ratio"]),
            pinned=(int(data["pinned"][0]), int(data["pinned"][1])),
            pin_offsets=np.array(data["pin_offsets"], dtype=float),
        )


def turning_angles(positions: np.ndarray) -> np.ndarray:
    """Signed exterior angle at every node of a closed polygon."""
    u = positions - np.roll(positions, 1, axis=0)
    w = np.roll(positions, -1, axis=0) - positions
    cross = u[:, 0] * w[:, 1] - u[:, 1] * w[:, 0]
    dot = (u * w).sum(axis=1)
    return np.arctan2(cross, dot)


def make_ring(
    spec: MembraneSpec,
    center: Tuple[float, float],
    pin_cap: bool = True,
    radius: Optional[float] = None,
) -> Membrane:
    """
    Regular counter-clockwise polygon around `center`.

    Node 0 sits at the start of the top cap (90 - cap_half_angle degrees)
    and the cap's nodes are pinned: their offsets are stored relative to
    the mount reference, which is the ring centre height.

    Args:
        spec: ring parameters
        center: (x, y) of the undeformed ring centre in mm
        pin_cap: pin the top arc to the mount
        radius: build the polygon at this radius while keeping rest lengths
            and rest angles of `spec.radius` (pre-stretched ring)
    """
    count = spec.node_count
    step = 2.0 * math.pi / count
    start = math.radians(90.0 - spec.cap_half_angle)
    angles = start + step * np.arange(count)
    rest_r = spec.radius
    build_r = rest_r if radius is None else radius
    cx, cy = center
    positions = np.column_stack(
        [cx + build_r * np.cos(angles), cy + build_r * np.sin(angles)]
    )
    rest_length = np.full(count, 2.0 * rest_r * math.sin(step / 2.0))
    rest_angle = np.full(count, step)

    pinned = (0, 0)
    if pin_cap and spec.cap_half_angle > 0:
        arc = 2.0 * spec.cap_half_angle / math.degrees(step)
        pinned = (0, min(count, int(math.floor(arc + 1e-9)) + 1))

    offsets = np.zeros((count, 2))
    offsets[pinned[0]:pinned[1], 0] = positions[pinned[0]:pinned[1], 0]
    offsets[pinned[0]:pinned[1], 1] = positions[pinned[0]:pinned[1], 1] - cy

    logger.debug(
        "Built membrane ring: %d nodes, R=%.2f mm, %d pinned",
        count,
        build_r,
        pinned[1] - pinned[0],
    )
    return Membrane(
        positions=positions,
        velocities=np.zeros((count, 2)),
        masses=np.full(count, spec.node_mass),
        rest_length=rest_length,
        rest_angle=rest_angle,
        k_stretch=spec.k_stretch,
        k_bend=spec.k_bend,
        thickness=spec.thickness,
        damping_ratio=spec.damping_ratio,
        pinned=pinned,
        pin_offsets=offsets,
    )


def membrane_forces(m: Membrane) -> np.ndarray:
    """Elastic (stretch + bending) force on every node, N."""
    out = np.zeros((m.node_count, 2))
    kernels.membrane_elastic(
        m.positions, m.rest_length, m.rest_angle, m.k_stretch, m.k_bend, out
    )
    return out


def pressure_forces(m: Membrane, p: PressureState, t: float) -> np.ndarray:
    """Vacuum load on every node at time t after the pump switched on, N."""
    out = np.zeros((m.node_count, 2))
    kernels.pressure_loads(m.positions, p.effective(t), out)
    return out


@dataclass(frozen=True)
class MembraneContact:
    grain: int
    edge: int
    weight: float
    overlap: float
    force: Tuple[float, float]
    node_forces: Tuple[Tuple[int, float, float], Tuple[int, float, float]]


def membrane_grain_contacts(
    m: Membrane, world: "GrainWorld"
) -> List[MembraneContact]:
    """
    Grain-versus-edge contacts at the current state.

    Uses the same contact law as the step kernel with no stored slip. The
    reaction on each edge is split between its end nodes by the barycentric
    weight of the contact point (weight 0 at the first node, 1 at the
    second).
    """
    params = world.params
    count = m.node_count
    a = m.positions
    b = np.roll(m.positions, -1, axis=0)
    va = m.velocities
    vb = np.roll(m.velocities, -1, axis=0)
    edges = b - a
    lengths2 = (edges * edges).sum(axis=1)
    pinned = m.pinned_mask()
    pinned_edge = pinned & np.roll(pinned, -1)
    edge_mass = 0.5 * (m.masses + np.roll(m.masses, -1))
    contacts: List[MembraneContact] = []

    for i in range(world.grain_count):
        p = world.positions[i]
        reach = world.radii[i] + m.thickness
        with np.errstate(divide="ignore", invalid="ignore"):
            s = ((p - a) * edges).sum(axis=1) / lengths2
        candidates = np.nonzero((lengths2 > 0) & (s > 0))[0]
        for e in candidates:
            weight = min(float(s[e]), 1.0)
            closest = a[e] + weight * edges[e]
            delta = p - closest
            dist = float(np.hypot(delta[0], delta[1]))
            if dist >= reach or dist == 0.0:
                continue
            normal = delta / dist
            grain_mass = world.masses[i]
            m_eff = (
                grain_mass
                if pinned_edge[e]
                else grain_mass * edge_mass[e] / (grain_mass + edge_mass[e])
            )
            v_edge = (1.0 - weight) * va[e] + weight * vb[e]
            rel = world.velocities[i] - v_edge
            fx, fy, _, _, _ = kernels.contact_law(
                reach - dist, rel[0], rel[1], normal[0], normal[1], m_eff,
                params.k_n, params.damping_ratio, params.mu, params.k_t,
                0.0, 0.0, 0.0,
            )
            j = (e + 1) % count
            contacts.append(
                MembraneContact(
                    grain=i,
                    edge=int(e),
                    weight=weight,
                    overlap=reach - dist,
                    force=(fx, fy),
                    node_forces=(
                        (int(e), -(1.0 - weight) * fx, -(1.0 - weight) * fy),
                        (int(j), -weight * fx, -weight * fy),
                    ),
                )
            )
    return contacts


def point_in_polygon(points: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Even-odd rule; returns one bool per point."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    x = pts[:, 0:1]
    y = pts[:, 1:2]
    xi = polygon[:, 0]
    yi = polygon[:, 1]
    xj = np.roll(xi, 1)
    yj = np.roll(yi, 1)
    straddles = (yi > y) != (yj > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_cross = (xj - xi) * (y - yi) / (yj - yi) + xi
    crossings = np.count_nonzero(straddles & (x < x_cross), axis=1)
    return crossings % 2 == 1


def grains_outside(m: Membrane, positions: np.ndarray) -> np.ndarray:
    """Indices of grain centres that are not inside the ring."""
    if len(positions) == 0:
        return np.zeros(0, dtype=np.int64)
    return np.nonzero(~m.contains(positions))[0]
