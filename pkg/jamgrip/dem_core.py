"""
Discrete-element engine for 2D disks.

A GrainWorld owns every moving body (grains and membrane nodes) as numpy
arrays, plus the static floor, the target object and an optional kinematic
probe. The heavy lifting happens in jamgrip.kernels; this module wraps it
with validation, world construction, snapshots and diagnostics.

Units: mm, s, g, N. Kinetic energy is reported in J.
"""

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import kernels
from .errors import ConfigurationError, DomainError, InitializationError
from .errors import NumericalBlowupError
from .membrane import Membrane, MembraneSpec, make_ring

logger = logging.getLogger(__name__)

DEFAULT_DOMAIN = (-60.0, 60.0, -5.0, 140.0)
STABILITY_FACTOR = 0.2
MAX_PLACEMENT_ATTEMPTS = 5000
SETTLE_CHECK_INTERVAL = 1e-3  # s
QUENCH_STEPS = 10
QUENCH_TIME = 0.01  # s of kinetic damping between rest checks
SETTLE_WINDOW_STEPS = 1000
SETTLE_ENERGY_RISE = 1e-9  # J per step


@dataclass(frozen=True)
class Grain:
    position: Tuple[float, float]
    velocity: Tuple[float, float]
    radius: float
    mass: float

    def __post_init__(self):
        if self.radius <= 0 or self.mass <= 0:
            raise DomainError("grain radius and mass must be positive")
        if not all(math.isfinite(v) for v in (*self.position, *self.velocity)):
            raise DomainError("grain state must be finite")


@dataclass(frozen=True)
class ContactParams:
    k_n: float = 16.0
    damping_ratio: float = 0.3
    mu: float = 0.5
    k_t: float = 12.0

    def __post_init__(self):
        if self.k_n <= 0:
            raise ConfigurationError("k_n must be positive")
        if not 0.0 <= self.damping_ratio <= 1.0:
            raise ConfigurationError("damping_ratio must be in [0, 1]")
        if self.mu < 0:
            raise ConfigurationError("mu must be non-negative")
        if self.k_t <= 0:
            raise ConfigurationError("k_t must be positive")

    def scaled(
        self, stiffness: float = 1.0, friction: float = 1.0
    ) -> "ContactParams":
        return replace(
            self,
            k_n=self.k_n * stiffness,
            k_t=self.k_t * stiffness,
            mu=self.mu * friction,
        )

    def to_dict(self) -> Dict[str, float]:
        return {
            "k_n": self.k_n,
            "damping_ratio": self.damping_ratio,
            "mu": self.mu,
            "k_t": self.k_t,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ContactParams":
        return cls(
            k_n=float(data.get("k_n", cls.k_n)),
            damping_ratio=float(data.get("damping_ratio", cls.damping_ratio)),
            mu=float(data.get("mu", cls.mu)),
            k_t=float(data.get("k_t", cls.k_t)),
        )


@dataclass(frozen=True)
class Geometry:
    """Static bodies: floor plane and the target object (a fixed disk)."""

    object_diameter: float = 25.0
    base_diameter: float = 70.0
    floor_height: float = 0.0
    object_enabled: bool = True
    floor_enabled: bool = True

    @property
    def object_radius(self) -> float:
        return 0.5 * self.object_diameter

    @property
    def object_center(self) -> Tuple[float, float]:
        return (0.0, self.floor_height + self.object_radius)

    @property
    def object_top(self) -> float:
        return self.floor_height + self.object_diameter

    def to_dict(self) -> Dict[str, Any]:
        return {
            "object_diameter": self.object_diameter,
            "base_diameter": self.base_diameter,
            "floor_height": self.floor_height,
            "object_enabled": self.object_enabled,
            "floor_enabled": self.floor_enabled,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Geometry":
        known = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-5
    gravity: float = -9810.0
    domain: Tuple[float, float, float, float] = DEFAULT_DOMAIN
    grain_count: int = 300
    radius_mean: float = 1.0
    radius_spread: float = 0.2
    grain_mass: float = 0.09
    rng_seed: int = 0
    mount_height: float = 100.0
    initial_shrink: float = 0.8
    growth_time: float = 0.05
    settle_threshold: float = 1e-10
    settle_max_time: float = 0.6
    settle_damping: float = 20.0
    trial_velocity_noise: float = 5.0
    contact: ContactParams = field(default_factory=ContactParams)
    membrane: MembraneSpec = field(default_factory=MembraneSpec)
    geometry: Geometry = field(default_factory=Geometry)

    @property
    def min_grain_mass(self) -> float:
        smallest = self.radius_mean - self.radius_spread
        return self.grain_mass * (smallest / self.radius_mean) ** 2

    def stability_limit(self) -> float:
        return stability_limit(self.min_grain_mass, self.contact.k_n)

    def validate(self) -> "SimConfig":
        if self.dt <= 0:
            raise ConfigurationError("dt must be positive")
        if self.grain_count < 1:
            raise ConfigurationError("grain_count must be >= 1")
        if self.radius_mean <= 0 or not (
            0 <= self.radius_spread < self.radius_mean
        ):
            raise ConfigurationError(
                "radius distribution needs mean > spread >= 0"
            )
        if self.grain_mass <= 0:
            raise ConfigurationError("grain_mass must be positive")
        xmin, xmax, ymin, ymax = self.domain
        if xmin >= xmax or ymin >= ymax:
            raise ConfigurationError(f"empty domain {self.domain}")
        if not 0 < self.initial_shrink <= 1:
            raise ConfigurationError("initial_shrink must be in (0, 1]")
        limit = self.stability_limit()
        if self.dt > limit * (1 + 1e-9):
            raise ConfigurationError(
                f"dt={self.dt:g} s exceeds the stability bound {limit:.3g} s "
                f"for k_n={self.contact.k_n} N/mm"
            )
        return self

    def to_dict(self) -> Dict[str, Any]:
        data = {
            name: getattr(self, name)
            for name in self.__dataclass_fields__
            if name not in ("contact", "membrane", "geometry")
        }
        data["domain"] = list(self.domain)
        data["contact"] = self.contact.to_dict()
        data["membrane"] = self.membrane.to_dict()
        data["geometry"] = self.geometry.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SimConfig":
        known = set(cls.__dataclass_fields__)
        values = {
            k: v
            for k, v in data.items()
            if k in known and k not in ("contact", "membrane", "geometry")
        }
        if "domain" in values:
            values["domain"] = tuple(float(v) for v in values["domain"])
        if "grain_count" in values:
            values["grain_count"] = int(values["grain_count"])
        if "rng_seed" in values:
            values["rng_seed"] = int(values["rng_seed"])
        return cls(
            contact=ContactParams.from_dict(data.get("contact", {})),
            membrane=MembraneSpec.from_dict(data.get("membrane", {})),
            geometry=Geometry.from_dict(data.get("geometry", {})),
            **values,
        )

    @classmethod
    def from_json(cls, text: str) -> "SimConfig":
        return cls.from_dict(json.loads(text))

    @classmethod
    def from_config(cls, loader=None) -> "SimConfig":
        """Build from the project config.json sections."""
        if loader is None:
            from config_loader import get_config_loader

            loader = get_config_loader()
        data = dict(loader.get_simulation_config())
        data["contact"] = loader.get_contact_config()
        data["membrane"] = loader.get_membrane_config()
        data["geometry"] = loader.get_geometry_config()
        return cls.from_dict(data)

    def with_overrides(self, **overrides: Any) -> "SimConfig":
        return replace(self, **overrides)


@dataclass
class Probe:
    """Kinematic disk that only moves vertically."""

    x: float
    y: float
    radius: float
    vy: float = 0.0


def stability_limit(min_mass: float, k_n: float) -> float:
    """Largest stable dt (s) for the lightest grain, mass in g, k_n in N/mm."""
    return STABILITY_FACTOR * math.sqrt(min_mass / k_n) * 1e-3


class GrainWorld:
    """
    Complete simulation state.

    Grain arrays are (n, 2) positions/velocities plus radii and masses. The
    mount (pinned membrane arc) height, the current pressure difference and
    the probe are driven by the caller between blocks of steps.
    """

    def __init__(
        self,
        positions: np.ndarray,
        velocities: np.ndarray,
        radii: np.ndarray,
        masses: np.ndarray,
        params: ContactParams,
        geometry: Geometry,
        membrane: Optional[Membrane] = None,
        gravity: float = -9810.0,
        dt: float = 1e-5,
        domain: Tuple[float, float, float, float] = DEFAULT_DOMAIN,
        mount_height: float = 0.0,
        config: Optional[SimConfig] = None,
    ):
        self.positions = np.ascontiguousarray(positions, dtype=float).reshape(
            -1, 2
        )
        self.velocities = np.ascontiguousarray(
            velocities, dtype=float
        ).reshape(-1, 2)
        self.radii = np.ascontiguousarray(radii, dtype=float).reshape(-1)
        self.masses = np.ascontiguousarray(masses, dtype=float).reshape(-1)
        n = self.positions.shape[0]
        if not (
            self.velocities.shape[0] == n
            and self.radii.shape[0] == n
            and self.masses.shape[0] == n
        ):
            raise DomainError("grain arrays must have matching lengths")
        if np.any(self.radii <= 0) or np.any(self.masses <= 0):
            raise DomainError("grain radii and masses must be positive")
        if not (
            np.all(np.isfinite(self.positions))
            and np.all(np.isfinite(self.velocities))
        ):
            raise DomainError("grain state must be finite")

        self.params = params
        self.geometry = geometry
        self.membrane = membrane
        self.gravity = float(gravity)
        self.dt = float(dt)
        self.domain = tuple(float(v) for v in domain)
        self.config = config

        self.mount_y = float(mount_height)
        self.mount_vy = 0.0
        self.delta_p = 0.0
        self.drag = 0.0
        self.probe: Optional[Probe] = None
        self.time = 0.0
        self.step_index = 0
        self.max_overlap_ratio = 0.0

        self.hist_ids = np.full((n, kernels.MAX_CONTACTS), -1, dtype=np.int64)
        self.hist_slip = np.zeros((n, kernels.MAX_CONTACTS, 2))
        node_count = membrane.node_count if membrane is not None else 0
        self.node_slip = np.zeros((node_count, 3, 2))
        if membrane is not None:
            mask = membrane.pinned_mask()
            membrane.velocities[mask] = 0.0

    @property
    def grain_count(self) -> int:
        return int(self.positions.shape[0])

    @property
    def grains(self) -> List[Grain]:
        return [
            Grain(
                tuple(self.positions[i]),
                tuple(self.velocities[i]),
                float(self.radii[i]),
                float(self.masses[i]),
            )
            for i in range(self.grain_count)
        ]

    def copy(self) -> "GrainWorld":
        clone = GrainWorld.__new__(GrainWorld)
        for name, value in self.__dict__.items():
            if isinstance(value, np.ndarray):
                value = value.copy()
            elif isinstance(value, Membrane):
                value = Membrane.from_dict(value.to_dict())
            elif isinstance(value, Probe):
                value = replace(value)
            setattr(clone, name, value)
        return clone

    def reset_clock(self) -> None:
        self.time = 0.0
        self.step_index = 0
        self.max_overlap_ratio = 0.0

    def min_grain_mass(self) -> float:
        return float(self.masses.min()) if self.grain_count else math.inf

    def check_stability(self, dt: float) -> None:
        if dt <= 0:
            raise ConfigurationError("dt must be positive")
        if not self.grain_count:
            return
        limit = stability_limit(self.min_grain_mass(), self.params.k_n)
        if dt > limit * (1 + 1e-9):
            raise ConfigurationError(
                f"dt={dt:g} s exceeds the stability bound {limit:.3g} s"
            )

    def cell_size(self) -> float:
        if not self.grain_count:
            return 1.0
        return 2.0 * float(self.radii.max())

    def kernel_params(self, dt: float) -> np.ndarray:
        prm = np.zeros(kernels.N_PARAMS)
        prm[kernels.K_N] = self.params.k_n
        prm[kernels.ZETA] = self.params.damping_ratio
        prm[kernels.MU] = self.params.mu
        prm[kernels.K_T] = self.params.k_t
        prm[kernels.GRAVITY] = self.gravity
        prm[kernels.DT] = dt
        prm[kernels.DRAG] = self.drag
        geo = self.geometry
        prm[kernels.FLOOR_ON] = 1.0 if geo.floor_enabled else 0.0
        prm[kernels.FLOOR_Y] = geo.floor_height
        if geo.object_enabled:
            prm[kernels.OBJ_X], prm[kernels.OBJ_Y] = geo.object_center
            prm[kernels.OBJ_R] = geo.object_radius
        if self.probe is not None:
            prm[kernels.PROBE_X] = self.probe.x
            prm[kernels.PROBE_R] = self.probe.radius
        if self.membrane is not None:
            prm[kernels.K_S] = self.membrane.k_stretch
            prm[kernels.K_B] = self.membrane.k_bend
            prm[kernels.ZETA_M] = self.membrane.damping_ratio
            prm[kernels.THICK] = self.membrane.thickness
        prm[kernels.CELL] = self.cell_size()
        (
            prm[kernels.XMIN],
            prm[kernels.XMAX],
            prm[kernels.YMIN],
            prm[kernels.YMAX],
        ) = self.domain
        return prm


def make_world(
    positions: Union[Sequence[Sequence[float]], np.ndarray],
    radii: Union[Sequence[float], np.ndarray],
    masses: Optional[Union[Sequence[float], np.ndarray]] = None,
    velocities: Optional[Union[Sequence[Sequence[float]], np.ndarray]] = None,
    params: Optional[ContactParams] = None,
    geometry: Optional[Geometry] = None,
    membrane: Optional[Membrane] = None,
    gravity: float = -9810.0,
    dt: float = 1e-5,
    domain: Tuple[float, float, float, float] = DEFAULT_DOMAIN,
    mount_height: float = 0.0,
) -> GrainWorld:
    """Assemble a world from explicit grain arrays (no settling)."""
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    radii = np.asarray(radii, dtype=float).reshape(-1)
    if masses is None:
        masses = 0.09 * radii**2
    if velocities is None:
        velocities = np.zeros_like(positions)
    return GrainWorld(
        positions=positions,
        velocities=np.asarray(velocities, dtype=float),
        radii=radii,
        masses=np.asarray(masses, dtype=float),
        params=params or ContactParams(),
        geometry=geometry or Geometry(),
        membrane=membrane,
        gravity=gravity,
        dt=dt,
        domain=domain,
        mount_height=mount_height,
    )


@dataclass
class BlockResult:
    load: np.ndarray
    probe_load: np.ndarray


def run_block(
    world: GrainWorld,
    mount_y: np.ndarray,
    mount_vy: Optional[np.ndarray] = None,
    delta_p: Optional[np.ndarray] = None,
    probe_y: Optional[np.ndarray] = None,
    probe_vy: Optional[np.ndarray] = None,
    dt: Optional[float] = None,
    phase: Optional[str] = None,
) -> BlockResult:
    """
    Advance `world` by len(mount_y) steps with per-step mount, pressure and
    probe drives. Missing drives hold their current value.

    Returns the per-step vertical force on the pinned nodes and on the
    probe. Raises NumericalBlowupError if any state becomes non-finite.
    """
    dt = world.dt if dt is None else dt
    world.check_stability(dt)
    mount_y = np.ascontiguousarray(mount_y, dtype=float)
    steps = mount_y.shape[0]
    if mount_vy is None:
        mount_vy = np.zeros(steps)
    if delta_p is None:
        delta_p = np.full(steps, world.delta_p)
    probe = world.probe
    if probe_y is None:
        probe_y = np.full(steps, probe.y if probe is not None else 0.0)
    if probe_vy is None:
        probe_vy = np.full(steps, probe.vy if probe is not None else 0.0)

    m = world.membrane
    if m is not None:
        membrane_arrays = (
            m.positions,
            m.velocities,
            m.masses,
            m.rest_length,
            m.rest_angle,
            m.pinned_mask(),
            m.pin_offsets,
        )
    else:
        membrane_arrays = (
            np.zeros((0, 2)),
            np.zeros((0, 2)),
            np.zeros(0),
            np.zeros(0),
            np.zeros(0),
            np.zeros(0, dtype=np.bool_),
            np.zeros((0, 2)),
        )
    load = np.zeros(steps)
    probe_load = np.zeros(steps)
    bad, ratio = kernels.run_steps(
        world.positions,
        world.velocities,
        world.radii,
        world.masses,
        world.hist_ids,
        world.hist_slip,
        *membrane_arrays,
        world.node_slip,
        world.kernel_params(dt),
        mount_y,
        np.ascontiguousarray(mount_vy, dtype=float),
        np.ascontiguousarray(delta_p, dtype=float),
        np.ascontiguousarray(probe_y, dtype=float),
        np.ascontiguousarray(probe_vy, dtype=float),
        load,
        probe_load,
    )
    world.max_overlap_ratio = max(world.max_overlap_ratio, float(ratio))
    done = steps if bad < 0 else bad + 1
    world.step_index += done
    world.time = world.step_index * dt
    world.mount_y = float(mount_y[done - 1]) if done else world.mount_y
    world.mount_vy = float(mount_vy[done - 1]) if done else world.mount_vy
    world.delta_p = float(delta_p[done - 1]) if done else world.delta_p
    if probe is not None and done:
        probe.y = float(probe_y[done - 1])
        probe.vy = float(probe_vy[done - 1])
    if bad >= 0:
        logger.error(
            "Numerical blowup at step %d (phase %s)", world.step_index, phase
        )
        raise NumericalBlowupError(world.step_index, phase=phase)
    return BlockResult(load=load, probe_load=probe_load)


def step(world: GrainWorld, dt: Optional[float] = None) -> GrainWorld:
    """One semi-implicit Euler step with the mount held where it is."""
    run_block(
        world,
        np.array([world.mount_y]),
        np.array([world.mount_vy]),
        dt=dt,
    )
    return world


def contact_force(
    overlap: float,
    rel_velocity: Sequence[float],
    normal: Sequence[float],
    params: ContactParams,
    m_eff: float = 0.09,
    slip: Sequence[float] = (0.0, 0.0),
) -> np.ndarray:
    """
    Force (N) on body A from a contact with body B.

    Args:
        overlap: penetration depth in mm, >= 0
        rel_velocity: v_A - v_B in mm/s
        normal: unit vector pointing from B to A
        params: contact law parameters
        m_eff: reduced mass in g, sets the dashpot coefficient
        slip: accumulated tangential spring displacement in mm

    Returns:
        2-vector: normal part k_n*overlap - c_n*(v.n), clamped at zero,
        plus a tangential part -k_t*slip capped at mu*|F_n|.
    """
    if overlap < 0:
        raise DomainError(f"overlap must be >= 0, got {overlap}")
    fx, fy, _, _, _ = kernels.contact_law(
        float(overlap),
        float(rel_velocity[0]),
        float(rel_velocity[1]),
        float(normal[0]),
        float(normal[1]),
        float(m_eff),
        params.k_n,
        params.damping_ratio,
        params.mu,
        params.k_t,
        float(slip[0]),
        float(slip[1]),
        0.0,
    )
    return np.array([fx, fy])


def neighbor_pairs(world: GrainWorld) -> List[Tuple[int, int]]:
    """Overlapping grain pairs (i < j) found through the uniform grid."""
    if world.grain_count < 2:
        return []
    found = kernels.overlapping_pairs(
        world.positions, world.radii, world.kernel_params(world.dt)
    )
    return sorted((int(i), int(j)) for i, j in found)


def kinetic_energy(world: GrainWorld) -> float:
    """Translational kinetic energy of the grains in J."""
    speed2 = (world.velocities * world.velocities).sum(axis=1)
    return 0.5 * float(np.dot(world.masses, speed2)) * 1e-9


def packing_fraction(
    world: GrainWorld,
    center: Optional[Tuple[float, float]] = None,
    radius: float = 6.0,
    spacing: float = 0.05,
) -> float:
    """
    Area fraction covered by grains inside a probe circle, estimated on a
    square lattice. The circle defaults to the grain centroid.
    """
    if not world.grain_count:
        return 0.0
    cx, cy = center if center is not None else world.positions.mean(axis=0)
    ticks = np.arange(-radius, radius + spacing / 2, spacing)
    gx, gy = np.meshgrid(ticks, ticks)
    inside = gx**2 + gy**2 <= radius**2
    px = gx[inside] + cx
    py = gy[inside] + cy
    near = (
        np.hypot(world.positions[:, 0] - cx, world.positions[:, 1] - cy)
        <= radius + world.radii
    )
    covered = np.zeros(px.shape[0], dtype=bool)
    for (x, y), r in zip(world.positions[near], world.radii[near]):
        covered |= (px - x) ** 2 + (py - y) ** 2 <= r * r
    return float(covered.mean())


def _deposit(
    rng: np.random.Generator,
    radii: np.ndarray,
    membrane: Optional[Membrane],
    config: SimConfig,
) -> np.ndarray:
    """Random sequential placement without overlap."""
    n = radii.shape[0]
    positions = np.zeros((n, 2))
    xmin, xmax, ymin, ymax = config.domain
    floor = config.geometry.floor_height
    for i in range(n):
        r = radii[i]
        for _ in range(MAX_PLACEMENT_ATTEMPTS):
            if membrane is not None:
                inner = (
                    config.membrane.radius
                    - config.membrane.thickness
                    - r
                    - 0.05
                )
                rho = inner * math.sqrt(rng.uniform())
                theta = 2.0 * math.pi * rng.uniform()
                candidate = (
                    rho * math.cos(theta),
                    config.mount_height + rho * math.sin(theta),
                )
            else:
                candidate = (
                    rng.uniform(xmin + r, xmax - r),
                    rng.uniform(max(ymin, floor) + r, ymax - r),
                )
            if i == 0:
                break
            d = np.hypot(
                positions[:i, 0] - candidate[0],
                positions[:i, 1] - candidate[1],
            )
            if np.all(d >= radii[:i] + r):
                break
        else:
            raise InitializationError(
                f"could not place grain {i} of {n} after "
                f"{MAX_PLACEMENT_ATTEMPTS} attempts"
            )
        positions[i] = candidate
    return positions


def build_world(config: SimConfig) -> GrainWorld:
    """
    Seeded deposition inside the membrane, radius growth, then settling
    under gravity: first with drag until kinetic energy per grain drops
    below `settle_threshold`, then drag-free with velocity resets until a
    drag-free window of SETTLE_WINDOW_STEPS stays below it. Each stage is
    capped at `settle_max_time`.
    """
    config.validate()
    rng = np.random.default_rng(config.rng_seed)
    n = config.grain_count
    radii = config.radius_mean + config.radius_spread * rng.uniform(
        -1.0, 1.0, n
    )
    masses = config.grain_mass * (radii / config.radius_mean) ** 2
    membrane = (
        make_ring(config.membrane, (0.0, config.mount_height))
        if config.membrane.enabled
        else None
    )
    start_radii = radii * config.initial_shrink
    positions = _deposit(rng, start_radii, membrane, config)

    world = GrainWorld(
        positions=positions,
        velocities=np.zeros((n, 2)),
        radii=start_radii,
        masses=masses,
        params=config.contact,
        geometry=config.geometry,
        membrane=membrane,
        gravity=config.gravity,
        dt=config.dt,
        domain=config.domain,
        mount_height=config.mount_height,
        config=config,
    )
    _grow_and_settle(world, radii, config)
    world.reset_clock()
    logger.info(
        "Built world: %d grains, seed %d, packing %.3f",
        n,
        config.rng_seed,
        packing_fraction(world),
    )
    return world


def _grow_and_settle(
    world: GrainWorld, target_radii: np.ndarray, config: SimConfig
) -> None:
    """
    Grow the grains to full size under drag, then relax the pack without
    drag until a drag-free window shows it at rest.
    """
    start_radii = world.radii.copy()
    block = max(1, int(round(SETTLE_CHECK_INTERVAL / config.dt)))
    mount = np.full(block, config.mount_height)
    world.drag = config.settle_damping
    elapsed = 0.0
    while elapsed < config.settle_max_time:
        if elapsed < config.growth_time:
            frac = elapsed / config.growth_time
            world.radii[:] = start_radii + (target_radii - start_radii) * frac
        else:
            world.radii[:] = target_radii
        run_block(world, mount, phase="settle")
        elapsed += block * config.dt
        if elapsed >= config.growth_time:
            world.radii[:] = target_radii
            per_grain = kinetic_energy(world) / world.grain_count
            logger.debug(
                "settle step t=%.3f s KE/grain=%.3e J", elapsed, per_grain
            )
            if per_grain < config.settle_threshold:
                break
    world.radii[:] = target_radii
    world.drag = 0.0
    if not _relax(world, config):
        logger.warning(
            "Pack did not come to rest below %.1e J/grain within %.2f s",
            config.settle_threshold,
            config.settle_max_time,
        )


def _motion_energy(world: GrainWorld) -> float:
    energy = kinetic_energy(world)
    m = world.membrane
    if m is not None:
        speed2 = (m.velocities * m.velocities).sum(axis=1)
        energy += 0.5 * float(np.dot(m.masses, speed2)) * 1e-9
    return energy


def _freeze(world: GrainWorld) -> None:
    world.velocities[:] = 0.0
    if world.membrane is not None:
        world.membrane.velocities[:] = 0.0


def _at_rest(world: GrainWorld, threshold: float) -> bool:
    """
    Step a copy for SETTLE_WINDOW_STEPS with nothing driven. At rest means
    the grain kinetic energy stays below `threshold` per grain and never
    rises by more than SETTLE_ENERGY_RISE in one step.
    """
    trial = world.copy()
    limit = threshold * trial.grain_count
    energy = kinetic_energy(trial)
    for _ in range(SETTLE_WINDOW_STEPS):
        step(trial)
        now = kinetic_energy(trial)
        if now >= limit or now - energy > SETTLE_ENERGY_RISE:
            return False
        energy = now
    return True


def _relax(world: GrainWorld, config: SimConfig) -> bool:
    """
    Drag-free relaxation by kinetic damping: all velocities are zeroed
    whenever the kinetic energy passes a peak. Ends frozen, at the start
    of a window that passed `_at_rest`.
    """
    mount = np.full(QUENCH_STEPS, world.mount_y)
    rounds = max(1, int(round(QUENCH_TIME / (QUENCH_STEPS * config.dt))))
    window = SETTLE_WINDOW_STEPS * config.dt
    spent = 0.0
    while True:
        _freeze(world)
        if _at_rest(world, config.settle_threshold):
            return True
        if spent >= config.settle_max_time:
            return False
        previous = 0.0
        for _ in range(rounds):
            run_block(world, mount, phase="settle")
            energy = _motion_energy(world)
            if energy < previous:
                _freeze(world)
                previous = 0.0
            else:
                previous = energy
        spent += rounds * QUENCH_STEPS * config.dt + window
        logger.debug(
            "relax t=%.3f s KE/grain=%.3e J",
            spent,
            kinetic_energy(world) / world.grain_count,
        )


def snapshot(world: GrainWorld) -> Dict[str, Any]:
    """JSON-ready state for debugging and regression checks."""
    return {
        "time": world.time,
        "step_index": world.step_index,
        "dt": world.dt,
        "gravity": world.gravity,
        "domain": list(world.domain),
        "positions": world.positions.tolist(),
        "velocities": world.velocities.tolist(),
        "radii": world.radii.tolist(),
        "masses": world.masses.tolist(),
        "params": world.params.to_dict(),
        "geometry": world.geometry.to_dict(),
        "mount": {"height": world.mount_y, "velocity": world.mount_vy},
        "delta_p": world.delta_p,
        "membrane": (
            world.membrane.to_dict() if world.membrane is not None else None
        ),
    }


def world_from_snapshot(data: Dict[str, Any]) -> GrainWorld:
    """Rebuild a world from `snapshot`; contact slip history starts empty."""
    membrane = (
        Membrane.from_dict(data["membrane"]) if data.get("membrane") else None
    )
    world = GrainWorld(
        positions=np.array(data["positions"], dtype=float),
        velocities=np.array(data["velocities"], dtype=float),
        radii=np.array(data["radii"], dtype=float),
        masses=np.array(data["masses"], dtype=float),
        params=ContactParams.from_dict(data["params"]),
        geometry=Geometry.from_dict(data["geometry"]),
        membrane=membrane,
        gravity=float(data["gravity"]),
        dt=float(data["dt"]),
        domain=tuple(data["domain"]),
        mount_height=float(data["mount"]["height"]),
    )
    world.mount_vy = float(data["mount"]["velocity"])
    world.delta_p = float(data["delta_p"])
    world.time = float(data["time"])
    world.step_index = int(data["step_index"])
    return world


def save_snapshot(world: GrainWorld, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(snapshot(world), indent=2))
    return path
