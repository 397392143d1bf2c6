"""Layered-airspace geometry: configuration, aircraft state, safety separations."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum


class FlightMode(Enum):
    CRUISE = "Cruise"
    SWITCHING = "Switching"
    BACKING_OFF = "BackingOff"


@dataclass(frozen=True)
class AirspaceConfig:
    """Static description of the layered corridor.

    Layers are indexed 0 (ground), 1 (low) and 2 (high), at altitudes
    ``layer_index * layer_spacing_m``.  Each layer has an expected cruise
    speed; higher layers must be faster.
    """

    layer_spacing_m: float = 100.0
    expected_speeds_mps: tuple[float, float, float] = (30.0, 45.0, 60.0)
    course_length_m: float = 2000.0
    max_speed_mps: float = 65.0
    max_accel_mps2: float = 5.0
    # braking rates used by the horizontal separation rule
    max_brake_mps2: float = 8.0
    comfort_brake_mps2: float = 4.0
    reaction_delay_s: float = 0.5
    vertical_separation_coeff: float = 0.5

    def __post_init__(self) -> None:
        v0, v1, v2 = self.expected_speeds_mps
        if not (0.0 < v0 < v1 < v2):
            raise ValueError("expected speeds must be positive and increasing")
        if self.layer_spacing_m <= 0.0:
            raise ValueError("layer spacing must be positive")
        if self.course_length_m <= 0.0:
            raise ValueError("course length must be positive")
        if self.max_speed_mps < v2:
            raise ValueError("max speed must cover the fastest layer")
        if self.max_brake_mps2 <= 0.0 or self.comfort_brake_mps2 <= 0.0:
            raise ValueError("brake rates must be positive")
        if self.max_brake_mps2 <= self.comfort_brake_mps2:
            raise ValueError("max brake rate must exceed the comfort rate")
        if self.max_accel_mps2 <= 0.0:
            raise ValueError("max acceleration must be positive")

    def layer_altitude(self, layer: int) -> float:
        return layer * self.layer_spacing_m


@dataclass(frozen=True)
class AircraftState:
    """Snapshot of one aircraft in the vertical (x, h) plane."""

    aircraft_id: int
    pos: tuple[float, float]
    vel: tuple[float, float]
    layer: int
    mode: FlightMode = FlightMode.CRUISE
    acc: tuple[float, float] = (0.0, 0.0)

    @property
    def speed(self) -> float:
        return math.hypot(self.vel[0], self.vel[1])


def validate_state(state: AircraftState, cfg: AirspaceConfig) -> None:
    """Raise ValueError when a state breaks a hard airspace invariant."""
    if state.layer not in (0, 1, 2):
        raise ValueError(f"layer {state.layer} out of range")
    if not all(math.isfinite(c) for c in (*state.pos, *state.vel)):
        raise ValueError("non-finite state component")
    if state.speed > cfg.max_speed_mps + 1e-9:
        raise ValueError(f"speed {state.speed:.3f} exceeds limit")
    if state.mode is FlightMode.CRUISE:
        band = cfg.layer_spacing_m / 2.0
        if abs(state.pos[1] - cfg.layer_altitude(state.layer)) > band:
            raise ValueError("cruising aircraft outside its altitude band")


def horizontal_safe_separation(speed_mps: float, cfg: AirspaceConfig) -> float:
    """Minimum in-layer gap for an aircraft moving at ``speed_mps``.

    Combines the braking-distance difference between a maximal stop (rate B)
    and a comfortable stop (rate b) with the distance covered during the
    reaction delay:  (B - b) / (2 B b) * v^2 + v * t_delay.
    """
    if not math.isfinite(speed_mps) or speed_mps < 0.0:
        raise ValueError("speed must be finite and non-negative")
    big = cfg.max_brake_mps2
    small = cfg.comfort_brake_mps2
    quad = (big - small) / (2.0 * big * small) * speed_mps * speed_mps
    return quad + speed_mps * cfg.reaction_delay_s


def vertical_safe_separation(
    own: AircraftState, other: AircraftState, cfg: AirspaceConfig
) -> float:
    """Minimum clearance from ``own`` to a converging cross-layer aircraft.

    Scales the own-ship speed by the cosine of the approach angle between the
    line of sight and the relative velocity; a receding pair needs none.
    """
    sx = own.pos[0] - other.pos[0]
    sh = own.pos[1] - other.pos[1]
    sep_norm = math.hypot(sx, sh)
    if sep_norm == 0.0:
        raise ValueError("coincident aircraft have no defined separation")
    vx = own.vel[0] - other.vel[0]
    vh = own.vel[1] - other.vel[1]
    rel_norm = math.hypot(vx, vh)
    if rel_norm == 0.0:
        return 0.0
    cos_gamma = -(sx * vx + sh * vh) / (sep_norm * rel_norm)
    if cos_gamma < 0.0:
        cos_gamma = 0.0
    return cfg.vertical_separation_coeff * own.speed * cos_gamma


def pair_distance(a: AircraftState, b: AircraftState) -> float:
    return math.hypot(a.pos[0] - b.pos[0], a.pos[1] - b.pos[1])


def conflict(a: AircraftState, b: AircraftState, cfg: AirspaceConfig) -> bool:
    """True when the pair is closer than its applicable safety separation.

    Same-layer pairs use the horizontal rule evaluated at the faster of the
    two current speeds (which makes the predicate symmetric); cross-layer
    pairs use the larger of the two directed vertical clearances.  The
    boundary case (distance equal to the separation) is not a conflict.
    """
    d = pair_distance(a, b)
    if a.layer == b.layer:
        sep = horizontal_safe_separation(max(a.speed, b.speed), cfg)
    else:
        sep = max(
            vertical_safe_separation(a, b, cfg),
            vertical_safe_separation(b, a, cfg),
        )
    return d < sep
