"""Composite potential fields that shape per-aircraft acceleration.

Five quadratic fields combine: attraction toward the preceding aircraft's
comfortable gap, a speed stabilizer around the layer's expected velocity,
short-range repulsion from intruding neighbours, a well that holds the
aircraft at its layer altitude, and an optional goal pull from the planner.
A velocity-consensus term aligns neighbours on top of the field descent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .airspace import AircraftState


class CollisionError(RuntimeError):
    """Raised when two aircraft occupy the same point."""


class FieldKind(Enum):
    ATTRACT = "attract"
    STABILIZE = "stabilize"
    REPULSE = "repulse"
    LAYER = "layer"
    GOAL = "goal"


@dataclass(frozen=True)
class FieldWeights:
    attract: float = 1e-4
    stabilize: float = 0.5
    repulse: float = 1e4
    layer: float = 0.05
    goal: float = 1e-4
    consensus_gain: float = 0.5

    def __post_init__(self) -> None:
        for w in (self.attract, self.stabilize, self.repulse, self.layer, self.goal,
                  self.consensus_gain):
            if w < 0.0:
                raise ValueError("field weights cannot be negative")


@dataclass(frozen=True)
class FieldContext:
    """Everything around one aircraft that the fields read.

    d_safe is the separation the caller computed for this aircraft;
    neighbours are the same-layer aircraft inside the interaction radius,
    velocities aligned index-wise with positions.
    """

    safe_separation: float
    ref_speed: float
    layer_spacing: float
    preceding_pos: tuple[float, float] | None = None
    neighbor_pos: tuple[tuple[float, float], ...] = ()
    neighbor_vel: tuple[tuple[float, float], ...] = ()
    goal_pos: tuple[float, float] | None = None


def _gap(a: tuple[float, float], b: tuple[float, float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def field_value(kind: FieldKind, state: AircraftState, ctx: FieldContext) -> float:
    """Scalar value of one unweighted field at the aircraft's state."""
    x, h = state.pos
    if kind is FieldKind.ATTRACT:
        if ctx.preceding_pos is None:
            return 0.0
        d = _gap(state.pos, ctx.preceding_pos)
        gap = d - ctx.safe_separation
        return gap * gap if gap >= 0.0 else 0.0
    if kind is FieldKind.STABILIZE:
        dvx = state.vel[0] - ctx.ref_speed
        return dvx * dvx + state.vel[1] * state.vel[1]
    if kind is FieldKind.REPULSE:
        total = 0.0
        for npos in ctx.neighbor_pos:
            d = _gap(state.pos, npos)
            if d == 0.0:
                raise CollisionError(f"aircraft {state.aircraft_id} collided")
            if d < ctx.safe_separation:
                inv = 1.0 / d - 1.0 / ctx.safe_separation
                total += inv * inv
        return total
    if kind is FieldKind.LAYER:
        spacing = ctx.layer_spacing
        if h > 1.5 * spacing:
            off = h - 2.0 * spacing
        elif h > 0.5 * spacing:
            off = h - spacing
        else:
            off = h
        return off * off
    if kind is FieldKind.GOAL:
        if ctx.goal_pos is None:
            return 0.0
        dx = x - ctx.goal_pos[0]
        dh = h - ctx.goal_pos[1]
        return dx * dx + dh * dh
    raise ValueError(f"unknown field kind {kind!r}")


def field_gradient(
    kind: FieldKind, state: AircraftState, ctx: FieldContext
) -> tuple[float, float]:
    """Gradient of one field in its natural variable.

    Position for attract/repulse/layer/goal, velocity for stabilize.
    """
    x, h = state.pos
    if kind is FieldKind.ATTRACT:
        if ctx.preceding_pos is None:
            return (0.0, 0.0)
        d = _gap(state.pos, ctx.preceding_pos)
        gap = d - ctx.safe_separation
        if gap < 0.0 or d == 0.0:
            return (0.0, 0.0)
        scale = 2.0 * gap / d
        return (
            scale * (x - ctx.preceding_pos[0]),
            scale * (h - ctx.preceding_pos[1]),
        )
    if kind is FieldKind.STABILIZE:
        return (2.0 * (state.vel[0] - ctx.ref_speed), 2.0 * state.vel[1])
    if kind is FieldKind.REPULSE:
        gx = gh = 0.0
        for npos in ctx.neighbor_pos:
            d = _gap(state.pos, npos)
            if d == 0.0:
                raise CollisionError(f"aircraft {state.aircraft_id} collided")
            if d < ctx.safe_separation:
                inv = 1.0 / d - 1.0 / ctx.safe_separation
                scale = -2.0 * inv / (d * d * d)
                gx += scale * (x - npos[0])
                gh += scale * (h - npos[1])
        return (gx, gh)
    if kind is FieldKind.LAYER:
        spacing = ctx.layer_spacing
        if h > 1.5 * spacing:
            off = h - 2.0 * spacing
        elif h > 0.5 * spacing:
            off = h - spacing
        else:
            off = h
        return (0.0, 2.0 * off)
    if kind is FieldKind.GOAL:
        if ctx.goal_pos is None:
            return (0.0, 0.0)
        return (2.0 * (x - ctx.goal_pos[0]), 2.0 * (h - ctx.goal_pos[1]))
    raise ValueError(f"unknown field kind {kind!r}")


def composite_force(
    state: AircraftState, ctx: FieldContext, weights: FieldWeights
) -> tuple[float, float]:
    """Unclipped commanded acceleration from fields plus velocity consensus."""
    fx = fh = 0.0
    for kind, w in (
        (FieldKind.ATTRACT, weights.attract),
        (FieldKind.REPULSE, weights.repulse),
        (FieldKind.LAYER, weights.layer),
        (FieldKind.GOAL, weights.goal),
    ):
        if w == 0.0:
            continue
        gx, gh = field_gradient(kind, state, ctx)
        fx -= w * gx
        fh -= w * gh
    gvx, gvh = field_gradient(FieldKind.STABILIZE, state, ctx)
    fx -= weights.stabilize * gvx
    fh -= weights.stabilize * gvh
    if weights.consensus_gain > 0.0:
        for nvel in ctx.neighbor_vel:
            fx -= weights.consensus_gain * (state.vel[0] - nvel[0])
            fh -= weights.consensus_gain * (state.vel[1] - nvel[1])
    return (fx, fh)


def acceleration(
    state: AircraftState,
    ctx: FieldContext,
    weights: FieldWeights,
    max_accel: float,
) -> tuple[float, float]:
    """Commanded acceleration, norm-clipped to the airframe limit."""
    fx, fh = composite_force(state, ctx, weights)
    norm = math.hypot(fx, fh)
    if norm > max_accel > 0.0:
        scale = max_accel / norm
        return (fx * scale, fh * scale)
    return (fx, fh)
