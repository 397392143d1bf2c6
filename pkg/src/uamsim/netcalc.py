"""Delay-failure bounds for the three transmission fashions.

Service is modelled with latency-rate curves beta(t) = r * (t - T)+ whose
latency term collects the channel-access cost of every message in the stack.
Arrivals are Poisson in unit-size packets; the probability that the delay of
a transfer exceeds a budget t combines the handshake retransmission tails
with the queueing tail through a min-plus convolution over the time split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from scipy.special import gammainc


class ChannelKind(Enum):
    CONTROL = "Control"
    DIRECT = "Direct"
    RIS = "Ris"


@dataclass(frozen=True)
class ProtocolParams:
    """Rates (Mb/s), message volumes (Mb) and handshake behaviour."""

    omni_rate: float = 20.0
    direct_rate: float = 40.0
    ris_rate_in: float = 100.0
    ris_rate_out: float = 100.0
    rts_volume: float = 3.0
    cts_volume: float = 3.0
    rtr_volume: float = 3.0
    data_volume: float = 10.0
    access_weight: float = 1.2
    loss_prob: float = 0.15
    rts_ttl: float = 0.08
    cts_ttl: float = 0.08
    rtr_ttl: float = 0.08
    arrival_rate: float | None = None  # packets per second; None: match the load

    def __post_init__(self) -> None:
        for r in (self.omni_rate, self.direct_rate, self.ris_rate_in, self.ris_rate_out):
            if r <= 0.0:
                raise ValueError("rates must be positive")
        for v in (self.rts_volume, self.cts_volume, self.rtr_volume, self.data_volume):
            if v < 0.0:
                raise ValueError("message volumes cannot be negative")
        if not 0.0 <= self.loss_prob < 1.0:
            raise ValueError("loss probability must lie in [0, 1)")
        for ttl in (self.rts_ttl, self.cts_ttl, self.rtr_ttl):
            if ttl <= 0.0:
                raise ValueError("retransmission ttls must be positive")
        if self.access_weight <= 0.0:
            raise ValueError("access weight must be positive")


@dataclass(frozen=True)
class LatencyRateCurve:
    """Service curve beta(t) = rate * (t - latency)+ ."""

    rate: float
    latency: float

    def __post_init__(self) -> None:
        if self.rate <= 0.0 or self.latency < 0.0:
            raise ValueError("rate must be positive and latency non-negative")

    def __call__(self, t: float | np.ndarray) -> float | np.ndarray:
        return self.rate * np.maximum(np.asarray(t, dtype=float) - self.latency, 0.0)


@dataclass(frozen=True)
class Ccdf:
    """Tail probability tabulated on the uniform grid [0, t_max]."""

    t_max: float
    dt: float
    values: np.ndarray

    def __post_init__(self) -> None:
        n = int(round(self.t_max / self.dt)) + 1
        if len(self.values) != n:
            raise ValueError("value count does not match the grid")
        v = np.asarray(self.values, dtype=float)
        if np.any(v < -1e-12) or np.any(v > 1.0 + 1e-12):
            raise ValueError("tail probabilities must lie in [0, 1]")
        object.__setattr__(self, "values", np.clip(v, 0.0, 1.0))

    def at(self, t: float) -> float:
        idx = int(round(t / self.dt))
        if idx < 0 or idx >= len(self.values):
            raise ValueError("time outside the tabulated grid")
        return float(self.values[idx])


def min_plus_convolve(a, b):
    """Min-plus convolution of two service curves or two tail tables.

    For latency-rate curves the result is closed form: the rates take their
    minimum and the latencies add.  For tabulated tails the infimum over the
    grid split is taken exactly, then clamped back into [0, 1].
    """
    if isinstance(a, LatencyRateCurve) and isinstance(b, LatencyRateCurve):
        return LatencyRateCurve(min(a.rate, b.rate), a.latency + b.latency)
    if isinstance(a, Ccdf) and isinstance(b, Ccdf):
        if abs(a.dt - b.dt) > 1e-15 or abs(a.t_max - b.t_max) > 1e-12:
            raise ValueError("tail tables must share one grid")
        av = a.values
        bv = b.values
        n = len(av)
        out = np.empty(n)
        for i in range(n):
            out[i] = np.min(av[: i + 1] + bv[i::-1])
        return Ccdf(a.t_max, a.dt, np.clip(out, 0.0, 1.0))
    raise TypeError("operands must be two curves or two tail tables")


def poisson_delay_tail(mean_arrivals: float, threshold: float) -> float:
    """P{N >= ceil(threshold + mean)} for N ~ Poisson(mean).

    The regularized lower incomplete gamma gives the upper tail exactly;
    a start index at or below zero covers the whole distribution.
    """
    if mean_arrivals < 0.0:
        raise ValueError("mean arrival count cannot be negative")
    start = math.ceil(threshold + mean_arrivals)
    if start <= 0:
        return 1.0
    if mean_arrivals == 0.0:
        return 0.0
    return float(gammainc(start, mean_arrivals))


def retransmission_ccdf(loss_prob: float, ttl: float, t_max: float, dt: float) -> Ccdf:
    """Tail of the handshake completion time under per-ttl retries.

    P{T > t} = loss^ceil(t/ttl + 1): one mandatory attempt plus one retry
    per elapsed ttl.
    """
    if not 0.0 <= loss_prob < 1.0:
        raise ValueError("loss probability must lie in [0, 1)")
    if ttl <= 0.0:
        raise ValueError("ttl must be positive")
    t = np.arange(int(round(t_max / dt)) + 1) * dt
    exponents = np.ceil(t / ttl + 1.0).astype(int)
    return Ccdf(t_max, dt, np.power(loss_prob, exponents))


def service_curve_stack(kind: ChannelKind, params: ProtocolParams) -> LatencyRateCurve:
    """Cascaded service curve of one transmission fashion.

    Every message in the stack contributes zeta * volume / rate to the
    latency; the rate is the bottleneck of the cascaded hops.
    """
    z = params.access_weight
    if kind is ChannelKind.CONTROL:
        return LatencyRateCurve(
            params.omni_rate, z * params.data_volume / params.omni_rate
        )
    if kind is ChannelKind.DIRECT:
        latency = z * (
            params.rts_volume / params.omni_rate
            + params.cts_volume / params.omni_rate
            + params.data_volume / params.direct_rate
        )
        return LatencyRateCurve(min(params.omni_rate, params.direct_rate), latency)
    if kind is ChannelKind.RIS:
        latency = z * (
            params.rts_volume / params.omni_rate
            + params.cts_volume / params.omni_rate
            + params.rtr_volume / params.omni_rate
            + params.data_volume / params.ris_rate_in
            + params.data_volume / params.ris_rate_out
        )
        rate = min(params.omni_rate, params.ris_rate_in, params.ris_rate_out)
        return LatencyRateCurve(rate, latency)
    raise ValueError(f"unknown channel kind {kind!r}")


def queueing_tail_ccdf(
    curve: LatencyRateCurve, arrival_rate: float, t_max: float, dt: float
) -> Ccdf:
    """Delay tail of the queueing stage alone, tabulated on the grid.

    Below the stack latency no service has happened, so the tail is 1; past
    it, the Poisson count over the budget must beat the accumulated service.
    """
    n = int(round(t_max / dt)) + 1
    t = np.arange(n) * dt
    values = np.ones(n)
    served = t > curve.latency + 1e-15
    if np.any(served):
        ts = t[served]
        mean = arrival_rate * ts
        thresh = curve(ts)
        start = np.ceil(thresh + mean).astype(int)
        tail = np.where(
            start <= 0,
            1.0,
            np.where(mean == 0.0, 0.0, gammainc(np.maximum(start, 1), mean)),
        )
        values[served] = tail
    # Each point bounds the delay tail on its own; the tail itself is
    # non-increasing, so the running minimum is a tighter valid bound and
    # removes the sawtooth the integer threshold leaves between jumps.
    return Ccdf(t_max, dt, np.minimum.accumulate(values))


def failure_curve(
    kind: ChannelKind,
    load: float,
    t_max: float,
    params: ProtocolParams,
    grid_dt: float = 0.005,
) -> Ccdf:
    """Delay-failure tail of a transfer of ``load`` Mb, tabulated to t_max.

    ``load`` sets the data volume of the stack and, unless the params pin an
    arrival rate, the Poisson intensity over a one-second window.  The
    handshake stages and the queueing stage split the budget through a
    min-plus convolution of their tails.
    """
    if load < 0.0:
        raise ValueError("load cannot be negative")
    if t_max <= 0.0:
        raise ValueError("time budget must be positive")
    if grid_dt > t_max / 10.0:
        raise ValueError("grid too coarse for the requested budget")
    p = replace(params, data_volume=load)
    lam = p.arrival_rate if p.arrival_rate is not None else load
    curve = service_curve_stack(kind, p)
    success = queueing_tail_ccdf(curve, lam, t_max, grid_dt)
    if kind is ChannelKind.CONTROL:
        return success
    stages = [
        retransmission_ccdf(p.loss_prob, p.rts_ttl, t_max, grid_dt),
        retransmission_ccdf(p.loss_prob, p.cts_ttl, t_max, grid_dt),
    ]
    if kind is ChannelKind.RIS:
        stages.append(retransmission_ccdf(p.loss_prob, p.rtr_ttl, t_max, grid_dt))
    combined = stages[0]
    for stage in stages[1:]:
        combined = min_plus_convolve(combined, stage)
    return min_plus_convolve(combined, success)


def failure_probability(
    kind: ChannelKind,
    load: float,
    t: float,
    params: ProtocolParams,
    grid_dt: float = 0.005,
) -> float:
    """Probability bound that a transfer of ``load`` Mb misses the budget t."""
    return failure_curve(kind, load, t, params, grid_dt).at(t)
