"""Air-to-ground channel with an optional reflecting-surface cascade.

All geometry lives in the vertical (x, h) plane.  The surface is a square
panel of L elements (sqrt(L) per row) whose steering index repeats modulo
sqrt(L), so element phases depend on the azimuth cosines of the incident and
departing paths only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ChannelParams:
    """Large-scale channel constants.

    ref_gain is the path gain at 1 m (beta); the three exponents cover the
    BS->aircraft, BS->surface and surface->aircraft paths.  Powers are linear
    watts, bandwidth in Hz (1.0 keeps capacities in bit/s/Hz).
    """

    ref_gain: float = 1e-3
    alpha_bs_k: float = 2.5
    alpha_bs_i: float = 2.0
    alpha_i_k: float = 2.2
    tx_power_w: float = 1.0
    noise_power_w: float = 1.26e-20
    bandwidth_hz: float = 1.0
    interference_pos: tuple[float, float] | None = None
    interference_power_w: float = 0.0
    interference_alpha: float = 2.2

    def __post_init__(self) -> None:
        if self.ref_gain <= 0.0 or self.tx_power_w <= 0.0 or self.noise_power_w <= 0.0:
            raise ValueError("powers and reference gain must be positive")
        for a in (self.alpha_bs_k, self.alpha_bs_i, self.alpha_i_k, self.interference_alpha):
            if a <= 0.0:
                raise ValueError("path-loss exponents must be positive")
        if self.bandwidth_hz <= 0.0:
            raise ValueError("bandwidth must be positive")
        if self.interference_power_w < 0.0:
            raise ValueError("interference power cannot be negative")


@dataclass(frozen=True)
class PhaseShiftConfig:
    """Per-element phase shifts in [0, 2*pi).

    ``resolution`` is the grid step as a fraction of pi (e.g. 1/4 means the
    grid {m * pi/4}); None means continuously adjustable phases.
    """

    phases: tuple[float, ...]
    resolution: float | None = None

    def __post_init__(self) -> None:
        n = len(self.phases)
        root = math.isqrt(n)
        if root * root != n or n == 0:
            raise ValueError("element count must be a positive perfect square")
        for theta in self.phases:
            if not 0.0 <= theta < TWO_PI:
                raise ValueError("phases must lie in [0, 2*pi)")
        if self.resolution is not None:
            if self.resolution <= 0.0:
                raise ValueError("resolution must be positive")
            step = self.resolution * math.pi
            for theta in self.phases:
                ratio = theta / step
                if abs(ratio - round(ratio)) > 1e-9:
                    raise ValueError("phase off the resolution grid")

    @property
    def num_elements(self) -> int:
        return len(self.phases)


def _distance(a: tuple[float, float], b: tuple[float, float]) -> float:
    d = math.hypot(a[0] - b[0], a[1] - b[1])
    if d <= 0.0:
        raise ValueError("zero-length path has no channel")
    return d


def steering_indices(num_elements: int) -> np.ndarray:
    """Per-element steering multipliers (l - 1) mod sqrt(L)."""
    root = math.isqrt(num_elements)
    if root * root != num_elements:
        raise ValueError("element count must be a perfect square")
    return np.arange(num_elements) % root


def direct_gain(
    bs_pos: tuple[float, float], k_pos: tuple[float, float], params: ChannelParams
) -> complex:
    """Line-of-sight BS->aircraft amplitude sqrt(beta / d^alpha)."""
    d = _distance(bs_pos, k_pos)
    return complex(math.sqrt(params.ref_gain / d ** params.alpha_bs_k))

def azimuth_cosine(src: tuple[float, float], dst: tuple[float, float]) -> float:
    """Cosine of the departure angle measured against the +x axis."""
    return (dst[0] - src[0]) / _distance(src, dst)


def cascaded_gain(
    bs_pos: tuple[float, float],
    ris_pos: tuple[float, float],
    k_pos: tuple[float, float],
    phases: PhaseShiftConfig,
    params: ChannelParams,
) -> complex:
    """Reflected-path amplitude through the surface.

    Element l contributes exp(j * (pi * u_l * (cos_in - cos_out) + theta_l))
    with u_l its steering index; the common amplitude is
    beta / sqrt(d1^a1 * d2^a2).
    """
    d1 = _distance(bs_pos, ris_pos)
    d2 = _distance(ris_pos, k_pos)
    cos_in = azimuth_cosine(bs_pos, ris_pos)
    cos_out = azimuth_cosine(ris_pos, k_pos)
    u = steering_indices(phases.num_elements)
    theta = np.asarray(phases.phases)
    summed = np.exp(1j * (math.pi * u * (cos_in - cos_out) + theta)).sum()
    amp = params.ref_gain / math.sqrt(
        d1 ** params.alpha_bs_i * d2 ** params.alpha_i_k
    )
    return complex(amp * summed)


def cascaded_gain_bound(
    bs_pos: tuple[float, float],
    ris_pos: tuple[float, float],
    k_pos: tuple[float, float],
    num_elements: int,
    params: ChannelParams,
) -> float:
    """Upper bound L * beta / sqrt(d1^a1 * d2^a2) on the cascade magnitude."""
    d1 = _distance(bs_pos, ris_pos)
    d2 = _distance(ris_pos, k_pos)
    return num_elements * params.ref_gain / math.sqrt(
        d1 ** params.alpha_bs_i * d2 ** params.alpha_i_k
    )


def optimal_phase_shift(
    bs_pos: tuple[float, float],
    ris_pos: tuple[float, float],
    k_pos: tuple[float, float],
    num_elements: int,
) -> PhaseShiftConfig:
    """Phases that align every element of the cascade with the direct path.

    theta_l = -pi * u_l * (cos_in - cos_out), wrapped into [0, 2*pi).  With
    these the cascade sum hits its magnitude bound exactly.
    """
    cos_in = azimuth_cosine(bs_pos, ris_pos)
    cos_out = azimuth_cosine(ris_pos, k_pos)
    u = steering_indices(num_elements)
    theta = np.mod(-math.pi * u * (cos_in - cos_out), TWO_PI)
    # mod can return the period itself when the operand is a tiny negative
    theta[theta >= TWO_PI] = 0.0
    return PhaseShiftConfig(phases=tuple(float(t) for t in theta), resolution=None)


def quantize_phase(theta: float, resolution: float) -> float:
    """Snap ``theta`` to the nearest multiple of resolution * pi.

    Exact midpoints round toward the smaller multiple.
    """
    if resolution <= 0.0:
        raise ValueError("resolution must be positive")
    step = resolution * math.pi
    m = math.ceil(theta / step - 0.5)
    return m * step


def quantize_config(config: PhaseShiftConfig, resolution: float) -> PhaseShiftConfig:
    """Quantize every phase of ``config`` onto the given grid."""
    snapped = []
    for theta in config.phases:
        q = math.fmod(quantize_phase(theta, resolution), TWO_PI)
        if q < 0.0:
            q += TWO_PI
        # guard against fmod returning the period itself
        if q >= TWO_PI:
            q = 0.0
        snapped.append(q)
    return PhaseShiftConfig(phases=tuple(snapped), resolution=resolution)


def interference_at(k_pos: tuple[float, float], params: ChannelParams) -> float:
    """Received interference power at the aircraft, 0 when no source is set."""
    if params.interference_pos is None or params.interference_power_w == 0.0:
        return 0.0
    d = _distance(params.interference_pos, k_pos)
    return params.interference_power_w * params.ref_gain / d ** params.interference_alpha


def snr(
    bs_pos: tuple[float, float],
    ris_pos: tuple[float, float] | None,
    k_pos: tuple[float, float],
    phases: PhaseShiftConfig | None,
    params: ChannelParams,
) -> float:
    """Receive SNR of the combined direct and reflected paths.

    Pass ris_pos=None (or phases=None) for a direct-only link.  Interference
    configured on ``params`` adds to the noise floor.
    """
    h = direct_gain(bs_pos, k_pos, params)
    if ris_pos is not None and phases is not None:
        h += cascaded_gain(bs_pos, ris_pos, k_pos, phases, params)
    denom = params.noise_power_w + interference_at(k_pos, params)
    return abs(h) ** 2 * params.tx_power_w / denom


def capacity(snr_value: float, params: ChannelParams) -> float:
    """Shannon capacity B * log2(1 + snr)."""
    if snr_value < 0.0:
        raise ValueError("snr cannot be negative")
    return params.bandwidth_hz * math.log2(1.0 + snr_value)
