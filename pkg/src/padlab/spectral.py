"""Differentiable spectral gate: DFT, amplitude/phase split, selective
gradient detachment, and exact reconstruction.

The transform runs over the trailing one or two axes of a real feature
tensor. Forward-wise the whole gate is the identity map; its value lies
entirely in how the backward pass is routed: the amplitude branch, the phase
branch, both, or neither can carry gradient.

The fast transform is numpy's FFT; tests hold it to the direct O(M^2)
summation oracle at 1e-9 absolute.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .autograd import Tensor, apply_op, stop_gradient
from .errors import DimensionError, NumericalIntegrityError, UsageError

# Below this magnitude the phase is undefined; it is pinned to 0 with zero
# gradient so training never sees the 1/|F| singularity.
PHASE_GUARD = 1e-12

# Residual imaginary mass above this after the inverse transform means the
# spectrum was not conjugate-symmetric; the result cannot be trusted as real.
IMAG_ABORT = 1e-6


@dataclass
class ComplexSpectrum:
    """Frequency-domain feature: real and imaginary parts, tracked jointly."""

    real: Tensor
    imag: Tensor
    axes: tuple[int, ...]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.real.values.shape


@dataclass
class SpectralPair:
    """Amplitude (non-negative) and phase (radians in (-pi, pi]) spectra."""

    amplitude: Tensor
    phase: Tensor
    axes: tuple[int, ...]


class GateMode(enum.Enum):
    PASS_BOTH = "pass_both"
    DETACH_AMPLITUDE = "detach_amplitude"
    DETACH_PHASE = "detach_phase"
    DETACH_BOTH = "detach_both"


def _check_axes(ndim: int, axes: tuple[int, ...]) -> tuple[int, ...]:
    if len(axes) == 0:
        raise UsageError("transform axes must name at least one axis")
    if len(axes) > 2:
        raise UsageError(f"transform supports 1 or 2 trailing axes, got {axes}")
    norm = tuple(a % ndim for a in axes)
    expected = tuple(range(ndim - len(axes), ndim))
    if norm != expected:
        raise UsageError(f"transform axes must be the trailing axes, got {axes} for ndim {ndim}")
    return norm


def dft(x: Tensor, axes: tuple[int, ...]) -> ComplexSpectrum:
    """Unnormalized forward transform along each listed trailing axis."""
    axes = _check_axes(x.values.ndim, axes)
    spec = np.fft.fftn(x.values, axes=axes)
    scale = float(np.prod([x.values.shape[a] for a in axes]))

    def bwd(g_real, g_imag):
        # cotangent transform: unnormalized inverse applied to gR + i*gI
        g = np.fft.ifftn(g_real + 1j * g_imag, axes=axes) * scale
        return (np.ascontiguousarray(g.real),)

    real, imag = apply_op(
        (x,), (np.ascontiguousarray(spec.real), np.ascontiguousarray(spec.imag)), bwd
    )
    return ComplexSpectrum(real, imag, axes)


def idft(s: ComplexSpectrum) -> Tensor:
    """Normalized inverse transform; the imaginary residue must vanish."""
    axes = s.axes
    z = s.real.values + 1j * s.imag.values
    out = np.fft.ifftn(z, axes=axes)
    residue = float(np.abs(out.imag).max()) if out.size else 0.0
    if residue >= IMAG_ABORT:
        raise NumericalIntegrityError(
            f"inverse transform produced imaginary residue {residue:.3e} >= {IMAG_ABORT:.0e}"
        )
    scale = float(np.prod([z.shape[a] for a in axes]))

    def bwd(g):
        spec = np.fft.fftn(g, axes=axes) / scale
        return np.ascontiguousarray(spec.real), np.ascontiguousarray(spec.imag)

    return apply_op((s.real, s.imag), (np.ascontiguousarray(out.real),), bwd)[0]


def disentangle(s: ComplexSpectrum) -> SpectralPair:
    """Split a spectrum into amplitude and phase with analytic partials.

    amplitude = sqrt(re^2 + im^2); phase = atan2(im, re). Where the magnitude
    is below PHASE_GUARD the phase is 0 and both branches get zero gradient.
    """
    re, im = s.real.values, s.imag.values
    amp = np.hypot(re, im)
    live = amp >= PHASE_GUARD
    phase = np.where(live, np.arctan2(im, re), 0.0)

    def bwd(g_amp, g_phase):
        inv = np.where(live, 1.0 / np.where(live, amp, 1.0), 0.0)
        inv2 = inv * inv
        g_re = g_amp * re * inv + g_phase * (-im) * inv2
        g_im = g_amp * im * inv + g_phase * re * inv2
        return g_re, g_im

    amplitude, phase_t = apply_op((s.real, s.imag), (amp, phase), bwd)
    return SpectralPair(amplitude, phase_t, s.axes)


def recombine(p: SpectralPair) -> ComplexSpectrum:
    """Rebuild the complex spectrum as amplitude * exp(i * phase)."""
    if p.amplitude.values.shape != p.phase.values.shape:
        raise DimensionError(
            f"amplitude shape {p.amplitude.values.shape} != phase shape {p.phase.values.shape}"
        )
    amp, ph = p.amplitude.values, p.phase.values
    cos, sin = np.cos(ph), np.sin(ph)
    re = amp * cos
    im = amp * sin

    def bwd(g_re, g_im):
        g_amp = g_re * cos + g_im * sin
        g_ph = -g_re * amp * sin + g_im * amp * cos
        return g_amp, g_ph

    real, imag = apply_op((p.amplitude, p.phase), (re, im), bwd)
    return ComplexSpectrum(real, imag, p.axes)


def gated_forward(x: Tensor, mode: GateMode, axes: tuple[int, ...] = (-2, -1)) -> Tensor:
    """Identity-valued spectral round trip with per-branch gradient routing."""
    pair = disentangle(dft(x, axes))
    amp, ph = pair.amplitude, pair.phase
    if mode in (GateMode.DETACH_AMPLITUDE, GateMode.DETACH_BOTH):
        amp = stop_gradient(amp)
    if mode in (GateMode.DETACH_PHASE, GateMode.DETACH_BOTH):
        ph = stop_gradient(ph)
    return idft(recombine(SpectralPair(amp, ph, pair.axes)))
