"""Kolmogorov phase screens, Fried parameter and Strehl ratio.

Screens use the phase power spectrum 0.023 r0^(-5/3) f^(-11/3) (f in cycles
per metre), which is the phase counterpart of the refractive-index spectrum
0.033 Cn^2 kappa^(-11/3) and yields the structure function 6.88 (r/r0)^(5/3).
"""
from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .optics import GridSpec, SampledField, coordinates, far_field, make_gaussian

FRIED_COEFF = 0.185
STREHL_COEFF = 6.88
PHASE_PSD_COEFF = 0.023
SUBHARMONIC_LEVELS = 3
_CELL_SAMPLES = 16


@dataclass(frozen=True)
class TurbulenceSpec:
    """Single-screen turbulence. ``w0`` is the Gaussian radius used for the Strehl ratio.

    ``inner_scale``/``outer_scale`` bound the spectrum support in spatial
    frequency (1/outer <= f <= 1/inner). ``None`` inner scale means two grid
    pitches; the outer scale defaults to infinity, the subharmonics standing in
    for scales beyond the grid.
    """

    cn2: float
    z: float
    wavelength: float
    w0: float
    inner_scale: float | None = None
    outer_scale: float = math.inf
    seed: int = 0

    def __post_init__(self):
        if self.cn2 < 0:
            raise ValueError("cn2 must be non-negative")
        for name in ("z", "wavelength", "w0", "outer_scale"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.inner_scale is not None:
            if not self.inner_scale > 0:
                raise ValueError("inner_scale must be positive")
            if self.inner_scale >= self.outer_scale:
                raise ValueError("inner_scale must be smaller than outer_scale")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")

    @classmethod
    def from_strehl(cls, sr: float, w0: float, wavelength: float = 633e-9, z: float = 1.0,
                    seed: int = 0, **kwargs) -> TurbulenceSpec:
        """Choose Cn^2 so the theoretical Strehl ratio for ``w0`` equals ``sr``."""
        ratio = ratio_from_strehl(sr)
        if ratio == 0:
            cn2 = 0.0
        else:
            r0 = w0 / ratio
            cn2 = wavelength ** 2 / (z * (r0 / FRIED_COEFF) ** (5 / 3))
        return cls(cn2=cn2, z=z, wavelength=wavelength, w0=w0, seed=seed, **kwargs)

    @property
    def r0(self) -> float:
        return fried_parameter(self)

    @property
    def target_strehl(self) -> float:
        return strehl_theoretical(self.w0 / self.r0)

    def with_seed(self, seed: int) -> TurbulenceSpec:
        return replace(self, seed=seed)


def fried_parameter(spec: TurbulenceSpec | None = None, *, cn2: float | None = None,
                    z: float | None = None, wavelength: float | None = None) -> float:
    """r0 = 0.185 (lambda^2 / (Cn^2 z))^(3/5); infinite when Cn^2 = 0."""
    if spec is not None:
        cn2, z, wavelength = spec.cn2, spec.z, spec.wavelength
    if cn2 is None or z is None or wavelength is None:
        raise ValueError("need cn2, z and wavelength")
    if cn2 < 0 or z <= 0 or wavelength <= 0:
        raise ValueError("fried_parameter needs cn2 >= 0 and positive z, wavelength")
    if cn2 == 0:
        return math.inf
    return FRIED_COEFF * (wavelength ** 2 / (cn2 * z)) ** 0.6


def strehl_theoretical(w0_over_r0: float) -> float:
    """1 / (1 + 6.88 (w0/r0)^(5/3))."""
    if w0_over_r0 < 0:
        raise ValueError("w0/r0 must be non-negative")
    return 1.0 / (1.0 + STREHL_COEFF * w0_over_r0 ** (5 / 3))


def strehl_quadratic(w0_over_r0: float) -> float:
    """Quadratic structure-function approximation 1 / (1 + 6.88 (w0/r0)^2)."""
    if w0_over_r0 < 0:
        raise ValueError("w0/r0 must be non-negative")
    return 1.0 / (1.0 + STREHL_COEFF * w0_over_r0 ** 2)


def ratio_from_strehl(sr: float) -> float:
    """Inverse of :func:`strehl_theoretical` on (0, 1]."""
    if not 0 < sr <= 1:
        raise ValueError(f"Strehl ratio must lie in (0, 1], got {sr}")
    return ((1.0 / sr - 1.0) / STREHL_COEFF) ** 0.6


@dataclass(frozen=True)
class PhaseScreen:
    grid: GridSpec
    phase: np.ndarray = field(repr=False)
    spec: TurbulenceSpec
    measured_sr: float | None = None

    @property
    def transmission(self) -> np.ndarray:
        return np.exp(1j * self.phase)

    def with_measured_strehl(self) -> PhaseScreen:
        return replace(self, measured_sr=measure_strehl(self, self.spec.w0))


def _phase_psd(f: np.ndarray, r0: float, f_min: float, f_max: float) -> np.ndarray:
    with np.errstate(divide="ignore"):
        psd = PHASE_PSD_COEFF * r0 ** (-5 / 3) * f ** (-11 / 3)
    psd[(f < f_min) | (f > f_max) | (f == 0)] = 0.0
    return psd


def _cell_mean_psd(fx: float, fy: float, h: float, r0: float, f_min: float, f_max: float) -> float:
    o = (np.arange(_CELL_SAMPLES) + 0.5) / _CELL_SAMPLES - 0.5
    a, b = np.meshgrid(fx + o * h, fy + o * h)
    return float(_phase_psd(np.hypot(a, b), r0, f_min, f_max).mean())


def unit_screen(grid: GridSpec, seed: int, f_min: float = 0.0, f_max: float | None = None,
                levels: int = SUBHARMONIC_LEVELS) -> np.ndarray:
    """Zero-mean Kolmogorov screen for r0 = 1 m; scale by r0^(-5/6) for other r0.

    FFT lattice cells carry the point-sampled spectrum. The central cell is
    refined into ``levels`` rings of 3x3 subharmonic cells, each weighted by
    its cell-averaged spectrum since f^(-11/3) varies strongly across them.
    """
    n, dx = grid.n, grid.pitch
    if f_max is None:
        f_max = 1.0 / (2 * dx)
    df = 1.0 / (n * dx)
    rng = np.random.default_rng(seed)
    fx = np.fft.fftfreq(n, dx)
    fxx, fyy = np.meshgrid(fx, fx)
    psd = _phase_psd(np.hypot(fxx, fyy), 1.0, f_min, f_max)
    noise = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    hi = np.real(np.fft.ifft2(noise * np.sqrt(psd) * df)) * n * n

    x, y = coordinates(grid)
    lo = np.zeros((n, n))
    for p in range(1, levels + 1):
        h = df / 3 ** p
        for a in (-1, 0, 1):
            for b in (-1, 0, 1):
                if a == 0 and b == 0:
                    continue
                w = np.sqrt(_cell_mean_psd(a * h, b * h, h, 1.0, f_min, f_max)) * h
                c = (rng.standard_normal() + 1j * rng.standard_normal()) * w
                lo += np.real(c * np.exp(2j * np.pi * (a * h * x + b * h * y)))
    phase = hi + lo
    return phase - phase.mean()


def generate_phase_screen(spec: TurbulenceSpec, grid: GridSpec) -> PhaseScreen:
    """Deterministic (per seed) FFT phase screen with 3-level subharmonics."""
    r0 = fried_parameter(spec)
    inner = spec.inner_scale if spec.inner_scale is not None else 2 * grid.pitch
    if grid.width < 4 * spec.w0:
        raise ValueError("grid too small for the beam")
    if math.isinf(r0):
        phase = np.zeros((grid.n, grid.n))
    else:
        f_min = 0.0 if math.isinf(spec.outer_scale) else 1.0 / spec.outer_scale
        phase = unit_screen(grid, spec.seed, f_min, 1.0 / inner) * r0 ** (-5 / 6)
    phase.setflags(write=False)
    return PhaseScreen(grid, phase, spec)


def flat_screen(grid: GridSpec, w0: float, wavelength: float | None = None) -> PhaseScreen:
    spec = TurbulenceSpec(cn2=0.0, z=1.0, wavelength=wavelength or grid.wavelength, w0=w0)
    return generate_phase_screen(spec, grid)


def measure_strehl(screen: PhaseScreen, w0: float) -> float:
    """On-axis far-field intensity ratio of a Gaussian with and without the screen."""
    g = make_gaussian(screen.grid, w0)
    c = screen.grid.n // 2
    ref = far_field(g).values[c, c]
    aberrated = far_field(SampledField(screen.grid, g.values * screen.transmission)).values[c, c]
    return float(abs(aberrated) ** 2 / abs(ref) ** 2)


def structure_function(phases, max_sep: int) -> tuple[np.ndarray, np.ndarray]:
    """Ensemble structure functions along x and y for separations 1..max_sep pixels."""
    dx_acc = np.zeros(max_sep)
    dy_acc = np.zeros(max_sep)
    count = 0
    for ph in phases:
        ph = np.asarray(ph)
        for s in range(1, max_sep + 1):
            dx_acc[s - 1] += np.mean((ph[:, s:] - ph[:, :-s]) ** 2)
            dy_acc[s - 1] += np.mean((ph[s:, :] - ph[:-s, :]) ** 2)
        count += 1
    if count == 0:
        raise ValueError("no screens given")
    return dx_acc / count, dy_acc / count


@dataclass(frozen=True)
class CalibrationRow:
    target_sr: float
    mean_sr: float
    std_sr: float
    n: int


def calibrate_screens(target_sr_list, n_realizations: int, grid: GridSpec, w0: float,
                      master_seed: int = 0, wavelength: float | None = None,
                      z: float = 1.0) -> list[CalibrationRow]:
    """Encode each target SR via the 5/3 law, then measure it on fresh screens."""
    if n_realizations < 1:
        raise ValueError("need at least one realization")
    wl = wavelength or grid.wavelength
    rows = []
    for target in target_sr_list:
        base = TurbulenceSpec.from_strehl(target, w0, wl, z)
        srs = np.array([
            measure_strehl(generate_phase_screen(base.with_seed(master_seed + i), grid), w0)
            for i in range(n_realizations)
        ])
        rows.append(CalibrationRow(float(target), float(srs.mean()), float(srs.std()), n_realizations))
    return rows


def write_calibration_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["target_sr", "mean_sr", "std_sr", "n"])
        for r in rows:
            w.writerow([repr(r.target_sr), repr(r.mean_sr), repr(r.std_sr), r.n])


# -- screen cache -------------------------------------------------------------

_SCREEN_MAGIC = b"CLPS"


def write_screen(screen: PhaseScreen, path) -> None:
    """Header (magic, u32 n, f64 pitch, f64 r0, u64 seed) + row-major f64, little-endian."""
    g = screen.grid
    header = _SCREEN_MAGIC + struct.pack("<IddQ", g.n, g.pitch, screen.spec.r0, screen.spec.seed)
    Path(path).write_bytes(header + np.ascontiguousarray(screen.phase, dtype="<f8").tobytes())


def read_screen(path, w0: float, wavelength: float = 633e-9, z: float = 1.0) -> PhaseScreen:
    raw = Path(path).read_bytes()
    if raw[:4] != _SCREEN_MAGIC:
        raise ValueError(f"{path}: not a CLPS screen file")
    n, pitch, r0, seed = struct.unpack("<IddQ", raw[4:32])
    phase = np.frombuffer(raw[32:], dtype="<f8")
    if phase.size != n * n:
        raise ValueError(f"{path}: expected {n * n} samples, found {phase.size}")
    cn2 = 0.0 if math.isinf(r0) else wavelength ** 2 / (z * (r0 / FRIED_COEFF) ** (5 / 3))
    spec = TurbulenceSpec(cn2=cn2, z=z, wavelength=wavelength, w0=w0, seed=seed)
    phase = phase.reshape(n, n).copy()
    phase.setflags(write=False)
    return PhaseScreen(GridSpec(n, pitch, wavelength), phase, spec)
