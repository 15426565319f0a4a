"""Sampled scalar and Jones fields, q-plates, Fourier plane and modal projections.

Fields live on a square grid centred on pixel ``n // 2`` so that the optical
axis is an exact sample. Power is ``sum |E|^2 * pitch^2``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .states import VECTOR_MODE_NAMES, HybridState, vector_mode_basis


class GridMismatchError(ValueError):
    pass


class AliasingError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    n: int = 256
    pitch: float = 1e-3 / 16
    wavelength: float = 633e-9

    def __post_init__(self):
        if self.n < 64 or self.n & (self.n - 1):
            raise ValueError(f"grid size must be a power of two >= 64, got {self.n}")
        if not self.pitch > 0 or not self.wavelength > 0:
            raise ValueError("pitch and wavelength must be positive")

    @classmethod
    def for_beam(cls, w0: float, n: int = 256, fov_factor: float = 16.0,
                 wavelength: float = 633e-9) -> GridSpec:
        """Grid whose field of view is ``fov_factor * w0``."""
        return cls(n=n, pitch=fov_factor * w0 / n, wavelength=wavelength)

    @property
    def width(self) -> float:
        return self.n * self.pitch

    def check_beam(self, w0: float) -> None:
        if self.width < 8 * w0:
            raise AliasingError(f"field of view {self.width:.3g} m < 8 w0 = {8 * w0:.3g} m")


@lru_cache(maxsize=16)
def _polar(grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    x = (np.arange(grid.n) - grid.n // 2) * grid.pitch
    xx, yy = np.meshgrid(x, x)
    r, phi = np.hypot(xx, yy), np.arctan2(yy, xx)
    r.setflags(write=False)
    phi.setflags(write=False)
    return r, phi


def coordinates(grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Cartesian sample coordinates (x, y); rows index y."""
    x = (np.arange(grid.n) - grid.n // 2) * grid.pitch
    return np.meshgrid(x, x)


def polar_coordinates(grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    return _polar(grid)


@dataclass(frozen=True)
class SampledField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != (self.grid.n, self.grid.n):
            raise ValueError(f"values shape {v.shape} does not match grid n={self.grid.n}")
        object.__setattr__(self, "values", v)

    @property
    def power(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.grid.pitch ** 2)

    def __mul__(self, other):
        if isinstance(other, SampledField):
            _check_same_grid(self.grid, other.grid)
            other = other.values
        return SampledField(self.grid, self.values * other)

    __rmul__ = __mul__

    def __add__(self, other: SampledField) -> SampledField:
        _check_same_grid(self.grid, other.grid)
        return SampledField(self.grid, self.values + other.values)

    def scaled(self, c: complex) -> SampledField:
        return SampledField(self.grid, self.values * c)

    def normalized(self) -> SampledField:
        return self.scaled(1 / np.sqrt(self.power))

    def intensity(self) -> np.ndarray:
        return np.abs(self.values) ** 2


@dataclass(frozen=True)
class JonesField:
    """Circular-polarisation components of a vector field on a shared grid."""

    right: SampledField
    left: SampledField

    def __post_init__(self):
        _check_same_grid(self.right.grid, self.left.grid)

    @property
    def grid(self) -> GridSpec:
        return self.right.grid

    @property
    def power(self) -> float:
        return self.right.power + self.left.power

    @classmethod
    def from_linear(cls, horizontal: SampledField, vertical: SampledField) -> JonesField:
        # R = (H - iV)/sqrt2, L = (H + iV)/sqrt2  =>  E_R = (E_H + i E_V)/sqrt2
        h, v = horizontal.values, vertical.values
        g = horizontal.grid
        return cls(SampledField(g, (h + 1j * v) / np.sqrt(2)),
                   SampledField(g, (h - 1j * v) / np.sqrt(2)))

    def to_linear(self) -> tuple[SampledField, SampledField]:
        r, l = self.right.values, self.left.values
        g = self.grid
        return (SampledField(g, (r + l) / np.sqrt(2)),
                SampledField(g, -1j * (r - l) / np.sqrt(2)))

    def scaled(self, c: complex) -> JonesField:
        return JonesField(self.right.scaled(c), self.left.scaled(c))

    def __add__(self, other: JonesField) -> JonesField:
        return JonesField(self.right + other.right, self.left + other.left)


def _check_same_grid(a: GridSpec, b: GridSpec) -> None:
    if a != b:
        raise GridMismatchError(f"grid mismatch: {a} vs {b}")


@dataclass(frozen=True)
class QPlateParams:
    q: float
    delta: float = 0.0  # retardation error with respect to half-wave, radians

    def __post_init__(self):
        if abs(2 * self.q - round(2 * self.q)) > 1e-12:
            raise ValueError(f"2q must be an integer, got q={self.q}")


@lru_cache(maxsize=64)
def _lg_values(grid: GridSpec, ell: int, w0: float) -> np.ndarray:
    r, phi = _polar(grid)
    amp = (r * np.sqrt(2) / w0) ** abs(ell) * np.exp(-(r / w0) ** 2)
    values = amp * np.exp(1j * ell * phi)
    values /= np.sqrt(np.sum(np.abs(values) ** 2) * grid.pitch ** 2)
    values.setflags(write=False)
    return values


def make_oam_mode(grid: GridSpec, ell: int, w0: float) -> SampledField:
    """Unit-power Laguerre-Gauss mode with radial index 0 and waist ``w0``."""
    if abs(ell) > grid.n // 8:
        raise AliasingError(f"|ell|={abs(ell)} exceeds aliasing bound n/8={grid.n // 8}")
    grid.check_beam(w0)
    return SampledField(grid, _lg_values(grid, int(ell), float(w0)).copy())


def make_gaussian(grid: GridSpec, w0: float) -> SampledField:
    return make_oam_mode(grid, 0, w0)


def hybrid_to_field(state: HybridState, grid: GridSpec, w0: float) -> JonesField:
    """Field realisation of a hybrid state using LG_{0,+-l} radial profiles."""
    plus = make_oam_mode(grid, state.ell, w0).values
    minus = make_oam_mode(grid, -state.ell, w0).values
    right = state.amp_lR * plus + state.amp_mR * minus
    left = state.amp_lL * plus + state.amp_mL * minus
    return JonesField(SampledField(grid, right), SampledField(grid, left))


def apply_qplate(field: JonesField, qp: QPlateParams) -> JonesField:
    """Pointwise q-plate action in the linear (H, V) basis.

    Ideal plate: [[cos 2q phi, sin 2q phi], [sin 2q phi, -cos 2q phi]]. A
    retardation error ``delta`` mixes in an unconverted component
    ``-i sin(delta/2)`` while the converted part is weighted by ``cos(delta/2)``.
    """
    _check_same_grid(field.right.grid, field.left.grid)
    _, phi = _polar(field.grid)
    c, s = np.cos(2 * qp.q * phi), np.sin(2 * qp.q * phi)
    h, v = field.to_linear()
    eh, ev = h.values, v.values
    conv, leak = np.cos(qp.delta / 2), -1j * np.sin(qp.delta / 2)
    out_h = conv * (c * eh + s * ev) + leak * eh
    out_v = conv * (s * eh - c * ev) + leak * ev
    g = field.grid
    return JonesField.from_linear(SampledField(g, out_h), SampledField(g, out_v))


def far_field(field: SampledField) -> SampledField:
    """Centred DFT approximating the continuous Fourier transform.

    The returned grid's ``pitch`` is the spatial-frequency spacing 1/(n * pitch)
    in cycles per metre; values are scaled so Parseval holds in the grid's own
    power measure and the centre sample equals ``sum(E) * pitch^2``.
    """
    g = field.grid
    spectrum = np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(field.values))) * g.pitch ** 2
    out_grid = GridSpec(g.n, 1.0 / (g.n * g.pitch), g.wavelength)
    return SampledField(out_grid, spectrum)


def modal_overlap(field: SampledField, filter: SampledField) -> complex:
    """<filter|field> = sum conj(filter) * field * pitch^2."""
    _check_same_grid(field.grid, filter.grid)
    return complex(np.vdot(filter.values, field.values) * field.grid.pitch ** 2)


def jones_overlap(field: JonesField, filter: JonesField) -> complex:
    return modal_overlap(field.right, filter.right) + modal_overlap(field.left, filter.left)


def on_axis_far_field(field: SampledField) -> complex:
    g = field.grid
    return complex(far_field(field).values[g.n // 2, g.n // 2])


@dataclass(frozen=True)
class VectorModeFields:
    """Field realisations of the four vector modes on one grid."""

    ell: int
    w0: float
    fields: dict

    @classmethod
    def build(cls, grid: GridSpec, ell: int, w0: float) -> VectorModeFields:
        basis = vector_mode_basis(ell)
        return cls(ell, w0, {k: hybrid_to_field(basis[k], grid, w0) for k in VECTOR_MODE_NAMES})

    def __getitem__(self, name: str) -> JonesField:
        return self.fields[name]


def vector_mode_project(field: JonesField, basis: VectorModeFields | dict | None = None,
                        w0: float | None = None, ell: int = 1) -> np.ndarray:
    """Power detected in each of (TM, TE, HE^e, HE^o) by the vector mode sorter.

    ``basis`` may be prebuilt :class:`VectorModeFields` (fast path) or the
    :func:`vector_mode_basis` state dictionary together with ``w0``.
    """
    if not isinstance(basis, VectorModeFields):
        if w0 is None:
            raise ValueError("w0 is required when basis fields are not prebuilt")
        if basis is not None:
            ell = next(iter(basis.values())).ell
        basis = VectorModeFields.build(field.grid, ell, w0)
    return np.array([abs(jones_overlap(field, basis[k])) ** 2 for k in VECTOR_MODE_NAMES])


def oam_spectrum(field: SampledField, w0: float, ell_range) -> dict[int, complex]:
    """LG_{0,l} expansion coefficients for l in ``ell_range`` (inclusive pair or iterable)."""
    if isinstance(ell_range, tuple) and len(ell_range) == 2:
        ells = range(ell_range[0], ell_range[1] + 1)
    else:
        ells = list(ell_range)
    bound = field.grid.n // 8
    if any(abs(l) > bound for l in ells):
        raise AliasingError(f"ell range exceeds aliasing bound {bound}")
    return {l: modal_overlap(field, make_oam_mode(field.grid, l, w0)) for l in ells}


# -- file formats -------------------------------------------------------------

_FIELD_MAGIC = b"CLFD"


def write_field_raw(field: SampledField, path) -> None:
    """16-byte header (magic, u32 n, f64 pitch) then row-major complex64, little-endian."""
    g = field.grid
    header = _FIELD_MAGIC + struct.pack("<Id", g.n, g.pitch)
    data = field.values.astype("<c8").tobytes()
    Path(path).write_bytes(header + data)


def read_field_raw(path, wavelength: float = 633e-9) -> SampledField:
    raw = Path(path).read_bytes()
    if raw[:4] != _FIELD_MAGIC:
        raise ValueError(f"{path}: not a CLFD field file")
    n, pitch = struct.unpack("<Id", raw[4:16])
    values = np.frombuffer(raw[16:], dtype="<c8")
    if values.size != n * n:
        raise ValueError(f"{path}: expected {n * n} samples, found {values.size}")
    return SampledField(GridSpec(n, pitch, wavelength), values.reshape(n, n).astype(complex))


def write_intensity_pgm(field: SampledField | JonesField, path, maxval: int = 255) -> None:
    """Binary portable graymap of the intensity, scaled to the peak."""
    if isinstance(field, JonesField):
        inten = field.right.intensity() + field.left.intensity()
    else:
        inten = field.intensity()
    peak = inten.max()
    scaled = np.zeros_like(inten) if peak == 0 else inten / peak
    data = np.round(scaled * maxval).astype(">u2" if maxval > 255 else np.uint8)
    n_rows, n_cols = data.shape
    Path(path).write_bytes(f"P5\n{n_cols} {n_rows}\n{maxval}\n".encode() + data.tobytes())
