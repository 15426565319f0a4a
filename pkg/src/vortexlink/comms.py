"""Channel inversion and four-vector-mode image transmission.

Each pixel (4 bits) occupies one time slot; bit k switches vector mode k of
(TM, TE, HE^e, HE^o) on or off. The four multiplexed carriers are mutually
incoherent, so detected sorter powers are P = T @ bits with T the per-screen
power crosstalk matrix.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import ChannelOperator, propagate_hybrid
from .optics import GridSpec, VectorModeFields, vector_mode_project
from .states import VECTOR_MODE_NAMES, vector_mode_basis
from .turbulence import PhaseScreen


class NotInvertibleError(ValueError):
    pass


@dataclass(frozen=True)
class PolarDecomposition:
    """M = U |M| with |M| = lambda0 |0><0| + lambda1 |1><1| (columns of ``eigvecs``)."""

    u: np.ndarray
    lambdas: tuple[float, float]
    eigvecs: np.ndarray

    @property
    def positive_part(self) -> np.ndarray:
        v = self.eigvecs
        return (v * np.array(self.lambdas)) @ v.conj().T


def polar_decompose(m: ChannelOperator | np.ndarray) -> PolarDecomposition:
    a = m.m if isinstance(m, ChannelOperator) else np.asarray(m, dtype=complex)
    w, s, vh = np.linalg.svd(a)
    if s[0] == 0:
        raise NotInvertibleError("cannot polar-decompose the zero operator")
    return PolarDecomposition(w @ vh, (float(s[0]), float(s[1])), vh.conj().T)


def conjugate_filter(m: ChannelOperator | np.ndarray, rank_tol: float = 1e-9) -> ChannelOperator:
    """Filter (lambda1 |0><0| + lambda0 |1><1|) U^dagger with filter @ M = lambda0 lambda1 * 1."""
    pd = polar_decompose(m)
    l0, l1 = pd.lambdas
    if l1 < rank_tol * l0:
        raise NotInvertibleError("rank-deficient channel cannot be compensated by filtering")
    v = pd.eigvecs
    swapped = (v * np.array([l1, l0])) @ v.conj().T
    return ChannelOperator(swapped @ pd.u.conj().T)


@dataclass(frozen=True)
class CrosstalkMatrix:
    """t[i, j]: power fraction detected in vector mode i when mode j is sent."""

    t: np.ndarray
    sr_context: float | None = None

    def __post_init__(self):
        t = np.array(self.t, dtype=float)
        if t.shape != (4, 4):
            raise ValueError("crosstalk matrix must be 4x4")
        if np.any(t < -1e-12):
            raise ValueError("crosstalk entries must be non-negative")
        if np.any(t.sum(axis=0) > 1 + 1e-6):
            raise ValueError("crosstalk columns must sum to at most 1")
        t = np.clip(t, 0, None)
        t.setflags(write=False)
        object.__setattr__(self, "t", t)

    @property
    def condition_number(self) -> float:
        return float(np.linalg.cond(self.t))

    def inverse(self, rel_cutoff: float = 1e-3) -> np.ndarray:
        """Truncated-SVD pseudo-inverse."""
        u, s, vh = np.linalg.svd(self.t)
        if s[0] == 0:
            raise NotInvertibleError("zero crosstalk matrix")
        keep = s >= rel_cutoff * s[0]
        s_inv = np.where(keep, 1 / np.where(keep, s, 1), 0.0)
        return (vh.conj().T * s_inv) @ u.conj().T

    def off_diagonal_mass(self) -> float:
        """Fraction of the detected power that lands outside the sent mode."""
        total = self.t.sum()
        return float(1 - np.trace(self.t) / total) if total > 0 else 0.0


def crosstalk_from_operator(m: ChannelOperator, ell: int = 1) -> np.ndarray:
    """|<v_i| (M x 1) |v_j>|^2 for the vector-mode basis states."""
    basis = vector_mode_basis(ell)
    vecs = np.array([basis[k].vector for k in VECTOR_MODE_NAMES])
    amp = vecs.conj() @ m.lifted() @ vecs.T
    return np.abs(amp) ** 2


def screen_crosstalk(screen: PhaseScreen, ell: int, w0: float,
                     fields: VectorModeFields | None = None) -> np.ndarray:
    fields = fields or VectorModeFields.build(screen.grid, ell, w0)
    cols = [vector_mode_project(propagate_hybrid(fields[k], screen), fields)
            for k in VECTOR_MODE_NAMES]
    return np.array(cols).T


def measure_crosstalk(screens, ell: int, w0: float) -> CrosstalkMatrix:
    """Average vector-mode power transfer over screen realisations."""
    screens = list(screens)
    if not screens:
        raise ValueError("need at least one screen")
    fields = VectorModeFields.build(screens[0].grid, ell, w0)
    t = np.mean([screen_crosstalk(s, ell, w0, fields) for s in screens], axis=0)
    srs = [s.measured_sr for s in screens if s.measured_sr is not None]
    return CrosstalkMatrix(t, float(np.mean(srs)) if srs else None)


# -- images ---------------------------------------------------------------------

@dataclass(frozen=True)
class ImageFrame:
    pixels: np.ndarray  # (height, width), values 0..15

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.size == 0:
            raise ValueError("image must be a non-empty 2-D array")
        if np.any(px < 0) or np.any(px > 15) or not np.all(px == np.round(px)):
            raise ValueError("pixels must be integers in [0, 15]")
        px = px.astype(np.uint8)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


def encode_image(img: ImageFrame) -> np.ndarray:
    """(n_slots, 4) on/off amplitudes; the MSB drives TM, the LSB HE^o."""
    flat = img.pixels.reshape(-1).astype(np.uint8)
    shifts = np.array([3, 2, 1, 0], dtype=np.uint8)
    return ((flat[:, None] >> shifts) & 1).astype(float)


def decode_image(symbols: np.ndarray, width: int, height: int) -> ImageFrame:
    bits = (np.asarray(symbols) > 0.5).astype(np.uint8)
    if bits.shape != (width * height, 4):
        raise ValueError(f"expected {(width * height, 4)} symbols, got {bits.shape}")
    values = bits @ np.array([8, 4, 2, 1], dtype=np.uint8)
    return ImageFrame(values.reshape(height, width))


def correlation_coefficient(a: ImageFrame, b: ImageFrame) -> float:
    """Pearson correlation of pixel values."""
    if a.pixels.shape != b.pixels.shape:
        raise ValueError("images differ in size")
    x = a.pixels.astype(float).ravel()
    y = b.pixels.astype(float).ravel()
    if x.std() == 0 or y.std() == 0:
        raise ValueError("correlation undefined for a constant image")
    return float(np.corrcoef(x, y)[0, 1])


@dataclass(frozen=True)
class LinkReport:
    correlation_uncorrected: float
    correlation_corrected: float
    threshold_used: float
    n_symbols: int
    condition_number: float
    sr: float | None = None

    def csv_rows(self) -> list[list]:
        return [
            [self.sr, self.threshold_used, False, self.correlation_uncorrected, self.n_symbols,
             self.condition_number],
            [self.sr, self.threshold_used, True, self.correlation_corrected, self.n_symbols,
             self.condition_number],
        ]


LINK_CSV_HEADER = ["sr", "threshold", "corrected", "correlation", "n_symbols", "condition_number"]


def write_link_report(report: LinkReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LINK_CSV_HEADER)
        w.writerows(report.csv_rows())


def _safe_corr(a: ImageFrame, b: ImageFrame) -> float:
    try:
        return correlation_coefficient(a, b)
    except ValueError:
        return float("nan")


def _threshold(powers: np.ndarray, frac: float) -> np.ndarray:
    peak = powers.max()
    if peak <= 0:
        return np.zeros_like(powers)
    return (powers > frac * peak).astype(float)


@dataclass
class Link:
    """A characterised channel: one or more screens cycled over the time slots.

    ``calibration`` is the crosstalk matrix used for correction; by default it
    is measured on the same screens, i.e. the exact channel matrix.
    """

    screens: list
    ell: int
    w0: float
    calibration: CrosstalkMatrix | None = None

    def __post_init__(self):
        if not self.screens:
            raise ValueError("a link needs at least one screen")
        fields = VectorModeFields.build(self.screens[0].grid, self.ell, self.w0)
        self._responses = [screen_crosstalk(s, self.ell, self.w0, fields) for s in self.screens]
        if self.calibration is None:
            self.calibration = CrosstalkMatrix(np.mean(self._responses, axis=0))

    @classmethod
    def perfect(cls, grid: GridSpec, ell: int, w0: float) -> Link:
        from .turbulence import flat_screen
        return cls([flat_screen(grid, w0)], ell, w0)

    def received_powers(self, symbols: np.ndarray) -> np.ndarray:
        out = np.empty_like(symbols, dtype=float)
        k = len(self._responses)
        for i, resp in enumerate(self._responses):
            out[i::k] = symbols[i::k] @ resp.T
        return out


def transmit(img: ImageFrame, channel: Link, threshold_frac: float = 0.15,
             correct: bool = True, rel_cutoff: float = 1e-3) -> tuple[ImageFrame, LinkReport]:
    """Send an image over the link and threshold the (optionally corrected) sorter powers."""
    if not 0 < threshold_frac < 1:
        raise ValueError("threshold_frac must lie in (0, 1)")
    symbols = encode_image(img)
    powers = channel.received_powers(symbols)
    cal = channel.calibration
    inv = cal.inverse(rel_cutoff)
    if not np.all(np.isfinite(inv)):
        raise NotInvertibleError("crosstalk matrix could not be regularised")
    raw_img = decode_image(_threshold(powers, threshold_frac), img.width, img.height)
    fixed_img = decode_image(_threshold(powers @ inv.T, threshold_frac), img.width, img.height)
    srs = [s.measured_sr for s in channel.screens if s.measured_sr is not None]
    report = LinkReport(
        correlation_uncorrected=_safe_corr(img, raw_img),
        correlation_corrected=_safe_corr(img, fixed_img),
        threshold_used=threshold_frac,
        n_symbols=len(symbols),
        condition_number=cal.condition_number,
        sr=float(np.mean(srs)) if srs else None,
    )
    return (fixed_img if correct else raw_img), report


# -- portable graymap --------------------------------------------------------------

def _pgm_tokens(data: bytes):
    pos = 0
    tokens = []
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while data[pos:pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    return tokens, pos + 1


def read_pgm(path, max_pixels: int = 4096 * 4096) -> ImageFrame:
    """Read a binary P5 graymap; maxval 15 is native, 255 is quantised to 16 levels."""
    data = Path(path).read_bytes()
    tokens, offset = _pgm_tokens(data)
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: only binary P5 graymaps are supported")
    width, height, maxval = (int(t) for t in tokens[1:])
    if width * height > max_pixels:
        raise ValueError(f"{path}: image too large ({width}x{height})")
    if maxval > 255:
        raise ValueError(f"{path}: 16-bit graymaps are not supported")
    px = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=offset)
    px = px.reshape(height, width)
    if maxval == 15:
        if px.max() > 15:
            raise ValueError(f"{path}: pixel exceeds maxval")
        return ImageFrame(px)
    return ImageFrame((px.astype(int) * 16) // (maxval + 1))


def write_pgm(img: ImageFrame, path) -> None:
    header = f"P5\n{img.width} {img.height}\n15\n".encode()
    Path(path).write_bytes(header + img.pixels.tobytes())


def make_test_image(width: int = 128, height: int = 128) -> ImageFrame:
    """Deterministic 4-bit test pattern: radial rings over a diagonal ramp."""
    y, x = np.mgrid[0:height, 0:width]
    ramp = (x + y) / (width + height - 2)
    rings = 0.5 + 0.5 * np.cos(np.hypot(x - width / 2, y - height / 2) / max(width, height) * 24)
    mix = 0.6 * ramp + 0.4 * rings
    mix = (mix - mix.min()) / (mix.max() - mix.min())
    return ImageFrame(np.round(15 * mix).astype(int))
