"""One-sided turbulence channel on the OAM degree of freedom.

A screen acts only on the spatial profile. Restricted to the {|l>, |-l>}
subspace it is the Kraus operator

    M = [[<l|S|l>,  <l|S|-l>],
         [<-l|S|l>, <-l|S|-l>]]

and the filtered output of any hybrid input is (M x 1)|psi_in>.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .optics import (GridSpec, JonesField, SampledField, _check_same_grid, hybrid_to_field,
                     make_oam_mode, modal_overlap)
from .states import (DensityMatrix, HybridState, InvalidStateError, project_physical,
                     vector_mode_basis)
from .turbulence import PhaseScreen

# Ratio between the OAM mode waist and the Gaussian radius that defines the
# Strehl ratio. With it, the quadratic structure-function ensemble reproduces
# C = SR / (SR^2 - SR + 1) exactly.
MODE_WAIST_FACTOR = float(np.sqrt(2.0))


class ChannelExtinctionError(ValueError):
    """The channel transmits no power into the +-l subspace."""


@dataclass(frozen=True)
class ModalCoupling:
    """Subspace couplings of a screen: p0 = <l|S|l>, p_plus = <-l|S|l>, p_minus = <l|S|-l>.

    ``p0_mm`` is <-l|S|-l>; the symmetric channel model assumes it equals ``p0``.
    """

    p0: complex
    p_plus: complex
    p_minus: complex
    ell: int = 1
    p0_mm: complex | None = None

    def __post_init__(self):
        for name in ("p0", "p_plus", "p_minus", "p0_mm"):
            v = getattr(self, name)
            if v is not None and abs(v) > 1 + 1e-9:
                raise ValueError(f"|{name}| = {abs(v):.6g} exceeds 1")

    @property
    def p0_minus(self) -> complex:
        return self.p0 if self.p0_mm is None else self.p0_mm

    @property
    def norm_p(self) -> float:
        """Survival probability for the maximally entangled input."""
        return (abs(self.p0) ** 2 + abs(self.p0_minus) ** 2
                + abs(self.p_plus) ** 2 + abs(self.p_minus) ** 2) / 2

    def operator(self, symmetric: bool = False) -> ChannelOperator:
        d = self.p0 if symmetric else self.p0_minus
        return ChannelOperator(np.array([[self.p0, self.p_minus], [self.p_plus, d]]))

    def as_row(self) -> dict:
        out = {}
        for name, v in (("p0_ll", self.p0), ("p0_mm", self.p0_minus),
                        ("p_plus", self.p_plus), ("p_minus", self.p_minus)):
            out[f"{name}_re"] = float(np.real(v))
            out[f"{name}_im"] = float(np.imag(v))
        return out


@dataclass(frozen=True)
class ChannelOperator:
    """2x2 operator on the ordered OAM basis (|l>, |-l>)."""

    m: np.ndarray

    def __post_init__(self):
        m = np.array(self.m, dtype=complex)
        if m.shape != (2, 2) or not np.all(np.isfinite(m)):
            raise ValueError("channel operator must be a finite 2x2 matrix")
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    def lifted(self) -> np.ndarray:
        """M x 1 acting on the 4-dim hybrid space."""
        return np.kron(self.m, np.eye(2))

    def apply(self, state: HybridState) -> np.ndarray:
        """Unnormalised amplitudes of (M x 1)|state>."""
        return self.lifted() @ state.vector

    def phase_aligned(self) -> ChannelOperator:
        """Remove the global phase so the largest-magnitude entry is real positive."""
        k = np.argmax(np.abs(self.m))
        z = self.m.flat[k]
        if z == 0:
            return self
        return ChannelOperator(self.m * (abs(z) / z))

    def normalized(self) -> ChannelOperator:
        s = np.linalg.norm(self.m, 2)
        if s == 0:
            raise ChannelExtinctionError("null channel operator")
        return ChannelOperator(self.m / s)

    @property
    def spectral_norm(self) -> float:
        return float(np.linalg.norm(self.m, 2))


@dataclass(frozen=True)
class GaussianCouplingModel:
    """Discrete Gaussian crosstalk p_l = exp(-l^2 / (2 delta^2))."""

    delta: float
    ell: int = 1

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")

    def weight(self, dl: int) -> float:
        return float(np.exp(-dl ** 2 / (2 * self.delta ** 2)))


@dataclass(frozen=True)
class FilteredState:
    """Projection of an output field on {|+-l>} x {R, L}.

    ``amplitudes`` are unnormalised, in the hybrid basis order.
    """

    amplitudes: np.ndarray
    survival: float
    ell: int = 1
    degenerate: bool = False

    def state(self) -> HybridState:
        if self.degenerate:
            raise ChannelExtinctionError("no power retained in the +-l subspace")
        return HybridState.from_vector(self.amplitudes, self.ell).normalize()

    def density(self) -> np.ndarray:
        """Unnormalised projector |a><a| (trace = retained power)."""
        a = self.amplitudes
        return np.outer(a, a.conj())


def propagate_hybrid(field: JonesField, screen: PhaseScreen) -> JonesField:
    """Apply the screen to the spatial profile of both polarisation components."""
    _check_same_grid(field.grid, screen.grid)
    t = screen.transmission
    return JonesField(SampledField(field.grid, field.right.values * t),
                      SampledField(field.grid, field.left.values * t))


def extract_couplings(screen: PhaseScreen, ell: int, w0: float) -> ModalCoupling:
    """Matrix elements of the screen between LG_{0,+-l} modes of waist ``w0``."""
    plus = make_oam_mode(screen.grid, ell, w0)
    minus = make_oam_mode(screen.grid, -ell, w0)
    t = screen.transmission
    sp = SampledField(screen.grid, plus.values * t)
    sm = SampledField(screen.grid, minus.values * t)
    return ModalCoupling(
        p0=modal_overlap(sp, plus),
        p_plus=modal_overlap(sp, minus),
        p_minus=modal_overlap(sm, plus),
        ell=ell,
        p0_mm=modal_overlap(sm, minus),
    )


def subspace_filter(output: JonesField, ell: int, w0: float, input_power: float | None = None,
                    min_power: float = 1e-15) -> FilteredState:
    """Retain only the |+-l> OAM content of both polarisation components."""
    plus = make_oam_mode(output.grid, ell, w0)
    minus = make_oam_mode(output.grid, -ell, w0)
    amps = np.array([
        modal_overlap(output.right, plus),
        modal_overlap(output.left, plus),
        modal_overlap(output.right, minus),
        modal_overlap(output.left, minus),
    ])
    retained = float(np.sum(np.abs(amps) ** 2))
    total = output.power if input_power is None else input_power
    survival = retained / total if total > 0 else 0.0
    return FilteredState(amps, survival, ell, degenerate=retained <= min_power)


def channel_operator_from_state(out: FilteredState | HybridState | np.ndarray) -> ChannelOperator:
    """Read M off the filtered output of the maximally entangled TM input.

    With |TM> = (|l,R> + |-l,L>)/sqrt2 the output amplitudes are
    (M11, M12, M21, M22)/sqrt2 in the hybrid basis order.
    """
    if isinstance(out, FilteredState):
        a = out.amplitudes
    elif isinstance(out, HybridState):
        a = out.vector
    else:
        a = np.asarray(out, dtype=complex)
    a_lR, a_lL, a_mR, a_mL = a
    return ChannelOperator(np.sqrt(2) * np.array([[a_lR, a_lL], [a_mR, a_mL]]))


def channel_concurrence_factor(c: ModalCoupling) -> float:
    """Fraction of entanglement preserved: |p0 p0' - p_2l p_-2l| / p."""
    p = c.norm_p
    if p <= 0:
        raise ChannelExtinctionError("total extinction (p = 0)")
    return float(abs(c.p0 * c.p0_minus - c.p_plus * c.p_minus) / p)


def concurrence_vs_sr(sr: float) -> float:
    """Theory curve SR / (SR^2 - SR + 1) for one-sided single-screen turbulence."""
    if not 0 < sr <= 1:
        raise ValueError(f"SR must lie in (0, 1], got {sr}")
    return sr / (sr * sr - sr + 1)


def gaussian_model_factor(model: GaussianCouplingModel) -> float:
    """|1 - exp(-l^2 / delta^2)|."""
    return float(abs(1 - np.exp(-model.ell ** 2 / model.delta ** 2)))


def input_state(theta: float, ell: int = 1) -> HybridState:
    """cos(theta)|l,R> + sin(theta)|-l,L>, concurrence |sin 2 theta|."""
    return HybridState(np.cos(theta), 0, 0, np.sin(theta), ell)


def tm_field(grid: GridSpec, ell: int, w0: float) -> JonesField:
    return hybrid_to_field(vector_mode_basis(ell)["TM"], grid, w0)


def ensemble_density(filtered) -> DensityMatrix:
    """Normalised average of the unnormalised filtered projectors.

    This is the state a detector integrating over many screen realisations
    sees: each realisation contributes with its retained power.
    """
    acc = np.zeros((4, 4), dtype=complex)
    for f in filtered:
        acc += f.density()
    tr = np.trace(acc).real
    if tr <= 0:
        raise ChannelExtinctionError("ensemble retained no power")
    rho = acc / tr
    try:
        return DensityMatrix((rho + rho.conj().T) / 2)
    except InvalidStateError:
        return project_physical(rho)
