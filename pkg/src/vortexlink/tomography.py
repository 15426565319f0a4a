"""36-projection state tomography of the hybrid OAM x polarisation state."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .optics import JonesField, SampledField, make_oam_mode, modal_overlap
from .states import (PAULI_PRODUCTS, DensityMatrix, InvalidStateError, concurrence_mixed,
                     fidelity, project_physical, vector_mode_basis)

_S = 1 / np.sqrt(2)
# Components in the (R, L) basis with R = (H - iV)/sqrt2, L = (H + iV)/sqrt2.
POLARISATION_KETS = {
    "H": np.array([_S, _S], dtype=complex),
    "V": np.array([1j * _S, -1j * _S]),
    "D": np.array([(1 + 1j) / 2, (1 - 1j) / 2]),
    "A": np.array([(1 - 1j) / 2, (1 + 1j) / 2]),
    "R": np.array([1, 0], dtype=complex),
    "L": np.array([0, 1], dtype=complex),
}
# Components in the (|l>, |-l>) basis.
OAM_KETS = {
    "l": np.array([1, 0], dtype=complex),
    "-l": np.array([0, 1], dtype=complex),
    "s0": np.array([_S, _S], dtype=complex),
    "s90": np.array([_S, 1j * _S]),
    "s180": np.array([_S, -_S], dtype=complex),
    "s270": np.array([_S, -1j * _S]),
}
POL_NAMES = tuple(POLARISATION_KETS)
OAM_NAMES = tuple(OAM_KETS)


class RankDeficientError(ValueError):
    pass


class MLEConvergenceError(RuntimeError):
    """Raised when the optimiser hits ``max_iter``; carries the best iterate."""

    def __init__(self, message: str, best: DensityMatrix, residual: float):
        super().__init__(message)
        self.best = best
        self.residual = residual


@dataclass(frozen=True)
class ProjectorSet:
    """Rank-1 projectors |oam> x |pol>, indexed by (pol_index, oam_index)."""

    indices: tuple = tuple((p, o) for p in range(6) for o in range(6))
    vectors: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        vecs = np.array([
            np.kron(OAM_KETS[OAM_NAMES[o]], POLARISATION_KETS[POL_NAMES[p]])
            for p, o in self.indices
        ])
        object.__setattr__(self, "vectors", vecs)

    @classmethod
    def standard(cls) -> ProjectorSet:
        return cls()

    def without(self, *drop) -> ProjectorSet:
        return ProjectorSet(tuple(i for i in self.indices if i not in set(drop)))

    def __len__(self) -> int:
        return len(self.indices)

    def design_matrix(self) -> np.ndarray:
        """Rows: <v_k| sigma_n x sigma_m |v_k> for the 16 Pauli products."""
        ops = PAULI_PRODUCTS.reshape(16, 4, 4)
        return np.real(np.einsum("ki,nij,kj->kn", self.vectors.conj(), ops, self.vectors))

    def probabilities(self, rho) -> np.ndarray:
        r = rho.entries if isinstance(rho, DensityMatrix) else np.asarray(rho)
        return np.real(np.einsum("ki,ij,kj->k", self.vectors.conj(), r, self.vectors))


@dataclass(frozen=True)
class NoiseModel:
    kind: str  # "gaussian" or "poisson"
    level: float  # relative sigma, or mean photon number per unit probability

    def __post_init__(self):
        if self.kind not in ("gaussian", "poisson"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.level < 0:
            raise ValueError("noise level must be non-negative")


@dataclass(frozen=True)
class MeasurementRecord:
    intensities: np.ndarray
    indices: tuple
    scale: float = 1.0
    noise: NoiseModel | None = None
    seed: int | None = None

    def __post_init__(self):
        inten = np.asarray(self.intensities, dtype=float)
        if inten.shape != (len(self.indices),):
            raise ValueError("one intensity per projector required")
        if np.any(inten < 0):
            raise ValueError("intensities must be non-negative")
        object.__setattr__(self, "intensities", inten)

    def projector_set(self) -> ProjectorSet:
        return ProjectorSet(tuple(self.indices))

    def __add__(self, other: MeasurementRecord) -> MeasurementRecord:
        if tuple(other.indices) != tuple(self.indices):
            raise ValueError("records use different projector sets")
        return MeasurementRecord(self.intensities + other.intensities, self.indices,
                                 self.scale + other.scale)

    def scaled(self, c: float) -> MeasurementRecord:
        return MeasurementRecord(self.intensities * c, self.indices, self.scale * c,
                                 self.noise, self.seed)


def simulate_measurements(rho: DensityMatrix, pset: ProjectorSet | None = None,
                          noise: NoiseModel | None = None, seed: int | None = None,
                          scale: float = 1.0) -> MeasurementRecord:
    """Born-rule intensities scale * Tr(Pi_k rho), optionally with noise."""
    pset = pset or ProjectorSet()
    ideal = scale * np.clip(pset.probabilities(rho), 0, None)
    return add_noise(MeasurementRecord(ideal, pset.indices, scale), noise, seed)


def add_noise(record: MeasurementRecord, noise: NoiseModel | None,
              seed: int | None = None) -> MeasurementRecord:
    """Relative Gaussian noise per entry, or Poisson counts at ``level`` photons per unit probability."""
    if noise is None or noise.level == 0:
        return replace(record, noise=noise, seed=seed)
    ideal = record.intensities
    rng = np.random.default_rng(seed)
    if noise.kind == "gaussian":
        inten = np.clip(ideal * (1 + noise.level * rng.standard_normal(ideal.shape)), 0, None)
    else:
        counts = rng.poisson(ideal / record.scale * noise.level)
        inten = counts * (record.scale / noise.level)
    return MeasurementRecord(inten, record.indices, record.scale, noise, seed)


def measure_field(field: JonesField, ell: int, w0: float,
                  pset: ProjectorSet | None = None) -> MeasurementRecord:
    """Intensities of polarisation-filtered OAM hologram projections of a field.

    Each projection is the on-axis far-field intensity after matching the
    polarisation component and the OAM hologram, i.e. |<o x p|E>|^2.
    """
    pset = pset or ProjectorSet()
    plus = make_oam_mode(field.grid, ell, w0).values
    minus = make_oam_mode(field.grid, -ell, w0).values
    holograms = {
        k: SampledField(field.grid, v[0] * plus + v[1] * minus) for k, v in OAM_KETS.items()
    }
    overlaps = {
        (k, comp): modal_overlap(getattr(field, comp), holo)
        for k, holo in holograms.items() for comp in ("right", "left")
    }
    inten = []
    for p, o in pset.indices:
        pol = POLARISATION_KETS[POL_NAMES[p]]
        name = OAM_NAMES[o]
        amp = np.conj(pol[0]) * overlaps[name, "right"] + np.conj(pol[1]) * overlaps[name, "left"]
        inten.append(abs(amp) ** 2)
    return MeasurementRecord(np.array(inten), pset.indices, field.power)


def _check_rank(pset: ProjectorSet) -> np.ndarray:
    a = pset.design_matrix()
    if np.linalg.matrix_rank(a, tol=1e-10) < 16:
        raise RankDeficientError(f"projector set of {len(pset)} elements is not informationally complete")
    return a


def _linear_matrix(record: MeasurementRecord) -> np.ndarray:
    a = _check_rank(record.projector_set())
    coeffs, *_ = np.linalg.lstsq(a, record.intensities, rcond=None)
    raw = np.einsum("n,nij->ij", coeffs, PAULI_PRODUCTS.reshape(16, 4, 4))
    tr = np.trace(raw).real
    if tr <= 0:
        raise InvalidStateError("record has no signal")
    raw = raw / tr
    return (raw + raw.conj().T) / 2


def reconstruct_linear(record: MeasurementRecord) -> DensityMatrix:
    """Least-squares Pauli inversion followed by projection onto physical states."""
    return project_physical(_linear_matrix(record))


def trace_distance(a: DensityMatrix, b: DensityMatrix) -> float:
    d = np.asarray(a.entries) - np.asarray(b.entries)
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh((d + d.conj().T) / 2))))


# -- maximum likelihood -------------------------------------------------------

_TRIU = np.triu_indices(4, 1)


def _t_from_params(x: np.ndarray) -> np.ndarray:
    t = np.zeros((4, 4), dtype=complex)
    t[np.diag_indices(4)] = x[:4]
    t[_TRIU] = x[4:10] + 1j * x[10:16]
    return t


def _params_from_rho(rho: np.ndarray, eps: float = 1e-10) -> np.ndarray:
    mixed = (rho + eps * np.eye(4)) / (1 + 4 * eps)
    lower = np.linalg.cholesky(mixed)
    t = lower.conj().T  # rho = T^dagger T with T upper triangular
    return np.concatenate([t[np.diag_indices(4)].real, t[_TRIU].real, t[_TRIU].imag])


class _ChiSquare:
    """sum_k w_k (I_k - s q_k)^2 with q_k = <v_k| T^dag T |v_k> / Tr(T^dag T)."""

    def __init__(self, record: MeasurementRecord):
        peak = record.intensities.max()
        if peak <= 0:
            raise InvalidStateError("record has no signal")
        self.peak = peak
        self.data = record.intensities / peak
        self.weights = 1.0 / np.maximum(self.data, 1e-6)
        self.vectors = record.projector_set().vectors

    def rho(self, x) -> np.ndarray:
        t = _t_from_params(x)
        g = t.conj().T @ t
        return g / np.trace(g).real

    def residual_at(self, rho: np.ndarray) -> tuple[float, float]:
        """Objective with the best scale for a fixed rho."""
        q = np.real(np.einsum("ki,ij,kj->k", self.vectors.conj(), rho, self.vectors))
        w = self.weights
        s = float(np.sum(w * self.data * q) / np.sum(w * q * q))
        return float(np.sum(w * (self.data - s * q) ** 2)), s

    def __call__(self, params):
        x, s = params[:16], params[16]
        t = _t_from_params(x)
        tv = self.vectors @ t.T  # rows: T v_k
        a = np.sum(np.abs(tv) ** 2, axis=1)
        tr = float(np.sum(np.abs(t) ** 2))
        q = a / tr
        r = self.data - s * q
        f = float(np.sum(self.weights * r * r))
        g_q = -2 * self.weights * s * r
        g_s = float(np.sum(-2 * self.weights * r * q))
        # d q_k / d conj(T) = (T v_k) v_k^dagger^T / tr - a_k T / tr^2
        grad_t = (tv.T * g_q) @ self.vectors.conj() / tr - np.sum(g_q * a) * t / tr ** 2
        grad_t = 2 * grad_t
        grad = np.concatenate([
            grad_t[np.diag_indices(4)].real,
            grad_t[_TRIU].real,
            grad_t[_TRIU].imag,
            [g_s],
        ])
        return f, grad


@dataclass(frozen=True)
class MLEResult:
    rho: DensityMatrix
    residual: float
    linear_residual: float
    iterations: int
    scale: float


def reconstruct_mle(record: MeasurementRecord, max_iter: int = 500, tol: float = 1e-10,
                    initial: DensityMatrix | None = None) -> MLEResult:
    """Weighted chi-square fit over physical states rho = T^dag T / Tr(T^dag T).

    Starts from the linear-inversion estimate; the returned residual never
    exceeds that of the starting point.
    """
    chi = _ChiSquare(record)
    start = initial.entries if initial is not None else reconstruct_linear(record).entries
    lin_res, lin_s = chi.residual_at(start)
    x0 = np.concatenate([_params_from_rho(start), [lin_s]])
    res = minimize(chi, x0, jac=True, method="L-BFGS-B",
                   options={"maxiter": max_iter, "ftol": tol, "gtol": 1e-14})
    rho_fit = chi.rho(res.x[:16])
    fit_res = float(res.fun)
    if fit_res > lin_res:
        rho_fit, fit_res, scale = start, lin_res, lin_s
    else:
        scale = float(res.x[16])
    best = DensityMatrix((rho_fit + rho_fit.conj().T) / 2)
    if not res.success and res.nit >= max_iter:
        raise MLEConvergenceError(f"MLE did not converge in {max_iter} iterations", best, fit_res)
    return MLEResult(best, fit_res, lin_res, int(res.nit), scale * chi.peak)


# -- I/O ------------------------------------------------------------------------

def write_record_csv(record: MeasurementRecord, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["pol_index", "oam_index", "intensity"])
        for (p, o), v in zip(record.indices, record.intensities):
            w.writerow([p, o, repr(float(v))])


def read_record_csv(path) -> MeasurementRecord:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    indices = tuple((int(r["pol_index"]), int(r["oam_index"])) for r in rows)
    return MeasurementRecord(np.array([float(r["intensity"]) for r in rows]), indices)


def reconstruction_report(rho: DensityMatrix, residual: float | None = None,
                          iterations: int | None = None, ell: int = 1) -> dict:
    tm = vector_mode_basis(ell)["TM"]
    return {
        "residual": residual,
        "iterations": iterations,
        "concurrence": concurrence_mixed(rho),
        "fidelity_tm": fidelity(rho, tm),
    }


def write_report(report: dict, path) -> None:
    Path(path).write_text(json.dumps(report, indent=2) + "\n")
