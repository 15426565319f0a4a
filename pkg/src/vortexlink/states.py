"""Hybrid OAM x polarisation qubit-pair states, concurrence and fidelity.

All 4-vectors and 4x4 matrices use the ordered basis

    (|l,R>, |l,L>, |-l,R>, |-l,L>)

i.e. the OAM qubit is the first (major) tensor factor with basis (|l>, |-l>)
and polarisation is the second factor with basis (|R>, |L>).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PHYSICAL_TOL = 1e-10
NORM_TOL = 1e-6

SIGMA = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)
_SY_SY = np.kron(SIGMA[2], SIGMA[2])
# PAULI_PRODUCTS[n, m] = sigma_n (OAM) x sigma_m (polarisation)
PAULI_PRODUCTS = np.array([[np.kron(a, b) for b in SIGMA] for a in SIGMA])

VECTOR_MODE_NAMES = ("TM", "TE", "HEe", "HEo")


class InvalidStateError(ValueError):
    """Raised for non-normalised states or non-physical density matrices."""


@dataclass(frozen=True)
class HybridState:
    """Pure hybrid state amp_lR|l,R> + amp_lL|l,L> + amp_mR|-l,R> + amp_mL|-l,L>."""

    amp_lR: complex
    amp_lL: complex
    amp_mR: complex
    amp_mL: complex
    ell: int = 1

    def __post_init__(self):
        if int(self.ell) != self.ell or self.ell < 1:
            raise InvalidStateError(f"ell must be a positive integer, got {self.ell!r}")

    @classmethod
    def from_vector(cls, vec, ell: int = 1) -> HybridState:
        v = np.asarray(vec, dtype=complex).reshape(-1)
        if v.shape != (4,):
            raise InvalidStateError(f"expected 4 amplitudes, got shape {v.shape}")
        return cls(complex(v[0]), complex(v[1]), complex(v[2]), complex(v[3]), ell)

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.amp_lR, self.amp_lL, self.amp_mR, self.amp_mL], dtype=complex)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.vector))

    def normalize(self) -> HybridState:
        n = self.norm
        if n == 0.0:
            raise InvalidStateError("cannot normalise the null state")
        return HybridState.from_vector(self.vector / n, self.ell)

    def projector(self) -> DensityMatrix:
        v = self.vector
        return DensityMatrix(np.outer(v, v.conj()))

    def check_normalized(self, tol: float = NORM_TOL) -> None:
        if abs(self.norm - 1.0) > tol:
            raise InvalidStateError(f"state norm {self.norm:.3g} deviates from 1")


@dataclass(frozen=True)
class DensityMatrix:
    """Physical 4x4 density matrix (Hermitian, PSD, unit trace).

    Construction validates physicality within ``PHYSICAL_TOL``; use
    :func:`project_physical` for noisy estimates.
    """

    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        rho = np.array(self.entries, dtype=complex)
        if rho.shape != (4, 4):
            raise InvalidStateError(f"density matrix must be 4x4, got {rho.shape}")
        if not np.all(np.isfinite(rho)):
            raise InvalidStateError("density matrix has non-finite entries")
        if np.max(np.abs(rho - rho.conj().T)) > PHYSICAL_TOL:
            raise InvalidStateError("density matrix is not Hermitian")
        if abs(np.trace(rho).real - 1.0) > PHYSICAL_TOL:
            raise InvalidStateError(f"trace {np.trace(rho).real:.12g} != 1")
        if np.linalg.eigvalsh(rho).min() < -PHYSICAL_TOL:
            raise InvalidStateError("density matrix has negative eigenvalues")
        rho.setflags(write=False)
        object.__setattr__(self, "entries", rho)

    @classmethod
    def maximally_mixed(cls) -> DensityMatrix:
        return cls(np.eye(4) / 4)

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


def vector_mode_basis(ell: int = 1) -> dict[str, HybridState]:
    """The four vector vortex modes TM, TE, HE^e, HE^o of the |l| subspace."""
    s = 1 / np.sqrt(2)
    return {
        "TM": HybridState(s, 0, 0, s, ell),
        "TE": HybridState(s, 0, 0, -s, ell),
        "HEe": HybridState(0, s, s, 0, ell),
        "HEo": HybridState(0, s, -s, 0, ell),
    }


def concurrence_pure(state: HybridState) -> float:
    """Closed-form concurrence 2|a_lR a_mL - a_lL a_mR| of a normalised pure state."""
    state.check_normalized()
    c = 2 * abs(state.amp_lR * state.amp_mL - state.amp_lL * state.amp_mR)
    return float(min(c, 1.0))


def _as_matrix(rho) -> np.ndarray:
    if isinstance(rho, DensityMatrix):
        return rho.entries
    return DensityMatrix(rho).entries


# Eigenvalues of rho below this fraction of the largest are rounding noise.
# Concurrence is not Lipschitz at the rank-deficient boundary, so keeping
# them would leak errors of order sqrt(eps) into the result.
_RANK_TOL = 1e-14


def concurrence_mixed(rho: DensityMatrix) -> float:
    """Wootters concurrence max(0, s1 - s2 - s3 - s4).

    The s_i (square roots of the eigenvalues of rho (sy x sy) rho* (sy x sy))
    are computed as singular values of the symmetric matrix
    Psi^T (sy x sy) Psi, where the columns of Psi are the eigenvectors of rho
    scaled by the square roots of their eigenvalues.
    """
    r = _as_matrix(rho)
    w, v = np.linalg.eigh(r)
    keep = w > _RANK_TOL * w.max()
    psi = v[:, keep] * np.sqrt(w[keep])
    tau = psi.T @ _SY_SY @ psi
    s = np.zeros(4)
    s[:tau.shape[0]] = np.linalg.svd(tau, compute_uv=False)
    return float(np.clip(s[0] - s[1] - s[2] - s[3], 0.0, 1.0))


def fidelity(rho: DensityMatrix, target: HybridState) -> float:
    """<target| rho |target> for a pure target state."""
    target.check_normalized()
    r = _as_matrix(rho)
    v = target.vector
    f = float(np.real(v.conj() @ r @ v))
    if f < -PHYSICAL_TOL or f > 1 + PHYSICAL_TOL:
        raise InvalidStateError(f"fidelity {f} outside [0, 1]")
    return min(max(f, 0.0), 1.0)


def pauli_decompose(rho) -> np.ndarray:
    """Real coefficients c[n, m] with rho = sum c[n, m] sigma_n x sigma_m."""
    r = np.asarray(rho.entries if isinstance(rho, DensityMatrix) else rho, dtype=complex)
    coeffs = np.einsum("nmij,ji->nm", PAULI_PRODUCTS, r) / 4
    return coeffs.real


def pauli_assemble(coeffs) -> np.ndarray:
    """Inverse of :func:`pauli_decompose`; returns the raw 4x4 matrix."""
    c = np.asarray(coeffs, dtype=float).reshape(4, 4)
    return np.einsum("nm,nmij->ij", c, PAULI_PRODUCTS)


def project_physical(matrix) -> DensityMatrix:
    """Clip negative eigenvalues of a Hermitian matrix and renormalise the trace."""
    m = np.asarray(matrix, dtype=complex)
    if m.shape != (4, 4):
        raise InvalidStateError(f"expected a 4x4 matrix, got {m.shape}")
    scale = max(1.0, float(np.max(np.abs(m))))
    if np.max(np.abs(m - m.conj().T)) > PHYSICAL_TOL * scale:
        raise InvalidStateError("matrix is not Hermitian")
    w, v = np.linalg.eigh((m + m.conj().T) / 2)
    w = np.clip(w, 0, None)
    total = w.sum()
    if total <= 0:
        raise InvalidStateError("matrix has no positive part to project onto")
    rho = (v * (w / total)) @ v.conj().T
    return DensityMatrix((rho + rho.conj().T) / 2)


def random_pure_state(rng: np.random.Generator, ell: int = 1) -> HybridState:
    v = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    return HybridState.from_vector(v / np.linalg.norm(v), ell)


def random_density_matrix(rng: np.random.Generator, rank: int = 4) -> DensityMatrix:
    g = rng.standard_normal((4, rank)) + 1j * rng.standard_normal((4, rank))
    rho = g @ g.conj().T
    rho /= np.trace(rho).real
    return DensityMatrix((rho + rho.conj().T) / 2)


# -- plain-text serialisation -------------------------------------------------

def _format_complex_lines(values) -> list[str]:
    return [f"{complex(z).real!r} {complex(z).imag!r}" for z in values]


def dumps(obj: HybridState | DensityMatrix) -> str:
    if isinstance(obj, HybridState):
        lines = [f"hybridstate ell={obj.ell}"] + _format_complex_lines(obj.vector)
    elif isinstance(obj, DensityMatrix):
        lines = ["densitymatrix"] + _format_complex_lines(obj.entries.reshape(-1))
    else:
        raise TypeError(f"cannot serialise {type(obj).__name__}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> HybridState | DensityMatrix:
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty state file")
    header, body = lines[0], lines[1:]
    values = []
    for ln in body:
        re_s, im_s = ln.split()
        values.append(complex(float(re_s), float(im_s)))
    if header.startswith("hybridstate"):
        try:
            ell = int(header.split("ell=")[1])
        except (IndexError, ValueError) as exc:
            raise ValueError(f"bad header {header!r}") from exc
        if len(values) != 4:
            raise ValueError(f"hybridstate needs 4 amplitudes, got {len(values)}")
        return HybridState.from_vector(values, ell)
    if header == "densitymatrix":
        if len(values) != 16:
            raise ValueError(f"densitymatrix needs 16 entries, got {len(values)}")
        return DensityMatrix(np.array(values).reshape(4, 4))
    raise ValueError(f"unknown header {header!r}")


def save(obj: HybridState | DensityMatrix, path) -> None:
    Path(path).write_text(dumps(obj))


def load(path) -> HybridState | DensityMatrix:
    return loads(Path(path).read_text())
