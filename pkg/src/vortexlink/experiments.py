"""Reproducible experiment runs: sweeps, calibration, crosstalk, image link and tomography demos.

Every run writes CSV tables plus ``manifest.json`` (configuration echo,
seeds, package version). Passing the manifest back as the configuration
reproduces the tables exactly.

Realisation ``r`` of every SR point uses screen seed ``seed + r``, so the
points of a sweep share the same normalised turbulence draws and differ
only in strength.
"""
from __future__ import annotations

import configparser
import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .channel import (MODE_WAIST_FACTOR, channel_concurrence_factor, concurrence_vs_sr,
                      ensemble_density, extract_couplings, input_state, propagate_hybrid,
                      subspace_filter, tm_field)
from .comms import (Link, LINK_CSV_HEADER, make_test_image, measure_crosstalk, read_pgm,
                    transmit, write_pgm)
from .optics import GridSpec, SampledField, hybrid_to_field, make_oam_mode, oam_spectrum
from .states import concurrence_mixed, fidelity, random_density_matrix, vector_mode_basis
from .tomography import (NoiseModel, add_noise, measure_field, reconstruct_linear, reconstruct_mle,
                         reconstruction_report, simulate_measurements, trace_distance,
                         write_record_csv, write_report)
from .turbulence import (PhaseScreen, TurbulenceSpec, calibrate_screens, generate_phase_screen,
                         measure_strehl, write_calibration_csv)

DEFAULT_SR = (1.0, 0.85, 0.7, 0.5, 0.4, 0.3)


@dataclass(frozen=True)
class ExperimentConfig:
    """All physical quantities in SI units.

    ``w0`` is the Gaussian radius that defines the Strehl ratio; the OAM
    modes use waist ``mode_waist_factor * w0``.
    """

    name: str = "experiment"
    n: int = 256
    fov_factor: float = 16.0
    wavelength: float = 633e-9
    w0: float = 1e-3
    ell: int = 1
    mode_waist_factor: float = MODE_WAIST_FACTOR
    sr_list: tuple = DEFAULT_SR
    realizations: int = 100
    seed: int = 0
    workers: int = 1
    noise: str = "none"
    noise_level: float = 0.0
    tomography: str = "linear"
    threshold: float = 0.15
    out: str = "results"

    def __post_init__(self):
        object.__setattr__(self, "sr_list", tuple(float(s) for s in self.sr_list))
        if self.realizations < 1:
            raise ValueError("realizations must be at least 1")
        if not self.sr_list:
            raise ValueError("sr_list must not be empty")
        for sr in self.sr_list:
            if not 0 < sr <= 1:
                raise ValueError(f"SR values must lie in (0, 1], got {sr}")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.noise not in ("none", "gaussian", "poisson"):
            raise ValueError(f"unknown noise model {self.noise!r}")
        if self.tomography not in ("linear", "mle"):
            raise ValueError(f"unknown tomography method {self.tomography!r}")
        if self.ell == 0:
            raise ValueError("ell must be nonzero")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    @property
    def grid(self) -> GridSpec:
        return GridSpec.for_beam(self.w0, self.n, self.fov_factor, self.wavelength)

    @property
    def mode_waist(self) -> float:
        return self.mode_waist_factor * self.w0

    @property
    def noise_model(self) -> NoiseModel | None:
        return None if self.noise == "none" else NoiseModel(self.noise, self.noise_level)

    def screen(self, sr: float, r: int) -> PhaseScreen:
        spec = TurbulenceSpec.from_strehl(sr, self.w0, self.wavelength, seed=self.seed + r)
        return generate_phase_screen(spec, self.grid)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sr_list"] = list(self.sr_list)
        return d


_CONFIG_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(key: str, value: str):
    kind = _CONFIG_TYPES[key]
    if kind == "int":
        return int(value)
    if kind == "float":
        return float(value)
    if kind == "tuple":
        return tuple(float(v) for v in value.replace(",", " ").split())
    return value


def load_config(path, section: str | None = None) -> ExperimentConfig:
    """Read an INI file (one section, or ``section``) or a run manifest."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    if path.suffix == ".json":
        return ExperimentConfig(**json.loads(path.read_text())["config"])
    parser = configparser.ConfigParser()
    parser.read(path)
    names = parser.sections()
    if section is None:
        if len(names) != 1:
            raise ValueError(f"{path}: expected exactly one section, found {names}")
        section = names[0]
    values = {}
    for key, raw in parser[section].items():
        if key not in _CONFIG_TYPES:
            raise ValueError(f"{path}: unknown key {key!r}")
        values[key] = _coerce(key, raw)
    values.setdefault("name", section)
    return ExperimentConfig(**values)


def _out_dir(config: ExperimentConfig) -> Path:
    out = Path(config.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    return out


def write_manifest(config: ExperimentConfig, kind: str, seeds, outputs) -> Path:
    path = _out_dir(config) / "manifest.json"
    payload = {
        "experiment": kind,
        "version": __version__,
        "config": config.to_dict(),
        "seeds": [int(s) for s in seeds],
        "outputs": sorted(outputs),
    }
    path.write_text(json.dumps(payload, indent=2) + "\n")
    return path


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _fan_out(config: ExperimentConfig, fn, jobs) -> list:
    """Map in order; a process pool when ``workers > 1``."""
    if config.workers == 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=config.workers) as pool:
        return list(pool.map(fn, jobs, chunksize=4))


def _tomograph(config: ExperimentConfig, field, seed: int):
    record = add_noise(measure_field(field, config.ell, config.mode_waist),
                       config.noise_model, seed)
    if config.tomography == "mle":
        return reconstruct_mle(record).rho
    return reconstruct_linear(record)


# -- concurrence versus Strehl ratio ------------------------------------------------

SWEEP_HEADER = ["sr_target", "seed", "sr_measured", "c_in", "c_out", "fidelity", "c_ch",
                "survival", "p0_ll_re", "p0_ll_im", "p0_mm_re", "p0_mm_im", "p_plus_re",
                "p_plus_im", "p_minus_re", "p_minus_im"]
SWEEP_SUMMARY_HEADER = ["sr_target", "sr_measured_mean", "c_mean", "c_std", "fidelity_mean",
                        "fidelity_std", "c_ensemble", "fidelity_ensemble", "c_theory", "n"]


def _sweep_job(args):
    config, sr, r = args
    screen = config.screen(sr, r)
    tm = tm_field(config.grid, config.ell, config.mode_waist)
    out = propagate_hybrid(tm, screen)
    filtered = subspace_filter(out, config.ell, config.mode_waist, input_power=tm.power)
    coup = extract_couplings(screen, config.ell, config.mode_waist)
    rho = _tomograph(config, out, config.seed + r)
    target = vector_mode_basis(config.ell)["TM"]
    row = [sr, config.seed + r, measure_strehl(screen, config.w0), 1.0, concurrence_mixed(rho),
           fidelity(rho, target), channel_concurrence_factor(coup), filtered.survival,
           *coup.as_row().values()]
    return row, filtered


@dataclass
class SweepResult:
    rows: list
    summary: list = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        k = SWEEP_SUMMARY_HEADER.index(name)
        return np.array([s[k] for s in self.summary])


def sweep_sr(config: ExperimentConfig) -> SweepResult:
    """TM through ``realizations`` screens per SR point; no files written."""
    jobs = [(config, sr, r) for sr in config.sr_list for r in range(config.realizations)]
    results = _fan_out(config, _sweep_job, jobs)
    result = SweepResult([row for row, _ in results])
    target = vector_mode_basis(config.ell)["TM"]
    k = config.realizations
    for i, sr in enumerate(config.sr_list):
        chunk = results[i * k:(i + 1) * k]
        rows = np.array([row[2:6] for row, _ in chunk], dtype=float)
        ens = ensemble_density(f for _, f in chunk)
        result.summary.append([
            sr, float(rows[:, 0].mean()), float(rows[:, 2].mean()), float(rows[:, 2].std()),
            float(rows[:, 3].mean()), float(rows[:, 3].std()), concurrence_mixed(ens),
            fidelity(ens, target), concurrence_vs_sr(sr), k,
        ])
    return result


def run_sweep_sr(config: ExperimentConfig, plot: bool = True) -> SweepResult:
    out = _out_dir(config)
    result = sweep_sr(config)
    _write_csv(out / "sweep_sr.csv", SWEEP_HEADER, result.rows)
    _write_csv(out / "sweep_sr_summary.csv", SWEEP_SUMMARY_HEADER, result.summary)
    outputs = ["sweep_sr.csv", "sweep_sr_summary.csv"]
    if plot:
        from .plotting import plot_sweep
        plot_sweep(result, out / "sweep_sr.png")
        outputs.append("sweep_sr.png")
    write_manifest(config, "sweep-sr", [config.seed + r for r in range(config.realizations)],
                   outputs)
    return result


# -- linearity ----------------------------------------------------------------------

LINEARITY_HEADER = ["sr_target", "seed", "theta", "c_in", "c_out"]
FIT_HEADER = ["sr_target", "seed", "sr_measured", "slope", "intercept", "r_squared", "c_ch",
              "slope_rel_error"]


@dataclass(frozen=True)
class LinearFit:
    sr_target: float
    seed: int
    sr_measured: float
    slope: float
    intercept: float
    r_squared: float
    c_ch: float

    @property
    def slope_rel_error(self) -> float:
        return abs(self.slope - self.c_ch) / self.c_ch

    def row(self) -> list:
        return [self.sr_target, self.seed, self.sr_measured, self.slope, self.intercept,
                self.r_squared, self.c_ch, self.slope_rel_error]


def fit_line(x, y) -> tuple[float, float, float]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), float(r2)


def select_channel(config: ExperimentConfig, sr: float, tolerance: float = 0.05,
                   max_tries: int = 1000) -> tuple[int, PhaseScreen, float]:
    """First realisation (in seed order) whose measured SR is within ``tolerance`` of ``sr``.

    A single screen's SR scatters widely around the ensemble target, so a
    channel "at SR x" is taken to be one that measures x.
    """
    for r in range(max_tries):
        screen = config.screen(sr, r)
        measured = measure_strehl(screen, config.w0)
        if abs(measured - sr) <= tolerance:
            return r, screen, measured
    raise RuntimeError(f"no screen within {tolerance} of SR {sr} in {max_tries} seeds")


def linearity(config: ExperimentConfig, n_points: int = 9) -> tuple[list, list[LinearFit]]:
    """C_out versus C_in for cos(t)|l,R> + sin(t)|-l,L> over t in [0, pi/2].

    The symmetric range makes the two column norms of M enter equally, so
    the fitted slope estimates |det M| / p.
    """
    if n_points < 3:
        raise ValueError("need at least 3 input states")
    thetas = np.linspace(0, np.pi / 2, n_points)
    grid = config.grid
    rows, fits = [], []
    for sr in config.sr_list:
        r, screen, sr_meas = select_channel(config, sr)
        seed = config.seed + r
        c_ch = channel_concurrence_factor(extract_couplings(screen, config.ell, config.mode_waist))
        c_in, c_out = [], []
        for k, th in enumerate(thetas):
            field_in = hybrid_to_field(input_state(th, config.ell), grid, config.mode_waist)
            rho = _tomograph(config, propagate_hybrid(field_in, screen), seed + k)
            c_in.append(abs(np.sin(2 * th)))
            c_out.append(concurrence_mixed(rho))
            rows.append([sr, seed, float(th), c_in[-1], c_out[-1]])
        slope, intercept, r2 = fit_line(c_in, c_out)
        fits.append(LinearFit(sr, seed, sr_meas, slope, intercept, r2, c_ch))
    return rows, fits


def run_linearity(config: ExperimentConfig, plot: bool = True) -> list[LinearFit]:
    out = _out_dir(config)
    rows, fits = linearity(config)
    _write_csv(out / "linearity.csv", LINEARITY_HEADER, rows)
    _write_csv(out / "linearity_fit.csv", FIT_HEADER, [f.row() for f in fits])
    outputs = ["linearity.csv", "linearity_fit.csv"]
    if plot:
        from .plotting import plot_linearity
        plot_linearity(rows, fits, out / "linearity.png")
        outputs.append("linearity.png")
    write_manifest(config, "linearity", [f.seed for f in fits], outputs)
    return fits


# -- crosstalk -----------------------------------------------------------------------

CROSSTALK_SR = (1.0, 0.7, 0.5, 0.4, 0.3)
SPECTRUM_RANGE = (-5, 5)


def crosstalk(config: ExperimentConfig):
    """Mean crosstalk matrix and mean OAM power spectrum of +-l probes per SR."""
    grid = config.grid
    matrices, spectra = [], []
    probes = {p: make_oam_mode(grid, p * config.ell, config.mode_waist) for p in (1, -1)}
    for sr in config.sr_list:
        screens = [config.screen(sr, r).with_measured_strehl() for r in range(config.realizations)]
        matrices.append(measure_crosstalk(screens, config.ell, config.mode_waist))
        spec = {}
        for p, probe in probes.items():
            acc = np.zeros(SPECTRUM_RANGE[1] - SPECTRUM_RANGE[0] + 1)
            for s in screens:
                amps = oam_spectrum(SampledField(grid, probe.values * s.transmission),
                                    config.mode_waist, SPECTRUM_RANGE)
                acc += np.abs(np.array(list(amps.values()))) ** 2
            spec[p] = acc / len(screens)
        spectra.append(spec)
    return matrices, spectra


def run_crosstalk(config: ExperimentConfig, plot: bool = True):
    from .states import VECTOR_MODE_NAMES
    out = _out_dir(config)
    matrices, spectra = crosstalk(config)
    outputs = []
    for sr, mat, spec in zip(config.sr_list, matrices, spectra):
        tag = f"sr{sr:.2f}"
        _write_csv(out / f"crosstalk_{tag}.csv", ["sent", *VECTOR_MODE_NAMES],
                   [[name, *map(float, mat.t[:, j])] for j, name in enumerate(VECTOR_MODE_NAMES)])
        ells = range(SPECTRUM_RANGE[0], SPECTRUM_RANGE[1] + 1)
        rows = [[f"{'+' if p > 0 else '-'}{abs(config.ell)},{pol}", l, float(spec[p][i])]
                for p in (1, -1) for pol in ("R", "L") for i, l in enumerate(ells)]
        _write_csv(out / f"oam_spectrum_{tag}.csv", ["probe", "ell_out", "power"], rows)
        outputs += [f"crosstalk_{tag}.csv", f"oam_spectrum_{tag}.csv"]
    _write_csv(out / "crosstalk_summary.csv",
               ["sr_target", "sr_measured", "off_diagonal_mass", "condition_number"],
               [[sr, m.sr_context, m.off_diagonal_mass(), m.condition_number]
                for sr, m in zip(config.sr_list, matrices)])
    outputs.append("crosstalk_summary.csv")
    if plot:
        from .plotting import plot_crosstalk
        plot_crosstalk(config.sr_list, matrices, out / "crosstalk.png")
        outputs.append("crosstalk.png")
    write_manifest(config, "crosstalk", [config.seed + r for r in range(config.realizations)],
                   outputs)
    return matrices


# -- calibration ---------------------------------------------------------------------

def run_calibrate(config: ExperimentConfig, plot: bool = True):
    out = _out_dir(config)
    rows = calibrate_screens(config.sr_list, config.realizations, config.grid, config.w0,
                             config.seed, config.wavelength)
    write_calibration_csv(rows, out / "calibration.csv")
    outputs = ["calibration.csv"]
    if plot:
        from .plotting import plot_calibration
        plot_calibration(rows, out / "calibration.png")
        outputs.append("calibration.png")
    write_manifest(config, "calibrate", [config.seed + r for r in range(config.realizations)],
                   outputs)
    return rows


# -- image link ---------------------------------------------------------------------

def run_transmit(config: ExperimentConfig, image_path=None):
    """Send an image through one screen at the first SR of ``sr_list``.

    With ``realizations > 1`` the screens are cycled slot by slot.
    """
    out = _out_dir(config)
    img = make_test_image() if image_path is None else read_pgm(image_path)
    sr = config.sr_list[0]
    screens = []
    for r in range(config.realizations):
        screens.append(config.screen(sr, r).with_measured_strehl())
    link = Link(screens, config.ell, config.mode_waist)
    raw, report = transmit(img, link, config.threshold, correct=False)
    fixed, _ = transmit(img, link, config.threshold, correct=True)
    write_pgm(img, out / "sent.pgm")
    write_pgm(raw, out / "received_uncorrected.pgm")
    write_pgm(fixed, out / "received_corrected.pgm")
    _write_csv(out / "link_report.csv", LINK_CSV_HEADER, report.csv_rows())
    write_manifest(config, "transmit", [config.seed + r for r in range(config.realizations)],
                   ["sent.pgm", "received_uncorrected.pgm", "received_corrected.pgm",
                    "link_report.csv"])
    return report


# -- tomography demo -----------------------------------------------------------------

def run_tomography_demo(config: ExperimentConfig):
    """Reconstruct random states and the TM output of one screen per SR."""
    out = _out_dir(config)
    rng = np.random.default_rng(config.seed)
    noise = config.noise_model
    rows = []
    for r in range(config.realizations):
        rho = random_density_matrix(rng, rank=int(rng.integers(1, 5)))
        rec = simulate_measurements(rho, noise=noise, seed=config.seed + r)
        lin = reconstruct_linear(rec)
        mle = reconstruct_mle(rec)
        rows.append([r, trace_distance(lin, rho), trace_distance(mle.rho, rho),
                     concurrence_mixed(rho), concurrence_mixed(mle.rho)])
    _write_csv(out / "tomography_random.csv",
               ["trial", "td_linear", "td_mle", "c_true", "c_mle"], rows)
    reports = {}
    for sr in config.sr_list:
        screen = config.screen(sr, 0)
        field_out = propagate_hybrid(tm_field(config.grid, config.ell, config.mode_waist), screen)
        rec = measure_field(field_out, config.ell, config.mode_waist)
        rec = add_noise(rec, noise, config.seed)
        fit = reconstruct_mle(rec)
        reports[f"{sr:.2f}"] = reconstruction_report(fit.rho, fit.residual, fit.iterations,
                                                     config.ell)
    write_record_csv(rec, out / "tomography_record.csv")
    write_report(reports, out / "tomography_report.json")
    write_manifest(config, "tomography-demo", [config.seed + r for r in range(config.realizations)],
                   ["tomography_random.csv", "tomography_record.csv", "tomography_report.json"])
    return rows, reports
