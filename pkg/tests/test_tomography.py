import numpy as np
import pytest

from vortexlink import tomography as M
from vortexlink import turbulence as T
from vortexlink.channel import MODE_WAIST_FACTOR, propagate_hybrid, subspace_filter, tm_field
from vortexlink.states import (DensityMatrix, InvalidStateError, concurrence_mixed,
                               concurrence_pure, fidelity, random_density_matrix,
                               random_pure_state, vector_mode_basis)

W0 = 1e-3
WM = MODE_WAIST_FACTOR * W0


def test_projector_set_is_informationally_complete():
    ps = M.ProjectorSet()
    assert len(ps) == 36
    assert np.allclose(np.linalg.norm(ps.vectors, axis=1), 1.0)
    assert np.linalg.matrix_rank(ps.design_matrix()) == 16


def test_polarisation_kets_follow_linear_conventions():
    h, v = M.POLARISATION_KETS["H"], M.POLARISATION_KETS["V"]
    assert np.allclose(M.POLARISATION_KETS["D"], (h + v) / np.sqrt(2))
    assert np.allclose(M.POLARISATION_KETS["A"], (h - v) / np.sqrt(2))
    assert np.allclose(M.POLARISATION_KETS["R"], (h - 1j * v) / np.sqrt(2))
    assert np.allclose(M.POLARISATION_KETS["L"], (h + 1j * v) / np.sqrt(2))


def test_born_rule_examples():
    tm = vector_mode_basis()["TM"].projector()
    rec = M.simulate_measurements(tm, scale=2.0)
    k = rec.indices.index((M.POL_NAMES.index("R"), M.OAM_NAMES.index("l")))
    assert rec.intensities[k] == pytest.approx(1.0)
    flat = M.simulate_measurements(DensityMatrix.maximally_mixed(), scale=3.0)
    assert np.allclose(flat.intensities, 0.75)


def test_noisy_records_reproducible():
    rho = random_density_matrix(np.random.default_rng(0))
    noise = M.NoiseModel("poisson", 1000)
    a = M.simulate_measurements(rho, noise=noise, seed=9)
    b = M.simulate_measurements(rho, noise=noise, seed=9)
    assert a.intensities.tobytes() == b.intensities.tobytes()
    with pytest.raises(ValueError):
        M.NoiseModel("gaussian", -0.1)
    with pytest.raises(ValueError):
        M.NoiseModel("uniform", 0.1)


def test_linear_round_trip(rng):
    for _ in range(50):
        rho = random_density_matrix(rng)
        assert M.trace_distance(M.reconstruct_linear(M.simulate_measurements(rho)), rho) <= 1e-8


def test_all_equal_record_gives_maximally_mixed():
    rec = M.MeasurementRecord(np.full(36, 5.0), M.ProjectorSet().indices)
    assert np.allclose(M.reconstruct_linear(rec).entries, np.eye(4) / 4, atol=1e-12)


def test_35_projectors_still_reconstruct(rng):
    ps = M.ProjectorSet().without((0, 0))
    rho = random_density_matrix(rng)
    rec = M.simulate_measurements(rho, ps)
    assert len(rec.intensities) == 35
    assert M.trace_distance(M.reconstruct_linear(rec), rho) <= 1e-8


def test_rank_deficient_set_is_rejected():
    ps = M.ProjectorSet(tuple((p, o) for p in (4, 5) for o in range(6)))
    rec = M.simulate_measurements(DensityMatrix.maximally_mixed(), ps)
    with pytest.raises(M.RankDeficientError):
        M.reconstruct_linear(rec)


def test_record_validation():
    with pytest.raises(ValueError):
        M.MeasurementRecord(np.ones(3), M.ProjectorSet().indices)
    with pytest.raises(ValueError):
        M.MeasurementRecord(-np.ones(36), M.ProjectorSet().indices)
    with pytest.raises(InvalidStateError):
        M.reconstruct_linear(M.MeasurementRecord(np.zeros(36), M.ProjectorSet().indices))


def test_reconstruction_is_scale_invariant(rng):
    rho = random_density_matrix(rng, rank=2)
    rec = M.simulate_measurements(rho, noise=M.NoiseModel("gaussian", 0.02), seed=1)
    for c in (1e-3, 7.0, 1e4):
        lin_a = M.reconstruct_linear(rec).entries
        lin_b = M.reconstruct_linear(rec.scaled(c)).entries
        assert np.max(np.abs(lin_a - lin_b)) <= 1e-10
        mle_a = M.reconstruct_mle(rec).rho.entries
        mle_b = M.reconstruct_mle(rec.scaled(c)).rho.entries
        assert np.max(np.abs(mle_a - mle_b)) <= 1e-10


def test_mle_gradient_matches_finite_differences(rng):
    rho = random_density_matrix(rng)
    chi = M._ChiSquare(M.simulate_measurements(rho, noise=M.NoiseModel("gaussian", 0.05), seed=2))
    x = rng.standard_normal(17)
    _, grad = chi(x)
    h = 1e-6
    fd = np.array([(chi(x + h * e)[0] - chi(x - h * e)[0]) / (2 * h) for e in np.eye(17)])
    assert np.max(np.abs(fd - grad)) <= 1e-6 * max(1.0, np.abs(grad).max())


def test_mle_on_noiseless_tm():
    tm = vector_mode_basis()["TM"]
    fit = M.reconstruct_mle(M.simulate_measurements(tm.projector(), scale=4.0))
    assert fidelity(fit.rho, tm) >= 1 - 1e-6
    assert fit.scale == pytest.approx(4.0, rel=1e-6)


def test_mle_never_worse_than_linear(rng):
    for seed in range(10):
        rho = random_density_matrix(rng, rank=int(rng.integers(1, 5)))
        rec = M.simulate_measurements(rho, noise=M.NoiseModel("gaussian", 0.05), seed=seed)
        fit = M.reconstruct_mle(rec)
        assert fit.residual <= fit.linear_residual
        assert isinstance(fit.rho, DensityMatrix)


def test_mle_reports_non_convergence(rng):
    rho = random_density_matrix(rng)
    rec = M.simulate_measurements(rho, noise=M.NoiseModel("gaussian", 0.2), seed=3)
    with pytest.raises(M.MLEConvergenceError) as info:
        M.reconstruct_mle(rec, max_iter=1)
    assert isinstance(info.value.best, DensityMatrix)


def test_trace_distance_properties(rng):
    a, b = random_density_matrix(rng), random_density_matrix(rng)
    assert M.trace_distance(a, a) == pytest.approx(0.0, abs=1e-15)
    assert M.trace_distance(a, b) == pytest.approx(M.trace_distance(b, a), abs=1e-12)
    basis = vector_mode_basis()
    assert M.trace_distance(basis["TM"].projector(), basis["TE"].projector()) == pytest.approx(1.0)


def test_field_measurement_matches_state_measurement(rng, small_grid):
    from vortexlink.optics import hybrid_to_field
    s = random_pure_state(rng)
    rec_field = M.measure_field(hybrid_to_field(s, small_grid, WM), 1, WM)
    rec_state = M.simulate_measurements(s.projector())
    assert np.allclose(rec_field.intensities, rec_state.intensities, atol=1e-10)


def test_end_to_end_tomography_matches_filtered_state(small_grid):
    for seed in range(3):
        screen = T.generate_phase_screen(T.TurbulenceSpec.from_strehl(0.5, W0, seed=seed),
                                         small_grid)
        out = propagate_hybrid(tm_field(small_grid, 1, WM), screen)
        direct = concurrence_pure(subspace_filter(out, 1, WM).state())
        rho = M.reconstruct_linear(M.measure_field(out, 1, WM))
        assert concurrence_mixed(rho) == pytest.approx(direct, abs=1e-4)


def test_record_csv_round_trip(tmp_path, rng):
    rec = M.simulate_measurements(random_density_matrix(rng), noise=M.NoiseModel("gaussian", 0.01),
                                  seed=4)
    path = tmp_path / "rec.csv"
    M.write_record_csv(rec, path)
    assert path.read_text().splitlines()[0] == "pol_index,oam_index,intensity"
    back = M.read_record_csv(path)
    assert back.indices == rec.indices
    assert back.intensities.tobytes() == rec.intensities.tobytes()


def test_report(tmp_path):
    rho = vector_mode_basis()["TM"].projector()
    rep = M.reconstruction_report(rho, 0.0, 3)
    assert rep["concurrence"] == pytest.approx(1.0) and rep["fidelity_tm"] == pytest.approx(1.0)
    M.write_report(rep, tmp_path / "r.json")
    assert '"iterations": 3' in (tmp_path / "r.json").read_text()
