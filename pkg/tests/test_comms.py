import numpy as np
import pytest

from vortexlink import comms as K
from vortexlink import turbulence as T
from vortexlink.channel import MODE_WAIST_FACTOR, ChannelOperator, ModalCoupling

W0 = 1e-3
WM = MODE_WAIST_FACTOR * W0


def random_operator(rng):
    return ChannelOperator(rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))


def test_polar_decomposition_of_diagonal():
    pd = K.polar_decompose(ChannelOperator(np.diag([0.9, 0.3])))
    assert np.allclose(pd.u, np.eye(2))
    assert pd.lambdas == pytest.approx((0.9, 0.3))


def test_polar_decomposition_of_unitary(rng):
    q, _ = np.linalg.qr(rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))
    pd = K.polar_decompose(ChannelOperator(q))
    assert pd.lambdas == pytest.approx((1.0, 1.0))


def test_polar_decomposition_reassembles(rng):
    for _ in range(20):
        m = random_operator(rng)
        pd = K.polar_decompose(m)
        assert np.max(np.abs(pd.u.conj().T @ pd.u - np.eye(2))) <= 1e-10
        assert np.max(np.abs(pd.u @ pd.positive_part - m.m)) <= 1e-10
        assert pd.lambdas == pytest.approx(tuple(np.linalg.svd(m.m, compute_uv=False)))
    with pytest.raises(K.NotInvertibleError):
        K.polar_decompose(ChannelOperator(np.zeros((2, 2))))


def test_conjugate_filter_examples(rng):
    f = K.conjugate_filter(ChannelOperator(np.diag([0.9, 0.3])))
    assert np.allclose(f.m, np.diag([0.3, 0.9]))
    assert np.allclose(f.m @ np.diag([0.9, 0.3]), 0.27 * np.eye(2))
    q, _ = np.linalg.qr(rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))
    assert np.allclose(K.conjugate_filter(ChannelOperator(q)).m, q.conj().T)
    with pytest.raises(K.NotInvertibleError):
        K.conjugate_filter(ChannelOperator(np.outer([1, 2], [1, 1j])))


def test_conjugate_filter_is_proportional_to_identity(rng):
    for _ in range(100):
        m = random_operator(rng)
        l0, l1 = K.polar_decompose(m).lambdas
        prod = K.conjugate_filter(m).m @ m.m
        assert np.linalg.norm(prod - l0 * l1 * np.eye(2)) <= 1e-9


def test_crosstalk_matrix_validation():
    with pytest.raises(ValueError):
        K.CrosstalkMatrix(-np.eye(4))
    with pytest.raises(ValueError):
        K.CrosstalkMatrix(np.full((4, 4), 0.5))
    with pytest.raises(ValueError):
        K.CrosstalkMatrix(np.eye(3))


def test_equal_coupling_crosstalk_pattern():
    t = K.crosstalk_from_operator(ModalCoupling(0.8, 0.3, 0.3).operator())
    assert t[2, 0] == pytest.approx(0.09) and t[3, 0] == pytest.approx(0.0, abs=1e-15)
    assert t[3, 1] == pytest.approx(0.09) and t[2, 1] == pytest.approx(0.0, abs=1e-15)
    assert np.allclose(np.diag(t), 0.64)


def test_crosstalk_without_turbulence_is_identity(small_grid):
    ct = K.measure_crosstalk([T.flat_screen(small_grid, W0)], 1, WM)
    assert np.max(np.abs(ct.t - np.eye(4))) <= 1e-6
    assert ct.condition_number == pytest.approx(1.0)
    with pytest.raises(ValueError):
        K.measure_crosstalk([], 1, WM)


def test_screen_crosstalk_matches_operator_model(small_grid):
    from vortexlink.channel import extract_couplings
    s = T.generate_phase_screen(T.TurbulenceSpec.from_strehl(0.5, W0, seed=1), small_grid)
    direct = K.screen_crosstalk(s, 1, WM)
    model = K.crosstalk_from_operator(extract_couplings(s, 1, WM).operator())
    assert np.allclose(direct, model, atol=1e-10)


def test_crosstalk_grows_with_turbulence(small_grid):
    mass = []
    for sr in (1.0, 0.7, 0.4):
        screens = [T.generate_phase_screen(T.TurbulenceSpec.from_strehl(sr, W0, seed=i), small_grid)
                   for i in range(20)]
        mass.append(K.measure_crosstalk(screens, 1, WM).off_diagonal_mass())
    assert mass[0] == pytest.approx(0.0, abs=1e-9)
    assert mass[0] < mass[1] < mass[2]


def test_encode_bit_map():
    img = K.ImageFrame(np.array([[0b1010, 0b0001]]))
    sym = K.encode_image(img)
    assert np.array_equal(sym[0], [1, 0, 1, 0])
    assert np.array_equal(sym[1], [0, 0, 0, 1])
    assert K.decode_image(sym, 2, 1).pixels.tolist() == [[10, 1]]
    assert not K.encode_image(K.ImageFrame(np.zeros((3, 3)))).any()


def test_image_frame_validation():
    for bad in (np.array([[16]]), np.array([[-1]]), np.array([[1.5]]), np.zeros((0, 3)),
                np.zeros(4)):
        with pytest.raises(ValueError):
            K.ImageFrame(bad)


def test_correlation_coefficient(rng):
    img = K.make_test_image()
    assert K.correlation_coefficient(img, img) == pytest.approx(1.0)
    assert K.correlation_coefficient(img, K.ImageFrame(15 - img.pixels)) == pytest.approx(-1.0)
    a = K.ImageFrame(rng.integers(0, 16, (250, 400)))
    b = K.ImageFrame(rng.permutation(a.pixels.ravel()).reshape(250, 400))
    assert abs(K.correlation_coefficient(a, b)) <= 0.05
    with pytest.raises(ValueError):
        K.correlation_coefficient(img, K.ImageFrame(np.zeros((2, 2))))
    with pytest.raises(ValueError):
        K.correlation_coefficient(K.ImageFrame(np.ones((4, 4))), K.ImageFrame(np.ones((4, 4))))


def test_perfect_channel_is_lossless(small_grid):
    img = K.make_test_image(64, 48)
    out, rep = K.transmit(img, K.Link.perfect(small_grid, 1, WM))
    assert np.array_equal(out.pixels, img.pixels)
    assert rep.correlation_uncorrected == pytest.approx(1.0)
    assert rep.n_symbols == 64 * 48


def test_exact_matrix_correction_recovers_bits(small_grid):
    img = K.make_test_image(128, 128)
    for seed in range(3):
        s = T.generate_phase_screen(T.TurbulenceSpec.from_strehl(0.4, W0, seed=seed), small_grid)
        link = K.Link([s.with_measured_strehl()], 1, WM)
        raw, rep = K.transmit(img, link, correct=False)
        fixed, _ = K.transmit(img, link, correct=True)
        assert np.array_equal(fixed.pixels, img.pixels)
        assert rep.correlation_corrected == pytest.approx(1.0)
        assert rep.correlation_uncorrected == pytest.approx(K.correlation_coefficient(img, raw))


def test_transmit_errors(small_grid):
    img = K.make_test_image(16, 16)
    link = K.Link.perfect(small_grid, 1, WM)
    for bad in (0.0, 1.0, 1.5):
        with pytest.raises(ValueError):
            K.transmit(img, link, threshold_frac=bad)
    dead = K.Link.perfect(small_grid, 1, WM)
    dead.calibration = K.CrosstalkMatrix(np.zeros((4, 4)))
    with pytest.raises(K.NotInvertibleError):
        K.transmit(img, dead)


def test_transmit_zero_image_reports_nan(small_grid):
    _, rep = K.transmit(K.ImageFrame(np.zeros((8, 8))), K.Link.perfect(small_grid, 1, WM))
    assert np.isnan(rep.correlation_corrected)


def test_link_report_csv(tmp_path, small_grid):
    _, rep = K.transmit(K.make_test_image(16, 16), K.Link.perfect(small_grid, 1, WM))
    path = tmp_path / "link.csv"
    K.write_link_report(rep, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "sr,threshold,corrected,correlation,n_symbols,condition_number"
    assert len(lines) == 3


def test_pgm_round_trip(tmp_path):
    img = K.make_test_image(130, 129)
    path = tmp_path / "img.pgm"
    K.write_pgm(img, path)
    assert np.array_equal(K.read_pgm(path).pixels, img.pixels)


def test_pgm_8bit_quantisation(tmp_path):
    path = tmp_path / "img8.pgm"
    px = np.arange(256, dtype=np.uint8).reshape(16, 16)
    path.write_bytes(b"P5\n# comment\n16 16\n255\n" + px.tobytes())
    assert np.array_equal(K.read_pgm(path).pixels, px >> 4)


def test_pgm_errors(tmp_path):
    path = tmp_path / "bad.pgm"
    path.write_bytes(b"P2\n2 2\n15\n0 0 0 0\n")
    with pytest.raises(ValueError):
        K.read_pgm(path)
    path.write_bytes(b"P5\n5000 5000\n15\n")
    with pytest.raises(ValueError):
        K.read_pgm(path)


def test_test_pattern_uses_all_levels():
    img = K.make_test_image()
    assert img.width >= 128 and img.height >= 128
    assert len(np.unique(img.pixels)) == 16
