import json

import numpy as np
import pytest

from vortexlink import experiments as E
from vortexlink.cli import main


def small_config(tmp_path, **kw):
    base = dict(n=64, realizations=3, sr_list=(1.0, 0.5), out=str(tmp_path / "out"))
    base.update(kw)
    return E.ExperimentConfig(**base)


def test_config_validation():
    with pytest.raises(ValueError):
        E.ExperimentConfig(realizations=0)
    with pytest.raises(ValueError):
        E.ExperimentConfig(sr_list=(0.5, 1.2))
    with pytest.raises(ValueError):
        E.ExperimentConfig(noise="uniform")
    with pytest.raises(ValueError):
        E.ExperimentConfig(seed=-1)


def test_ini_config(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[demo]\nn = 128\nsr_list = 1.0, 0.7 0.3\nw0 = 2e-3\nnoise = gaussian\n"
                   "noise_level = 0.01\nseed = 18446744073709551615\n")
    cfg = E.load_config(ini)
    assert cfg.name == "demo" and cfg.n == 128 and cfg.w0 == 2e-3
    assert cfg.sr_list == (1.0, 0.7, 0.3)
    assert cfg.seed == 2 ** 64 - 1
    assert cfg.mode_waist == pytest.approx(np.sqrt(2) * 2e-3)
    ini.write_text("[demo]\nbogus = 1\n")
    with pytest.raises(ValueError):
        E.load_config(ini)
    with pytest.raises(FileNotFoundError):
        E.load_config(tmp_path / "missing.ini")


def test_sweep_rows_and_summary(tmp_path):
    cfg = small_config(tmp_path)
    res = E.run_sweep_sr(cfg, plot=False)
    assert len(res.rows) == 6 and len(res.rows[0]) == len(E.SWEEP_HEADER)
    first = res.summary[0]
    assert first[0] == 1.0 and first[2] == pytest.approx(1.0) and first[3] == pytest.approx(0.0)
    assert first[6] == pytest.approx(1.0)
    assert res.summary[1][4] < first[4]
    header = (tmp_path / "out" / "sweep_sr.csv").read_text().splitlines()[0]
    assert header.startswith("sr_target,seed,sr_measured,c_in,c_out")
    assert "p_minus_im" in header


def test_manifest_rerun_is_bit_exact(tmp_path):
    cfg = small_config(tmp_path, seed=7)
    E.run_sweep_sr(cfg, plot=False)
    out = tmp_path / "out"
    first = (out / "sweep_sr.csv").read_bytes()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seeds"] == [7, 8, 9] and manifest["experiment"] == "sweep-sr"
    again = E.load_config(out / "manifest.json")
    again = E.ExperimentConfig(**{**again.to_dict(), "out": str(tmp_path / "again")})
    E.run_sweep_sr(again, plot=False)
    assert (tmp_path / "again" / "sweep_sr.csv").read_bytes() == first


def test_parallel_sweep_matches_serial(tmp_path):
    serial = E.sweep_sr(small_config(tmp_path))
    parallel = E.sweep_sr(small_config(tmp_path, workers=2))
    assert serial.rows == parallel.rows


def test_linearity_fit(tmp_path):
    fits = E.run_linearity(small_config(tmp_path, n=128, sr_list=(1.0,)), plot=False)
    assert fits[0].slope == pytest.approx(1.0, abs=0.01)
    assert abs(fits[0].intercept) <= 0.02
    assert fits[0].r_squared == pytest.approx(1.0)


def test_fit_line_exact():
    assert E.fit_line([0, 1, 2], [1, 3, 5]) == pytest.approx((2.0, 1.0, 1.0))


def test_crosstalk_outputs(tmp_path):
    mats = E.run_crosstalk(small_config(tmp_path, sr_list=(1.0, 0.4)), plot=False)
    assert np.allclose(mats[0].t, np.eye(4), atol=1e-6)
    assert np.all(mats[1].t.sum(axis=0) <= 1 + 1e-6)
    out = tmp_path / "out"
    assert (out / "crosstalk_sr0.40.csv").read_text().startswith("sent,TM,TE,HEe,HEo")
    assert (out / "oam_spectrum_sr1.00.csv").exists()


def test_calibration_run(tmp_path):
    rows = E.run_calibrate(small_config(tmp_path, sr_list=(1.0, 0.6)), plot=False)
    assert rows[0].mean_sr == pytest.approx(1.0)
    assert (tmp_path / "out" / "calibration.csv").exists()


def test_transmit_run_is_deterministic(tmp_path):
    cfg = small_config(tmp_path, sr_list=(0.3,), realizations=1)
    a = E.run_transmit(cfg)
    b = E.run_transmit(cfg)
    assert a == b
    assert a.correlation_corrected >= a.correlation_uncorrected
    for name in ("sent.pgm", "received_uncorrected.pgm", "received_corrected.pgm",
                 "link_report.csv"):
        assert (tmp_path / "out" / name).exists()


def test_transmit_perfect_channel(tmp_path):
    rep = E.run_transmit(small_config(tmp_path, sr_list=(1.0,), realizations=1))
    assert rep.correlation_uncorrected == pytest.approx(1.0)


def test_tomography_demo(tmp_path):
    rows, reports = E.run_tomography_demo(small_config(tmp_path, noise="gaussian",
                                                       noise_level=0.01))
    assert len(rows) == 3 and max(r[2] for r in rows) < 0.1
    assert reports["1.00"]["concurrence"] > 0.9


def test_unwritable_output_directory(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError):
        E.run_calibrate(E.ExperimentConfig(n=64, realizations=1, out=str(blocker / "sub")))


@pytest.mark.parametrize("command", ["sweep-sr", "crosstalk", "calibrate", "transmit",
                                     "tomography-demo", "linearity"])
def test_cli_subcommands(tmp_path, capsys, command):
    ini = tmp_path / "c.ini"
    ini.write_text(f"[cli]\nn = 64\nsr_list = 1.0 0.5\nrealizations = 2\nout = {tmp_path / 'o'}\n")
    code = main([command, "--config", str(ini), "--seed", "3", "--no-plots"])
    assert code == 0
    assert "results in" in capsys.readouterr().out
    assert json.loads((tmp_path / "o" / "manifest.json").read_text())["config"]["seed"] == 3


def test_cli_plots(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text(f"[cli]\nn = 64\nsr_list = 1.0 0.5\nrealizations = 2\nout = {tmp_path / 'o'}\n")
    assert main(["sweep-sr", "--config", str(ini)]) == 0
    assert (tmp_path / "o" / "sweep_sr.png").stat().st_size > 1000


def test_cli_errors(tmp_path, capsys):
    assert main(["calibrate", "--config", str(tmp_path / "nope.ini")]) != 0
    assert "error" in capsys.readouterr().err
    assert main(["transmit", "--out", str(tmp_path), "--image", str(tmp_path / "no.pgm"),
                 "--realizations", "1"]) != 0
    with pytest.raises(SystemExit):
        main(["frobnicate"])
