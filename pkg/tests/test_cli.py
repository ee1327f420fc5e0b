import json
import math
import re

import numpy as np
import pytest

from dcboost.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, out


def strip_wall_time(csv_text):
    lines = csv_text.splitlines()
    header = lines[0].split(",")
    drop = header.index("wall_time_s")
    keep = lambda row: ",".join(col for i, col in enumerate(row.split(","))
                                if i != drop)
    return "\n".join(keep(line) for line in lines)


# ---------------------------------------------------------------------------
# toy
# ---------------------------------------------------------------------------

def test_toy_quadl1_reaches_global_minimum(tmp_path, capsys):
    code, out = run(capsys, "toy", "--example", "quadl1", "--variant", "ibdca",
                    "--x0", "0.5,1", "--out-dir", str(tmp_path))
    assert code == 0
    match = re.search(r"final_point=\(([^,]+),([^)]+)\)", out)
    point = np.array([float(match.group(1)), float(match.group(2))])
    assert np.linalg.norm(point - np.array([1.5, 0.0])) <= 1e-8
    assert "status=critical_point" in out
    assert (tmp_path / "toy_trace.csv").exists()
    assert (tmp_path / "toy_manifest.json").exists()


def test_toy_scad_ibdca_escapes(tmp_path, capsys):
    code, out = run(capsys, "toy", "--example", "scad", "--variant", "ibdca",
                    "--x0", "2.2,0.4", "--alpha", "0.2", "--beta", "0.7",
                    "--lambda-bar", "3", "--out-dir", str(tmp_path))
    assert code == 0
    match = re.search(r"final_point=\(([^,]+),([^)]+)\)", out)
    point = np.array([float(match.group(1)), float(match.group(2))])
    assert np.linalg.norm(point) <= 1e-6


def test_toy_scad_dca_lands_on_critical_point(tmp_path, capsys):
    code, out = run(capsys, "toy", "--example", "scad", "--variant", "dca",
                    "--x0", "2.2,0.4", "--out-dir", str(tmp_path))
    assert code == 0
    match = re.search(r"final_point=\(([^,]+),([^)]+)\)", out)
    point = np.array([float(match.group(1)), float(match.group(2))])
    dists = [np.linalg.norm(point - np.array(a))
             for a in ((0.0, 0.0), (0.0, 2.0), (2.0, 0.0), (2.0, 2.0))]
    assert min(dists) <= 1e-6


def test_toy_invalid_flags_exit_2():
    with pytest.raises(SystemExit) as excinfo:
        main(["toy", "--example", "nosuch", "--x0", "0,0"])
    assert excinfo.value.code == 2
    with pytest.raises(SystemExit) as excinfo:
        main(["toy", "--example", "scad", "--x0", "zero,zero"])
    assert excinfo.value.code == 2


def test_toy_max_iterations_is_failure(tmp_path, capsys):
    code, _ = run(capsys, "toy", "--example", "quadl1", "--x0", "0.5,1",
                  "--max-iter", "2", "--out-dir", str(tmp_path))
    assert code == 1


# ---------------------------------------------------------------------------
# basin
# ---------------------------------------------------------------------------

def test_basin_ibdca_summary(tmp_path, capsys):
    code, out = run(capsys, "basin", "--n", "300", "--seed", "7",
                    "--variant", "ibdca", "--out-dir", str(tmp_path))
    assert code == 0
    assert "(0,0) count=300 fraction=1.0000" in out
    report = (tmp_path / "basin_report.csv").read_text().splitlines()
    assert report[1] == "attractor,count"
    assert report[2] == '"(0,0)",300'


def test_basin_single_point(tmp_path, capsys):
    code, out = run(capsys, "basin", "--n", "1", "--seed", "0",
                    "--out-dir", str(tmp_path))
    assert code == 0
    counts = [int(line.split("count=")[1].split()[0])
              for line in out.splitlines() if "count=" in line]
    assert sum(counts) == 1


def test_basin_deterministic_data_rows(tmp_path, capsys):
    code, _ = run(capsys, "basin", "--n", "200", "--seed", "5",
                  "--variant", "dca", "--out-dir", str(tmp_path / "a"))
    assert code == 0
    code, _ = run(capsys, "basin", "--n", "200", "--seed", "5",
                  "--variant", "dca", "--out-dir", str(tmp_path / "b"))
    assert code == 0
    rows = lambda d: (d / "basin_report.csv").read_text().splitlines()[1:]
    assert rows(tmp_path / "a") == rows(tmp_path / "b")


# ---------------------------------------------------------------------------
# denoise
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def denoise_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("denoise")
    code = main(["denoise", "--synthetic", "--size", "32x32", "--gamma", "3",
                 "--seed", "7", "--out-dir", str(out)])
    assert code == 0
    return out


def test_denoise_outputs_exist(denoise_run):
    for name in ("restored.pgm", "noisy.pgm", "clean.pgm",
                 "denoise_trace.csv", "denoise_metrics.json",
                 "denoise_manifest.json"):
        assert (denoise_run / name).exists()


def test_denoise_protocol_defaults_resolved(denoise_run):
    manifest = json.loads((denoise_run / "denoise_manifest.json").read_text())
    flags = manifest["flags"]
    assert flags["mu"] == 15.0
    assert flags["c"] == 1.83
    assert flags["beta"] == 0.5
    assert flags["lambda_bar"] == 10.0
    assert flags["max_iter"] == 200
    assert flags["tol_rel_energy"] == 5e-4
    assert abs(flags["alpha"] - 0.9 * (1.83 - 15.0 / 9.0)) <= 1e-12


def test_denoise_improves_metrics(denoise_run):
    summary = json.loads((denoise_run / "denoise_metrics.json").read_text())
    assert summary["psnr_restored"] > summary["psnr_noisy"] + 3.0
    assert summary["re_err_restored"] < summary["re_err_noisy"]
    assert summary["inner_converged_final"] is True


def test_denoise_trace_energy_matches_phi(denoise_run):
    lines = (denoise_run / "denoise_trace.csv").read_text().splitlines()
    header = lines[0].split(",")
    assert header == ["k", "phi", "d_norm", "lambda", "backtracks",
                      "wall_time_s", "energy", "psnr", "inner_iters",
                      "inner_resid"]
    for line in lines[1:]:
        row = line.split(",")
        assert row[1] == row[header.index("energy")]


def test_metrics_command_matches_trace_noisy_psnr(denoise_run, capsys):
    code = main(["metrics", str(denoise_run / "noisy.pgm"),
                 str(denoise_run / "clean.pgm")])
    assert code == 0
    out = capsys.readouterr().out
    printed = float(out.split("psnr_db=")[1].splitlines()[0])
    lines = (denoise_run / "denoise_trace.csv").read_text().splitlines()
    psnr_col = lines[0].split(",").index("psnr")
    trace_noisy_psnr = float(lines[1].split(",")[psnr_col])
    assert printed == trace_noisy_psnr  # same code path, bitwise equal


def test_denoise_noise_free_run_is_monotone(tmp_path, capsys):
    code, out = run(capsys, "denoise", "--synthetic", "--size", "32x32",
                    "--gamma", "3", "--noise-gamma", "0",
                    "--out-dir", str(tmp_path))
    assert code == 0
    lines = (tmp_path / "denoise_trace.csv").read_text().splitlines()
    energies = [float(line.split(",")[1]) for line in lines[1:]]
    for a, b in zip(energies, energies[1:]):
        assert b <= a + 1e-8 * abs(a)


def test_denoise_input_mode(tmp_path, denoise_run, capsys):
    code, out = run(capsys, "denoise", "--input",
                    str(denoise_run / "noisy.pgm"), "--gamma", "3",
                    "--variant", "dca", "--max-iter", "30",
                    "--out-dir", str(tmp_path))
    assert code == 0
    summary = json.loads((tmp_path / "denoise_metrics.json").read_text())
    assert "psnr_noisy" not in summary   # no clean reference
    lines = (tmp_path / "denoise_trace.csv").read_text().splitlines()
    psnr_col = lines[0].split(",").index("psnr")
    assert lines[1].split(",")[psnr_col] == "nan"
    assert not (tmp_path / "clean.pgm").exists()


def test_denoise_clean_mode_matches_synthetic(tmp_path):
    # feeding the squares image through --clean must reproduce the
    # --synthetic pipeline bit for bit (same seed, same quantization)
    from dcboost.imaging import make_squares_image, write_pgm
    write_pgm(tmp_path / "clean_in.pgm", make_squares_image(32, 32))
    args = ["--gamma", "3", "--seed", "7", "--max-iter", "15"]
    assert main(["denoise", "--clean", str(tmp_path / "clean_in.pgm"),
                 *args, "--out-dir", str(tmp_path / "a")]) == 0
    assert main(["denoise", "--synthetic", "--size", "32x32",
                 *args, "--out-dir", str(tmp_path / "b")]) == 0
    assert ((tmp_path / "a" / "noisy.pgm").read_bytes()
            == (tmp_path / "b" / "noisy.pgm").read_bytes())
    assert ((tmp_path / "a" / "restored.pgm").read_bytes()
            == (tmp_path / "b" / "restored.pgm").read_bytes())


def test_denoise_deterministic_modulo_wall_time(tmp_path):
    args = ["denoise", "--synthetic", "--size", "24x24", "--gamma", "3",
            "--seed", "3", "--max-iter", "20"]
    assert main(args + ["--out-dir", str(tmp_path / "a")]) == 0
    assert main(args + ["--out-dir", str(tmp_path / "b")]) == 0
    csv_a = strip_wall_time((tmp_path / "a" / "denoise_trace.csv").read_text())
    csv_b = strip_wall_time((tmp_path / "b" / "denoise_trace.csv").read_text())
    assert csv_a == csv_b
    assert ((tmp_path / "a" / "restored.pgm").read_bytes()
            == (tmp_path / "b" / "restored.pgm").read_bytes())


def test_denoise_inner_nonconvergence_exit_1(tmp_path, capsys):
    # one inner sweep cannot meet the tolerance; the flag on the final
    # iterate must surface as exit code 1
    code = main(["denoise", "--synthetic", "--size", "24x24", "--gamma", "3",
                 "--max-iter", "5", "--inner-max-iter", "1",
                 "--out-dir", str(tmp_path)])
    assert code == 1
    summary = json.loads((tmp_path / "denoise_metrics.json").read_text())
    assert summary["inner_converged_final"] is False


def test_denoise_rejects_bad_c(tmp_path, capsys):
    code = main(["denoise", "--synthetic", "--gamma", "3", "--c", "1.0",
                 "--out-dir", str(tmp_path)])
    assert code == 2
    err = capsys.readouterr().err
    assert "mu/gamma^2" in err


def test_denoise_rejects_nonpositive_gamma(tmp_path):
    assert main(["denoise", "--synthetic", "--gamma", "0",
                 "--out-dir", str(tmp_path)]) == 2


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def test_metrics_identical_files(tmp_path, capsys):
    from dcboost.imaging import write_pgm
    img = np.arange(64.0).reshape(8, 8)
    write_pgm(tmp_path / "a.pgm", img)
    write_pgm(tmp_path / "b.pgm", img)
    code, out = run(capsys, "metrics", str(tmp_path / "a.pgm"),
                    str(tmp_path / "b.pgm"))
    assert code == 0
    assert "psnr_db=inf" in out
    assert "re_err=0" in out


def test_metrics_uniform_plus_one(tmp_path, capsys):
    from dcboost.imaging import write_pgm
    img = np.full((8, 8), 100.0)
    write_pgm(tmp_path / "a.pgm", img + 1.0)
    write_pgm(tmp_path / "b.pgm", img)
    code, out = run(capsys, "metrics", str(tmp_path / "a.pgm"),
                    str(tmp_path / "b.pgm"))
    assert code == 0
    printed = float(out.split("psnr_db=")[1].splitlines()[0])
    assert abs(printed - 20.0 * math.log10(255.0)) <= 1e-10


def test_metrics_shape_mismatch_exit_2(tmp_path, capsys):
    from dcboost.imaging import write_pgm
    write_pgm(tmp_path / "a.pgm", np.zeros((4, 4)))
    write_pgm(tmp_path / "b.pgm", np.zeros((4, 5)))
    assert main(["metrics", str(tmp_path / "a.pgm"),
                 str(tmp_path / "b.pgm")]) == 2


def test_metrics_missing_file_exit_2(tmp_path):
    assert main(["metrics", str(tmp_path / "nope.pgm"),
                 str(tmp_path / "nope2.pgm")]) == 2
