"""Config parsing, curve-family files, and the experiment commands."""

import io
import math

import numpy as np
import pytest

from heismod.cli import main
from heismod.config import ConfigError, ExperimentConfig, load_config
from heismod.curvefile import (
    CurveFileError,
    dumps_curve_family,
    read_curve_family,
    write_curve_family,
)
from heismod.heis import LegendrianPolyline
from heismod.lattice import LatticeSpec
from heismod.modulus import family_x_lines

SQRT_PI = math.sqrt(math.pi)


class TestConfig:
    def test_defaults_valid(self):
        cfg = ExperimentConfig()
        assert cfg.tau == 0.25
        assert len(cfg.config_hash()) == 16

    def test_load_and_override(self, tmp_path):
        path = tmp_path / "exp.ini"
        path.write_text(
            "[lattice]\nsigma = 0.0\ntau = 0.5\n"
            "[grid]\nnx = 8\nny = 8\nnt = 8\n"
            "[family]\na_values = 0.5 1.0\n"
            "[solver]\ntol = 1e-7\n"
        )
        cfg = load_config(str(path))
        assert cfg.tau == 0.5
        assert cfg.nx == 8
        assert cfg.a_values == (0.5, 1.0)
        assert cfg.tol == 1e-7
        cfg2 = cfg.with_overrides(tau=0.25)
        assert cfg2.tau == 0.25
        assert cfg2.nx == 8

    def test_unknown_key_diagnosed(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[lattice]\nsgima = 0.0\n")
        with pytest.raises(ConfigError, match="lattice.sgima"):
            load_config(str(path))

    def test_bad_value_diagnosed(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[solver]\ntol = not-a-number\n")
        with pytest.raises(ConfigError, match="solver.tol"):
            load_config(str(path))

    def test_invalid_tau_diagnosed(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[lattice]\ntau = 0.3\n")
        with pytest.raises(ConfigError, match="lattice.tau"):
            load_config(str(path))

    def test_missing_file(self):
        with pytest.raises(ConfigError, match="not found"):
            load_config("/nonexistent/exp.ini")

    def test_hash_stable_and_sensitive(self):
        a = ExperimentConfig()
        b = ExperimentConfig()
        c = ExperimentConfig(tau=0.5)
        assert a.config_hash() == b.config_hash()
        assert a.config_hash() != c.config_hash()

    def test_affine_needs_twelve_numbers(self):
        with pytest.raises(ConfigError, match="maps.affine"):
            ExperimentConfig(affine=(1.0, 2.0))


class TestCurveFile:
    def make_family(self):
        lat = LatticeSpec(0.0, 0.25)
        fam = family_x_lines(lat, a=0.5, m=1, n=2, samples_per_unit=4)
        # rebuild cover polylines for writing
        curves = []
        for j in range(2):
            for k in range(2):
                y0 = (j + 0.5) * 0.25 / 2
                t0 = (k + 0.5) / 2
                svals = np.linspace(-0.5, 0.5, 5)
                pts = np.empty((5, 3))
                pts[:, 0] = 0.25 + svals
                pts[:, 1] = y0
                pts[:, 2] = t0 + 2 * svals * y0
                curves.append(LegendrianPolyline(svals + 0.5, pts))
        return lat, curves

    def test_roundtrip_exact(self):
        lat, curves = self.make_family()
        text = dumps_curve_family(lat, curves)
        lat2, curves2 = read_curve_family(io.StringIO(text))
        assert lat2.sigma == lat.sigma and lat2.tau == lat.tau
        assert len(curves2) == len(curves)
        for a, b in zip(curves, curves2):
            assert np.array_equal(a.params, b.params)
            assert np.array_equal(a.points, b.points)

    def test_comments_and_blanks_ignored(self):
        text = (
            "heismod-curves 1\n"
            "# a comment\n"
            "lattice sigma=0.0 tau=0.25\n\n"
            "curve 0\n"
            "0.0 0.0 0.0 0.0  # inline\n"
            "1.0 1.0 0.0 0.0\n"
        )
        lat, curves = read_curve_family(io.StringIO(text))
        assert len(curves) == 1
        assert curves[0].n_samples == 2

    def test_bad_header(self):
        with pytest.raises(CurveFileError, match="line 1"):
            read_curve_family(io.StringIO("nope\n"))

    def test_bad_sample_line(self):
        text = "heismod-curves 1\nlattice sigma=0.0 tau=0.25\ncurve 0\n1.0 2.0\n"
        with pytest.raises(CurveFileError, match="line 4"):
            read_curve_family(io.StringIO(text))

    def test_missing_lattice(self):
        text = "heismod-curves 1\ncurve 0\n0.0 0.0 0.0 0.0\n1.0 1.0 0.0 0.0\n"
        with pytest.raises(CurveFileError, match="lattice"):
            read_curve_family(io.StringIO(text))


class TestCommands:
    def test_distance_vertical(self, tmp_path, capsys):
        code = main(
            ["distance", "0", "0", "0", "0", "0", "1", "--out", str(tmp_path)]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert f"distance = {SQRT_PI:.17g}" in out
        assert (tmp_path / "distance.csv").exists()

    def test_distance_planar_and_scaled(self, tmp_path):
        assert main(["distance", "0", "0", "0", "3", "4", "0", "--out", str(tmp_path)]) == 0
        assert (
            main(
                [
                    "distance", "0", "0", "0", "1", "0", "0",
                    "--scaled", "4", "--out", str(tmp_path),
                ]
            )
            == 0
        )
        summary = (tmp_path / "distance_summary.txt").read_text()
        assert "distance = 2" in summary

    def test_distance_same_point(self, tmp_path):
        assert main(["distance", "1", "2", "3", "1", "2", "3", "--out", str(tmp_path)]) == 0
        summary = (tmp_path / "distance_summary.txt").read_text()
        assert "distance = 0" in summary

    def test_distance_with_oracle(self, tmp_path):
        code = main(
            [
                "distance", "0", "0", "0", "1", "0", "0",
                "--oracle", "--out", str(tmp_path),
            ]
        )
        assert code == 0
        summary = (tmp_path / "distance_summary.txt").read_text()
        assert "bounds_ok = True" in summary

    def test_geodesic_record(self, tmp_path):
        code = main(
            [
                "geodesic", "0", "0", "0", "0", "0", "1",
                "--samples", "10000", "--out", str(tmp_path),
            ]
        )
        assert code == 0
        rows = (tmp_path / "geodesic.csv").read_text().splitlines()
        assert rows[0] == "param,x,y,t"
        assert len(rows) == 10_001

    def test_modulus_fibration_small_grid(self, tmp_path):
        code = main(
            [
                "modulus-fibration", "--grid", "8",
                "--a-values", "0.5", "1.0", "--out", str(tmp_path),
            ]
        )
        assert code == 0
        summary = (tmp_path / "modulus_fibration_summary.txt").read_text()
        assert "bounds_ok = True" in summary

    def test_modulus_fibration_quartic_law(self, tmp_path):
        main(
            [
                "modulus-fibration", "--grid", "8",
                "--a-values", "0.5", "1.0", "--out", str(tmp_path),
            ]
        )
        rows = (tmp_path / "modulus_fibration.csv").read_text().splitlines()[1:]
        vals = [float(r.split(",")[6]) for r in rows]
        assert vals[0] / vals[1] == pytest.approx(16.0, rel=1e-6)

    def test_modulus_file_roundtrip(self, tmp_path):
        lat = LatticeSpec(0.0, 0.25)
        curves = []
        for k in range(8):
            svals = np.linspace(0.0, 1.0, 9)
            pts = np.zeros((9, 3))
            pts[:, 0] = svals
            pts[:, 1] = 0.125 * 0.25
            pts[:, 2] = (k + 0.5) / 8 + 2 * svals * pts[:, 1]
            curves.append(LegendrianPolyline(svals, pts))
        path = tmp_path / "family.txt"
        with open(path, "w") as fh:
            write_curve_family(fh, lat, curves)
        code = main(
            ["modulus-file", str(path), "--grid", "8", "--out", str(tmp_path)]
        )
        assert code == 0
        summary = (tmp_path / "modulus_file_summary.txt").read_text()
        assert "bounds_ok = True" in summary

    def test_dilatation_identity_all_ones(self, tmp_path):
        code = main(
            ["dilatation", "--map", "identity", "--K", "1", "--out", str(tmp_path)]
        )
        assert code == 0
        rows = (tmp_path / "dilatation.csv").read_text().splitlines()[1:]
        ks = {float(r.split(",")[5]) for r in rows}
        assert ks == {1.0}

    def test_dilatation_f0_k2(self, tmp_path):
        code = main(["dilatation", "--map", "f0", "--K", "2", "--out", str(tmp_path)])
        assert code == 0
        rows = (tmp_path / "dilatation.csv").read_text().splitlines()[1:]
        for row in rows:
            cells = row.split(",")
            assert float(cells[5]) == pytest.approx(2.0, rel=1e-12)
            assert float(cells[6]) == pytest.approx(1.0 / 3.0, rel=1e-12)

    def test_dilatation_non_contact_diagnostic(self, tmp_path):
        code = main(
            ["dilatation", "--map", "t-doubling", "--K", "1", "--out", str(tmp_path)]
        )
        assert code == 0
        summary = (tmp_path / "dilatation_summary.txt").read_text()
        assert "not_contact_samples = 64" in summary
        body = (tmp_path / "dilatation.csv").read_text()
        assert "NotContact" in body

    def test_extremal_verify_f0(self, tmp_path):
        code = main(
            [
                "extremal-verify", "--K", "4", "--grid", "8",
                "--a-values", "0.5", "1.0", "--out", str(tmp_path),
            ]
        )
        assert code == 0
        rows = (tmp_path / "extremal_verify.csv").read_text().splitlines()[1:]
        for row in rows:
            cells = row.split(",")
            assert float(cells[7]) == pytest.approx(4.0, rel=0.10)

    def test_extremal_verify_competitor(self, tmp_path):
        code = main(
            [
                "extremal-verify", "--K", "4", "--grid", "8",
                "--a-values", "1.0", "--competitor-shift", "0.5",
                "--out", str(tmp_path),
            ]
        )
        assert code == 0
        summary = (tmp_path / "extremal_verify_summary.txt").read_text()
        assert f"homotopy_A = {math.sqrt(math.pi / 2):.17g}" in summary

    def test_lattice_info(self, tmp_path):
        code = main(["lattice-info", "--out", str(tmp_path)])
        assert code == 0
        summary = (tmp_path / "lattice_info_summary.txt").read_text()
        assert "volume = 0.25" in summary

    def test_config_error_exit_code(self, tmp_path):
        code = main(
            ["distance", "0", "0", "0", "0", "0", "1", "--tau", "0.3", "--out", str(tmp_path)]
        )
        assert code == 2

    def test_deterministic_reruns(self, tmp_path):
        args = [
            "modulus-fibration", "--grid", "8",
            "--a-values", "0.5", "--out",
        ]
        main(args + [str(tmp_path / "run1")])
        main(args + [str(tmp_path / "run2")])
        csv1 = (tmp_path / "run1" / "modulus_fibration.csv").read_bytes()
        csv2 = (tmp_path / "run2" / "modulus_fibration.csv").read_bytes()
        assert csv1 == csv2
        s1 = (tmp_path / "run1" / "modulus_fibration_summary.txt").read_bytes()
        s2 = (tmp_path / "run2" / "modulus_fibration_summary.txt").read_bytes()
        assert s1 == s2

    def test_config_file_drives_commands(self, tmp_path):
        path = tmp_path / "exp.ini"
        path.write_text(
            "[lattice]\ntau = 0.25\n[grid]\nnx = 8\nny = 8\nnt = 8\n"
            "[family]\na_values = 0.5\n"
        )
        code = main(
            ["modulus-fibration", "--config", str(path), "--out", str(tmp_path)]
        )
        assert code == 0
        rows = (tmp_path / "modulus_fibration.csv").read_text().splitlines()
        assert rows[1].split(",")[1] == "8"
