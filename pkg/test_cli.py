import io
import os
import tempfile
import unittest
from contextlib import redirect_stderr, redirect_stdout
from dataclasses import replace
from unittest.mock import patch

import numpy as np

import main
from common.enums import SolutionKind
from common.exceptions import ConfigError, GridMismatch, StaleEstimateError
from config import RunConfig, load_environment
from helper.csv_report_helper import FIBER_HEADER, SWEEP_HEADER, fiber_csv, format_number, sweep_csv
from helper.field_io import HEADER, format_field, parse_field
from helper.atomic_io import read_locked
from helper.record_io import load_estimates, parse_estimates, read_metadata, save_estimates, write_metadata
from helper.report_helper import solution_summary
from models import ConstantEstimate, SweepRow, VerificationCheck, WorkingConstants
from services.radial_field_service import RadialFieldService
from test_solvers import record_with_energy


def estimate(name: str, value: float, exponent: float, M: int = 64) -> ConstantEstimate:
    return ConstantEstimate(
        name=name,
        value=value,
        method="projected-ascent",
        family="gaussian mixtures",
        N=3,
        mu=2.0,
        exponent=exponent,
        node_count=M,
        r_max=8.0,
        spacing="uniform",
        grading=6.0,
        tolerance=1e-10,
    )


class TestRunConfig(unittest.TestCase):

    def test_default_file_matches_defaults(self):
        """config/default.cfg spells out the built-in defaults"""
        self.assertEqual(RunConfig.from_file(main.DEFAULT_CONFIG), RunConfig())

    def test_serialize_parse(self):
        """A serialized configuration reads back unchanged"""
        config = replace(RunConfig(), q=1.25, alpha=0.07, alphas=(0.3, 0.1), s_hl=0.5, spacing="graded", M=96)
        self.assertEqual(RunConfig.parse(config.serialize()), config)
        self.assertTrue(config.serialize().endswith("\n"))
        self.assertIn("c_p=\n", config.serialize())

    def test_errors_carry_line_numbers(self):
        """Malformed lines are reported with their line number"""
        cases = {
            "N=3\n# comment\nmuu=2.0\n": 3,
            "N=3\nmu=2.0\nN=4\n": 3,
            "N=3\nmu\n": 2,
            "\nM=many\n": 2,
            "alpha=\n": 1,
        }
        for text, line in cases.items():
            with self.subTest(text=text):
                with self.assertRaises(ConfigError) as caught:
                    RunConfig.parse(text)
                self.assertEqual(caught.exception.line, line)
                self.assertTrue(str(caught.exception).startswith(f"line {line}: "))

    def test_invalid_values(self):
        """Bad spacing, ladder mode and node count are refused"""
        for text in ("spacing=chebyshev\n", "alpha_ladder_mode=geometric\n", "M=8\n", "alphas=\n"):
            with self.subTest(text=text):
                with self.assertRaises(ConfigError):
                    RunConfig.parse(text)

    def test_overrides(self):
        """CLI overrides replace values, None leaves them alone"""
        config = RunConfig().with_overrides(M=128, seed=None, alpha=0.2)
        self.assertEqual(config.M, 128)
        self.assertEqual(config.seed, 0)
        self.assertEqual(config.alpha, 0.2)
        with self.assertRaises(ConfigError):
            RunConfig().with_overrides(gridM=4)

    def test_derived_values(self):
        """bubble delta defaults to r_max / 4"""
        self.assertEqual(RunConfig().delta, 4.0)
        self.assertEqual(replace(RunConfig(), bubble_delta=1.5).delta, 1.5)
        params = RunConfig().problem_params()
        self.assertEqual((params.q, params.p, params.alpha), (1.5, 3.0, 0.0))


class TestFileFormats(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.radial = RadialFieldService()
        cls.grid = cls.radial.make_grid(3, 128, 8.0)

    def test_field_text(self):
        """Header, one line per node, trailing newline, exact values"""
        u = self.radial.gaussian(self.grid, 1.3)
        text = format_field(u, 2.0)
        lines = text.split("\n")
        self.assertEqual(lines[0], HEADER)
        self.assertEqual(lines[1], "3 2.0 128 8.0 uniform 6.0")
        self.assertEqual(len(lines), 128 + 3)
        self.assertEqual(lines[-1], "")

        read, mu = parse_field(text, self.radial.make_grid)
        self.assertEqual(mu, 2.0)
        self.assertTrue(np.array_equal(read.values, u.values))
        self.assertTrue(read.grid.matches(self.grid))

    def test_field_grid_checks(self):
        """Missing rows and shifted radii are grid mismatches"""
        text = format_field(self.radial.gaussian(self.grid), 2.0)
        lines = text.splitlines()
        with self.assertRaises(GridMismatch):
            parse_field("\n".join(lines[:-1]) + "\n", self.radial.make_grid)
        r, v = lines[5].split()
        lines[5] = f"{float(r) * (1 + 1e-9)!r} {v}"
        with self.assertRaises(GridMismatch):
            parse_field("\n".join(lines) + "\n", self.radial.make_grid)

    def test_numbers(self):
        """%.17g with nan for undefined cells"""
        self.assertEqual(format_number(0.1), "0.10000000000000001")
        self.assertEqual(format_number(None), "nan")
        self.assertEqual(format_number(float("nan")), "nan")
        self.assertEqual(float(format_number(1 / 3)), 1 / 3)

    def test_sweep_csv(self):
        """Provenance comments, header, one row per alpha"""
        rows = [
            SweepRow(0.5, -0.25, 1.5, 0.75, -2.0, True, True),
            SweepRow(0.0, None, 1.75, None, None, False, True),
        ]
        text = sweep_csv(rows, {"seed": 0, "q": "1.5"})
        lines = text.split("\n")
        self.assertEqual(lines[:3], ["# seed=0", "# q=1.5", SWEEP_HEADER])
        self.assertEqual(lines[3], "0.5,-0.25,1.5,0.75,-2,1,1")
        self.assertEqual(lines[4], "0,nan,1.75,nan,nan,0,1")
        self.assertEqual(lines[5], "")

    def test_fiber_csv(self):
        """Fiber rows carry the Morse class or '-'"""
        text = fiber_csv([(-1.0, 0.5, 2.0, "-"), (0.0, -0.125, 3.0, "Pplus")])
        self.assertEqual(text, f"{FIBER_HEADER}\n-1,0.5,2,-\n0,-0.125,3,Pplus\n")

    def test_metadata_sidecar(self):
        """Metadata keeps scalars, provenance and one line per check"""
        record = record_with_energy(-0.5)
        record.params = {"alpha": 0.1}
        record.checks = [VerificationCheck("mass", True, 0.0, 1e-8)]
        constants = WorkingConstants(0.3, 0.4, 0.5, {"c_p": "override"})
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "solution.meta")
            write_metadata(path, record, constants)
            meta = read_metadata(path)
        self.assertEqual(meta["kind"], "MountainPass")
        self.assertEqual(float(meta["energy"]), -0.5)
        self.assertEqual(meta["converged"], "1")
        self.assertEqual(meta["param.alpha"], "0.1")
        self.assertEqual(meta["provenance.c_p"], "override")
        self.assertTrue(meta["check.mass"].startswith("pass"))

    def test_estimate_store(self):
        """Estimates merge by constant, grid and mu, and reload for the matching grid only"""
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "estimates.txt")
            save_estimates(path, [estimate("C_r", 0.3, 3.0), estimate("S_HL", 0.9, 4.0)])
            save_estimates(path, [estimate("C_r", 0.35, 3.0), estimate("C_r", 0.8, 1.5)])
            save_estimates(path, [estimate("C_r", 0.41, 3.0, M=128)])

            grid = self.radial.make_grid(3, 64, 8.0)
            loaded = load_estimates(path, grid, 2.0)
            self.assertEqual(sorted(loaded), ["gn.1.5", "gn.3.0", "shl"])
            self.assertEqual(loaded["gn.3.0"].value, 0.35)
            self.assertEqual(loaded["shl"].value, 0.9)

            finer = load_estimates(path, self.radial.make_grid(3, 128, 8.0), 2.0)
            self.assertEqual(sorted(finer), ["gn.3.0"])
            self.assertEqual(finer["gn.3.0"].value, 0.41)

            self.assertEqual(load_estimates(path, self.radial.make_grid(3, 64, 9.0), 2.0), {})
            self.assertEqual(load_estimates(path, grid, 1.0), {})
            self.assertEqual(len(parse_estimates(read_locked(path))), 4)

    def test_estimate_store_labels(self):
        """A block whose label disagrees with its fields is stale"""
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "estimates.txt")
            save_estimates(path, [estimate("C_r", 0.3, 3.0)])
            text = read_locked(path)
            self.assertTrue(text.startswith("[gn.3.0@N=3,mu=2.0,M=64,r_max=8.0,uniform,g=6.0]"))
            with self.assertRaises(StaleEstimateError):
                parse_estimates(text.replace("M=64,", "M=65,", 1))

    def test_malformed_estimates(self):
        """A block with a missing field is stale"""
        with self.assertRaises(StaleEstimateError):
            parse_estimates("[shl]\nname=S_HL\nvalue=0.9\n")

    def test_solution_summary_ground_state(self):
        """Only a negative local minimum is reported as the ground state"""
        record = record_with_energy(-0.2)
        self.assertNotIn("ground state", solution_summary(record))
        record.kind = SolutionKind.LOCAL_MIN
        summary = solution_summary(record)
        self.assertIn("ground state: lowest among found critical points", summary)
        self.assertTrue(summary.startswith("LocalMin: energy=-0.2 "))


class TestEnvironment(unittest.TestCase):

    def test_env_files_in_order(self):
        """.env.{APP_ENV} overrides .env"""
        with tempfile.TemporaryDirectory() as tmp:
            with open(os.path.join(tmp, ".env"), "w") as f:
                f.write("KCN_TEST_SETTING=base\nKCN_TEST_ONLY_BASE=1\n")
            with open(os.path.join(tmp, ".env.staging"), "w") as f:
                f.write("KCN_TEST_SETTING=staging\n")
            with patch.dict(os.environ, {}, clear=False):
                loaded = load_environment("staging", tmp)
                self.assertEqual([os.path.basename(path) for path in loaded], [".env", ".env.staging"])
                self.assertEqual(os.environ["KCN_TEST_SETTING"], "staging")
                self.assertEqual(os.environ["KCN_TEST_ONLY_BASE"], "1")


class TestMain(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.env = patch.dict(os.environ, {"KCN_CACHE_DIR": os.path.join(self.tmp.name, "cache"), "KCN_WORKERS": "1"})
        self.env.start()
        self.addCleanup(self.env.stop)

    def _config(self, **overrides) -> str:
        config = replace(
            RunConfig(),
            M=64,
            r_max=8.0,
            out_dir=os.path.join(self.tmp.name, "out"),
            estimates_file=os.path.join(self.tmp.name, "estimates.txt"),
            **overrides,
        )
        path = os.path.join(self.tmp.name, "run.cfg")
        config.write(path)
        return path

    def _run(self, *argv) -> int:
        with redirect_stdout(io.StringIO()):
            return main.main(list(argv))

    def test_local_solve_outside_mixed_regime(self):
        """--kind local in Case III exits with the regime code"""
        path = self._config(q=3.0, p=3.5, alpha=1.0)
        self.assertEqual(self._run("solve", "--kind", "local", "--config", path), 2)

    def test_bad_config(self):
        """An unknown key exits with the configuration code"""
        path = os.path.join(self.tmp.name, "bad.cfg")
        with open(path, "w") as f:
            f.write("N=3\nnodes=12\n")
        self.assertEqual(self._run("thresholds", "--config", path), 4)
        self.assertEqual(self._run("thresholds", "--config", os.path.join(self.tmp.name, "missing.cfg")), 4)

    def test_bad_environment(self):
        """Malformed environment variables exit with the configuration code"""
        with patch.dict(os.environ, {"KCN_WORKERS": "zero"}):
            self.assertEqual(self._run("thresholds", "--config", self._config()), 4)

    def test_thresholds_without_constants(self):
        """Case III needs no constants and still writes its report"""
        path = self._config(q=3.0, p=3.5, alpha=1.0)
        self.assertEqual(self._run("thresholds", "--config", path), 0)
        with open(os.path.join(self.tmp.name, "out", "thresholds.txt"), encoding="utf-8") as f:
            report = f.read()
        self.assertIn("regime = CaseIII", report)
        self.assertIn("not required", report)

    def test_thresholds_with_overrides(self):
        """Overridden constants are used and labelled as such"""
        path = self._config(alpha=0.01, c_p=0.31, c_q=0.82, s_hl=0.47)
        self.assertEqual(self._run("thresholds", "--config", path), 0)
        with open(os.path.join(self.tmp.name, "out", "thresholds.txt"), encoding="utf-8") as f:
            report = f.read()
        self.assertIn("[override]", report)
        self.assertIn("alpha1 = ", report)
        self.assertFalse(os.path.exists(os.path.join(self.tmp.name, "estimates.txt")))

    def test_fiber_command(self):
        """Case III fiber of the initial profile: samples plus one P- maximizer"""
        path = self._config(q=3.0, p=3.5, alpha=1.0)
        self.assertEqual(self._run("fiber", "--config", path), 0)
        with open(os.path.join(self.tmp.name, "out", "fiber.csv"), encoding="utf-8") as f:
            lines = [line for line in f.read().splitlines() if not line.startswith("#")]
        self.assertEqual(lines[0], FIBER_HEADER)
        rows = [line.split(",") for line in lines[1:]]
        self.assertEqual(len(rows), main.FIBER_SAMPLES + 1)
        self.assertEqual([row[3] for row in rows if row[3] != "-"], ["Pminus"])
        s = [float(row[0]) for row in rows]
        self.assertEqual(s, sorted(s))

    def test_parser(self):
        """Flags map onto configuration overrides"""
        args = main.build_parser().parse_args(["sweep", "--grid-M", "96", "--seed", "7", "--out", "elsewhere"])
        config = main.load_config(args)
        self.assertEqual((config.M, config.seed, config.out_dir), (96, 7, "elsewhere"))
        with redirect_stderr(io.StringIO()), self.assertRaises(SystemExit):
            main.build_parser().parse_args(["solve", "--kind", "saddle"])


if __name__ == "__main__":
    unittest.main(verbosity=2)
