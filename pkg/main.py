import argparse
import asyncio
import os
import signal
import sys
import traceback
from typing import Optional

import numpy as np

from config import load_environment

load_environment()

# Configure logging FIRST, before importing any services
from helper.logger_utils import configure_logging, force_log

logger = configure_logging(os.path.join(os.getenv("KCN_LOG_DIR", "logs"), "kcn.log"))

# NOW import services after logging is configured
from common.enums import CardanoVariant, SolutionKind
from common.exceptions import ConfigError, ConditionFailed, KcnError, NotConverged, RegimeMismatch
from config.run_config import RunConfig
from helper.csv_report_helper import fiber_csv, sweep_csv, write_csv
from helper.field_io import read_field, write_field
from helper.record_io import load_estimates, save_estimates, write_metadata
from helper.report_helper import bound_summary, solution_summary, threshold_report, verification_summary, write_report
from helper.settings_loader import EnvironmentSettings
from models import ConstantEstimate, RieszKernel, SolutionRecord, VerificationCheck, WorkingConstants
from schedulers import AlphaSweepScheduler
from services import (
    ConstantsEstimationService,
    ExponentsService,
    FiberGeometryService,
    FunctionalService,
    RadialFieldService,
    RieszService,
    SolverService,
    VerificationService,
)

DEFAULT_CONFIG = os.path.join(os.path.dirname(os.path.abspath(__file__)), "config", "default.cfg")
FIBER_SAMPLES = 401


class KcnRunner:
    """Services wired for one run configuration"""

    def __init__(self, config: RunConfig, env: EnvironmentSettings):
        self.config = config
        self.params = config.problem_params()
        self.exponents = ExponentsService()
        self.radial = RadialFieldService(s_max=config.s_max)
        self.riesz = RieszService(cache_dir=env.cache_dir, workers=env.workers)
        self.functional = FunctionalService(self.radial, self.riesz, morse_tol=config.morse_tol)
        self.fiber = FiberGeometryService(self.functional, self.exponents)
        self.solver = SolverService(self.functional, self.fiber, self.exponents, config.solver_settings())
        self.estimation = ConstantsEstimationService(
            self.riesz, self.radial, self.functional, starts=config.starts, seed=config.seed, workers=env.workers
        )
        self.verification = VerificationService(
            self.solver, self.estimation, seed=config.seed, mc_samples=config.mc_samples
        )
        self.grid = self.radial.make_grid(config.N, config.M, config.r_max, config.grid_spacing, config.grading)
        self._kernel: Optional[RieszKernel] = None

    @property
    def kernel(self) -> RieszKernel:
        if self._kernel is None:
            self._kernel = self.riesz.load_or_build_kernel(self.grid, self.config.mu)
        return self._kernel

    def out_path(self, name: str) -> str:
        return os.path.join(self.config.out_dir, name)

    # constants

    def _estimate(self, key: str) -> ConstantEstimate:
        params = self.params
        if key == "s_hl":
            return self.estimation.estimate_shl(params.N, params.mu, self.grid, self.kernel, delta=self.config.bubble_delta)
        exponent = params.p if key == "c_p" else params.q
        return self.estimation.estimate_gn_constant(params.N, params.mu, exponent, self.grid, self.kernel)

    def estimate_all(self) -> list[ConstantEstimate]:
        keys = ["c_q", "s_hl"] if self.params.p_is_critical else ["c_p", "c_q", "s_hl"]
        return [self._estimate(key) for key in keys]

    def resolve_constants(self, keys=("c_p", "c_q", "s_hl")) -> WorkingConstants:
        """
        Overrides first, then the estimate store for this grid, then fresh
        estimates (which are saved). For p = 2*_mu, C_p = S_HL^(-2*_mu).
        """
        config, params = self.config, self.params
        values = {"c_p": config.c_p, "c_q": config.c_q, "s_hl": config.s_hl}
        provenance = {key: "override" for key, value in values.items() if value is not None}

        wanted = list(keys)
        if params.p_is_critical and "c_p" in wanted and values["c_p"] is None and "s_hl" not in wanted:
            wanted.append("s_hl")
        missing = [key for key in wanted if values[key] is None and not (key == "c_p" and params.p_is_critical)]

        if missing:
            stored = {}
            if os.path.exists(config.estimates_file):
                stored = load_estimates(config.estimates_file, self.grid, config.mu)
            lookup = {"c_p": f"gn.{float(params.p)!r}", "c_q": f"gn.{float(params.q)!r}", "s_hl": "shl"}
            fresh = []
            for key in missing:
                estimate = stored.get(lookup[key])
                if estimate is None:
                    estimate = self._estimate(key)
                    fresh.append(estimate)
                values[key] = estimate.value
                provenance[key] = (
                    f"{estimate.method} N={estimate.N} mu={estimate.mu!r} M={estimate.node_count} "
                    f"r_max={estimate.r_max!r} {estimate.spacing}"
                )
            if fresh:
                save_estimates(config.estimates_file, fresh)

        if params.p_is_critical and values["c_p"] is None and values["s_hl"] is not None:
            star = self.exponents.derive_exponents(params).two_mu_star
            values["c_p"] = values["s_hl"] ** (-star)
            provenance["c_p"] = "S_HL^(-2*_mu)"
        return WorkingConstants(values["c_p"], values["c_q"], values["s_hl"], provenance)

    def provenance(self, constants: WorkingConstants) -> dict:
        header = {key: repr(value) for key, value in self.params.as_dict().items()}
        header.update(
            {
                "grid": f"M={self.grid.node_count} r_max={self.grid.r_max!r} {self.grid.spacing.value} grading={self.grid.grading!r}",
                "seed": self.config.seed,
            }
        )
        for key, value in constants.as_dict().items():
            if value is not None:
                header[key] = f"{value!r} [{constants.provenance.get(key, '')}]"
        return header


# commands


def cmd_thresholds(runner: KcnRunner, args: argparse.Namespace) -> int:
    params = runner.params
    regime = runner.exponents.classify_regime(params)
    keys = ("c_p", "c_q", "s_hl") if regime.is_mixed else (("s_hl",) if params.p_is_critical else ())
    constants = runner.resolve_constants(keys) if keys else WorkingConstants()

    thresholds, g_profile, g_note, critical = None, None, "", None
    if regime.is_mixed:
        thresholds = runner.exponents.compute_thresholds(params, constants.c_p, constants.c_q, constants.s_hl)
        try:
            g_profile = runner.fiber.g_profile(params, constants.c_p, constants.c_q)
        except ConditionFailed as e:
            g_note = str(e)
    if params.p_is_critical and constants.s_hl is not None:
        critical = runner.exponents.critical_energy_level(params, constants.s_hl)

    hypotheses = runner.exponents.hypothesis_report(
        params, thresholds, runner.config.q_lower_critical, constants.s_hl
    )
    report = threshold_report(params, regime, thresholds, hypotheses, constants, g_profile, g_note, critical)
    print(report, end="")
    write_report(runner.out_path("thresholds.txt"), report)
    return 0


def _record_stem(kind: SolutionKind, alpha: float) -> str:
    return f"solution_{kind.value.lower()}_alpha{alpha!r}"


def _write_record(runner: KcnRunner, record: SolutionRecord, constants: WorkingConstants) -> None:
    stem = runner.out_path(_record_stem(record.kind, runner.params.alpha))
    write_field(f"{stem}.field", record.profile, runner.params.mu)
    write_metadata(f"{stem}.meta", record, constants)
    force_log(f"Wrote {stem}.field and {stem}.meta", "Main")


def cmd_solve(runner: KcnRunner, args: argparse.Namespace) -> int:
    params, config = runner.params, runner.config
    kind = SolutionKind.from_cli(args.kind or "mp")
    regime = runner.exponents.classify_regime(params)
    if kind is SolutionKind.LOCAL_MIN and not regime.is_mixed:
        raise RegimeMismatch(f"a local minimizer exists only in Cases I and II, got {regime.value}")

    needs_constants = (regime.is_mixed and params.alpha > 0) or params.p_is_critical
    constants = runner.resolve_constants() if needs_constants else WorkingConstants()
    kernel = runner.kernel

    bound = None
    try:
        if kind is SolutionKind.LOCAL_MIN:
            record = runner.solver.solve_local_min(params, kernel, constants)
        elif params.p_is_critical and CardanoVariant.for_parameters(params.N, params.theta, params.mu):
            bound = runner.solver.critical_bound_check(
                params, kernel, constants, delta=config.delta, q_lower_critical=config.q_lower_critical
            )
            record = bound.record
            record.checks.append(VerificationCheck("critical_bound", bound.ok, bound.sigma, bound.bound))
        else:
            record = runner.solver.solve_mountain_pass(params, kernel, constants, delta=config.delta)
    except NotConverged as e:
        if e.record is not None:
            _write_record(runner, e.record, constants)
            print(solution_summary(e.record), end="")
        raise

    _write_record(runner, record, constants)
    print(solution_summary(record), end="")
    if bound is not None:
        print(bound_summary(bound), end="")
    return 0 if record.all_checks_pass else 1


async def _run_scheduler(scheduler: AlphaSweepScheduler, *args):
    loop = asyncio.get_running_loop()
    for sig in (signal.SIGTERM, signal.SIGINT):
        try:
            loop.add_signal_handler(sig, lambda: asyncio.create_task(scheduler.stop_scheduler()))
        except (NotImplementedError, RuntimeError):
            pass
    return await scheduler.start_scheduler(*args)


def cmd_sweep(runner: KcnRunner, args: argparse.Namespace) -> int:
    params, config = runner.params.with_alpha(0.0), runner.config
    constants = runner.resolve_constants()
    ladder = runner.solver.alpha_ladder(
        params, config.alphas, constants, relative=config.alpha_ladder_mode == "relative"
    )
    kernel = runner.kernel

    def on_row(row):
        print(f"alpha={row.alpha:.6g} m={row.m} sigma={row.sigma} {row.error}".rstrip())

    scheduler = AlphaSweepScheduler(runner.solver, on_row=on_row)
    table = asyncio.run(_run_scheduler(scheduler, params, ladder, kernel, constants))

    trends = runner.solver.sweep_trends(table)
    distances, cauchy = runner.solver.h1_cauchy_trend(table.mp_records)
    provenance = runner.provenance(constants)
    provenance.update({f"trend.{key}": int(value) for key, value in trends.items()})
    provenance["trend.h1_cauchy_mp"] = int(cauchy)
    provenance["h1_distances_mp"] = ",".join("%.6g" % d for d in distances)
    write_csv(runner.out_path("sweep.csv"), sweep_csv(table.rows, provenance))

    for key, value in trends.items():
        force_log(f"trend {key}: {value}", "Main", "INFO" if value else "WARNING")
    if not any(row.converged_loc or row.converged_mp for row in table.rows):
        raise NotConverged("no sweep row converged")
    return 0


def cmd_estimate_constants(runner: KcnRunner, args: argparse.Namespace) -> int:
    estimates = runner.estimate_all()
    save_estimates(runner.config.estimates_file, estimates)
    for estimate in estimates:
        print(f"{estimate.name} (r={estimate.exponent!r}) = {estimate.value!r}  [{estimate.method}]")
    return 0


def cmd_verify(runner: KcnRunner, args: argparse.Namespace) -> int:
    params = runner.params
    regime = runner.exponents.classify_regime(params)
    if regime.is_mixed:
        constants = runner.resolve_constants()
    elif not params.p_is_critical:
        constants = runner.resolve_constants(("c_p",))
    else:
        constants = WorkingConstants()
    checks = runner.verification.run(params, runner.kernel, constants)
    report = verification_summary(checks)
    print(report, end="")
    write_report(runner.out_path("verify.txt"), report)
    return 0 if all(check.passed for check in checks) else 1


def cmd_fiber(runner: KcnRunner, args: argparse.Namespace) -> int:
    params = runner.params
    kind = SolutionKind.from_cli(args.kind or "mp")
    if args.field:
        u, mu = read_field(args.field, runner.radial.make_grid)
        if mu != params.mu:
            raise ConfigError(f"field {args.field} was written for mu={mu}, config has mu={params.mu}")
        kernel = runner.kernel if u.grid.matches(runner.grid) else runner.riesz.load_or_build_kernel(u.grid, mu)
        u = runner.radial.normalize_mass(u, params.c)
    else:
        kernel = runner.kernel
        if kind is SolutionKind.LOCAL_MIN:
            u = runner.solver.initial_local(kernel, params)
        else:
            u = runner.solver.initial_mountain_pass(kernel, params, runner.config.delta)

    base = runner.functional.base_quantities(u, params, kernel)
    rows = []
    for s in np.linspace(-runner.config.s_max, runner.config.s_max, FIBER_SAMPLES):
        energy, _, second = runner.functional.fiber_terms(base, params, float(s))
        rows.append((float(s), energy, second, "-"))

    regime = runner.exponents.classify_regime(params)
    try:
        report = runner.fiber.fiber_structure(runner.fiber.profile_from_base(base, params), regime)
        for point in report.critical_points:
            rows.append((point.s, point.energy, point.second_derivative, point.morse_class.value))
    except KcnError as e:
        force_log(f"fiber structure: {e}", "Main", "WARNING")
    rows.sort(key=lambda row: row[0])

    provenance = {key: repr(value) for key, value in params.as_dict().items()}
    provenance["source"] = args.field or f"initial {kind.value}"
    write_csv(runner.out_path("fiber.csv"), fiber_csv(rows, provenance))
    for s, energy, second, morse in rows:
        if morse != "-":
            print(f"s={s:.12g} E={energy:.12g} E''={second:.6g} {morse}")
    return 0


COMMANDS = {
    "thresholds": cmd_thresholds,
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "estimate-constants": cmd_estimate_constants,
    "verify": cmd_verify,
    "fiber": cmd_fiber,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kcn", description="Normalized solutions of the Kirchhoff-Choquard equation with combined nonlinearities"
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="key=value run configuration (default: config/default.cfg)")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--grid-M", dest="grid_M", type=int, help="number of radial nodes")
    parser.add_argument("--alpha", type=float, help="override the configured alpha")
    parser.add_argument("--kind", choices=("local", "mp"), help="solution kind for solve and fiber")
    parser.add_argument("--field", help="field file for the fiber command")
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig.from_file(args.config or DEFAULT_CONFIG)
    return config.with_overrides(out_dir=args.out, seed=args.seed, M=args.grid_M, alpha=args.alpha)


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        env = EnvironmentSettings.load()
    except EnvironmentError as e:
        logger.error(str(e))
        return ConfigError.exit_code

    try:
        config = load_config(args)
        runner = KcnRunner(config, env)
        logger.info(f"Running {args.command} on N={config.N} mu={config.mu} M={config.M}")
        code = COMMANDS[args.command](runner, args)
        force_log(f"{args.command} finished with exit code {code}", "Main")
        return code
    except KcnError as e:
        logger.error(f"{type(e).__name__}: {e}")
        force_log(f"{args.command} failed: {type(e).__name__}: {e}", "Main", "ERROR")
        return e.exit_code
    except Exception as e:
        logger.error(f"Unexpected error in {args.command}: {e}")
        force_log(f"Traceback: {traceback.format_exc()}", "Main", "ERROR")
        raise


if __name__ == "__main__":
    sys.exit(main())
