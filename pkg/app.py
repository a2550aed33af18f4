"""
Ruelle Application Controller

Top-level controller that wires model files, engine computations and exporters
together for one subcommand run.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from config import CAPACITY, DOLGOPYAT_SETTINGS, PATHS, init_config
from engine.borel_cantelli import family_borel_cantelli
from engine.correlator import base_correlation_profile, correlation, exact_zero_lag
from engine.dolgopyat import (
    ConstantLedger, build_family, cone_closure_check, damping_checks, iterate_nj,
    preimage_metric_check, random_cone_members, verify_family,
)
from engine.errors import CapacityError, ModelFileError
from engine.orbits import log_sum_from_orbits, prime_orbit_count, primitive_orbits, zeta_eval
from engine.shift import least_extension
from engine.thermo import (
    FlowModel, eigenvalue_lipschitz_check, gibbs_envelopes, gibbs_table, pressure,
    pressure_truncation_report, topological_entropy_sft,
)
from engine.twist import TwistParams, contraction_scan, lasota_yorke_check, lasota_yorke_growth
from models.functions import DepthFn
from models.schemas import (
    CorrelateParams, DolgopyatParams, ExperimentConfig, OrbitsParams, SelftestParams,
    ThermoParams, TwistScanParams, ZetaParams,
)
from models.symbolic_model import SymbolicModel
from services.export import ResultExporter, RunMetadata
from services.model_loader import load_model, load_observable
from services.selftest import run_selftest


logger = logging.getLogger(__name__)


# Exit codes
EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INPUT = 2
EXIT_CAPACITY = 3
EXIT_DOMAIN = 4


def exit_code_for(error: BaseException) -> int:
    """Map an exception raised by a run to the CLI exit code."""
    if isinstance(error, ModelFileError):
        return EXIT_INPUT
    if isinstance(error, CapacityError):
        return EXIT_CAPACITY
    return EXIT_DOMAIN


@dataclass
class CommandResult:
    """Tabular payload plus the structured report of one command."""
    header: list[str]
    rows: list[list[Any]]
    report: dict[str, Any] = field(default_factory=dict)
    ledger: dict[str, float] = field(default_factory=dict)
    passed: bool = True


@dataclass
class RunOutcome:
    status: int
    artifacts: list[Path]
    summary: dict[str, Any]


def _scalars(report: dict[str, Any], prefix: str = "") -> dict[str, Any]:
    """Flatten the scalar entries of a report for CSV metadata lines."""
    out: dict[str, Any] = {}
    for key, value in report.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(_scalars(value, f"{name}."))
        elif isinstance(value, (bool, int, float, complex, str, np.floating, np.integer)):
            out[name] = value
    return out


class RuelleApp:
    """
    Runs one validated ExperimentConfig.

    Usage:
        app = RuelleApp()
        outcome = app.run(config)
        outcome.status, outcome.artifacts
    """

    def __init__(self):
        self._handlers: dict[str, Callable[[ExperimentConfig, Optional[SymbolicModel]], CommandResult]] = {
            "thermo": self._thermo,
            "twist-scan": self._twist_scan,
            "orbits": self._orbits,
            "zeta": self._zeta,
            "dolgopyat": self._dolgopyat,
            "correlate": self._correlate,
            "selftest": self._selftest,
        }

    def run(self, config: ExperimentConfig) -> RunOutcome:
        """
        Execute the configured subcommand and write its artifact.

        Raises:
            ModelFileError: missing or malformed model/observable file, unknown function name
            CapacityError: an enumeration cap is exceeded
            RuelleError: any other domain failure
        """
        model = load_model(config.model) if config.model is not None else None
        handler = self._handlers[config.command]
        with CAPACITY.override(**config.caps.overrides()):
            result = handler(config, model)

        metadata = RunMetadata(
            model=model.name if model else "",
            model_sha256=model.sha256 if model else "",
            seed=config.seed,
            ledger=result.ledger,
        )
        out = config.out
        if out is None:
            init_config()
            suffix = ".json" if config.command == "dolgopyat" else ".csv"
            out = PATHS.exports / f"{config.command}{suffix}"
        exporter = ResultExporter(metadata)
        if Path(out).suffix.lower() == ".json":
            payload = dict(result.report)
            payload["table"] = {"header": result.header, "rows": result.rows}
            path = exporter.write_json(out, payload)
        else:
            metadata.extra = _scalars(result.report)
            path = exporter.write_csv(out, result.header, result.rows)

        status = EXIT_OK if result.passed else EXIT_CHECK_FAILED
        logger.info("%s finished with status %d", config.command, status)
        return RunOutcome(status=status, artifacts=[path], summary=_scalars(result.report))

    # ============ Helpers ============

    @staticmethod
    def _function(config: ExperimentConfig, model: SymbolicModel, name: str) -> DepthFn:
        try:
            return model.function(name)
        except KeyError as e:
            raise ModelFileError(str(config.model), e.args[0]) from None

    def _flow_model(self, config: ExperimentConfig, model: SymbolicModel,
                    with_roof: bool = True) -> FlowModel:
        f = self._function(config, model, config.potential)
        tau = (self._function(config, model, config.roof) if with_roof
               else DepthFn.constant(model.subshift, 1.0))
        return FlowModel(f, tau, model.theta)

    # ============ Commands ============

    def _thermo(self, config: ExperimentConfig, model: SymbolicModel) -> CommandResult:
        params: ThermoParams = config.params
        flow = self._flow_model(config, model, with_roof=params.solve_pf)
        subshift = model.subshift
        g = flow.f - flow.p_f * flow.tau
        envelopes, slope = gibbs_envelopes(flow.measure, g, params.gibbs_depth)
        index, masses, e_gm = gibbs_table(flow.measure, g, params.gibbs_depth)
        rows = [[w, nu, e, nu / e] for w, nu, e in zip(index.as_words(), masses, e_gm)]

        report: dict[str, Any] = {
            "pressure": pressure(subshift, flow.f),
            "h_top": topological_entropy_sft(subshift),
            "gibbs_depth": params.gibbs_depth,
            "gibbs_slope": slope,
            "c1": min(e.c1 for e in envelopes),
            "c2": max(e.c2 for e in envelopes),
            "envelopes": [{"m": e.m, "c1": e.c1, "c2": e.c2, "min_mass": e.min_mass,
                           "max_mass": e.max_mass} for e in envelopes],
        }
        if params.solve_pf:
            report["p_f"] = flow.p_f
        if params.truncation:
            f = flow.f
            longest = max(params.truncation + [f.depth])
            report["truncation"] = [
                {"depth": k, "pressure": p} for k, p in pressure_truncation_report(
                    subshift, lambda w: f(least_extension(subshift, w, longest)), params.truncation)
            ]
        if params.lipschitz:
            report["eigenvalue_lipschitz"] = eigenvalue_lipschitz_check(flow, params.lipschitz)
        return CommandResult(header=["word", "nu", "e_gm", "ratio"], rows=rows, report=report)

    def _twist_scan(self, config: ExperimentConfig, model: SymbolicModel) -> CommandResult:
        params: TwistScanParams = config.params
        flow = self._flow_model(config, model)
        profile = contraction_scan(flow, params.grid(), rho=params.rho, a=params.a,
                                   basis_depth=params.basis_depth,
                                   random_functions=params.random_functions, m_cap=params.m_cap,
                                   seed=config.seed, threads=config.threads)
        header = ["b", "spectral_radius", "m_star", "fitted_T"]
        rows = profile.rows()
        if params.gelfand:
            header.append("gelfand")
            for row, entry in zip(rows, profile.entries):
                row.append(entry.gelfand)

        report: dict[str, Any] = {"rho": profile.rho, "a": profile.a,
                                  "fitted_T": profile.fitted_T, "r_squared": profile.r_squared}
        if params.lasota_yorke:
            ms = list(range(1, params.ly_m_max + 1))
            report["lasota_yorke"] = {}
            for b in params.ly_b:
                results = lasota_yorke_check(flow, TwistParams(a=params.a, b=b, theta=model.theta),
                                             ms, seed=config.seed)
                report["lasota_yorke"][f"b={b:g}"] = {
                    "a0": [r.a0_measured for r in results],
                    "growth": lasota_yorke_growth(results),
                }
        return CommandResult(header=header, rows=rows, report=report)

    def _orbits(self, config: ExperimentConfig, model: SymbolicModel) -> CommandResult:
        params: OrbitsParams = config.params
        tau = self._function(config, model, config.roof)
        table = prime_orbit_count(tau, params.lambda_max, params.steps)
        return CommandResult(header=list(table.header), rows=[list(r) for r in table.rows],
                             report={"h_top": table.h_top, "orbits": table.orbits})

    def _zeta(self, config: ExperimentConfig, model: SymbolicModel) -> CommandResult:
        params: ZetaParams = config.params
        tau = self._function(config, model, config.roof)
        s = params.s_value()
        value = zeta_eval(model.subshift, tau, s, params.n_max)
        report: dict[str, Any] = {
            "s": s, "n_max": value.n_max, "partial_product": value.partial_product,
            "log_partial": value.log_partial, "determinant_value": value.determinant_value,
            "divergent": value.divergent,
        }
        if params.check_orbits:
            orbits = primitive_orbits(model.subshift, params.n_max, tau)
            from_orbits = log_sum_from_orbits(orbits, s, params.n_max)
            report["orbit_log_sum"] = from_orbits
            report["orbit_log_sum_error"] = abs(from_orbits - value.log_partial)
        header = ["s", "n_max", "partial_product", "log_partial", "determinant_value", "divergent"]
        rows = [[s, value.n_max, value.partial_product, value.log_partial,
                 value.determinant_value, value.divergent]]
        return CommandResult(header=header, rows=rows, report=report)

    def _dolgopyat(self, config: ExperimentConfig, model: SymbolicModel) -> CommandResult:
        params: DolgopyatParams = config.params
        flow = self._flow_model(config, model)
        ledger = ConstantLedger.for_model(flow, N=params.N, delta1=params.delta1,
                                          eps3=params.eps3, E=params.E)
        family = build_family(flow, params.b, ledger, max_colength=params.max_colength)
        ledger = ledger.with_family_constants(family.d3, family.d4)
        checks = verify_family(family, ledger)

        rng = np.random.default_rng(config.seed)
        members = random_cone_members(family, ledger.E, DOLGOPYAT_SETTINGS.cone_members, rng)
        tested, passed = cone_closure_check(family, ledger.E, members)
        pre_checked, pre_violations = preimage_metric_check(family)
        damping_reports = [damping_checks(H, family, ledger)
                           for H in [DepthFn.constant(model.subshift, 1.0)] + members]
        curve = iterate_nj(family, ledger, steps=params.steps)
        decreasing = all(b < a for a, b in zip(curve.values, curve.values[1:]))

        report: dict[str, Any] = {
            "family": {
                "b": family.b, "N": family.N, "s": family.s, "colength": family.colength,
                "cylinders": len(family.cylinders),
                "pairs": sum(len(p) for p in family.pairs),
                "J": len(family.J), "d3": family.d3, "d4": family.d4, "delta": family.delta,
            },
            "checks": {
                "lengths": checks.lengths, "diameters": checks.diameters,
                "separation": checks.separation, "balance": checks.balance,
                "representative": checks.representative, "omega_range": checks.omega_range,
                "all_hold": checks.all_hold,
            },
            "cone": {"members": len(members), "tested": tested, "closed": passed,
                     "holds": tested == passed},
            "preimage_metric": {"checked": pre_checked, "violations": pre_violations},
            "damping": {
                "members": len(damping_reports),
                "failed": sum(not r.all_hold for r in damping_reports),
                "mass_ratio": max(r.mass_ratio for r in damping_reports),
                "C10": ledger.C10,
                "all_hold": all(r.all_hold for r in damping_reports),
                "contraction_margin": min(r.contraction_rhs - r.contraction_lhs for r in damping_reports),
            },
            "iteration": {
                "steps": len(curve.values) - 1, "required_steps": curve.required_steps,
                "capped": curve.capped, "initial": curve.values[0], "final": curve.final,
                "bound": curve.bound, "below_bound": curve.below_bound,
                "strictly_decreasing": decreasing,
                "halved": curve.final < curve.values[0] / 2.0,
            },
        }
        if params.borel_cantelli_m is not None:
            bc = family_borel_cantelli(family, params.borel_cantelli_m, seed=config.seed)
            report["borel_cantelli"] = {
                "mode": bc.mode, "M": bc.M, "v_mass": bc.v_mass, "gamma2": bc.gamma2,
                "nu_u_eps": bc.nu_u_eps, "eps": bc.eps, "verdict": bc.verdict,
                "eps_below_one_at": bc.eps_below_one_at,
                "cluster_envelope": bc.cluster_envelope, "second_moment": bc.second_moment,
                "chebyshev": bc.chebyshev,
            }
        rows = [[r, v] for r, v in enumerate(curve.values)]
        passed_all = (checks.all_hold and tested == passed and pre_violations == 0
                      and report["damping"]["all_hold"])
        return CommandResult(header=["step", "integral"], rows=rows, report=report,
                             ledger=ledger.as_dict(), passed=passed_all)

    def _correlate(self, config: ExperimentConfig, model: SymbolicModel) -> CommandResult:
        params: CorrelateParams = config.params
        flow = self._flow_model(config, model)
        A = load_observable(params.A, model)
        B = load_observable(params.B, model)
        curve = correlation(A, B, flow.measure, flow.tau, params.time_grid(), params.n,
                            seed=config.seed, chunk_size=params.chunk_size,
                            threads=config.threads)
        fit = curve.fit
        report: dict[str, Any] = {
            "samples": curve.samples,
            "exact_zero_lag": exact_zero_lag(A, B, flow.measure, flow.tau),
            "fit": {"c": fit.c, "C": fit.C, "ci_low": fit.ci[0], "ci_high": fit.ci[1],
                    "points": fit.points, "accepted": fit.accepted},
        }
        if params.base_lags > 0:
            base = base_correlation_profile(flow.measure, A.base, B.base, params.base_lags)
            report["base"] = {"values": base.values, "rho4": base.rho4, "C11": base.C11}
        return CommandResult(header=["t", "rho", "se"], rows=[list(r) for r in curve.rows()],
                             report=report)

    def _selftest(self, config: ExperimentConfig, model: Optional[SymbolicModel]) -> CommandResult:
        params: SelftestParams = config.params
        results = run_selftest(full=params.full, seed=config.seed, threads=config.threads)
        rows = [[r.criterion, r.name, r.passed, r.detail] for r in results]
        report = {"passed": sum(r.passed for r in results), "total": len(results)}
        return CommandResult(header=["criterion", "name", "passed", "detail"],
                             rows=rows, report=report, passed=all(r.passed for r in results))
