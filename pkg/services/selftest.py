"""
Self-test

Desk-scale acceptance checks with exact oracles, runnable from the CLI. The
default run uses reduced depths and sample sizes; full=True uses the complete
settings.
"""

import logging
import math
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import optimize

from engine.borel_cantelli import borel_cantelli_stats
from engine.correlator import SuspensionObservable, correlation, exact_base_correlation
from engine.dolgopyat import (
    ConstantLedger, build_family, cone_closure_check, damping_checks, iterate_nj,
    ledger_rates, random_cone_members, verify_family,
)
from engine.orbits import (
    prime_orbit_count, primitive_counts, primitive_orbits, top_entropy, zeta_eval,
)
from engine.thermo import (
    FlowModel, RuelleOperator, build_transfer, gibbs_envelopes, normalize_fa, rpf_solve, solve_pf,
)
from engine.twist import TwistParams, contraction_scan, lasota_yorke_check, lasota_yorke_growth
from models.functions import DepthFn, Profile
from models.subshift import Subshift


logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)


@dataclass
class CheckResult:
    """Outcome of one acceptance check."""
    criterion: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


# ============ Reference models ============

def bernoulli_model(p: float = 0.5, roof: tuple[float, float] = (1.0, SQRT2)) -> FlowModel:
    """Full 2-shift, Bernoulli(p, 1-p) equilibrium state, first-symbol roof."""
    shift = Subshift.full_shift(2)
    f = DepthFn.first_symbol(shift, [math.log(p), math.log(1.0 - p)])
    tau = DepthFn.first_symbol(shift, list(roof))
    return FlowModel(f + tau, tau, theta=0.5)


def golden_mean_parry() -> FlowModel:
    shift = Subshift.golden_mean()
    return FlowModel(DepthFn.constant(shift, 0.0), DepthFn.constant(shift, 1.0), theta=0.5)


def depth2_model() -> FlowModel:
    shift = Subshift.full_shift(2)
    f = DepthFn.from_table(shift, 2, {(0, 0): -0.2, (0, 1): -1.1, (1, 0): -0.7, (1, 1): -0.4})
    return FlowModel(f, DepthFn.constant(shift, 1.0), theta=0.5)


# ============ Checks ============

def _rpf_exactness(full: bool, seed: int, threads: Optional[int]) -> tuple[bool, str]:
    full2 = Subshift.full_shift(2)
    golden = Subshift.golden_mean()
    lam2 = rpf_solve(build_transfer(full2, DepthFn.constant(full2, 0.0))).lambda_
    lam_g = rpf_solve(build_transfer(golden, DepthFn.constant(golden, 0.0))).lambda_
    measure = bernoulli_model(0.3, (1.0, 1.0)).measure
    worst = 0.0
    for m in range(1, 11 if full else 7):
        index = full2.words(m)
        expected = np.prod(np.where(index.words == 0, 0.3, 0.7), axis=1)
        worst = max(worst, float(np.max(np.abs(measure.masses(m) - expected))))
    ok = abs(lam2 - 2.0) < 1e-12 and abs(lam_g - (1 + math.sqrt(5)) / 2) < 1e-12 and worst < 1e-12
    return ok, f"lambda_full2={lam2!r} lambda_golden={lam_g!r} max_cylinder_error={worst:.2e}"


def _pressure_normalization(full: bool, seed: int, threads: Optional[int]) -> tuple[bool, str]:
    shift = Subshift.full_shift(2)
    p = solve_pf(DepthFn.constant(shift, 0.0), DepthFn.constant(shift, 1.0))
    model = bernoulli_model()
    ledger = ConstantLedger.for_model(model)
    a0 = ledger_rates(ledger.mu0, ledger.gamma2, ledger.N, ledger.T0, 8.0, ledger.D1)[0]
    worst = 0.0
    for a in (0.0, a0 / 2, -a0 / 2):
        fa = normalize_fa(model.f, model.tau, a, model.p_f)
        ones = RuelleOperator(fa).apply(DepthFn.constant(shift, 1.0))
        worst = max(worst, float(np.max(np.abs(ones.values - 1.0))))
    ok = abs(p - math.log(2.0)) < 1e-10 and worst < 1e-12
    return ok, f"P_f={p!r} max|M_a 1 - 1|={worst:.2e} a0={a0:.3e}"


def _gibbs_inequality(full: bool, seed: int, threads: Optional[int]) -> tuple[bool, str]:
    m_max = 12 if full else 8
    parts, ok = [], True
    for name, model in (("bernoulli", bernoulli_model(0.3, (1.0, 1.0))),
                        ("golden", golden_mean_parry()), ("depth2", depth2_model())):
        g = model.f - model.p_f * model.tau
        envelopes, slope = gibbs_envelopes(model.measure, g, m_max)
        finite = all(math.isfinite(e.spread) for e in envelopes)
        ok &= finite and slope <= 0.01
        parts.append(f"{name}: slope={slope:.2e}")
    return ok, " ".join(parts)


def _eventual_contraction(full: bool, seed: int, threads: Optional[int]) -> tuple[bool, str]:
    grid = sorted({s * 2.0 ** j for j in range(8) for s in (1, -1)})
    m_cap = 400 if full else 150
    model = bernoulli_model()
    profile = contraction_scan(model, grid, rho=0.99, m_cap=m_cap, seed=seed, threads=threads)
    radii_ok = all(e.spectral_radius < 1.0 for e in profile.entries)

    b = math.pi
    expected = abs((np.exp(-1j * b) + np.exp(-1j * b * SQRT2)) / 2.0)
    got = model.twisted_operator(0.0, b).at_depth(1).spectral_radius()
    closed_ok = abs(got - expected) < 1e-12

    fit_ok = all(e.m_star <= profile.fitted_T * math.log(abs(e.b)) + 1e-9
                 for e in profile.entries if abs(e.b) >= 2 and math.isfinite(e.m_star))

    control = contraction_scan(bernoulli_model(roof=(1.0, 1.0)), [2.0, 16.0], rho=0.99,
                               m_cap=60, seed=seed, threads=threads)
    control_ok = all(abs(e.spectral_radius - 1.0) < 1e-9 and math.isinf(e.m_star)
                     for e in control.entries)
    ok = radii_ok and closed_ok and fit_ok and control_ok
    return ok, (f"max_radius={max(e.spectral_radius for e in profile.entries):.4f} "
                f"b=pi error={abs(got - expected):.1e} T={profile.fitted_T:.3f} "
                f"R2={profile.r_squared:.3f} control={control_ok}")


def _lasota_yorke(full: bool, seed: int, threads: Optional[int]) -> tuple[bool, str]:
    models = [("bernoulli", bernoulli_model())]
    if full:
        models.append(("golden", FlowModel(DepthFn.constant(Subshift.golden_mean(), 0.0),
                                           DepthFn.first_symbol(Subshift.golden_mean(), [1.0, SQRT2]))))
    ms = list(range(1, 21))
    growth, bounded = [], True
    for _, model in models:
        for b in (1.0, 4.0, 16.0):
            results = lasota_yorke_check(model, TwistParams(b=b, theta=model.theta), ms,
                                         depth=8 if full else 6, seed=seed)
            growth.append(lasota_yorke_growth(results))
            bounded &= all(0.0 <= r.a0_measured <= 1.0 + 1e-9 for r in results)
    worst = max(growth)
    return worst < 2.0 and bounded, f"max A0 growth over m={worst:.3f} bounded={bounded}"


def _orbits_zeta(full: bool, seed: int, threads: Optional[int]) -> tuple[bool, str]:
    n_max = 18 if full else 12
    ok = True
    for shift in (Subshift.full_shift(2), Subshift.golden_mean()):
        counts = primitive_counts(shift, n_max)
        periods = [orbit.n for orbit in primitive_orbits(shift, n_max)]
        enumerated = [periods.count(n) for n in range(1, n_max + 1)]
        ok &= counts == enumerated
    shift = Subshift.full_shift(2)
    value = zeta_eval(shift, DepthFn.constant(shift, 1.0), 1.0, 30)
    oracle = 1.0 / (1.0 - 2.0 * math.exp(-1.0))
    det_error = abs(value.determinant_value - oracle)
    product_error = abs(value.partial_product - oracle)
    ok &= det_error < 1e-6
    return ok, f"counts_match={ok} determinant_error={det_error:.1e} product_error={product_error:.1e}"


def _prime_orbits(full: bool, seed: int, threads: Optional[int]) -> tuple[bool, str]:
    shift = Subshift.full_shift(2)
    tau = DepthFn.first_symbol(shift, [1.0, SQRT2])
    h = top_entropy(shift, tau)
    oracle = optimize.brentq(lambda x: math.exp(-x) + math.exp(-x * SQRT2) - 1.0, 0.1, 1.0,
                             xtol=1e-14)
    table = prime_orbit_count(tau, 12.0, 6)
    errors = {round(row[0]): row[4] for row in table.rows}
    ratio = table.rows[-1][3]
    monotone = errors[8] > errors[10] > errors[12]
    ok = abs(h - oracle) < 1e-6 and 0.8 <= ratio <= 1.2 and monotone
    return ok, f"h_T={h:.9f} ratio(12)={ratio:.4f} monotone={monotone}"


def _dolgopyat(full: bool, seed: int, threads: Optional[int]) -> tuple[bool, str]:
    model = bernoulli_model()
    ok = True
    parts = []
    for b in ((8.0, 16.0, 32.0) if full else (16.0,)):
        ledger = ConstantLedger.for_model(model, N=4, delta1=0.1)
        family = build_family(model, b, ledger)
        ledger = ledger.with_family_constants(family.d3, family.d4)
        checks = verify_family(family, ledger)
        members = random_cone_members(family, ledger.E, 100, np.random.default_rng(seed))
        tested, passed = cone_closure_check(family, ledger.E, members)
        reports = [damping_checks(H, family, ledger)
                   for H in [DepthFn.constant(model.subshift, 1.0)] + members]
        damped = sum(r.all_hold for r in reports)
        curve = iterate_nj(family, ledger, steps=None if full else 50)
        decreasing = all(y < x for x, y in zip(curve.values, curve.values[1:]))
        halved = curve.final < curve.values[0] / 2.0
        ok &= (checks.all_hold and tested == len(members) and tested == passed
               and damped == len(reports) and decreasing and halved)
        parts.append(f"b={b:g}: family={checks.all_hold} cone={passed}/{tested} "
                     f"damping={damped}/{len(reports)} final={curve.final:.3e}")
    return ok, "; ".join(parts)


def _borel_cantelli(full: bool, seed: int, threads: Optional[int]) -> tuple[bool, str]:
    measure = bernoulli_model().measure
    report = borel_cantelli_stats(measure, [(0, 0), (0, 1)], N=1, M=8, mode="exact")
    oracle = 9.0 / 256.0
    cluster_ok = all(abs(x) < 1e-12 for x in report.cluster[1:])
    ok = abs(report.nu_u_eps - oracle) < 1e-12 and report.verdict and cluster_ok
    return ok, (f"nu(U_eps)={report.nu_u_eps!r} eps={report.eps:.4f} "
                f"(below 1 from M={report.eps_below_one_at}) cluster_zero={cluster_ok}")


def _correlation_decay(full: bool, seed: int, threads: Optional[int]) -> tuple[bool, str]:
    n = 1_000_000 if full else 200_000
    model = bernoulli_model()
    shift = model.subshift
    A = SuspensionObservable(DepthFn.indicator(shift, [(0,)]))
    grid = np.arange(0.0, 20.0 + 1e-9, 0.5) if full else np.arange(0.0, 6.0 + 1e-9, 0.25)
    curve = correlation(A, A, model.measure, model.tau, grid, n, seed=seed, threads=threads)

    control_model = bernoulli_model(roof=(1.0, 1.0))
    saw = SuspensionObservable(DepthFn.constant(shift, 1.0), Profile([0.0, 1.0], [[-0.5, 1.0]]))
    control = correlation(saw, saw, control_model.measure, control_model.tau,
                          np.arange(0.0, 20.0 + 1e-9, 0.25), n // 4, seed=seed, threads=threads)

    base = max(abs(exact_base_correlation(model.measure, A.base, A.base, k)) for k in range(1, 6))
    ok = curve.fit.accepted and not control.fit.accepted and base < 1e-12
    return ok, (f"c={curve.fit.c:.4f} CI=({curve.fit.ci[0]:.4f}, {curve.fit.ci[1]:.4f}) "
                f"control_accepted={control.fit.accepted} base_max={base:.1e}")


CHECKS: list[tuple[int, str, Callable[[bool, int, Optional[int]], tuple[bool, str]]]] = [
    (1, "rpf_exactness", _rpf_exactness),
    (2, "pressure_normalization", _pressure_normalization),
    (3, "gibbs_inequality", _gibbs_inequality),
    (4, "eventual_contraction", _eventual_contraction),
    (5, "lasota_yorke", _lasota_yorke),
    (6, "orbits_zeta", _orbits_zeta),
    (7, "prime_orbit_count", _prime_orbits),
    (8, "dolgopyat_lab", _dolgopyat),
    (9, "borel_cantelli", _borel_cantelli),
    (10, "correlation_decay", _correlation_decay),
]


def run_selftest(full: bool = False, seed: int = 0, threads: Optional[int] = None,
                 only: Optional[set[int]] = None) -> list[CheckResult]:
    """
    Run the acceptance checks.

    Args:
        full: Use full depths and sample sizes
        seed: Seed for the stochastic checks
        threads: Worker threads for scans and sampling
        only: Criterion numbers to run (all when omitted)

    Returns:
        One CheckResult per criterion; a check that raises is recorded as failed
    """
    results = []
    for criterion, name, check in CHECKS:
        if only is not None and criterion not in only:
            continue
        start = time.perf_counter()
        try:
            passed, detail = check(full, seed, threads)
        except Exception as e:
            logger.exception("self-test %d (%s) raised", criterion, name)
            passed, detail = False, f"{type(e).__name__}: {e}"
        elapsed = time.perf_counter() - start
        results.append(CheckResult(criterion, name, bool(passed), detail, elapsed))
        logger.info("self-test %d %s: %s (%.2fs)", criterion, name,
                    "pass" if passed else "FAIL", elapsed)
    return results
