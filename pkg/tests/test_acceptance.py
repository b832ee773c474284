"""Checklist of the laboratory's end-to-end guarantees.

Each test exercises one advertised guarantee at its stated tolerance and
prints exactly one summary line, so `pytest -s tests/test_acceptance.py`
reads as a pass/fail checklist.  Every run is deterministic (seeded
corpora, fixed meshes): these are regression gates, not statistical tests.
All thresholds were calibrated once against a first honest run and frozen.
"""
import time

import numpy as np

from degenlab import (build_mesh, generate_family, default_case,
                      convergence_study, corollary2_check, ProblemSpec,
                      Cylinder, CoefficientField, energy_ratio,
                      main_estimate_sweep, locally_homogeneous_solution,
                      caccioppoli_ratio, w_estimate_ratio, boundary_lipschitz,
                      duality_check, hardy_report, hardy_check, trace_report,
                      random_w1p_field, smooth_random_closure, march,
                      sample_on_mesh, oscillation, oscillation_scan,
                      DiscreteField, TimeStepperConfig)


def _line(tag, ok, detail):
    print("[acceptance %s] %s %s" % (tag, detail, "PASS" if ok else "FAIL"))


def _const(v):
    def closure(t, xp, xd):
        return v + 0.0 * np.asarray(xd, float)
    return closure


def test_01_manufactured_convergence_rates():
    # graded d=1 ladder, dt ~ h^2 (time counts M^2/512); the fitted rate of
    # the weighted solution error must stay >= 1.8 and the gradient error
    # rate >= 0.9, single-threaded in under two minutes
    t0 = time.perf_counter()
    case = default_case(1, lam=1.0)
    meshes = [build_mesh(1, 4.0, M, 2.0, time_step=1.0 / nt, time_count=nt)
              for M, nt in ((64, 8), (128, 32), (256, 128), (512, 512))]
    table = convergence_study(case, meshes, p=2.0)
    r0, r1 = table.fitted_rates()
    elapsed = time.perf_counter() - t0
    ok = r0 >= 1.8 and r1 >= 0.9 and elapsed < 120.0
    _line("01 mms-rates", ok,
          "weighted-L2 rate %.3f (>=1.8) gradient rate %.3f (>=0.9) "
          "runtime %.1fs (<120s)" % (r0, r1, elapsed))
    assert ok


def test_02_energy_ratio_corpus_within_dissipation_bound():
    # 50 seeds x 4 lambdas at nu = 0.5; the implicit-Euler dissipation
    # identity makes ratio <= 4/nu exact, so 100% must pass untoleranced
    mesh = build_mesh(1, 4.0, 16, 2.0, time_step=0.1, time_count=10)
    kinds = ("constant", "xd_only", "oscillatory")
    worst, n_pass, n = 0.0, 0, 0
    for s in range(50):
        coeffs = generate_family(s, kinds[s % 3], 0.5, 0.2, dim=1)
        prob = ProblemSpec(mesh, coeffs, seed=s,
                           F=(smooth_random_closure(s + 100, 1),),
                           f=smooth_random_closure(s + 200, 1))
        for lam in (1.0, 10.0, 100.0, 1000.0):
            rep = energy_ratio(prob, lam)
            worst = max(worst, rep.ratio)
            n_pass += int(rep.passed)
            n += 1
    ok = n_pass == n and worst <= 4.0 / 0.5
    _line("02 energy", ok,
          "%d/%d runs under 4/nu=8, worst ratio %.4f" % (n_pass, n, worst))
    assert ok


def test_03_gradient_ratio_uniform_across_lambda():
    # p in {2,3,4} x {constant, xd_only} x lambda {1..1000}: within the
    # window lambda*rho0 >= 1 the ratio spread per cell stays <= 3 and one
    # space+time refinement moves each ratio by <= 15%
    mesh = build_mesh(1, 4.0, 32, 2.0, time_step=1.0 / 32, time_count=32)
    f = smooth_random_closure(7, 1)
    worst_u, worst_d, all_ok = 0.0, 0.0, True
    for kind in ("constant", "xd_only"):
        for p in (2.0, 3.0, 4.0):
            coeffs = generate_family(3, kind, 0.5, 0.2, dim=1)
            prob = ProblemSpec(mesh, coeffs, seed=3, f=f, rho0=1.0)
            reps = main_estimate_sweep(prob, p,
                                       (1.0, 10.0, 100.0, 1000.0))
            worst_u = max(worst_u,
                          max(r.params["uniformity"] for r in reps))
            worst_d = max(worst_d,
                          max(r.params["refine_drift"] for r in reps))
            all_ok = all_ok and all(r.passed for r in reps)
    ok = all_ok and worst_u <= 3.0 and worst_d <= 0.15
    _line("03 lambda-sweep", ok,
          "6 cells x 4 lambdas: worst spread %.3f (<=3) worst refinement "
          "drift %.4f (<=0.15)" % (worst_u, worst_d))
    assert ok


def test_04_hardy_corpus_and_sharpness_probe():
    # corpus: 500 random fields vanishing at the degenerate boundary, the
    # ratio ||u/x||_p / ||D_d u||_p stays under p/(p-1) + 0.05 for every one
    mesh = build_mesh(1, 4.0, 64, 2.0, time_step=0.25, time_count=4)
    n_pass, n = 0, 0
    for p in (1.5, 2.0, 3.0, 4.0):
        for s in range(125):
            rep = hardy_report(random_w1p_field(1000 * int(2 * p) + s, mesh),
                               p, seed=s)
            n_pass += int(rep.passed)
            n += 1
    corpus_ok = n_pass == n

    # sharpness: u = x^(1 - 1/p + delta) at delta = 0.05 on a fine graded
    # unit-interval mesh should push the ratio toward the sharp constant
    # p/(p-1).  The 10% target is met for p in {2,3,4}; at p = 1.5 the
    # continuum ratio 1/(1 - 1/p + delta) itself sits 13.04% below the
    # sharp constant, so no discretization can reach 10% there.  The probe
    # is still required to track that continuum value to 1%, which pins the
    # gap on the exponent shift delta rather than on quadrature error.
    probe = build_mesh(1, 1.0, 65536, 6.0)
    x = probe.xd_nodes
    gaps, tracked = [], True
    within10 = {}
    for p in (1.5, 2.0, 3.0, 4.0):
        beta = 1.0 - 1.0 / p + 0.05
        vals = np.where(x > 0, x, 1.0) ** beta
        vals[0] = 0.0
        ratio = hardy_check(DiscreteField(probe, vals[:, None]), p).ratio
        sharp = p / (p - 1.0)
        gap = (sharp - ratio) / sharp
        gaps.append("p=%g:%.1f%%" % (p, 100 * gap))
        within10[p] = gap <= 0.10
        tracked = tracked and abs(ratio - 1.0 / beta) <= 0.01 / beta
    stated_ok = corpus_ok and all(within10.values())
    _line("04 hardy", stated_ok,
          "corpus %d/%d under p/(p-1)+0.05; sharpness gap %s (target "
          "<=10%%)" % (n_pass, n, " ".join(gaps)))
    # the suite gates on everything that is numerically reachable: the full
    # corpus, the 10% margin where the continuum allows it, and continuum
    # tracking of the probe at every p (including the unreachable p = 1.5)
    assert corpus_ok and within10[2.0] and within10[3.0] and within10[4.0] \
        and tracked


def test_05_forward_adjoint_pairing_identity():
    # 5 nonsymmetric-coefficient instances in each of d=1 and d=2: the
    # data/solution cross pairings agree to 1e-8 relative
    m1 = build_mesh(1, 4.0, 48, 2.0, time_step=0.05, time_count=20)
    rep1 = duality_check(ProblemSpec(m1, generate_family(0, "constant",
                                                         0.5, 0.2, dim=1),
                                     seed=0),
                         seeds=(0, 1, 2, 3, 4), eps=0.2)
    m2 = build_mesh(2, 4.0, 24, 2.0, xprime_count=12,
                    xprime_length=2 * np.pi, time_step=0.1, time_count=10)
    rep2 = duality_check(ProblemSpec(m2, generate_family(0, "constant",
                                                         0.5, 0.2, dim=2),
                                     seed=0),
                         seeds=(0, 1, 2, 3, 4), eps=0.2)
    asym = min(float(np.max(np.abs(s.a - np.transpose(s.a, (0, 1, 2, 4, 3)))))
               for s in (sample_on_mesh(generate_family(k, "constant", 0.5,
                                                        0.2, dim=2), m2,
                                        t=0.0)
                         for k in range(5)))
    ok = rep1.passed and rep2.passed and asym > 0.01
    _line("05 duality", ok,
          "rel pairing gap d=1 %.2e d=2 %.2e (<=1e-8), min coefficient "
          "asymmetry %.3f" % (rep1.params["rel_errors_max"],
                              rep2.params["rel_errors_max"], asym))
    assert ok


def test_06_local_estimate_constants_lambda_monotone():
    # empirical constant N(lambda) = worst local gradient / time-gradient /
    # screened-mass ratio over 10 locally homogeneous solutions; it must be
    # finite, non-increasing in lambda, and move <= 25% under refinement
    def constant_at(M, nt, lam):
        mesh = build_mesh(1, 4.0, M, 2.0, time_step=1.0 / nt, time_count=nt)
        worst = 0.0
        for s in range(10):
            coeffs = generate_family(s, "xd_only", 0.5, 0.2, dim=1)
            sol = locally_homogeneous_solution(
                ProblemSpec(mesh, coeffs, seed=s),
                Cylinder(1.0, 0.0, 0.5), lam=lam, seed=s)
            g, tg = caccioppoli_ratio(sol, 0.25, 0.5)
            w = w_estimate_ratio(sol, 0.25, 0.5)
            worst = max(worst, g.ratio, tg.ratio, w.ratio)
        return worst

    lambdas = (0.0, 1.0, 10.0, 100.0)
    Ns, drifts = [], []
    for lam in lambdas:
        coarse = constant_at(128, 128, lam)
        fine = constant_at(256, 256, lam)
        Ns.append(fine)
        drifts.append(abs(fine - coarse) / coarse)
    finite = all(np.isfinite(v) for v in Ns)
    monotone = all(Ns[i + 1] <= Ns[i] for i in range(len(Ns) - 1))
    stable = max(drifts) <= 0.25
    ok = finite and monotone and stable
    _line("06 local-constants", ok,
          "N(lambda)=%s monotone %s, worst refinement drift %.3f (<=0.25)"
          % ("/".join("%.3f" % v for v in Ns), monotone, max(drifts)))
    assert ok


def test_07_boundary_gradient_bound_refinement_stable():
    # sup of |Du_h| over cell centers of boundary cylinders, and the
    # near-boundary quotient sup |u_h|/x_d: both bounded, with the sup
    # gradient moving <= 25% per refinement
    worst_gdrift, worst_qdrift, sup_q = 0.0, 0.0, 0.0
    finite = True
    for s in range(3):
        prev = None
        for M, nt in ((64, 64), (128, 128), (256, 256)):
            mesh = build_mesh(1, 4.0, M, 2.0, time_step=1.0 / nt,
                              time_count=nt)
            coeffs = generate_family(s, "xd_only", 0.5, 0.2, dim=1)
            sol = locally_homogeneous_solution(
                ProblemSpec(mesh, coeffs, seed=s),
                Cylinder(1.0, 0.0, 0.5), lam=1.0, seed=s)
            rep = boundary_lipschitz(sol, 0.25)
            quot = rep.params["sup_u_over_xd"]
            finite = finite and np.isfinite(rep.lhs) and np.isfinite(quot)
            sup_q = max(sup_q, quot)
            if prev is not None:
                worst_gdrift = max(worst_gdrift,
                                   abs(rep.lhs - prev[0]) / prev[0])
                worst_qdrift = max(worst_qdrift,
                                   abs(quot - prev[1]) / prev[1])
            prev = (rep.lhs, quot)
    ok = finite and worst_gdrift <= 0.25 and worst_qdrift <= 0.25
    _line("07 boundary-lipschitz", ok,
          "3 seeds x 3 meshes: sup|Du| drift %.3f, quotient sup|u|/x "
          "<= %.4f drift %.3f (<=0.25)"
          % (worst_gdrift, sup_q, worst_qdrift))
    assert ok


def test_08_trace_decay_slopes():
    # fitted slope of the slice norm s(x_d) near the degenerate boundary:
    # >= 1/2 - 1/p - 0.05 both for marched solutions and for the random
    # discrete corpus, at p in {2, 4}
    mesh = build_mesh(1, 4.0, 128, 2.0, time_step=1.0 / 64, time_count=64)
    case = default_case(1, lam=1.0)
    F, f = case.synthesize_sources()
    sols = [march(mesh, case.coeffs, 1.0, F=F, f=f,
                  config=TimeStepperConfig())]
    for s in range(4):
        coeffs = generate_family(s, "xd_only", 0.5, 0.2, dim=1)
        sols.append(march(mesh, coeffs, 1.0, F=None,
                          f=smooth_random_closure(s + 50, 1),
                          config=TimeStepperConfig()))
    all_ok, mins = True, {}
    for p in (2.0, 4.0):
        slopes = []
        for sol in sols:
            rep = trace_report(sol, p, skip_initial=6)
            all_ok = all_ok and rep.passed
            slopes.append(rep.lhs)
        for s in range(25):
            rep = trace_report(random_w1p_field(s, mesh), p, seed=s)
            all_ok = all_ok and rep.passed
            slopes.append(rep.lhs)
        mins[p] = min(slopes)
    ok = all_ok
    _line("08 trace-decay", ok,
          "min slope p=2: %.3f (>=-0.05) p=4: %.3f (>=0.20) over 5 "
          "solutions + 25 fields each" % (mins[2.0], mins[4.0]))
    assert ok


def test_09_oscillation_functional_calibration():
    # constant coefficients: exactly zero.  x_d-only with constant last
    # column: below roundoff.  one entry sinusoidal in time over a full
    # period: mean |deviation| = (2/pi)*eps against a dense trapezoid
    # oracle, to 1%
    m = build_mesh(1, 4.0, 64, 2.0, time_step=0.05, time_count=20)
    c_const = generate_family(11, "constant", 0.5, 0.2, dim=1)
    v_const = oscillation(c_const, m, Cylinder(0.5, 0.0, 0.5)).value
    c_xd = generate_family(12, "xd_only", 0.5, 0.3, dim=1)
    g_xd, _ = oscillation_scan(c_xd, m, [0.25, 0.5, 1.0])

    eps, rho = 0.17, 1.0
    ms = build_mesh(1, 4.0, 256, 2.0, time_step=rho / 64, time_count=128)
    a = ((_sin_in_time(eps, rho),),)
    coeffs = CoefficientField(1, 0.5, a, _const(1.0),
                              lambda xd: 1.0 + 0.0 * np.asarray(xd, float),
                              kind="oscillatory")
    measured = oscillation(coeffs, ms, Cylinder(2.0, 0.0, rho)).value
    s = np.linspace(0.0, rho, 20001)
    oracle = eps * np.trapezoid(
        np.abs(np.sin(2 * np.pi * s / rho + 0.4)), s) / rho
    target = eps * 2.0 / np.pi
    ok = v_const == 0.0 and g_xd <= 1e-12 \
        and abs(measured - oracle) <= 0.01 * oracle \
        and abs(measured - target) <= 0.01 * target
    _line("09 oscillation", ok,
          "constant %.1e (==0) xd-only %.1e (<=1e-12) sinusoid %.6f vs "
          "(2/pi)eps %.6f" % (v_const, g_xd, measured, target))
    assert ok


def _sin_in_time(eps, period, phase=0.4):
    def closure(t, xp, xd):
        return 1.0 + eps * np.sin(2 * np.pi * np.asarray(t, float) / period
                                  + phase) + 0.0 * np.asarray(xd, float)
    return closure


def test_10_second_order_weighted_ratio_refinement_stable():
    # with exact weights and identity coefficients, the five-term
    # solution-side norm over the f-data norm stays finite and moves <= 25%
    # per refinement for the default manufactured case, p in {2, 4}
    case = default_case(1, lam=1.0)
    worst_drift, ratios = 0.0, {}
    finite = True
    for p in (2.0, 4.0):
        prev = None
        for M, nt in ((64, 64), (128, 128), (256, 256)):
            mesh = build_mesh(1, 4.0, M, 2.0, time_step=1.0 / nt,
                              time_count=nt)
            rep = corollary2_check(case, mesh, p)
            finite = finite and np.isfinite(rep.ratio)
            if prev is not None:
                worst_drift = max(worst_drift,
                                  abs(rep.ratio - prev) / prev)
            prev = rep.ratio
        ratios[p] = prev
    ok = finite and worst_drift <= 0.25
    _line("10 second-order", ok,
          "ratio p=2: %.4f p=4: %.4f, worst refinement drift %.4f (<=0.25)"
          % (ratios[2.0], ratios[4.0], worst_drift))
    assert ok
