"""Self-contained numeric verification batteries.

Each suite re-derives a pillar of the mechanism from an independent
direction — brute-force Monte Carlo against closed forms, exhaustive small
grids against bounds, algebraic identities at tight tolerances — and
returns structured pass/fail results.  The CLI exposes them under
``verify <suite>``; the acceptance tests call them directly.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import accountant, analysis, binfloat, perturb

__all__ = [
    "CheckResult",
    "SUITES",
    "verify_roundtrip",
    "verify_lemma1",
    "verify_lemma2",
    "verify_theorem1",
    "verify_appendix_b",
    "run_suite",
]


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.detail}"


# --- Round-trip battery ----------------------------------------------------


def verify_roundtrip(seed: int = 20240, count: int = 1_000_000) -> list:
    """Fixed-point round trip: |recover(encode(w)) - w| <= grid step."""
    checks = []
    gen = np.random.default_rng(seed)

    start = time.perf_counter()
    worst = 0.0
    for nu_inf in (0.5, 1.0, 0.037, 300.0):
        limit = binfloat.fixed_point_range(nu_inf)
        step = binfloat.grid_step(nu_inf)
        n = count // 4
        w = (gen.random(n, dtype=np.float64) * 2.0 - 1.0) * limit
        w = w.astype(np.float32)
        fx = binfloat.fp_to_fx(w, nu_inf)
        back = binfloat.recover_model(binfloat.encode(fx), nu_inf)
        err = np.max(np.abs(back.astype(np.float64) - w.astype(np.float64)))
        worst = max(worst, float(err) / step)
    elapsed = time.perf_counter() - start
    checks.append(CheckResult(
        "roundtrip_error_within_one_step",
        worst <= 1.0,
        f"max error {worst:.6f} grid steps over {count} params "
        f"({elapsed:.2f}s)",
    ))
    checks.append(CheckResult(
        "roundtrip_runtime_under_5s", elapsed < 5.0, f"{elapsed:.2f}s"))

    # Bit-field decomposition round-trips exactly, and matches known fields.
    parts = binfloat.decompose(-2.5)
    checks.append(CheckResult(
        "decompose_worked_example",
        (parts.sign, parts.exponent, parts.fraction) == (1, 128, 1 << 21)
        and binfloat.recompose(parts) == -2.5,
        f"-2.5 -> {(parts.sign, parts.exponent, parts.fraction)}",
    ))
    vals = np.ldexp(gen.random(1000) + 0.5, gen.integers(-30, 31, 1000))
    vals = np.float32(np.where(gen.random(1000) < 0.5, -vals, vals))
    ok = all(binfloat.recompose(binfloat.decompose(v)) == v for v in vals)
    checks.append(CheckResult(
        "decompose_recompose_identity", ok, "1000 random normalized values"))

    # Flipping stream bit k moves the decoded element by its place value.
    w = np.float32(gen.random(16) - 0.5)
    fx = binfloat.fp_to_fx(w, 0.5)
    bits = binfloat.encode(fx)
    base = binfloat.recover_model(bits, 0.5).astype(np.float64)
    ok = True
    for k in map(int, gen.integers(0, bits.size, 200)):
        flipped = bits.copy()
        flipped[k] ^= 1
        delta = binfloat.recover_model(flipped, 0.5).astype(np.float64) - base
        expected = 2.0 ** ((k % 23) - 23) * 2.0 ** (126 - 125)
        moved = abs(delta[k // 23])
        others = np.abs(np.delete(delta, k // 23)).max()
        ok &= math.isclose(moved, expected, rel_tol=0, abs_tol=0.0) and others == 0
    checks.append(CheckResult(
        "bit_flip_moves_exact_place_value", bool(ok), "200 random single flips"))
    return checks


# --- Flipped-value moments (single binary32) --------------------------------


def verify_lemma1(seed: int = 20241, trials: int = 1_000_000) -> list:
    """Monte-Carlo mean/variance of fraction-bit flips vs closed forms."""
    checks = []
    values = (2.5, -2.5, 1.0, 1.75, 0.6, -0.9)
    probs = (0.05, 0.1, 0.3)
    worst_mean_dev = 0.0
    worst_var_dev = 0.0
    mean_ok = True
    var_ok = True
    n_batches = 50
    for a in values:
        for p in probs:
            handle = perturb.RngHandle(seed, client=values.index(a),
                                       stage=probs.index(p))
            samples = analysis.flip_value_samples(a, p, trials, handle)
            mean_pred = analysis.flipped_mean(a, p)
            var_pred = analysis.flipped_variance(a, p)

            se_mean = math.sqrt(var_pred / trials)
            dev = abs(float(samples.mean()) - mean_pred) / se_mean
            worst_mean_dev = max(worst_mean_dev, dev)
            mean_ok &= dev <= 4.0

            batches = samples.reshape(n_batches, -1)
            batch_vars = batches.var(axis=1, ddof=1)
            se_var = float(batch_vars.std(ddof=1)) / math.sqrt(n_batches)
            dev_var = abs(float(batch_vars.mean()) - var_pred) / se_var
            worst_var_dev = max(worst_var_dev, dev_var)
            var_ok &= dev_var <= 4.0
    checks.append(CheckResult(
        "flipped_mean_matches_monte_carlo", mean_ok,
        f"worst deviation {worst_mean_dev:.2f} sigma over "
        f"{len(values) * len(probs)} (value, p) cells, {trials} trials each",
    ))
    checks.append(CheckResult(
        "flipped_variance_matches_monte_carlo", var_ok,
        f"worst deviation {worst_var_dev:.2f} sigma",
    ))

    # Within one binade the mean is affine in the value and the variance
    # constant; across binades the slope of the constant term changes.
    lin_ok = True
    const_ok = True
    for p in probs:
        for lo, mid, hi in ((1.0, 1.25, 1.75), (2.0, 2.75, 3.5), (-3.5, -2.75, -2.0)):
            f_lo, f_mid, f_hi = (analysis.flipped_mean(v, p) for v in (lo, mid, hi))
            interp = f_lo + (f_hi - f_lo) * (mid - lo) / (hi - lo)
            lin_ok &= math.isclose(f_mid, interp, rel_tol=1e-12)
            v_lo, v_mid, v_hi = (analysis.flipped_variance(v, p)
                                 for v in (lo, mid, hi))
            const_ok &= v_lo == v_mid == v_hi
    checks.append(CheckResult(
        "flipped_mean_piecewise_linear_within_binade", lin_ok,
        "three collinear points per binade, rel tol 1e-12"))
    checks.append(CheckResult(
        "flipped_variance_constant_within_binade", const_ok,
        "exact equality across each binade"))
    return checks


# --- Aggregate error moments and noise-power bound ---------------------------


def _random_lemma2_config(gen: np.random.Generator) -> dict:
    """One desk-scale aggregate-noise configuration.

    Upload norms sit well inside the recorded bound ``nu2`` (recorded over
    a training phase whose early models are larger), which is the regime
    where the aggregate bound's bias term is valid.
    """
    n_clients = int(gen.integers(3, 7))
    model_dim = int(gen.integers(64, 513))
    sizes = gen.integers(100, 400, n_clients).astype(np.float64)
    weights = sizes / sizes.sum()
    scale = float(gen.uniform(0.02, 0.3))
    models = [gen.standard_normal(model_dim) * scale / math.sqrt(model_dim)
              for _ in range(n_clients)]
    norms = [float(np.linalg.norm(m)) for m in models]
    nu2 = max(norms) * float(gen.uniform(2.2, 3.0))
    peak = max(float(np.max(np.abs(m))) for m in models)
    nu_inf_target = peak * float(gen.uniform(1.3, 2.2))
    nu_inf = float(np.float32(nu_inf_target))
    if nu_inf < peak:
        nu_inf = float(np.nextafter(np.float32(peak), np.float32(np.inf)))
    flip_probs = gen.uniform(0.02, 0.3, n_clients)
    models = [np.float32(m) for m in models]
    return dict(weights=weights, models=models, flip_probs=flip_probs,
                nu2=nu2, nu_inf=nu_inf, model_dim=model_dim)


def verify_lemma2(seed: int = 20242, uploads: int = 1000, configs: int = 5) -> list:
    """Empirical aggregate flip-noise power vs its closed-form bound."""
    checks = []
    gen = np.random.default_rng(seed)
    bound_ok = True
    details = []
    for c in range(configs):
        cfg = _random_lemma2_config(gen)
        bound = analysis.x_bf_bound(cfg["weights"], cfg["flip_probs"],
                                    cfg["model_dim"], cfg["nu2"], cfg["nu_inf"])
        total = 0.0
        for t in range(uploads):
            z = np.zeros(cfg["model_dim"])
            for n, (w, p) in enumerate(zip(cfg["models"], cfg["flip_probs"])):
                handle = perturb.RngHandle(seed + c, round=t, client=n)
                noisy = perturb.perturb_model(w, float(p), 0.0, cfg["nu_inf"],
                                              handle)
                z += cfg["weights"][n] * (noisy.astype(np.float64)
                                          - w.astype(np.float64))
            total += float(z @ z)
        empirical = total / uploads
        bound_ok &= empirical <= bound
        details.append(f"{empirical:.3e}<={bound:.3e}")
    checks.append(CheckResult(
        "aggregate_noise_power_below_bound", bound_ok,
        f"{uploads} uploads x {configs} configs: " + ", ".join(details)))

    # Per-element error moments match the closed form on one configuration.
    cfg = _random_lemma2_config(gen)
    w = cfg["models"][0]
    p = float(cfg["flip_probs"][0])
    stats = analysis.bias_moments(w, p, cfg["nu_inf"])
    reps = 4000
    errs = np.empty((reps, w.size))
    for t in range(reps):
        handle = perturb.RngHandle(seed + 99, round=t, client=0)
        noisy = perturb.perturb_model(w, p, 0.0, cfg["nu_inf"], handle)
        errs[t] = noisy.astype(np.float64) - w.astype(np.float64)
    se = math.sqrt(stats.variance / reps)
    mean_dev = float(np.max(np.abs(errs.mean(axis=0) - stats.mean))) / se
    var_emp = float(errs.var(axis=0, ddof=1).mean())
    checks.append(CheckResult(
        "per_element_error_mean_within_4_sigma", mean_dev <= 4.0,
        f"worst element deviation {mean_dev:.2f} sigma over {reps} flips"))
    checks.append(CheckResult(
        "per_element_error_variance_matches",
        abs(var_emp - stats.variance) / stats.variance <= 0.05,
        f"empirical {var_emp:.3e} vs formula {stats.variance:.3e}"))
    return checks


# --- Budget inversion --------------------------------------------------------


def verify_theorem1() -> list:
    """Self-consistency of the flip-probability budget inversion."""
    checks = []
    lams = (1.5, 2.0, 3.0, 5.0, 8.0)
    epss = (0.5, 1.0, 5.0, 10.0)
    rounds = (1, 10, 25, 50, 100)
    kappas = (0.0005, 0.002)
    worst = 0.0
    bound_ok = True
    points = 0
    for lam in lams:
        for eps in epss:
            for k in rounds:
                for kb in kappas:
                    p = accountant.required_ber(
                        accountant.PrivacyBudget(lam, eps, k), kb)
                    per_round = eps / k
                    recovered = kb / (lam - 1.0) * ((1.0 - p) / p) ** (lam - 1.0)
                    worst = max(worst, abs(recovered - per_round) / per_round)
                    # The spendable divergence bound is strictly inside the
                    # budget (its -1 term is pure slack).
                    spent = kb / (lam - 1.0) * (((1.0 - p) / p) ** (lam - 1.0)
                                                - 1.0)
                    bound_ok &= spent <= per_round
                    points += 1
    checks.append(CheckResult(
        "budget_inversion_identity_1e-10", worst <= 1e-10,
        f"worst relative error {worst:.2e} over {points} grid points"))
    checks.append(CheckResult(
        "divergence_bound_within_budget", bound_ok,
        "per-round divergence bound <= epsilon/rounds at the solved p"))

    spot = accountant.required_ber(accountant.PrivacyBudget(2.0, 10.0, 50), 0.02)
    checks.append(CheckResult(
        "spot_value_1_over_11", abs(spot - 1.0 / 11.0) <= 1e-15,
        f"required_ber(2, 10, 50, 0.02) = {spot!r}"))

    infeasible = False
    try:
        accountant.required_ber(accountant.PrivacyBudget(2.0, 0.5, 100), 0.02)
    except ValueError:
        infeasible = True
    checks.append(CheckResult(
        "infeasible_budget_rejected", infeasible,
        "budgets demanding p >= 1/2 raise"))
    return checks


# --- Per-bit divergence oracle ------------------------------------------------


def verify_appendix_b() -> list:
    """Exact three-atom divergence vs its closed-form bound on a dense grid."""
    checks = []
    qs = [round(0.1 * i, 10) for i in range(1, 11)]
    ps = [0.01, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45]
    lams = (1.5, 2.0, 3.0, 5.0)
    oracle_ok = True
    worst_gap = -math.inf
    points = 0
    for j in range(binfloat.FRACTION_BITS):
        for q in qs:
            for p in ps:
                for lam in lams:
                    d = analysis.renyi_divergence_oracle(j, q, p, lam)
                    b = analysis.per_bit_bound(j, q, p, lam)
                    oracle_ok &= d <= b + 1e-12
                    worst_gap = max(worst_gap, d - b)
                    points += 1
    checks.append(CheckResult(
        "oracle_below_per_bit_bound", oracle_ok,
        f"{points} grid points, worst (oracle - bound) = {worst_gap:.2e}"))

    mix_ok = True
    worst_mix = -math.inf
    for q in qs:
        for p in ps:
            for lam in lams:
                lhs, rhs = analysis.moment_inequality_sides(q, p, lam)
                mix_ok &= lhs <= rhs + 1e-12 * max(1.0, abs(rhs))
                worst_mix = max(worst_mix, (lhs - rhs) / max(1.0, abs(rhs)))
    checks.append(CheckResult(
        "mixture_moment_inequality", mix_ok,
        f"worst relative (lhs - rhs) = {worst_mix:.2e}"))

    example = analysis.renyi_divergence_oracle(22, 1.0, 0.1, 2.0)
    expected = math.log(0.45**2 / 0.05 + 0.05**2 / 0.45 + 0.5**2 / 0.5)
    checks.append(CheckResult(
        "worked_example_msb", abs(example - expected) <= 1e-12,
        f"D(j=22, q=1, p=0.1, lam=2) = {example:.10f}"))

    # Summing per-bit bounds over a stream reproduces the accountant's
    # budget relation through kappa_bar.
    gen = np.random.default_rng(7)
    q_stream = gen.random(23 * 5)
    weights = 2.0 ** ((np.arange(q_stream.size) % 23) - 23)
    kappa_bar = float(np.sum(q_stream * weights))
    lam, p = 3.0, 0.12
    total = sum(analysis.per_bit_bound(int(k % 23), float(q_stream[k]), p, lam)
                for k in range(q_stream.size))
    closed = kappa_bar / (lam - 1.0) * (((1.0 - p) / p) ** (lam - 1.0) - 1.0)
    checks.append(CheckResult(
        "per_bit_bounds_sum_to_kappa_relation",
        math.isclose(total, closed, rel_tol=1e-12),
        f"sum {total:.12e} vs closed form {closed:.12e}"))
    return checks


SUITES = {
    "roundtrip": verify_roundtrip,
    "lemma1": verify_lemma1,
    "lemma2": verify_lemma2,
    "theorem1": verify_theorem1,
    "appendixB": verify_appendix_b,
}


def run_suite(name: str) -> list:
    """Run a named suite and return its check results."""
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    return SUITES[name]()
