"""Acceptance gate: ten end-to-end criteria, one report line each.

Criteria 1-5 drive the same numeric batteries the ``verify`` CLI
subcommand exposes; 6-10 exercise the BER algebra, the federated
mechanism comparison, the convergence bound, and the sensitivity
estimator at their stated tolerances.
"""

import time

import numpy as np
import pytest

from bitflipdp import accountant, analysis, flsim, perturb, verify


SEEDS = tuple(range(1, 13))  # twelve seeds, shared across compared arms


def _suite_detail(checks) -> str:
    worst = "; ".join(c.name for c in checks if not c.passed)
    return f"{sum(c.passed for c in checks)}/{len(checks)} checks" + (
        f" (failed: {worst})" if worst else "")


# ---------------------------------------------------------------------------
# criteria 1-5: numeric batteries


def test_criterion_1_roundtrip_fidelity(criterion_report):
    checks = verify.verify_roundtrip()
    criterion_report("criterion-1 round-trip fidelity",
                     all(c.passed for c in checks), _suite_detail(checks))


def test_criterion_2_flip_moment_forms(criterion_report):
    checks = verify.verify_lemma1()
    criterion_report("criterion-2 flip moment closed forms",
                     all(c.passed for c in checks), _suite_detail(checks))


def test_criterion_3_budget_inversion(criterion_report):
    checks = verify.verify_theorem1()
    criterion_report("criterion-3 budget inversion self-consistency",
                     all(c.passed for c in checks), _suite_detail(checks))


def test_criterion_4_per_bit_privacy_oracle(criterion_report):
    checks = verify.verify_appendix_b()
    criterion_report("criterion-4 per-bit privacy oracle",
                     all(c.passed for c in checks), _suite_detail(checks))


def test_criterion_5_aggregate_noise_bound(criterion_report):
    checks = verify.verify_lemma2()
    criterion_report("criterion-5 aggregate noise-power bound",
                     all(c.passed for c in checks), _suite_detail(checks))


# ---------------------------------------------------------------------------
# criterion 6: BER algebra


def test_criterion_6_ber_algebra(criterion_report):
    worst = 0.0
    for p_target in np.linspace(0.001, 0.499, 40):
        for p_channel in np.linspace(0.0, 0.45, 30):
            if p_channel > p_target:
                continue
            p_a = perturb.artificial_ber(p_target, p_channel)
            worst = max(worst, abs(perturb.compose_ber(p_a, p_channel) - p_target))
    identity_ok = worst <= 1e-12

    n = 23 * 4349  # >= 1e5 bits, in whole 23-bit words
    p_a, p_c = 0.08, 0.03
    bits = np.zeros(n, dtype=np.uint8)
    handle = perturb.RngHandle(2026)
    once = perturb.flip_bits(bits, p_a,
                             handle.substream(stage=perturb.STAGE_ARTIFICIAL_FLIP))
    twice = perturb.flip_bits(once, p_c,
                              handle.substream(stage=perturb.STAGE_CHANNEL_FLIP))
    p_hat = float(twice.mean())
    p = perturb.compose_ber(p_a, p_c)
    sigma = float(np.sqrt(p * (1 - p) / n))
    empirical_ok = abs(p_hat - p) <= 4 * sigma

    criterion_report(
        "criterion-6 BER composition algebra", identity_ok and empirical_ok,
        f"inverse identity max error {worst:.2e}; double flip "
        f"{p_hat:.5f} vs {p:.5f} ({abs(p_hat - p) / sigma:.2f} sigma)")


# ---------------------------------------------------------------------------
# criteria 7-9: federated mechanism comparison


@pytest.fixture(scope="module")
def experiment():
    """Default experiment (channel BER uniform on [0, 0.02]), 12 seeds."""
    config = flsim.ExperimentConfig(seeds=SEEDS)
    start = time.perf_counter()
    result = flsim.run_experiment(config)
    return result, time.perf_counter() - start


@pytest.fixture(scope="module")
def quiet_channel_experiment():
    """Same task under a far quieter channel (BER <= 0.0005).

    The packet-drop comparison is a fixed-budget face-off (eps = 10, the
    setting of the accuracy-vs-round figure it mirrors), so only those
    arms are run here.
    """
    config = flsim.ExperimentConfig(
        seeds=SEEDS, channel_ber_max=0.0005, epsilons=(10.0,),
        mechanisms=(flsim.Mechanism.CHANNEL_NATIVE_BITFLIP,
                    flsim.Mechanism.GAUSSIAN_DROP_PACKETS))
    return flsim.run_experiment(config)


def test_criterion_7_mechanism_ordering(criterion_report, experiment):
    result, elapsed = experiment
    details, ok = [], True
    for eps in (1, 10):
        native = result.final_accuracy(f"channel_native_bitflip_eps{eps}").mean()
        agnostic = result.final_accuracy(f"agnostic_bitflip_eps{eps}").mean()
        accept = result.final_accuracy(f"gaussian_accept_errors_eps{eps}").mean()
        ok &= native >= agnostic >= accept
        details.append(f"eps={eps}: {native:.3f} >= {agnostic:.3f} >= {accept:.3f}")

        divergent = sum(r.divergent for r in
                        result.results_for(f"gaussian_accept_errors_eps{eps}"))
        noiseless = result.final_accuracy("noiseless").mean()
        collapsed = divergent > 0 or accept <= noiseless - 0.15
        ok &= collapsed
        details.append(f"word-corruption collapse eps={eps}: "
                       f"{divergent}/{len(SEEDS)} divergent, acc {accept:.3f} "
                       f"vs noiseless {noiseless:.3f}")
    ok &= elapsed < 300.0
    details.append(f"runtime {elapsed:.1f}s")
    criterion_report("criterion-7 mechanism accuracy ordering", ok,
                     "; ".join(details))


def test_criterion_8_packet_drop_comparison(criterion_report, experiment,
                                            quiet_channel_experiment):
    noisy, _ = experiment
    details, ok = [], True
    for label, res in (("ber<=0.02", noisy),
                       ("ber<=0.0005", quiet_channel_experiment)):
        native = res.final_accuracy("channel_native_bitflip_eps10").mean()
        drop = res.final_accuracy("gaussian_drop_packets_eps10").mean()
        ok &= native >= drop
        details.append(f"{label}: {native:.3f} >= {drop:.3f}")
    criterion_report("criterion-8 packet-drop comparison", ok,
                     "; ".join(details))


def _bound_holds_every_round(result, config, arm_name, seed) -> tuple[bool, float]:
    arm_result = result.arm_results[(arm_name, seed)]
    task = result.task
    noiseless = arm_name == "noiseless"
    min_margin = np.inf
    ok = True
    for rec in arm_result.records:
        params = analysis.ConvergenceParams(
            mu=task.mu, alpha=task.alpha, gamma_het=task.gamma_het,
            eta=config.learning_rate, local_epochs=config.local_epochs,
            rounds=rec.round, clip=result.pretrain_records[seed].clip,
            p_max=0.0 if noiseless else arm_result.p_max,
            initial_gap=arm_result.initial_gap)
        bound = analysis.convergence_bound(
            params, 0.0 if noiseless else arm_result.x_bf_max)
        min_margin = min(min_margin, bound - rec.distance_sq)
        ok &= rec.distance_sq <= bound
    return ok, float(min_margin)


def test_criterion_9_convergence_bound(criterion_report, experiment):
    result, _ = experiment
    config = result.config
    ok = True
    margins = []
    for arm_name in ("noiseless", "channel_native_bitflip_eps1",
                     "channel_native_bitflip_eps10"):
        for seed in SEEDS:
            holds, margin = _bound_holds_every_round(result, config, arm_name,
                                                     seed)
            ok &= holds
            margins.append(margin)

    task = result.task
    params = analysis.ConvergenceParams(
        mu=task.mu, alpha=task.alpha, gamma_het=task.gamma_het,
        eta=config.learning_rate, local_epochs=config.local_epochs,
        rounds=config.rounds, clip=result.pretrain_records[SEEDS[0]].clip,
        p_max=0.0, initial_gap=0.3)
    zero_limit = analysis.convergence_bound(params, 0.0)
    closed = analysis.noiseless_bound(params)
    limit_ok = abs(zero_limit - closed) <= 1e-12 * closed
    ok &= limit_ok

    criterion_report(
        "criterion-9 convergence bound", ok,
        f"tracked distance below bound at all {config.rounds} rounds x "
        f"{len(SEEDS)} seeds x 3 arms (min margin {min(margins):.2f}); "
        f"zero-flip limit matches closed form "
        f"(rel err {abs(zero_limit - closed) / closed:.1e})")


# ---------------------------------------------------------------------------
# criterion 10: sensitivity estimator


def _mean_kappa(model_dim: int, sensitivity: float, repetitions: int = 6) -> float:
    data_rng = np.random.default_rng(77)
    values = []
    for rep in range(repetitions):
        checkpoints = data_rng.normal(0.0, 0.05, (4, model_dim)).astype(np.float32)
        handle = perturb.RngHandle(rep, stage=perturb.STAGE_KAPPA_DRAW)
        est = accountant.estimate_kappa_bar(checkpoints, sensitivity, 200, 0.5,
                                            handle)
        values.append(est.kappa_bar)
    return float(np.mean(values))


def test_criterion_10_sensitivity_estimator(criterion_report):
    by_dim = [_mean_kappa(m, 1e-4) for m in (64, 256, 1024)]
    dim_ok = by_dim[0] <= by_dim[1] <= by_dim[2]
    by_radius = [_mean_kappa(256, s) for s in (1e-5, 1e-4, 1e-3)]
    radius_ok = by_radius[0] <= by_radius[1] <= by_radius[2]
    formula_ok = accountant.classical_sensitivity(0.1, 1.0, 2000) == 1e-4
    criterion_report(
        "criterion-10 bit-sensitivity estimator",
        dim_ok and radius_ok and formula_ok,
        f"kappa by dim {[f'{v:.4f}' for v in by_dim]}, "
        f"by radius {[f'{v:.4f}' for v in by_radius]}, "
        f"sensitivity(0.1, 1, 2000) = "
        f"{accountant.classical_sensitivity(0.1, 1.0, 2000):.0e}")
