//! Acceptance suite: one test per release criterion, each printing a PASS
//! line with its measured numbers (run with `--nocapture` to see them).

use std::time::Instant;

use hetnet_core::cro::{
    check_kkt, penalized_lagrangian, penalized_lagrangian_grad, solve_cro_barrier,
    solve_cro_reference, BarrierOpts, CroInstance, CroUser,
};
use hetnet_core::harness::{
    emit_plot_data, run_comparison, sweep_load, Algorithm, EmitOpts, HarnessOpts,
};
use hetnet_core::jur::{solve_jur_bnb, solve_jur_exhaustive, JurError, JurOpts};
use hetnet_core::lhm::build_training_data;
use hetnet_core::pricing::build_bid_table;
use hetnet_core::scenario::{generate_scenario, FeatureVector, Scenario, ScenarioConfig, UserId};
use hetnet_core::seed::substream;
use hetnet_core::svm::{accuracy, kernel, train, LabeledSample, SvmModel, SvmParams, TrainingSet};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const MASTER_SEED: u64 = 0xC0FFEE;

fn training_model(cfg: &ScenarioConfig, n_scenarios: u64, users_each: usize) -> SvmModel {
    let base = substream(MASTER_SEED, "labels");
    let scenarios: Vec<Scenario> = (0..n_scenarios)
        .map(|i| {
            generate_scenario(
                &ScenarioConfig {
                    n_users: users_each,
                    ..cfg.clone()
                },
                base ^ i,
            )
            .unwrap()
        })
        .collect();
    let (data, skipped) = build_training_data(&scenarios, &JurOpts::default());
    assert_eq!(skipped, 0, "training scenarios must label cleanly");
    train(
        &data,
        &SvmParams {
            c: 1.0,
            kernel_gamma: 0.1,
            seed: substream(MASTER_SEED, "svm-shuffle"),
            ..Default::default()
        },
    )
    .unwrap()
}

/// Criterion 1: on 50 random scenarios with N in 4..=12 and K in 1..=3, the
/// branch-and-bound total cost equals the exhaustive oracle within 1e-9
/// relative, in under 60 s total.
#[test]
fn criterion_1_jur_oracle_equivalence() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(substream(MASTER_SEED, "criterion-1"));
    let mut worst_rel = 0.0f64;
    for case in 0..50u64 {
        let n = 4 + (rng.random::<u64>() % 9) as usize;
        let k = 1 + (rng.random::<u64>() % 3) as usize;
        let budget_frac = 0.5 + rng.random::<f64>();
        let mut cfg = ScenarioConfig::baseline().with_users(n).with_sbs_count(k);
        let scenario_seed = rng.random::<u64>();
        // provisional scenario to size the bandwidth budget off the uncoupled
        // demand, exercising both slack and binding regimes
        let probe = generate_scenario(&cfg, scenario_seed).unwrap();
        let all: Vec<UserId> = probe.users.iter().map(|u| u.id).collect();
        let mut free = CroInstance::from_scenario(&probe, &all);
        free.w_max = f64::INFINITY;
        let unpriced = solve_cro_reference(&free).unwrap().total_bandwidth();
        cfg.mbs_w_max = budget_frac * unpriced;
        cfg.sbs_w_max = cfg.mbs_w_max;
        let scenario = generate_scenario(&cfg, scenario_seed).unwrap();
        let bids = build_bid_table(&scenario);

        let exhaustive = solve_jur_exhaustive(&scenario, &bids);
        let bnb = solve_jur_bnb(&scenario, &bids, &JurOpts::default());
        match (exhaustive, bnb) {
            (Ok(ex), Ok(bb)) => {
                let rel = (ex.total_cost - bb.total_cost).abs() / ex.total_cost.max(1e-300);
                worst_rel = worst_rel.max(rel);
                assert!(
                    rel <= 1e-9,
                    "case {case} (n={n}, k={k}): exhaustive {} vs bnb {}",
                    ex.total_cost,
                    bb.total_cost
                );
                for (a, b) in ex.association.entries.iter().zip(&bb.association.entries) {
                    assert_eq!(
                        a.mbs_served, b.mbs_served,
                        "case {case}: association mismatch"
                    );
                }
            }
            (Err(JurError::Infeasible { .. }), Err(JurError::Infeasible { .. })) => {}
            (ex, bb) => panic!("case {case}: verdicts diverge: {ex:?} vs {bb:?}"),
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "criterion 1 took {elapsed:.1} s");
    println!(
        "[PASS] criterion 1: bnb == exhaustive on 50 scenarios (worst rel diff {worst_rel:.2e}, {elapsed:.1} s)"
    );
}

fn random_cro_instance(seed: u64, n: usize, budget_frac: f64) -> CroInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let users: Vec<CroUser> = (0..n)
        .map(|i| {
            let r_th = 1e6 + 9e6 * rng.random::<f64>();
            let delta_r = 0.01 + 0.09 * rng.random::<f64>();
            CroUser {
                user_id: UserId(i as u32),
                rate_req: r_th * (1.0 - delta_r),
                r_th,
                q: 10f64.powf(0.5 + 3.0 * rng.random::<f64>()),
            }
        })
        .collect();
    let mut inst = CroInstance {
        users,
        c_p: 3000.0,
        c_w: 1e-5,
        gamma: 1.0,
        p_max: 1.0,
        w_max: f64::INFINITY,
    };
    inst.w_max = budget_frac * solve_cro_reference(&inst).unwrap().total_bandwidth();
    inst
}

/// Criterion 2: on 30 random instances with the budget at 40-120% of the
/// uncoupled demand, the barrier solver matches the reference within 1e-4
/// relative, KKT residuals stay below 1e-5, and every reliability slack lies
/// in [0, 1e-6 * r_th]; under 30 s total.
#[test]
fn criterion_2_cro_correctness() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(substream(MASTER_SEED, "criterion-2"));
    let mut worst_cost = 0.0f64;
    let mut worst_kkt = 0.0f64;
    for case in 0..30u64 {
        let n = 2 + (rng.random::<u64>() % 14) as usize;
        let frac = 0.4 + 0.8 * rng.random::<f64>();
        let inst = random_cro_instance(rng.random::<u64>(), n, frac);
        let reference = solve_cro_reference(&inst).unwrap();
        let barrier = solve_cro_barrier(&inst, &BarrierOpts::default())
            .unwrap_or_else(|e| panic!("case {case}: barrier failed: {e}"));
        let rel = (barrier.solution.total_cost - reference.total_cost).abs() / reference.total_cost;
        worst_cost = worst_cost.max(rel);
        assert!(rel <= 1e-4, "case {case}: cost mismatch rel {rel}");
        for sol in [&reference, &barrier.solution] {
            let report = check_kkt(&inst, sol);
            worst_kkt = worst_kkt.max(report.worst());
            assert!(report.passes(1e-5), "case {case}: KKT residuals {report:?}");
            for (u, a) in inst.users.iter().zip(&sol.allocs) {
                let s = (1.0 + a.p * u.q).log2();
                let g = a.w * s - u.rate_req;
                assert!(
                    g >= 0.0 && g <= 1e-6 * u.r_th,
                    "case {case}: slack {g} outside [0, {}]",
                    1e-6 * u.r_th
                );
            }
        }
        for step in &barrier.trace {
            assert!(
                step.min_slack > 0.0,
                "case {case}: iterate left the interior"
            );
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "criterion 2 took {elapsed:.1} s");
    println!(
        "[PASS] criterion 2: barrier vs reference on 30 instances (worst cost rel {worst_cost:.2e}, worst KKT {worst_kkt:.2e}, {elapsed:.1} s)"
    );
}

/// Criterion 3: analytic partials of the penalized Lagrangian match central
/// finite differences within 1e-5 relative at 100 random interior points.
#[test]
fn criterion_3_gradient_audit() {
    let mut rng = ChaCha8Rng::seed_from_u64(substream(MASTER_SEED, "criterion-3"));
    let mut checked = 0usize;
    let mut worst = 0.0f64;
    while checked < 100 {
        let n = 1 + (rng.random::<u64>() % 8) as usize;
        let inst = random_cro_instance(rng.random::<u64>(), n, 2.0);
        // random strictly interior point with random multipliers
        let mut p = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        let mut lambda = Vec::with_capacity(n);
        for u in &inst.users {
            let s_max = (1.0 + inst.p_max * u.q).log2();
            let s = s_max * (0.3 + 0.6 * rng.random::<f64>());
            p.push((s.exp2() - 1.0) / u.q);
            w.push(u.rate_req / s * (1.05 + rng.random::<f64>()));
            lambda.push(0.1 + 10.0 * rng.random::<f64>());
        }
        let (dp, dw) = penalized_lagrangian_grad(&inst, &p, &w, &lambda);
        for i in 0..n {
            let hp = p[i].abs().max(1e-4) * 1e-6;
            let mut probe = p.clone();
            probe[i] = p[i] + hp;
            let up = penalized_lagrangian(&inst, &probe, &w, &lambda);
            probe[i] = p[i] - hp;
            let down = penalized_lagrangian(&inst, &probe, &w, &lambda);
            let fd = (up - down) / (2.0 * hp);
            let rel = (fd - dp[i]).abs() / dp[i].abs().max(1.0);
            worst = worst.max(rel);
            assert!(rel <= 1e-5, "point {checked}: dL/dp rel {rel}");

            let hw = w[i].abs() * 1e-6;
            let mut probe = w.clone();
            probe[i] = w[i] + hw;
            let up = penalized_lagrangian(&inst, &p, &probe, &lambda);
            probe[i] = w[i] - hw;
            let down = penalized_lagrangian(&inst, &p, &probe, &lambda);
            let fd = (up - down) / (2.0 * hw);
            let rel = (fd - dw[i]).abs() / dw[i].abs().max(1.0);
            worst = worst.max(rel);
            assert!(rel <= 1e-5, "point {checked}: dL/dw rel {rel}");
        }
        checked += n;
    }
    println!(
        "[PASS] criterion 3: {checked} interior points, analytic vs central differences (worst rel {worst:.2e})"
    );
}

/// Independent projected-gradient ascent on the SVM dual with Nesterov
/// momentum; the projection handles the box and the equality constraint.
fn pgd_dual_objective(x: &[[f64; 6]], y: &[f64], c: f64, gamma: f64, iters: usize) -> f64 {
    let n = x.len();
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            q[i * n + j] = y[i] * y[j] * kernel(&x[i], &x[j], gamma);
        }
    }
    let lipschitz = (0..n)
        .map(|i| (0..n).map(|j| q[i * n + j].abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let step = 1.0 / lipschitz;

    let project = |alpha: &mut [f64]| {
        // bisection on the shift t so that sum_i clip(alpha_i + t*y_i) * y_i = 0
        let residual = |t: f64| -> f64 {
            alpha
                .iter()
                .zip(y)
                .map(|(a, yi)| (a + t * yi).clamp(0.0, c) * yi)
                .sum()
        };
        let (mut lo, mut hi) = (-c * n as f64, c * n as f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if residual(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let t = 0.5 * (lo + hi);
        for (a, yi) in alpha.iter_mut().zip(y) {
            *a = (*a + t * yi).clamp(0.0, c);
        }
    };

    let objective = |alpha: &[f64]| -> f64 {
        let mut quad = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                row += q[i * n + j] * alpha[j];
            }
            quad += alpha[i] * row;
        }
        alpha.iter().sum::<f64>() - 0.5 * quad
    };

    let mut alpha = vec![0.0; n];
    project(&mut alpha);
    let mut momentum = alpha.clone();
    let mut t_k = 1.0f64;
    for _ in 0..iters {
        let mut grad = vec![0.0; n];
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                row += q[i * n + j] * momentum[j];
            }
            grad[i] = 1.0 - row;
        }
        let mut next: Vec<f64> = momentum
            .iter()
            .zip(&grad)
            .map(|(a, g)| a + step * g)
            .collect();
        project(&mut next);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_k * t_k).sqrt());
        momentum = next
            .iter()
            .zip(&alpha)
            .map(|(nx, ax)| nx + (t_k - 1.0) / t_next * (nx - ax))
            .collect();
        alpha = next;
        t_k = t_next;
    }
    objective(&alpha)
}

/// Criterion 4: dual feasibility within 1e-8, 100% training accuracy on a
/// separable 20-point set, and dual objective within 1e-4 of an independent
/// projected-gradient solver on a 200-point JUR-labeled set.
#[test]
fn criterion_4_svm_validity() {
    // separable 20-point toy set
    let mut toy = TrainingSet::default();
    for i in 0..10 {
        let t = i as f64;
        toy.rows.push(LabeledSample {
            features: FeatureVector::from_array([100.0 + t, 0.01, 2e6, 0.05, 0.05, 40.0]),
            mbs_served: true,
        });
        toy.rows.push(LabeledSample {
            features: FeatureVector::from_array([1600.0 + t, 0.01, 2e6, 0.05, 0.05, 2.0]),
            mbs_served: false,
        });
    }
    let toy_model = train(
        &toy,
        &SvmParams {
            c: 100.0,
            kernel_gamma: 0.5,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(
        accuracy(&toy_model, &toy.rows),
        1.0,
        "toy set must classify perfectly"
    );

    // 200-point JUR-labeled set from a seeded default scenario
    let cfg = ScenarioConfig::baseline().with_users(200);
    let scenario = generate_scenario(&cfg, substream(MASTER_SEED, "criterion-4")).unwrap();
    let (data, skipped) = build_training_data(&[scenario], &JurOpts::default());
    assert_eq!(skipped, 0);
    assert_eq!(data.len(), 200);
    let params = SvmParams {
        c: 1.0,
        kernel_gamma: 0.1,
        tol: 1e-5,
        max_passes: 3000,
        seed: substream(MASTER_SEED, "svm-shuffle"),
    };
    let model = train(&data, &params).unwrap();

    let eq = model.equality_residual().abs();
    assert!(eq <= 1e-8, "dual equality residual {eq}");
    for a in &model.alphas {
        assert!(
            a.abs() >= -1e-8 && a.abs() <= model.c + 1e-8,
            "dual box violated: {a}"
        );
    }

    let scaled: Vec<[f64; 6]> = data
        .rows
        .iter()
        .map(|r| model.scaling.apply(&r.features))
        .collect();
    let labels: Vec<f64> = data.rows.iter().map(|r| r.label()).collect();
    let smo_obj = model.dual_objective();
    let pgd_obj = pgd_dual_objective(&scaled, &labels, params.c, params.kernel_gamma, 60_000);
    let gap = (smo_obj - pgd_obj).abs() / pgd_obj.abs().max(1.0);
    assert!(
        gap <= 1e-4,
        "dual objective gap {gap} (smo {smo_obj}, pgd {pgd_obj})"
    );
    println!(
        "[PASS] criterion 4: dual feasible (eq {eq:.1e}); toy accuracy 100%; SMO {smo_obj:.6} vs PGD {pgd_obj:.6} (rel gap {gap:.2e})"
    );
}

/// Criterion 5: directional reproduction of the desk-scale comparison on the
/// default 300-user scenario.
#[test]
fn criterion_5_comparison_trends() {
    let started = Instant::now();
    let cfg = ScenarioConfig::baseline();
    let model = training_model(&cfg, 10, 120);
    let scenario = generate_scenario(&cfg, 1).unwrap();
    let opts = HarnessOpts {
        jur: JurOpts {
            node_budget: 20_000,
        },
        ..Default::default()
    };
    let result = run_comparison(&scenario, &model, &opts);

    let metric = |alg: Algorithm| {
        result
            .metrics
            .iter()
            .find(|m| m.algorithm == alg)
            .unwrap_or_else(|| panic!("{} row missing", alg.as_str()))
    };
    let dsm = metric(Algorithm::Dsm);
    let jur = metric(Algorithm::Jur);
    let lhm = metric(Algorithm::Lhm);
    for m in [dsm, jur, lhm] {
        assert!(
            m.error.is_none(),
            "{} failed: {:?}",
            m.algorithm.as_str(),
            m.error
        );
    }

    // (a) JUR offloads 60-90% of users
    let offload_frac = jur.offloaded_count as f64 / jur.n_users as f64;
    assert!(
        (0.6..=0.9).contains(&offload_frac),
        "(a) JUR offload fraction {offload_frac}"
    );
    // (b) LHM association agreement with JUR >= 90%
    let agreement = result
        .lhm_agreement
        .expect("agreement computed when JUR ran");
    assert!(agreement >= 0.9, "(b) LHM/JUR agreement {agreement}");
    // (c) LHM total cost within 10% of JUR
    let cost_rel = (lhm.total_cost - jur.total_cost).abs() / jur.total_cost;
    assert!(cost_rel <= 0.10, "(c) LHM cost off by {cost_rel}");
    // (d) JUR and LHM average costs at most 0.8x DSM's
    assert!(
        jur.avg_cost_per_user <= 0.8 * dsm.avg_cost_per_user,
        "(d) JUR avg {} vs DSM {}",
        jur.avg_cost_per_user,
        dsm.avg_cost_per_user
    );
    assert!(
        lhm.avg_cost_per_user <= 0.8 * dsm.avg_cost_per_user,
        "(d) LHM avg {} vs DSM {}",
        lhm.avg_cost_per_user,
        dsm.avg_cost_per_user
    );
    // (e) LHM solve time at most 0.2x JUR's
    assert!(
        lhm.running_time_s <= 0.2 * jur.running_time_s,
        "(e) LHM {}s vs JUR {}s",
        lhm.running_time_s,
        jur.running_time_s
    );
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed <= 600.0, "criterion 5 took {elapsed:.0} s");
    println!(
        "[PASS] criterion 5: offload {:.1}%, agreement {:.1}%, cost delta {:.2}%, JUR/DSM avg {:.3}, time ratio {:.4} ({elapsed:.0} s)",
        100.0 * offload_frac,
        100.0 * agreement,
        100.0 * cost_rel,
        jur.avg_cost_per_user / dsm.avg_cost_per_user,
        lhm.running_time_s / jur.running_time_s
    );
}

/// Criterion 6: in a load sweep where DSM saturates, its service rate is
/// non-increasing and drops below 100% after saturation, while JUR and LHM
/// hold full service across the grid.
#[test]
fn criterion_6_service_rate_sweep() {
    let cfg = ScenarioConfig::baseline();
    let model = training_model(&cfg, 10, 120);
    let grid: Vec<usize> = (300..=500).step_by(20).collect();
    let opts = HarnessOpts {
        jur: JurOpts { node_budget: 2_000 },
        ..Default::default()
    };
    let sweep = sweep_load(&cfg, &grid, &model, 7, &opts).unwrap();
    assert_eq!(sweep.rows.len(), 3 * grid.len());

    let series = |alg: Algorithm| -> Vec<f64> {
        sweep
            .rows
            .iter()
            .filter(|r| r.algorithm == alg)
            .map(|r| r.service_rate)
            .collect()
    };
    let dsm = series(Algorithm::Dsm);
    for pair in dsm.windows(2) {
        assert!(
            pair[1] <= pair[0] + 1e-12,
            "DSM service must be non-increasing: {dsm:?}"
        );
    }
    assert_eq!(dsm[0], 1.0, "DSM must start at full service");
    assert!(
        dsm.last().unwrap() < &1.0,
        "DSM must saturate within the grid"
    );
    for alg in [Algorithm::Jur, Algorithm::Lhm] {
        for (rate, n) in series(alg).iter().zip(&grid) {
            assert_eq!(*rate, 1.0, "{} dropped service at n={n}", alg.as_str());
        }
    }
    println!(
        "[PASS] criterion 6: DSM non-increasing {:.3} -> {:.3}; JUR/LHM hold 1.0 across {} loads",
        dsm[0],
        dsm.last().unwrap(),
        grid.len()
    );
}

/// One full pipeline pass: generate -> label -> train -> compare -> emit.
fn pipeline(out_dir: &std::path::Path, master: u64) -> Vec<(String, String)> {
    let cfg = ScenarioConfig::baseline().with_users(80);
    let scenario = generate_scenario(&cfg, substream(master, "scenario")).unwrap();
    hetnet_core::harness::atomic_write(
        &out_dir.join("scenario.json"),
        scenario.to_json().as_bytes(),
    )
    .unwrap();

    let label_base = substream(master, "labels");
    let label_scenarios: Vec<Scenario> = (0..3u64)
        .map(|i| {
            generate_scenario(
                &ScenarioConfig {
                    n_users: 40,
                    ..cfg.clone()
                },
                label_base ^ i,
            )
            .unwrap()
        })
        .collect();
    let (data, _) = build_training_data(&label_scenarios, &JurOpts::default());
    hetnet_core::harness::atomic_write(&out_dir.join("dataset.csv"), data.to_csv().as_bytes())
        .unwrap();
    let model = train(
        &data,
        &SvmParams {
            c: 1.0,
            kernel_gamma: 0.1,
            seed: substream(master, "svm-shuffle"),
            ..Default::default()
        },
    )
    .unwrap();
    hetnet_core::harness::atomic_write(&out_dir.join("model.json"), model.to_json().as_bytes())
        .unwrap();

    let opts = HarnessOpts {
        jur: JurOpts { node_budget: 2_000 },
        ..Default::default()
    };
    let comparison = run_comparison(&scenario, &model, &opts);
    let manifest = emit_plot_data(
        &comparison,
        None,
        out_dir,
        &EmitOpts {
            normalize_times: true,
        },
    )
    .unwrap();
    let mut hashes: Vec<(String, String)> = manifest
        .files
        .iter()
        .map(|f| (f.name.clone(), f.sha256.clone()))
        .collect();
    for extra in [
        "scenario.json",
        "dataset.csv",
        "model.json",
        "manifest.json",
    ] {
        let bytes = std::fs::read(out_dir.join(extra)).unwrap();
        hashes.push((extra.to_string(), hetnet_core::harness::sha256_hex(&bytes)));
    }
    hashes.sort();
    hashes
}

/// Criterion 7: two full pipeline runs under one master seed produce
/// byte-identical artifacts (timing columns normalized; wall clocks are the
/// only non-deterministic input).
#[test]
fn criterion_7_pipeline_determinism() {
    let base = std::env::temp_dir().join(format!("hetnet-acceptance-{}", std::process::id()));
    let dir_a = base.join("run-a");
    let dir_b = base.join("run-b");
    let a = pipeline(&dir_a, MASTER_SEED);
    let b = pipeline(&dir_b, MASTER_SEED);
    assert_eq!(a, b, "pipeline artifacts must hash identically");
    for (name, _) in &a {
        let bytes_a = std::fs::read(dir_a.join(name)).unwrap();
        let bytes_b = std::fs::read(dir_b.join(name)).unwrap();
        assert_eq!(bytes_a, bytes_b, "{name} differs between runs");
    }
    std::fs::remove_dir_all(&base).ok();
    println!(
        "[PASS] criterion 7: {} artifacts byte-identical across two runs",
        a.len()
    );
}

/// Criterion 8: scenario and model JSON survive parse-serialize untouched,
/// and a reloaded model predicts bit-identically on 1000 random vectors.
#[test]
fn criterion_8_serialization_round_trips() {
    let cfg = ScenarioConfig::baseline().with_users(50);
    let scenario = generate_scenario(&cfg, substream(MASTER_SEED, "criterion-8")).unwrap();
    let json = scenario.to_json();
    let back = Scenario::from_json(&json).unwrap();
    assert_eq!(scenario, back, "scenario value changed across round trip");
    assert_eq!(
        json,
        back.to_json(),
        "scenario JSON changed across round trip"
    );

    let model = training_model(&cfg, 3, 40);
    let mjson = model.to_json();
    let reloaded = SvmModel::from_json(&mjson).unwrap();
    assert_eq!(model, reloaded);
    assert_eq!(mjson, reloaded.to_json());

    let mut rng = ChaCha8Rng::seed_from_u64(substream(MASTER_SEED, "criterion-8-probes"));
    for _ in 0..1000 {
        let fv = FeatureVector::from_array([
            2000.0 * rng.random::<f64>(),
            0.02 * rng.random::<f64>(),
            1e7 * rng.random::<f64>(),
            0.1 * rng.random::<f64>(),
            0.1 * rng.random::<f64>(),
            1e6 * rng.random::<f64>(),
        ]);
        assert_eq!(
            model.decision_value(&fv).to_bits(),
            reloaded.decision_value(&fv).to_bits(),
            "reloaded model prediction drifted"
        );
    }
    println!(
        "[PASS] criterion 8: JSON round trips value-identical; 1000 predictions bit-identical"
    );
}
