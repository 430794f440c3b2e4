//! Acceptance suite.
//!
//! Criteria 4 and 5 (property checks and baseline calibration) run in the
//! default test pass. Criteria 1-3 reproduce the developmental-stage
//! experiments end to end and take hours of compute; they are `#[ignore]`
//! by default and resume from completed run directories, so a sweep
//! started through the CLI with the same seeds satisfies them without
//! retraining:
//!
//! ```text
//! bnnvi gen occlusion --out <DIR>/data && \
//! bnnvi sweep occlusion --data <DIR>/data --runs <DIR>/runs
//! BNNVI_ACCEPT_DIR=<DIR> cargo test --test acceptance -- --ignored
//! ```
//!
//! The default location is `target/acceptance` under the workspace root.

mod common;

use bnnvi::dataset::{
    build_numerosity_set, build_occlusion_set, build_support_set, build_train_test, subset, Task,
    TestSet, TrainSet,
};
use bnnvi::experiment::{
    fit_report_curve, sweep_numerosity, sweep_physics, train, SweepConfig, SweepReport,
    TrainConfig, PHYSICS_N_GRID,
};
use bnnvi::metrics::{per_condition_error, spearman};
use bnnvi::nn::{gradient_check, Matrix};
use bnnvi::rng::substream;
use bnnvi::scenes::{occlusion_visibility_oracle, OcclusionScene, Removal};
use bnnvi::vi::{
    checkpoint, kl_gaussian_std, kl_lognormal_gamma, kl_lognormal_invgamma, sample_preactivation,
    sample_weight_matrix, BnnModel, Head, HorseshoeLayer, LayerNodes, ModelNoise, Targets,
};
use rand::Rng;
use std::path::PathBuf;

// ---------------------------------------------------------------------
// Criterion 4: property suite (no training)
// ---------------------------------------------------------------------

#[test]
fn c4_closed_form_kls_match_quadrature() {
    let mut rng = substream(401, 0);
    for i in 0..100 {
        let mu = rng.gen_range(-2.0..2.0);
        let sigma = rng.gen_range(0.1..2.0);
        let a = rng.gen_range(0.3..3.0);
        let scale = rng.gen_range(0.1..8.0);

        let g_closed = kl_gaussian_std(mu, sigma * sigma).unwrap();
        let g_quad = common::kl_gaussian_quad(mu, sigma * sigma);
        assert!(
            (g_closed - g_quad).abs() < 1e-6,
            "set {i}: gaussian {g_closed} vs {g_quad}"
        );

        let lg_closed = kl_lognormal_gamma(mu, sigma, a, scale).unwrap();
        let lg_quad = common::kl_lognormal_gamma_quad(mu, sigma, a, scale);
        assert!(
            (lg_closed - lg_quad).abs() < 1e-6,
            "set {i}: lognormal-gamma {lg_closed} vs {lg_quad}"
        );

        let li_closed = kl_lognormal_invgamma(mu, sigma, a, scale).unwrap();
        let li_quad = common::kl_lognormal_invgamma_quad(mu, sigma, a, scale);
        assert!(
            (li_closed - li_quad).abs() < 1e-6,
            "set {i}: lognormal-invgamma {li_closed} vs {li_quad}"
        );
    }
    println!("ACCEPTANCE 4a (KL closed forms vs quadrature, 100 sets, 1e-6): PASS");
}

fn elbo_gradient_deviation(head: Head, labels: Targets) -> f64 {
    let mut rng = substream(402, head.output_dim() as u64);
    let model = BnnModel::init(6, 5, 2, head, 1e-5, &mut rng);
    let x = Matrix::randn(4, 6, 0.0, 1.0, &mut rng);
    let noise = ModelNoise::sample(&model, 4, &mut rng);
    let params: Vec<Matrix> = model
        .param_layers()
        .iter()
        .flat_map(|ps| ps.iter().map(|p| (*p).clone()))
        .collect();
    gradient_check(
        |tape, ids| {
            let nodes: Vec<LayerNodes> = ids.chunks(10).map(LayerNodes::from_ids).collect();
            model.neg_elbo_graph(tape, &nodes, &x, &labels, 12, &noise)
        },
        &params,
        1e-5,
    )
    .unwrap()
}

#[test]
fn c4_full_model_elbo_gradients_match_finite_differences() {
    let y_bin = [0u8, 1, 1, 0];
    let dev = elbo_gradient_deviation(Head::BernoulliLogit, Targets::Binary(&y_bin));
    assert!(dev < 1e-4, "bernoulli head deviation {dev}");

    let y_cnt = [1u8, 5, 10, 3];
    let dev = elbo_gradient_deviation(Head::Categorical { classes: 10 }, Targets::Counts(&y_cnt));
    assert!(dev < 1e-4, "categorical head deviation {dev}");
    println!("ACCEPTANCE 4b (ELBO gradients vs finite differences, 1e-4): PASS");
}

#[test]
fn c4_local_reparam_moments_match_weight_sampling() {
    let mut rng = substream(403, 0);
    let mut layer = HorseshoeLayer::init(4, 3, 0.5, &mut rng);
    // moderate posterior scales keep the log-normal tails tame
    let lv = (0.04f64).ln();
    for p in [&mut layer.unit_alpha, &mut layer.unit_beta] {
        p.loc = Matrix::randn(1, 4, 0.0, 0.2, &mut rng);
        p.log_var = Matrix::filled(1, 4, lv);
    }
    for p in [&mut layer.global_alpha, &mut layer.global_beta] {
        p.loc = Matrix::randn(1, 1, 0.0, 0.2, &mut rng);
        p.log_var = Matrix::filled(1, 1, lv);
    }
    layer.weights.log_var = Matrix::filled(4, 3, (0.09f64).ln());

    let x = Matrix::from_vec(1, 4, vec![0.8, -1.2, 0.5, 1.0]);

    // analytic moments
    let zmom = |a: &bnnvi::vi::LogNormalPosterior, b: &bnnvi::vi::LogNormalPosterior, i: usize| {
        let loc = 0.5 * (a.loc.data()[i] + b.loc.data()[i]);
        let var = 0.25 * (a.log_var.data()[i].exp() + b.log_var.data()[i].exp());
        ((loc + 0.5 * var).exp(), (2.0 * loc + 2.0 * var).exp())
    };
    let (es, es2) = zmom(&layer.global_alpha, &layer.global_beta, 0);
    let mut analytic_mean = [0.0f64; 3];
    let mut analytic_var = [0.0f64; 3];
    for k in 0..3 {
        let mut mean_sum = 0.0;
        let mut diag = 0.0;
        let mut diag_mean_sq = 0.0;
        for d in 0..4 {
            let (ez, ez2) = zmom(&layer.unit_alpha, &layer.unit_beta, d);
            let mu = layer.weights.mean.at(d, k);
            let var_w = layer.weights.log_var.at(d, k).exp();
            let xd = x.at(0, d);
            mean_sum += xd * ez * mu;
            diag += xd * xd * ez2 * (mu * mu + var_w);
            diag_mean_sq += xd * xd * ez * ez * mu * mu;
        }
        analytic_mean[k] = es * mean_sum;
        analytic_var[k] = es2 * (diag + mean_sum * mean_sum - diag_mean_sq)
            - (es * mean_sum) * (es * mean_sum);
    }

    const DRAWS: usize = 100_000;
    let mut local = vec![common::Moments::default(); 3];
    let mut weight = vec![common::Moments::default(); 3];
    let mut rng_a = substream(404, 0);
    let mut rng_b = substream(404, 1);
    for _ in 0..DRAWS {
        let out = sample_preactivation(&x, &layer, &mut rng_a).unwrap();
        for k in 0..3 {
            local[k].push(out.at(0, k));
        }
        let w = sample_weight_matrix(&layer, &mut rng_b);
        let out = x.matmul(&w);
        for k in 0..3 {
            weight[k].push(out.at(0, k));
        }
    }

    for k in 0..3 {
        for (name, m) in [("local", &local[k]), ("weight", &weight[k])] {
            let dm = (m.mean() - analytic_mean[k]).abs();
            assert!(
                dm <= 4.0 * m.se_mean(),
                "{name} mean[{k}]: {} vs {} (4se = {})",
                m.mean(),
                analytic_mean[k],
                4.0 * m.se_mean()
            );
            let dv = (m.var() - analytic_var[k]).abs();
            assert!(
                dv <= 4.0 * m.se_var(),
                "{name} var[{k}]: {} vs {} (4se = {})",
                m.var(),
                analytic_var[k],
                4.0 * m.se_var()
            );
        }
        // cross-route agreement
        let dm = (local[k].mean() - weight[k].mean()).abs();
        let se = (local[k].se_mean().powi(2) + weight[k].se_mean().powi(2)).sqrt();
        assert!(dm <= 4.0 * se, "route means differ at column {k}");
        let dv = (local[k].var() - weight[k].var()).abs();
        let se = (local[k].se_var().powi(2) + weight[k].se_var().powi(2)).sqrt();
        assert!(dv <= 4.0 * se, "route variances differ at column {k}");
    }
    println!("ACCEPTANCE 4c (local reparameterization vs weight sampling, 4 sigma at 1e5): PASS");
}

#[test]
fn c4_stability_oracle_matches_pixel_mass_on_10k_scenes() {
    use bnnvi::scenes::{gen_support, SupportCondition, IMG};
    let mut rng = substream(405, 0);
    let mut checked = 0usize;
    for cond in SupportCondition::ALL {
        for _ in 0..2500 {
            let (scene, stable) = gen_support(cond, None, &mut rng).unwrap();
            let img = scene.render();
            let mut box_px = Vec::new();
            let mut plat = Vec::new();
            for r in 0..IMG {
                for c in 0..IMG {
                    if img.at(1, r, c) == 1 {
                        box_px.push((r, c));
                    }
                    if img.at(2, r, c) == 1 {
                        plat.push((r, c));
                    }
                }
            }
            let supported = box_px.iter().any(|&(r, c)| plat.contains(&(r + 1, c)));
            let brute = if supported {
                let cx: f64 = box_px.iter().map(|&(_, c)| c as f64 + 0.5).sum::<f64>()
                    / box_px.len() as f64;
                let lo = plat.iter().map(|&(_, c)| c).min().unwrap() as f64;
                let hi = plat.iter().map(|&(_, c)| c).max().unwrap() as f64 + 1.0;
                cx >= lo && cx <= hi
            } else {
                false
            };
            assert_eq!(stable, brute, "{scene:?}");
            checked += 1;
        }
    }
    assert_eq!(checked, 10_000);
    println!("ACCEPTANCE 4d (stability oracle vs pixel-mass brute force, 1e4 scenes): PASS");
}

#[test]
fn c4_visibility_oracle_exhaustive_height_grid() {
    for cyl_h in 2..=10usize {
        for conn_h in 1..=13usize {
            let scene = OcclusionScene {
                floor_row: 20,
                screen_x: 10,
                screen_w: 8,
                screen_h: 14,
                removal: Removal::Top {
                    connection_h: conn_h,
                },
                cyl_x: 0,
                cyl_w: 3,
                cyl_h,
            };
            assert_eq!(occlusion_visibility_oracle(&scene), cyl_h > conn_h);
            assert!(!occlusion_visibility_oracle(&OcclusionScene {
                removal: Removal::None,
                ..scene
            }));
            assert!(occlusion_visibility_oracle(&OcclusionScene {
                removal: Removal::MiddleAll,
                ..scene
            }));
            assert!(occlusion_visibility_oracle(&OcclusionScene {
                removal: Removal::Bottom { gap_h: conn_h },
                ..scene
            }));
        }
    }
    println!("ACCEPTANCE 4e (visibility oracle exhaustive over height pairs): PASS");
}

#[test]
fn c4_dataset_compositions_and_balances_exact() {
    let occ = build_occlusion_set(0).unwrap();
    assert_eq!(occ.n(), 10_000);
    assert_eq!(occ.composition["baseline"], 4000);
    for cond in ["middle", "bottom", "top"] {
        assert_eq!(occ.composition[cond], 2000);
    }
    assert_eq!(occ.label_histogram()["y=0"], 5000);
    assert_eq!(occ.label_histogram()["y=1"], 5000);

    let sup = build_support_set(0).unwrap();
    let mut per_cond = [[0u64; 2]; 4];
    for i in 0..sup.n() {
        per_cond[sup.tag(i) as usize][sup.label(i) as usize] += 1;
    }
    assert_eq!(per_cond, [[1250, 1250]; 4]);

    let num = build_numerosity_set(0).unwrap();
    assert_eq!(num.n(), 54_000);
    let mut larger_first = std::collections::BTreeMap::new();
    for i in 0..num.n() {
        let (a, b) = num.counts(i);
        if a > b {
            *larger_first.entry(num.tag(i)).or_insert(0u64) += 1;
        }
    }
    for smaller in 1..=9u8 {
        assert_eq!(num.composition[&format!("{}:{}", smaller + 1, smaller)], 6000);
        assert_eq!(larger_first[&smaller], 3000);
    }

    // stratified subsets stay balanced within one sample
    for n in PHYSICS_N_GRID {
        let sub = subset(&occ, n, 1).unwrap();
        let hist = sub.label_histogram();
        let y0 = hist["y=0"] as i64;
        let y1 = hist["y=1"] as i64;
        assert!((y0 - y1).abs() <= 1, "N = {n}");
    }
    println!("ACCEPTANCE 4f (compositions and label balances exact): PASS");
}

#[test]
fn c4_save_load_round_trips_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let ds = build_support_set(3).unwrap();
    let p1 = dir.path().join("a.bnnds");
    let p2 = dir.path().join("b.bnnds");
    bnnvi::dataset::save(&ds, &p1).unwrap();
    let back = bnnvi::dataset::load(&p1).unwrap();
    assert_eq!(ds, back);
    bnnvi::dataset::save(&back, &p2).unwrap();
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());

    let mut rng = substream(406, 0);
    let model = BnnModel::init(12, 8, 2, Head::BernoulliLogit, 1e-5, &mut rng);
    let bytes = checkpoint::to_bytes(&model).unwrap();
    let back = checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(model, back);
    assert_eq!(checkpoint::to_bytes(&back).unwrap(), bytes);
    println!("ACCEPTANCE 4g (save/load round trips bit-identical): PASS");
}

#[test]
fn c4_same_seed_generation_and_training_bit_deterministic() {
    let (tr1, te1) = build_train_test(Task::Occlusion, 17).unwrap();
    let (tr2, te2) = build_train_test(Task::Occlusion, 17).unwrap();
    assert_eq!(tr1.0, tr2.0);
    assert_eq!(te1.0, te2.0);

    let cfg = TrainConfig {
        hidden: 16,
        max_epochs: 3,
        ..TrainConfig::physics(9)
    };
    let (m1, _) = train(&tr1, 64, &cfg, None).unwrap();
    let (m2, _) = train(&tr2, 64, &cfg, None).unwrap();
    assert_eq!(
        checkpoint::to_bytes(&m1).unwrap(),
        checkpoint::to_bytes(&m2).unwrap()
    );
    println!("ACCEPTANCE 4h (same-seed generation and training bit-deterministic): PASS");
}

// ---------------------------------------------------------------------
// Criterion 5: baseline calibration
// ---------------------------------------------------------------------

#[test]
fn c5_untrained_models_sit_at_chance_on_balanced_conditions() {
    // balanced conditions: all four support conditions (2500 each) and
    // the top-removed occlusion condition (2000); the other occlusion
    // conditions are single-label by construction
    let mut rng = substream(500, 0);
    for (task, balanced) in [
        (Task::Occlusion, vec!["top"]),
        (
            Task::Support,
            vec![
                "contact_vs_off",
                "contact_type",
                "contact_amount",
                "shape_proportion",
            ],
        ),
    ] {
        let (_, test) = build_train_test(task, 0).unwrap();
        let model = BnnModel::init(
            test.0.input_dim(),
            256,
            2,
            Head::BernoulliLogit,
            1e-5,
            &mut rng,
        );
        let mut eval_rng = substream(501, 0);
        let errors = per_condition_error(&model, &test, 100, &mut eval_rng).unwrap();
        for cond in balanced {
            let e = errors[cond];
            assert!(
                (0.47..=0.53).contains(&e),
                "{} {cond}: untrained error {e}",
                task.name()
            );
        }
    }
    println!("ACCEPTANCE 5 (untrained models at 50% +- 3% on balanced conditions): PASS");
}

// ---------------------------------------------------------------------
// Criteria 1-3: full experimental reproduction (hours; resume-aware)
// ---------------------------------------------------------------------

fn acceptance_root() -> PathBuf {
    std::env::var("BNNVI_ACCEPT_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|_| {
            PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../target/acceptance")
        })
}

fn load_or_generate(task: Task) -> (TrainSet, TestSet) {
    let data_dir = acceptance_root().join("data");
    std::fs::create_dir_all(&data_dir).unwrap();
    let train_path = data_dir.join(format!("{}_train.bnnds", task.name()));
    let test_path = data_dir.join(format!("{}_test.bnnds", task.name()));
    if train_path.exists() && test_path.exists() {
        (
            TrainSet(bnnvi::dataset::load(&train_path).unwrap()),
            TestSet(bnnvi::dataset::load(&test_path).unwrap()),
        )
    } else {
        let (train, test) = build_train_test(task, 0).unwrap();
        bnnvi::dataset::save(&train.0, &train_path).unwrap();
        bnnvi::dataset::save(&test.0, &test_path).unwrap();
        (train, test)
    }
}

/// Smallest N in the grid whose seed-averaged error drops below the
/// threshold.
fn n_star(report: &SweepReport, condition: &str, threshold: f64) -> Option<usize> {
    PHYSICS_N_GRID
        .iter()
        .copied()
        .find(|&n| report.mean_condition_error(n, condition).unwrap_or(1.0) < threshold)
}

#[test]
#[ignore = "trains the full 6x10 occlusion sweep (hours); resumes from target/acceptance"]
fn c1_occlusion_acquisition_order() {
    let (train_set, test_set) = load_or_generate(Task::Occlusion);
    let report = sweep_physics(
        &train_set,
        &test_set,
        &SweepConfig::physics(),
        &TrainConfig::physics(0),
        &acceptance_root().join("runs"),
    )
    .unwrap();
    assert!(report.failures.is_empty(), "{:?}", report.failures);

    let middle = n_star(&report, "middle", 0.10);
    let bottom = n_star(&report, "bottom", 0.10);
    let top = n_star(&report, "top", 0.10);
    println!("N* middle = {middle:?}, bottom = {bottom:?}, top = {top:?}");
    let (middle, bottom, top) = (
        middle.expect("middle never below 10%"),
        bottom.expect("bottom never below 10%"),
        top.expect("top never below 10%"),
    );
    assert!(middle <= bottom && bottom <= top, "acquisition order broken");
    let e_mid = report.mean_condition_error(1024, "middle").unwrap();
    assert!(e_mid < 0.10, "middle at N=1024: {e_mid}");
    let e_top = report.mean_condition_error(8192, "top").unwrap();
    assert!(e_top < 0.10, "top at N=8192: {e_top}");
    println!("ACCEPTANCE 1 (occlusion acquisition order middle->bottom->top): PASS");
}

#[test]
#[ignore = "trains the full 6x10 support sweep (hours); resumes from target/acceptance"]
fn c2_support_acquisition_order() {
    let (train_set, test_set) = load_or_generate(Task::Support);
    let report = sweep_physics(
        &train_set,
        &test_set,
        &SweepConfig::physics(),
        &TrainConfig::physics(0),
        &acceptance_root().join("runs"),
    )
    .unwrap();
    assert!(report.failures.is_empty(), "{:?}", report.failures);

    let easy = [
        n_star(&report, "contact_vs_off", 0.10),
        n_star(&report, "contact_type", 0.10),
    ];
    let hard = [
        n_star(&report, "contact_amount", 0.10),
        n_star(&report, "shape_proportion", 0.10),
    ];
    println!("N* easy = {easy:?}, hard = {hard:?}");
    let easy_max = easy.iter().map(|n| n.expect("easy condition stuck")).max().unwrap();
    let hard_min = hard.iter().map(|n| n.expect("hard condition stuck")).min().unwrap();
    assert!(easy_max <= hard_min, "contact conditions must come first");

    for cond in [
        "contact_vs_off",
        "contact_type",
        "contact_amount",
        "shape_proportion",
    ] {
        let e = report.mean_condition_error(8192, cond).unwrap();
        assert!(e < 0.10, "{cond} at N=8192: {e}");
    }
    for cond in ["contact_amount", "shape_proportion"] {
        let e = report.mean_condition_error(4096, cond).unwrap();
        assert!(e < 0.15, "{cond} at N=4096: {e}");
    }

    // soft check: L-shapes lag plain boxes at N=2048 in most seeds
    let mut lagging = 0;
    let mut seeds = 0;
    for seed in 0..10u64 {
        if let Some(cell) = report.cell(2048, seed) {
            let errs = cell.condition_errors.as_ref().unwrap();
            seeds += 1;
            if errs["shape_proportion"] >= errs["contact_amount"] {
                lagging += 1;
            }
        }
    }
    assert!(
        lagging >= 6,
        "shape_proportion lagged contact_amount in only {lagging}/{seeds} seeds"
    );
    println!("ACCEPTANCE 2 (support acquisition order, center-of-mass last): PASS");
}

#[test]
#[ignore = "trains the 12-model numerosity sweep (hours); resumes from target/acceptance"]
fn c3_numerosity_weber_fechner_trend() {
    let (train_set, test_set) = load_or_generate(Task::Numerosity);
    let report = sweep_numerosity(
        &train_set,
        &test_set,
        &SweepConfig::numerosity(),
        &TrainConfig::numerosity(0),
        &acceptance_root().join("runs"),
    )
    .unwrap();
    assert!(report.failures.is_empty(), "{:?}", report.failures);
    assert_eq!(report.cells.len(), 12);

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut flagged = Vec::new();
    for cell in &report.cells {
        match cell.weber.as_ref().and_then(|w| w.value) {
            Some(v) => {
                xs.push(cell.n as f64);
                ys.push(v);
            }
            None => flagged.push(cell.n),
        }
    }
    assert!(flagged.is_empty(), "Weber undefined at N = {flagged:?}");

    let rho = spearman(&xs, &ys);
    println!("spearman(N, weber) = {rho:.3}");
    assert!(rho <= -0.7, "Weber trend too weak: spearman {rho}");

    let fit = fit_report_curve(&report).unwrap();
    println!(
        "exponential fit: A = {:.4}, b = {:.3e}, d = {:.4}, R^2 = {:.4}",
        fit.amplitude, fit.rate, fit.asymptote, fit.r_squared
    );
    assert!(fit.r_squared >= 0.8, "R^2 = {}", fit.r_squared);

    let best = ys.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(best > 1.0 && best <= 1.5, "best Weber estimate {best}");
    println!("ACCEPTANCE 3 (Weber-Fechner trend over N): PASS");
}
