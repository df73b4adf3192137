//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits nonzero if any fails.

use std::fs;
use std::process::Command;
use std::time::Instant;

use num_complex::Complex64;

use prebeam::air::{build_pilot_matrix, dl_pilot_rx, ul_feedback_rx, LmmseEstimator, NoiseMode, PilotConfig};
use prebeam::channel::{sample_channels, sample_scenario, ArrayGeometry, DEFAULT_POWER_RANGE};
use prebeam::evaluation::{
    EstimatorMode, LinkConfig, PairedComparison, PolicyEstimate, PreparedPipeline, Z_95, Z_99,
};
use prebeam::experiments::{self, ExperimentConfig, SweepReport};
use prebeam::numerics::{dft_matrix, ComplexMatrix, ComplexVector, RngStream};
use prebeam::precoding::{pre_beamformer, BeamSelection};
use prebeam::selector::save_checkpoint;

/// Average heat-map row mean the sparse-scattering oracle must reach. Fixed
/// from a separate oracle statistics run (seed 1001, 200 scenarios, L=2,
/// B_bits=12): mean row mean 0.719, row-mean std 0.129; threshold is that
/// mean minus three standard errors of a 50-row average.
const SPARSE_ROW_MEAN_THRESHOLD: f64 = 0.66;

fn desk(paths: usize, b_bits: &[f64], seed: u64, policies: &[&str], n_test: usize) -> ExperimentConfig {
    let bits: Vec<String> = b_bits.iter().map(|b| format!("{b:.1}")).collect();
    let pols: Vec<String> = policies.iter().map(|p| format!("\"{p}\"")).collect();
    let text = format!(
        "[system]\nantennas = 16\nusers = 3\nbeta = 4\np_dl = 20.0\npaths = {paths}\nb_bits = [{}]\nseed = {seed}\n\
         [eval]\nn_test_cov = {n_test}\nn_channels_per_cov = 10\npolicies = [{}]\n",
        bits.join(", "),
        pols.join(", ")
    );
    ExperimentConfig::from_str(&text).unwrap()
}

fn estimate<'a>(report: &'a SweepReport, policy: &str, b_bits: f64) -> &'a PolicyEstimate {
    &report
        .rows
        .iter()
        .find(|r| r.policy == policy && r.b_bits == b_bits)
        .unwrap_or_else(|| panic!("no row for {policy} at B={b_bits}"))
        .estimate
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn algebraic_invariants() -> Outcome {
    let mut worst = Vec::new();
    let mut pass = true;
    for (paths, seed) in [(8, 1), (2, 2)] {
        let cfg = desk(paths, &[1.0, 12.0], seed, &["lambda-one"], 1);
        for c in experiments::run_invariant_suite(&cfg, 100).unwrap() {
            pass &= c.passed();
            worst.push(format!("L={paths} {}={:.1e}", c.name, c.worst));
        }
    }
    outcome(pass, worst.join(" "))
}

fn lmmse_fixed_rho() -> Outcome {
    let (m, beta, rho, p_dl) = (4, 2, 2.0, 20.0);
    let geom = ArrayGeometry::standard(m);
    let mut rng = RngStream::new(2, 0);
    let scn = sample_scenario(3, 1, &geom, DEFAULT_POWER_RANGE, &mut rng).unwrap();
    let b = pre_beamformer(&BeamSelection::new(vec![0.9, 0.3, 1.0, 0.6]).unwrap(), &dft_matrix(m).unwrap()).unwrap();
    let x_p = build_pilot_matrix(&PilotConfig::generate(beta, m, p_dl, 5).unwrap(), &b).unwrap();
    let est = LmmseEstimator::new(rho, &x_p, &b, scn.covariance(0)).unwrap();
    let predicted = est.error_cov.trace().re;
    let prior = (&b * scn.covariance(0) * b.adjoint()).trace().re;

    let n = 1_000_000;
    let mut sq_err = 0.0;
    let mut sq_y = 0.0;
    let mut cross = ComplexMatrix::zeros(m, beta);
    for _ in 0..n {
        let ch = sample_channels(&scn, &mut rng);
        let y_p: ComplexVector = dl_pilot_rx(&x_p, &ch, NoiseMode::On, &mut rng).column(0).into_owned();
        let y = ul_feedback_rx(&(y_p * Complex64::new(rho.sqrt(), 0.0)), NoiseMode::On, &mut rng);
        let g: ComplexVector = &b * ch.h.column(0);
        let e = g - est.estimate(&y);
        sq_err += e.norm_squared();
        sq_y += y.norm_squared();
        cross += &e * y.adjoint();
    }
    let mse = sq_err / n as f64;
    let rel = (mse - predicted).abs() / predicted;
    let orth = (cross / Complex64::new(n as f64, 0.0)).norm() / (mse * sq_y / n as f64).sqrt();
    outcome(
        rel <= 0.02 && orth <= 0.01 && mse <= prior,
        format!("MSE {mse:.5} vs trace(err_cov) {predicted:.5} (rel {rel:.4}), orthogonality {orth:.2e}, prior {prior:.4}"),
    )
}

fn genie_zf_nulling() -> Outcome {
    let geom = ArrayGeometry::standard(16);
    let p_dl = 20.0;
    let link = LinkConfig::from_bits(16, 4, p_dl, 12.0, 3).unwrap().with_estimator(EstimatorMode::Genie);
    let ones = BeamSelection::ones(16);
    let mut rng = RngStream::new(3, 0);
    let mut worst = 0.0f64;
    for e in 0..100u64 {
        let scn = sample_scenario(8, 3, &geom, DEFAULT_POWER_RANGE, &mut rng).unwrap();
        let ep = PreparedPipeline::new(&scn, &ones, &link).unwrap().run(&RngStream::new(3, 1).derive(e)).unwrap();
        assert!(!ep.degenerate_precoder);
        worst = ep.report.interference_powers.iter().fold(worst, |w, &i| w.max(i));
    }
    outcome(worst <= 1e-16 * p_dl, format!("worst interference {worst:.2e} (bound {:.1e})", 1e-16 * p_dl))
}

fn main() {
    let started = Instant::now();
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut record = |name: &'static str, o: Outcome| {
        println!("[{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((name, o));
    };

    record("1 algebraic invariants", algebraic_invariants());
    record("2 LMMSE fixed-rho equivalence", lmmse_fixed_rho());
    record("3 perfect-CSI ZF nulling", genie_zf_nulling());

    let all = ["lambda-one", "per-instance-oracle", "zf-perfect", "mrt"];
    let rich = experiments::run_sweep(&desk(8, &[1.0, 12.0], 41, &all, 200)).unwrap();
    let sparse = experiments::run_sweep(&desk(2, &[12.0], 42, &all, 200)).unwrap();

    {
        let mut pass = true;
        let mut parts = Vec::new();
        for b in [1.0, 12.0] {
            let c = PairedComparison::new(estimate(&rich, "per-instance-oracle", b), estimate(&rich, "lambda-one", b));
            pass &= c.lower_bound(Z_95) > 0.0 && c.n_scenarios >= 200;
            parts.push(format!(
                "B={b}: oracle {:.3} vs lambda-one {:.3}, diff {:.3} (95% lower {:.3})",
                estimate(&rich, "per-instance-oracle", b).mean,
                estimate(&rich, "lambda-one", b).mean,
                c.mean_diff,
                c.lower_bound(Z_95)
            ));
        }
        record("4 rich-scattering gain", outcome(pass, parts.join("; ")));
    }

    {
        let one = estimate(&sparse, "lambda-one", 12.0);
        let c = PairedComparison::new(estimate(&sparse, "per-instance-oracle", 12.0), one);
        let upper = (c.mean_diff + Z_95 * c.std_error) / one.mean;
        let heat_cfg = desk(2, &[12.0], 43, &["lambda-one"], 1);
        let rows = experiments::dump_lambda_heatmap(&heat_cfg, 50).unwrap();
        let avg_row_mean = rows.iter().map(|r| r.iter().sum::<f64>() / r.len() as f64).sum::<f64>() / rows.len() as f64;
        record(
            "5 sparse-scattering near-equivalence",
            outcome(
                upper <= 0.05 && avg_row_mean >= SPARSE_ROW_MEAN_THRESHOLD,
                format!(
                    "relative gain {:.4} (95% upper {upper:.4}, limit 0.05); heat-map mean row mean {avg_row_mean:.3} (threshold {SPARSE_ROW_MEAN_THRESHOLD})",
                    c.mean_diff / one.mean
                ),
            ),
        );
    }

    let dnn = train_and_test();
    record("6 DNN trainability", dnn.0);

    {
        let mut pass = true;
        let mut parts = Vec::new();
        let sets: [(&str, &SweepReport, &[f64]); 3] =
            [("rich", &rich, &[1.0, 12.0]), ("sparse", &sparse, &[12.0]), ("rich/dnn", &dnn.1, &[1.0])];
        for (name, rep, bits) in sets {
            for &b in bits {
                let zf = estimate(rep, "zf-perfect", b);
                for row in rep.rows.iter().filter(|r| r.b_bits == b && r.policy != "zf-perfect" && r.policy != "mrt") {
                    let c = PairedComparison::new(zf, &row.estimate);
                    pass &= c.lower_bound(Z_99) > 0.0;
                    parts.push(format!("{name} B={b} zf-perfect - {} lower99 {:.3}", row.policy, c.lower_bound(Z_99)));
                }
            }
        }
        let mrt = PairedComparison::new(estimate(&rich, "mrt", 1.0), estimate(&rich, "lambda-one", 1.0));
        parts.push(format!("recorded: rich B=1 mrt - lambda-one = {:.3} +- {:.3}", mrt.mean_diff, mrt.std_error));
        record("7 baseline envelope", outcome(pass, parts.join("; ")));
    }

    record("8 determinism across workers", cli_determinism());

    let failed = results.iter().filter(|(_, o)| !o.pass).count();
    println!("acceptance: {} of {} criteria passed in {:.0?}", results.len() - failed, results.len(), started.elapsed());
    if failed > 0 {
        std::process::exit(1);
    }
}

/// 500 SPSA-Adam iterations on the rich desk config at B_bits = 1, then a
/// paired comparison against lambda = 1 on 200 fresh test scenarios.
fn train_and_test() -> (Outcome, SweepReport) {
    let mut cfg = desk(8, &[1.0], 44, &["lambda-one"], 200);
    cfg.train.optimizer = "adam-spsa".into();
    cfg.train.n_iterations = 500;
    cfg.train.batch_size = 16;
    cfg.train.learning_rate = 5e-2;
    cfg.train.spsa_c = 0.1;
    cfg.train.spsa_samples = 64;
    cfg.train.hidden = [16, 16];
    cfg.train.n_channels = 2;
    cfg.train.eval_interval = 50;
    cfg.train.n_validation = 256;
    cfg.train.n_validation_channels = 8;
    let trained = experiments::run_training(&cfg).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("net.txt");
    save_checkpoint(&trained.params, &ckpt).unwrap();
    let dnn = format!("dnn:{}", ckpt.display());
    cfg.eval.policies = vec!["lambda-one".into(), dnn.clone(), "zf-perfect".into()];
    let report = experiments::run_sweep(&cfg).unwrap();

    let init = trained.curve[0].validation_sum_rate;
    let last = trained.curve.last().unwrap().validation_sum_rate;
    let c = PairedComparison::new(estimate(&report, &dnn, 1.0), estimate(&report, "lambda-one", 1.0));
    let monotone = trained.curve.windows(2).all(|w| w[1].best_so_far >= w[0].best_so_far);
    let pass = last > init && last >= trained.lambda_one_validation && monotone && c.lower_bound(Z_95) >= 0.0;
    let detail = format!(
        "validation {init:.3} -> {last:.3} (lambda-one {:.3}, best-so-far monotone {monotone}); test dnn - lambda-one = {:.3} (95% lower {:.3})",
        trained.lambda_one_validation,
        c.mean_diff,
        c.lower_bound(Z_95)
    );
    // keep the report but give the dnn row a path-independent name
    let mut report = report;
    for r in &mut report.rows {
        if r.policy == dnn {
            r.policy = "dnn".into();
        }
    }
    (outcome(pass, detail), report)
}

fn cli_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("exp.toml");
    fs::write(
        &cfg,
        "[system]\nantennas = 16\nusers = 3\nbeta = 4\np_dl = 20.0\npaths = 8\nb_bits = [1.0, 12.0]\nseed = 8\n\
         [eval]\nn_test_cov = 12\nn_channels_per_cov = 4\noracle_budget = 40\nheatmap_realizations = 6\n\
         policies = [\"lambda-one\", \"per-instance-oracle\", \"zf-perfect\", \"mrt\"]\n\
         [train]\nbatch_size = 4\nn_iterations = 6\neval_interval = 3\nhidden = [8, 8]\nn_validation = 4\n",
    )
    .unwrap();
    let files = ["sweep.csv", "sweep_scenarios.csv", "training_curve.csv", "checkpoint.txt", "heatmap.csv", "validate.csv"];
    let mut outputs = Vec::new();
    for workers in ["1", "4"] {
        let out = tmp.path().join(format!("w{workers}"));
        for cmd in ["sweep", "train", "heatmap", "validate"] {
            let status = Command::new(env!("CARGO_BIN_EXE_prebeam"))
                .args([cmd, "--config", cfg.to_str().unwrap(), "--output", out.to_str().unwrap(), "--workers", workers])
                .output()
                .unwrap()
                .status;
            if !status.success() {
                return outcome(false, format!("`{cmd}` failed with {status}"));
            }
        }
        outputs.push(files.map(|f| fs::read(out.join(f)).unwrap()));
    }
    let differing: Vec<&str> = files.iter().zip(outputs[0].iter().zip(&outputs[1])).filter(|(_, (a, b))| a != b).map(|(f, _)| *f).collect();
    outcome(differing.is_empty(), format!("1 vs 4 workers, {} files compared, differing: {differing:?}", files.len()))
}
