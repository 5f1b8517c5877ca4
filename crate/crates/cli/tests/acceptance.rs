//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
//!
//! Criteria 1-5 are property checks on the numerical kernels; 6-9 run the
//! harness end to end on the default configuration with pinned seeds.

use std::time::{Duration, Instant};

use fstta_cli::experiment::{cmd_forgetting, cmd_pretrain, cmd_run};
use fstta_cli::{ResultRow, RunConfig};
use fstta_core::fast::{concordant_gradient, concordant_gradient_with, dynamic_lr, Axis, FastConfig, FastPhaseState, GradientWindow};
use fstta_core::linalg::{self, center_rows, scatter_eigen, sym_eigen_dense, RowMatrix, DEFAULT_EIG_TOL};
use fstta_core::model::{entropy_loss, Architecture, PolicyParams, StepInput};
use fstta_core::slow::{reference_direction, slow_gradient, slow_step, SlowConfig, Trajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EIG_VALUE_TOL: f64 = 1e-8;
const SUBSPACE_ANGLE_TOL: f64 = 1e-6;
const CALIBRATION_TOL: f64 = 1e-9;
const D1_TOL: f64 = 1e-12;
const FD_STEP: f64 = 1e-6;
const FD_REL_TOL: f64 = 1e-5;
const KERNEL_BUDGET: Duration = Duration::from_secs(10);
const EXPERIMENT_BUDGET: Duration = Duration::from_secs(300);
const ORDERING_MARGIN: f64 = 2.0;
const TIE: f64 = 0.5;
const FORGETTING_BAND: f64 = 3.0;
const SEEN_ADAPT_SLACK: f64 = 1.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn gaussian_rows(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..rows).map(|_| (0..cols).map(|_| scale * rng.gen_range(-1.0..1.0)).collect()).collect()
}

/// Sine of the angle between `u` and the span of `basis`.
fn distance_to_span(u: &[f64], basis: &[&Vec<f64>]) -> f64 {
    let mut r = u.to_vec();
    for v in basis {
        let p = linalg::dot(&r, v);
        linalg::axpy(-p, v, &mut r);
    }
    linalg::norm(&r)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut worst_val, mut worst_angle) = (0.0_f64, 0.0_f64);
    for _ in 0..1000 {
        let r = rng.gen_range(2..=8);
        let c = rng.gen_range(1..=16);
        let scale = 10f64.powf(rng.gen_range(-2.0..2.0));
        let x = RowMatrix::from_rows(&gaussian_rows(&mut rng, r, c, scale)).unwrap();
        let (_, xc) = center_rows(&x).unwrap();
        let gram = scatter_eigen(&xc, r - 1, DEFAULT_EIG_TOL).unwrap();
        let mut s = RowMatrix::zeros(c, c);
        let mut data = s.data().to_vec();
        for row in xc.iter_rows() {
            for i in 0..c {
                for j in 0..c {
                    data[i * c + j] += row[i] * row[j] / (r - 1) as f64;
                }
            }
        }
        s = RowMatrix::new(c, c, data).unwrap();
        let dense = sym_eigen_dense(&s).unwrap();
        let top = dense.values[0].abs().max(f64::MIN_POSITIVE);
        for (k, (&lg, ug)) in gram.values.iter().zip(&gram.vectors).enumerate() {
            let ld = dense.values[k];
            worst_val = worst_val.max((lg - ld).abs() / (top + ld.abs()));
            let cluster: Vec<&Vec<f64>> = dense
                .values
                .iter()
                .zip(&dense.vectors)
                .filter(|(l, _)| (*l - lg).abs() <= 1e-6 * top)
                .map(|(_, v)| v)
                .collect();
            worst_angle = worst_angle.max(distance_to_span(ug, &cluster));
        }
        for &ld in &dense.values[gram.rank()..] {
            worst_val = worst_val.max(ld.abs() / top);
        }
    }
    let t = start.elapsed();
    outcome(
        worst_val <= EIG_VALUE_TOL && worst_angle <= SUBSPACE_ANGLE_TOL && t < KERNEL_BUDGET,
        format!("1000 matrices, max eigenvalue error {worst_val:.2e}, max subspace sin-angle {worst_angle:.2e}, {t:.2?}"),
    )
}

fn window_of(rows: Vec<Vec<f64>>) -> GradientWindow {
    let mut w = GradientWindow::new(rows.len(), rows[0].len());
    for r in rows {
        w.push(r).unwrap();
    }
    w
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    linalg::norm(&linalg::sub(a, b)) / linalg::norm(b).max(f64::MIN_POSITIVE)
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut calib, mut degen, mut scale_inv) = (0.0_f64, 0.0_f64, 0.0_f64);
    let mut identical_exact = true;
    let phi_eps = FastConfig::default().phi_eps;
    for i in 0..1000 {
        let m = [2, 3, 5][i % 3];
        let d = [4, 128][(i / 3) % 2];
        let base: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let spread = 10f64.powf(rng.gen_range(-3.0..1.0));
        let rows: Vec<Vec<f64>> =
            (0..m).map(|_| base.iter().map(|b| b + spread * rng.gen_range(-1.0..1.0)).collect()).collect();
        let w = window_of(rows);
        let mean = w.mean();
        let mean_norm = linalg::norm(&mean);

        let g = concordant_gradient(&w, phi_eps, DEFAULT_EIG_TOL).unwrap().grad;
        calib = calib.max((linalg::norm(&g) - mean_norm).abs() / mean_norm);

        let k = rng.gen_range(0.1..10.0);
        let constant = concordant_gradient_with(&w, DEFAULT_EIG_TOL, |_, _| k).unwrap().grad;
        degen = degen.max(rel_diff(&constant, &mean));

        let c = 10f64.powf(rng.gen_range(-3.0..3.0));
        let phi = |a: Axis, s: f64| match a {
            Axis::Eigen(l) => 1.0 / (l + phi_eps * s),
            Axis::Null => 1.0 / (phi_eps * s),
        };
        let scaled = concordant_gradient_with(&w, DEFAULT_EIG_TOL, |a, s| c * phi(a, s)).unwrap().grad;
        scale_inv = scale_inv.max(rel_diff(&scaled, &g));

        let same = window_of(vec![base.clone(); m]);
        identical_exact &= concordant_gradient(&same, phi_eps, DEFAULT_EIG_TOL).unwrap().grad == same.mean();
    }
    let t = start.elapsed();
    outcome(
        calib <= CALIBRATION_TOL && degen <= CALIBRATION_TOL && scale_inv <= CALIBRATION_TOL && identical_exact && t < KERNEL_BUDGET,
        format!(
            "1000 windows, (a) norm error {calib:.2e}, (b) constant-coefficient error {degen:.2e}, (c) scale error {scale_inv:.2e}, (d) identical windows exact: {identical_exact}, {t:.2?}"
        ),
    )
}

fn criterion_3() -> Outcome {
    let cfg = FastConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (lo, hi) = (cfg.trunc_lo * cfg.base_lr, cfg.trunc_hi * cfg.base_lr);
    let (mut in_bounds, mut at_ceiling, mut near) = (true, true, 0usize);
    for _ in 0..10_000 {
        let sigma_bar = rng.gen_range(0.0..5.0);
        let sigma = if rng.gen_bool(0.5) { sigma_bar + rng.gen_range(-0.6..=0.6) } else { rng.gen_range(0.0..10.0) };
        let mut state = FastPhaseState { sigma_bar, initialized: true };
        let lr = dynamic_lr(sigma, &mut state, &cfg);
        in_bounds &= lr >= lo && lr <= hi;
        if (sigma - sigma_bar).abs() <= 0.6 {
            near += 1;
            at_ceiling &= lr == cfg.trunc_hi * cfg.base_lr;
        }
    }
    outcome(
        in_bounds && at_ceiling,
        format!("10000 pairs, all in [{lo:.2e}, {hi:.2e}]: {in_bounds}; {near} pairs with |σ−σ̄| ≤ 0.6 all at 1.1·γ̂: {at_ceiling}"),
    )
}

fn criterion_4() -> Outcome {
    let cfg = SlowConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (mut min_align, mut max_ratio, mut eq_err, mut d1_err) = (f64::INFINITY, 0.0_f64, 0.0_f64, 0.0_f64);
    let mut anchored = true;
    for i in 0..1000 {
        let d = if i % 2 == 0 { 1 } else { 128 };
        let states = gaussian_rows(&mut rng, cfg.interval + 1, d, 1.0);
        let traj = Trajectory::from_states(states.clone()).unwrap();
        let h = reference_direction(&traj, cfg.q);
        let g = slow_gradient(&traj, &h, cfg.eig_tol, cfg.sign_tol).unwrap();
        let (hn, gn) = (linalg::norm(&h), linalg::norm(&g));
        min_align = min_align.min(linalg::dot(&g, &h) / (hn * gn).max(f64::MIN_POSITIVE));
        max_ratio = max_ratio.max(gn / hn);
        let (_, xc) = center_rows(&RowMatrix::from_rows(&states).unwrap()).unwrap();
        let eig = scatter_eigen(&xc, cfg.interval, cfg.eig_tol).unwrap();
        if eig.vectors.iter().all(|z| linalg::dot(&h, z).abs() > cfg.sign_tol * hn) {
            eq_err = eq_err.max((gn - hn).abs() / hn);
        }
        if d == 1 {
            d1_err = d1_err.max((g[0] - h[0]).abs());
        }

        let anchor = states[0].clone();
        let expect = slow_step(&anchor, &g, cfg.lr);
        let mut moved = states.clone();
        moved[cfg.interval].iter_mut().for_each(|v| *v += 10.0);
        let moved_traj = Trajectory::from_states(moved).unwrap();
        anchored &= slow_step(moved_traj.anchor(), &g, cfg.lr) == expect
            && expect.iter().zip(&anchor).zip(&g).all(|((e, a), gi)| *e == a - cfg.lr * gi);
    }
    outcome(
        min_align >= -1e-12 && max_ratio <= 1.0 + 1e-12 && eq_err <= CALIBRATION_TOL && d1_err <= D1_TOL && anchored,
        format!(
            "1000 trajectories, min cos(∇,h) {min_align:.3}, max ‖∇‖/‖h‖ {max_ratio:.12}, equality error {eq_err:.2e}, D=1 error {d1_err:.2e}, anchor-only: {anchored}"
        ),
    )
}

fn entropy_at(p: &PolicyParams, theta: &[f64], input: &StepInput) -> f64 {
    entropy_loss(&p.forward(theta, input).unwrap().probs)
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst = 0.0_f64;
    for i in 0..100 {
        let p = PolicyParams::init(Architecture::default(), i).unwrap();
        let mut theta = p.adaptable();
        theta.iter_mut().for_each(|t| *t += rng.gen_range(-0.3..0.3));
        let k = rng.gen_range(2..=7);
        let mut v = |n: usize| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
        let input = StepInput { instruction: v(8), history: v(8), candidates: (0..k).map(|_| v(8)).collect() };
        let g = p.backward_adaptable(&theta, &p.forward(&theta, &input).unwrap());
        let fd: Vec<f64> = (0..theta.len())
            .map(|j| {
                let (mut a, mut b) = (theta.clone(), theta.clone());
                a[j] += FD_STEP;
                b[j] -= FD_STEP;
                (entropy_at(&p, &a, &input) - entropy_at(&p, &b, &input)) / (2.0 * FD_STEP)
            })
            .collect();
        worst = worst.max(rel_diff(&g, &fd));
    }
    outcome(worst <= FD_REL_TOL, format!("100 instances, max relative error {worst:.2e}"))
}

fn mean_row<'a>(rows: &'a [ResultRow], strategy: &str) -> &'a ResultRow {
    rows.iter().find(|r| r.strategy == strategy && r.shuffle == "mean").expect("aggregate row")
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome)> = vec![
        (1, "eigen correctness", criterion_1()),
        (2, "fast-phase identities", criterion_2()),
        (3, "DLR bounds", criterion_3()),
        (4, "slow-phase identities", criterion_4()),
        (5, "gradient correctness", criterion_5()),
    ];

    let dir = tempfile::tempdir().expect("temp dir");
    let mut cfg = RunConfig { output_dir: dir.path().join("a"), ..RunConfig::default() };
    cfg.strategies = ["noadapt", "tent-int-1", "fast-only", "fast-only-nodlr", "fast-slow"].map(String::from).to_vec();

    let start = Instant::now();
    let pre = cmd_pretrain(&cfg).expect("pretraining reaches its accuracy floor");
    let pretrain_time = start.elapsed();
    std::fs::create_dir_all(dir.path().join("b")).unwrap();
    std::fs::copy(&pre.params_path, dir.path().join("b").join(&cfg.params_file)).unwrap();

    let start = Instant::now();
    let run = cmd_run(&cfg).expect("run");
    let run_time = pretrain_time + start.elapsed();
    let rows = &run.rows;
    let (na, t1, fo, fon, fs) = (
        mean_row(rows, "noadapt"),
        mean_row(rows, "tent-int-1"),
        mean_row(rows, "fast-only"),
        mean_row(rows, "fast-only-nodlr"),
        mean_row(rows, "fast-slow"),
    );
    let sr = |r: &ResultRow| r.sr.expect("sr");
    let spl = |r: &ResultRow| r.spl.expect("spl");
    results.push((
        6,
        "desk-scale ordering",
        outcome(
            sr(fs) - sr(na) >= ORDERING_MARGIN && sr(fs) >= sr(t1) && spl(fs) >= spl(na) && run_time <= EXPERIMENT_BUDGET,
            format!(
                "SR fast-slow {:.2} vs noadapt {:.2} (margin {:+.2}, need ≥ {ORDERING_MARGIN}), vs tent-int-1 {:.2}; SPL {:.2} vs {:.2}; held-out acc {:.3}; {run_time:.2?}",
                sr(fs), sr(na), sr(fs) - sr(na), sr(t1), spl(fs), spl(na), pre.report.heldout_accuracy
            ),
        ),
    ));

    let start = Instant::now();
    let forget = cmd_forgetting(&cfg).expect("forgetting");
    let forget_time = pretrain_time + start.elapsed();
    let cond = |c: &str| forget.rows.iter().find(|r| r.condition == c).expect("condition row").sr;
    let (xx, xv, vx, vv) = (cond("×→×"), cond("×→✓"), cond("✓→×"), cond("✓→✓"));
    results.push((
        7,
        "forgetting protocol",
        outcome(
            (vx - xx).abs() <= FORGETTING_BAND && xv >= xx - SEEN_ADAPT_SLACK && forget_time <= EXPERIMENT_BUDGET,
            format!(
                "seen SR ×→× {xx:.2}, ×→✓ {xv:.2}, ✓→× {vx:.2} (Δ {:+.2}, band ±{FORGETTING_BAND}), ✓→✓ {vv:.2}; {forget_time:.2?}",
                vx - xx
            ),
        ),
    ));

    results.push((
        8,
        "ablation pattern",
        outcome(
            sr(na) <= sr(fo) + TIE && sr(fo) <= sr(fs) + TIE && sr(fo) >= sr(fon) - TIE,
            format!(
                "SR noadapt {:.2} ≤ fast-only {:.2} ≤ fast-slow {:.2} (ties {TIE}); DLR on {:.2} vs off {:.2}",
                sr(na), sr(fo), sr(fs), sr(fo), sr(fon)
            ),
        ),
    ));

    let mut again = cfg.clone();
    again.output_dir = dir.path().join("b");
    again.threads = 1;
    let second = cmd_run(&again).expect("second run");
    let strip = |path: &std::path::Path| -> Vec<String> {
        let text = std::fs::read_to_string(path).unwrap();
        let mut lines = text.lines().filter(|l| !l.starts_with('#'));
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        let t = header.iter().position(|h| *h == "time_ms").unwrap();
        lines
            .map(|l| l.split(',').enumerate().filter(|(i, _)| *i != t).map(|(_, f)| f).collect::<Vec<_>>().join(","))
            .collect()
    };
    let (a, b) = (strip(&run.results_path), strip(&second.results_path));
    results.push((
        9,
        "determinism",
        outcome(a == b && !a.is_empty(), format!("{} rows compared across a parallel and a single-threaded run, identical: {}", a.len(), a == b)),
    ));

    let mut failed = 0;
    results.sort_by_key(|r| r.0);
    for (id, name, o) in &results {
        if !o.pass {
            failed += 1;
        }
        println!("criterion {id} [{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
