use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;
use subcol_core::autoenc::{decode, encode, scaling_attack, AutoencoderParams};
use subcol_core::cluster::{accuracy, cluster_c, PostprocessConfig};
use subcol_core::numlin::{svd, Matrix, Rng};
use subcol_core::oracles::*;
use subcol_core::sedsc::{embed, init_c, pretrain, train_joint, RunStatus};
use subcol_core::selfexpress::{evaluate_f, RegKind, Regularizer, SelfExpression};
use subcol_core::synthdata::*;

use crate::config::{ExperimentConfig, Generator};
use crate::error::CliError;
use crate::svg::{self, Panel, Series, Svg};

fn out_err(e: std::io::Error) -> CliError {
    CliError::io("<stdout>", e)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn generate(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let d = &cfg.data;
    let data = match d.generator {
        Generator::Parabolas => gen_two_parabolas(d.n_per, d.noise_sd, d.seed)?,
        Generator::Subspaces => {
            gen_union_subspaces(d.ambient_dim, d.sub_dim, d.clusters, d.n_per, d.angle_min_deg, d.noise_sd, d.seed)?.0
        }
    };
    ensure_dir(cfg.out_dir())?;
    let (xf, lf) = (cfg.data_file(), cfg.labels_file());
    write_matrix(&xf, &data.x)?;
    write_labels(&lf, &data.labels)?;
    writeln!(out, "wrote {}x{} data to {} and labels to {}", data.x.rows(), data.x.cols(), xf.display(), lf.display())
        .map_err(out_err)
}

/// File names written by `train` and read by `cluster` and `report`.
pub mod files {
    pub const PARAMS: &str = "params.txt";
    pub const PARAMS_PRETRAINED: &str = "params_pretrained.txt";
    pub const C: &str = "c.csv";
    pub const C_INIT: &str = "c_init.csv";
    pub const Z: &str = "z.csv";
    pub const Z_PRETRAINED: &str = "z_pretrained.csv";
    pub const X_HAT: &str = "x_hat.csv";
    pub const TRACE: &str = "trace.csv";
    pub const PRETRAIN_TRACE: &str = "pretrain_trace.csv";
    pub const SUMMARY: &str = "summary.json";
    pub const PRED_LABELS: &str = "pred_labels.csv";
    pub const CLUSTER_REPORT: &str = "cluster_report.json";
    pub const METRICS: &str = "metrics_summary.csv";
}

pub fn train(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let tc = cfg.train_config()?;
    let x = read_matrix(&cfg.data_file())?;
    let dir = cfg.out_dir();
    ensure_dir(dir)?;
    let t0 = Instant::now();

    let pre = pretrain(&x, &tc)?;
    write_text(&dir.join(files::PRETRAIN_TRACE), &pre.trace.to_csv())?;
    if let RunStatus::Diverged { iteration } = pre.status {
        return Err(CliError::Numerical(format!(
            "pretraining diverged at iteration {iteration}; partial trace in {}",
            dir.join(files::PRETRAIN_TRACE).display()
        )));
    }
    write_params(&dir.join(files::PARAMS_PRETRAINED), &pre.params)?;
    let z0 = embed(&x, &pre.params, &tc.norm)?;
    write_matrix(&dir.join(files::Z_PRETRAINED), &z0)?;
    let c0 = init_c(&z0, &tc.reg, &tc.c_solver)?;
    write_matrix(&dir.join(files::C_INIT), c0.c.matrix())?;
    log::info!("C initialized in {} iterations (converged: {})", c0.iterations, c0.converged);

    let joint = train_joint(&x, pre.params, c0.c.clone(), &tc)?;
    write_text(&dir.join(files::TRACE), &joint.trace.to_csv())?;
    write_params(&dir.join(files::PARAMS), &joint.params)?;
    write_matrix(&dir.join(files::C), joint.c.matrix())?;
    let z = embed(&x, &joint.params, &tc.norm)?;
    write_matrix(&dir.join(files::Z), &z)?;
    write_matrix(&dir.join(files::X_HAT), &decode(&z.matmul(joint.c.matrix()), &joint.params)?)?;

    let last = joint.trace.last();
    let metrics = degeneracy_metrics(&z, &joint.c).ok();
    let (status, diverged_at) = match joint.status {
        RunStatus::Completed => ("completed", None),
        RunStatus::Diverged { iteration } => ("diverged", Some(iteration)),
    };
    let summary = json!({
        "status": status,
        "diverged_at": diverged_at,
        "scheme": tc.norm.name(),
        "pretrain_iters": tc.pretrain_iters,
        "joint_iters_run": joint.trace.len(),
        "c_init_iterations": c0.iterations,
        "c_init_converged": c0.converged,
        "final_recon_loss": last.map(|r| r.recon_loss),
        "final_objective": last.map(|r| r.objective),
        "final_z_frobenius_norm": last.map(|r| r.z_frobenius_norm),
        "norm_concentration": metrics.map(|m| m.norm_concentration),
        "top1_sv_ratio": metrics.map(|m| m.top1_sv_ratio),
        "min_pair_gap": metrics.map(|m| m.min_pair_gap),
        "c_top2_mass": metrics.map(|m| m.c_top2_mass),
        "seconds": t0.elapsed().as_secs_f64(),
    });
    write_text(&dir.join(files::SUMMARY), &format!("{:#}\n", summary))?;
    if let Some(it) = diverged_at {
        return Err(CliError::Numerical(format!("joint training diverged at iteration {it}; partial outputs in {}", dir.display())));
    }
    writeln!(
        out,
        "trained {} + {} iterations in {:.1}s; final objective {:.6e}, ‖Z‖_F {:.6e}; outputs in {}",
        tc.pretrain_iters,
        tc.joint_iters,
        t0.elapsed().as_secs_f64(),
        last.map_or(f64::NAN, |r| r.objective),
        last.map_or(f64::NAN, |r| r.z_frobenius_norm),
        dir.display()
    )
    .map_err(out_err)
}

/// One row of the verification table.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

fn timed(name: impl Into<String>, f: impl FnOnce() -> Result<(bool, String), CliError>) -> Result<CheckResult, CliError> {
    let t0 = Instant::now();
    let (passed, detail) = f()?;
    Ok(CheckResult { name: name.into(), passed, detail, seconds: t0.elapsed().as_secs_f64() })
}

fn unit_columns(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for j in 0..m.cols() {
        let col = m.column(j);
        let n = subcol_core::numlin::norm2(&col);
        out.set_column(j, &col.iter().map(|v| v / n).collect::<Vec<_>>());
    }
    out
}

/// Every closed-form and search-based check of the degenerate optima.
pub fn run_checks(cfg: &ExperimentConfig) -> Result<Vec<CheckResult>, CliError> {
    let v = &cfg.verify;
    let mut rows = Vec::new();

    rows.push(timed("scaling attack keeps output, shrinks Z", || {
        let mut worst_out: f64 = 0.0;
        let mut worst_ratio: f64 = 0.0;
        for s in 0..10 {
            let mut rng = Rng::seed_from(v.seed.wrapping_add(s));
            let x = rng.normal_matrix(4, 20);
            let p = AutoencoderParams::random(4, 16, 3, 16, &mut rng);
            let q = scaling_attack(&p, 0.5)?;
            let (z, zq) = (encode(&x, &p)?, encode(&x, &q)?);
            worst_out = worst_out.max(decode(&z, &p)?.max_abs_diff(&decode(&zq, &q)?));
            worst_ratio = worst_ratio.max((zq.frobenius_norm() / z.frobenius_norm() - 0.5).abs());
        }
        Ok((worst_out <= 1e-12 && worst_ratio <= 1e-12, format!("max output change {worst_out:.1e}, ratio error {worst_ratio:.1e}")))
    })?);

    rows.push(timed("σ_min embedding attains the bound", || {
        let mut rng = Rng::seed_from(v.seed);
        let c = SelfExpression::projected(rng.normal_matrix(5, 5).scale(0.4), false);
        let reg = Regularizer::new(RegKind::Nuclear, 0.2)?;
        let tau = 2.0;
        let b = Matrix::from_rows(&[&[1.0], &[1.0]]);
        let mut worst: f64 = 0.0;
        for scheme in [Problem::P1, Problem::P2] {
            let z = thm1_optimal_z(&c, tau, scheme, &b)?;
            let f = evaluate_f(&z, &c, &reg)?.total;
            worst = worst.max((f - sigma_min_objective(&c, tau, &reg)?).abs());
        }
        Ok((worst <= 1e-10, format!("max gap {worst:.1e}")))
    })?);

    for (n, d) in [(3, 1), (3, 2), (4, 2), (10, 3)] {
        rows.push(timed(format!("two-point code feasible (N={n}, d={d})"), || {
            let s = thm2_canonical(n, d, 1.0, Problem::P1, v.seed)?;
            let mut c = s.c_star.matrix().clone();
            // row of a surviving point, so the perturbation reaches Z·C
            let norms = s.z_star.column_norms();
            let i = (0..n).max_by(|&a, &b| norms[a].total_cmp(&norms[b])).unwrap_or(0);
            c[(i, (i + 1) % n)] += v.perturb_canonical;
            let resid = s.z_star.matmul(&c).max_abs_diff(&s.z_star);
            let diag = c.diagonal().iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            let norm_err = (s.z_star.frobenius_norm_sq() - 1.0).abs();
            let obj_err = (c.l1_norm() - 2.0).abs();
            let ok = resid <= 1e-12 && diag == 0.0 && norm_err <= 1e-12 && obj_err <= 1e-12;
            Ok((ok, format!("‖ZC−Z‖∞ {resid:.1e}, ‖C‖₁ {:.12}", c.l1_norm())))
        })?);
    }

    for (n, d) in [(3, 1), (3, 2), (4, 2)] {
        rows.push(timed(format!("no embedding beats ‖C‖₁ = 2 (N={n}, d={d})"), || {
            let r = thm2_brute_force(n, d, 1.0, v.brute_force_candidates, v.seed)?;
            Ok((r.best >= 2.0 - 1e-6, format!("best {:.9} over {} candidates", r.best, r.candidates)))
        })?);
    }

    for p in [1.0, 1.5, 2.0, 3.0] {
        rows.push(timed(format!("rank-one code feasible (p={p})"), || {
            let s = thm3_canonical(3, 2, 1.0, p, v.seed)?;
            let resid = s.z_star.matmul(s.c_star.matrix()).max_abs_diff(&s.z_star);
            let ok = resid <= 1e-12 && (s.z_star.frobenius_norm_sq() - 1.0).abs() <= 1e-12 && (s.objective - 1.0).abs() <= 1e-10;
            Ok((ok, format!("‖C‖_S{p} {:.12}, residual {resid:.1e}", s.objective)))
        })?);
        rows.push(timed(format!("no feasible candidate below 1 (p={p})"), || {
            let r = thm3_random_search(3, 2, p, v.random_candidates, v.seed)?;
            Ok((r.best >= 1.0 - 1e-6, format!("best {:.9} over {} candidates", r.best, r.candidates)))
        })?);
    }

    rows.push(timed("unit duplicate costs exactly 1", || {
        let zs = unit_columns(&Rng::seed_from(v.seed).normal_matrix(3, 6));
        let target = zs.select_columns(&[0]);
        let mut rest = zs.select_columns(&[1, 2, 3, 4, 5]);
        rest.set_column(2, &target.column(0));
        let val = lemma1_min_l1(&rest, &target)?;
        Ok(((val - 1.0).abs() <= 1e-4, format!("{val:.9}")))
    })?);
    rows.push(timed("no duplicate costs more than 1", || {
        let zs = unit_columns(&Rng::seed_from(v.seed.wrapping_add(1)).normal_matrix(3, 6));
        let val = lemma1_min_l1(&zs.select_columns(&[1, 2, 3, 4, 5]), &zs.select_columns(&[0]))?;
        Ok((val > 1.0 + 1e-4, format!("{val:.9}")))
    })?);
    rows.push(timed("diagonal pair reaches e₂ at √2", || {
        let h = 0.5f64.sqrt();
        let a = Matrix::from_rows(&[&[h, h], &[h, -h]]);
        let val = lemma1_min_l1(&a, &Matrix::from_rows(&[&[0.0], &[1.0]]))?;
        Ok(((val - 2f64.sqrt()).abs() <= 1e-3, format!("{val:.9}")))
    })?);

    rows.push(timed("signed copies pass the pairing check", || {
        let h = 0.5f64.sqrt();
        let z = Matrix::from_rows(&[&[h, -h, 1.0, 1.0], &[h, -h, 0.0, 0.0]]);
        let mut c = Matrix::zeros(4, 4);
        c[(1, 0)] = -1.0;
        c[(0, 1)] = -1.0;
        c[(3, 2)] = 1.0;
        c[(2, 3)] = 1.0;
        let r = thm4_check(&z, &SelfExpression::new(c, true)?, 1.0, 1e-9)?;
        Ok((r.is_degenerate, format!("failing columns {:?}", r.failing_columns())))
    })?);

    Ok(rows)
}

pub fn verify(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let rows = run_checks(cfg)?;
    let width = rows.iter().map(|r| r.name.chars().count()).max().unwrap_or(0);
    for r in &rows {
        let pad = width - r.name.chars().count();
        writeln!(
            out,
            "{}{}  {}  {:>8.3}s  {}",
            r.name,
            " ".repeat(pad),
            if r.passed { "PASS" } else { "FAIL" },
            r.seconds,
            r.detail
        )
        .map_err(out_err)?;
    }
    let failed = rows.iter().filter(|r| !r.passed).count();
    writeln!(out, "{} of {} checks passed", rows.len() - failed, rows.len()).map_err(out_err)?;
    if failed > 0 {
        return Err(CliError::ChecksFailed(failed));
    }
    Ok(())
}

/// Clustering accuracy of `C` with and without the post-processing step.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterOutcome {
    pub k: usize,
    pub accuracy_with: f64,
    pub accuracy_without: f64,
    pub labels_with: Vec<usize>,
    pub labels_without: Vec<usize>,
}

pub fn cluster_both(cfg: &ExperimentConfig, c: &SelfExpression, truth: &[usize]) -> Result<ClusterOutcome, CliError> {
    if truth.len() != c.n() {
        return Err(CliError::Validation(format!("{} labels for a C of size {}", truth.len(), c.n())));
    }
    let distinct = truth.iter().copied().collect::<std::collections::BTreeSet<_>>().len();
    let k = cfg.postprocess.clusters.unwrap_or(distinct).max(1);
    if k > c.n() {
        return Err(CliError::Validation(format!("postprocess.clusters: {k} clusters for {} points", c.n())));
    }
    let on = PostprocessConfig { enabled: true, ..cfg.postprocess_config(k) };
    let on = PostprocessConfig { sim_rank: on.sim_rank.min(c.n()), ..on };
    let labels_with = cluster_c(c, &on, k, cfg.postprocess.seed)?;
    let labels_without = cluster_c(c, &PostprocessConfig::disabled(), k, cfg.postprocess.seed)?;
    Ok(ClusterOutcome {
        k,
        accuracy_with: accuracy(&labels_with, truth)?,
        accuracy_without: accuracy(&labels_without, truth)?,
        labels_with,
        labels_without,
    })
}

pub fn cluster(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let cm = read_matrix(&cfg.c_file())?;
    if cm.rows() != cm.cols() {
        return Err(CliError::Validation(format!("C in {} is {}x{}, not square", cfg.c_file().display(), cm.rows(), cm.cols())));
    }
    let zero_diag = cm.diagonal().iter().all(|&v| v == 0.0);
    let c = SelfExpression::new(cm, zero_diag)?;
    let truth = read_labels(&cfg.labels_file())?;
    let r = cluster_both(cfg, &c, &truth)?;
    let dir = cfg.out_dir();
    ensure_dir(dir)?;
    let chosen = if cfg.postprocess.enabled { &r.labels_with } else { &r.labels_without };
    write_labels(&dir.join(files::PRED_LABELS), chosen)?;
    let report = json!({
        "clusters": r.k,
        "accuracy_postprocess_on": r.accuracy_with,
        "accuracy_postprocess_off": r.accuracy_without,
        "written_labels": if cfg.postprocess.enabled { "on" } else { "off" },
    });
    write_text(&dir.join(files::CLUSTER_REPORT), &format!("{:#}\n", report))?;
    writeln!(out, "k = {}: accuracy {:.4} with post-processing, {:.4} without", r.k, r.accuracy_with, r.accuracy_without)
        .map_err(out_err)
}

/// `(iteration, ‖Z‖_F)` pairs from a trace CSV.
pub fn read_trace_norms(path: &Path) -> Result<Vec<(f64, f64)>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| CliError::Validation(format!("{}: trace is empty", path.display())))?;
    let cols: Vec<&str> = header.split(',').collect();
    let find = |name: &str| {
        cols.iter().position(|c| *c == name).ok_or_else(|| CliError::Validation(format!("{}: no `{name}` column", path.display())))
    };
    let (it, zn) = (find("iteration")?, find("z_frobenius_norm")?);
    let mut out = Vec::new();
    for (k, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        let parse = |i: usize| -> Result<f64, CliError> {
            f.get(i).and_then(|s| s.parse::<f64>().ok()).ok_or_else(|| {
                CliError::Validation(format!("{}:{}: malformed trace row", path.display(), k + 2))
            })
        };
        out.push((parse(it)?, parse(zn)?));
    }
    if out.is_empty() {
        return Err(CliError::Validation(format!("{}: trace is empty", path.display())));
    }
    Ok(out)
}

/// Singular values of each class's embedded points, divided by the largest.
fn class_spectra(z: &Matrix, labels: &[usize]) -> Result<Vec<(usize, Vec<f64>)>, CliError> {
    let classes: std::collections::BTreeSet<usize> = labels.iter().copied().collect();
    let mut out = Vec::new();
    for k in classes {
        let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == k).collect();
        let s = svd(&z.select_columns(&idx))?.s;
        let top = s.first().copied().unwrap_or(0.0);
        out.push((k, s.iter().map(|v| if top > 0.0 { v / top } else { 0.0 }).collect()));
    }
    Ok(out)
}

/// Paths of the four figures written by [`report`].
pub fn report_files(dir: &Path) -> [PathBuf; 4] {
    [
        dir.join("z_norm.svg"),
        dir.join("singular_values.svg"),
        dir.join("embedding.svg"),
        dir.join("c_heatmap.svg"),
    ]
}

pub fn report(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let dir = cfg.out_dir();
    let norms = read_trace_norms(&dir.join(files::TRACE))?;
    let z0 = read_matrix(&dir.join(files::Z_PRETRAINED))?;
    let z = read_matrix(&dir.join(files::Z))?;
    let c = read_matrix(&cfg.c_file())?;
    let c_init = read_matrix(&dir.join(files::C_INIT))?;
    let labels = read_labels(&cfg.labels_file())?;
    if labels.len() != z.cols() || z0.shape() != z.shape() || c.rows() != z.cols() || c.cols() != z.cols() {
        return Err(CliError::Validation("trained outputs and labels disagree in size".into()));
    }
    let [f_norm, f_sv, f_emb, f_heat] = report_files(dir);

    let mut doc = Svg::new(640.0, 400.0);
    let panel = Panel { x: 0.0, y: 0.0, w: 640.0, h: 400.0 };
    let s = Series { name: String::new(), points: norms, color: svg::color(0), dashed: false, markers: false };
    svg::plot(&mut doc, &panel, "Embedding norm during joint training", "iteration", "‖Z‖_F", &[s], false);
    write_text(&f_norm, &doc.finish())?;

    let mut series = Vec::new();
    for (stage, zz, dashed) in [("pretrained", &z0, true), ("trained", &z, false)] {
        for (k, sv) in class_spectra(zz, &labels)? {
            series.push(Series {
                name: format!("class {k}, {stage}"),
                points: sv.iter().enumerate().map(|(i, &v)| ((i + 1) as f64, v)).collect(),
                color: svg::color(k),
                dashed,
                markers: false,
            });
        }
    }
    let mut doc = Svg::new(640.0, 400.0);
    svg::plot(&mut doc, &panel, "Normalized singular values per class", "index", "σᵢ/σ₁", &series, false);
    write_text(&f_sv, &doc.finish())?;

    let mut doc = Svg::new(1000.0, 420.0);
    for (i, (title, zz)) in [("After pretraining", &z0), ("After joint training", &z)].into_iter().enumerate() {
        let mut pts = Vec::new();
        let classes: std::collections::BTreeSet<usize> = labels.iter().copied().collect();
        for k in classes {
            pts.push(Series {
                name: format!("class {k}"),
                points: (0..zz.cols())
                    .filter(|&j| labels[j] == k)
                    .map(|j| (zz[(0, j)], if zz.rows() > 1 { zz[(1, j)] } else { 0.0 }))
                    .collect(),
                color: svg::color(k),
                dashed: false,
                markers: true,
            });
        }
        let p = Panel { x: 500.0 * i as f64, y: 0.0, w: 500.0, h: 420.0 };
        svg::plot(&mut doc, &p, title, "z₁", "z₂", &pts, false);
    }
    write_text(&f_emb, &doc.finish())?;

    let zero_diag = c.diagonal().iter().all(|&v| v == 0.0);
    let c_final = SelfExpression::new(c.clone(), zero_diag)?;
    let m_final = degeneracy_metrics(&z, &c_final)?;
    let mut doc = Svg::new(1000.0, 560.0);
    for (i, (title, log)) in [("|C|, linear scale", false), ("|C|, log scale", true)].into_iter().enumerate() {
        let p = Panel { x: 500.0 * i as f64, y: 0.0, w: 500.0, h: 530.0 };
        svg::heatmap(&mut doc, &p, title, &c, log);
    }
    doc.text(500.0, 548.0, 13.0, "middle", &format!("top-2 mass {:.4}", m_final.c_top2_mass));
    write_text(&f_heat, &doc.finish())?;

    let ci_zero = c_init.diagonal().iter().all(|&v| v == 0.0);
    let m_init = degeneracy_metrics(&z0, &SelfExpression::new(c_init, ci_zero)?)?;
    let tp0 = two_point_collapse_check(&z0, 0.05, 0.999)?;
    let tp1 = two_point_collapse_check(&z, 0.05, 0.999)?;
    let mut csv = String::from("stage,norm_concentration,top1_sv_ratio,min_pair_gap,c_top2_mass,two_point_rest_ratio,two_point_cosine,two_point_passes\n");
    for (stage, m, tp) in [("pretrained", m_init, tp0), ("trained", m_final, tp1)] {
        csv.push_str(&format!(
            "{stage},{:e},{:e},{:e},{:e},{:e},{:e},{}\n",
            m.norm_concentration, m.top1_sv_ratio, m.min_pair_gap, m.c_top2_mass, tp.rest_ratio, tp.cosine, tp.passes
        ));
    }
    write_text(&dir.join(files::METRICS), &csv)?;
    writeln!(out, "wrote 4 figures and {} to {}", files::METRICS, dir.display()).map_err(out_err)
}
