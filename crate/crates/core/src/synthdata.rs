//! Synthetic datasets and the plain-text matrix, label and parameter formats.
//!
//! Matrix CSV: first line `rows,cols`, then one comma-separated row per line
//! with 17 significant digits, which round-trips every finite double.

use std::fs;
use std::path::Path;

use crate::autoenc::AutoencoderParams;
use crate::error::{Error, Result};
use crate::numlin::{svd, Matrix, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    /// `d × N`, one sample per column.
    pub x: Matrix,
    pub labels: Vec<usize>,
    pub description: String,
}

/// Cluster 0 on `(t, t²)`, cluster 1 on `(t, 1 − t²)`, `t ~ U[−1, 1]`, plus
/// Gaussian noise of standard deviation `noise_sd`. Columns are ordered by cluster.
pub fn gen_two_parabolas(n_per: usize, noise_sd: f64, seed: u64) -> Result<LabeledDataset> {
    if n_per == 0 {
        return Err(Error::InvalidArgument("need at least one point per parabola".into()));
    }
    if !(noise_sd >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise_sd must be >= 0, got {noise_sd}")));
    }
    let mut rng = Rng::seed_from(seed);
    let n = 2 * n_per;
    let mut x = Matrix::zeros(2, n);
    let mut labels = Vec::with_capacity(n);
    for j in 0..n {
        let cluster = j / n_per;
        let t = rng.uniform(-1.0, 1.0);
        let y = if cluster == 0 { t * t } else { 1.0 - t * t };
        x[(0, j)] = t;
        x[(1, j)] = y;
        labels.push(cluster);
    }
    if noise_sd > 0.0 {
        for v in x.as_mut_slice() {
            *v += noise_sd * rng.normal();
        }
    }
    Ok(LabeledDataset {
        x,
        labels,
        description: format!("two parabolas, {n_per} points each, noise sd {noise_sd}, seed {seed}"),
    })
}

/// Retry cap for drawing subspaces that are far enough apart.
pub const SUBSPACE_RETRY_CAP: usize = 10_000;

/// Principal angles between the column spans of two orthonormal bases, in degrees.
pub fn principal_angles_deg(a: &Matrix, b: &Matrix) -> Result<Vec<f64>> {
    let s = svd(&a.tr_matmul(b))?.s;
    Ok(s.iter().map(|c| c.clamp(-1.0, 1.0).acos().to_degrees()).collect())
}

fn random_orthonormal(ambient: usize, dim: usize, rng: &mut Rng) -> Result<Matrix> {
    let g = rng.normal_matrix(ambient, dim);
    Ok(svd(&g)?.u)
}

/// `k` random `sub_dim`-dimensional subspaces of `R^ambient_d` whose smallest
/// pairwise principal angle is at least `angle_min_deg`, with `n_per` unit-norm
/// points drawn from each plus Gaussian noise. Returns the dataset and the bases.
pub fn gen_union_subspaces(
    ambient_d: usize,
    sub_dim: usize,
    k: usize,
    n_per: usize,
    angle_min_deg: f64,
    noise_sd: f64,
    seed: u64,
) -> Result<(LabeledDataset, Vec<Matrix>)> {
    if sub_dim == 0 || sub_dim >= ambient_d || k == 0 || n_per == 0 {
        return Err(Error::InvalidArgument(format!(
            "need 0 < sub_dim < ambient_d, k >= 1, n_per >= 1; got sub_dim={sub_dim}, ambient_d={ambient_d}, k={k}, n_per={n_per}"
        )));
    }
    if !(noise_sd >= 0.0) || !(0.0..=90.0).contains(&angle_min_deg) {
        return Err(Error::InvalidArgument("noise_sd must be >= 0 and angle_min_deg in [0, 90]".into()));
    }
    let mut rng = Rng::seed_from(seed);
    let mut bases: Vec<Matrix> = Vec::with_capacity(k);
    let mut tries = 0;
    while bases.len() < k {
        tries += 1;
        if tries > SUBSPACE_RETRY_CAP {
            return Err(Error::NumericalFailure(format!(
                "could not place {k} subspaces {angle_min_deg}° apart after {SUBSPACE_RETRY_CAP} draws; try a smaller angle_min_deg"
            )));
        }
        let cand = random_orthonormal(ambient_d, sub_dim, &mut rng)?;
        let mut ok = true;
        for b in &bases {
            let smallest = principal_angles_deg(b, &cand)?.into_iter().fold(90.0_f64, f64::min);
            if smallest < angle_min_deg {
                ok = false;
                break;
            }
        }
        if ok {
            bases.push(cand);
        }
    }
    let n = k * n_per;
    let mut x = Matrix::zeros(ambient_d, n);
    let mut labels = Vec::with_capacity(n);
    for (c, basis) in bases.iter().enumerate() {
        for t in 0..n_per {
            let coef: Vec<f64> = (0..sub_dim).map(|_| rng.normal()).collect();
            let mut p = basis.matvec(&coef);
            let pn = crate::numlin::norm2(&p);
            p.iter_mut().for_each(|v| *v /= pn);
            for (i, v) in p.into_iter().enumerate() {
                x[(i, c * n_per + t)] = v;
            }
            labels.push(c);
        }
    }
    if noise_sd > 0.0 {
        for v in x.as_mut_slice() {
            *v += noise_sd * rng.normal();
        }
    }
    let description = format!(
        "{k} subspaces of dimension {sub_dim} in R^{ambient_d}, {n_per} points each, min angle {angle_min_deg} deg, noise sd {noise_sd}, seed {seed}"
    );
    Ok((LabeledDataset { x, labels, description }, bases))
}

/// Serializes a matrix in the CSV format described at module level.
pub fn format_matrix(m: &Matrix) -> String {
    let mut s = String::with_capacity(24 * m.rows() * m.cols() + 16);
    s.push_str(&format!("{},{}\n", m.rows(), m.cols()));
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:.16e}")).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// Parses the matrix CSV format. `origin` names the source in errors.
pub fn parse_matrix(text: &str, origin: &Path) -> Result<Matrix> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let malformed = |line: &str| Error::MalformedHeader { path: origin.to_path_buf(), line: line.to_string() };
    let (_, header) = lines.next().ok_or_else(|| malformed(""))?;
    let dims: Vec<&str> = header.split(',').map(str::trim).collect();
    if dims.len() != 2 {
        return Err(malformed(header));
    }
    let rows: usize = dims[0].parse().map_err(|_| malformed(header))?;
    let cols: usize = dims[1].parse().map_err(|_| malformed(header))?;

    let mut data = Vec::with_capacity(rows * cols);
    for (ln, line) in lines {
        for tok in line.split(',') {
            let tok = tok.trim();
            let v: f64 = tok.parse().map_err(|_| Error::Unparsable {
                path: origin.to_path_buf(),
                line: ln + 1,
                token: tok.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::Overflow { path: origin.to_path_buf(), line: ln + 1, token: tok.to_string() });
            }
            data.push(v);
        }
    }
    if data.len() != rows * cols {
        return Err(Error::CountMismatch { path: origin.to_path_buf(), expected: rows * cols, found: data.len() });
    }
    Matrix::new(rows, cols, data)
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    fs::write(path, format_matrix(m)).map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix(&text, path)
}

pub fn format_labels(labels: &[usize]) -> String {
    let mut s = String::with_capacity(3 * labels.len());
    for l in labels {
        s.push_str(&l.to_string());
        s.push('\n');
    }
    s
}

pub fn parse_labels(text: &str, origin: &Path) -> Result<Vec<usize>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse().map_err(|_| Error::Unparsable {
                path: origin.to_path_buf(),
                line: i + 1,
                token: l.trim().to_string(),
            })
        })
        .collect()
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    fs::write(path, format_labels(labels)).map_err(|e| Error::io(path, e))
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text, path)
}

/// Autoencoder parameters as consecutive blocks, each a `[name]` line
/// followed by one matrix in the CSV format (biases as column vectors).
pub fn format_params(p: &AutoencoderParams) -> String {
    let mut s = String::new();
    for (name, m) in p.tensors() {
        s.push_str(&format!("[{name}]\n"));
        s.push_str(&format_matrix(&m));
    }
    s
}

pub fn parse_params(text: &str, origin: &Path) -> Result<AutoencoderParams> {
    let mut blocks: Vec<(String, String)> = Vec::new();
    for line in text.lines() {
        let t = line.trim();
        if let Some(name) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            blocks.push((name.to_string(), String::new()));
        } else if let Some((_, body)) = blocks.last_mut() {
            body.push_str(line);
            body.push('\n');
        } else if !t.is_empty() {
            return Err(Error::MalformedHeader { path: origin.to_path_buf(), line: line.to_string() });
        }
    }
    let tensors = blocks
        .into_iter()
        .map(|(name, body)| Ok((name, parse_matrix(&body, origin)?)))
        .collect::<Result<Vec<_>>>()?;
    AutoencoderParams::from_tensors(tensors)
}

pub fn write_params(path: &Path, p: &AutoencoderParams) -> Result<()> {
    fs::write(path, format_params(p)).map_err(|e| Error::io(path, e))
}

pub fn read_params(path: &Path) -> Result<AutoencoderParams> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_params(&text, path)
}
