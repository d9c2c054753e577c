//! JSON experiment configuration. Every field has a default, unknown keys are
//! rejected, and [`ExperimentConfig::validate`] runs before any compute.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use subcol_core::cluster::PostprocessConfig;
use subcol_core::sedsc::{NormalizationScheme, TrainConfig};
use subcol_core::selfexpress::{RegKind, Regularizer, SolverOptions};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub regularizer: RegularizerConfig,
    pub normalization: NormalizationConfig,
    pub training: TrainingConfig,
    pub postprocess: PostprocessSection,
    pub output: OutputConfig,
    pub verify: VerifyConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    Parabolas,
    Subspaces,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub generator: Generator,
    /// Points per class.
    pub n_per: usize,
    pub noise_sd: f64,
    pub seed: u64,
    /// Subspace generator only.
    pub ambient_dim: usize,
    pub sub_dim: usize,
    pub clusters: usize,
    pub angle_min_deg: f64,
    /// Defaults to `<out_dir>/data.csv`.
    pub data_file: Option<PathBuf>,
    /// Defaults to `<out_dir>/labels.csv`.
    pub labels_file: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            generator: Generator::Parabolas,
            n_per: 50,
            noise_sd: 0.0,
            seed: 1,
            ambient_dim: 3,
            sub_dim: 1,
            clusters: 2,
            angle_min_deg: 30.0,
            data_file: None,
            labels_file: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegName {
    Ssc,
    Ensc,
    Frobenius,
    Nuclear,
    Schatten,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegularizerConfig {
    pub kind: RegName,
    pub lambda: f64,
    /// Schatten exponent.
    pub p: f64,
    /// Elastic-net weight on `‖C‖²_F`.
    pub tau_en: f64,
    /// Defaults to on for SSC/EnSC and off otherwise.
    pub zero_diag: Option<bool>,
}

impl Default for RegularizerConfig {
    fn default() -> Self {
        RegularizerConfig {
            kind: RegName::Ssc,
            lambda: 1e-4,
            p: 2.0,
            tau_en: subcol_core::selfexpress::DEFAULT_ENSC_TAU,
            zero_diag: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SchemeName {
    None,
    Dataset,
    Channel,
    Instance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalizationConfig {
    pub scheme: SchemeName,
    pub tau: f64,
    /// Instance penalty weight.
    pub gamma2: f64,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        NormalizationConfig { scheme: SchemeName::Dataset, tau: 1.0, gamma2: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub gamma: f64,
    pub hidden: usize,
    pub embed_dim: usize,
    pub pretrain_iters: usize,
    pub joint_iters: usize,
    pub lr: f64,
    pub seed: u64,
    pub c_max_iters: usize,
    pub c_tolerance: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            gamma: 2.0,
            hidden: 100,
            embed_dim: 2,
            pretrain_iters: 2000,
            joint_iters: 10_000,
            lr: 1e-3,
            seed: 1,
            c_max_iters: SolverOptions::default().max_iters,
            c_tolerance: SolverOptions::default().tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PostprocessSection {
    pub enabled: bool,
    pub keep_threshold: f64,
    /// Defaults to `4k`.
    pub sim_rank: Option<usize>,
    pub power: f64,
    pub normalize_rows: bool,
    /// Defaults to the number of distinct ground-truth labels.
    pub clusters: Option<usize>,
    pub seed: u64,
    /// Defaults to `<out_dir>/c.csv`.
    pub c_file: Option<PathBuf>,
}

impl Default for PostprocessSection {
    fn default() -> Self {
        let base = PostprocessConfig::for_clusters(1);
        PostprocessSection {
            enabled: true,
            keep_threshold: base.keep_threshold,
            sim_rank: None,
            power: base.power,
            normalize_rows: base.normalize_rows,
            clusters: None,
            seed: 0,
            c_file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Embeddings examined per `(N, d)` case of the two-point search.
    pub brute_force_candidates: usize,
    /// Feasible candidates per exponent in the rank-one search.
    pub random_candidates: usize,
    /// Added to one off-diagonal entry of the canonical two-point `C`
    /// before its feasibility check; nonzero values make that check fail.
    pub perturb_canonical: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { seed: 7, brute_force_candidates: 20_000, random_candidates: 100_000, perturb_canonical: 0.0 }
    }
}

fn invalid(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{key}: {msg}"))
}

fn positive(key: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(key, format!("must be positive and finite, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let d = &self.data;
        if d.n_per == 0 {
            return Err(invalid("data.n_per", "must be at least 1"));
        }
        if !(d.noise_sd >= 0.0) || !d.noise_sd.is_finite() {
            return Err(invalid("data.noise_sd", format!("must be >= 0, got {}", d.noise_sd)));
        }
        if d.generator == Generator::Subspaces {
            if d.sub_dim == 0 || d.sub_dim > d.ambient_dim {
                return Err(invalid("data.sub_dim", format!("must be in 1..={}, got {}", d.ambient_dim, d.sub_dim)));
            }
            if d.clusters == 0 {
                return Err(invalid("data.clusters", "must be at least 1"));
            }
            if !(0.0..=90.0).contains(&d.angle_min_deg) {
                return Err(invalid("data.angle_min_deg", format!("must be in [0, 90], got {}", d.angle_min_deg)));
            }
        }
        self.regularizer()?;
        self.train_config()?;
        let p = &self.postprocess;
        if !(p.keep_threshold > 0.0 && p.keep_threshold <= 1.0) {
            return Err(invalid("postprocess.keep_threshold", format!("must be in (0, 1], got {}", p.keep_threshold)));
        }
        positive("postprocess.power", p.power)?;
        if p.sim_rank == Some(0) {
            return Err(invalid("postprocess.sim_rank", "must be at least 1"));
        }
        if p.clusters == Some(0) {
            return Err(invalid("postprocess.clusters", "must be at least 1"));
        }
        if !self.verify.perturb_canonical.is_finite() {
            return Err(invalid("verify.perturb_canonical", "must be finite"));
        }
        if self.verify.brute_force_candidates == 0 || self.verify.random_candidates == 0 {
            return Err(invalid("verify", "candidate counts must be at least 1"));
        }
        Ok(())
    }

    pub fn regularizer(&self) -> Result<Regularizer, CliError> {
        let r = &self.regularizer;
        positive("regularizer.lambda", r.lambda)?;
        let kind = match r.kind {
            RegName::Ssc => RegKind::Ssc,
            RegName::Ensc => RegKind::Ensc { tau_en: r.tau_en },
            RegName::Frobenius => RegKind::Frobenius,
            RegName::Nuclear => RegKind::Nuclear,
            RegName::Schatten => RegKind::SchattenP { p: r.p },
        };
        let reg = Regularizer::new(kind, r.lambda).map_err(|e| invalid("regularizer", e))?;
        match r.zero_diag {
            Some(z) => reg.with_zero_diag(z).map_err(|e| invalid("regularizer.zero_diag", e)),
            None => Ok(reg),
        }
    }

    pub fn scheme(&self) -> NormalizationScheme {
        let n = &self.normalization;
        match n.scheme {
            SchemeName::None => NormalizationScheme::None,
            SchemeName::Dataset => NormalizationScheme::Dataset { tau: n.tau },
            SchemeName::Channel => NormalizationScheme::Channel { tau: n.tau },
            SchemeName::Instance => NormalizationScheme::InstancePenalty { tau: n.tau, gamma2: n.gamma2 },
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        let t = &self.training;
        positive("normalization.tau", self.normalization.tau)?;
        if !(self.normalization.gamma2 >= 0.0) || !self.normalization.gamma2.is_finite() {
            return Err(invalid("normalization.gamma2", format!("must be >= 0, got {}", self.normalization.gamma2)));
        }
        positive("training.lr", t.lr)?;
        positive("training.c_tolerance", t.c_tolerance)?;
        if !(t.gamma >= 0.0) || !t.gamma.is_finite() {
            return Err(invalid("training.gamma", format!("must be >= 0, got {}", t.gamma)));
        }
        for (key, v) in [
            ("training.hidden", t.hidden),
            ("training.embed_dim", t.embed_dim),
            ("training.pretrain_iters", t.pretrain_iters),
            ("training.joint_iters", t.joint_iters),
            ("training.c_max_iters", t.c_max_iters),
        ] {
            if v == 0 {
                return Err(invalid(key, "must be at least 1"));
            }
        }
        let cfg = TrainConfig {
            gamma: t.gamma,
            reg: self.regularizer()?,
            norm: self.scheme(),
            hidden: t.hidden,
            embed_dim: t.embed_dim,
            pretrain_iters: t.pretrain_iters,
            joint_iters: t.joint_iters,
            lr: t.lr,
            seed: t.seed,
            c_solver: SolverOptions { max_iters: t.c_max_iters, tolerance: t.c_tolerance, accelerated: true },
        };
        cfg.validate().map_err(|e| invalid("training", e))?;
        Ok(cfg)
    }

    pub fn postprocess_config(&self, k: usize) -> PostprocessConfig {
        let p = &self.postprocess;
        PostprocessConfig {
            keep_threshold: p.keep_threshold,
            sim_rank: p.sim_rank.unwrap_or(4 * k),
            power: p.power,
            enabled: p.enabled,
            normalize_rows: p.normalize_rows,
        }
    }

    pub fn out_dir(&self) -> &Path {
        &self.output.dir
    }

    pub fn data_file(&self) -> PathBuf {
        self.data.data_file.clone().unwrap_or_else(|| self.output.dir.join("data.csv"))
    }

    pub fn labels_file(&self) -> PathBuf {
        self.data.labels_file.clone().unwrap_or_else(|| self.output.dir.join("labels.csv"))
    }

    pub fn c_file(&self) -> PathBuf {
        self.postprocess.c_file.clone().unwrap_or_else(|| self.output.dir.join("c.csv"))
    }

    /// One seed for data, training and verification.
    pub fn set_seed(&mut self, seed: u64) {
        self.data.seed = seed;
        self.training.seed = seed;
        self.verify.seed = seed;
        self.postprocess.seed = seed;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn unknown_key_is_named() {
        let e = ExperimentConfig::from_json(r#"{"training": {"lr": 1e-3, "momentum": 0.9}}"#).unwrap_err();
        assert!(e.to_string().contains("momentum"), "{e}");
        let e = ExperimentConfig::from_json(r#"{"plots": {}}"#).unwrap_err();
        assert!(e.to_string().contains("plots"), "{e}");
    }

    #[test]
    fn out_of_range_values_are_rejected() {
        for doc in [
            r#"{"training": {"lr": -1}}"#,
            r#"{"regularizer": {"lambda": 0}}"#,
            r#"{"regularizer": {"kind": "schatten", "p": 0.5}}"#,
            r#"{"regularizer": {"kind": "ssc", "zero_diag": false}}"#,
            r#"{"postprocess": {"keep_threshold": 1.5}}"#,
            r#"{"normalization": {"tau": 0}}"#,
            r#"{"data": {"n_per": 0}}"#,
        ] {
            let c = ExperimentConfig::from_json(doc).unwrap();
            assert!(matches!(c.validate(), Err(CliError::Validation(_))), "{doc}");
        }
    }
}
