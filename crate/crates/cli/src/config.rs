//! Experiment configuration: a versioned TOML document with one `[target]`,
//! `[sampler]`, and `[output]` section. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use magmcmc_core::catalog;
use magmcmc_core::sampler::SamplerKind;
use magmcmc_core::target::{Bvmf, GaussianAffine, NetworkEigenmodel, SimplexSphere, SphereUniform, Target};
use magmcmc_core::{Matrix, Vector};
use serde::Deserialize;

use crate::io;

pub const SCHEMA_VERSION: u32 = 1;

/// A value that is either a scalar or a list; lists are only legal under
/// `--grid`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrList<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Copy> ScalarOrList<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            ScalarOrList::One(v) => vec![*v],
            ScalarOrList::Many(vs) => vs.clone(),
        }
    }

    pub fn is_list(&self) -> bool {
        matches!(self, ScalarOrList::Many(_))
    }
}

/// Union of the per-family parameters; `validate` rejects fields that do not
/// belong to the declared family.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    pub family: String,
    // affine_gaussian
    pub mean: Option<Vec<f64>>,
    pub variances: Option<Vec<f64>>,
    pub a: Option<Vec<Vec<f64>>>,
    pub b: Option<Vec<f64>>,
    // bvmf (random instance)
    pub dim: Option<usize>,
    pub gen_seed: Option<u64>,
    // simplex_sphere
    pub alpha: Option<Vec<f64>>,
    pub games_csv: Option<String>,
    // network_eigenmodel
    pub adjacency_file: Option<String>,
    pub rank: Option<usize>,
    pub prior_var_sigma: Option<f64>,
    pub prior_var_c: Option<f64>,
    pub likelihood_weight: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub kind: String,
    pub step_size: ScalarOrList<f64>,
    pub num_steps: ScalarOrList<usize>,
    pub num_samples: usize,
    pub burn_in: Option<usize>,
    pub seed: u64,
    /// Random magnetic fields searched per run (magnetic_hmc only).
    pub num_fields: Option<usize>,
    pub interleave_canonical: Option<bool>,
    pub strict_reversibility: Option<bool>,
    pub newton_tol: Option<f64>,
    pub newton_max_iter: Option<usize>,
    pub initial_point: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub directory: String,
    pub ess_ceiling: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub target: TargetSection,
    pub sampler: SamplerSection,
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| format!("config parse error: {e}"))?;
        if cfg.schema != SCHEMA_VERSION {
            return Err(format!(
                "unsupported schema version {} (this build reads {SCHEMA_VERSION})",
                cfg.schema
            ));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), String> {
        self.sampler_kind()?;
        if self.sampler.num_samples == 0 {
            return Err("num_samples must be at least 1".into());
        }
        for eps in self.sampler.step_size.values() {
            if !eps.is_finite() || eps <= 0.0 {
                return Err("step_size values must be positive".into());
            }
        }
        for n in self.sampler.num_steps.values() {
            if n == 0 {
                return Err("num_steps values must be at least 1".into());
            }
        }

        let t = &self.target;
        let allowed: &[&str] = match t.family.as_str() {
            "affine_gaussian" => &["mean", "variances", "a", "b"],
            "bvmf" => &["dim", "gen_seed", "a", "b"],
            "simplex_sphere" => &["alpha", "games_csv"],
            "network_eigenmodel" => &[
                "adjacency_file",
                "rank",
                "prior_var_sigma",
                "prior_var_c",
                "likelihood_weight",
            ],
            "sphere_uniform" => &["dim"],
            other => return Err(format!("unknown target family '{other}'")),
        };
        let present: &[(&str, bool)] = &[
            ("mean", t.mean.is_some()),
            ("variances", t.variances.is_some()),
            ("a", t.a.is_some()),
            ("b", t.b.is_some()),
            ("dim", t.dim.is_some()),
            ("gen_seed", t.gen_seed.is_some()),
            ("alpha", t.alpha.is_some()),
            ("games_csv", t.games_csv.is_some()),
            ("adjacency_file", t.adjacency_file.is_some()),
            ("rank", t.rank.is_some()),
            ("prior_var_sigma", t.prior_var_sigma.is_some()),
            ("prior_var_c", t.prior_var_c.is_some()),
            ("likelihood_weight", t.likelihood_weight.is_some()),
        ];
        for (name, set) in present {
            if *set && !allowed.contains(name) {
                return Err(format!(
                    "field '{name}' is not valid for target family '{}'",
                    t.family
                ));
            }
        }
        Ok(())
    }

    pub fn sampler_kind(&self) -> Result<SamplerKind, String> {
        match self.sampler.kind.as_str() {
            "magnetic_hmc" => Ok(SamplerKind::MagneticHmc),
            "canonical_hmc" => Ok(SamplerKind::CanonicalHmc),
            "mala" => Ok(SamplerKind::Mala),
            "rwm" => Ok(SamplerKind::Rwm),
            other => Err(format!("unknown sampler kind '{other}'")),
        }
    }

    /// Builds the target; file references resolve relative to the config dir.
    pub fn build_target(&self, config_dir: &Path) -> Result<Arc<dyn Target>, String> {
        let t = &self.target;
        let need = |name: &str, ok: bool| -> Result<(), String> {
            if ok {
                Ok(())
            } else {
                Err(format!("target family '{}' requires '{name}'", t.family))
            }
        };
        match t.family.as_str() {
            "affine_gaussian" => {
                need("mean", t.mean.is_some())?;
                need("variances", t.variances.is_some())?;
                need("a", t.a.is_some())?;
                need("b", t.b.is_some())?;
                let a = matrix_from_rows(t.a.as_ref().unwrap())?;
                let target = GaussianAffine::new(
                    Vector::from_vec(t.mean.clone().unwrap()),
                    Vector::from_vec(t.variances.clone().unwrap()),
                    a,
                    Vector::from_vec(t.b.clone().unwrap()),
                )
                .map_err(|e| format!("affine Gaussian: {e}"))?;
                Ok(Arc::new(target))
            }
            "bvmf" => {
                if let (Some(a), Some(b)) = (&t.a, &t.b) {
                    let a = matrix_from_rows(a)?;
                    if a.nrows() != b.len() {
                        return Err("bvmf: a and b dimensions disagree".into());
                    }
                    Ok(Arc::new(Bvmf::new(a, Vector::from_vec(b.clone()))))
                } else {
                    need("dim", t.dim.is_some())?;
                    need("gen_seed (or explicit a and b)", t.gen_seed.is_some())?;
                    Ok(Arc::new(catalog::random_bvmf(
                        t.dim.unwrap(),
                        t.gen_seed.unwrap(),
                    )))
                }
            }
            "simplex_sphere" => {
                need("alpha", t.alpha.is_some())?;
                let games = match &t.games_csv {
                    Some(rel) => io::parse_games_csv(&config_dir.join(rel))?,
                    None => Vec::new(),
                };
                let target = SimplexSphere::new(t.alpha.clone().unwrap(), games)
                    .map_err(|e| format!("simplex target: {e}"))?;
                Ok(Arc::new(target))
            }
            "network_eigenmodel" => {
                need("adjacency_file", t.adjacency_file.is_some())?;
                need("rank", t.rank.is_some())?;
                let delta =
                    io::parse_adjacency(&config_dir.join(t.adjacency_file.as_ref().unwrap()))?;
                Ok(Arc::new(NetworkEigenmodel::new(
                    delta,
                    t.rank.unwrap(),
                    t.prior_var_sigma.unwrap_or(230.0),
                    t.prior_var_c.unwrap_or(100.0),
                    t.likelihood_weight.unwrap_or(1.0),
                )))
            }
            "sphere_uniform" => {
                need("dim", t.dim.is_some())?;
                Ok(Arc::new(SphereUniform::new(t.dim.unwrap())))
            }
            other => Err(format!("unknown target family '{other}'")),
        }
    }

    /// Output directory, resolved against the invocation's working directory
    /// (input file references, by contrast, resolve against the config file).
    pub fn output_dir(&self) -> PathBuf {
        PathBuf::from(&self.output.directory)
    }
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Matrix, String> {
    if rows.is_empty() {
        return Err("matrix must have at least one row".into());
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err("matrix rows have inconsistent lengths".into());
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(Matrix::from_row_slice(rows.len(), cols, &flat))
}
