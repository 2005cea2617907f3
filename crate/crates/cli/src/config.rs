//! Run configuration: TOML file merged with command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use pitchfork::asymptotic_maps::Admissible;
use pitchfork::integrator::{IntegratorConfig, JacobianMode};
use pitchfork::orbits::CensusControls;
use pitchfork::painleve::{PainleveConfig, DEFAULT_DELTAS};
use pitchfork::predictor::{CoverConfig, CoverMode, StableCriterion, SweepConfig};
use pitchfork::ModelSpec;

use crate::CliError;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Builtin model name; ignored when `model_file` is set.
    pub model: String,
    pub model_file: Option<PathBuf>,
    pub eps: Option<f64>,
    pub eps_grid: Vec<f64>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub u_star_hat: f64,
    /// Distance kept from λ ≡ 0 mod π and from the singular ẑ₀.
    pub margin: f64,
    pub integrator: IntegratorSection,
    pub integrate: IntegrateSection,
    pub census: CensusSection,
    pub fit: FitSection,
    pub predict: PredictSection,
    pub continuation: ContinuationSection,
    pub sweep: SweepSection,
    pub cover: CoverSection,
    pub painleve: PainleveSection,
    pub constants: ConstantsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: "toy".into(),
            model_file: None,
            eps: None,
            eps_grid: vec![0.08, 0.04, 0.02],
            output_dir: PathBuf::from("out"),
            seed: 1,
            u_star_hat: 1.0,
            margin: 0.05,
            integrator: IntegratorSection::default(),
            integrate: IntegrateSection::default(),
            census: CensusSection::default(),
            fit: FitSection::default(),
            predict: PredictSection::default(),
            continuation: ContinuationSection::default(),
            sweep: SweepSection::default(),
            cover: CoverSection::default(),
            painleve: PainleveSection::default(),
            constants: ConstantsSection::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum JacobianChoice {
    Analytic,
    FiniteDifference,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorSection {
    pub h: f64,
    pub newton_tol: f64,
    pub max_newton: usize,
    pub jacobian: JacobianChoice,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        let d = IntegratorConfig::default();
        Self {
            h: d.h,
            newton_tol: d.newton_tol,
            max_newton: d.max_newton,
            jacobian: JacobianChoice::Analytic,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegrateSection {
    pub x0: f64,
    pub y0: f64,
    /// Start phase; defaults to the return-map section.
    pub u0: Option<f64>,
    /// Length in slow periods 2π/ε.
    pub periods: f64,
    pub stride: usize,
}

impl Default for IntegrateSection {
    fn default() -> Self {
        Self {
            x0: 0.3,
            y0: 0.0,
            u0: None,
            periods: 1.0,
            stride: 20,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CensusSection {
    pub window: (f64, f64),
    pub n0: Option<usize>,
    pub min_width: f64,
    pub bracket_tol: f64,
    pub refine_ratio: f64,
    pub dedup_tol: f64,
    pub stability_margin: f64,
    pub max_refine_evals: usize,
}

impl Default for CensusSection {
    fn default() -> Self {
        let c = CensusControls::default();
        Self {
            window: (0.0, 0.5),
            n0: c.n0,
            min_width: c.min_width,
            bracket_tol: c.bracket_tol,
            refine_ratio: c.refine_ratio,
            dedup_tol: c.dedup_tol,
            stability_margin: c.stability_margin,
            max_refine_evals: c.max_refine_evals,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    /// Census summary CSVs to fit; when empty the census is run over `eps_grid`.
    pub inputs: Vec<PathBuf>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum CaseChoice {
    I,
    Ii,
    Both,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictSection {
    pub case: CaseChoice,
    pub z0_window: (f64, f64),
    /// Drop roots whose λ_l is within this of π/2 mod π.
    pub cot_margin: Option<f64>,
}

impl Default for PredictSection {
    fn default() -> Self {
        Self {
            case: CaseChoice::Both,
            z0_window: (0.12, 2.0),
            cot_margin: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuationSection {
    pub count: usize,
    pub max_iter: usize,
    pub z0_window: (f64, f64),
    /// Seeds need |cot λ_l| at least this.
    pub min_abs_cot: f64,
}

impl Default for ContinuationSection {
    fn default() -> Self {
        Self {
            count: 20,
            max_iter: 20,
            z0_window: (0.3, 2.0),
            min_abs_cot: 0.3,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum CriterionChoice {
    Window,
    Trace,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub n_values: usize,
    pub z0_window: (f64, f64),
    pub inv_log_range: (f64, f64),
    pub criterion: CriterionChoice,
}

impl Default for SweepSection {
    fn default() -> Self {
        let d = SweepConfig::default();
        Self {
            n_values: d.n_values,
            z0_window: d.z0_window,
            inv_log_range: d.inv_log_range,
            criterion: CriterionChoice::Window,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum CoverChoice {
    Part2,
    Part3,
    Part4,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoverSection {
    pub mode: CoverChoice,
    pub z0_start: f64,
    pub n_steps: usize,
    pub c1: f64,
    pub eps_samples: usize,
    pub big_z0: f64,
}

impl Default for CoverSection {
    fn default() -> Self {
        let d = CoverConfig::default();
        Self {
            mode: CoverChoice::Part2,
            z0_start: d.z0_start,
            n_steps: d.n_steps,
            c1: d.c1,
            eps_samples: d.eps_samples,
            big_z0: d.big_z0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PainleveSection {
    pub deltas: Vec<f64>,
    /// λ samples per ẑ₀.
    pub n_phase: usize,
    /// Admissibility margin for the Jacobian growth samples.
    pub growth_margin: f64,
    pub u_breve_star: f64,
    pub step_factor: f64,
}

impl Default for PainleveSection {
    fn default() -> Self {
        let d = PainleveConfig::default();
        Self {
            deltas: DEFAULT_DELTAS.to_vec(),
            n_phase: 16,
            growth_margin: 0.2,
            u_breve_star: d.u_breve_star,
            step_factor: d.step_factor,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstantsSection {
    pub quad_tol: f64,
}

impl Default for ConstantsSection {
    fn default() -> Self {
        Self { quad_tol: 1e-12 }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("reading {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn model(&self) -> Result<ModelSpec, CliError> {
        match &self.model_file {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("reading {}: {e}", p.display())))?;
                Ok(ModelSpec::from_toml_str(&text)?)
            }
            None => Ok(ModelSpec::builtin(&self.model)?),
        }
    }

    pub fn eps(&self) -> Result<f64, CliError> {
        let e = self.eps.ok_or_else(|| {
            CliError::Config("this command needs eps (--eps or `eps = ...`)".into())
        })?;
        if !(e > 0.0 && e < 1.0) {
            return Err(CliError::Config(format!("eps={e} outside (0, 1)")));
        }
        Ok(e)
    }

    pub fn integrator(&self) -> IntegratorConfig {
        let s = &self.integrator;
        IntegratorConfig {
            h: s.h,
            newton_tol: s.newton_tol,
            max_newton: s.max_newton,
            jacobian_mode: match s.jacobian {
                JacobianChoice::Analytic => JacobianMode::Analytic,
                JacobianChoice::FiniteDifference => JacobianMode::FiniteDifference,
            },
        }
    }

    pub fn census_controls(&self) -> CensusControls {
        let c = &self.census;
        CensusControls {
            n0: c.n0,
            dedup_tol: c.dedup_tol,
            stability_margin: c.stability_margin,
            bracket_tol: c.bracket_tol,
            refine_ratio: c.refine_ratio,
            min_width: c.min_width,
            max_refine_evals: c.max_refine_evals,
        }
    }

    pub fn admissible(&self) -> Admissible {
        Admissible {
            margin: self.margin,
        }
    }

    pub fn sweep(&self) -> SweepConfig {
        let s = &self.sweep;
        SweepConfig {
            n_values: s.n_values,
            z0_window: s.z0_window,
            inv_log_range: s.inv_log_range,
            criterion: match s.criterion {
                CriterionChoice::Window => StableCriterion::Window,
                CriterionChoice::Trace => StableCriterion::Trace,
            },
            margin: self.margin,
            seed: self.seed,
        }
    }

    pub fn cover(&self) -> Result<CoverConfig, CliError> {
        let c = &self.cover;
        let mode = match c.mode {
            CoverChoice::Part2 => CoverMode::Part2,
            CoverChoice::Part3 => CoverMode::Part3,
            CoverChoice::Part4 => CoverMode::Part4,
        };
        let d = CoverConfig::default();
        Ok(CoverConfig {
            mode,
            eps: self.eps.unwrap_or(d.eps),
            z0_start: c.z0_start,
            n_steps: c.n_steps,
            margin: self.margin,
            c1: c.c1,
            eps_samples: c.eps_samples,
            big_z0: c.big_z0,
        })
    }

    pub fn painleve(&self) -> PainleveConfig {
        PainleveConfig {
            u_star_hat: self.u_star_hat,
            u_breve_star: self.painleve.u_breve_star,
            step_factor: self.painleve.step_factor,
            ..PainleveConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_file_matches_defaults() {
        let text = include_str!("../../../config/schema.toml");
        let parsed: RunConfig = toml::from_str(text).unwrap();
        assert_eq!(
            serde_json::to_value(&parsed).unwrap(),
            serde_json::to_value(RunConfig::default()).unwrap()
        );
    }

    #[test]
    fn example_model_file_builds() {
        let text = include_str!("../../../config/model_example.toml");
        let m = ModelSpec::from_toml_str(text).unwrap();
        assert!(m.validate_assumptions(256).all_passed());
    }
}
