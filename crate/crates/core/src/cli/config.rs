//! Problem configuration read from TOML.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::{FactorVector, Interval, Orthotope, TimeGrid, Trajectory};
use crate::estimation::FitConfig;
use crate::loss::{LossConfig, UncertaintyLevel};
use crate::models::{
    additive_model, decay_model, identity_model, identity_with_dummies, interaction_model, DengueConstants,
    DengueModel, IntegratorConfig, Model,
};
use crate::oat::OatConfig;
use crate::shrink::ShrinkConfig;

use super::CliError;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default)]
    pub seed: u64,
    pub model: ModelSection,
    pub grid: GridSection,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub lambda: LambdaSection,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    pub factors: Vec<FactorSection>,
    pub data: Option<DataSection>,
    /// JSON map `name -> value` (e.g. the `nominal.json` of a fit run).
    pub nominal_file: Option<PathBuf>,
    #[serde(default)]
    pub oat: OatSection,
    #[serde(default)]
    pub shrink: ShrinkSection,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub sa: SaSection,
    #[serde(default)]
    pub ua: UaSection,
    #[serde(default)]
    pub converge: ConvergeSection,
    #[serde(default)]
    pub study: StudySection,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub name: String,
    /// Dengue: constant total human population.
    pub total_humans: Option<f64>,
    /// Dengue: infected humans at the first grid point.
    pub initial_infected: Option<f64>,
    /// Identity model: number of inert extra factors.
    #[serde(default)]
    pub dummies: usize,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub points: Option<Vec<f64>>,
    pub start: Option<f64>,
    pub step: Option<f64>,
    pub count: Option<usize>,
}

/// Uncertainty level, given either as a percent or as a multiplier.
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaSection {
    pub percent: Option<f64>,
    pub multiplier: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FactorSection {
    pub name: String,
    pub range: Option<[f64; 2]>,
    pub nominal: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// `"nominal"`: simulate the configured nominal factors.
    pub synthetic: Option<String>,
    /// Two-column `time,cases` CSV.
    pub file: Option<PathBuf>,
    /// Standard deviation of multiplicative Gaussian noise on synthetic data.
    #[serde(default)]
    pub noise: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct OatSection {
    pub up: f64,
    pub down: f64,
    pub imax: usize,
    pub band: f64,
}

impl Default for OatSection {
    fn default() -> Self {
        let d = OatConfig::default();
        Self { up: d.up, down: d.down, imax: d.imax, band: d.band }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShrinkSection {
    pub n: usize,
    pub imax: usize,
    pub eta: f64,
    pub xi: f64,
    pub delta: f64,
}

impl Default for ShrinkSection {
    fn default() -> Self {
        let d = ShrinkConfig::default();
        Self { n: d.n, imax: d.imax, eta: d.eta, xi: d.xi, delta: d.delta }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub n_starts: usize,
    pub tol: f64,
    pub max_evals: usize,
    pub filter: f64,
}

impl Default for FitSection {
    fn default() -> Self {
        let d = FitConfig::default();
        Self { n_starts: d.n_starts, tol: d.tol, max_evals: d.max_evals, filter: d.filter }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaSection {
    pub n: usize,
    pub box_file: Option<PathBuf>,
}

impl Default for SaSection {
    fn default() -> Self {
        Self { n: 3000, box_file: None }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct UaSection {
    pub n: usize,
    pub box_file: Option<PathBuf>,
}

impl Default for UaSection {
    fn default() -> Self {
        Self { n: 1000, box_file: None }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergeSection {
    pub sizes: Vec<usize>,
    pub box_file: Option<PathBuf>,
}

impl Default for ConvergeSection {
    fn default() -> Self {
        Self { sizes: vec![500, 1000, 2000, 3000], box_file: None }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySection {
    pub repeats: usize,
}

impl Default for StudySection {
    fn default() -> Self {
        Self { repeats: 10 }
    }
}

/// A validated configuration bound to the directory it was read from.
#[derive(Clone)]
pub struct Problem {
    pub config: ProblemConfig,
    pub base_dir: PathBuf,
    pub model: Arc<dyn Model>,
    pub grid: TimeGrid,
    pub search: Orthotope,
    pub lambda: f64,
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem")
            .field("model", &self.model.name())
            .field("search", &self.search)
            .finish()
    }
}

fn cfg_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

pub fn build_model(section: &ModelSection) -> Result<Arc<dyn Model>, CliError> {
    let dengue_only = section.total_humans.is_some() || section.initial_infected.is_some();
    if dengue_only && section.name != "dengue" {
        return Err(cfg_err(format!(
            "model `{}` takes no total_humans/initial_infected",
            section.name
        )));
    }
    let model: Arc<dyn Model> = match section.name.as_str() {
        "identity" if section.dummies > 0 => Arc::new(identity_with_dummies(section.dummies)),
        "identity" => Arc::new(identity_model()),
        "additive" => Arc::new(additive_model()),
        "interaction" => Arc::new(interaction_model()),
        "decay" => Arc::new(decay_model()),
        "dengue" => {
            let d = DengueConstants::default();
            let c = DengueConstants {
                total_humans: section.total_humans.unwrap_or(d.total_humans),
                initial_infected: section.initial_infected.unwrap_or(d.initial_infected),
            };
            Arc::new(DengueModel::new(c).map_err(|e| cfg_err(format!("model: {e}")))?)
        }
        other => {
            return Err(cfg_err(format!(
                "unknown model `{other}` (expected identity, additive, interaction, decay or dengue)"
            )))
        }
    };
    Ok(model)
}

impl GridSection {
    pub fn build(&self) -> Result<TimeGrid, CliError> {
        let grid = match (&self.points, self.start, self.step, self.count) {
            (Some(p), None, None, None) => TimeGrid::new(p.clone()),
            (None, Some(s), Some(h), Some(n)) => TimeGrid::uniform(s, h, n),
            _ => return Err(cfg_err("grid: give either `points` or all of `start`, `step`, `count`")),
        };
        grid.map_err(|e| cfg_err(format!("grid: {e}")))
    }
}

impl LambdaSection {
    pub fn multiplier(&self) -> Result<f64, CliError> {
        let level = match (self.percent, self.multiplier) {
            (Some(p), None) => UncertaintyLevel::percent(p),
            (None, Some(m)) => UncertaintyLevel::multiplier(m),
            (None, None) => UncertaintyLevel::percent(30.0),
            (Some(_), Some(_)) => return Err(cfg_err("lambda: give `percent` or `multiplier`, not both")),
        };
        level.map(|l| l.value()).map_err(|e| cfg_err(format!("lambda: {e}")))
    }
}

impl ProblemConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| cfg_err(e.to_string()))
    }

    pub fn bind(self, base_dir: &Path) -> Result<Problem, CliError> {
        let model = build_model(&self.model)?;
        let grid = self.grid.build()?;
        let lambda = self.lambda.multiplier()?;
        LossConfig::new(self.loss.alpha).map_err(|e| cfg_err(format!("loss: {e}")))?;

        let expected = model.factor_names();
        if self.factors.len() != expected.len() {
            return Err(cfg_err(format!(
                "model `{}` has {} factors ({}), config lists {}",
                model.name(),
                expected.len(),
                expected.join(", "),
                self.factors.len()
            )));
        }
        let mut intervals = Vec::with_capacity(self.factors.len());
        for (f, want) in self.factors.iter().zip(expected) {
            if &f.name != want {
                return Err(cfg_err(format!("factor `{}` found where `{want}` was expected", f.name)));
            }
            let [lo, hi] = f
                .range
                .ok_or_else(|| cfg_err(format!("factor `{}`: missing range", f.name)))?;
            let iv = Interval::new(lo, hi)
                .map_err(|e| cfg_err(format!("factor `{}`: range {e}", f.name)))?;
            if let Some(v) = f.nominal {
                if !iv.contains(v) {
                    return Err(cfg_err(format!(
                        "factor `{}`: nominal {v} lies outside [{lo}, {hi}]",
                        f.name
                    )));
                }
            }
            intervals.push(iv);
        }
        let names = self.factors.iter().map(|f| f.name.clone()).collect();
        let search = Orthotope::new(names, intervals).map_err(|e| cfg_err(e.to_string()))?;

        if let Some(d) = &self.data {
            match (&d.synthetic, &d.file) {
                (Some(s), None) if s == "nominal" => {}
                (Some(s), None) => {
                    return Err(cfg_err(format!("data.synthetic must be \"nominal\", got \"{s}\"")))
                }
                (None, Some(_)) => {}
                _ => return Err(cfg_err("data: give exactly one of `synthetic` or `file`")),
            }
            if !(d.noise >= 0.0 && d.noise.is_finite()) {
                return Err(cfg_err("data.noise must be a finite non-negative number"));
            }
        }

        Ok(Problem {
            config: self,
            base_dir: base_dir.to_path_buf(),
            model,
            grid,
            search,
            lambda,
        })
    }
}

impl Problem {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn oat_config(&self) -> OatConfig {
        let o = &self.config.oat;
        OatConfig { lambda: self.lambda, up: o.up, down: o.down, imax: o.imax, band: o.band }
    }

    pub fn shrink_config(&self, seed: u64) -> ShrinkConfig {
        let s = &self.config.shrink;
        ShrinkConfig { lambda: self.lambda, n: s.n, imax: s.imax, eta: s.eta, xi: s.xi, delta: s.delta, seed }
    }

    pub fn fit_config(&self, seed: u64) -> FitConfig {
        let f = &self.config.fit;
        FitConfig { n_starts: f.n_starts, tol: f.tol, max_evals: f.max_evals, filter: f.filter, seed }
    }

    pub fn loss_config(&self) -> LossConfig {
        self.config.loss
    }

    /// Nominal factors from `nominal_file` if set, else from the factor table.
    pub fn nominal(&self) -> Result<FactorVector, CliError> {
        let values: Vec<f64> = if let Some(path) = &self.config.nominal_file {
            let path = self.resolve(path);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| cfg_err(format!("nominal_file {}: {e}", path.display())))?;
            let map: std::collections::BTreeMap<String, f64> = serde_json::from_str(&text)
                .map_err(|e| cfg_err(format!("nominal_file {}: {e}", path.display())))?;
            self.search
                .names()
                .iter()
                .map(|n| {
                    map.get(n)
                        .copied()
                        .ok_or_else(|| cfg_err(format!("nominal_file lacks factor `{n}`")))
                })
                .collect::<Result<_, _>>()?
        } else {
            self.config
                .factors
                .iter()
                .map(|f| f.nominal.ok_or_else(|| cfg_err(format!("factor `{}`: missing nominal", f.name))))
                .collect::<Result<_, _>>()?
        };
        let x = FactorVector(values);
        if !self.search.contains(&x).unwrap_or(false) {
            return Err(CliError::Numeric("nominal point lies outside the search box".into()));
        }
        Ok(x)
    }

    /// Data trajectory from a `time,cases` CSV whose times match the grid.
    pub fn read_data_file(&self, path: &Path) -> Result<Trajectory, CliError> {
        let path = self.resolve(path);
        let mut rd = csv::Reader::from_path(&path)
            .map_err(|e| cfg_err(format!("data file {}: {e}", path.display())))?;
        let mut times = Vec::new();
        let mut cases = Vec::new();
        for (i, rec) in rd.records().enumerate() {
            let rec = rec.map_err(|e| cfg_err(format!("data file {}: {e}", path.display())))?;
            let parse = |j: usize| -> Result<f64, CliError> {
                rec.get(j)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or_else(|| cfg_err(format!("data file {} line {}: expected two numbers", path.display(), i + 2)))
            };
            times.push(parse(0)?);
            cases.push(parse(1)?);
        }
        if times != self.grid.points() {
            return Err(cfg_err(format!(
                "data file {}: times do not match the configured grid",
                path.display()
            )));
        }
        Trajectory::new(self.grid.clone(), cases).map_err(|e| cfg_err(e.to_string()))
    }

    /// Box read from a `factor,lower,upper,...` CSV, or the search box when `file` is `None`.
    pub fn read_box(&self, file: Option<&PathBuf>) -> Result<Orthotope, CliError> {
        let Some(file) = file else {
            return Ok(self.search.clone());
        };
        let path = self.resolve(file);
        let mut rd = csv::Reader::from_path(&path)
            .map_err(|e| cfg_err(format!("box file {}: {e}", path.display())))?;
        let headers = rd
            .headers()
            .map_err(|e| cfg_err(format!("box file {}: {e}", path.display())))?
            .clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| cfg_err(format!("box file {}: no `{name}` column", path.display())))
        };
        let (cf, cl, cu) = (col("factor")?, col("lower")?, col("upper")?);
        let mut found = std::collections::BTreeMap::new();
        for rec in rd.records() {
            let rec = rec.map_err(|e| cfg_err(format!("box file {}: {e}", path.display())))?;
            let num = |j: usize| -> Result<f64, CliError> {
                rec[j]
                    .parse::<f64>()
                    .map_err(|_| cfg_err(format!("box file {}: bad number `{}`", path.display(), &rec[j])))
            };
            found.insert(rec[cf].to_string(), (num(cl)?, num(cu)?));
        }
        let intervals = self
            .search
            .names()
            .iter()
            .map(|n| {
                let (lo, hi) = found
                    .get(n)
                    .copied()
                    .ok_or_else(|| cfg_err(format!("box file lacks factor `{n}`")))?;
                Interval::new(lo, hi).map_err(|e| cfg_err(format!("box file, factor `{n}`: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Orthotope::new(self.search.names().to_vec(), intervals).map_err(|e| cfg_err(e.to_string()))
    }
}
