//! Experiment configuration: a TOML file with defaults for every field,
//! overridden by command-line flags.

use std::path::{Path, PathBuf};

use kicktop::ensemble::MInterval;
use kicktop::grid::{GridGeometry, PhaseGrid};
use kicktop::quantum::SpinQuantum;
use kicktop::spectral::{RatioOptions, RatioReference, SectorMode, R_COE, R_POISSON};
use kicktop::DEFAULT_ALPHA;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n_phi: usize,
    pub n_theta: usize,
    #[serde(default)]
    pub geometry: GridGeometry,
}

impl GridSpec {
    pub const fn square(n: usize) -> Self {
        Self {
            n_phi: n,
            n_theta: n,
            geometry: GridGeometry::EqualAngle,
        }
    }

    pub fn build(&self) -> Result<PhaseGrid, CliError> {
        PhaseGrid::new(self.n_phi, self.n_theta, self.geometry)
            .map_err(|e| CliError::Config(e.to_string()))
    }
}

/// Consecutive spin quanta `lo..=hi`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub lo: u32,
    pub hi: u32,
}

impl EnsembleSpec {
    /// `centre − half_width ..= centre + half_width`.
    pub fn centred(centre: u32, half_width: u32) -> Self {
        Self {
            lo: centre.saturating_sub(half_width),
            hi: centre + half_width,
        }
    }

    pub fn members(&self) -> impl Iterator<Item = SpinQuantum> {
        (self.lo..=self.hi).map(SpinQuantum::new)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassicalConfig {
    pub poincare_orbits: usize,
    pub poincare_kicks: usize,
    /// Grid of the Lyapunov map, also the classification grid of `M`.
    pub lyapunov_grid: GridSpec,
    pub lyapunov_kicks: usize,
    pub ks_grid: GridSpec,
    pub ks_kicks: usize,
    /// Replaces the histogram-valley threshold when set.
    pub lambda_cut: Option<f64>,
}

impl Default for ClassicalConfig {
    fn default() -> Self {
        Self {
            poincare_orbits: 225,
            poincare_kicks: 400,
            lyapunov_grid: GridSpec::square(300),
            lyapunov_kicks: 10_000,
            ks_grid: GridSpec::square(300),
            ks_kicks: 10_000,
            lambda_cut: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatioConfig {
    pub wrap: bool,
    pub sectors: SectorMode,
    pub r_coe: f64,
}

impl Default for RatioConfig {
    fn default() -> Self {
        Self {
            wrap: true,
            sectors: SectorMode::ParityResolved,
            r_coe: R_COE,
        }
    }
}

impl RatioConfig {
    pub fn options(&self) -> RatioOptions {
        RatioOptions {
            wrap: self.wrap,
            sectors: self.sectors,
            reference: RatioReference {
                r_poisson: R_POISSON,
                r_coe: self.r_coe,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OverlapConfig {
    /// Ensembles of system sizes aggregated into one `P(M)` / `f_mix` point.
    pub ensembles: Vec<EnsembleSpec>,
    /// Closed `M` intervals for `f_mix` and the power-law fits.
    pub intervals: Vec<[f64; 2]>,
    pub histogram_bins: usize,
    pub scan_width: f64,
    pub scan_step: f64,
    /// Husimi functions of the `j` states whose `M` is nearest to each
    /// target are written out.
    pub husimi_targets: Vec<f64>,
    /// Husimi functions of these eigenstate indices are written out.
    pub husimi_states: Vec<usize>,
    /// Also write the eigenvectors of `spectrum` runs.
    pub write_eigenvectors: bool,
}

impl Default for OverlapConfig {
    fn default() -> Self {
        Self {
            ensembles: vec![EnsembleSpec::centred(150, 5)],
            intervals: vec![[-0.8, 0.7], [-0.2, 0.2]],
            histogram_bins: kicktop::ensemble::DEFAULT_BINS,
            scan_width: 0.4,
            scan_step: 0.1,
            husimi_targets: Vec::new(),
            husimi_states: Vec::new(),
            write_eigenvectors: false,
        }
    }
}

impl OverlapConfig {
    pub fn intervals(&self) -> Result<Vec<MInterval>, CliError> {
        self.intervals
            .iter()
            .map(|&[lo, hi]| MInterval::new(lo, hi).map_err(|e| CliError::Config(e.to_string())))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub alpha: f64,
    pub gammas: Vec<f64>,
    /// System size of single-`j` runs.
    pub j: u32,
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    pub out_dir: PathBuf,
    pub classical: ClassicalConfig,
    pub ratio: RatioConfig,
    /// Grid of the Husimi functions. Must equal the Lyapunov grid for `M`.
    pub husimi_grid: GridSpec,
    pub overlap: OverlapConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            gammas: vec![2.6],
            j: 150,
            seed: 0,
            workers: 0,
            out_dir: PathBuf::from("out"),
            classical: ClassicalConfig::default(),
            ratio: RatioConfig::default(),
            husimi_grid: GridSpec::square(300),
            overlap: OverlapConfig::default(),
        }
    }
}

fn positive(name: &str, v: usize) -> Result<(), CliError> {
    if v == 0 {
        return Err(CliError::Config(format!("{name} must be positive")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration is always serializable")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !self.alpha.is_finite() {
            return bad(format!("alpha must be finite, got {}", self.alpha));
        }
        if let Some(g) = self.gammas.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
            return bad(format!("gamma must be finite and non-negative, got {g}"));
        }
        if self.j == 0 {
            return bad("j must be at least 1".into());
        }
        let c = &self.classical;
        positive("classical.poincare_orbits", c.poincare_orbits)?;
        positive("classical.lyapunov_kicks", c.lyapunov_kicks)?;
        positive("classical.ks_kicks", c.ks_kicks)?;
        c.lyapunov_grid.build()?;
        c.ks_grid.build()?;
        self.husimi_grid.build()?;
        if let Some(cut) = c.lambda_cut {
            if !(cut >= 0.0) {
                return bad(format!("classical.lambda_cut must be non-negative, got {cut}"));
            }
        }
        if !(self.ratio.r_coe > R_POISSON) {
            return bad(format!(
                "ratio.r_coe must exceed the Poisson value {R_POISSON}, got {}",
                self.ratio.r_coe
            ));
        }
        let o = &self.overlap;
        for e in &o.ensembles {
            if e.lo == 0 || e.lo > e.hi {
                return bad(format!("ensemble [{}, {}] is empty or contains j = 0", e.lo, e.hi));
            }
        }
        o.intervals()?;
        if o.histogram_bins < 2 {
            return bad("overlap.histogram_bins must be at least 2".into());
        }
        if !(o.scan_width > 0.0 && o.scan_width <= 2.0 && o.scan_step > 0.0) {
            return bad(format!(
                "scan window {} / step {} must be positive and fit in [-1, 1]",
                o.scan_width, o.scan_step
            ));
        }
        if let Some(t) = o.husimi_targets.iter().find(|t| !(-1.0..=1.0).contains(*t)) {
            return bad(format!("husimi target {t} lies outside [-1, 1]"));
        }
        if let Some(n) = o.husimi_states.iter().find(|&&n| n > 2 * self.j as usize) {
            return bad(format!("husimi state {n} does not exist for j = {}", self.j));
        }
        Ok(())
    }

    /// SHA-256 over the fields that influence results (not the output
    /// directory or thread count).
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.out_dir = PathBuf::new();
        canon.workers = 0;
        digest(&canon)
    }
}

/// Hex SHA-256 of the JSON serialization of `value`.
pub fn digest<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("serializable");
    hex::encode(Sha256::digest(&bytes))
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub gammas: Option<Vec<f64>>,
    pub j: Option<u32>,
    pub alpha: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(d) = &self.out_dir {
            cfg.out_dir = d.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        if let Some(g) = &self.gammas {
            cfg.gammas = g.clone();
        }
        if let Some(j) = self.j {
            cfg.j = j;
        }
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
    }
}
