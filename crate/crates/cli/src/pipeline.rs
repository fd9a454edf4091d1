//! Experiment stages over the configured `γ` list.
//!
//! Every stage writes through [`Runner`], which records artifacts and
//! completed units in the manifest. Units run one after another; the
//! numerical kernels inside each unit use the rayon pool.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use kicktop::classical::{
    classify_grid, ks_entropy, lyapunov_grid, poincare_section, select_cut, ClassificationGrid,
    CutRule, CutSelection, KickParams, LyapunovGrid,
};
use kicktop::ensemble::{
    fmix_curve, power_law_fit, zeta_scan, MInterval, OverlapEnsemble, OverlapMember, PowerLawFit,
    ScanWindow,
};
use kicktop::grid::PhaseGrid;
use kicktop::husimi::{husimi, overlap_indices, CoherentFrame, OverlapRecord};
use kicktop::quantum::{
    build_floquet, diagonalize, write_eigenvectors, QuasiSpectrum, SpinQuantum, VectorDtype,
};
use kicktop::spectral::{spectrum_ratio_summary, RatioSummary};
use serde_json::json;

use crate::config::{digest, EnsembleSpec, ExperimentConfig};
use crate::manifest::{CompletedPoint, CutRecord, RunManifest};
use crate::output::{CsvData, CsvTable};
use crate::{row, CliError};

pub fn poincare_file(gamma: f64) -> String {
    format!("poincare_g{gamma}.csv")
}

pub fn lyapunov_file(gamma: f64) -> String {
    format!("lyapunov_grid_g{gamma}.csv")
}

pub fn classification_file(gamma: f64) -> String {
    format!("classification_g{gamma}.csv")
}

pub const KS_FILE: &str = "ks_entropy.csv";
pub const RSTAT_FILE: &str = "rstat.csv";

pub fn spectrum_file(j: u32, gamma: f64) -> String {
    format!("spectrum_j{j}_g{gamma}.csv")
}

pub fn eigenvector_file(j: u32, gamma: f64) -> String {
    format!("spectrum_j{j}_g{gamma}.bin")
}

pub fn overlap_file(j: u32, gamma: f64) -> String {
    format!("overlap_j{j}_g{gamma}.csv")
}

pub fn husimi_file(j: u32, gamma: f64, n: usize) -> String {
    format!("husimi_j{j}_g{gamma}_n{n}.csv")
}

pub fn pm_hist_file(e: EnsembleSpec, gamma: f64) -> String {
    format!("pm_hist_ens{}-{}_g{gamma}.csv", e.lo, e.hi)
}

pub fn fmix_file(gamma: f64) -> String {
    format!("fmix_g{gamma}.csv")
}

pub fn fmix_fit_file(gamma: f64) -> String {
    format!("fmix_fit_g{gamma}.csv")
}

pub fn zeta_scan_file(gamma: f64) -> String {
    format!("zeta_scan_g{gamma}.csv")
}

/// Aggregates written by [`Runner::run_overlap_pipeline`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Outputs {
    pub pm_hist: bool,
    pub fmix: bool,
    pub zeta_scan: bool,
    pub husimi_targets: bool,
}

impl Outputs {
    pub const ALL: Self = Self {
        pm_hist: true,
        fmix: true,
        zeta_scan: true,
        husimi_targets: true,
    };
    pub const NONE: Self = Self {
        pm_hist: false,
        fmix: false,
        zeta_scan: false,
        husimi_targets: false,
    };
}

/// Result of the overlap pipeline at one `γ`.
#[derive(Clone, Debug)]
pub struct GammaOverlap {
    pub gamma: f64,
    /// Same order as the configured ensembles; failed members are absent.
    pub ensembles: Vec<OverlapEnsemble>,
    pub fits: Vec<(MInterval, Option<PowerLawFit>)>,
    pub scan: Vec<ScanWindow>,
    /// Eigenstates nearest to each Husimi target, as `(target, j, n, M)`.
    pub targets: Vec<(f64, u32, usize, f64)>,
}

pub struct Runner {
    cfg: ExperimentConfig,
    dir: PathBuf,
    manifest: RunManifest,
    classes: BTreeMap<u64, (ClassificationGrid, CutSelection)>,
}

impl Runner {
    pub fn new(cfg: ExperimentConfig) -> Result<Self, CliError> {
        cfg.validate()?;
        let dir = cfg.out_dir.clone();
        std::fs::create_dir_all(&dir).map_err(CliError::io(&dir))?;
        let manifest = RunManifest::resume(&dir, &cfg);
        Ok(Self {
            cfg,
            dir,
            manifest,
            classes: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn out_dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    /// Writes the manifest.
    pub fn finish(&self) -> Result<(), CliError> {
        self.manifest.save(&self.dir)
    }

    fn params(&self, gamma: f64) -> Result<KickParams, CliError> {
        Ok(KickParams::new(self.cfg.alpha, gamma)?)
    }

    fn emit(&mut self, name: &str, bytes: &[u8]) -> Result<String, CliError> {
        crate::output::write_atomic(&self.dir.join(name), bytes)?;
        self.manifest.record_artifact(name, bytes);
        log::info!("wrote {}", self.dir.join(name).display());
        Ok(name.to_owned())
    }

    fn emit_csv(&mut self, name: &str, table: &CsvTable) -> Result<String, CliError> {
        self.emit(name, table.render().as_bytes())
    }

    fn skip(&self, key: &str, hash: &str) -> Option<CompletedPoint> {
        let p = self.manifest.completed(&self.dir, key, hash).cloned();
        if p.is_some() {
            log::info!("{key}: up to date, skipped");
        }
        p
    }

    fn done(&mut self, key: String, input_hash: String, artifacts: Vec<String>, summary: serde_json::Value) {
        self.manifest.mark_completed(CompletedPoint {
            key,
            input_hash,
            artifacts,
            summary,
        });
    }

    fn timed<T>(&mut self, stage: &str, f: impl FnOnce(&mut Self) -> Result<T, CliError>) -> Result<T, CliError> {
        let t0 = Instant::now();
        let out = f(self);
        self.manifest.add_timing(stage, t0.elapsed().as_secs_f64());
        out
    }

    fn exclude(&mut self, what: String) {
        log::error!("{what}");
        self.manifest.exclusions.push(what);
    }

    fn gammas(&self) -> Vec<f64> {
        self.cfg.gammas.clone()
    }

    // ---- classical ----

    pub fn run_poincare(&mut self) -> Result<(), CliError> {
        for gamma in self.gammas() {
            self.timed("poincare", |r| r.poincare(gamma))?;
        }
        Ok(())
    }

    fn poincare(&mut self, gamma: f64) -> Result<(), CliError> {
        let c = &self.cfg.classical;
        let key = format!("poincare/g{gamma}");
        let hash = digest(&json!([self.cfg.alpha, gamma, c.poincare_orbits, c.poincare_kicks, self.cfg.seed]));
        if self.skip(&key, &hash).is_some() {
            return Ok(());
        }
        let orbits = poincare_section(self.params(gamma)?, c.poincare_orbits, c.poincare_kicks, self.cfg.seed)?;
        let mut t = CsvTable::new(&["orbit_id", "kick", "phi", "theta"]);
        for (id, orbit) in orbits.iter().enumerate() {
            for (k, a) in orbit.iter().enumerate() {
                t.push(row![id, k, a.phi, a.theta]);
            }
        }
        let f = self.emit_csv(&poincare_file(gamma), &t)?;
        self.done(key, hash, vec![f], serde_json::Value::Null);
        Ok(())
    }

    pub fn run_lyapunov(&mut self) -> Result<(), CliError> {
        for gamma in self.gammas() {
            self.classification(gamma)?;
        }
        Ok(())
    }

    fn lyapunov_hash(&self, gamma: f64) -> String {
        let c = &self.cfg.classical;
        digest(&json!([self.cfg.alpha, gamma, c.lyapunov_grid, c.lyapunov_kicks, c.lambda_cut]))
    }

    /// Labels of the Lyapunov grid at `γ`, computed once per run and read
    /// back from disk when an earlier run already produced them.
    pub fn classification(&mut self, gamma: f64) -> Result<(ClassificationGrid, CutSelection), CliError> {
        if let Some(c) = self.classes.get(&gamma.to_bits()) {
            return Ok(c.clone());
        }
        let out = self.timed("lyapunov", |r| r.classify(gamma))?;
        self.classes.insert(gamma.to_bits(), out.clone());
        Ok(out)
    }

    fn classify(&mut self, gamma: f64) -> Result<(ClassificationGrid, CutSelection), CliError> {
        let key = format!("lyapunov/g{gamma}");
        let hash = self.lyapunov_hash(gamma);
        let params = self.params(gamma)?;
        let grid = self.cfg.classical.lyapunov_grid.build()?;
        let n_kicks = self.cfg.classical.lyapunov_kicks;
        let resumed = self.skip(&key, &hash).is_some();
        let ly = if resumed {
            let values = CsvData::read(&self.dir.join(lyapunov_file(gamma)))?.column("lambda")?;
            if values.len() != grid.len() {
                return Err(CliError::Config(format!("{} has the wrong size", lyapunov_file(gamma))));
            }
            LyapunovGrid {
                grid,
                values,
                params,
                n_kicks,
            }
        } else {
            lyapunov_grid(params, &grid, n_kicks)?
        };
        let cut = match self.cfg.classical.lambda_cut {
            Some(v) => CutSelection {
                lambda_cut: v,
                rule: CutRule::Override,
            },
            None => select_cut(&ly),
        };
        let classes = classify_grid(&ly, cut.lambda_cut)?;
        log::info!(
            "gamma={gamma}: lambda_cut={} ({}), chaotic fraction {:.4}",
            cut.lambda_cut,
            cut.rule.as_str(),
            classes.chaotic_fraction()
        );
        self.manifest.record_cut(CutRecord {
            gamma,
            lambda_cut: cut.lambda_cut,
            rule: cut.rule,
            chaotic_fraction: classes.chaotic_fraction(),
        });
        if !resumed {
            let g = &ly.grid;
            let mut lt = CsvTable::new(&["i", "j", "phi", "theta", "lambda"]);
            let mut ct = CsvTable::new(&["i", "j", "c"]);
            for flat in 0..g.len() {
                let (i, j) = g.cell(flat);
                lt.push(row![i, j, g.phi(i), g.theta(j), ly.values[flat]]);
                ct.push(row![i, j, classes.labels[flat]]);
            }
            let a = self.emit_csv(&lyapunov_file(gamma), &lt)?;
            let b = self.emit_csv(&classification_file(gamma), &ct)?;
            self.done(key, hash, vec![a, b], serde_json::Value::Null);
        }
        Ok((classes, cut))
    }

    pub fn run_ks_scan(&mut self) -> Result<Vec<(f64, f64)>, CliError> {
        let mut rows = Vec::new();
        for gamma in self.gammas() {
            let v = self.timed("ks", |r| r.ks(gamma))?;
            rows.push((gamma, v));
        }
        let mut t = CsvTable::new(&["gamma", "S_KS"]);
        for &(g, s) in &rows {
            t.push(row![g, s]);
        }
        if !rows.is_empty() {
            self.emit_csv(KS_FILE, &t)?;
        }
        Ok(rows)
    }

    fn ks(&mut self, gamma: f64) -> Result<f64, CliError> {
        let c = &self.cfg.classical;
        let key = format!("ks/g{gamma}");
        let hash = digest(&json!([self.cfg.alpha, gamma, c.ks_grid, c.ks_kicks]));
        if let Some(v) = self.skip(&key, &hash).and_then(|p| p.summary.as_f64()) {
            return Ok(v);
        }
        let grid = c.ks_grid.build()?;
        let s = ks_entropy(&lyapunov_grid(self.params(gamma)?, &grid, c.ks_kicks)?);
        log::info!("gamma={gamma}: S_KS={s}");
        self.done(key, hash, Vec::new(), json!(s));
        Ok(s)
    }

    // ---- spectra ----

    fn spectrum_of(&self, j: u32, gamma: f64) -> Result<QuasiSpectrum, CliError> {
        let f = build_floquet(SpinQuantum::new(j), self.params(gamma)?)?;
        Ok(diagonalize(&f)?)
    }

    pub fn run_spectrum(&mut self) -> Result<(), CliError> {
        for gamma in self.gammas() {
            self.timed("spectrum", |r| {
                let j = r.cfg.j;
                let key = format!("spectrum/j{j}/g{gamma}");
                let hash = digest(&json!([r.cfg.alpha, gamma, j, r.cfg.overlap.write_eigenvectors]));
                if r.skip(&key, &hash).is_some() {
                    return Ok(());
                }
                let s = r.spectrum_of(j, gamma)?;
                let mut t = CsvTable::new(&["n", "nu_n"]);
                for (n, &nu) in s.nu.iter().enumerate() {
                    t.push(row![n, nu]);
                }
                let mut files = vec![r.emit_csv(&spectrum_file(j, gamma), &t)?];
                if r.cfg.overlap.write_eigenvectors {
                    let mut buf = Vec::new();
                    write_eigenvectors(&mut buf, &s, r.params(gamma)?, VectorDtype::Complex128)?;
                    files.push(r.emit(&eigenvector_file(j, gamma), &buf)?);
                }
                r.done(key, hash, files, serde_json::Value::Null);
                Ok(())
            })?;
        }
        Ok(())
    }

    /// Ratio statistic per `γ` at the configured `j`. A failing `γ` point is
    /// logged, recorded as an exclusion and left out of `rstat.csv`.
    pub fn run_rstat_scan(&mut self) -> Result<Vec<(f64, RatioSummary)>, CliError> {
        let mut rows = Vec::new();
        for gamma in self.gammas() {
            match self.timed("rstat", |r| r.rstat(gamma)) {
                Ok(s) => rows.push((gamma, s)),
                Err(CliError::Numerical(e)) => {
                    self.exclude(format!("rstat j={} gamma={gamma}: {e}", self.cfg.j));
                }
                Err(e) => return Err(e),
            }
        }
        let mut t = CsvTable::new(&["gamma", "j", "mean_r", "rescaled", "n_levels"]);
        for (g, s) in &rows {
            t.push(row![*g, self.cfg.j, s.mean_r, s.rescaled, s.n_levels]);
        }
        if !self.cfg.gammas.is_empty() {
            self.emit_csv(RSTAT_FILE, &t)?;
        }
        Ok(rows)
    }

    fn rstat(&mut self, gamma: f64) -> Result<RatioSummary, CliError> {
        let j = self.cfg.j;
        let key = format!("rstat/j{j}/g{gamma}");
        let opts = self.cfg.ratio.options();
        let hash = digest(&json!([self.cfg.alpha, gamma, j, opts]));
        if let Some(p) = self.skip(&key, &hash) {
            if let Ok(s) = serde_json::from_value(p.summary) {
                return Ok(s);
            }
        }
        let s = self.spectrum_of(j, gamma)?;
        let summary = spectrum_ratio_summary(&s.nu, &s.parity, &opts)?;
        log::info!("gamma={gamma} j={j}: <r>={} rescaled={}", summary.mean_r, summary.rescaled);
        self.done(key, hash, Vec::new(), serde_json::to_value(summary).expect("serializable"));
        Ok(summary)
    }

    // ---- Husimi and overlap ----

    fn frame(&self, spin: SpinQuantum) -> Result<CoherentFrame, CliError> {
        Ok(CoherentFrame::new(spin, &self.cfg.husimi_grid.build()?)?)
    }

    fn emit_husimi(&mut self, s: &QuasiSpectrum, frame: &CoherentFrame, gamma: f64, n: usize) -> Result<String, CliError> {
        let f = husimi(&s.vector(n), frame, n)?;
        let g = &f.grid;
        let mut t = CsvTable::new(&["i", "j", "phi", "theta", "Q"]);
        for flat in 0..g.len() {
            let (i, jj) = g.cell(flat);
            t.push(row![i, jj, g.phi(i), g.theta(jj), f.values[flat]]);
        }
        self.emit_csv(&husimi_file(s.spin.j(), gamma, n), &t)
    }

    /// Husimi functions of the configured state indices at `j`.
    pub fn run_husimi(&mut self) -> Result<(), CliError> {
        let states = self.cfg.overlap.husimi_states.clone();
        if states.is_empty() {
            log::warn!("no husimi_states configured; nothing to write");
            return Ok(());
        }
        for gamma in self.gammas() {
            self.timed("husimi", |r| {
                let j = r.cfg.j;
                let key = format!("husimi/j{j}/g{gamma}");
                let hash = digest(&json!([r.cfg.alpha, gamma, j, r.cfg.husimi_grid, states]));
                if r.skip(&key, &hash).is_some() {
                    return Ok(());
                }
                let s = r.spectrum_of(j, gamma)?;
                let frame = r.frame(s.spin)?;
                let mut files = Vec::new();
                for &n in &states {
                    files.push(r.emit_husimi(&s, &frame, gamma, n)?);
                }
                r.done(key, hash, files, serde_json::Value::Null);
                Ok(())
            })?;
        }
        Ok(())
    }

    fn check_grids(&self) -> Result<(), CliError> {
        if self.cfg.husimi_grid != self.cfg.classical.lyapunov_grid {
            return Err(CliError::Config(
                "overlap indices need husimi_grid equal to classical.lyapunov_grid".into(),
            ));
        }
        Ok(())
    }

    /// Overlap records of one system size, from disk when up to date.
    fn member(&mut self, j: u32, gamma: f64, classes: &ClassificationGrid) -> Result<Vec<f64>, CliError> {
        let key = format!("overlap/j{j}/g{gamma}");
        let hash = digest(&json!([self.lyapunov_hash(gamma), j, self.cfg.husimi_grid]));
        if self.skip(&key, &hash).is_some() {
            return CsvData::read(&self.dir.join(overlap_file(j, gamma)))?.column("M_clipped");
        }
        let s = self.spectrum_of(j, gamma)?;
        let frame = self.frame(s.spin)?;
        let recs: Vec<OverlapRecord> = overlap_indices(&s, &frame, classes)?;
        let mut t = CsvTable::new(&["n", "nu_n", "M_raw", "M_clipped"]);
        for r in &recs {
            t.push(row![r.n, r.nu, r.m_raw, r.m_clipped]);
        }
        let f = self.emit_csv(&overlap_file(j, gamma), &t)?;
        self.done(key, hash, vec![f], serde_json::Value::Null);
        Ok(recs.iter().map(|r| r.m_clipped).collect())
    }

    /// Overlap indices at the configured single `j`.
    pub fn run_overlap(&mut self) -> Result<(), CliError> {
        self.check_grids()?;
        for gamma in self.gammas() {
            let (classes, _) = self.classification(gamma)?;
            let j = self.cfg.j;
            self.timed("overlap", |r| r.member(j, gamma, &classes))?;
        }
        Ok(())
    }

    /// Every ensemble member through diagonalization, Husimi evaluation
    /// and `M`, then the selected aggregates.
    ///
    /// A member that fails numerically is logged, recorded as an exclusion
    /// and left out; the `f_mix` denominators count only surviving members.
    pub fn run_overlap_pipeline(&mut self, outputs: Outputs) -> Result<Vec<GammaOverlap>, CliError> {
        self.check_grids()?;
        let mut all = Vec::new();
        for gamma in self.gammas() {
            let (classes, _) = self.classification(gamma)?;
            let specs = self.cfg.overlap.ensembles.clone();
            let mut ensembles = Vec::new();
            for spec in &specs {
                let mut members = Vec::new();
                for spin in spec.members() {
                    match self.timed("overlap", |r| r.member(spin.j(), gamma, &classes)) {
                        Ok(m) => members.push(OverlapMember { spin, gamma, m }),
                        Err(CliError::Numerical(e)) => {
                            self.exclude(format!("overlap j={} gamma={gamma}: {e}", spin.j()));
                        }
                        Err(e) => return Err(e),
                    }
                }
                if members.is_empty() {
                    self.exclude(format!("ensemble [{}, {}] gamma={gamma}: no members left", spec.lo, spec.hi));
                }
                ensembles.push((*spec, OverlapEnsemble::new(members)));
            }
            let result = self.timed("aggregate", |r| r.aggregate(gamma, &ensembles, &classes, outputs))?;
            all.push(result);
        }
        Ok(all)
    }

    fn aggregate(
        &mut self,
        gamma: f64,
        ensembles: &[(EnsembleSpec, OverlapEnsemble)],
        classes: &ClassificationGrid,
        outputs: Outputs,
    ) -> Result<GammaOverlap, CliError> {
        let o = self.cfg.overlap.clone();
        if outputs.pm_hist {
            for (spec, e) in ensembles.iter().filter(|(_, e)| !e.members.is_empty()) {
                let h = e.histogram(o.histogram_bins)?;
                let mut t = CsvTable::new(&["bin_center", "P"]);
                for (k, &p) in h.mass.iter().enumerate() {
                    t.push(row![h.center(k), p]);
                }
                self.emit_csv(&pm_hist_file(*spec, gamma), &t)?;
            }
        }
        let live: Vec<OverlapEnsemble> = ensembles
            .iter()
            .filter(|(_, e)| !e.members.is_empty())
            .map(|(_, e)| e.clone())
            .collect();
        let mut fits = Vec::new();
        let mut ft = CsvTable::new(&["mean_j", "interval_lo", "interval_hi", "f_mix"]);
        let mut fit_t = CsvTable::new(&["interval_lo", "interval_hi", "zeta", "amplitude", "r2", "n_points"]);
        for iv in o.intervals()? {
            let curve = fmix_curve(&live, iv);
            for &(mj, f) in &curve {
                ft.push(row![mj, iv.lo, iv.hi, f]);
            }
            let fit = power_law_fit(&curve).ok();
            match fit {
                Some(p) => fit_t.push(row![iv.lo, iv.hi, p.zeta, p.amplitude, p.r_squared, p.n_points]),
                None => fit_t.push(row![iv.lo, iv.hi, None::<f64>, None::<f64>, None::<f64>, 0usize]),
            }
            fits.push((iv, fit));
        }
        let scan = if live.is_empty() {
            Vec::new()
        } else {
            zeta_scan(&live, o.scan_width, o.scan_step)?
        };
        if outputs.fmix {
            self.emit_csv(&fmix_file(gamma), &ft)?;
            self.emit_csv(&fmix_fit_file(gamma), &fit_t)?;
        }
        if outputs.zeta_scan {
            let mut t = CsvTable::new(&["M_start", "zeta", "r2"]);
            for w in &scan {
                t.push(row![w.m_start, w.fit.map(|f| f.zeta), w.fit.map(|f| f.r_squared)]);
            }
            self.emit_csv(&zeta_scan_file(gamma), &t)?;
        }
        let targets = self.nearest_targets(ensembles);
        if outputs.husimi_targets && !targets.is_empty() {
            self.dump_targets(gamma, &targets, classes.grid.clone())?;
        }
        Ok(GammaOverlap {
            gamma,
            ensembles: ensembles.iter().map(|(_, e)| e.clone()).collect(),
            fits,
            scan,
            targets,
        })
    }

    fn nearest_targets(&self, ensembles: &[(EnsembleSpec, OverlapEnsemble)]) -> Vec<(f64, u32, usize, f64)> {
        let mut out = Vec::new();
        for &t in &self.cfg.overlap.husimi_targets {
            let best = ensembles
                .iter()
                .flat_map(|(_, e)| &e.members)
                .flat_map(|m| m.m.iter().enumerate().map(move |(n, &v)| (m.spin.j(), n, v)))
                .min_by(|a, b| (a.2 - t).abs().total_cmp(&(b.2 - t).abs()));
            if let Some((j, n, m)) = best {
                out.push((t, j, n, m));
            }
        }
        out
    }

    fn dump_targets(&mut self, gamma: f64, targets: &[(f64, u32, usize, f64)], grid: PhaseGrid) -> Result<(), CliError> {
        let mut by_j: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for &(t, j, n, m) in targets {
            log::info!("target M={t}: j={j} n={n} M={m}");
            by_j.entry(j).or_default().push(n);
        }
        for (j, states) in by_j {
            let s = self.spectrum_of(j, gamma)?;
            let frame = CoherentFrame::new(s.spin, &grid)?;
            for n in states {
                self.emit_husimi(&s, &frame, gamma, n)?;
            }
        }
        Ok(())
    }
}
