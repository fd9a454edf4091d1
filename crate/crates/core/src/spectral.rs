//! Consecutive level-spacing ratios of a quasienergy spectrum.
//!
//! `r_n = min(s_n / s_{n−1}, s_{n−1} / s_n)` needs no unfolding. Its mean is
//! `2 ln 2 − 1 ≈ 0.386` for uncorrelated (Poisson) levels and about `0.527`
//! for the circular orthogonal ensemble; the rescaled mean
//! `|⟨r⟩ − ⟨r⟩_P| / (⟨r⟩_COE − ⟨r⟩_P)` maps these to 0 and 1.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `⟨r⟩` for Poisson statistics, `2 ln 2 − 1`.
pub const R_POISSON: f64 = 0.386_294_361_119_890_6;

/// Default `⟨r⟩` for the circular orthogonal ensemble.
pub const R_COE: f64 = 0.5269;

/// Eigenphases closer than this are numerically degenerate.
pub const MIN_SPACING: f64 = 1e-14;

/// Consecutive differences of ascending eigenphases. With `wrap`, the
/// spacing `2π − (ν_max − ν_min)` across the cut is appended last.
pub fn spacings(nu: &[f64], wrap: bool) -> Result<Vec<f64>> {
    if nu.len() < 3 {
        return Err(Error::TooFew {
            required: 3,
            got: nu.len(),
        });
    }
    let mut s = Vec::with_capacity(nu.len());
    for (k, w) in nu.windows(2).enumerate() {
        let d = w[1] - w[0];
        if d.is_nan() || d < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "eigenphases not ascending at index {k}"
            )));
        }
        if d < MIN_SPACING {
            return Err(Error::DegenerateLevels {
                index: k,
                next: k + 1,
                tolerance: MIN_SPACING,
            });
        }
        s.push(d);
    }
    if wrap {
        let d = 2.0 * PI - (nu[nu.len() - 1] - nu[0]);
        if d < MIN_SPACING {
            return Err(Error::DegenerateLevels {
                index: nu.len() - 1,
                next: 0,
                tolerance: MIN_SPACING,
            });
        }
        s.push(d);
    }
    Ok(s)
}

/// Collapses runs of eigenphases closer than [`MIN_SPACING`] (including
/// across the `±π` cut when `wrap`) onto their first member. Returns the
/// merged list and the number of dropped levels.
pub fn merge_degenerate(nu: &[f64], wrap: bool) -> (Vec<f64>, usize) {
    let mut out: Vec<f64> = Vec::with_capacity(nu.len());
    for &v in nu {
        match out.last() {
            Some(&last) if v - last < MIN_SPACING => {}
            _ => out.push(v),
        }
    }
    if wrap && out.len() > 1 && out[0] + 2.0 * PI - out[out.len() - 1] < MIN_SPACING {
        out.pop();
    }
    let dropped = nu.len() - out.len();
    if dropped > 0 {
        log::warn!("merged {dropped} numerically degenerate eigenphase(s)");
    }
    (out, dropped)
}

/// Ratios of consecutive spacings; one fewer than the spacings.
pub fn spacing_ratios(s: &[f64]) -> Result<Vec<f64>> {
    if let Some(k) = s.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "spacing {k} is not positive"
        )));
    }
    Ok(s.windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            if a < b {
                a / b
            } else {
                b / a
            }
        })
        .collect())
}

/// Reference values of the rescaling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioReference {
    pub r_poisson: f64,
    pub r_coe: f64,
}

impl Default for RatioReference {
    fn default() -> Self {
        Self {
            r_poisson: R_POISSON,
            r_coe: R_COE,
        }
    }
}

impl RatioReference {
    /// `|⟨r⟩ − r_P| / (r_COE − r_P)`, not clipped.
    pub fn rescale(&self, mean_r: f64) -> f64 {
        (mean_r - self.r_poisson).abs() / (self.r_coe - self.r_poisson)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioSummary {
    pub mean_r: f64,
    pub rescaled: f64,
    /// Levels that entered the statistic (after merging).
    pub n_levels: usize,
    pub n_ratios: usize,
    pub reference: RatioReference,
}

/// Which levels are compared with each other.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SectorMode {
    /// Ratios within each parity sector, pooled. Levels of different
    /// symmetry sectors are uncorrelated, so mixing them drags `⟨r⟩` towards
    /// the Poisson value.
    #[default]
    ParityResolved,
    /// All eigenphases as one sequence.
    FullSpectrum,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioOptions {
    pub wrap: bool,
    pub sectors: SectorMode,
    pub reference: RatioReference,
}

impl Default for RatioOptions {
    fn default() -> Self {
        Self {
            wrap: true,
            sectors: SectorMode::default(),
            reference: RatioReference::default(),
        }
    }
}

/// Ratios of one ascending sequence, after merging degenerate levels.
pub fn sequence_ratios(nu: &[f64], wrap: bool) -> Result<(Vec<f64>, usize)> {
    let (merged, _) = merge_degenerate(nu, wrap);
    let s = spacings(&merged, wrap)?;
    Ok((spacing_ratios(&s)?, merged.len()))
}

/// Mean and rescaled mean of the ratios pooled over `sequences` (each an
/// ascending list of eigenphases).
pub fn rescaled_mean_ratio(sequences: &[&[f64]], opts: &RatioOptions) -> Result<RatioSummary> {
    let mut all = Vec::new();
    let mut n_levels = 0;
    for seq in sequences {
        let (r, n) = sequence_ratios(seq, opts.wrap)?;
        all.extend(r);
        n_levels += n;
    }
    if n_levels < 10 {
        return Err(Error::TooFew {
            required: 10,
            got: n_levels,
        });
    }
    let mean_r = all.iter().sum::<f64>() / all.len() as f64;
    Ok(RatioSummary {
        mean_r,
        rescaled: opts.reference.rescale(mean_r),
        n_levels,
        n_ratios: all.len(),
        reference: opts.reference,
    })
}

/// Ratio statistics of a spectrum with per-level parities, honouring
/// [`RatioOptions::sectors`].
pub fn spectrum_ratio_summary(nu: &[f64], parity: &[f64], opts: &RatioOptions) -> Result<RatioSummary> {
    match opts.sectors {
        SectorMode::FullSpectrum => rescaled_mean_ratio(&[nu], opts),
        SectorMode::ParityResolved => {
            if parity.len() != nu.len() {
                return Err(Error::InvalidParameter(
                    "parity labels do not match the eigenphases".into(),
                ));
            }
            let sector = |even: bool| -> Vec<f64> {
                nu.iter()
                    .zip(parity)
                    .filter(|&(_, &p)| (p >= 0.0) == even)
                    .map(|(&v, _)| v)
                    .collect()
            };
            let (even, odd) = (sector(true), sector(false));
            let seqs: Vec<&[f64]> = [even.as_slice(), odd.as_slice()]
                .into_iter()
                .filter(|s| s.len() >= 3)
                .collect();
            rescaled_mean_ratio(&seqs, opts)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_level_spacings() {
        let s = spacings(&[-PI / 2.0, 0.0, PI / 2.0], true).unwrap();
        assert_eq!(s.len(), 3);
        assert!((s[0] - PI / 2.0).abs() < 1e-15);
        assert!((s[1] - PI / 2.0).abs() < 1e-15);
        assert!((s[2] - PI).abs() < 1e-15);
        assert_eq!(spacings(&[-PI / 2.0, 0.0, PI / 2.0], false).unwrap().len(), 2);
    }

    #[test]
    fn picket_fence() {
        let n = 64;
        let nu: Vec<f64> = (0..n).map(|k| -PI + 2.0 * PI * k as f64 / n as f64).collect();
        let s = spacings(&nu, true).unwrap();
        for v in &s {
            assert!((v - 2.0 * PI / n as f64).abs() < 1e-12);
        }
        let sum: f64 = s.iter().sum();
        assert!((sum - 2.0 * PI).abs() < 1e-12);
        let r = spacing_ratios(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(r, vec![1.0, 1.0]);
        let summary = rescaled_mean_ratio(&[&nu], &RatioOptions::default()).unwrap();
        assert!((summary.mean_r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn simple_ratio() {
        assert_eq!(spacing_ratios(&[1.0, 2.0]).unwrap(), vec![0.5]);
        assert!(spacing_ratios(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn degenerate_levels_rejected_then_merged() {
        let nu = [-1.0, 0.0, 0.0 + 1e-16, 1.0];
        assert!(matches!(
            spacings(&nu, true),
            Err(Error::DegenerateLevels { index: 1, .. })
        ));
        let (m, dropped) = merge_degenerate(&nu, true);
        assert_eq!(dropped, 1);
        assert_eq!(m, vec![-1.0, 0.0, 1.0]);
        assert!(spacings(&[0.0, 1.0], true).is_err());
    }

    #[test]
    fn rescaling_endpoints() {
        let refs = RatioReference::default();
        assert_eq!(refs.rescale(2.0 * 2f64.ln() - 1.0), 0.0);
        assert!((refs.rescale(0.5269) - 1.0).abs() < 1e-12);
        assert!((R_POISSON - (2.0 * 2f64.ln() - 1.0)).abs() < 1e-16);
    }

    #[test]
    fn too_few_levels() {
        let nu: Vec<f64> = (0..5).map(|k| k as f64 * 0.1).collect();
        assert!(matches!(
            rescaled_mean_ratio(&[&nu], &RatioOptions::default()),
            Err(Error::TooFew { .. })
        ));
    }

    #[test]
    fn parity_split_pools_sectors() {
        // two interleaved picket fences: mixed, ratios are not 1
        let n = 40;
        let a: Vec<f64> = (0..n).map(|k| -PI + 2.0 * PI * k as f64 / n as f64).collect();
        let b: Vec<f64> = a.iter().map(|x| x + 0.3 * 2.0 * PI / n as f64).collect();
        let mut nu: Vec<(f64, f64)> = a.iter().map(|&x| (x, 1.0)).chain(b.iter().map(|&x| (x, -1.0))).collect();
        nu.sort_by(|x, y| x.0.total_cmp(&y.0));
        let (levels, parity): (Vec<f64>, Vec<f64>) = nu.into_iter().unzip();
        let opts = RatioOptions::default();
        let sep = spectrum_ratio_summary(&levels, &parity, &opts).unwrap();
        assert!((sep.mean_r - 1.0).abs() < 1e-12);
        let full = spectrum_ratio_summary(
            &levels,
            &parity,
            &RatioOptions { sectors: SectorMode::FullSpectrum, ..opts },
        )
        .unwrap();
        assert!(full.mean_r < 0.5);
    }
}
