//! Statistics over ensembles of overlap indices: the distribution `P(M)`,
//! fractions of mixed states and their power-law decay with system size.

use serde::{Deserialize, Serialize};

use crate::quantum::SpinQuantum;
use crate::{Error, Result};

/// Default number of `P(M)` bins over `[−1, 1]`.
pub const DEFAULT_BINS: usize = 40;

/// Mass per bin of equal-width bins on `[lo, hi]`. Bins are closed on the
/// left, the last one also on the right. Values outside are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub mass: Vec<f64>,
}

impl Histogram {
    pub fn n_bins(&self) -> usize {
        self.mass.len()
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.mass.len() as f64
    }

    pub fn center(&self, k: usize) -> f64 {
        self.lo + (k as f64 + 0.5) * self.width()
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Mass of all bins lying inside `[a, b]`.
    pub fn mass_between(&self, a: f64, b: f64) -> f64 {
        let w = self.width();
        self.mass
            .iter()
            .enumerate()
            .filter(|&(k, _)| {
                let left = self.lo + k as f64 * w;
                left >= a - 1e-12 && left + w <= b + 1e-12
            })
            .map(|(_, m)| m)
            .sum()
    }
}

/// `P(M)` over `[−1, 1]`, normalized by the number of samples.
pub fn pm_histogram(values: &[f64], n_bins: usize) -> Result<Histogram> {
    histogram(values, n_bins, -1.0, 1.0)
}

pub fn histogram(values: &[f64], n_bins: usize, lo: f64, hi: f64) -> Result<Histogram> {
    if n_bins < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 bins, got {n_bins}"
        )));
    }
    if !(lo < hi) {
        return Err(Error::InvalidParameter(format!("empty range [{lo}, {hi}]")));
    }
    if values.is_empty() {
        return Err(Error::TooFew { required: 1, got: 0 });
    }
    let mut counts = vec![0usize; n_bins];
    let width = (hi - lo) / n_bins as f64;
    for &v in values {
        if !(lo..=hi).contains(&v) {
            continue;
        }
        let k = (((v - lo) / width).floor() as usize).min(n_bins - 1);
        counts[k] += 1;
    }
    let n = values.len() as f64;
    Ok(Histogram {
        lo,
        hi,
        mass: counts.into_iter().map(|c| c as f64 / n).collect(),
    })
}

/// Closed interval `[lo, hi]` of overlap indices.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MInterval {
    pub lo: f64,
    pub hi: f64,
}

impl MInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(-1.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "interval [{lo}, {hi}] must satisfy -1 <= lo < hi <= 1"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, m: f64) -> bool {
        self.lo <= m && m <= self.hi
    }
}

/// Overlap indices of one system size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapMember {
    pub spin: SpinQuantum,
    pub gamma: f64,
    /// Clipped `M_n`, eigenphase order.
    pub m: Vec<f64>,
}

impl OverlapMember {
    pub fn hilbert_dim(&self) -> usize {
        self.spin.dim()
    }
}

/// Members sharing a kick strength, aggregated as one sample.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OverlapEnsemble {
    pub members: Vec<OverlapMember>,
}

impl OverlapEnsemble {
    pub fn new(members: Vec<OverlapMember>) -> Self {
        Self { members }
    }

    /// Mean `j` of the members.
    pub fn mean_j(&self) -> f64 {
        let n = self.members.len().max(1) as f64;
        self.members.iter().map(|m| m.spin.j() as f64).sum::<f64>() / n
    }

    /// `Σ (2j + 1)` over the members.
    pub fn hilbert_dim(&self) -> usize {
        self.members.iter().map(|m| m.hilbert_dim()).sum()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.members.iter().flat_map(|m| m.m.iter().copied())
    }

    pub fn histogram(&self, n_bins: usize) -> Result<Histogram> {
        pm_histogram(&self.values().collect::<Vec<_>>(), n_bins)
    }

    /// Fraction of all eigenstates with `M` in the interval.
    pub fn mixed_fraction(&self, interval: MInterval) -> f64 {
        let count = self.values().filter(|&m| interval.contains(m)).count();
        count as f64 / self.hilbert_dim() as f64
    }
}

/// Count of `values` in the interval over `hilbert_dim`.
pub fn mixed_fraction(values: &[f64], hilbert_dim: usize, interval: MInterval) -> f64 {
    values.iter().filter(|&&m| interval.contains(m)).count() as f64 / hilbert_dim as f64
}

/// `f ≈ amplitude · x^{−zeta}` from least squares in log-log coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub zeta: f64,
    pub amplitude: f64,
    pub r_squared: f64,
    /// Points that entered the fit.
    pub n_points: usize,
}

/// Fits `(x, f)` pairs; points with `f <= 0` are dropped with a warning.
pub fn power_law_fit(points: &[(f64, f64)]) -> Result<PowerLawFit> {
    let mut logs = Vec::with_capacity(points.len());
    for &(x, f) in points {
        if !(x > 0.0) {
            return Err(Error::InvalidParameter(format!("abscissa {x} is not positive")));
        }
        if f > 0.0 {
            logs.push((x.ln(), f.ln()));
        } else {
            log::warn!("power-law fit: dropping point x={x} with f={f}");
        }
    }
    if logs.len() < 3 {
        return Err(Error::TooFew {
            required: 3,
            got: logs.len(),
        });
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = logs.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("all abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(PowerLawFit {
        zeta: -slope,
        amplitude: intercept.exp(),
        r_squared,
        n_points: logs.len(),
    })
}

/// `f_mix` of each ensemble in an interval, as `(⟨j⟩, f_mix)` pairs.
pub fn fmix_curve(ensembles: &[OverlapEnsemble], interval: MInterval) -> Vec<(f64, f64)> {
    ensembles
        .iter()
        .map(|e| (e.mean_j(), e.mixed_fraction(interval)))
        .collect()
}

/// One window of a `ζ` scan. `fit` is `None` when some ensemble has no
/// state in the window or the fit is otherwise undefined.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanWindow {
    pub m_start: f64,
    pub interval: MInterval,
    pub fit: Option<PowerLawFit>,
}

/// Number of windows of width `width` stepped by `step` across `[−1, 1]`.
pub fn window_count(width: f64, step: f64) -> usize {
    ((2.0 - width) / step + 1e-9).floor() as usize + 1
}

/// Slides `[M, M + width]` from `M = −1` in steps of `step` and fits the
/// decay of `f_mix` in each window.
pub fn zeta_scan(ensembles: &[OverlapEnsemble], width: f64, step: f64) -> Result<Vec<ScanWindow>> {
    if !(width > 0.0 && width <= 2.0) || !(step > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "window width {width} and step {step} must be positive and fit in [-1, 1]"
        )));
    }
    (0..window_count(width, step))
        .map(|k| {
            let m_start = -1.0 + k as f64 * step;
            let interval = MInterval::new(m_start, (m_start + width).min(1.0))?;
            let points = fmix_curve(ensembles, interval);
            let fit = if points.iter().any(|p| p.1 == 0.0) {
                None
            } else {
                power_law_fit(&points).ok()
            };
            Ok(ScanWindow {
                m_start,
                interval,
                fit,
            })
        })
        .collect()
}

/// Population standard deviation of the defined `ζ` values of a scan.
pub fn zeta_spread(scan: &[ScanWindow]) -> Option<f64> {
    let z: Vec<f64> = scan.iter().filter_map(|w| w.fit.map(|f| f.zeta)).collect();
    if z.len() < 2 {
        return None;
    }
    let mean = z.iter().sum::<f64>() / z.len() as f64;
    Some((z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / z.len() as f64).sqrt())
}

/// Spin quanta `centre − half_width ..= centre + half_width`.
pub fn ensemble_range(centre: u32, half_width: u32) -> Result<Vec<SpinQuantum>> {
    if half_width >= centre {
        return Err(Error::InvalidParameter(format!(
            "ensemble around j = {centre} with half width {half_width} reaches j <= 0"
        )));
    }
    Ok((centre - half_width..=centre + half_width).map(SpinQuantum::new).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_edges() {
        let h = pm_histogram(&[1.0, 1.0, 1.0], 40).unwrap();
        assert_eq!(h.mass[39], 1.0);
        let h = pm_histogram(&[-1.0, 0.0, 0.05], 40).unwrap();
        assert!((h.mass[0] - 1.0 / 3.0).abs() < 1e-15);
        // 0 is the left edge of bin 20, 0.05 that of bin 21
        assert!((h.mass[20] - 1.0 / 3.0).abs() < 1e-15);
        assert!((h.mass[21] - 1.0 / 3.0).abs() < 1e-15);
        assert!((h.total() - 1.0).abs() < 1e-12);
        assert!(pm_histogram(&[0.0], 1).is_err());
        assert!((h.center(0) + 0.975).abs() < 1e-15);
    }

    #[test]
    fn fractions() {
        let m = [-1.0, -0.5, 0.0, 0.5, 1.0];
        assert_eq!(mixed_fraction(&m, 5, MInterval::new(-1.0, 1.0).unwrap()), 1.0);
        assert_eq!(mixed_fraction(&m, 5, MInterval::new(0.1, 0.4).unwrap()), 0.0);
        // closed on both ends
        assert_eq!(mixed_fraction(&m, 5, MInterval::new(-0.5, 0.5).unwrap()), 0.6);
        assert!(MInterval::new(0.5, 0.5).is_err());
        assert!(MInterval::new(-1.1, 0.5).is_err());
    }

    #[test]
    fn ensemble_denominator_is_summed_dimension() {
        let e = OverlapEnsemble::new(vec![
            OverlapMember { spin: SpinQuantum::new(1), gamma: 1.0, m: vec![0.0, 1.0, -1.0] },
            OverlapMember { spin: SpinQuantum::new(2), gamma: 1.0, m: vec![0.0; 5] },
        ]);
        assert_eq!(e.hilbert_dim(), 8);
        assert_eq!(e.mean_j(), 1.5);
        let f = e.mixed_fraction(MInterval::new(-0.1, 0.1).unwrap());
        assert!((f - 6.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn exact_power_law() {
        let pts: Vec<(f64, f64)> = [100.0, 150.0, 200.0, 300.0, 400.0]
            .iter()
            .map(|&x: &f64| (x, 3.0 * x.powf(-0.3)))
            .collect();
        let fit = power_law_fit(&pts).unwrap();
        assert!((fit.zeta - 0.3).abs() < 1e-12);
        assert!((fit.amplitude - 3.0).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_points_are_dropped() {
        let pts = [(1.0, 1.0), (2.0, 0.0), (3.0, 1.0 / 3.0), (4.0, 0.25)];
        let fit = power_law_fit(&pts).unwrap();
        assert_eq!(fit.n_points, 3);
        assert!((fit.zeta - 1.0).abs() < 1e-12);
        assert!(power_law_fit(&pts[..3]).is_err());
    }

    #[test]
    fn window_counting() {
        assert_eq!(window_count(0.4, 0.1), 17);
        assert_eq!(window_count(0.4, 0.05), 33);
        assert_eq!(window_count(2.0, 0.1), 1);
        assert_eq!(window_count(0.3, 0.2), 9);
    }

    #[test]
    fn ranges() {
        let r = ensemble_range(150, 5).unwrap();
        assert_eq!(r.len(), 11);
        assert_eq!(r[0].j(), 145);
        assert!(ensemble_range(3, 5).is_err());
    }
}
