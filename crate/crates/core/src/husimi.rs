//! Spin coherent states, Husimi functions and the phase-space overlap index.
//!
//! The coherent state at `(φ, θ)` has Dicke components
//!
//! ```text
//! ⟨j,m|φ,θ⟩ = √C(2j, j−m) cos^{j+m}(θ/2) sin^{j−m}(θ/2) e^{i(j−m)φ}
//! ```
//!
//! (the `ξ = tan(θ/2) e^{iφ}` form with the `(1+|ξ|²)^{−j}` factor
//! expanded). Amplitudes are evaluated in the log domain so that large `j`
//! does not overflow.
//!
//! On a grid row of fixed `θ` the overlap `⟨φ,θ|ψ⟩` is a trigonometric sum
//! in `φ` with frequencies `0..=2j`. [`CoherentFrame`] folds those
//! frequencies onto the `n_phi` uniform azimuths and evaluates the row with
//! one FFT.

use std::f64::consts::PI;
use std::sync::Arc;

use faer::c64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::classical::{ClassificationGrid, SphereAngles};
use crate::grid::PhaseGrid;
use crate::quantum::{QuasiSpectrum, SpinQuantum};
use crate::{Error, Result};

/// `ln k!` for `k = 0..=n`.
fn log_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// `count · ln x`, with `0 · ln 0 = 0`.
fn log_power(count: i64, ln_x: f64) -> f64 {
    if count == 0 {
        0.0
    } else {
        count as f64 * ln_x
    }
}

/// Real amplitudes `|⟨j,m|φ,θ⟩|` in basis order `m = −j..=j`.
fn amplitudes(spin: SpinQuantum, theta: f64, ln_fact: &[f64]) -> Vec<f64> {
    let j = spin.j() as i64;
    let half = 0.5 * theta;
    let ln_c = half.cos().abs().ln();
    let ln_s = half.sin().abs().ln();
    let mut out = (0..spin.dim())
        .map(|k| {
            let m = spin.m(k);
            let ln_binom = 0.5
                * (ln_fact[(2 * j) as usize] - ln_fact[(j + m) as usize] - ln_fact[(j - m) as usize]);
            (ln_binom + log_power(j + m, ln_c) + log_power(j - m, ln_s)).exp()
        })
        .collect::<Vec<f64>>();
    // removes the rounding drift of the log-factorial table at large j
    let norm = out.iter().map(|a| a * a).sum::<f64>().sqrt();
    out.iter_mut().for_each(|a| *a /= norm);
    out
}

/// Dicke components of the coherent state `|φ, θ⟩`. `θ = π` gives `|j, −j⟩`.
pub fn coherent_state(spin: SpinQuantum, angles: SphereAngles) -> Result<Vec<c64>> {
    if !(0.0..=PI).contains(&angles.theta) {
        return Err(Error::InvalidParameter(format!(
            "theta must lie in [0, π], got {}",
            angles.theta
        )));
    }
    let ln_fact = log_factorials(spin.dim());
    let j = spin.j() as i64;
    let amps = amplitudes(spin, angles.theta, &ln_fact);
    Ok(amps
        .into_iter()
        .enumerate()
        .map(|(k, a)| {
            let q = (j - spin.m(k)) as f64;
            let (s, c) = (q * angles.phi).sin_cos();
            c64::new(a * c, a * s)
        })
        .collect())
}

/// Amplitudes below this fraction of a row's largest one are skipped.
const AMPLITUDE_CUTOFF: f64 = 1e-18;

struct FrameRow {
    /// First frequency `q = j − m` carried by the row.
    q_start: usize,
    /// `a_{j−q}(θ) e^{−i q φ_0}` for `q` in `q_start..q_start + len`.
    coeff: Vec<c64>,
}

/// Coherent states on every cell centre of a [`PhaseGrid`], stored in
/// factorized form (one real amplitude profile per `θ` row, the `φ`
/// dependence is a pure phase).
pub struct CoherentFrame {
    spin: SpinQuantum,
    grid: PhaseGrid,
    rows: Vec<FrameRow>,
    fft: Arc<dyn Fft<f64>>,
    closure_error: f64,
}

impl std::fmt::Debug for CoherentFrame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoherentFrame")
            .field("spin", &self.spin)
            .field("grid", &self.grid)
            .field("closure_error", &self.closure_error)
            .finish()
    }
}

impl CoherentFrame {
    pub fn new(spin: SpinQuantum, grid: &PhaseGrid) -> Result<Self> {
        let ln_fact = log_factorials(spin.dim());
        let j = spin.j() as usize;
        let phi0 = grid.phi(0);
        let rows = grid
            .thetas()
            .iter()
            .map(|&theta| {
                let amps = amplitudes(spin, theta, &ln_fact);
                let top = amps.iter().copied().fold(0.0, f64::max);
                let keep = |a: f64| a > top * AMPLITUDE_CUTOFF;
                // amplitude index k corresponds to q = 2j − k
                let q_of = |k: usize| 2 * j - k;
                let k_hi = amps.iter().rposition(|&a| keep(a)).unwrap_or(0);
                let k_lo = amps.iter().position(|&a| keep(a)).unwrap_or(0);
                let q_start = q_of(k_hi);
                let coeff = (q_start..=q_of(k_lo))
                    .map(|q| {
                        let (s, c) = (-(q as f64) * phi0).sin_cos();
                        amps[2 * j - q] * c64::new(c, s)
                    })
                    .collect();
                FrameRow { q_start, coeff }
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(grid.n_phi());
        let mut frame = Self {
            spin,
            grid: grid.clone(),
            rows,
            fft,
            closure_error: 0.0,
        };
        frame.closure_error = frame.closure_probe();
        if frame.closure_error > 1e-3 {
            log::warn!(
                "coherent frame j={} on {}x{} grid: closure error {:.2e}",
                spin.j(),
                grid.n_phi(),
                grid.n_theta(),
                frame.closure_error
            );
        }
        Ok(frame)
    }

    /// Fails if the discretized closure relation is violated by more than
    /// `tolerance`.
    pub fn ensure_closure(&self, tolerance: f64) -> Result<()> {
        if self.closure_error > tolerance {
            return Err(Error::GridMismatch(format!(
                "grid too coarse for j = {}: closure error {:.3e} > {tolerance:e}",
                self.spin.j(),
                self.closure_error
            )));
        }
        Ok(())
    }

    pub fn spin(&self) -> SpinQuantum {
        self.spin
    }

    pub fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    /// `|(2j+1)/4π Σ w |⟨ψ|z⟩|² − 1|` for a fixed pseudo-random state.
    pub fn closure_error(&self) -> f64 {
        self.closure_error
    }

    fn closure_probe(&self) -> f64 {
        let mut rng = ChaCha20Rng::seed_from_u64(0x5eed);
        let mut psi: Vec<c64> = (0..self.spin.dim())
            .map(|_| c64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        let n = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        psi.iter_mut().for_each(|z| *z /= n);
        let q = self.evaluate(&psi);
        (self.normalization(&q) - 1.0).abs()
    }

    /// `(2j+1)/4π`.
    pub fn measure_factor(&self) -> f64 {
        self.spin.dim() as f64 / (4.0 * PI)
    }

    /// `(2j+1)/4π Σ w_ij f_ij`.
    pub fn normalization(&self, values: &[f64]) -> f64 {
        self.weighted_sum(values, None)
    }

    fn weighted_sum(&self, values: &[f64], labels: Option<&[i8]>) -> f64 {
        let n_phi = self.grid.n_phi();
        let mut total = 0.0;
        for (row, chunk) in values.chunks_exact(n_phi).enumerate() {
            let s: f64 = match labels {
                None => chunk.iter().sum(),
                Some(c) => chunk
                    .iter()
                    .zip(&c[row * n_phi..(row + 1) * n_phi])
                    .map(|(q, &l)| q * l as f64)
                    .sum(),
            };
            total += self.grid.weight(row) * s;
        }
        self.measure_factor() * total
    }

    /// Full Dicke vector of the coherent state at cell `(i, j)`.
    pub fn coherent_vector(&self, i: usize, j: usize) -> Vec<c64> {
        let angles = SphereAngles {
            phi: self.grid.phi(i),
            theta: self.grid.theta(j),
        };
        coherent_state(self.spin, angles).expect("grid angles are in range")
    }

    /// `|⟨φ_i,θ_j|ψ⟩|²` on all cells, flat row-major.
    fn evaluate(&self, psi: &[c64]) -> Vec<f64> {
        let n_phi = self.grid.n_phi();
        let dim = self.spin.dim();
        let mut out = vec![0.0; self.grid.len()];
        let mut buf = vec![c64::new(0.0, 0.0); n_phi];
        let mut scratch = vec![c64::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for (row, dst) in self.rows.iter().zip(out.chunks_exact_mut(n_phi)) {
            buf.iter_mut().for_each(|z| *z = c64::new(0.0, 0.0));
            let mut slot = row.q_start % n_phi;
            for (dq, coef) in row.coeff.iter().enumerate() {
                // basis index of m = j − q
                let k = dim - 1 - (row.q_start + dq);
                buf[slot] += coef * psi[k];
                slot += 1;
                if slot == n_phi {
                    slot = 0;
                }
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (d, z) in dst.iter_mut().zip(&buf) {
                *d = z.norm_sqr();
            }
        }
        out
    }
}

/// `Q_n(φ_i, θ_j) = |⟨φ_i,θ_j|ν_n⟩|²` of one state on a frame's grid.
#[derive(Clone, Debug)]
pub struct HusimiField {
    pub index: usize,
    pub spin: SpinQuantum,
    pub grid: PhaseGrid,
    /// Flat row-major values, see [`PhaseGrid::index`].
    pub values: Vec<f64>,
    normalization: f64,
}

impl HusimiField {
    /// Discretized `(2j+1)/4π ∫ Q dA`; 1 up to quadrature error.
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }
}

pub fn husimi(state: &[c64], frame: &CoherentFrame, index: usize) -> Result<HusimiField> {
    if state.len() != frame.spin.dim() {
        return Err(Error::InvalidParameter(format!(
            "state has {} components, frame expects {}",
            state.len(),
            frame.spin.dim()
        )));
    }
    let values = frame.evaluate(state);
    let normalization = frame.normalization(&values);
    Ok(HusimiField {
        index,
        spin: frame.spin,
        grid: frame.grid.clone(),
        values,
        normalization,
    })
}

/// `M = (2j+1)/4π Σ w_ij Q(φ_i,θ_j) C_ij`, unclipped.
pub fn overlap_index(field: &HusimiField, classes: &ClassificationGrid) -> Result<f64> {
    field.grid.ensure_same(&classes.grid)?;
    let n_phi = field.grid.n_phi();
    let mut total = 0.0;
    for (row, (q, c)) in field
        .values
        .chunks_exact(n_phi)
        .zip(classes.labels.chunks_exact(n_phi))
        .enumerate()
    {
        let s: f64 = q.iter().zip(c).map(|(q, &l)| q * l as f64).sum();
        total += field.grid.weight(row) * s;
    }
    Ok(field.spin.dim() as f64 / (4.0 * PI) * total)
}

/// Overlap index of one eigenstate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapRecord {
    pub n: usize,
    pub nu: f64,
    pub m_raw: f64,
    pub m_clipped: f64,
    /// Husimi normalization of the state on this grid.
    pub norm: f64,
}

/// Overlap indices of every eigenstate of `spectrum`, in eigenphase order.
pub fn overlap_indices(
    spectrum: &QuasiSpectrum,
    frame: &CoherentFrame,
    classes: &ClassificationGrid,
) -> Result<Vec<OverlapRecord>> {
    frame.grid.ensure_same(&classes.grid)?;
    if spectrum.spin != frame.spin {
        return Err(Error::InvalidParameter(format!(
            "spectrum j = {} but frame j = {}",
            spectrum.spin.j(),
            frame.spin.j()
        )));
    }
    (0..spectrum.len())
        .into_par_iter()
        .map(|n| {
            let v = spectrum.vector(n);
            let q = frame.evaluate(&v);
            let norm = frame.normalization(&q);
            let m_raw = frame.weighted_sum(&q, Some(&classes.labels));
            Ok(OverlapRecord {
                n,
                nu: spectrum.nu[n],
                m_raw,
                m_clipped: m_raw.clamp(-1.0, 1.0),
                norm,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::angles_to_vector;
    use crate::grid::GridGeometry;

    fn norm(v: &[c64]) -> f64 {
        v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    #[test]
    fn poles() {
        let spin = SpinQuantum::new(7);
        let north = coherent_state(spin, SphereAngles { phi: 1.3, theta: 0.0 }).unwrap();
        assert_eq!(north[14], c64::new(1.0, 0.0));
        assert!(north[..14].iter().all(|z| z.norm() == 0.0));
        let south = coherent_state(spin, SphereAngles { phi: 0.4, theta: PI }).unwrap();
        assert!((south[0].norm() - 1.0).abs() < 1e-14);
        assert!(south[1..].iter().all(|z| z.norm() < 1e-14));
        assert!(coherent_state(spin, SphereAngles { phi: 0.0, theta: -0.1 }).is_err());
    }

    #[test]
    fn unit_norm_even_for_large_spin() {
        for j in [1, 20, 2500] {
            let v = coherent_state(SpinQuantum::new(j), SphereAngles { phi: -2.0, theta: 1.9 }).unwrap();
            assert!((norm(&v) - 1.0).abs() < 1e-12, "j={j}");
        }
    }

    #[test]
    fn coherent_vector_matches_frame_evaluation() {
        let spin = SpinQuantum::new(9);
        let grid = PhaseGrid::new(16, 12, GridGeometry::EqualAngle).unwrap();
        let frame = CoherentFrame::new(spin, &grid).unwrap();
        let psi = coherent_state(spin, SphereAngles { phi: 0.7, theta: 1.2 }).unwrap();
        let field = husimi(&psi, &frame, 0).unwrap();
        for (i, j) in [(0, 0), (5, 3), (15, 11), (8, 6)] {
            let z = frame.coherent_vector(i, j);
            let direct: c64 = z.iter().zip(&psi).map(|(a, b)| a.conj() * b).sum();
            assert!((direct.norm_sqr() - field.value(i, j)).abs() < 1e-13);
        }
    }

    #[test]
    fn top_state_husimi_follows_overlap_law() {
        let spin = SpinQuantum::new(12);
        let grid = PhaseGrid::new(40, 30, GridGeometry::EqualAngle).unwrap();
        let frame = CoherentFrame::new(spin, &grid).unwrap();
        let mut top = vec![c64::new(0.0, 0.0); 25];
        top[24] = c64::new(1.0, 0.0);
        let field = husimi(&top, &frame, 0).unwrap();
        for j in 0..30 {
            let expect = (0.5 * grid.theta(j)).cos().powi(48);
            for i in 0..40 {
                assert!((field.value(i, j) - expect).abs() < 1e-13);
            }
        }
        assert!(field.values.iter().all(|&q| q >= 0.0));
        // largest on the row nearest the pole
        let best = (0..grid.len()).max_by(|&a, &b| field.values[a].total_cmp(&field.values[b])).unwrap();
        assert_eq!(grid.cell(best).1, 0);
    }

    #[test]
    fn overlap_of_coherent_states_closed_form() {
        let spin = SpinQuantum::new(20);
        let a = SphereAngles { phi: 0.4, theta: 1.0 };
        let b = SphereAngles { phi: -0.3, theta: 1.4 };
        let va = coherent_state(spin, a).unwrap();
        let vb = coherent_state(spin, b).unwrap();
        let direct: c64 = va.iter().zip(&vb).map(|(x, y)| x.conj() * y).sum();
        let cos_big = angles_to_vector(a).dot(&angles_to_vector(b));
        let expect = (0.5 * (1.0 + cos_big)).powi(2 * 20);
        assert!((direct.norm_sqr() - expect).abs() < 1e-10);
    }

    #[test]
    fn label_flip_negates_overlap() {
        let spin = SpinQuantum::new(10);
        let grid = PhaseGrid::new(30, 30, GridGeometry::EqualAngle).unwrap();
        let frame = CoherentFrame::new(spin, &grid).unwrap();
        let psi = coherent_state(spin, SphereAngles { phi: 1.0, theta: 2.0 }).unwrap();
        let field = husimi(&psi, &frame, 0).unwrap();
        let labels: Vec<i8> = (0..grid.len()).map(|k| if k % 7 < 3 { 1 } else { -1 }).collect();
        let c = ClassificationGrid { grid: grid.clone(), labels, threshold: 0.0 };
        let m1 = overlap_index(&field, &c).unwrap();
        let m2 = overlap_index(&field, &c.negated()).unwrap();
        assert_eq!(m1, -m2);
        let plus = overlap_index(&field, &ClassificationGrid::uniform(&grid, 1)).unwrap();
        assert!((plus - field.normalization()).abs() < 1e-14);
        let other = PhaseGrid::new(30, 31, GridGeometry::EqualAngle).unwrap();
        assert!(overlap_index(&field, &ClassificationGrid::uniform(&other, 1)).is_err());
    }

    #[test]
    fn closure_on_adequate_grid() {
        let spin = SpinQuantum::new(30);
        let grid = PhaseGrid::new(120, 120, GridGeometry::EqualAngle).unwrap();
        let frame = CoherentFrame::new(spin, &grid).unwrap();
        assert!(frame.closure_error() < 1e-3);
        frame.ensure_closure(1e-3).unwrap();
    }
}
