//! Classical kicked top.
//!
//! One kick rotates the unit vector `X = (X, Y, Z)` about the x axis by the
//! precession angle `α` and then about the z axis by the state dependent
//! angle `Ω = γ (Y sin α + Z cos α)`:
//!
//! ```text
//! X' = cos Ω X − cos α sin Ω Y + sin α sin Ω Z
//! Y' = sin Ω X + cos α cos Ω Y − sin α cos Ω Z
//! Z' =             sin α     Y + cos α       Z
//! ```
//!
//! The largest Lyapunov exponent is estimated by propagating a tangent vector
//! with the analytic Jacobian of this map and renormalizing it after every
//! kick.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid::PhaseGrid;
use crate::{Error, Result};

/// Precession angle `α` (radians) and kick strength `γ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KickParams {
    pub alpha: f64,
    pub gamma: f64,
}

impl KickParams {
    pub fn new(alpha: f64, gamma: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!("alpha must be finite, got {alpha}")));
        }
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma must be finite and non-negative, got {gamma}"
            )));
        }
        Ok(Self { alpha, gamma })
    }
}

/// Point on the unit sphere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitSpinVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl UnitSpinVector {
    /// Normalizes `(x, y, z)` onto the sphere.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (x * x + y * y + z * z).sqrt();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "cannot normalize ({x}, {y}, {z})"
            )));
        }
        Ok(Self {
            x: x / n,
            y: y / n,
            z: z / n,
        })
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(&self, other: &UnitSpinVector) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }
}

/// Azimuth `φ ∈ [−π, π)` and polar angle `θ ∈ [0, π]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphereAngles {
    pub phi: f64,
    pub theta: f64,
}

/// Infinitesimal displacement of a [`UnitSpinVector`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TangentVector {
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
}

impl TangentVector {
    pub fn norm(&self) -> f64 {
        (self.dx * self.dx + self.dy * self.dy + self.dz * self.dz).sqrt()
    }

    /// The default initial direction `(1, 1, 1)/√3`.
    pub fn diagonal() -> Self {
        let c = 1.0 / 3f64.sqrt();
        Self {
            dx: c,
            dy: c,
            dz: c,
        }
    }

    fn to_array(self) -> [f64; 3] {
        [self.dx, self.dy, self.dz]
    }
}

pub fn angles_to_vector(angles: SphereAngles) -> UnitSpinVector {
    let (sp, cp) = angles.phi.sin_cos();
    let (st, ct) = angles.theta.sin_cos();
    UnitSpinVector {
        x: cp * st,
        y: sp * st,
        z: ct,
    }
}

/// Chart of a unit vector. At the poles `φ` is undefined and reported as 0.
pub fn vector_to_angles(v: UnitSpinVector) -> SphereAngles {
    let theta = v.z.clamp(-1.0, 1.0).acos();
    let phi = if v.x == 0.0 && v.y == 0.0 {
        0.0
    } else {
        wrap_phi(v.y.atan2(v.x))
    };
    SphereAngles { phi, theta }
}

/// `atan2` returns `(−π, π]`; fold `π` onto `−π`.
fn wrap_phi(phi: f64) -> f64 {
    if phi >= PI {
        phi - 2.0 * PI
    } else {
        phi
    }
}

/// A discrete map that can carry a tangent vector along with its state.
pub trait TangentMap: Sync {
    /// Advances `state` by one step and maps `tangent` through the Jacobian
    /// evaluated at the pre-step state.
    fn advance(&self, state: &mut [f64; 3], tangent: &mut [f64; 3]);

    /// Advances `state` only.
    fn step(&self, state: &mut [f64; 3]);
}

/// [`KickParams`] with the trigonometric constants cached.
#[derive(Clone, Copy, Debug)]
pub struct KickedTopMap {
    gamma: f64,
    sin_a: f64,
    cos_a: f64,
}

impl KickedTopMap {
    pub fn new(params: KickParams) -> Self {
        let (sin_a, cos_a) = params.alpha.sin_cos();
        Self {
            gamma: params.gamma,
            sin_a,
            cos_a,
        }
    }

    /// Rotation about x by `α`, returning `(Y1, Z1)`.
    #[inline(always)]
    fn precess(&self, y: f64, z: f64) -> (f64, f64) {
        (self.cos_a * y - self.sin_a * z, self.sin_a * y + self.cos_a * z)
    }

    /// Analytic Jacobian `∂X_{n+1}/∂X_n` at `state`.
    pub fn jacobian(&self, state: &[f64; 3]) -> [[f64; 3]; 3] {
        let [x, y, z] = *state;
        let (y1, z1) = self.precess(y, z);
        let (s, c) = (self.gamma * z1).sin_cos();
        let x_new = c * x - s * y1;
        let y_new = s * x + c * y1;
        // ∂Ω/∂(X, Y, Z) = γ (0, sin α, cos α)
        let gy = self.gamma * self.sin_a;
        let gz = self.gamma * self.cos_a;
        [
            [c, -s * self.cos_a - y_new * gy, s * self.sin_a - y_new * gz],
            [s, c * self.cos_a + x_new * gy, -c * self.sin_a + x_new * gz],
            [0.0, self.sin_a, self.cos_a],
        ]
    }
}

impl TangentMap for KickedTopMap {
    #[inline]
    fn advance(&self, state: &mut [f64; 3], tangent: &mut [f64; 3]) {
        let [x, y, z] = *state;
        let (y1, z1) = self.precess(y, z);
        let (s, c) = (self.gamma * z1).sin_cos();
        let x_new = c * x - s * y1;
        let y_new = s * x + c * y1;

        let [dx, dy, dz] = *tangent;
        let (dy1, dz1) = self.precess(dy, dz);
        let domega = self.gamma * dz1;
        tangent[0] = c * dx - s * dy1 - y_new * domega;
        tangent[1] = s * dx + c * dy1 + x_new * domega;
        tangent[2] = dz1;

        *state = [x_new, y_new, z1];
    }

    #[inline]
    fn step(&self, state: &mut [f64; 3]) {
        let [x, y, z] = *state;
        let (y1, z1) = self.precess(y, z);
        let (s, c) = (self.gamma * z1).sin_cos();
        *state = [c * x - s * y1, s * x + c * y1, z1];
    }
}

/// One kick of the classical map.
pub fn classical_step(state: UnitSpinVector, params: KickParams) -> UnitSpinVector {
    let mut s = state.to_array();
    KickedTopMap::new(params).step(&mut s);
    UnitSpinVector {
        x: s[0],
        y: s[1],
        z: s[2],
    }
}

/// Pushes `delta` through the Jacobian of one kick at `state`.
pub fn tangent_step(
    state: UnitSpinVector,
    delta: TangentVector,
    params: KickParams,
) -> TangentVector {
    let mut s = state.to_array();
    let mut d = delta.to_array();
    KickedTopMap::new(params).advance(&mut s, &mut d);
    TangentVector {
        dx: d[0],
        dy: d[1],
        dz: d[2],
    }
}

/// Finite-time largest Lyapunov exponent (per kick) of `map` started at
/// `state` with tangent direction `tangent`.
///
/// The tangent vector is renormalized after every step; the growth factor of
/// each step is accumulated before renormalizing.
pub fn lyapunov_exponent_with<M: TangentMap>(
    map: &M,
    state: [f64; 3],
    tangent: [f64; 3],
    n_kicks: usize,
) -> Result<f64> {
    if n_kicks == 0 {
        return Err(Error::InvalidParameter("n_kicks must be at least 1".into()));
    }
    let n0 = norm3(&tangent);
    if !(n0.is_finite() && n0 > 0.0) {
        return Err(Error::InvalidParameter(
            "initial tangent vector must be non-zero".into(),
        ));
    }
    let mut s = state;
    let mut d = tangent.map(|v| v / n0);
    let mut sum_ln = 0.0;
    for _ in 0..n_kicks {
        map.advance(&mut s, &mut d);
        let g = norm3(&d);
        sum_ln += g.ln();
        let inv = 1.0 / g;
        d.iter_mut().for_each(|v| *v *= inv);
    }
    Ok(sum_ln / n_kicks as f64)
}

/// Largest Lyapunov exponent of the kicked top from `init`, using the
/// default initial tangent direction `(1, 1, 1)/√3`.
pub fn lyapunov_exponent(init: UnitSpinVector, params: KickParams, n_kicks: usize) -> Result<f64> {
    lyapunov_exponent_with(
        &KickedTopMap::new(params),
        init.to_array(),
        TangentVector::diagonal().to_array(),
        n_kicks,
    )
}

#[inline(always)]
fn norm3(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Lyapunov exponents sampled at the cell centres of a [`PhaseGrid`].
#[derive(Clone, Debug)]
pub struct LyapunovGrid {
    pub grid: PhaseGrid,
    /// Flat row-major values, see [`PhaseGrid::index`].
    pub values: Vec<f64>,
    pub params: KickParams,
    pub n_kicks: usize,
}

impl LyapunovGrid {
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Evaluates [`lyapunov_exponent`] at every cell centre. Cells run in
/// parallel; the result is identical to a sequential sweep.
pub fn lyapunov_grid(params: KickParams, grid: &PhaseGrid, n_kicks: usize) -> Result<LyapunovGrid> {
    if n_kicks == 0 {
        return Err(Error::InvalidParameter("n_kicks must be at least 1".into()));
    }
    let map = KickedTopMap::new(params);
    let tangent = TangentVector::diagonal().to_array();
    let values = (0..grid.len())
        .into_par_iter()
        .map(|flat| {
            let (i, j) = grid.cell(flat);
            let v = angles_to_vector(SphereAngles {
                phi: grid.phi(i),
                theta: grid.theta(j),
            });
            lyapunov_exponent_with(&map, v.to_array(), tangent, n_kicks)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LyapunovGrid {
        grid: grid.clone(),
        values,
        params,
        n_kicks,
    })
}

/// Kolmogorov-Sinai entropy `(1/4π) ∫ λ_m dA` by cell quadrature. Negative
/// finite-time estimates are clamped to zero first.
pub fn ks_entropy(grid: &LyapunovGrid) -> f64 {
    let clamped: Vec<f64> = grid.values.iter().map(|&v| v.max(0.0)).collect();
    grid.grid.average(&clamped)
}

/// How a threshold `λ_cut` was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutRule {
    /// Minimum of the `λ_m` histogram between the near-zero peak and the
    /// chaotic peak.
    HistogramValley,
    /// No second peak: `ln(n_kicks)/n_kicks`, the finite-time floor.
    FiniteTimeFloor,
    /// Supplied by the caller.
    Override,
}

impl CutRule {
    pub fn as_str(self) -> &'static str {
        match self {
            CutRule::HistogramValley => "histogram-valley",
            CutRule::FiniteTimeFloor => "finite-time-floor",
            CutRule::Override => "override",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutSelection {
    pub lambda_cut: f64,
    pub rule: CutRule,
}

/// Number of histogram bins used by [`select_cut`].
pub const CUT_HISTOGRAM_BINS: usize = 100;

/// Picks `λ_cut` from the area-weighted histogram of clamped `λ_m` values.
///
/// The histogram over `[0, max λ]` is smoothed with a three-bin moving
/// average. The low peak is the first local maximum from the left, the high
/// peak the tallest bin past the end of its descent; the threshold is the centre of the
/// lowest stretch between them. A valley that is not below half of the
/// smaller peak counts as unimodal and falls back to the finite-time floor.
pub fn select_cut(grid: &LyapunovGrid) -> CutSelection {
    let floor = CutSelection {
        lambda_cut: (grid.n_kicks as f64).ln() / grid.n_kicks as f64,
        rule: CutRule::FiniteTimeFloor,
    };
    let top = grid.max().max(0.0);
    if !(top > floor.lambda_cut) {
        return floor;
    }
    let nb = CUT_HISTOGRAM_BINS;
    let width = top / nb as f64;
    let mut hist = vec![0.0; nb];
    let n_phi = grid.grid.n_phi();
    for (j, row) in grid.values.chunks_exact(n_phi).enumerate() {
        let w = grid.grid.weight(j);
        for &v in row {
            let k = ((v.max(0.0) / width) as usize).min(nb - 1);
            hist[k] += w;
        }
    }
    let smooth: Vec<f64> = (0..nb)
        .map(|k| {
            let lo = k.saturating_sub(1);
            let hi = (k + 1).min(nb - 1);
            hist[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect();

    let Some(low) = (0..nb).find(|&k| {
        smooth[k] > 0.0
            && (k == 0 || smooth[k] > smooth[k - 1])
            && (k + 1 == nb || smooth[k] >= smooth[k + 1])
    }) else {
        return floor;
    };
    // end of the descent from the low peak
    let mut descent = low + 1;
    while descent + 1 < nb && smooth[descent + 1] <= smooth[descent] {
        descent += 1;
    }
    let Some(high) = (descent.min(nb - 1)..nb).max_by(|&a, &b| {
        smooth[a]
            .partial_cmp(&smooth[b])
            .unwrap()
            .then(b.cmp(&a))
    }) else {
        return floor;
    };
    if high <= low + 1 {
        return floor;
    }
    let valley_min = smooth[low + 1..high]
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if valley_min >= 0.5 * smooth[low].min(smooth[high]) {
        return floor;
    }
    let first = (low + 1..high).find(|&k| smooth[k] == valley_min).unwrap();
    let last = (first..high)
        .take_while(|&k| smooth[k] == valley_min)
        .last()
        .unwrap();
    let centre = 0.5 * (first + last) as f64 + 0.5;
    CutSelection {
        lambda_cut: centre * width,
        rule: CutRule::HistogramValley,
    }
}

/// Chaotic (`+1`) / regular (`−1`) label per cell.
#[derive(Clone, Debug)]
pub struct ClassificationGrid {
    pub grid: PhaseGrid,
    /// Flat row-major labels, see [`PhaseGrid::index`].
    pub labels: Vec<i8>,
    pub threshold: f64,
}

impl ClassificationGrid {
    pub fn label(&self, i: usize, j: usize) -> i8 {
        self.labels[self.grid.index(i, j)]
    }

    /// Area fraction of the chaotic cells.
    pub fn chaotic_fraction(&self) -> f64 {
        let ones: Vec<f64> = self
            .labels
            .iter()
            .map(|&c| if c > 0 { 1.0 } else { 0.0 })
            .collect();
        self.grid.average(&ones)
    }

    /// Same cells with every label flipped.
    pub fn negated(&self) -> Self {
        Self {
            grid: self.grid.clone(),
            labels: self.labels.iter().map(|&c| -c).collect(),
            threshold: self.threshold,
        }
    }

    /// Constant labelling, mostly useful as a reference partition.
    pub fn uniform(grid: &PhaseGrid, label: i8) -> Self {
        Self {
            grid: grid.clone(),
            labels: vec![label.signum(); grid.len()],
            threshold: f64::NAN,
        }
    }
}

/// `c = +1` where `max(λ, 0) > λ_cut`, else `−1`.
pub fn classify_grid(grid: &LyapunovGrid, lambda_cut: f64) -> Result<ClassificationGrid> {
    if lambda_cut.is_nan() || lambda_cut < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "lambda_cut must be non-negative, got {lambda_cut}"
        )));
    }
    let labels = grid
        .values
        .iter()
        .map(|&v| if v.max(0.0) > lambda_cut { 1 } else { -1 })
        .collect();
    Ok(ClassificationGrid {
        grid: grid.grid.clone(),
        labels,
        threshold: lambda_cut,
    })
}

/// Draws a point uniformly with respect to the area measure (uniform in `φ`
/// and in `cos θ`).
pub fn random_angles<R: Rng + ?Sized>(rng: &mut R) -> SphereAngles {
    let phi = -PI + 2.0 * PI * rng.random::<f64>();
    let u = 1.0 - 2.0 * rng.random::<f64>();
    SphereAngles {
        phi,
        theta: u.clamp(-1.0, 1.0).acos(),
    }
}

/// Orbits started from `n_init` random points, each iterated `n_kicks`
/// times. Every orbit holds `n_kicks + 1` points, the initial one first.
///
/// Initial points come from a ChaCha20 stream seeded with `seed`, drawn in
/// orbit order.
pub fn poincare_section(
    params: KickParams,
    n_init: usize,
    n_kicks: usize,
    seed: u64,
) -> Result<Vec<Vec<SphereAngles>>> {
    if n_init == 0 {
        return Err(Error::InvalidParameter("n_init must be at least 1".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let inits: Vec<SphereAngles> = (0..n_init).map(|_| random_angles(&mut rng)).collect();
    let map = KickedTopMap::new(params);
    Ok(inits
        .into_par_iter()
        .map(|a0| {
            let mut orbit = Vec::with_capacity(n_kicks + 1);
            orbit.push(a0);
            let mut s = angles_to_vector(a0).to_array();
            for _ in 0..n_kicks {
                map.step(&mut s);
                orbit.push(vector_to_angles(UnitSpinVector {
                    x: s[0],
                    y: s[1],
                    z: s[2],
                }));
            }
            orbit
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridGeometry;
    use crate::DEFAULT_ALPHA;

    fn close(a: UnitSpinVector, b: [f64; 3], tol: f64) -> bool {
        (a.x - b[0]).abs() < tol && (a.y - b[1]).abs() < tol && (a.z - b[2]).abs() < tol
    }

    #[test]
    fn quarter_turn_without_kick() {
        let p = KickParams::new(PI / 2.0, 0.0).unwrap();
        let v = classical_step(UnitSpinVector::new(0.0, 0.0, 1.0).unwrap(), p);
        assert!(close(v, [0.0, -1.0, 0.0], 1e-15));
    }

    #[test]
    fn identity_without_rotation_or_kick() {
        let p = KickParams::new(0.0, 0.0).unwrap();
        let s = UnitSpinVector::new(0.3, -0.4, 0.5).unwrap();
        assert_eq!(classical_step(s, p), s);
    }

    #[test]
    fn one_step_from_x_axis() {
        // Independent evaluation: at (1,0,0) the precession leaves the
        // vector fixed, Ω = 0, so the kick is trivial.
        let p = KickParams::new(DEFAULT_ALPHA, 2.0).unwrap();
        let v = classical_step(UnitSpinVector::new(1.0, 0.0, 0.0).unwrap(), p);
        assert!(close(v, [1.0, 0.0, 0.0], 1e-15));
    }

    #[test]
    fn one_step_matches_matrix_form() {
        // Frozen from a direct evaluation of the 3x3 matrix with
        // Ω = γ (Y sin α + Z cos α) at (X, Y, Z) = (0.48, 0.6, 0.64).
        let p = KickParams::new(DEFAULT_ALPHA, 2.0).unwrap();
        let s = UnitSpinVector::new(0.48, 0.6, 0.64).unwrap();
        let (sa, ca) = p.alpha.sin_cos();
        let om = p.gamma * (s.y * sa + s.z * ca);
        let (so, co) = om.sin_cos();
        let expect = [
            co * s.x - ca * so * s.y + sa * so * s.z,
            so * s.x + ca * co * s.y - sa * co * s.z,
            sa * s.y + ca * s.z,
        ];
        assert!(close(classical_step(s, p), expect, 1e-15));
    }

    #[test]
    fn angles_round_trip() {
        let v = angles_to_vector(SphereAngles { phi: 0.0, theta: PI / 2.0 });
        assert!(close(v, [1.0, 0.0, 0.0], 1e-15));
        let v = angles_to_vector(SphereAngles { phi: PI / 2.0, theta: PI / 2.0 });
        assert!(close(v, [0.0, 1.0, 0.0], 1e-15));
        let a = vector_to_angles(angles_to_vector(SphereAngles { phi: 0.3, theta: 1.1 }));
        assert!((a.phi - 0.3).abs() < 1e-12 && (a.theta - 1.1).abs() < 1e-12);
        // third quadrant resolves through atan2
        let a = vector_to_angles(angles_to_vector(SphereAngles { phi: -2.5, theta: 2.0 }));
        assert!((a.phi + 2.5).abs() < 1e-12);
    }

    #[test]
    fn poles_report_zero_azimuth() {
        let a = vector_to_angles(UnitSpinVector { x: 0.0, y: 0.0, z: 1.0 });
        assert_eq!(a, SphereAngles { phi: 0.0, theta: 0.0 });
        let a = vector_to_angles(UnitSpinVector { x: 0.0, y: 0.0, z: -1.0 });
        assert_eq!(a.phi, 0.0);
        assert!((a.theta - PI).abs() < 1e-15);
    }

    #[test]
    fn tangent_isometry_and_linearity() {
        let p = KickParams::new(DEFAULT_ALPHA, 0.0).unwrap();
        let s = UnitSpinVector::new(0.1, 0.7, -0.2).unwrap();
        let d = TangentVector { dx: 0.3, dy: -1.2, dz: 0.8 };
        assert!((tangent_step(s, d, p).norm() - d.norm()).abs() < 1e-14);
        let p = KickParams::new(DEFAULT_ALPHA, 2.6).unwrap();
        let zero = TangentVector { dx: 0.0, dy: 0.0, dz: 0.0 };
        assert_eq!(tangent_step(s, zero, p).norm(), 0.0);
    }

    #[test]
    fn jacobian_matches_advance() {
        let p = KickParams::new(DEFAULT_ALPHA, 2.6).unwrap();
        let map = KickedTopMap::new(p);
        let s = [0.2, -0.5, 0.84];
        let jac = map.jacobian(&s);
        let d = [0.4, 0.1, -0.7];
        let mut st = s;
        let mut dt = d;
        map.advance(&mut st, &mut dt);
        for r in 0..3 {
            let v = jac[r][0] * d[0] + jac[r][1] * d[1] + jac[r][2] * d[2];
            assert!((v - dt[r]).abs() < 1e-14);
        }
    }

    struct Diagonal;
    impl TangentMap for Diagonal {
        fn advance(&self, _state: &mut [f64; 3], t: &mut [f64; 3]) {
            t[0] *= 2.0;
            t[1] *= 0.5;
        }
        fn step(&self, _state: &mut [f64; 3]) {}
    }

    #[test]
    fn synthetic_linear_map_gives_ln_two() {
        let n = 200;
        let l = lyapunov_exponent_with(&Diagonal, [0.0; 3], [1.0, 1.0, 1.0], n).unwrap();
        // ‖D^n (1,1,1)/√3‖ = √((4^n + 4^{-n} + 1)/3)
        let q = 0.25f64.powi(n as i32);
        let exact = 2f64.ln() + 0.5 * ((1.0 + q * q + q) / 3.0).ln() / n as f64;
        assert!((l - exact).abs() < 1e-12, "{l} vs {exact}");
        assert!((l - 2f64.ln()).abs() < 3e-3);
    }

    #[test]
    fn lyapunov_rejects_zero_kicks() {
        let p = KickParams::new(DEFAULT_ALPHA, 1.0).unwrap();
        let s = UnitSpinVector::new(1.0, 0.0, 0.0).unwrap();
        assert!(lyapunov_exponent(s, p, 0).is_err());
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(KickParams::new(f64::NAN, 1.0).is_err());
        assert!(KickParams::new(1.0, -0.1).is_err());
        assert!(UnitSpinVector::new(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn tiny_grid_is_fine() {
        let p = KickParams::new(DEFAULT_ALPHA, 3.0).unwrap();
        let g = PhaseGrid::new(2, 2, GridGeometry::EqualAngle).unwrap();
        let lg = lyapunov_grid(p, &g, 50).unwrap();
        assert_eq!(lg.values.len(), 4);
    }

    fn constant_grid(c: f64) -> LyapunovGrid {
        let g = PhaseGrid::new(30, 20, GridGeometry::EqualAngle).unwrap();
        LyapunovGrid {
            values: vec![c; g.len()],
            grid: g,
            params: KickParams::new(DEFAULT_ALPHA, 1.0).unwrap(),
            n_kicks: 1000,
        }
    }

    #[test]
    fn ks_entropy_of_constant_and_zero() {
        assert!((ks_entropy(&constant_grid(0.37)) - 0.37).abs() < 1e-10);
        assert_eq!(ks_entropy(&constant_grid(0.0)), 0.0);
        assert_eq!(ks_entropy(&constant_grid(-1e-4)), 0.0);
    }

    #[test]
    fn classification_extremes() {
        let g = constant_grid(0.2);
        let c = classify_grid(&g, f64::INFINITY).unwrap();
        assert!(c.labels.iter().all(|&l| l == -1));
        let c = classify_grid(&g, 0.0).unwrap();
        assert!(c.labels.iter().all(|&l| l == 1));
        assert!((c.chaotic_fraction() - 1.0).abs() < 1e-14);
        assert!(classify_grid(&g, -1.0).is_err());
    }

    #[test]
    fn valley_between_two_peaks() {
        let mut g = constant_grid(0.0);
        for (k, v) in g.values.iter_mut().enumerate() {
            *v = if k % 3 == 0 { 0.001 } else { 0.4 + 0.01 * ((k % 7) as f64 - 3.0) };
        }
        let cut = select_cut(&g);
        assert_eq!(cut.rule, CutRule::HistogramValley);
        assert!(cut.lambda_cut > 0.01 && cut.lambda_cut < 0.37, "{cut:?}");
    }

    #[test]
    fn unimodal_falls_back_to_floor() {
        let g = constant_grid(0.3);
        let cut = select_cut(&g);
        assert_eq!(cut.rule, CutRule::FiniteTimeFloor);
        assert!((cut.lambda_cut - (1000f64).ln() / 1000.0).abs() < 1e-15);
    }

    #[test]
    fn poincare_counts_and_determinism() {
        let p = KickParams::new(DEFAULT_ALPHA, 2.0).unwrap();
        let one = poincare_section(p, 1, 0, 7).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].len(), 1);
        let a = poincare_section(p, 5, 20, 11).unwrap();
        let b = poincare_section(p, 5, 20, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|o| o.len() == 21));
        // first point is the drawn initial condition
        assert_eq!(a[0][0], one_with_seed(11));
    }

    fn one_with_seed(seed: u64) -> SphereAngles {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        random_angles(&mut rng)
    }
}
