//! Quantum kicked top in the Dicke basis `|j, m⟩`, `m = −j, …, +j`.
//!
//! The Floquet operator is `F = exp(−i γ J_z² / 2j) exp(−i α J_x)`. The
//! rotation factor is built from the spectral decomposition of `J_x`; the
//! kick is diagonal in `m`.
//!
//! `F` commutes with the π-rotation about x, `Π |j, m⟩ = (−1)^j |j, −m⟩`, so
//! every non-degenerate Floquet eigenvector has definite parity. The parity
//! of each eigenvector is recorded in [`QuasiSpectrum::parity`].

use std::f64::consts::PI;
use std::io::{Read, Write};

use faer::{c64, Mat, MatRef, Side};
use serde::{Deserialize, Serialize};

use crate::classical::KickParams;
use crate::{Error, Result};

/// Integer spin quantum number `j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SpinQuantum(u32);

impl SpinQuantum {
    pub fn new(j: u32) -> Self {
        Self(j)
    }

    pub fn j(self) -> u32 {
        self.0
    }

    /// Hilbert space dimension `2j + 1`.
    pub fn dim(self) -> usize {
        2 * self.0 as usize + 1
    }

    /// Magnetic quantum number of basis index `k` (`k = 0` is `m = −j`).
    pub fn m(self, k: usize) -> i64 {
        k as i64 - self.0 as i64
    }
}

/// Real symmetric tridiagonal `J_x`:
/// `⟨m|J_x|m±1⟩ = ½ √(j(j+1) − m(m±1))`.
pub fn jx_matrix(spin: SpinQuantum) -> Mat<f64> {
    let n = spin.dim();
    let j = spin.j() as f64;
    let mut jx = Mat::zeros(n, n);
    for k in 0..n - 1 {
        let m = spin.m(k) as f64;
        let v = 0.5 * (j * (j + 1.0) - m * (m + 1.0)).sqrt();
        jx[(k, k + 1)] = v;
        jx[(k + 1, k)] = v;
    }
    jx
}

/// `W = exp(−i α J_x) = V exp(−i α diag(k_x)) Vᵀ` with `V` the eigenvectors
/// of [`jx_matrix`]. The exact integer eigenvalues `k_x = −j, …, j` are used
/// in the phases.
pub fn wigner_rotation(spin: SpinQuantum, alpha: f64) -> Result<Mat<c64>> {
    let n = spin.dim();
    let jx = jx_matrix(spin);
    let evd = jx
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::EigenSolver(format!("{e:?}")))?;
    let s = evd.S();
    let v = evd.U();
    let mut scaled_cos = Mat::<f64>::zeros(n, n);
    let mut scaled_sin = Mat::<f64>::zeros(n, n);
    for c in 0..n {
        let k = spin.m(c) as f64;
        if (s[c] - k).abs() > 1e-8 * (1.0 + k.abs()) {
            return Err(Error::EigenSolver(format!(
                "J_x eigenvalue {} does not match k_x = {k}",
                s[c]
            )));
        }
        let (sin, cos) = (alpha * k).sin_cos();
        for r in 0..n {
            scaled_cos[(r, c)] = v[(r, c)] * cos;
            scaled_sin[(r, c)] = v[(r, c)] * sin;
        }
    }
    let re = scaled_cos.as_ref() * v.transpose();
    let im = scaled_sin.as_ref() * v.transpose();
    Ok(Mat::from_fn(n, n, |r, c| c64::new(re[(r, c)], -im[(r, c)])))
}

/// Diagonal kick phases `exp(−i γ m² / 2j)` in basis order.
pub fn kick_phases(spin: SpinQuantum, gamma: f64) -> Vec<c64> {
    let j = spin.j() as f64;
    (0..spin.dim())
        .map(|k| {
            let m = spin.m(k) as f64;
            let (s, c) = (-gamma * m * m / (2.0 * j)).sin_cos();
            c64::new(c, s)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct FloquetOperator {
    pub spin: SpinQuantum,
    pub params: KickParams,
    pub u: Mat<c64>,
}

impl FloquetOperator {
    pub fn dim(&self) -> usize {
        self.spin.dim()
    }

    /// `max |(F†F − I)_{ab}|`.
    pub fn unitarity_defect(&self) -> f64 {
        unitarity_defect(self.u.as_ref())
    }

    pub fn apply(&self, psi: &[c64]) -> Vec<c64> {
        let n = self.dim();
        assert_eq!(psi.len(), n);
        (0..n)
            .map(|r| (0..n).map(|c| self.u[(r, c)] * psi[c]).sum())
            .collect()
    }
}

/// `max |(A†A − I)_{ab}|`.
pub fn unitarity_defect(a: MatRef<'_, c64>) -> f64 {
    let g = a.adjoint() * a;
    let mut worst: f64 = 0.0;
    for c in 0..g.ncols() {
        for r in 0..g.nrows() {
            let d = if r == c { g[(r, c)] - c64::new(1.0, 0.0) } else { g[(r, c)] };
            worst = worst.max(d.norm());
        }
    }
    worst
}

/// Builds `⟨j,m|F|j,m'⟩ = exp(−i γ m²/2j) W_{mm'}`. Requires `j ≥ 1`.
pub fn build_floquet(spin: SpinQuantum, params: KickParams) -> Result<FloquetOperator> {
    if spin.j() == 0 {
        return Err(Error::SpinTooSmall(spin.j()));
    }
    let KickParams { alpha, gamma } = KickParams::new(params.alpha, params.gamma)?;
    let mut u = wigner_rotation(spin, alpha)?;
    let phases = kick_phases(spin, gamma);
    for c in 0..u.ncols() {
        for (r, p) in phases.iter().enumerate() {
            u[(r, c)] = *p * u[(r, c)];
        }
    }
    Ok(FloquetOperator { spin, params, u })
}

/// `Π v` with `(Π v)_m = (−1)^j v_{−m}`.
pub fn parity_apply(spin: SpinQuantum, v: &[c64]) -> Vec<c64> {
    let sign = if spin.j() % 2 == 0 { 1.0 } else { -1.0 };
    v.iter().rev().map(|z| z * sign).collect()
}

/// `⟨v|Π|v⟩` for a normalized `v`; ±1 for a parity eigenvector.
pub fn parity_expectation(spin: SpinQuantum, v: &[c64]) -> f64 {
    let pv = parity_apply(spin, v);
    v.iter().zip(&pv).map(|(a, b)| (a.conj() * b).re).sum()
}

/// Eigenphases closer than this are treated as one degenerate cluster and
/// their eigenvectors re-orthonormalized.
pub const DEGENERACY_GAP: f64 = 1e-10;

/// Within clusters up to this gap, eigenvectors whose parity is not sharp are
/// re-diagonalized against `Π` (the solver mixes near-degenerate pairs).
pub const PARITY_REPAIR_GAP: f64 = 1e-6;

/// Reject the decomposition if any eigenvalue modulus is off by more.
pub const MODULUS_TOLERANCE: f64 = 1e-8;

/// Eigenphases `ν ∈ [−π, π)` in ascending order and their eigenvectors.
#[derive(Clone, Debug)]
pub struct QuasiSpectrum {
    pub spin: SpinQuantum,
    pub nu: Vec<f64>,
    /// Column `n` is the eigenvector of `nu[n]`, largest-magnitude
    /// component real and positive.
    pub vectors: Mat<c64>,
    /// `⟨v_n|Π|v_n⟩` per eigenvector.
    pub parity: Vec<f64>,
    /// `max_n ||λ_n| − 1|` as returned by the eigensolver.
    pub max_modulus_deviation: f64,
}

impl QuasiSpectrum {
    pub fn len(&self) -> usize {
        self.nu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nu.is_empty()
    }

    pub fn vector(&self, n: usize) -> Vec<c64> {
        self.vectors.col(n).iter().copied().collect()
    }

    /// `Σ_n e^{iν_n} v_n v_n†`.
    pub fn reconstruct(&self) -> Mat<c64> {
        let n = self.len();
        let scaled = Mat::from_fn(n, n, |r, c| {
            let (s, co) = self.nu[c].sin_cos();
            self.vectors[(r, c)] * c64::new(co, s)
        });
        scaled.as_ref() * self.vectors.adjoint()
    }

    /// Largest off-diagonal modulus of the Gram matrix `V†V`.
    pub fn gram_off_diagonal(&self) -> f64 {
        let g = self.vectors.adjoint() * self.vectors.as_ref();
        let mut worst: f64 = 0.0;
        for c in 0..g.ncols() {
            for r in 0..g.nrows() {
                if r != c {
                    worst = worst.max(g[(r, c)].norm());
                }
            }
        }
        worst
    }

    /// Eigenphases split by the sign of the parity, `(even, odd)`, each in
    /// ascending order.
    pub fn parity_sectors(&self) -> (Vec<f64>, Vec<f64>) {
        let mut even = Vec::new();
        let mut odd = Vec::new();
        for (&nu, &p) in self.nu.iter().zip(&self.parity) {
            if p >= 0.0 {
                even.push(nu);
            } else {
                odd.push(nu);
            }
        }
        (even, odd)
    }
}

/// Reduces any angle to `[−π, π)`.
pub fn wrap_phase(nu: f64) -> f64 {
    if (-PI..PI).contains(&nu) {
        return nu;
    }
    let w = (nu + PI).rem_euclid(2.0 * PI) - PI;
    if w >= PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Full eigendecomposition of a Floquet operator.
///
/// The general complex eigensolver is applied to `F` directly. Eigenvectors
/// are normalized, clusters of eigenphases closer than [`DEGENERACY_GAP`]
/// are Gram-Schmidt orthonormalized and resolved by parity, and the phase of
/// each vector is fixed so that its largest component is real positive.
pub fn diagonalize(f: &FloquetOperator) -> Result<QuasiSpectrum> {
    let n = f.dim();
    let evd = f
        .u
        .eigen()
        .map_err(|e| Error::EigenSolver(format!("{e:?}")))?;
    let s = evd.S();
    let u = evd.U();

    let mut max_dev: f64 = 0.0;
    let mut raw: Vec<(f64, usize)> = Vec::with_capacity(n);
    for k in 0..n {
        let lam = s[k];
        max_dev = max_dev.max((lam.norm() - 1.0).abs());
        raw.push((wrap_phase(lam.im.atan2(lam.re)), k));
    }
    if !(max_dev <= MODULUS_TOLERANCE) {
        return Err(Error::NonUnitary {
            deviation: max_dev,
            limit: MODULUS_TOLERANCE,
        });
    }
    raw.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let nu: Vec<f64> = raw.iter().map(|r| r.0).collect();
    let mut vecs: Vec<Vec<c64>> = raw
        .iter()
        .map(|&(_, k)| {
            let mut v: Vec<c64> = u.col(k).iter().copied().collect();
            normalize(&mut v);
            v
        })
        .collect();

    for cluster in clusters(&nu, DEGENERACY_GAP) {
        if cluster.len() > 1 {
            orthonormalize(&mut vecs, &cluster);
            resolve_parity(f.spin, &mut vecs, &cluster);
        }
    }
    for cluster in clusters(&nu, PARITY_REPAIR_GAP) {
        if cluster.len() > 1
            && cluster
                .iter()
                .any(|&k| 1.0 - parity_expectation(f.spin, &vecs[k]).abs() > 1e-6)
        {
            orthonormalize(&mut vecs, &cluster);
            resolve_parity(f.spin, &mut vecs, &cluster);
        }
    }

    let parity: Vec<f64> = vecs.iter().map(|v| parity_expectation(f.spin, v)).collect();
    for v in &mut vecs {
        fix_phase(v);
    }
    // stable order for exact ties: by parity, even first
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| nu[a].total_cmp(&nu[b]).then(parity[b].total_cmp(&parity[a])));

    let vectors = Mat::from_fn(n, n, |r, c| vecs[order[c]][r]);
    Ok(QuasiSpectrum {
        spin: f.spin,
        nu: order.iter().map(|&k| nu[k]).collect(),
        vectors,
        parity: order.iter().map(|&k| parity[k]).collect(),
        max_modulus_deviation: max_dev,
    })
}

fn normalize(v: &mut [c64]) {
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|z| *z /= n);
    }
}

fn dot(a: &[c64], b: &[c64]) -> c64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Groups sorted phases whose neighbours are closer than `gap`, treating
/// the first and last phase as neighbours across the `±π` cut.
fn clusters(nu: &[f64], gap: f64) -> Vec<Vec<usize>> {
    let n = nu.len();
    if n == 0 {
        return Vec::new();
    }
    let mut out: Vec<Vec<usize>> = vec![vec![0]];
    for k in 1..n {
        if nu[k] - nu[k - 1] < gap {
            out.last_mut().unwrap().push(k);
        } else {
            out.push(vec![k]);
        }
    }
    if out.len() > 1 && nu[0] + 2.0 * PI - nu[n - 1] < gap {
        let first = out.remove(0);
        out.last_mut().unwrap().extend(first);
    }
    out
}

/// Modified Gram-Schmidt, applied twice.
fn orthonormalize(vecs: &mut [Vec<c64>], idx: &[usize]) {
    for _ in 0..2 {
        for (p, &a) in idx.iter().enumerate() {
            for &b in &idx[..p] {
                let proj = dot(&vecs[b], &vecs[a]);
                let (head, tail) = split_pair(vecs, b, a);
                for (x, y) in tail.iter_mut().zip(head.iter()) {
                    *x -= proj * y;
                }
            }
            normalize(&mut vecs[a]);
        }
    }
}

/// Returns `(&vecs[b], &mut vecs[a])` for `a != b`.
fn split_pair(vecs: &mut [Vec<c64>], b: usize, a: usize) -> (&Vec<c64>, &mut Vec<c64>) {
    assert_ne!(a, b);
    if b < a {
        let (l, r) = vecs.split_at_mut(a);
        (&l[b], &mut r[0])
    } else {
        let (l, r) = vecs.split_at_mut(b);
        (&r[0], &mut l[a])
    }
}

/// Rotates an orthonormal cluster onto eigenvectors of `Π` restricted to it.
fn resolve_parity(spin: SpinQuantum, vecs: &mut [Vec<c64>], idx: &[usize]) {
    let k = idx.len();
    let pv: Vec<Vec<c64>> = idx.iter().map(|&a| parity_apply(spin, &vecs[a])).collect();
    let p = Mat::from_fn(k, k, |r, c| dot(&vecs[idx[r]], &pv[c]));
    let Ok(evd) = p.self_adjoint_eigen(Side::Lower) else {
        return;
    };
    let w = evd.U();
    let old: Vec<Vec<c64>> = idx.iter().map(|&a| vecs[a].clone()).collect();
    for (c, &target) in idx.iter().enumerate() {
        let mut v = vec![c64::new(0.0, 0.0); old[0].len()];
        for (r, o) in old.iter().enumerate() {
            let coef = w[(r, c)];
            for (x, y) in v.iter_mut().zip(o) {
                *x += coef * y;
            }
        }
        normalize(&mut v);
        vecs[target] = v;
    }
}

/// Multiplies `v` by a unit phase so that its largest-magnitude component
/// (first one on ties) is real and positive.
/// Index of the first component whose modulus is within a relative `1e-9`
/// of the largest. Parity eigenvectors have `|v_m| = |v_{−m}|`, so a strict
/// maximum is ill-defined.
pub fn phase_anchor(v: &[c64]) -> usize {
    let top = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    v.iter()
        .position(|z| z.norm() >= top * (1.0 - 1e-9))
        .unwrap_or(0)
}

/// Rotates `v` so that its [`phase_anchor`] component is real and positive.
fn fix_phase(v: &mut [c64]) {
    let best = phase_anchor(v);
    let best_abs = v[best].norm();
    if best_abs > 0.0 {
        let phase = v[best].conj() / best_abs;
        v.iter_mut().for_each(|z| *z *= phase);
        v[best] = c64::new(best_abs, 0.0);
    }
}

/// Element type of a binary eigenvector file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VectorDtype {
    Complex64,
    Complex128,
}

impl VectorDtype {
    fn tag(self) -> u32 {
        match self {
            VectorDtype::Complex64 => 8,
            VectorDtype::Complex128 => 16,
        }
    }
}

/// File magic of the eigenvector format.
pub const EIGENVECTOR_MAGIC: &[u8; 4] = b"KTEV";

/// Writes eigenvectors in the binary exchange layout.
///
/// A 32-byte little-endian header
///
/// | bytes  | content                                      |
/// |--------|----------------------------------------------|
/// | 0..4   | magic `KTEV`                                 |
/// | 4..8   | `u32` spin `j`                               |
/// | 8..16  | `f64` `γ`                                    |
/// | 16..24 | `f64` `α`                                    |
/// | 24..28 | `u32` dtype tag, 8 = complex64, 16 = complex128 |
/// | 28..32 | `u32` format version (1)                     |
///
/// is followed by `dim × dim` `(re, im)` pairs in row-major order: row `n`
/// holds eigenvector `n` (ascending eigenphase), column `k` is the Dicke
/// component `m = k − j`.
pub fn write_eigenvectors<W: Write>(
    mut out: W,
    spectrum: &QuasiSpectrum,
    params: KickParams,
    dtype: VectorDtype,
) -> Result<()> {
    let mut header = [0u8; 32];
    header[0..4].copy_from_slice(EIGENVECTOR_MAGIC);
    header[4..8].copy_from_slice(&spectrum.spin.j().to_le_bytes());
    header[8..16].copy_from_slice(&params.gamma.to_le_bytes());
    header[16..24].copy_from_slice(&params.alpha.to_le_bytes());
    header[24..28].copy_from_slice(&dtype.tag().to_le_bytes());
    header[28..32].copy_from_slice(&1u32.to_le_bytes());
    out.write_all(&header)?;
    let dim = spectrum.len();
    let mut buf = Vec::with_capacity(dim * dtype.tag() as usize);
    for n in 0..dim {
        buf.clear();
        for k in 0..dim {
            let z = spectrum.vectors[(k, n)];
            match dtype {
                VectorDtype::Complex64 => {
                    buf.extend_from_slice(&(z.re as f32).to_le_bytes());
                    buf.extend_from_slice(&(z.im as f32).to_le_bytes());
                }
                VectorDtype::Complex128 => {
                    buf.extend_from_slice(&z.re.to_le_bytes());
                    buf.extend_from_slice(&z.im.to_le_bytes());
                }
            }
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

/// Contents of a binary eigenvector file.
#[derive(Clone, Debug)]
pub struct EigenvectorFile {
    pub spin: SpinQuantum,
    pub params: KickParams,
    pub dtype: VectorDtype,
    /// `rows[n][k]`: eigenvector `n`, Dicke component `k`.
    pub rows: Vec<Vec<c64>>,
}

pub fn read_eigenvectors<R: Read>(mut input: R) -> Result<EigenvectorFile> {
    let mut header = [0u8; 32];
    input.read_exact(&mut header)?;
    if &header[0..4] != EIGENVECTOR_MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let word = |r: std::ops::Range<usize>| u32::from_le_bytes(header[r].try_into().unwrap());
    let real = |r: std::ops::Range<usize>| f64::from_le_bytes(header[r].try_into().unwrap());
    let spin = SpinQuantum::new(word(4..8));
    let params = KickParams {
        gamma: real(8..16),
        alpha: real(16..24),
    };
    let dtype = match word(24..28) {
        8 => VectorDtype::Complex64,
        16 => VectorDtype::Complex128,
        t => return Err(Error::Format(format!("unknown dtype tag {t}"))),
    };
    if word(28..32) != 1 {
        return Err(Error::Format(format!("unsupported version {}", word(28..32))));
    }
    let dim = spin.dim();
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let width = dtype.tag() as usize;
    if bytes.len() != dim * dim * width {
        return Err(Error::Format(format!(
            "expected {} payload bytes, found {}",
            dim * dim * width,
            bytes.len()
        )));
    }
    let rows = bytes
        .chunks_exact(dim * width)
        .map(|row| {
            row.chunks_exact(width)
                .map(|z| match dtype {
                    VectorDtype::Complex64 => c64::new(
                        f32::from_le_bytes(z[0..4].try_into().unwrap()) as f64,
                        f32::from_le_bytes(z[4..8].try_into().unwrap()) as f64,
                    ),
                    VectorDtype::Complex128 => c64::new(
                        f64::from_le_bytes(z[0..8].try_into().unwrap()),
                        f64::from_le_bytes(z[8..16].try_into().unwrap()),
                    ),
                })
                .collect()
        })
        .collect();
    Ok(EigenvectorFile {
        spin,
        params,
        dtype,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::DEFAULT_ALPHA;

    #[test]
    fn spin_one_jx() {
        let jx = jx_matrix(SpinQuantum::new(1));
        let r = 1.0 / 2f64.sqrt();
        assert!((jx[(0, 1)] - r).abs() < 1e-15);
        assert!((jx[(1, 2)] - r).abs() < 1e-15);
        assert_eq!(jx[(0, 0)], 0.0);
        assert_eq!(jx[(0, 2)], 0.0);
    }

    #[test]
    fn jx_spectrum_is_integer_ladder() {
        for j in [1, 2, 7, 20] {
            let spin = SpinQuantum::new(j);
            let ev = jx_matrix(spin).self_adjoint_eigenvalues(Side::Lower).unwrap();
            for (k, e) in ev.iter().enumerate() {
                assert!((e - spin.m(k) as f64).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn jx_matches_ladder_operators() {
        // J+ |m⟩ = √(j(j+1) − m(m+1)) |m+1⟩ built elementwise; J_x = (J+ + J−)/2
        let spin = SpinQuantum::new(2);
        let n = spin.dim();
        let j = 2.0;
        let mut jp = vec![vec![0.0; n]; n];
        for k in 0..n - 1 {
            let m = spin.m(k) as f64;
            jp[k + 1][k] = (j * (j + 1.0) - m * (m + 1.0)).sqrt();
        }
        let jx = jx_matrix(spin);
        for r in 0..n {
            for c in 0..n {
                let expect = 0.5 * (jp[r][c] + jp[c][r]);
                assert!((jx[(r, c)] - expect).abs() < 1e-15);
            }
        }
    }

    fn max_diff(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> f64 {
        let mut worst: f64 = 0.0;
        for c in 0..a.ncols() {
            for r in 0..a.nrows() {
                worst = worst.max((a[(r, c)] - b[(r, c)]).norm());
            }
        }
        worst
    }

    fn identity(n: usize) -> Mat<c64> {
        Mat::from_fn(n, n, |r, c| c64::new(if r == c { 1.0 } else { 0.0 }, 0.0))
    }

    #[test]
    fn wigner_trivial_angles() {
        let spin = SpinQuantum::new(6);
        let w = wigner_rotation(spin, 0.0).unwrap();
        assert!(max_diff(w.as_ref(), identity(13).as_ref()) < 1e-12);
        let w = wigner_rotation(spin, 2.0 * PI).unwrap();
        assert!(max_diff(w.as_ref(), identity(13).as_ref()) < 1e-10);
    }

    /// exp(A) by scaling and squaring with a Taylor series.
    fn expm(a: &Mat<c64>) -> Mat<c64> {
        let n = a.nrows();
        let norm: f64 = (0..n)
            .map(|r| (0..n).map(|c| a[(r, c)].norm()).sum::<f64>())
            .fold(0.0, f64::max);
        let squarings = (norm.max(1.0).log2().ceil() as i32 + 4).max(0);
        let scale = 0.5f64.powi(squarings);
        let b = Mat::from_fn(n, n, |r, c| a[(r, c)] * scale);
        let mut result = identity(n);
        let mut term = identity(n);
        for k in 1..30 {
            term = &term * &b;
            term = Mat::from_fn(n, n, |r, c| term[(r, c)] / k as f64);
            result = Mat::from_fn(n, n, |r, c| result[(r, c)] + term[(r, c)]);
        }
        for _ in 0..squarings {
            result = &result * &result;
        }
        result
    }

    #[test]
    fn wigner_matches_matrix_exponential() {
        let spin = SpinQuantum::new(5);
        let jx = jx_matrix(spin);
        let arg = Mat::from_fn(11, 11, |r, c| c64::new(0.0, -DEFAULT_ALPHA * jx[(r, c)]));
        let oracle = expm(&arg);
        let w = wigner_rotation(spin, DEFAULT_ALPHA).unwrap();
        assert!(max_diff(w.as_ref(), oracle.as_ref()) < 1e-9);
    }

    #[test]
    fn floquet_requires_positive_spin() {
        let p = KickParams::new(DEFAULT_ALPHA, 1.0).unwrap();
        assert!(matches!(
            build_floquet(SpinQuantum::new(0), p),
            Err(Error::SpinTooSmall(0))
        ));
    }

    #[test]
    fn unkicked_floquet_is_rotation() {
        let spin = SpinQuantum::new(4);
        let f = build_floquet(spin, KickParams::new(0.7, 0.0).unwrap()).unwrap();
        let w = wigner_rotation(spin, 0.7).unwrap();
        assert!(max_diff(f.u.as_ref(), w.as_ref()) < 1e-15);
        assert!(f.unitarity_defect() < 1e-12);
    }

    #[test]
    fn floquet_on_top_state_matches_two_factor_application() {
        let spin = SpinQuantum::new(10);
        let p = KickParams::new(DEFAULT_ALPHA, 2.6).unwrap();
        let f = build_floquet(spin, p).unwrap();
        let n = spin.dim();
        let mut top = vec![c64::new(0.0, 0.0); n];
        top[n - 1] = c64::new(1.0, 0.0);
        // oracle: rotate by summing over J_x eigenvectors, then kick
        let evd = jx_matrix(spin).self_adjoint_eigen(Side::Lower).unwrap();
        let v = evd.U();
        let mut rotated = vec![c64::new(0.0, 0.0); n];
        for k in 0..n {
            let kx = evd.S()[k];
            let overlap: c64 = (0..n).map(|m| top[m] * v[(m, k)]).sum();
            let phase = c64::new(0.0, -p.alpha * kx).exp();
            for m in 0..n {
                rotated[m] += phase * overlap * v[(m, k)];
            }
        }
        let kicks = kick_phases(spin, p.gamma);
        let got = f.apply(&top);
        for m in 0..n {
            assert!((got[m] - kicks[m] * rotated[m]).norm() < 1e-10);
        }
    }

    #[test]
    fn kick_phase_uses_spin_not_dimension() {
        let spin = SpinQuantum::new(3);
        let ph = kick_phases(spin, 1.5);
        // m = 3 is the last index
        let expect = c64::new(0.0, -1.5 * 9.0 / 6.0).exp();
        assert!((ph[6] - expect).norm() < 1e-15);
    }

    #[test]
    fn free_rotation_spectrum() {
        let spin = SpinQuantum::new(6);
        let a0 = 0.9;
        let f = build_floquet(spin, KickParams::new(a0, 0.0).unwrap()).unwrap();
        let spec = diagonalize(&f).unwrap();
        let mut expect: Vec<f64> = (-6..=6)
            .map(|k| {
                let x = (-a0 * k as f64).rem_euclid(2.0 * PI);
                wrap_phase(if x >= PI { x - 2.0 * PI } else { x })
            })
            .collect();
        expect.sort_by(f64::total_cmp);
        for (a, b) in spec.nu.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn decomposition_reconstructs_and_is_orthonormal() {
        let spin = SpinQuantum::new(30);
        let f = build_floquet(spin, KickParams::new(DEFAULT_ALPHA, 2.6).unwrap()).unwrap();
        let spec = diagonalize(&f).unwrap();
        assert_eq!(spec.len(), 61);
        assert!(spec.nu.windows(2).all(|w| w[0] <= w[1]));
        assert!(spec.nu.iter().all(|&v| (-PI..PI).contains(&v)));
        assert!(max_diff(spec.reconstruct().as_ref(), f.u.as_ref()) < 1e-8);
        assert!(spec.gram_off_diagonal() < 1e-8);
        for p in &spec.parity {
            assert!((p.abs() - 1.0).abs() < 1e-6, "{p}");
        }
        for n in 0..spec.len() {
            let v = spec.vector(n);
            let top = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let k = phase_anchor(&v);
            let big = v[k];
            assert!(big.norm() >= top * (1.0 - 1e-9));
            assert!(big.im.abs() < 1e-14 && big.re > 0.0, "n={n} k={k}");
        }
    }

    #[test]
    fn regular_doublets_get_sharp_parity() {
        // weak kicking has nearly degenerate tunnelling doublets
        let spin = SpinQuantum::new(60);
        let f = build_floquet(spin, KickParams::new(DEFAULT_ALPHA, 0.5).unwrap()).unwrap();
        let spec = diagonalize(&f).unwrap();
        assert!(spec.gram_off_diagonal() < 1e-8);
        assert!(max_diff(spec.reconstruct().as_ref(), f.u.as_ref()) < 1e-8);
        let (even, odd) = spec.parity_sectors();
        assert_eq!(even.len() + odd.len(), 121);
    }

    #[test]
    fn cluster_grouping_wraps() {
        let nu = [-PI, -1.0, -1.0 + 1e-12, 2.0, PI - 1e-12];
        let c = clusters(&nu, 1e-10);
        assert_eq!(c, vec![vec![1, 2], vec![3], vec![4, 0]]);
    }

    #[test]
    fn eigenvector_file_round_trip() {
        let spin = SpinQuantum::new(3);
        let p = KickParams::new(DEFAULT_ALPHA, 1.2).unwrap();
        let spec = diagonalize(&build_floquet(spin, p).unwrap()).unwrap();
        for dtype in [VectorDtype::Complex128, VectorDtype::Complex64] {
            let mut buf = Vec::new();
            write_eigenvectors(&mut buf, &spec, p, dtype).unwrap();
            assert_eq!(buf.len(), 32 + 49 * dtype.tag() as usize);
            let back = read_eigenvectors(buf.as_slice()).unwrap();
            assert_eq!(back.spin, spin);
            assert_eq!(back.params, p);
            let tol = if dtype == VectorDtype::Complex64 { 1e-7 } else { 0.0 };
            for n in 0..7 {
                for k in 0..7 {
                    assert!((back.rows[n][k] - spec.vectors[(k, n)]).norm() <= tol);
                }
            }
        }
        let mut bad = vec![0u8; 40];
        bad[0..4].copy_from_slice(b"NOPE");
        assert!(read_eigenvectors(bad.as_slice()).is_err());
    }
}
