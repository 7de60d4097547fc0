//! Complex linear algebra, unitary DFTs, Kronecker-structured products and
//! seeded sampling shared by the rest of the crate.
//!
//! Vectorization is column-major throughout: `vec(X)` stacks the columns of
//! `X`, so element `(row, col)` of an `rows x cols` matrix lives at
//! `row + rows * col`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CVector = Vec<C64>;

/// Dense complex matrix, row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix { rows, cols, data: vec![C64::new(0.0, 0.0); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = CMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::InvalidDimension(format!(
                "{} entries cannot form a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(CMatrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        CMatrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn column(&self, c: usize) -> CVector {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn adjoint(&self) -> CMatrix {
        CMatrix::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn matmul(&self, rhs: &CMatrix) -> Result<CMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::InvalidDimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = CMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                let row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[C64]) -> Result<CVector> {
        if v.len() != self.cols {
            return Err(Error::InvalidDimension(format!(
                "vector of length {} does not match {} columns",
                v.len(),
                self.cols
            )));
        }
        Ok((0..self.rows)
            .map(|r| {
                self.data[r * self.cols..(r + 1) * self.cols]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect())
    }

    /// Dense Kronecker product `self ⊗ rhs`.
    pub fn kron(&self, rhs: &CMatrix) -> CMatrix {
        CMatrix::from_fn(self.rows * rhs.rows, self.cols * rhs.cols, |r, c| {
            self[(r / rhs.rows, c / rhs.cols)] * rhs[(r % rhs.rows, c % rhs.cols)]
        })
    }

    pub fn frobenius_norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn max_abs_diff(&self, other: &CMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        max_abs_diff(&self.data, &other.data)
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        self.is_square()
            && (0..self.rows).all(|r| {
                (0..self.cols).all(|c| {
                    let want = if r == c { 1.0 } else { 0.0 };
                    (self[(r, c)] - C64::new(want, 0.0)).norm() <= tol
                })
            })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl std::ops::Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.cols + c]
    }
}

pub fn max_abs_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    // <a, b> = a^H b
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Normalized DFT matrix, `F[a, b] = exp(-j 2π a b / K) / √K`.
pub fn dft_matrix(k: usize) -> Result<CMatrix> {
    if k == 0 {
        return Err(Error::InvalidDimension("DFT size must be at least 1".into()));
    }
    let scale = 1.0 / (k as f64).sqrt();
    Ok(CMatrix::from_fn(k, k, |a, b| {
        // reduce the exponent mod K before converting to keep the phase exact
        let e = ((a * b) % k) as f64;
        C64::from_polar(scale, -2.0 * std::f64::consts::PI * e / k as f64)
    }))
}

thread_local! {
    static PLANS: RefCell<HashMap<(usize, bool), Arc<dyn Fft<f64>>>> = RefCell::new(HashMap::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|cell| {
        cell.borrow_mut()
            .entry((len, inverse))
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                if inverse {
                    planner.plan_fft_inverse(len)
                } else {
                    planner.plan_fft_forward(len)
                }
            })
            .clone()
    })
}

/// Applies the unitary DFT (or its adjoint) in place to every consecutive
/// chunk of `len` samples in `buf`.
pub(crate) fn fft_chunks_in_place(buf: &mut [C64], len: usize, inverse: bool) {
    debug_assert!(len > 0 && buf.len().is_multiple_of(len));
    let fft = plan(len, inverse);
    fft.process(buf);
    let scale = 1.0 / (len as f64).sqrt();
    for z in buf.iter_mut() {
        *z *= scale;
    }
}

/// `F_K v` (or `F_K^† v` when `inverse`) for `K = v.len()`.
pub fn fft_apply(v: &[C64], inverse: bool) -> Result<CVector> {
    if v.is_empty() {
        return Err(Error::InvalidDimension("cannot transform an empty vector".into()));
    }
    let mut out = v.to_vec();
    fft_chunks_in_place(&mut out, v.len(), inverse);
    Ok(out)
}

/// `(A ⊗ B) v` without forming the Kronecker product, using
/// `(A ⊗ B) vec(X) = vec(B X Aᵀ)` with `X` the `q x p` column-major reshape of `v`.
pub fn kron_apply(a: &CMatrix, b: &CMatrix, v: &[C64]) -> Result<CVector> {
    if !a.is_square() || !b.is_square() {
        return Err(Error::InvalidDimension("Kronecker factors must be square".into()));
    }
    let (p, q) = (a.rows(), b.rows());
    if v.len() != p * q {
        return Err(Error::InvalidDimension(format!(
            "vector of length {} does not match {p}*{q}",
            v.len()
        )));
    }
    // T = B X, column by column
    let mut t = vec![C64::new(0.0, 0.0); p * q];
    for col in 0..p {
        let x = &v[col * q..(col + 1) * q];
        for i in 0..q {
            t[col * q + i] = (0..q).map(|k| b[(i, k)] * x[k]).sum();
        }
    }
    // Y = T Aᵀ: column j of Y is Σ_c A[j, c] T[:, c]
    let mut y = vec![C64::new(0.0, 0.0); p * q];
    for j in 0..p {
        for c in 0..p {
            let coef = a[(j, c)];
            for i in 0..q {
                y[j * q + i] += coef * t[c * q + i];
            }
        }
    }
    Ok(y)
}

/// Seeded random stream.
///
/// A stream is identified by `(master_seed, stream_id)`: the ChaCha20 key is
/// derived from the master seed and the stream id selects the ChaCha stream,
/// so substreams never overlap and are reproducible regardless of how work is
/// scheduled across threads.
#[derive(Debug, Clone)]
pub struct Rng {
    master_seed: u64,
    stream_id: u64,
    inner: ChaCha20Rng,
}

impl Rng {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(master_seed);
        inner.set_stream(stream_id);
        Rng { master_seed, stream_id, inner }
    }

    /// Substream for `(tag, index)` under this generator's master seed.
    pub fn substream(&self, tag: &str, index: u64) -> Rng {
        Rng::new(self.master_seed, stream_id(tag, index))
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn uniform(&mut self) -> f64 {
        // 53 random mantissa bits in [0, 1)
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0);
        (self.uniform() * n as f64) as usize % n
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        // Fisher-Yates
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Stream id for a purpose tag and an index: `splitmix64(fnv1a(tag) ^ splitmix64(index))`.
pub fn stream_id(tag: &str, index: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(h ^ splitmix64(index))
}

/// Nakagami-m amplitude with spread `omega = E[A²]`, drawn as `√G` with
/// `G ~ Gamma(shape = m, scale = omega / m)`.
pub fn sample_nakagami(rng: &mut Rng, m: f64, omega: f64) -> Result<f64> {
    nakagami(m, omega).map(|g| g.sample(rng).sqrt())
}

/// Validated Gamma distribution backing the Nakagami sampler; reuse it when
/// drawing many amplitudes with the same parameters.
pub fn nakagami(m: f64, omega: f64) -> Result<Gamma<f64>> {
    if !(m >= 0.5) || !m.is_finite() {
        return Err(Error::InvalidParameter(format!("Nakagami shape m = {m} must be >= 0.5")));
    }
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::InvalidParameter(format!("Nakagami spread omega = {omega} must be > 0")));
    }
    Gamma::new(m, omega / m).map_err(|e| Error::InvalidParameter(e.to_string()))
}

/// Circularly-symmetric `CN(0, variance)` sample.
pub fn sample_gaussian_complex(rng: &mut Rng, variance: f64) -> Result<C64> {
    if !(variance >= 0.0) {
        return Err(Error::InvalidParameter(format!("variance {variance} must be >= 0")));
    }
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Ok(C64::new(s * re, s * im))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_vec(rng: &mut Rng, n: usize) -> CVector {
        (0..n).map(|_| c(rng.uniform() - 0.5, rng.uniform() - 0.5)).collect()
    }

    fn random_matrix(rng: &mut Rng, n: usize) -> CMatrix {
        CMatrix::from_fn(n, n, |_, _| c(rng.uniform() - 0.5, rng.uniform() - 0.5))
    }

    #[test]
    fn dft_small_cases() {
        let f1 = dft_matrix(1).unwrap();
        assert_eq!(f1.as_slice(), &[c(1.0, 0.0)]);

        let f2 = dft_matrix(2).unwrap();
        let s = 1.0 / 2f64.sqrt();
        let want = [c(s, 0.0), c(s, 0.0), c(s, 0.0), c(-s, 0.0)];
        assert!(max_abs_diff(f2.as_slice(), &want) < 1e-15);

        assert!(matches!(dft_matrix(0), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn dft_is_unitary() {
        for k in [1usize, 2, 3, 5, 8, 17, 64, 100, 256] {
            let f = dft_matrix(k).unwrap();
            let prod = f.matmul(&f.adjoint()).unwrap();
            assert!(prod.is_identity(1e-10), "K={k}");
        }
        let f8 = dft_matrix(8).unwrap();
        assert!(f8.matmul(&f8.adjoint()).unwrap().is_identity(1e-12));
    }

    #[test]
    fn fft_delta_and_constant() {
        let v = vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        let out = fft_apply(&v, false).unwrap();
        assert!(max_abs_diff(&out, &[c(0.5, 0.0); 4]) < 1e-15);

        let k = c(0.3, -1.2);
        let out = fft_apply(&vec![k; 16], false).unwrap();
        let mut want = vec![c(0.0, 0.0); 16];
        want[0] = k * 4.0;
        assert!(max_abs_diff(&out, &want) < 1e-14);

        assert!(matches!(fft_apply(&[], false), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn fft_matches_dense_dft() {
        let mut rng = Rng::new(7, 0);
        for k in [64usize, 12, 7] {
            let v = random_vec(&mut rng, k);
            let f = dft_matrix(k).unwrap();
            let dense = f.matvec(&v).unwrap();
            assert!(max_abs_diff(&fft_apply(&v, false).unwrap(), &dense) < 1e-10);
            let dense_inv = f.adjoint().matvec(&v).unwrap();
            assert!(max_abs_diff(&fft_apply(&v, true).unwrap(), &dense_inv) < 1e-10);
        }
    }

    #[test]
    fn fft_round_trip() {
        let mut rng = Rng::new(8, 0);
        for k in [4usize, 16, 64, 4096] {
            let v = random_vec(&mut rng, k);
            let back = fft_apply(&fft_apply(&v, true).unwrap(), false).unwrap();
            assert!(max_abs_diff(&v, &back) < 1e-10);
        }
    }

    #[test]
    fn kron_identity_and_dense() {
        let v: CVector = (0..6).map(|i| c(i as f64, -(i as f64))).collect();
        let out = kron_apply(&CMatrix::identity(2), &CMatrix::identity(3), &v).unwrap();
        assert_eq!(out, v);

        let mut rng = Rng::new(9, 0);
        for p in 2..=4 {
            for q in 2..=4 {
                let a = random_matrix(&mut rng, p);
                let b = random_matrix(&mut rng, q);
                let v = random_vec(&mut rng, p * q);
                let dense = a.kron(&b).matvec(&v).unwrap();
                assert!(max_abs_diff(&kron_apply(&a, &b, &v).unwrap(), &dense) < 1e-12);
            }
        }

        let f2 = dft_matrix(2).unwrap();
        let e0 = vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        let out = kron_apply(&f2, &f2, &e0).unwrap();
        assert!(max_abs_diff(&out, &f2.kron(&f2).column(0)) < 1e-15);
        assert!(max_abs_diff(&out, &[c(0.5, 0.0); 4]) < 1e-15);

        assert!(kron_apply(&f2, &f2, &v).is_err());
    }

    #[test]
    fn rng_streams_are_reproducible_and_independent() {
        let a: Vec<u64> = {
            let mut r = Rng::new(42, 3);
            (0..1000).map(|_| r.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut r = Rng::new(42, 3);
            (0..1000).map(|_| r.next_u64()).collect()
        };
        assert_eq!(a, b);

        let n = 100_000;
        let mut r1 = Rng::new(42, stream_id("frame", 0));
        let mut r2 = Rng::new(42, stream_id("frame", 1));
        let x: Vec<f64> = (0..n).map(|_| r1.uniform()).collect();
        let y: Vec<f64> = (0..n).map(|_| r2.uniform()).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (mx, my) = (mean(&x), mean(&y));
        let cov: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        assert!((cov / (vx * vy).sqrt()).abs() < 0.01);
    }

    #[test]
    fn nakagami_parameter_checks() {
        let mut rng = Rng::new(1, 1);
        assert!(sample_nakagami(&mut rng, 0.4, 1.0).is_err());
        assert!(sample_nakagami(&mut rng, 1.0, 0.0).is_err());
        assert!(sample_nakagami(&mut rng, 0.5, 1.0).unwrap() >= 0.0);
    }

    #[test]
    fn nakagami_large_m_is_deterministic_limit() {
        let mut rng = Rng::new(1, 2);
        for _ in 0..1000 {
            let a = sample_nakagami(&mut rng, 1e6, 4.0).unwrap();
            assert!((a - 2.0).abs() < 0.02, "{a}");
        }
    }

    #[test]
    fn nakagami_moments() {
        let n = 1_000_000;
        for (m, stream) in [(1.0, 10u64), (2.0, 11)] {
            let mut rng = Rng::new(5, stream);
            let g = nakagami(m, 1.0).unwrap();
            let (mut s2, mut s4) = (0.0, 0.0);
            for _ in 0..n {
                let a2 = g.sample(&mut rng);
                s2 += a2;
                s4 += a2 * a2;
            }
            let (e2, e4) = (s2 / n as f64, s4 / n as f64);
            assert!((0.99..=1.01).contains(&e2), "m={m} E[A^2]={e2}");
            if m == 2.0 {
                let k = e4 / (e2 * e2);
                assert!((1.47..=1.53).contains(&k), "kurtosis ratio {k}");
            }
        }
    }

    #[test]
    fn gaussian_moments() {
        let mut rng = Rng::new(3, 3);
        assert_eq!(sample_gaussian_complex(&mut rng, 0.0).unwrap(), c(0.0, 0.0));
        assert!(sample_gaussian_complex(&mut rng, -1.0).is_err());

        let n = 1_000_000;
        let mut power = 0.0;
        let mut mean = c(0.0, 0.0);
        for _ in 0..n {
            let w = sample_gaussian_complex(&mut rng, 1.0).unwrap();
            power += w.norm_sqr();
            mean += w;
        }
        assert!((0.99..=1.01).contains(&(power / n as f64)));
        assert!((mean / n as f64).norm() < 0.005);
    }
}
