//! Nakagami-m delay-Doppler channels.
//!
//! The time-domain channel of one link is `H = Σ_p h_p Π^{l_p} Δ^{k_p+κ_p}`
//! with `Π` the `MN x MN` forward cyclic shift and
//! `Δ = diag(exp(j2πn/MN))`, `n = 0..MN-1`. The effective delay-Doppler
//! channel is `H_eff = (F_N ⊗ F_M^† G_rx) H (F_N^† ⊗ G_tx F_M)`, applied here
//! without ever forming `H` or `H_eff` densely.

use std::f64::consts::PI;

use rand_distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modem::{
    demodulate_adjoint_slice, demodulate_slice, modulate_adjoint_slice, modulate_slice, PulsePair,
    TimeSignal,
};
use crate::numerics::{nakagami, CMatrix, CVector, Rng, C64};

/// Default upper bound on `MN` for dense materialization.
pub const DEFAULT_DENSE_CAP: usize = 4096;

/// One propagation path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub gain: C64,
    pub amplitude: f64,
    pub phase: f64,
    pub delay: usize,
    pub doppler: i64,
    pub frac_doppler: f64,
}

impl Path {
    /// Builds a path from amplitude and phase, keeping `gain = A e^{jφ}`.
    pub fn new(amplitude: f64, phase: f64, delay: usize, doppler: i64, frac_doppler: f64) -> Self {
        Path { gain: C64::from_polar(amplitude, phase), amplitude, phase, delay, doppler, frac_doppler }
    }

    /// Path with an arbitrary complex gain.
    pub fn with_gain(gain: C64, delay: usize, doppler: i64, frac_doppler: f64) -> Self {
        Path { gain, amplitude: gain.norm(), phase: gain.arg(), delay, doppler, frac_doppler }
    }

    /// Total Doppler exponent `k + κ`.
    pub fn nu(&self) -> f64 {
        self.doppler as f64 + self.frac_doppler
    }
}

/// Channel realization of one `(r, t)` link.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    m: usize,
    n: usize,
    paths: Vec<Path>,
}

impl PathSet {
    pub fn new(m: usize, n: usize, paths: Vec<Path>) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::InvalidDimension(format!("grid {m}x{n} must be non-empty")));
        }
        if paths.is_empty() {
            return Err(Error::InvalidProfile("a path set needs at least one path".into()));
        }
        for p in &paths {
            if p.delay >= m {
                return Err(Error::InvalidProfile(format!("delay {} outside [0, {}]", p.delay, m - 1)));
            }
            if !(p.frac_doppler > -0.5 && p.frac_doppler <= 0.5) && p.frac_doppler != 0.0 {
                return Err(Error::InvalidProfile(format!(
                    "fractional Doppler {} outside (-0.5, 0.5]",
                    p.frac_doppler
                )));
            }
            if 2 * p.doppler.unsigned_abs() as usize >= n {
                return Err(Error::InvalidProfile(format!("Doppler bin {} needs |k| < N/2", p.doppler)));
            }
        }
        Ok(PathSet { m, n, paths })
    }

    /// Single path `h = 1` with no delay or Doppler.
    pub fn identity(m: usize, n: usize) -> Self {
        PathSet { m, n, paths: vec![Path::new(1.0, 0.0, 0, 0, 0.0)] }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.m * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn total_power(&self) -> f64 {
        self.paths.iter().map(|p| p.gain.norm_sqr()).sum()
    }
}

/// Per-path average power allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OmegaPolicy {
    /// `"uniform"`: `Ω_p = 1/P`.
    Named(String),
    /// Explicit per-path powers; must sum to one.
    Explicit(Vec<f64>),
}

impl Default for OmegaPolicy {
    fn default() -> Self {
        OmegaPolicy::Named("uniform".into())
    }
}

/// Statistical description of the per-link channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelProfile {
    paths: usize,
    fading_m: f64,
    omega: Vec<f64>,
    l_max: usize,
    k_max: usize,
    fractional_doppler: bool,
}

impl ChannelProfile {
    pub fn new(
        paths: usize,
        fading_m: f64,
        omega: &OmegaPolicy,
        l_max: usize,
        k_max: usize,
        fractional_doppler: bool,
    ) -> Result<Self> {
        if paths == 0 {
            return Err(Error::InvalidProfile("path count must be at least 1".into()));
        }
        if !(fading_m >= 0.5) {
            return Err(Error::InvalidProfile(format!("fading parameter m = {fading_m} must be >= 0.5")));
        }
        if paths > l_max + 1 {
            return Err(Error::InvalidProfile(format!(
                "{paths} paths cannot have distinct delays in [0, {l_max}]"
            )));
        }
        let omega = match omega {
            OmegaPolicy::Named(name) if name == "uniform" => vec![1.0 / paths as f64; paths],
            OmegaPolicy::Named(name) => {
                return Err(Error::InvalidProfile(format!("unknown omega policy `{name}`")))
            }
            OmegaPolicy::Explicit(w) => {
                if w.len() != paths {
                    return Err(Error::InvalidProfile(format!(
                        "{} path powers given for {paths} paths",
                        w.len()
                    )));
                }
                if w.iter().any(|x| !(*x > 0.0)) {
                    return Err(Error::InvalidProfile("path powers must be positive".into()));
                }
                let total: f64 = w.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidProfile(format!("path powers sum to {total}, not 1")));
                }
                w.clone()
            }
        };
        Ok(ChannelProfile { paths, fading_m, omega, l_max, k_max, fractional_doppler })
    }

    pub fn paths(&self) -> usize {
        self.paths
    }

    pub fn fading_m(&self) -> f64 {
        self.fading_m
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn fractional_doppler(&self) -> bool {
        self.fractional_doppler
    }
}

/// Maximum integer Doppler bin, `round(N · f_d,max / Δf)`.
pub fn auto_k_max(n: usize, max_doppler_hz: f64, subcarrier_spacing_hz: f64) -> usize {
    (n as f64 * max_doppler_hz / subcarrier_spacing_hz).round() as usize
}

/// Draws one link realization.
///
/// Delays: the first path sits at delay 0 and the rest take distinct delays
/// from `{1..l_max}`. Per path, in order: amplitude, phase, integer Doppler,
/// then fractional Doppler when enabled.
pub fn sample_pathset(rng: &mut Rng, profile: &ChannelProfile, m: usize, n: usize) -> Result<PathSet> {
    if profile.l_max >= m {
        return Err(Error::InvalidProfile(format!("l_max = {} needs M > l_max (M = {m})", profile.l_max)));
    }
    if 2 * profile.k_max >= n {
        return Err(Error::InvalidProfile(format!("k_max = {} needs k_max < N/2 (N = {n})", profile.k_max)));
    }
    let mut pool: Vec<usize> = (1..=profile.l_max).collect();
    let mut delays = vec![0usize];
    for i in 0..profile.paths - 1 {
        let j = i + rng.below(pool.len() - i);
        pool.swap(i, j);
        delays.push(pool[i]);
    }
    let span = 2 * profile.k_max + 1;
    let mut paths = Vec::with_capacity(profile.paths);
    for (p, &delay) in delays.iter().enumerate() {
        let amplitude = nakagami(profile.fading_m, profile.omega[p])?.sample(rng).sqrt();
        let phase = 2.0 * PI * rng.uniform();
        let doppler = rng.below(span) as i64 - profile.k_max as i64;
        // (-0.5, 0.5]
        let frac = if profile.fractional_doppler { 0.5 - rng.uniform() } else { 0.0 };
        paths.push(Path::new(amplitude, phase, delay, doppler, frac));
    }
    PathSet::new(m, n, paths)
}

fn ramp_phase(index: usize, nu: f64, len: usize) -> C64 {
    let turns = (index as f64 * nu).rem_euclid(len as f64) / len as f64;
    C64::from_polar(1.0, 2.0 * PI * turns)
}

/// `Π^l v`: `out[n] = v[(n - l) mod len]`.
pub fn delay_shift_apply(v: &[C64], l: usize) -> Result<CVector> {
    if l >= v.len() {
        return Err(Error::InvalidParameter(format!("delay {l} must be below {}", v.len())));
    }
    let mut out = v.to_vec();
    out.rotate_right(l);
    Ok(out)
}

/// `Δ^{ν} v`: `out[n] = v[n] exp(j2π n ν / len)`.
pub fn doppler_ramp_apply(v: &[C64], nu: f64) -> CVector {
    let len = v.len();
    v.iter().enumerate().map(|(i, x)| x * ramp_phase(i, nu, len)).collect()
}

fn path_ramps(ps: &PathSet) -> Vec<Vec<C64>> {
    let len = ps.len();
    ps.paths
        .iter()
        .map(|p| {
            let nu = p.nu();
            (0..len).map(|i| ramp_phase(i, nu, len)).collect()
        })
        .collect()
}

fn time_apply_with(ps: &PathSet, ramps: &[Vec<C64>], s: &[C64]) -> CVector {
    let len = s.len();
    let mut out = vec![C64::new(0.0, 0.0); len];
    for (p, ramp) in ps.paths.iter().zip(ramps) {
        let l = p.delay;
        for (src, (x, r)) in s.iter().zip(ramp).enumerate() {
            let dst = if src + l >= len { src + l - len } else { src + l };
            out[dst] += p.gain * x * r;
        }
    }
    out
}

fn time_adjoint_with(ps: &PathSet, ramps: &[Vec<C64>], y: &[C64]) -> CVector {
    let len = y.len();
    let mut out = vec![C64::new(0.0, 0.0); len];
    for (p, ramp) in ps.paths.iter().zip(ramps) {
        let l = p.delay;
        let g = p.gain.conj();
        for (src, (o, r)) in out.iter_mut().zip(ramp).enumerate() {
            let from = if src + l >= len { src + l - len } else { src + l };
            *o += g * r.conj() * y[from];
        }
    }
    out
}

/// `r = Σ_p h_p Π^{l_p} Δ^{k_p+κ_p} s` in `O(P·MN)`.
pub fn time_channel_apply(ps: &PathSet, s: &TimeSignal) -> Result<TimeSignal> {
    if s.m() != ps.m || s.n() != ps.n {
        return Err(Error::InvalidDimension(format!(
            "signal is {}x{} but the channel is {}x{}",
            s.m(),
            s.n(),
            ps.m,
            ps.n
        )));
    }
    let ramps = path_ramps(ps);
    TimeSignal::new(ps.m, ps.n, time_apply_with(ps, &ramps, s.samples()))
}

/// Dense time-domain channel matrix, built from explicit `Π` and `Δ` powers.
pub fn time_channel_dense(ps: &PathSet, cap: usize) -> Result<CMatrix> {
    let len = ps.len();
    if len > cap {
        return Err(Error::Capacity(format!("MN = {len} exceeds the dense cap {cap}")));
    }
    let mut h = CMatrix::zeros(len, len);
    for p in &ps.paths {
        let nu = p.nu();
        for col in 0..len {
            let row = (col + p.delay) % len;
            h[(row, col)] += p.gain * ramp_phase(col, nu, len);
        }
    }
    Ok(h)
}

/// Matrix-free `H_eff` for one link with cached Doppler ramps.
#[derive(Debug, Clone)]
pub struct EffectiveChannel {
    paths: PathSet,
    pulses: PulsePair,
    ramps: Vec<Vec<C64>>,
}

impl EffectiveChannel {
    pub fn new(paths: PathSet, pulses: PulsePair) -> Result<Self> {
        if pulses.m() != paths.m {
            return Err(Error::InvalidDimension(format!(
                "pulses are {0}x{0} but the channel has M = {1}",
                pulses.m(),
                paths.m
            )));
        }
        let ramps = path_ramps(&paths);
        Ok(EffectiveChannel { paths, pulses, ramps })
    }

    pub fn paths(&self) -> &PathSet {
        &self.paths
    }

    pub fn pulses(&self) -> &PulsePair {
        &self.pulses
    }

    fn check(&self, v: &[C64]) -> Result<()> {
        if v.len() != self.paths.len() {
            return Err(Error::InvalidDimension(format!(
                "vector of length {} does not match MN = {}",
                v.len(),
                self.paths.len()
            )));
        }
        Ok(())
    }

    /// Time-domain channel only (no OTFS transforms).
    pub fn apply_time(&self, s: &[C64]) -> Result<CVector> {
        self.check(s)?;
        Ok(time_apply_with(&self.paths, &self.ramps, s))
    }

    pub fn apply_time_adjoint(&self, y: &[C64]) -> Result<CVector> {
        self.check(y)?;
        Ok(time_adjoint_with(&self.paths, &self.ramps, y))
    }

    /// `H_eff x`.
    pub fn apply(&self, x: &[C64]) -> Result<CVector> {
        self.check(x)?;
        let (m, n) = (self.paths.m, self.paths.n);
        let s = modulate_slice(x, m, n, &self.pulses);
        let r = time_apply_with(&self.paths, &self.ramps, &s);
        Ok(demodulate_slice(&r, m, n, &self.pulses))
    }

    /// `H_eff^† y`.
    pub fn adjoint_apply(&self, y: &[C64]) -> Result<CVector> {
        self.check(y)?;
        let (m, n) = (self.paths.m, self.paths.n);
        let r = demodulate_adjoint_slice(y, m, n, &self.pulses);
        let s = time_adjoint_with(&self.paths, &self.ramps, &r);
        Ok(modulate_adjoint_slice(&s, m, n, &self.pulses))
    }

    /// Materializes `H_eff` column by column.
    pub fn dense(&self, cap: usize) -> Result<CMatrix> {
        let len = self.paths.len();
        if len > cap {
            return Err(Error::Capacity(format!("MN = {len} exceeds the dense cap {cap}; use the operator form")));
        }
        let cols: Vec<CVector> = (0..len)
            .into_par_iter()
            .map(|k| {
                let mut e = vec![C64::new(0.0, 0.0); len];
                e[k] = C64::new(1.0, 0.0);
                self.apply(&e).expect("length checked")
            })
            .collect();
        Ok(CMatrix::from_fn(len, len, |r, c| cols[c][r]))
    }
}

pub fn effective_dense(ps: &PathSet, pulses: &PulsePair) -> Result<CMatrix> {
    effective_dense_capped(ps, pulses, DEFAULT_DENSE_CAP)
}

pub fn effective_dense_capped(ps: &PathSet, pulses: &PulsePair, cap: usize) -> Result<CMatrix> {
    EffectiveChannel::new(ps.clone(), pulses.clone())?.dense(cap)
}

pub fn effective_apply(ps: &PathSet, pulses: &PulsePair, x: &[C64]) -> Result<CVector> {
    EffectiveChannel::new(ps.clone(), pulses.clone())?.apply(x)
}

pub fn effective_adjoint_apply(ps: &PathSet, pulses: &PulsePair, y: &[C64]) -> Result<CVector> {
    EffectiveChannel::new(ps.clone(), pulses.clone())?.adjoint_apply(y)
}

/// How to obtain `diag(Σ_r H_eff^† H_eff)` when the receive pulse is not the identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainFallback {
    /// Only the unitary-receiver paths are allowed.
    Disabled,
    /// Column-by-column evaluation of `H_eff` for `MN` up to the cap.
    Dense { cap: usize },
}

/// Diagonal of `G_t = Σ_r H_eff^{(r,t)†} H_eff^{(r,t)}` for the links of one transmit antenna.
///
/// With an identity receive pulse the receive transform is unitary, so entry
/// `k` equals `Σ_r ‖H_r V e_k‖²` with `V = F_N^† ⊗ G_tx F_M`. Identity pulses
/// on both sides use the closed form in [`gain_diagonal_closed_form`].
pub fn mrc_gain_diagonal(links: &[&PathSet], pulses: &PulsePair, fallback: GainFallback) -> Result<Vec<f64>> {
    let (m, n) = check_links(links, pulses)?;
    if pulses.rx_is_identity() {
        if pulses.tx_is_identity() {
            Ok(gain_diagonal_closed_form(links))
        } else {
            Ok(gain_diagonal_columns(links, pulses))
        }
    } else {
        match fallback {
            GainFallback::Disabled => Err(Error::Unsupported(
                "non-identity receive pulse requires the dense gain fallback".into(),
            )),
            GainFallback::Dense { cap } => {
                if m * n > cap {
                    return Err(Error::Capacity(format!("MN = {} exceeds the dense cap {cap}", m * n)));
                }
                let ops: Vec<EffectiveChannel> = links
                    .iter()
                    .map(|ps| EffectiveChannel::new((*ps).clone(), pulses.clone()))
                    .collect::<Result<_>>()?;
                Ok((0..m * n)
                    .into_par_iter()
                    .map(|k| {
                        let mut e = vec![C64::new(0.0, 0.0); m * n];
                        e[k] = C64::new(1.0, 0.0);
                        ops.iter()
                            .map(|op| op.apply(&e).expect("length checked").iter().map(|z| z.norm_sqr()).sum::<f64>())
                            .sum()
                    })
                    .collect())
            }
        }
    }
}

fn check_links(links: &[&PathSet], pulses: &PulsePair) -> Result<(usize, usize)> {
    let first = links
        .first()
        .ok_or_else(|| Error::Config("at least one receive link is required".into()))?;
    let (m, n) = (first.m, first.n);
    if links.iter().any(|ps| ps.m != m || ps.n != n) {
        return Err(Error::InvalidDimension("links disagree on the grid size".into()));
    }
    if pulses.m() != m {
        return Err(Error::InvalidDimension("pulse size does not match M".into()));
    }
    Ok((m, n))
}

/// Direct evaluation: `Σ_r ‖H_r V e_k‖²` for every `k`, `O(P (MN)²)` per link.
/// Requires a unitary (identity) receive pulse.
pub fn gain_diagonal_columns(links: &[&PathSet], pulses: &PulsePair) -> Vec<f64> {
    let (m, n) = (links[0].m, links[0].n);
    let len = m * n;
    let ramps: Vec<Vec<Vec<C64>>> = links.iter().map(|ps| path_ramps(ps)).collect();
    (0..len)
        .into_par_iter()
        .map(|k| {
            let mut e = vec![C64::new(0.0, 0.0); len];
            e[k] = C64::new(1.0, 0.0);
            let col = modulate_slice(&e, m, n, pulses);
            links
                .iter()
                .zip(&ramps)
                .map(|(ps, r)| time_apply_with(ps, r, &col).iter().map(|z| z.norm_sqr()).sum::<f64>())
                .sum()
        })
        .collect()
}

/// Exact `O(P²·MN + MN log MN)` evaluation for identity pulses.
///
/// The columns of `V = F_N^† ⊗ F_M` have constant modulus, so for every path
/// pair `(p, q)` with `d = (l_p - l_q) mod MN` the cross term
/// `<Π^{l_p}Δ^{ν_p} v_k, Π^{l_q}Δ^{ν_q} v_k>` only depends on `k = (a, b)`
/// through `exp(-j2π d a/M) exp(j2π c b/N)`, where the column carry `c` takes
/// one of two values per pair. Accumulating the pair sums on an `M x N` grid
/// indexed by `(d mod M, c)` turns the whole diagonal into one 2-D DFT.
pub fn gain_diagonal_closed_form(links: &[&PathSet]) -> Vec<f64> {
    let (m, n) = (links[0].m, links[0].n);
    let len = m * n;
    let mut coeff = vec![C64::new(0.0, 0.0); len];
    for ps in links {
        let ramps = path_ramps(ps);
        for (p, rp) in ps.paths.iter().zip(&ramps) {
            for (q, rq) in ps.paths.iter().zip(&ramps) {
                let d = (p.delay + len - q.delay) % len;
                let (dm, base_carry) = (d % m, d / m);
                // rows i < m - dm keep carry `base_carry`, the rest carry one more
                let split = m - dm;
                let mut sums = [C64::new(0.0, 0.0); 2];
                for u in 0..len {
                    let w = if u + d >= len { u + d - len } else { u + d };
                    let t = rp[u].conj() * rq[w];
                    sums[usize::from(u % m >= split)] += t;
                }
                let g = p.gain.conj() * q.gain;
                for (extra, s) in sums.iter().enumerate() {
                    let carry = (base_carry + extra) % n;
                    coeff[dm + m * carry] += g * s;
                }
            }
        }
    }
    // Σ C[dm, c] exp(-j2π dm a/M) exp(+j2π c b/N) is the unnormalized version
    // of the modulator's column/row transform pair.
    let scale = 1.0 / (len as f64).sqrt();
    modulate_slice(&coeff, m, n, &PulsePair::identity(m))
        .into_iter()
        .map(|z| (z.re * scale).max(0.0))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{dft_matrix, max_abs_diff};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_paths(rng: &mut Rng, m: usize, n: usize, count: usize, frac: bool) -> PathSet {
        let profile = ChannelProfile::new(
            count,
            1.0,
            &OmegaPolicy::default(),
            (m - 1).min(count.max(1) + 1),
            (n - 1) / 2,
            frac,
        )
        .unwrap();
        sample_pathset(rng, &profile, m, n).unwrap()
    }

    fn random_vec(rng: &mut Rng, len: usize) -> CVector {
        (0..len).map(|_| c(rng.uniform() - 0.5, rng.uniform() - 0.5)).collect()
    }

    /// Dense `(F_N ⊗ F_M^† G_rx) H (F_N^† ⊗ G_tx F_M)` straight from the definition.
    fn literal_effective(ps: &PathSet, pulses: &PulsePair) -> CMatrix {
        let (fm, fn_) = (dft_matrix(ps.m()).unwrap(), dft_matrix(ps.n()).unwrap());
        let rx = fn_.kron(&fm.adjoint().matmul(pulses.g_rx()).unwrap());
        let tx = fn_.adjoint().kron(&pulses.g_tx().matmul(&fm).unwrap());
        let h = time_channel_dense(ps, usize::MAX).unwrap();
        rx.matmul(&h).unwrap().matmul(&tx).unwrap()
    }

    #[test]
    fn shift_and_ramp_definitions() {
        let v: CVector = (1..=4).map(|i| c(i as f64, 0.0)).collect();
        assert_eq!(delay_shift_apply(&v, 0).unwrap(), v);
        let want: CVector = [4.0, 1.0, 2.0, 3.0].iter().map(|&x| c(x, 0.0)).collect();
        assert_eq!(delay_shift_apply(&v, 1).unwrap(), want);
        assert!(delay_shift_apply(&v, 4).is_err());

        assert_eq!(doppler_ramp_apply(&v, 0.0), v);
        let ones = vec![c(1.0, 0.0); 4];
        let out = doppler_ramp_apply(&ones, 1.0);
        assert!(max_abs_diff(&out, &[c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0), c(0.0, -1.0)]) < 1e-15);

        let mut rng = Rng::new(21, 0);
        let v = random_vec(&mut rng, 8);
        let dense = CMatrix::from_fn(8, 8, |r, col| {
            if r == col {
                C64::from_polar(1.0, 2.0 * PI * r as f64 * 0.5 / 8.0)
            } else {
                c(0.0, 0.0)
            }
        });
        assert!(max_abs_diff(&doppler_ramp_apply(&v, 0.5), &dense.matvec(&v).unwrap()) < 1e-12);
    }

    #[test]
    fn time_channel_simple_cases() {
        let s = TimeSignal::new(2, 2, (1..=4).map(|i| c(i as f64, 0.0)).collect()).unwrap();
        let id = PathSet::identity(2, 2);
        assert_eq!(time_channel_apply(&id, &s).unwrap(), s);

        let delay = PathSet::new(2, 2, vec![Path::new(1.0, 0.0, 1, 0, 0.0)]).unwrap();
        let r = time_channel_apply(&delay, &s).unwrap();
        let want: CVector = [4.0, 1.0, 2.0, 3.0].iter().map(|&x| c(x, 0.0)).collect();
        assert!(max_abs_diff(r.samples(), &want) < 1e-15);

        let wrong = TimeSignal::new(4, 1, vec![c(0.0, 0.0); 4]).unwrap();
        assert!(time_channel_apply(&id, &wrong).is_err());
    }

    #[test]
    fn time_channel_matches_dense_and_sparsity() {
        let mut rng = Rng::new(22, 0);
        let ps = random_paths(&mut rng, 4, 4, 3, true);
        let s = random_vec(&mut rng, 16);
        let dense = time_channel_dense(&ps, 4096).unwrap().matvec(&s).unwrap();
        let sig = TimeSignal::new(4, 4, s).unwrap();
        assert!(max_abs_diff(time_channel_apply(&ps, &sig).unwrap().samples(), &dense) < 1e-10);

        let ps = random_paths(&mut rng, 8, 8, 4, false);
        let h = time_channel_dense(&ps, 4096).unwrap();
        for r in 0..64 {
            let nz = (0..64).filter(|&col| h[(r, col)].norm() > 0.0).count();
            assert_eq!(nz, 4);
            let nz = (0..64).filter(|&col| h[(col, r)].norm() > 0.0).count();
            assert_eq!(nz, 4);
        }
    }

    #[test]
    fn sample_pathset_limits() {
        let mut rng = Rng::new(23, 0);
        let profile = ChannelProfile::new(1, 1e6, &OmegaPolicy::default(), 0, 0, false).unwrap();
        let ps = sample_pathset(&mut rng, &profile, 4, 4).unwrap();
        assert_eq!(ps.paths().len(), 1);
        assert!((ps.paths()[0].gain.norm() - 1.0).abs() < 0.01);
        assert_eq!(ps.paths()[0].delay, 0);

        let k_max = auto_k_max(64, 444.4, 15_000.0);
        assert_eq!(k_max, 2);
        let profile = ChannelProfile::new(9, 1.0, &OmegaPolicy::default(), 8, k_max, true).unwrap();
        for _ in 0..50 {
            let ps = sample_pathset(&mut rng, &profile, 64, 64).unwrap();
            let mut delays: Vec<usize> = ps.paths().iter().map(|p| p.delay).collect();
            delays.sort_unstable();
            assert_eq!(delays, (0..9).collect::<Vec<_>>());
            for p in ps.paths() {
                assert!(p.doppler.unsigned_abs() as usize <= k_max);
                assert!(p.frac_doppler > -0.5 && p.frac_doppler <= 0.5);
                assert!((p.gain - C64::from_polar(p.amplitude, p.phase)).norm() < 1e-15);
            }
        }

        assert!(matches!(
            ChannelProfile::new(10, 1.0, &OmegaPolicy::default(), 8, 2, false),
            Err(Error::InvalidProfile(_))
        ));
        assert!(ChannelProfile::new(2, 1.0, &OmegaPolicy::Explicit(vec![0.5, 0.4]), 3, 1, false).is_err());
        assert!(ChannelProfile::new(2, 0.4, &OmegaPolicy::default(), 3, 1, false).is_err());
    }

    #[test]
    fn path_power_is_normalized_on_average() {
        let mut rng = Rng::new(24, 0);
        let profile = ChannelProfile::new(9, 2.0, &OmegaPolicy::default(), 8, 2, true).unwrap();
        let draws = 100_000;
        let total: f64 = (0..draws)
            .map(|_| sample_pathset(&mut rng, &profile, 16, 8).unwrap().total_power())
            .sum();
        let mean = total / draws as f64;
        assert!((0.99..=1.01).contains(&mean), "{mean}");
    }

    #[test]
    fn identity_channel_effective_is_identity() {
        let ps = PathSet::identity(4, 4);
        let heff = effective_dense(&ps, &PulsePair::identity(4)).unwrap();
        assert!(heff.is_identity(1e-10));
        let x: CVector = (0..16).map(|i| c(i as f64, 1.0)).collect();
        let y = effective_apply(&ps, &PulsePair::identity(4), &x).unwrap();
        assert!(max_abs_diff(&x, &y) < 1e-10);
    }

    #[test]
    fn effective_matches_literal_construction() {
        let mut rng = Rng::new(25, 0);
        // 2x2 single delay, then random multi-path with and without fractional Doppler
        let ps = PathSet::new(2, 2, vec![Path::new(1.0, 0.0, 1, 0, 0.0)]).unwrap();
        let p2 = PulsePair::identity(2);
        assert!(effective_dense(&ps, &p2).unwrap().max_abs_diff(&literal_effective(&ps, &p2)) < 1e-12);

        for (m, n, count, frac) in [(4, 4, 3, false), (4, 4, 2, true), (8, 4, 4, true), (2, 8, 1, true)] {
            let ps = random_paths(&mut rng, m, n, count, frac);
            let pulses = PulsePair::identity(m);
            let lit = literal_effective(&ps, &pulses);
            assert!(effective_dense(&ps, &pulses).unwrap().max_abs_diff(&lit) < 1e-10);
            let x = random_vec(&mut rng, m * n);
            let y = effective_apply(&ps, &pulses, &x).unwrap();
            assert!(max_abs_diff(&y, &lit.matvec(&x).unwrap()) < 1e-10);
            let z = effective_adjoint_apply(&ps, &pulses, &x).unwrap();
            assert!(max_abs_diff(&z, &lit.adjoint().matvec(&x).unwrap()) < 1e-10);
        }
    }

    #[test]
    fn effective_with_general_pulses() {
        let mut rng = Rng::new(26, 0);
        let (m, n) = (4, 2);
        let g_tx = CMatrix::from_fn(m, m, |_, _| c(rng.uniform(), rng.uniform()));
        let g_rx = CMatrix::from_fn(m, m, |_, _| c(rng.uniform(), rng.uniform()));
        let pulses = PulsePair::new(g_tx, g_rx).unwrap();
        let ps = random_paths(&mut rng, m, n, 2, true);
        let lit = literal_effective(&ps, &pulses);
        assert!(effective_dense(&ps, &pulses).unwrap().max_abs_diff(&lit) < 1e-10);
    }

    #[test]
    fn dense_cap_is_enforced() {
        let ps = PathSet::identity(8, 8);
        assert!(matches!(
            effective_dense_capped(&ps, &PulsePair::identity(8), 32),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn gain_diagonal_simple_cases() {
        let id = PathSet::identity(4, 4);
        let g = mrc_gain_diagonal(&[&id], &PulsePair::identity(4), GainFallback::Disabled).unwrap();
        assert!(g.iter().all(|x| (x - 1.0).abs() < 1e-12));

        let h = c(0.6, -0.3);
        let ps = PathSet::new(4, 8, vec![Path::with_gain(h, 3, -2, 0.0)]).unwrap();
        let g = mrc_gain_diagonal(&[&ps], &PulsePair::identity(4), GainFallback::Disabled).unwrap();
        assert!(g.iter().all(|x| (x - h.norm_sqr()).abs() < 1e-12));
    }

    #[test]
    fn gain_diagonal_routes_agree_with_dense() {
        let mut rng = Rng::new(27, 0);
        for (m, n, count, frac) in [(4, 4, 3, false), (4, 4, 3, true), (8, 4, 4, true), (4, 8, 2, true)] {
            let a = random_paths(&mut rng, m, n, count, frac);
            let b = random_paths(&mut rng, m, n, count, frac);
            let pulses = PulsePair::identity(m);
            let mut want = vec![0.0; m * n];
            for ps in [&a, &b] {
                let h = effective_dense(ps, &pulses).unwrap();
                let g = h.adjoint().matmul(&h).unwrap();
                for (k, w) in want.iter_mut().enumerate() {
                    *w += g[(k, k)].re;
                }
            }
            let closed = gain_diagonal_closed_form(&[&a, &b]);
            let direct = gain_diagonal_columns(&[&a, &b], &pulses);
            for k in 0..m * n {
                assert!((closed[k] - want[k]).abs() < 1e-8, "closed form k={k}");
                assert!((direct[k] - want[k]).abs() < 1e-8, "columns k={k}");
            }
        }
    }

    #[test]
    fn gain_diagonal_needs_fallback_for_general_rx() {
        let mut rng = Rng::new(28, 0);
        let m = 4;
        let g = CMatrix::from_fn(m, m, |_, _| c(rng.uniform(), rng.uniform()));
        let pulses = PulsePair::new(CMatrix::identity(m), g).unwrap();
        let ps = random_paths(&mut rng, m, 4, 2, false);
        assert!(matches!(
            mrc_gain_diagonal(&[&ps], &pulses, GainFallback::Disabled),
            Err(Error::Unsupported(_))
        ));
        let got = mrc_gain_diagonal(&[&ps], &pulses, GainFallback::Dense { cap: 64 }).unwrap();
        let h = effective_dense(&ps, &pulses).unwrap();
        let gram = h.adjoint().matmul(&h).unwrap();
        for (k, gk) in got.iter().enumerate() {
            assert!((gk - gram[(k, k)].re).abs() < 1e-8);
        }
    }
}
