//! Gray-coded square QAM, MRC combining, symbol-wise ML detection and bit
//! error accounting.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::channel::EffectiveChannel;
use crate::error::{Error, Result};
use crate::numerics::{CVector, C64};

/// Square Gray-coded QAM with unit average energy.
///
/// A symbol's class index is the integer value of its bit group, most
/// significant bit first. The upper half of the bits selects the in-phase
/// level and the lower half the quadrature level; on each axis the Gray
/// label 0 sits at the most positive level, so class 0 of 4-QAM is
/// `(1 + j)/√2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    order: usize,
    bits: usize,
    points: Vec<C64>,
}

fn gray_decode(mut g: usize) -> usize {
    let mut b = g;
    while g > 0 {
        g >>= 1;
        b ^= g;
    }
    b
}

impl Constellation {
    pub fn qam(order: usize) -> Result<Self> {
        let bits = order.trailing_zeros() as usize;
        if order < 4 || !order.is_power_of_two() || !bits.is_multiple_of(2) {
            return Err(Error::Config(format!("QAM order {order} must be a power of 4 (>= 4)")));
        }
        let axis_bits = bits / 2;
        let levels = 1usize << axis_bits;
        let scale = (2.0 * (order as f64 - 1.0) / 3.0).sqrt();
        let level = |g: usize| ((levels - 1) as f64 - 2.0 * gray_decode(g) as f64) / scale;
        let mask = levels - 1;
        let points = (0..order)
            .map(|class| C64::new(level(class >> axis_bits), level(class & mask)))
            .collect();
        Ok(Constellation { order, bits, points })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits
    }

    pub fn points(&self) -> &[C64] {
        &self.points
    }

    pub fn point(&self, class: usize) -> Result<C64> {
        self.points.get(class).copied().ok_or(Error::InvalidClass { class, order: self.order })
    }

    /// Bits of `class`, most significant first.
    pub fn bits_of(&self, class: usize) -> Result<Vec<bool>> {
        if class >= self.order {
            return Err(Error::InvalidClass { class, order: self.order });
        }
        Ok((0..self.bits).rev().map(|i| (class >> i) & 1 == 1).collect())
    }

    pub fn average_energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.order as f64
    }
}

/// Maps a bit stream onto symbols, returning the symbols and their class indices.
pub fn map_bits(bits: &[bool], c: &Constellation) -> Result<(CVector, Vec<usize>)> {
    if !bits.len().is_multiple_of(c.bits) {
        return Err(Error::InvalidLength(format!(
            "{} bits is not a multiple of {} bits per symbol",
            bits.len(),
            c.bits
        )));
    }
    let classes: Vec<usize> = bits
        .chunks(c.bits)
        .map(|group| group.iter().fold(0usize, |acc, &b| (acc << 1) | usize::from(b)))
        .collect();
    let symbols = classes.iter().map(|&k| c.points[k]).collect();
    Ok((symbols, classes))
}

/// `z_t = Σ_r H_eff^{(r,t)†} y_r`.
pub fn mrc_combine(y: &[CVector], links: &[&EffectiveChannel]) -> Result<CVector> {
    if y.len() != links.len() {
        return Err(Error::Config(format!(
            "{} received vectors for {} receive links",
            y.len(),
            links.len()
        )));
    }
    let len = y.first().map(Vec::len).ok_or_else(|| Error::Config("no receive antennas".into()))?;
    let mut z = vec![C64::new(0.0, 0.0); len];
    for (yr, op) in y.iter().zip(links) {
        for (acc, v) in z.iter_mut().zip(op.adjoint_apply(yr)?) {
            *acc += v;
        }
    }
    Ok(z)
}

/// Symbol-wise ML: `argmin_x |z_k - g_k x|²` per entry, ties to the lowest class.
pub fn mld_detect(z: &[C64], gains: &[f64], c: &Constellation) -> Result<Vec<usize>> {
    if c.points.is_empty() {
        return Err(Error::Config("empty constellation".into()));
    }
    if z.len() != gains.len() {
        return Err(Error::InvalidDimension(format!(
            "{} observations but {} gains",
            z.len(),
            gains.len()
        )));
    }
    if gains.iter().any(|g| !(*g >= 0.0)) {
        return Err(Error::InvalidInput("gain diagonal entries must be non-negative".into()));
    }
    Ok(z
        .iter()
        .zip(gains)
        .map(|(&zk, &gk)| {
            let mut best = (0usize, f64::INFINITY);
            for (q, x) in c.points.iter().enumerate() {
                let metric = (zk - x * gk).norm_sqr();
                if metric < best.1 {
                    best = (q, metric);
                }
            }
            best.0
        })
        .collect())
}

/// Hamming distance between the bit labels of paired class sequences.
pub fn count_bit_errors(tx: &[usize], rx: &[usize], c: &Constellation) -> Result<u64> {
    if tx.len() != rx.len() {
        return Err(Error::InvalidLength(format!("{} sent vs {} detected symbols", tx.len(), rx.len())));
    }
    let mut errors = 0u64;
    for (&a, &b) in tx.iter().zip(rx) {
        for class in [a, b] {
            if class >= c.order {
                return Err(Error::InvalidClass { class, order: c.order });
            }
        }
        errors += u64::from((a ^ b).count_ones());
    }
    Ok(errors)
}

/// Bit-error tally for one (detector, SNR, channel, antenna, modulation) point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerReport {
    pub detector: String,
    pub snr_db: f64,
    pub fading_m: f64,
    pub nt: usize,
    pub nr: usize,
    pub q: usize,
    pub symbols: u64,
    pub bit_errors: u64,
}

pub const BER_CSV_HEADER: &str = "detector,snr_db,m,nt,nr,q,symbols,bit_errors,ber";

impl BerReport {
    pub fn ber(&self) -> f64 {
        let bits = self.symbols * u64::from((self.q as u64).trailing_zeros());
        if bits == 0 {
            0.0
        } else {
            self.bit_errors as f64 / bits as f64
        }
    }

    /// Adds another tally of the same operating point.
    pub fn merge(&mut self, other: &BerReport) {
        self.symbols += other.symbols;
        self.bit_errors += other.bit_errors;
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.detector,
            self.snr_db,
            self.fading_m,
            self.nt,
            self.nr,
            self.q,
            self.symbols,
            self.bit_errors,
            format_sig6(self.ber())
        )
    }
}

/// Positional notation with six significant digits; zero prints as `0.000000`.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x:.6}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

pub fn ber_csv(reports: &[BerReport]) -> String {
    let mut out = String::from(BER_CSV_HEADER);
    out.push('\n');
    for r in reports {
        let _ = writeln!(out, "{}", r.csv_row());
    }
    out
}

/// Parses a BER CSV produced by [`ber_csv`].
pub fn parse_ber_csv(text: &str) -> Result<Vec<BerReport>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(BER_CSV_HEADER) {
        return Err(Error::Parse("missing BER CSV header".into()));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 9 {
                return Err(Error::Parse(format!("expected 9 fields in `{line}`")));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("`{s}`: {e}")));
            let int = |s: &str| s.parse::<u64>().map_err(|e| Error::Parse(format!("`{s}`: {e}")));
            Ok(BerReport {
                detector: f[0].to_string(),
                snr_db: num(f[1])?,
                fading_m: num(f[2])?,
                nt: int(f[3])? as usize,
                nr: int(f[4])? as usize,
                q: int(f[5])? as usize,
                symbols: int(f[6])?,
                bit_errors: int(f[7])?,
            })
        })
        .collect()
}
