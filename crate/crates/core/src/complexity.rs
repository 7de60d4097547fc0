//! Closed-form real-multiplication counts for the MRC-ML and network detectors.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComplexityQuery {
    pub m: u64,
    pub n: u64,
    pub nt: u64,
    pub nr: u64,
    pub q: u64,
}

impl ComplexityQuery {
    pub fn new(m: u64, n: u64, nt: u64, nr: u64, q: u64) -> Result<Self> {
        if [m, n, nt, nr, q].contains(&0) {
            return Err(Error::InvalidParameter(format!(
                "complexity query needs positive M, N, N_T, N_R, Q (got {m}, {n}, {nt}, {nr}, {q})"
            )));
        }
        let query = ComplexityQuery { m, n, nt, nr, q };
        if query.checked_total().is_none() {
            return Err(Error::Capacity(format!(
                "multiplication counts for M = {m}, N = {n}, N_T = {nt}, N_R = {nr}, Q = {q} exceed 128 bits"
            )));
        }
        Ok(query)
    }

    // Largest count is the dense MRC-ML total; every other formula is bounded by it
    // or by the per-symbol network terms checked here.
    fn checked_total(&self) -> Option<u128> {
        let mn = u128::from(self.m.checked_mul(self.n)?);
        let (nt, nr, q) = (u128::from(self.nt), u128::from(self.nr), u128::from(self.q));
        let mld = 6u128.checked_mul(nt)?.checked_mul(q)?.checked_mul(mn)?;
        let cube = mn.checked_pow(3)?.checked_mul(8)?.checked_mul(nt)?.checked_mul(nr)?;
        let square = mn.checked_pow(2)?.checked_mul(4)?.checked_mul(nt)?.checked_mul(nr)?;
        let fft = mn.checked_mul(4 * 64)?.checked_mul(nr)?;
        let nets = mn.checked_mul(141_696)?.checked_add(q.checked_mul(64)?)?.checked_add(174_080)?;
        cube.checked_add(square)?.checked_add(fft)?.checked_add(mld)?.checked_add(nets)
    }

    pub fn mn(&self) -> u64 {
        self.m * self.n
    }
}

/// Symbol-wise MLD: `6 N_T Q MN`.
pub fn rm_mld(c: &ComplexityQuery) -> u128 {
    6 * c.nt as u128 * c.q as u128 * c.mn() as u128
}

/// FFTs, Gram matrix, matched filter and MLD:
/// `4 N_R MN log2(MN) + 8 N_T N_R (MN)^3 + 4 N_T N_R (MN)^2 + 6 N_T Q MN`.
/// `log2` is taken exactly when `MN` is a power of two and rounded up otherwise.
pub fn rm_mrc_ml_total(c: &ComplexityQuery) -> u128 {
    let mn = c.mn() as u128;
    let log = c.mn().next_power_of_two().trailing_zeros() as u128;
    let (nt, nr) = (c.nt as u128, c.nr as u128);
    4 * nr * mn * log + 8 * nt * nr * mn.pow(3) + 4 * nt * nr * mn.pow(2) + rm_mld(c)
}

pub fn rm_mlp(c: &ComplexityQuery) -> u128 {
    128 * c.mn() as u128 + 128 * 64 + 64 * c.q as u128
}

pub fn rm_cnn(c: &ComplexityQuery) -> u128 {
    8384 * c.mn() as u128 + 2048 + 32 * c.q as u128
}

pub fn rm_resnet(c: &ComplexityQuery) -> u128 {
    141_696 * c.mn() as u128 + 174_080 + 32 * c.q as u128
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComplexityRow {
    pub nt: u64,
    pub q: u64,
    pub mld: u128,
    pub mlp: u128,
    pub cnn: u128,
    pub resnet: u128,
}

impl ComplexityRow {
    pub fn evaluate(c: &ComplexityQuery) -> Self {
        ComplexityRow { nt: c.nt, q: c.q, mld: rm_mld(c), mlp: rm_mlp(c), cnn: rm_cnn(c), resnet: rm_resnet(c) }
    }
}

/// `(N_T, Q)` rows of the massive-MIMO table at `M = N = 128`.
pub const TABLE_6G_ROWS: [(u64, u64); 10] =
    [(8, 256), (8, 1024), (16, 256), (16, 1024), (32, 256), (32, 1024), (64, 256), (64, 1024), (128, 1024), (256, 1024)];

pub fn table_6g() -> Vec<ComplexityRow> {
    TABLE_6G_ROWS
        .iter()
        .map(|&(nt, q)| ComplexityRow::evaluate(&ComplexityQuery { m: 128, n: 128, nt, nr: nt, q }))
        .collect()
}

/// Scientific notation with three significant figures, e.g. `2.01e8`.
pub fn sci3(x: u128) -> String {
    format!("{:.2e}", x as f64)
}

pub const COMPLEXITY_CSV_HEADER: &str = "nt,q,mld,mlp,cnn,resnet,mld_sci,mlp_sci,cnn_sci,resnet_sci";

pub fn complexity_csv(rows: &[ComplexityRow]) -> String {
    let mut out = String::from(COMPLEXITY_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.nt,
            r.q,
            r.mld,
            r.mlp,
            r.cnn,
            r.resnet,
            sci3(r.mld),
            sci3(r.mlp),
            sci3(r.cnn),
            sci3(r.resnet)
        );
    }
    out
}

pub fn complexity_markdown(rows: &[ComplexityRow]) -> String {
    let mut out = String::from("| N_T | Q | MLD | MLP | CNN | ResNet |\n|---|---|---|---|---|---|\n");
    for r in rows {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} |",
            r.nt,
            r.q,
            sci3(r.mld),
            sci3(r.mlp),
            sci3(r.cnn),
            sci3(r.resnet)
        );
    }
    out
}
