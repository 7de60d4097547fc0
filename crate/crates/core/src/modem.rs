//! OTFS modulator and demodulator.
//!
//! Transmit: `s = vec(G_tx · F_M · X · F_N^†)` (ISFFT followed by the
//! Heisenberg transform). Receive: `Y = F_M^† · G_rx · vec⁻¹(r) · F_N`
//! (Wigner transform followed by the SFFT). Both directions run as length-M
//! transforms along columns and length-N transforms along rows.

use crate::error::{Error, Result};
use crate::numerics::{fft_chunks_in_place, CMatrix, CVector, C64};

/// `M x N` delay-Doppler grid stored column-major (delay index fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct DDFrame {
    m: usize,
    n: usize,
    grid: Vec<C64>,
}

impl DDFrame {
    pub fn zeros(m: usize, n: usize) -> Result<Self> {
        check_grid(m, n)?;
        Ok(DDFrame { m, n, grid: vec![C64::new(0.0, 0.0); m * n] })
    }

    /// Builds a frame from a column-major entry list.
    pub fn from_column_major(m: usize, n: usize, grid: Vec<C64>) -> Result<Self> {
        check_grid(m, n)?;
        if grid.len() != m * n {
            return Err(Error::InvalidDimension(format!(
                "{} entries cannot form a {m}x{n} grid",
                grid.len()
            )));
        }
        if grid.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidInput("delay-Doppler grid has non-finite entries".into()));
        }
        Ok(DDFrame { m, n, grid })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, delay: usize, doppler: usize) -> C64 {
        self.grid[delay + self.m * doppler]
    }

    pub fn set(&mut self, delay: usize, doppler: usize, value: C64) {
        self.grid[delay + self.m * doppler] = value;
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.grid
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.grid.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Time-domain OTFS frame of `M·N` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSignal {
    m: usize,
    n: usize,
    samples: Vec<C64>,
}

impl TimeSignal {
    pub fn new(m: usize, n: usize, samples: Vec<C64>) -> Result<Self> {
        check_grid(m, n)?;
        if samples.len() != m * n {
            return Err(Error::InvalidDimension(format!(
                "{} samples do not match M*N = {}",
                samples.len(),
                m * n
            )));
        }
        Ok(TimeSignal { m, n, samples })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[C64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [C64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<C64> {
        self.samples
    }
}

/// Transmit and receive pulse-shaping matrices (both `M x M`).
#[derive(Debug, Clone, PartialEq)]
pub struct PulsePair {
    g_tx: CMatrix,
    g_rx: CMatrix,
    tx_identity: bool,
    rx_identity: bool,
}

impl PulsePair {
    /// Rectangular pulses, `G_tx = G_rx = I_M`.
    pub fn identity(m: usize) -> Self {
        PulsePair {
            g_tx: CMatrix::identity(m),
            g_rx: CMatrix::identity(m),
            tx_identity: true,
            rx_identity: true,
        }
    }

    pub fn new(g_tx: CMatrix, g_rx: CMatrix) -> Result<Self> {
        let m = g_tx.rows();
        if !g_tx.is_square() || !g_rx.is_square() || g_rx.rows() != m {
            return Err(Error::InvalidDimension("pulse matrices must both be M x M".into()));
        }
        let tx_identity = g_tx.is_identity(0.0);
        let rx_identity = g_rx.is_identity(0.0);
        Ok(PulsePair { g_tx, g_rx, tx_identity, rx_identity })
    }

    pub fn m(&self) -> usize {
        self.g_tx.rows()
    }

    pub fn g_tx(&self) -> &CMatrix {
        &self.g_tx
    }

    pub fn g_rx(&self) -> &CMatrix {
        &self.g_rx
    }

    pub fn tx_is_identity(&self) -> bool {
        self.tx_identity
    }

    pub fn rx_is_identity(&self) -> bool {
        self.rx_identity
    }
}

fn check_grid(m: usize, n: usize) -> Result<()> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidDimension(format!("grid {m}x{n} must be non-empty")));
    }
    Ok(())
}

fn check_pulses(pulses: &PulsePair, m: usize) -> Result<()> {
    if pulses.m() != m {
        return Err(Error::InvalidDimension(format!(
            "pulses are {0}x{0} but the grid has M = {m}",
            pulses.m()
        )));
    }
    Ok(())
}

/// Row-wise unitary DFT on a column-major `m x n` grid.
fn transform_rows(grid: &mut [C64], m: usize, n: usize, inverse: bool) {
    let mut rows = vec![C64::new(0.0, 0.0); m * n];
    for c in 0..n {
        for r in 0..m {
            rows[r * n + c] = grid[r + m * c];
        }
    }
    fft_chunks_in_place(&mut rows, n, inverse);
    for c in 0..n {
        for r in 0..m {
            grid[r + m * c] = rows[r * n + c];
        }
    }
}

/// Left-multiplies every column of a column-major grid by `g`.
fn left_multiply_columns(g: &CMatrix, grid: &mut [C64], m: usize) {
    let mut col = vec![C64::new(0.0, 0.0); m];
    for chunk in grid.chunks_mut(m) {
        for (i, out) in col.iter_mut().enumerate() {
            *out = (0..m).map(|k| g[(i, k)] * chunk[k]).sum();
        }
        chunk.copy_from_slice(&col);
    }
}

/// `vec(G_tx F_M X F_N^†)` applied to a column-major grid slice.
pub(crate) fn modulate_slice(x: &[C64], m: usize, n: usize, pulses: &PulsePair) -> Vec<C64> {
    let mut grid = x.to_vec();
    fft_chunks_in_place(&mut grid, m, false);
    // right-multiplying by F_N^† applies F_N^† to each row
    transform_rows(&mut grid, m, n, true);
    if !pulses.tx_is_identity() {
        left_multiply_columns(pulses.g_tx(), &mut grid, m);
    }
    grid
}

/// `vec(F_M^† G_rx vec⁻¹(r) F_N)` applied to a sample slice.
pub(crate) fn demodulate_slice(r: &[C64], m: usize, n: usize, pulses: &PulsePair) -> Vec<C64> {
    let mut grid = r.to_vec();
    if !pulses.rx_is_identity() {
        left_multiply_columns(pulses.g_rx(), &mut grid, m);
    }
    fft_chunks_in_place(&mut grid, m, true);
    transform_rows(&mut grid, m, n, false);
    grid
}

/// Adjoint of [`modulate_slice`]: `vec(F_M^† G_tx^† vec⁻¹(s) F_N)`.
pub(crate) fn modulate_adjoint_slice(s: &[C64], m: usize, n: usize, pulses: &PulsePair) -> Vec<C64> {
    let mut grid = s.to_vec();
    if !pulses.tx_is_identity() {
        left_multiply_columns(&pulses.g_tx().adjoint(), &mut grid, m);
    }
    transform_rows(&mut grid, m, n, false);
    fft_chunks_in_place(&mut grid, m, true);
    grid
}

/// Adjoint of [`demodulate_slice`]: `vec(G_rx^† F_M vec⁻¹(y) F_N^†)`.
pub(crate) fn demodulate_adjoint_slice(y: &[C64], m: usize, n: usize, pulses: &PulsePair) -> Vec<C64> {
    let mut grid = y.to_vec();
    transform_rows(&mut grid, m, n, true);
    fft_chunks_in_place(&mut grid, m, false);
    if !pulses.rx_is_identity() {
        left_multiply_columns(&pulses.g_rx().adjoint(), &mut grid, m);
    }
    grid
}

pub fn modulate(x: &DDFrame, pulses: &PulsePair) -> Result<TimeSignal> {
    check_pulses(pulses, x.m)?;
    TimeSignal::new(x.m, x.n, modulate_slice(&x.grid, x.m, x.n, pulses))
}

pub fn demodulate(r: &TimeSignal, pulses: &PulsePair) -> Result<DDFrame> {
    check_pulses(pulses, r.m)?;
    let grid = demodulate_slice(&r.samples, r.m, r.n, pulses);
    Ok(DDFrame { m: r.m, n: r.n, grid })
}

/// Column-wise vectorization.
pub fn dd_vec(x: &DDFrame) -> CVector {
    x.grid.clone()
}

pub fn dd_unvec(v: &[C64], m: usize, n: usize) -> Result<DDFrame> {
    DDFrame::from_column_major(m, n, v.to_vec())
}
