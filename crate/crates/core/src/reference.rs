//! Published reference values used by `reproduce` and the acceptance suite.

/// Test SNR grid of the reference BER tables, in dB.
pub const SNR_DB: [f64; 5] = [0.0, 4.0, 8.0, 12.0, 16.0];

/// Reference BER rows for one `(N_T, N_R, m)` operating point, indexed like [`SNR_DB`].
#[derive(Debug, Clone, Copy)]
pub struct BerTable {
    pub nt: usize,
    pub nr: usize,
    pub fading_m: f64,
    pub mld: [f64; 5],
    pub mlp: [f64; 5],
    pub cnn: [f64; 5],
    pub resnet: [f64; 5],
}

impl BerTable {
    pub fn row(&self, detector: &str) -> Option<&[f64; 5]> {
        match detector {
            "mld" => Some(&self.mld),
            "mlp" => Some(&self.mlp),
            "cnn" => Some(&self.cnn),
            "resnet" => Some(&self.resnet),
            _ => None,
        }
    }
}

pub const SISO_M1: BerTable = BerTable {
    nt: 1,
    nr: 1,
    fading_m: 1.0,
    mld: [0.207282, 0.117487, 0.058562, 0.025438, 0.009554],
    mlp: [0.207712, 0.117672, 0.058598, 0.025505, 0.009425],
    cnn: [0.207655, 0.117662, 0.058634, 0.025508, 0.009418],
    resnet: [0.207694, 0.117689, 0.058640, 0.025494, 0.009426],
};

pub const SISO_M2: BerTable = BerTable {
    nt: 1,
    nr: 1,
    fading_m: 2.0,
    mld: [0.136612, 0.072703, 0.030839, 0.015597, 0.004976],
    mlp: [0.136162, 0.073009, 0.030915, 0.015096, 0.004913],
    cnn: [0.136264, 0.073044, 0.030943, 0.015106, 0.004924],
    resnet: [0.136216, 0.073034, 0.030946, 0.015093, 0.004936],
};

pub const MIMO_M1: BerTable = BerTable {
    nt: 2,
    nr: 2,
    fading_m: 1.0,
    mld: [0.054378, 0.015725, 0.003014, 0.000463, 0.000113],
    mlp: [0.055550, 0.014987, 0.003024, 0.000699, 0.000122],
    cnn: [0.055620, 0.014990, 0.003031, 0.000707, 0.000122],
    resnet: [0.055761, 0.015022, 0.003021, 0.000702, 0.000121],
};

pub const MIMO_M2: BerTable = BerTable {
    nt: 2,
    nr: 2,
    fading_m: 2.0,
    mld: [0.022834, 0.005125, 0.001149, 0.000181, 0.000083],
    mlp: [0.022565, 0.004641, 0.000972, 0.000167, 0.000022],
    cnn: [0.022621, 0.004662, 0.000974, 0.000172, 0.000023],
    resnet: [0.022656, 0.004676, 0.000977, 0.000167, 0.000021],
};

pub const BER_TABLES: [BerTable; 4] = [SISO_M1, SISO_M2, MIMO_M1, MIMO_M2];

/// Printed massive-MIMO complexity cells: `(N_T, Q, [MLD, MLP, CNN, ResNet])`.
pub const COMPLEXITY_6G: [(u64, u64, [f64; 4]); 10] = [
    (8, 256, [2.01e8, 2.12e6, 1.37e8, 2.32e9]),
    (8, 1024, [8.05e8, 2.17e6, 1.37e8, 2.32e9]),
    (16, 256, [4.03e8, 2.12e6, 1.37e8, 2.32e9]),
    (16, 1024, [1.61e9, 2.17e6, 1.37e8, 2.32e9]),
    (32, 256, [8.05e8, 2.12e6, 1.37e8, 2.32e9]),
    (32, 1024, [3.22e9, 2.17e6, 1.37e8, 2.32e9]),
    (64, 256, [1.61e9, 2.12e6, 1.37e8, 2.32e9]),
    (64, 1024, [6.44e9, 2.17e6, 1.37e8, 2.32e9]),
    (128, 1024, [1.29e10, 2.17e6, 1.37e8, 2.32e9]),
    (256, 1024, [2.58e10, 2.17e6, 1.37e8, 2.32e9]),
];

/// True when `value` rounds to `reference` at three significant figures.
pub fn matches_3sf(value: f64, reference: f64) -> bool {
    format!("{value:.2e}") == format!("{reference:.2e}")
}
