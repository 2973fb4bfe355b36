//! Published device tables used as regression fixtures and defaults.
//!
//! Units follow the original tables (μm, GHz, MHz, μs); convert at use.

/// Film id and AFM thickness in μm.
pub const FILM_THICKNESS_UM: [(&str, f64); 16] = [
    ("F1", 0.021),
    ("F2", 0.052),
    ("F3", 0.131),
    ("F4", 0.132),
    ("F5", 0.238),
    ("F6", 0.263),
    ("F7", 0.263),
    ("F8", 0.265),
    ("F9", 0.475),
    ("F10", 0.480),
    ("F11", 0.480),
    ("F12", 0.480),
    ("F13", 1.09),
    ("F14", 2.00),
    ("F15", 0.260),
    ("F16", 0.262),
];

/// Measured transmon design parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitDesign {
    pub id: u32,
    pub f_q_ghz: f64,
    pub f_r_ghz: f64,
    pub chi_mhz: f64,
    pub kappa_mhz: f64,
    pub e_c_mhz: f64,
    pub ej_over_ec: u32,
}

const fn qd(id: u32, f_q_ghz: f64, f_r_ghz: f64, chi_mhz: f64, kappa_mhz: f64, e_c_mhz: f64, ej_over_ec: u32) -> QubitDesign {
    QubitDesign { id, f_q_ghz, f_r_ghz, chi_mhz, kappa_mhz, e_c_mhz, ej_over_ec }
}

pub const QUBIT_DESIGN: [QubitDesign; 11] = [
    qd(1, 2.613, 7.293, 0.101, 0.443, 252.0, 16),
    qd(2, 2.736, 7.541, 0.098, 0.353, 245.0, 19),
    qd(3, 2.799, 7.366, 0.034, 0.499, 240.0, 20),
    qd(4, 2.897, 6.776, 0.660, 0.822, 238.0, 22),
    qd(5, 3.193, 7.031, 0.198, 1.089, 230.0, 28),
    qd(6, 4.696, 7.750, 0.258, 0.488, 202.0, 74),
    qd(7, 4.822, 7.987, 0.277, 0.299, 202.0, 77),
    qd(8, 4.910, 7.536, 0.338, 0.313, 200.0, 82),
    qd(9, 5.145, 8.233, 0.319, 0.914, 190.0, 99),
    qd(10, 5.356, 8.354, 0.430, 0.586, 198.0, 98),
    qd(11, 5.804, 7.919, 0.486, 0.504, 192.0, 122),
];

/// Mean ± sd of a time series and its length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesRow {
    pub mean: f64,
    pub sd: f64,
    pub n: u32,
}

const fn sr(mean: f64, sd: f64, n: u32) -> SeriesRow {
    SeriesRow { mean, sd, n }
}

/// Coherence benchmarks; times in μs, Q̄ in units of 10⁶.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitPerformance {
    pub id: u32,
    pub t1_us: SeriesRow,
    pub q_bar_e6: (f64, f64),
    pub t2r_us: SeriesRow,
    pub t2e_us: SeriesRow,
    pub tphi_us: Option<SeriesRow>,
}

const fn qp(id: u32, t1: SeriesRow, q: (f64, f64), t2r: SeriesRow, t2e: SeriesRow, tphi: Option<SeriesRow>) -> QubitPerformance {
    QubitPerformance { id, t1_us: t1, q_bar_e6: q, t2r_us: t2r, t2e_us: t2e, tphi_us: tphi }
}

pub const QUBIT_PERFORMANCE: [QubitPerformance; 11] = [
    qp(1, sr(397.0, 42.0, 2036), (6.5, 0.7), sr(53.0, 46.0, 295), sr(216.0, 38.0, 551), Some(sr(300.0, 71.0, 281))),
    qp(2, sr(585.0, 75.0, 731), (10.1, 1.3), sr(136.0, 67.0, 681), sr(328.0, 54.0, 753), Some(sr(467.0, 102.0, 725))),
    qp(3, sr(400.0, 68.0, 171), (7.0, 1.2), sr(86.0, 67.0, 31), sr(304.0, 52.0, 125), None),
    qp(4, sr(423.0, 64.0, 680), (7.7, 1.2), sr(80.0, 57.0, 603), sr(123.0, 35.0, 742), Some(sr(151.0, 46.0, 667))),
    qp(5, sr(329.0, 29.0, 1449), (6.6, 0.6), sr(83.0, 21.0, 180), sr(159.0, 15.0, 533), Some(sr(205.0, 24.0, 291))),
    qp(6, sr(236.0, 42.0, 791), (7.0, 1.2), sr(19.0, 5.0, 681), sr(338.0, 69.0, 791), Some(sr(1300.0, 560.0, 786))),
    qp(7, sr(148.0, 11.0, 788), (4.5, 0.4), sr(205.0, 30.0, 726), sr(256.0, 23.0, 788), Some(sr(1800.0, 750.0, 653))),
    qp(8, sr(97.0, 13.0, 791), (3.0, 0.4), sr(111.0, 22.0, 793), sr(175.0, 25.0, 791), Some(sr(1420.0, 590.0, 506))),
    qp(9, sr(111.0, 11.0, 755), (3.6, 0.4), sr(107.0, 35.0, 777), sr(185.0, 26.0, 770), Some(sr(1270.0, 620.0, 666))),
    qp(10, sr(137.0, 11.0, 745), (4.6, 0.4), sr(11.0, 3.0, 727), sr(191.0, 45.0, 61), Some(sr(506.0, 100.0, 6))),
    qp(11, sr(40.0, 6.0, 768), (1.5, 0.2), sr(34.0, 9.0, 788), sr(78.0, 6.0, 391), Some(sr(570.0, 166.0, 233))),
];

/// Loss summary of the resonators on silicon. `None` where the fit error
/// exceeded the value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiResonatorLoss {
    pub id: &'static str,
    pub gap_um: f64,
    pub p_ms_e4: f64,
    pub q_c_e6: f64,
    pub f_r_ghz: f64,
    pub q_tls0_e6: Option<(f64, f64)>,
    pub q_other_e6: Option<(f64, f64)>,
}

pub const SI_RESONATOR_LOSS: [SiResonatorLoss; 7] = [
    SiResonatorLoss { id: "F17-CPW-2", gap_um: 2.0, p_ms_e4: 18.8, q_c_e6: 4.78, f_r_ghz: 4.35, q_tls0_e6: Some((0.37, 0.24)), q_other_e6: Some((1.33, 0.23)) },
    SiResonatorLoss { id: "F17-CPW-4", gap_um: 4.0, p_ms_e4: 10.9, q_c_e6: 0.99, f_r_ghz: 4.74, q_tls0_e6: Some((0.77, 0.59)), q_other_e6: Some((2.76, 1.98)) },
    SiResonatorLoss { id: "F17-CPW-6", gap_um: 6.0, p_ms_e4: 7.89, q_c_e6: 0.52, f_r_ghz: 5.21, q_tls0_e6: Some((0.89, 0.70)), q_other_e6: Some((2.67, 0.70)) },
    SiResonatorLoss { id: "F17-CPW-8", gap_um: 8.0, p_ms_e4: 6.23, q_c_e6: 0.38, f_r_ghz: 5.64, q_tls0_e6: Some((0.63, 0.22)), q_other_e6: None },
    SiResonatorLoss { id: "F17-CPW-10", gap_um: 10.0, p_ms_e4: 5.19, q_c_e6: 0.23, f_r_ghz: 6.14, q_tls0_e6: None, q_other_e6: Some((1.40, 0.06)) },
    SiResonatorLoss { id: "F17-CPW-12", gap_um: 12.0, p_ms_e4: 4.47, q_c_e6: 0.19, f_r_ghz: 6.44, q_tls0_e6: None, q_other_e6: Some((0.84, 0.03)) },
    SiResonatorLoss { id: "F17-CPW-16", gap_um: 16.0, p_ms_e4: 3.52, q_c_e6: 0.086, f_r_ghz: 6.91, q_tls0_e6: Some((0.21, 0.05)), q_other_e6: Some((2.49, 0.04)) },
];

/// Film properties quoted alongside the tables.
pub const T_C_K: (f64, f64) = (0.7, 0.1);
/// Normal-state resistivity in Ω·m.
pub const RHO_N_OHM_M: (f64, f64) = (180e-8, 1e-8);
/// Penetration depth from the thickness series, in m.
pub const LAMBDA_M: (f64, f64) = (1.78e-6, 0.02e-6);
/// Effective surface loss tangent on sapphire.
pub const TAN_DELTA: (f64, f64) = (1.6e-3, 0.1e-3);
