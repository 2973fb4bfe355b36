//! Modified Bessel functions of order zero.
//!
//! K₀ is evaluated in two regimes: the ascending series for x ≤ 2 and
//! Steed's continued fraction (Thompson–Barnett form) above. Both reach
//! full double precision; the crossover sits where the series still has
//! only mild cancellation.

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const SERIES_MAX_X: f64 = 2.0;
const MAX_TERMS: usize = 500;

/// I₀(x) by its ascending series. Intended for moderate |x| (≲ 30).
pub fn bessel_i0(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..MAX_TERMS {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * f64::EPSILON * 0.25 {
            break;
        }
    }
    sum
}

fn k0_series(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let log_term = -((0.5 * x).ln() + EULER_GAMMA);
    let mut term = 1.0;
    let mut harmonic = 0.0;
    let mut i0 = 1.0;
    let mut tail = 0.0;
    for k in 1..MAX_TERMS {
        let kf = k as f64;
        term *= q / (kf * kf);
        harmonic += 1.0 / kf;
        i0 += term;
        tail += term * harmonic;
        if term * harmonic < f64::EPSILON * 0.25 * tail.abs().max(1e-300) {
            break;
        }
    }
    log_term * i0 + tail
}

/// Scaled e^x·K₀(x) from the continued fraction; valid for x ≳ 1.
fn k0_scaled_cf(x: f64) -> f64 {
    let a1 = 0.25;
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut delh = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 2..MAX_TERMS {
        let fi = i as f64;
        a -= 2.0 * (fi - 1.0);
        c = -a * c / fi;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < f64::EPSILON * 0.5 {
            break;
        }
    }
    (std::f64::consts::PI / (2.0 * x)).sqrt() / s
}

/// K₀(x) for x > 0. Returns +∞ at 0 and NaN for negative or NaN input.
pub fn bessel_k0(x: f64) -> f64 {
    if x.is_nan() || x < 0.0 {
        f64::NAN
    } else if x == 0.0 {
        f64::INFINITY
    } else if x <= SERIES_MAX_X {
        k0_series(x)
    } else if x.is_infinite() {
        0.0
    } else {
        (-x).exp() * k0_scaled_cf(x)
    }
}

/// e^x·K₀(x), finite for all large x.
pub fn bessel_k0_scaled(x: f64) -> f64 {
    if x.is_nan() || x < 0.0 {
        f64::NAN
    } else if x <= SERIES_MAX_X {
        x.exp() * bessel_k0(x)
    } else if x.is_infinite() {
        0.0
    } else {
        k0_scaled_cf(x)
    }
}

/// ln(sinh(x)·K₀(x)) without intermediate overflow.
pub fn ln_sinh_k0(x: f64) -> f64 {
    if x <= SERIES_MAX_X {
        (x.sinh() * bessel_k0(x)).ln()
    } else {
        // sinh(x)·K₀(x) = ½(1 − e^{−2x})·e^x K₀(x)
        (0.5 * (-(-2.0 * x).exp()).ln_1p().exp() * k0_scaled_cf(x)).ln()
    }
}
