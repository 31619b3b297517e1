//! Per-path noise streams.
//!
//! Every path owns a ChaCha8 stream keyed by the run seed with the stream id
//! set to the path index. The deviates a path sees therefore depend only on
//! `(seed, path)`, never on which worker simulated it or in what order.
#![allow(clippy::excessive_precision)]

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct PathRng(ChaCha8Rng);

impl PathRng {
    pub fn new(seed: u64, path: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(path);
        Self(inner)
    }

    /// Uniform on the open interval (0, 1), 53-bit resolution.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        ((self.0.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Standard normal deviate by inversion.
    #[inline]
    pub fn normal(&mut self) -> f64 {
        inverse_normal_cdf(self.uniform())
    }
}

const A: [f64; 8] = [
    3.387132872796366608,
    133.14166789178437745,
    1971.5909503065514427,
    13731.693765509461125,
    45921.953931549871457,
    67265.770927008700853,
    33430.575583588128105,
    2509.0809287301226727,
];
const B: [f64; 8] = [
    1.0,
    42.313330701600911252,
    687.1870074920579083,
    5394.1960214247511077,
    21213.794301586595867,
    39307.89580009271061,
    28729.085735721942674,
    5226.495278852545925,
];
const C: [f64; 8] = [
    1.42343711074968357734,
    4.6303378461565452959,
    5.7694972214606914055,
    3.64784832476320460504,
    1.27045825245236838258,
    0.24178072517745061177,
    0.0227238449892691845833,
    7.7454501427834140764e-4,
];
const D: [f64; 8] = [
    1.0,
    2.05319162663775882187,
    1.6763848301838038494,
    0.68976733498510000455,
    0.14810397642748007459,
    0.0151986665636164571966,
    5.475938084995344946e-4,
    1.05075007164441684324e-9,
];
const E: [f64; 8] = [
    6.6579046435011037772,
    5.4637849111641143699,
    1.7848265399172913358,
    0.29656057182850489123,
    0.026532189526576123093,
    0.0012426609473880784386,
    2.71155556874348757815e-5,
    2.01033439929228813265e-7,
];
const F: [f64; 8] = [
    1.0,
    0.59983220655588793769,
    0.13692988092273580531,
    0.0148753612908506148525,
    7.868691311456132591e-4,
    1.8463183175100546818e-5,
    1.4215117583164458887e-7,
    2.04426310338993978564e-15,
];

#[inline]
fn horner(c: &[f64; 8], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
}

/// Wichura's AS241 (PPND16) approximation of the standard normal quantile,
/// relative accuracy about 1e-16 on (0, 1).
pub fn inverse_normal_cdf(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * horner(&A, r) / horner(&B, r);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let r = (-tail.ln()).sqrt();
    let value = if r <= 5.0 {
        let r = r - 1.6;
        horner(&C, r) / horner(&D, r)
    } else {
        let r = r - 5.0;
        horner(&E, r) / horner(&F, r)
    };
    if q < 0.0 {
        -value
    } else {
        value
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phi(x: f64) -> f64 {
        0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
    }

    #[test]
    fn quantile_matches_reference_values() {
        // High-precision roots of Φ(x) = p.
        let table = [
            (1e-300, -37.047096299361199237),
            (1e-100, -21.273453560965324295),
            (1e-20, -9.2623400897984075737),
            (1e-10, -6.3613409024040562047),
            (1e-5, -4.2648907939228246285),
            (0.0005, -3.2905267314918947932),
            (0.01, -2.3263478740408411009),
            (0.02425, -1.9729610513118848503),
            (0.1, -1.281551565544600467),
            (0.3, -0.52440051270804078404),
            (0.5, 0.0),
            (0.7, 0.52440051270804078404),
            (0.975, 1.9599639845400542355),
            (0.96875, 1.8627318674216514555),
            (0.998046875, 2.8856349124267571474),
        ];
        for (p, x) in table {
            let got = inverse_normal_cdf(p);
            assert!((got - x).abs() <= 1e-14 * (1.0 + x.abs()), "p={p}: {got} vs {x}");
        }
    }

    #[test]
    fn quantile_inverts_the_cdf() {
        for i in 1..2000 {
            let p = i as f64 / 2000.0;
            assert!((phi(inverse_normal_cdf(p)) - p).abs() < 1e-14, "p={p}");
        }
        assert_eq!(inverse_normal_cdf(0.0), f64::NEG_INFINITY);
        assert_eq!(inverse_normal_cdf(1.0), f64::INFINITY);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<f64> = (0..5)
            .map({
                let mut r = PathRng::new(7, 3);
                move |_| r.normal()
            })
            .collect();
        let b: Vec<f64> = (0..5)
            .map({
                let mut r = PathRng::new(7, 3);
                move |_| r.normal()
            })
            .collect();
        let c: Vec<f64> = (0..5)
            .map({
                let mut r = PathRng::new(7, 4);
                move |_| r.normal()
            })
            .collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn normal_moments() {
        let mut rng = PathRng::new(11, 0);
        let n = 200_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let z = rng.normal();
            s1 += z;
            s2 += z * z;
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 4.0 * (2.0 / n as f64).sqrt());
    }
}
