//! Log binomial probabilities without cancellation.
//!
//! Uses the saddle-point decomposition (Stirling remainders plus the `bd0`
//! deviance term), which keeps full relative accuracy for k in the millions
//! where `ln C(k, j) + j ln p + (k-j) ln q` loses most of its digits.

use std::f64::consts::PI;

const STIRLERR_TABLE: [f64; 16] = [
    0.0,
    0.081_061_466_795_327_26,
    0.041_340_695_955_409_29,
    0.027_677_925_684_998_34,
    0.020_790_672_103_765_09,
    0.016_644_691_189_821_19,
    0.013_876_128_823_070_75,
    0.011_896_709_945_891_77,
    0.010_411_265_261_972_1,
    0.009_255_462_182_712_733,
    0.008_330_563_433_362_87,
    0.007_573_675_487_951_841,
    0.006_942_840_107_209_53,
    0.006_408_994_188_004_207,
    0.005_951_370_112_758_848,
    0.005_554_733_551_962_801,
];

/// `ln n! - [(n + 1/2) ln n - n + ln sqrt(2 pi)]` for integer `n >= 1`.
pub fn stirlerr(n: u64) -> f64 {
    if n < STIRLERR_TABLE.len() as u64 {
        return STIRLERR_TABLE[n as usize];
    }
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    let n = n as f64;
    let nn = n * n;
    if n > 500.0 {
        (S0 - S1 / nn) / n
    } else if n > 80.0 {
        (S0 - (S1 - S2 / nn) / nn) / n
    } else if n > 35.0 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
    }
}

/// Deviance term `x ln(x / np) + np - x`, evaluated by series near `x = np`.
pub fn bd0(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let mut v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        let mut ej = 2.0 * x * v;
        v *= v;
        for j in 1..1000 {
            ej *= v;
            let s1 = s + ej / f64::from(2 * j + 1);
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        s
    } else {
        x * (x / np).ln() + np - x
    }
}

/// `ln P[Bin(k, p) = j]`, with `q = 1 - p` passed separately so callers can
/// supply it without rounding when `p` is close to one.
pub fn ln_binom_pmf(j: u64, k: u64, p: f64, q: f64) -> f64 {
    debug_assert!(j <= k);
    if j == 0 {
        return if k == 0 { 0.0 } else { k as f64 * q.ln() };
    }
    if j == k {
        return k as f64 * p.ln();
    }
    if p <= 0.0 || q <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let (jf, kf) = (j as f64, k as f64);
    let lc = stirlerr(k) - stirlerr(j) - stirlerr(k - j) - bd0(jf, kf * p) - bd0(kf - jf, kf * q);
    lc - 0.5 * ((2.0 * PI).ln() + jf.ln() + (-jf / kf).ln_1p())
}

/// `ln C(k, j)`.
pub fn ln_choose(k: u64, j: u64) -> f64 {
    debug_assert!(j <= k);
    if j == 0 || j == k {
        return 0.0;
    }
    // C(k, j) = P[Bin(k, j/k) = j] * (k/j)^j * (k/(k-j))^(k-j)
    let (jf, kf) = (j as f64, k as f64);
    let p = jf / kf;
    ln_binom_pmf(j, k, p, (kf - jf) / kf) - jf * p.ln() - (kf - jf) * (-p).ln_1p()
}
