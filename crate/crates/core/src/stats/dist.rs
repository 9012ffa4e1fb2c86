//! F and studentized-range distribution functions.
//!
//! The F distribution goes through the regularized incomplete beta function
//! (continued fraction, modified Lentz). The studentized range CDF is the
//! usual double integral, evaluated with composite Gauss-Legendre rules:
//!
//! ```text
//! P(q; k, inf) = k ∫ φ(u) [Φ(u) - Φ(u - q)]^(k-1) du
//! P(q; k, nu)  = ∫ f_nu(s) P(q s; k, inf) ds,   f_nu(s) ∝ s^(nu-1) exp(-nu s² / 2)
//! ```
//!
//! Inner rule: 18 panels of 16 nodes on u ∈ [-9, 9]. Outer rule: 24 panels
//! of 16 nodes over the region where the chi density exceeds e^-46 of its
//! peak. For nu < 2 the outer variable is t = s^nu, which removes the
//! s^(nu-1) behaviour at the origin; that range is longer and gets 64 panels.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2};
use std::sync::OnceLock;

use crate::error::{Error, Result};

const GL_NODES: usize = 16;
const INNER_PANELS: usize = 18;
const INNER_HALF_WIDTH: f64 = 9.0;
const OUTER_PANELS: usize = 24;
const OUTER_PANELS_SMALL_NU: usize = 64;
/// Log-density drop that bounds the outer integration range.
const OUTER_LOG_CUTOFF: f64 = 46.0;
/// Above this, the chi factor is treated as a point mass at 1.
const NU_INFINITE: f64 = 1e7;

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

fn gl16() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(GL_NODES))
}

/// Composite rule nodes and weights on [a, b].
fn composite(a: f64, b: f64, panels: usize) -> impl Iterator<Item = (f64, f64)> {
    let (x, w) = gl16();
    let h = (b - a) / panels as f64;
    (0..panels).flat_map(move |p| {
        let mid = a + (p as f64 + 0.5) * h;
        x.iter().zip(w).map(move |(xi, wi)| (mid + 0.5 * h * xi, 0.5 * h * wi))
    })
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn beta_inc(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

fn check_f_args(x: f64, d1: f64, d2: f64) -> Result<()> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::argument(format!("F statistic must be >= 0, got {x}")));
    }
    if !(d1.is_finite() && d1 > 0.0 && d2.is_finite() && d2 > 0.0) {
        return Err(Error::argument(format!(
            "F degrees of freedom must be positive, got ({d1}, {d2})"
        )));
    }
    Ok(())
}

/// `P(F <= x)` for `F ~ F(d1, d2)`.
pub fn f_cdf(x: f64, d1: f64, d2: f64) -> Result<f64> {
    check_f_args(x, d1, d2)?;
    if x == f64::INFINITY {
        return Ok(1.0);
    }
    Ok(beta_inc(d1 / 2.0, d2 / 2.0, d1 * x / (d1 * x + d2)))
}

/// `P(F > x)`, computed directly so small tail probabilities keep precision.
pub fn f_sf(x: f64, d1: f64, d2: f64) -> Result<f64> {
    check_f_args(x, d1, d2)?;
    if x == f64::INFINITY {
        return Ok(0.0);
    }
    Ok(beta_inc(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * x)))
}

/// Precomputed inner-rule nodes: (u, w·φ(u), Φ(u)).
fn inner_rule() -> &'static [(f64, f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        composite(-INNER_HALF_WIDTH, INNER_HALF_WIDTH, INNER_PANELS)
            .map(|(u, w)| (u, w * norm_pdf(u), norm_cdf(u)))
            .collect()
    })
}

/// Range CDF of `k` standard normals (infinite degrees of freedom).
fn range_cdf_normal(q: f64, k: u32) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    let km1 = (k - 1) as i32;
    let s: f64 = inner_rule()
        .iter()
        .map(|&(u, wphi, cdf_u)| {
            let diff = cdf_u - norm_cdf(u - q);
            if diff <= 0.0 {
                0.0
            } else {
                wphi * diff.powi(km1)
            }
        })
        .sum();
    (k as f64 * s).clamp(0.0, 1.0)
}

/// `P(Q <= q)` for the studentized range of `k` means with `nu` degrees of
/// freedom (`nu = f64::INFINITY` allowed).
pub fn studentized_range_cdf(q: f64, k: u32, nu: f64) -> Result<f64> {
    if q.is_nan() || q < 0.0 {
        return Err(Error::argument(format!("studentized range q must be >= 0, got {q}")));
    }
    if k < 2 {
        return Err(Error::argument(format!("studentized range needs k >= 2, got {k}")));
    }
    if nu.is_nan() || nu <= 0.0 {
        return Err(Error::argument(format!(
            "degrees of freedom must be positive, got {nu}"
        )));
    }
    if q == 0.0 {
        return Ok(0.0);
    }
    if q == f64::INFINITY {
        return Ok(1.0);
    }
    if nu >= NU_INFINITE {
        return Ok(range_cdf_normal(q, k));
    }

    // log of the normalising constant of f_nu
    let ln_c = 0.5 * nu * nu.ln() - libm::lgamma(0.5 * nu) - (0.5 * nu - 1.0) * LN_2;
    let total: f64 = if nu < 2.0 {
        // s = t^(1/nu): f_nu(s) ds = (C / nu) exp(-nu t^(2/nu) / 2) dt
        let t_max = (2.0 * OUTER_LOG_CUTOFF / nu).powf(0.5 * nu);
        composite(0.0, t_max, OUTER_PANELS_SMALL_NU)
            .map(|(t, w)| {
                let s = t.powf(1.0 / nu);
                let dens = (ln_c - nu.ln() - 0.5 * nu * s * s).exp();
                w * dens * range_cdf_normal(q * s, k)
            })
            .sum()
    } else {
        let ln_f = |s: f64| ln_c + (nu - 1.0) * s.ln() - 0.5 * nu * s * s;
        let mode = ((nu - 1.0) / nu).sqrt();
        let peak = ln_f(mode);
        let step = 0.25 / (2.0 * nu).sqrt();
        let mut lo = mode;
        while lo > 0.0 && ln_f(lo) > peak - OUTER_LOG_CUTOFF {
            lo = (lo - step).max(0.0);
        }
        let mut hi = mode;
        while ln_f(hi) > peak - OUTER_LOG_CUTOFF {
            hi += step;
        }
        composite(lo, hi, OUTER_PANELS)
            .map(|(s, w)| w * ln_f(s).exp() * range_cdf_normal(q * s, k))
            .sum()
    };
    Ok(total.clamp(0.0, 1.0))
}
