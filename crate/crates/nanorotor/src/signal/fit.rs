//! Lorentzian line fitting by damped least squares.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Spectrum;

/// Result of fitting L(f) = a·(γ/2)² / [(f−f₀)² + (γ/2)²] + b to a spectral
/// peak. Uncertainties are the 1-σ values from the parameter covariance at
/// the optimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianFit {
    pub center_hz: f64,
    pub fwhm_hz: f64,
    pub amplitude: f64,
    pub offset: f64,
    pub center_err: f64,
    pub fwhm_err: f64,
    pub amplitude_err: f64,
    pub offset_err: f64,
    /// Root-mean-square residual at the optimum.
    pub residual_rms: f64,
    /// Resolution bandwidth of the fitted spectrum.
    pub resolution_bandwidth: f64,
    /// Set when the fitted width is at or below 1.2× the resolution
    /// bandwidth: the value is then an upper bound, not a resolved width.
    pub resolution_limited: bool,
}

fn model(f: f64, p: &[f64; 4]) -> f64 {
    let [a, f0, gamma, b] = *p;
    let g = gamma / 2.0;
    let d = (f - f0) * (f - f0) + g * g;
    a * g * g / d + b
}

fn jacobian_row(f: f64, p: &[f64; 4]) -> [f64; 4] {
    let [a, f0, gamma, _b] = *p;
    let g = gamma / 2.0;
    let df = f - f0;
    let d = df * df + g * g;
    let d2 = d * d;
    [
        g * g / d,
        a * g * g * 2.0 * df / d2,
        a * g * df * df / d2, // d/dγ = (1/2)·d/dg
        1.0,
    ]
}

/// Solve the 4×4 system m·x = rhs by Gaussian elimination with partial
/// pivoting; returns `None` on a singular system.
fn solve4(mut m: [[f64; 4]; 4], mut rhs: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let mut pivot = col;
        for row in col + 1..4 {
            if m[row][col].abs() > m[pivot][col].abs() {
                pivot = row;
            }
        }
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..4 {
            let factor = m[row][col] / m[col][col];
            for k in col..4 {
                m[row][k] -= factor * m[col][k];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut x = [0.0; 4];
    for col in (0..4).rev() {
        let mut acc = rhs[col];
        for k in col + 1..4 {
            acc -= m[col][k] * x[k];
        }
        x[col] = acc / m[col][col];
    }
    Some(x)
}

fn invert4(m: [[f64; 4]; 4]) -> Option<[[f64; 4]; 4]> {
    let mut inv = [[0.0; 4]; 4];
    for col in 0..4 {
        let mut e = [0.0; 4];
        e[col] = 1.0;
        let x = solve4(m, e)?;
        for row in 0..4 {
            inv[row][col] = x[row];
        }
    }
    Some(inv)
}

fn cost(freqs: &[f64], vals: &[f64], p: &[f64; 4]) -> f64 {
    freqs
        .iter()
        .zip(vals)
        .map(|(&f, &y)| {
            let r = y - model(f, p);
            r * r
        })
        .sum()
}

/// Fit a Lorentzian to the part of `spec` inside `[f_lo, f_hi]`.
///
/// Returns the fitted parameters with covariance-derived 1-σ uncertainties.
/// A fitted FWHM at or below 1.2× the resolution bandwidth is flagged as
/// resolution-limited (the spectrum cannot resolve below its bin width, so
/// the value is an upper bound).
pub fn fit_lorentzian(spec: &Spectrum, f_lo: f64, f_hi: f64) -> Result<LorentzianFit> {
    let mut freqs = Vec::new();
    let mut vals = Vec::new();
    for (&f, &p) in spec.frequencies.iter().zip(&spec.psd) {
        if f >= f_lo && f <= f_hi {
            freqs.push(f);
            vals.push(p);
        }
    }
    let n = freqs.len();
    if n < 6 {
        return Err(Error::invalid(
            "window",
            format!("fit window holds {n} bins; need at least 6"),
        ));
    }

    // initial guess from the raw peak
    let (peak_idx, &peak_val) = vals
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("window not empty");
    let mut sorted = vals.clone();
    sorted.sort_by(f64::total_cmp);
    let baseline = sorted[n / 4];
    let half = baseline + 0.5 * (peak_val - baseline);
    let mut left = peak_idx;
    while left > 0 && vals[left] > half {
        left -= 1;
    }
    let mut right = peak_idx;
    while right + 1 < n && vals[right] > half {
        right += 1;
    }
    let width_guess = ((freqs[right] - freqs[left]).abs()).max(spec.resolution_bandwidth);

    let mut p = [
        (peak_val - baseline).max(f64::MIN_POSITIVE),
        freqs[peak_idx],
        width_guess,
        baseline,
    ];
    let mut best_cost = cost(&freqs, &vals, &p);
    let mut lambda = 1e-3;
    let max_iter = 300;
    let mut converged = false;

    for _ in 0..max_iter {
        // normal equations
        let mut jtj = [[0.0; 4]; 4];
        let mut jtr = [0.0; 4];
        for (&f, &y) in freqs.iter().zip(&vals) {
            let row = jacobian_row(f, &p);
            let r = y - model(f, &p);
            for i in 0..4 {
                jtr[i] += row[i] * r;
                for j in 0..4 {
                    jtj[i][j] += row[i] * row[j];
                }
            }
        }
        let mut damped = jtj;
        for i in 0..4 {
            damped[i][i] *= 1.0 + lambda;
            if damped[i][i] == 0.0 {
                damped[i][i] = lambda;
            }
        }
        let Some(step) = solve4(damped, jtr) else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
            continue;
        };
        let mut trial = p;
        for i in 0..4 {
            trial[i] += step[i];
        }
        trial[2] = trial[2].abs(); // width is positive by symmetry
        let trial_cost = cost(&freqs, &vals, &trial);
        if trial_cost.is_finite() && trial_cost < best_cost {
            let improvement = (best_cost - trial_cost) / best_cost.max(f64::MIN_POSITIVE);
            p = trial;
            best_cost = trial_cost;
            lambda = (lambda / 3.0).max(1e-12);
            if improvement < 1e-12 {
                converged = true;
                break;
            }
        } else {
            lambda *= 5.0;
            if lambda > 1e12 {
                converged = best_cost.is_finite();
                break;
            }
        }
    }

    let residual_rms = (best_cost / n as f64).sqrt();
    let in_window = p[1] >= f_lo && p[1] <= f_hi;
    if !converged || !in_window || !(p[2] > 0.0) || !(p[0] > 0.0) {
        return Err(Error::FitDidNotConverge {
            iterations: max_iter,
            residual: residual_rms,
        });
    }

    // covariance from the undamped normal equations at the optimum
    let mut jtj = [[0.0; 4]; 4];
    for &f in &freqs {
        let row = jacobian_row(f, &p);
        for i in 0..4 {
            for j in 0..4 {
                jtj[i][j] += row[i] * row[j];
            }
        }
    }
    let s2 = best_cost / (n as f64 - 4.0).max(1.0);
    let errs = match invert4(jtj) {
        Some(inv) => [
            (inv[0][0] * s2).max(0.0).sqrt(),
            (inv[1][1] * s2).max(0.0).sqrt(),
            (inv[2][2] * s2).max(0.0).sqrt(),
            (inv[3][3] * s2).max(0.0).sqrt(),
        ],
        None => [f64::NAN; 4],
    };

    Ok(LorentzianFit {
        center_hz: p[1],
        fwhm_hz: p[2],
        amplitude: p[0],
        offset: p[3],
        amplitude_err: errs[0],
        center_err: errs[1],
        fwhm_err: errs[2],
        offset_err: errs[3],
        residual_rms,
        resolution_bandwidth: spec.resolution_bandwidth,
        resolution_limited: p[2] <= 1.2 * spec.resolution_bandwidth,
    })
}
