//! Gamma and digamma values on the positive imaginary axis.
//!
//! `ln Γ(iy)` is obtained by lifting `z = iy` to `z + n` with `|z + n| ≥ 10`,
//! evaluating Stirling's series there and subtracting `Σ ln(z + k)`. Every
//! term uses the principal logarithm of a number with non-negative real part,
//! so the imaginary part is continuous in `y` and tends to `-π/2 - γy` as
//! `y → 0⁺`.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;

use crate::error::{Error, Result};

const LIFT_RADIUS: f64 = 10.0;
const Y_MIN: f64 = 1e-6;
const Y_MAX: f64 = 100.0;

/// B_{2k} for k = 1..=8.
const BERNOULLI: [f64; 8] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaImag {
    /// Continuous-branch arg Γ(iy).
    pub arg_gamma: f64,
    pub log_abs_gamma: f64,
    pub re_digamma: f64,
}

fn check(y: f64) -> Result<()> {
    if !(Y_MIN..=Y_MAX).contains(&y) {
        return Err(Error::Domain(format!(
            "imaginary-axis argument {y} outside [{Y_MIN}, {Y_MAX}]"
        )));
    }
    Ok(())
}

fn lift_count(y: f64) -> usize {
    let mut n = 0usize;
    while Complex64::new(n as f64, y).norm() < LIFT_RADIUS {
        n += 1;
    }
    n
}

/// Stirling series for ln Γ(w) and ψ(w), valid for |w| ≥ 10 with Re w ≥ 0.
fn stirling(w: Complex64) -> (Complex64, Complex64) {
    let ln_w = w.ln();
    let mut lg = (w - 0.5) * ln_w - w + 0.5 * (2.0 * PI).ln();
    let inv = w.inv();
    let inv2 = inv * inv;
    let mut psi = ln_w - 0.5 * inv;
    // lg: B_{2k} / (2k(2k-1) w^{2k-1});  psi: -B_{2k} / (2k w^{2k})
    let mut pow_odd = inv;
    let mut pow_even = inv2;
    for (k, b) in BERNOULLI.iter().enumerate() {
        let k2 = 2.0 * (k + 1) as f64;
        lg += pow_odd * (b / (k2 * (k2 - 1.0)));
        psi -= pow_even * (b / k2);
        pow_odd *= inv2;
        pow_even *= inv2;
    }
    (lg, psi)
}

/// ln Γ(iy), arg Γ(iy) and Re ψ(iy) for y ∈ [1e-6, 100].
pub fn gamma_on_imaginary_axis(y: f64) -> Result<GammaImag> {
    check(y)?;
    let n = lift_count(y);
    let (mut lg, mut psi) = stirling(Complex64::new(n as f64, y));
    for k in 0..n {
        let zk = Complex64::new(k as f64, y);
        lg -= zk.ln();
        psi -= zk.inv();
    }
    Ok(GammaImag {
        arg_gamma: lg.im,
        log_abs_gamma: lg.re,
        re_digamma: psi.re,
    })
}

pub fn arg_gamma_imag(y: f64) -> Result<f64> {
    Ok(gamma_on_imaginary_axis(y)?.arg_gamma)
}

pub fn re_digamma_imag(y: f64) -> Result<f64> {
    Ok(gamma_on_imaginary_axis(y)?.re_digamma)
}

/// g(ẑ₀) = 3 ln 2 − Re ψ(iẑ₀), the ẑ₀-derivative of 3ẑ₀ ln 2 − arg Γ(iẑ₀).
pub fn g_fun(z0_hat: f64) -> Result<f64> {
    Ok(3.0 * LN_2 - re_digamma_imag(z0_hat)?)
}

/// q(ϱ̂₀) = 7 ln 2 − 2 Re ψ(2iϱ̂₀), the ϱ̂₀-derivative of 7ϱ̂₀ ln 2 − arg Γ(2iϱ̂₀).
pub fn q_fun(rho0_hat: f64) -> Result<f64> {
    Ok(7.0 * LN_2 - 2.0 * re_digamma_imag(2.0 * rho0_hat)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

    /// −γ + Σ_{n≥0} (1/(n+1) − n/(n²+y²)) with an Euler–Maclaurin tail.
    fn re_digamma_series(y: f64) -> f64 {
        let term = |x: f64| 1.0 / (x + 1.0) - x / (x * x + y * y);
        let dterm = |x: f64| {
            -1.0 / ((x + 1.0) * (x + 1.0)) - (y * y - x * x) / ((x * x + y * y) * (x * x + y * y))
        };
        let n_cut = 20_000usize;
        let mut s = 0.0;
        for n in 0..n_cut {
            s += term(n as f64);
        }
        let nc = n_cut as f64;
        let tail_integral = 0.5 * (nc * nc + y * y).ln() - (nc + 1.0).ln();
        -EULER_GAMMA + s + tail_integral + 0.5 * term(nc) - dterm(nc) / 12.0
    }

    #[test]
    fn reflection_identity() {
        for &y in &[1e-3, 0.05, 0.3, 1.0, 2.5, 7.0, 20.0, 60.0] {
            let g = gamma_on_imaginary_axis(y).unwrap();
            // ln|Γ(iy)|² = ln π − ln y − ln sinh(πy)
            let lhs = 2.0 * g.log_abs_gamma;
            let ln_sinh = if y > 5.0 {
                PI * y - LN_2 + (-(2.0 * PI * y)).exp().ln_1p()
            } else {
                (PI * y).sinh().ln()
            };
            let rhs = PI.ln() - y.ln() - ln_sinh;
            assert!(
                (lhs - rhs).abs() < 1e-12 * rhs.abs().max(1.0),
                "y={y}: {lhs} vs {rhs}"
            );
        }
        let g = gamma_on_imaginary_axis(1.0).unwrap();
        let mod2 = (2.0 * g.log_abs_gamma).exp();
        assert!((mod2 - PI / PI.sinh()).abs() < 1e-12);
    }

    #[test]
    fn digamma_matches_direct_series() {
        for &y in &[0.2, 1.0, 3.0] {
            let got = re_digamma_imag(y).unwrap();
            let want = re_digamma_series(y);
            assert!((got - want).abs() < 1e-12, "y={y}: {got} vs {want}");
        }
        assert!((re_digamma_imag(1.0).unwrap() - 0.094_650_320_622_476_98).abs() < 1e-13);
    }

    #[test]
    fn digamma_large_argument() {
        let y = 50.0;
        // Re ψ(iy) = ln y + 1/(12y²) + 1/(120y⁴) + O(y⁻⁶)
        let d = re_digamma_imag(y).unwrap() - y.ln();
        assert!(d.abs() < 1e-4);
        let y2 = y * y;
        assert!((d - 1.0 / (12.0 * y2) - 1.0 / (120.0 * y2 * y2)).abs() < 1e-12);
    }

    #[test]
    fn small_argument_branch() {
        let y = 1e-5;
        let a = arg_gamma_imag(y).unwrap();
        assert!((a - (-PI / 2.0 - EULER_GAMMA * y)).abs() < 1e-9);
    }

    #[test]
    fn arg_gamma_is_continuous() {
        let mut prev = arg_gamma_imag(1e-3).unwrap();
        let mut y = 1e-3;
        while y < 40.0 {
            y += 1e-3;
            let a = arg_gamma_imag(y).unwrap();
            assert!((a - prev).abs() < 1e-2, "jump at y={y}");
            prev = a;
        }
    }

    #[test]
    fn digamma_is_derivative_of_arg() {
        let h = 1e-5;
        let mut y = 0.1;
        while y < 10.0 {
            let fd = (arg_gamma_imag(y + h).unwrap() - arg_gamma_imag(y - h).unwrap()) / (2.0 * h);
            assert!((fd - re_digamma_imag(y).unwrap()).abs() < 1e-6, "y={y}");
            y += 0.37;
        }
    }

    #[test]
    fn g_and_q() {
        let g1 = g_fun(1.0).unwrap();
        assert!((g1 - (3.0 * LN_2 - re_digamma_series(1.0))).abs() < 1e-12);
        assert!((g1 - 1.9848).abs() < 1e-4);
        let h = 1e-5;
        let lin = |z: f64| 3.0 * z * LN_2 - arg_gamma_imag(z).unwrap();
        let fd = (lin(0.7 + h) - lin(0.7 - h)) / (2.0 * h);
        assert!((fd - g_fun(0.7).unwrap()).abs() < 1e-6);
        for &r in &[0.05, 0.4, 2.0] {
            let q = q_fun(r).unwrap();
            assert!((q / 2.0 - 3.5 * LN_2 + re_digamma_imag(2.0 * r).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn domain_errors() {
        assert!(gamma_on_imaginary_axis(0.0).is_err());
        assert!(gamma_on_imaginary_axis(1e3).is_err());
    }
}
