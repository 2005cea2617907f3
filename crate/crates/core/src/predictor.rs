//! Fixed-point equations of the truncated return map, their strip-wise
//! solution, predicted traces and stability windows, the stable-solution
//! sweep over ε and the interval-cover analyses. Seeds can be converted to
//! initial conditions and continued by Newton on the numerical return map.

use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::asymptotic_maps::{
    blowdown_outer, connection, from_outer_action_angle, p_of, q_phase, rho0_closed, Admissible,
    ModelConstants, OuterAA, DEFAULT_DELTA_EXPONENT, Z0_SINGULAR,
};
use crate::error::{Error, Result};
use crate::integrator::IntegratorConfig;
use crate::model::{ModelSpec, ScaleFrame};
use crate::numerics::bisect;
use crate::orbits::{
    half_shot_from, return_map_jac, section_phase, Stability, SymmetryClass, STABILITY_MARGIN,
};
use crate::specfun;

const TWO_PI: f64 = 2.0 * PI;

/// Representative of `a` mod π in (−π/2, π/2].
pub fn wrap_pi_centered(a: f64) -> f64 {
    let r = a.rem_euclid(PI);
    if r > FRAC_PI_2 {
        r - PI
    } else {
        r
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    I,
    II,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct AnalyticSeed {
    pub case: Case,
    pub eps: f64,
    pub z0_hat: f64,
    pub w0: f64,
    /// λ_l reduced to [0, 2π).
    pub lambda_l: f64,
    pub rho0_hat: f64,
    pub predicted_trace: f64,
    pub predicted_stability: Stability,
    pub period_mult: u32,
    pub symmetry: SymmetryClass,
    /// Distance of the defining residual(s) from 0 mod π.
    pub residual: f64,
}

/// Partial derivatives entering the trace formulas.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceParts {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub g: f64,
    pub q: f64,
}

/// (|p|² + 1)/(2|p|²).
pub fn a_coef(z0_hat: f64) -> f64 {
    let p2 = (TWO_PI * z0_hat).exp_m1();
    (p2 + 1.0) / (2.0 * p2)
}

/// −cot λ / (2π).
pub fn b_coef(lambda: f64) -> f64 {
    -1.0 / (lambda.tan() * TWO_PI)
}

/// 2π(1 + |p|²) sin 2λ / |1 + p²|².
pub fn c_coef(z0_hat: f64, lambda: f64) -> f64 {
    let p = p_of(z0_hat, lambda);
    let n = (1.0 + p * p).norm_sqr();
    TWO_PI * (1.0 + p.norm_sqr()) * (2.0 * lambda).sin() / n
}

/// 2|p|²(cos 2λ + |p|²) / |1 + p²|².
pub fn d_coef(z0_hat: f64, lambda: f64) -> f64 {
    let p = p_of(z0_hat, lambda);
    let p2 = p.norm_sqr();
    let n = (1.0 + p * p).norm_sqr();
    2.0 * p2 * ((2.0 * lambda).cos() + p2) / n
}

/// 2A + D(ẑ₀, π/2) in closed form.
pub fn two_a_plus_d1(z0_hat: f64) -> f64 {
    let e = (TWO_PI * z0_hat).exp();
    (3.0 * e * e - 6.0 * e + 2.0) / ((e - 1.0) * (e - 2.0))
}

/// λ̂-interval on which case-(i) solutions with λ = π/2 + λ̂/ln ε⁻¹ are stable.
pub fn stability_window(z0_hat: f64, margin: f64) -> Result<(f64, f64)> {
    if (z0_hat - Z0_SINGULAR).abs() < margin {
        return Err(Error::OutsideDomain(format!(
            "z0_hat={z0_hat} near the pole of 2A+D1"
        )));
    }
    let k = two_a_plus_d1(z0_hat);
    let (lo, hi) = if k > 0.0 {
        (-TWO_PI * k + margin, -margin)
    } else {
        (margin, -TWO_PI * k - margin)
    };
    if lo >= hi {
        return Err(Error::OutsideDomain(format!(
            "empty stability window at z0_hat={z0_hat}"
        )));
    }
    Ok((lo, hi))
}

/// How a case-(i) solution near λ = π/2 counts as stable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StableCriterion {
    /// λ̂ inside [`stability_window`].
    Window,
    /// |tr| < 2 from the case-(i) trace formula.
    Trace,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SolveOptions {
    pub z0_window: (f64, f64),
    pub admissible: Admissible,
    /// Roots with λ_l within this of π/2 mod π are dropped (unstable census).
    pub cot_margin: Option<f64>,
    /// Bisection tolerance on ẑ₀ (or λ).
    pub xtol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            z0_window: (0.12, 2.0),
            admissible: Admissible::default(),
            cot_margin: None,
            xtol: 1e-13,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    pub seeds: Vec<AnalyticSeed>,
    pub strips: usize,
    /// Roots dropped by the |cot λ| exclusion.
    pub excluded_cot: usize,
    /// ẑ₀ values (case ii) or strips skipped by the admissible set.
    pub excluded_domain: usize,
}

/// The truncated fixed-point problem at one ε.
#[derive(Clone, Debug)]
pub struct Predictor {
    pub eps: f64,
    pub consts: ModelConstants,
    /// ln ε⁻¹.
    pub ln_inv: f64,
    /// 2 ln(e₂ε⁻¹).
    pub a2: f64,
    /// ln(e₄ε⁻¹).
    pub a4: f64,
    /// √2 e₁/ε mod 2π.
    e1_phase: f64,
    /// e₃/ε mod 2π.
    e3_phase: f64,
}

impl Predictor {
    pub fn new(eps: f64, consts: &ModelConstants) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::Domain(format!("eps={eps} outside (0, 1)")));
        }
        Ok(Self {
            eps,
            consts: consts.clone(),
            ln_inv: (1.0 / eps).ln(),
            a2: 2.0 * (consts.e2 / eps).ln(),
            a4: (consts.e4 / eps).ln(),
            e1_phase: (SQRT_2 * consts.e1 / eps).rem_euclid(TWO_PI),
            e3_phase: (consts.e3 / eps).rem_euclid(TWO_PI),
        })
    }

    /// G(ẑ₀) = 3ẑ₀ ln 2 − 3π/4 − arg Γ(iẑ₀) + e₃/ε, with e₃/ε reduced mod 2π.
    pub fn g_phase(&self, z0_hat: f64) -> Result<f64> {
        Ok(
            3.0 * z0_hat * std::f64::consts::LN_2 - 0.75 * PI - specfun::arg_gamma_imag(z0_hat)?
                + self.e3_phase,
        )
    }

    /// ln(e₄ε⁻¹)ẑ₀ + G(ẑ₀), continuous in ẑ₀.
    pub fn s_phase(&self, z0_hat: f64) -> Result<f64> {
        Ok(self.a4 * z0_hat + self.g_phase(z0_hat)?)
    }

    /// λ_l = −w₀ + S(ẑ₀), λ_r = w₀ + S(ẑ₀); not reduced.
    pub fn pseudo_phase(&self, z0_hat: f64, w0: f64, side: Side) -> Result<f64> {
        let s = self.s_phase(z0_hat)?;
        Ok(match side {
            Side::Left => s - w0,
            Side::Right => s + w0,
        })
    }

    /// F_i^(2)(ẑ₀), not reduced mod π.
    pub fn residual_case_i(&self, z0_hat: f64, w0: f64, adm: &Admissible) -> Result<f64> {
        let lam = self.pseudo_phase(z0_hat, w0, Side::Left)?;
        let c = connection(z0_hat, lam, adm)?;
        Ok(-self.e1_phase + self.a2 * c.rho0_hat - c.theta)
    }

    /// (F_ii^(1)(ẑ₀), F_ii^(2)(ẑ₀, λ)), not reduced mod π.
    pub fn residual_case_ii(
        &self,
        z0_hat: f64,
        lambda: f64,
        adm: &Admissible,
    ) -> Result<(f64, f64)> {
        adm.check(z0_hat, lambda)?;
        let f1 = 2.0 * self.s_phase(z0_hat)?;
        let rho = rho0_closed(z0_hat, lambda);
        let f2 = -self.e1_phase + self.a2 * rho - q_phase(rho)?;
        Ok((f1, f2))
    }

    pub fn trace_parts(&self, z0_hat: f64, lambda: f64) -> Result<TraceParts> {
        let p = p_of(z0_hat, lambda);
        if (1.0 + p * p).norm() < 1e-12 {
            return Err(Error::SingularP { z0: z0_hat, lambda });
        }
        let rho = rho0_closed(z0_hat, lambda);
        Ok(TraceParts {
            a: a_coef(z0_hat),
            b: b_coef(lambda),
            c: c_coef(z0_hat, lambda),
            d: d_coef(z0_hat, lambda),
            g: specfun::g_fun(z0_hat)?,
            q: specfun::q_fun(rho)?,
        })
    }

    /// Case (i): λ_r ∈ {λ_l, π + λ_l}.
    pub fn trace_case_i(&self, z0_hat: f64, lambda: f64) -> Result<f64> {
        let t = self.trace_parts(z0_hat, lambda)?;
        let (a2q, a4g) = (self.a2 - t.q, self.a4 + t.g);
        Ok(2.0 + 4.0 * t.b * (a2q * a4g * t.b + t.a * a2q + t.d * a4g + t.c))
    }

    /// Case (ii): λ_r ∈ {−λ_l, π − λ_l}.
    pub fn trace_case_ii(&self, z0_hat: f64, lambda: f64) -> Result<f64> {
        let t = self.trace_parts(z0_hat, lambda)?;
        Ok(2.0 - 4.0 * (self.a2 - t.q) * (self.a4 + t.g) * t.b * t.b)
    }

    pub fn trace_jacobian(&self, seed: &AnalyticSeed) -> Result<f64> {
        match seed.case {
            Case::I => self.trace_case_i(seed.z0_hat, seed.lambda_l),
            Case::II => self.trace_case_ii(seed.z0_hat, seed.lambda_l),
        }
    }

    /// (ϱ̂, φ) of one side of the fixed-point equation, without the ε⁻¹e₁ term.
    fn side_image(&self, z0_hat: f64, w0: f64, side: Side, adm: &Admissible) -> Result<(f64, f64)> {
        let lam = self.pseudo_phase(z0_hat, w0, side)?;
        let c = connection(z0_hat, lam, adm)?;
        let phi = self.a2 * c.rho0_hat - c.theta;
        Ok(match side {
            Side::Left => (c.rho0_hat, phi),
            Side::Right => (c.rho0_hat, -phi),
        })
    }

    /// tr(J_r⁻¹ J_l) with both Jacobians of the composed truncated maps
    /// taken by central differences; equals tr ∂P at a fixed point.
    pub fn composed_trace(&self, z0_hat: f64, w0: f64, adm: &Admissible) -> Result<f64> {
        let h = 1e-6;
        let jac = |side: Side| -> Result<Matrix2<f64>> {
            let mut m = Matrix2::zeros();
            for (col, (dz, dw)) in [(h, 0.0), (0.0, h)].into_iter().enumerate() {
                let a = self.side_image(z0_hat + dz, w0 + dw, side, adm)?;
                let b = self.side_image(z0_hat - dz, w0 - dw, side, adm)?;
                m[(0, col)] = (a.0 - b.0) / (2.0 * h);
                m[(1, col)] = wrap_pi_centered_2pi(a.1 - b.1) / (2.0 * h);
            }
            Ok(m)
        };
        let jl = jac(Side::Left)?;
        let jr = jac(Side::Right)?;
        let inv = jr
            .try_inverse()
            .ok_or_else(|| Error::Domain("singular right-hand Jacobian".into()))?;
        Ok((inv * jl).trace())
    }

    /// Smallest ẑ₀ in [lo, hi] with S(ẑ₀) − w₀ ≥ target (S increasing).
    fn invert_lambda(&self, target: f64, w0: f64, lo: f64, hi: f64) -> Result<f64> {
        let f = |z: f64| self.s_phase(z).map(|s| s - w0 - target).unwrap_or(f64::NAN);
        let flo = f(lo);
        if flo >= 0.0 {
            return Ok(lo);
        }
        if f(hi) <= 0.0 {
            return Ok(hi);
        }
        Ok(bisect(f, lo, hi, flo, 1e-14))
    }

    fn make_seed_i(&self, z: f64, w0: f64, adm: &Admissible) -> Result<AnalyticSeed> {
        let lam = self.pseudo_phase(z, w0, Side::Left)?;
        let c = connection(z, lam, adm)?;
        let tr = self.trace_case_i(z, lam)?;
        let res = wrap_pi_centered(self.residual_case_i(z, w0, adm)?).abs();
        let period2 = (w0.rem_euclid(PI) - FRAC_PI_2).abs() < 1e-9;
        Ok(AnalyticSeed {
            case: Case::I,
            eps: self.eps,
            z0_hat: z,
            w0,
            lambda_l: lam.rem_euclid(TWO_PI),
            rho0_hat: c.rho0_hat,
            predicted_trace: tr,
            predicted_stability: Stability::from_trace(tr, STABILITY_MARGIN),
            period_mult: if period2 { 2 } else { 1 },
            symmetry: if period2 {
                SymmetryClass::RAndTTau
            } else {
                SymmetryClass::TTau
            },
            residual: res,
        })
    }

    /// Roots of `f` mod π on [a, b], marching with steps that keep the
    /// lifted increment below π/4. `slope` bounds |f'| for the first step.
    fn roots_mod_pi<F: Fn(f64) -> Result<f64>>(
        f: F,
        a: f64,
        b: f64,
        slope: f64,
        xtol: f64,
    ) -> Result<Vec<f64>> {
        let mut roots = Vec::new();
        let mut x = a;
        let mut fx = f(a)?;
        let mut lifted = fx;
        let mut h = ((b - a) / 8.0).min(0.2 / slope.max(1e-12));
        while x < b {
            let xn = (x + h).min(b);
            let fxn = f(xn)?;
            let d = wrap_pi_centered(fxn - fx);
            if d.abs() > PI / 4.0 && xn - x > 1e-14 {
                h *= 0.5;
                continue;
            }
            let ln = lifted + d;
            let (k0, k1) = ((lifted / PI).floor(), (ln / PI).floor());
            if k0 != k1 {
                let k = k0.max(k1);
                let target = k * PI;
                // Within one cell the lifted value is fx-relative.
                let g = |t: f64| {
                    f(t).map(|v| lifted + wrap_pi_centered(v - fx) - target)
                        .unwrap_or(f64::NAN)
                };
                let ga = lifted - target;
                if ga == 0.0 {
                    roots.push(x);
                } else {
                    roots.push(bisect(g, x, xn, ga, xtol));
                }
            }
            x = xn;
            fx = fxn;
            lifted = ln;
            if d.abs() < PI / 16.0 {
                h *= 1.5;
            }
        }
        roots.dedup_by(|p, q| (*p - *q).abs() < 10.0 * xtol);
        Ok(roots)
    }

    /// Case-(i) solutions for the given w₀ (0 or π/2 mod π).
    pub fn solve_case_i(&self, w0: f64, opts: &SolveOptions) -> Result<SolveReport> {
        let adm = opts.admissible;
        let (zlo, zhi) = opts.z0_window;
        // Slightly inside the admissible set so the strip ends evaluate.
        let m = adm.margin + 1e-9;
        let lam_lo = self.s_phase(zlo)? - w0;
        let lam_hi = self.s_phase(zhi)? - w0;
        let k0 = (lam_lo / PI).floor() as i64;
        let k1 = (lam_hi / PI).floor() as i64;
        let mut seeds = Vec::new();
        let mut strips = 0;
        let mut excluded_cot = 0;
        let mut excluded_domain = 0;
        for k in k0..=k1 {
            let a = self.invert_lambda(k as f64 * PI + m, w0, zlo, zhi)?;
            let b = self.invert_lambda((k + 1) as f64 * PI - m, w0, zlo, zhi)?;
            if b <= a {
                continue;
            }
            // Split around the singular ẑ₀.
            let mut pieces = vec![(a, b)];
            if a < Z0_SINGULAR + m && b > Z0_SINGULAR - m {
                excluded_domain += 1;
                pieces = vec![(a, (Z0_SINGULAR - m).min(b)), ((Z0_SINGULAR + m).max(a), b)];
            }
            for (pa, pb) in pieces {
                if pb - pa <= 1e-12 {
                    continue;
                }
                strips += 1;
                let slope = self.a2 * self.ln_inv / (PI * m.tan()) + 10.0 * self.ln_inv;
                let roots = Self::roots_mod_pi(
                    |z| self.residual_case_i(z, w0, &adm),
                    pa,
                    pb,
                    slope,
                    opts.xtol,
                )?;
                for z in roots {
                    let seed = match self.make_seed_i(z, w0, &adm) {
                        Ok(s) => s,
                        Err(Error::OutsideDomain(_)) => {
                            excluded_domain += 1;
                            continue;
                        }
                        Err(e) => return Err(e),
                    };
                    if let Some(cm) = opts.cot_margin {
                        if (seed.lambda_l.rem_euclid(PI) - FRAC_PI_2).abs() < cm {
                            excluded_cot += 1;
                            continue;
                        }
                    }
                    seeds.push(seed);
                }
            }
        }
        Ok(SolveReport {
            seeds,
            strips,
            excluded_cot,
            excluded_domain,
        })
    }

    /// Case-(ii) solutions: F_ii^(1) first, then F_ii^(2) in λ ∈ (c, π − c).
    pub fn solve_case_ii(&self, opts: &SolveOptions) -> Result<SolveReport> {
        let adm = opts.admissible;
        let (zlo, zhi) = opts.z0_window;
        let m = adm.margin + 1e-9;
        let f1lo = 2.0 * self.s_phase(zlo)?;
        let f1hi = 2.0 * self.s_phase(zhi)?;
        let mut seeds = Vec::new();
        let mut excluded_cot = 0;
        let mut excluded_domain = 0;
        let mut strips = 0;
        let n0 = (f1lo / PI).ceil() as i64;
        let n1 = (f1hi / PI).floor() as i64;
        for n in n0..=n1 {
            let target = n as f64 * PI;
            let f = |z: f64| {
                self.s_phase(z)
                    .map(|s| 2.0 * s - target)
                    .unwrap_or(f64::NAN)
            };
            let z = bisect(f, zlo, zhi, f(zlo), opts.xtol);
            if (z - Z0_SINGULAR).abs() < m {
                excluded_domain += 1;
                continue;
            }
            strips += 1;
            let s = self.s_phase(z)?;
            let slope = self.a2 / (PI * m.tan()) + 10.0;
            let roots = Self::roots_mod_pi(
                |lam| self.residual_case_ii(z, lam, &adm).map(|r| r.1),
                m,
                PI - m,
                slope,
                opts.xtol,
            )?;
            for lam in roots {
                if let Some(cm) = opts.cot_margin {
                    if (lam - FRAC_PI_2).abs() < cm {
                        excluded_cot += 1;
                        continue;
                    }
                }
                let (r1, r2) = match self.residual_case_ii(z, lam, &adm) {
                    Ok(r) => r,
                    Err(Error::OutsideDomain(_)) => {
                        excluded_domain += 1;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let tr = self.trace_case_ii(z, lam)?;
                // λ_r = −λ_l when F_ii^(1) ≡ 0 mod 2π: the branch flips.
                let flips = n.rem_euclid(2) == 0;
                seeds.push(AnalyticSeed {
                    case: Case::II,
                    eps: self.eps,
                    z0_hat: z,
                    w0: (s - lam).rem_euclid(TWO_PI),
                    lambda_l: lam,
                    rho0_hat: rho0_closed(z, lam),
                    predicted_trace: tr,
                    predicted_stability: Stability::from_trace(tr, STABILITY_MARGIN),
                    period_mult: if flips { 2 } else { 1 },
                    symmetry: if flips {
                        SymmetryClass::ROnly
                    } else {
                        SymmetryClass::NoSymmetry
                    },
                    residual: wrap_pi_centered(r1).abs().max(wrap_pi_centered(r2).abs()),
                });
            }
        }
        Ok(SolveReport {
            seeds,
            strips,
            excluded_cot,
            excluded_domain,
        })
    }

    /// Case (i) for w₀ ∈ {0, π/2, π, 3π/2}, or case (ii).
    pub fn solve_fixed_points(&self, case: Case, opts: &SolveOptions) -> Result<SolveReport> {
        match case {
            Case::I => {
                let mut a = self.solve_case_i(0.0, opts)?;
                for w0 in [FRAC_PI_2, PI, 1.5 * PI] {
                    let b = self.solve_case_i(w0, opts)?;
                    a.seeds.extend(b.seeds);
                    a.strips += b.strips;
                    a.excluded_cot += b.excluded_cot;
                    a.excluded_domain += b.excluded_domain;
                }
                Ok(a)
            }
            Case::II => self.solve_case_ii(opts),
        }
    }

    fn in_stable_set(
        &self,
        z: f64,
        w0: f64,
        center: f64,
        crit: StableCriterion,
        margin: f64,
    ) -> bool {
        let Ok(s) = self.s_phase(z) else { return false };
        let lam = s - w0;
        if (Admissible { margin }).check(z, lam).is_err() {
            return false;
        }
        match crit {
            StableCriterion::Window => match stability_window(z, margin) {
                Ok((lo, hi)) => {
                    let lh = (lam - center) * self.ln_inv;
                    lh >= lo && lh <= hi
                }
                Err(_) => false,
            },
            StableCriterion::Trace => {
                if (z - Z0_SINGULAR).abs() < margin {
                    return false;
                }
                self.trace_case_i(z, lam)
                    .map(|t| t.abs() < 2.0)
                    .unwrap_or(false)
            }
        }
    }

    /// ẑ₀-intervals near λ_l ≡ π/2 mod π on which case (i) with this w₀ is
    /// stable, one per crossing of π/2 + mπ.
    pub fn stable_intervals(
        &self,
        w0: f64,
        window: (f64, f64),
        crit: StableCriterion,
        margin: f64,
    ) -> Result<Vec<(f64, f64)>> {
        let (zlo, zhi) = window;
        let lam_lo = self.s_phase(zlo)? - w0;
        let lam_hi = self.s_phase(zhi)? - w0;
        let span = (TWO_PI * 3.5 + 1.0) / self.ln_inv;
        let m0 = ((lam_lo - FRAC_PI_2 - 0.5) / PI).floor() as i64;
        let m1 = ((lam_hi - FRAC_PI_2 + span) / PI).ceil() as i64;
        let mut out = Vec::new();
        for mm in m0..=m1 {
            let center = FRAC_PI_2 + mm as f64 * PI;
            // The window for the strongest 2A+D₁ we admit sits inside this bracket.
            let kmax = two_a_plus_d1(zlo.max(Z0_SINGULAR + margin)).abs().max(3.5);
            let a =
                self.invert_lambda(center - (TWO_PI * kmax + 4.0) / self.ln_inv, w0, zlo, zhi)?;
            let b = self.invert_lambda(center + 4.0 / self.ln_inv, w0, zlo, zhi)?;
            if b <= a {
                continue;
            }
            const N: usize = 256;
            let xs: Vec<f64> = (0..=N).map(|i| a + (b - a) * i as f64 / N as f64).collect();
            let inside: Vec<bool> = xs
                .iter()
                .map(|&z| self.in_stable_set(z, w0, center, crit, margin))
                .collect();
            let mut i = 0;
            while i <= N {
                if !inside[i] {
                    i += 1;
                    continue;
                }
                let start = i;
                while i <= N && inside[i] {
                    i += 1;
                }
                let end = i - 1;
                let member = |z: f64| {
                    if self.in_stable_set(z, w0, center, crit, margin) {
                        1.0
                    } else {
                        -1.0
                    }
                };
                let left = if start == 0 {
                    xs[0]
                } else {
                    bisect(member, xs[start], xs[start - 1], 1.0, 1e-14)
                };
                let right = if end == N {
                    xs[N]
                } else {
                    bisect(member, xs[end], xs[end + 1], 1.0, 1e-14)
                };
                // Bisection leaves the edges on the boundary; step inside.
                let pad = 1e-12 * (b - a);
                out.push((left + pad, right - pad));
            }
        }
        out.sort_by(|p, q| p.0.total_cmp(&q.0));
        out.dedup_by(|p, q| (p.0 - q.0).abs() < 1e-12);
        Ok(out)
    }

    /// Stable case-(i) solutions for one w₀ inside the ẑ₀ window.
    pub fn stable_solutions(
        &self,
        w0: f64,
        window: (f64, f64),
        crit: StableCriterion,
        adm: &Admissible,
    ) -> Result<Vec<AnalyticSeed>> {
        let mut seeds = Vec::new();
        for (a, b) in self.stable_intervals(w0, window, crit, adm.margin)? {
            let slope = self.a2 * 4.0;
            for z in Self::roots_mod_pi(|z| self.residual_case_i(z, w0, adm), a, b, slope, 1e-14)? {
                if let Ok(s) = self.make_seed_i(z, w0, adm) {
                    seeds.push(s);
                }
            }
        }
        Ok(seeds)
    }

    /// Image of a ẑ₀-interval under F_i^(2), as a lifted real interval.
    pub fn image_interval(&self, w0: f64, a: f64, b: f64, adm: &Admissible) -> Result<(f64, f64)> {
        const N: usize = 64;
        let mut prev = self.residual_case_i(a, w0, adm)?;
        let mut lifted = prev;
        let (mut lo, mut hi) = (lifted, lifted);
        for i in 1..=N {
            let z = a + (b - a) * i as f64 / N as f64;
            let v = self.residual_case_i(z, w0, adm)?;
            lifted += wrap_pi_centered(v - prev);
            prev = v;
            lo = lo.min(lifted);
            hi = hi.max(lifted);
        }
        Ok((lo, hi))
    }
}

/// `a` mod 2π in (−π, π].
fn wrap_pi_centered_2pi(a: f64) -> f64 {
    let r = a.rem_euclid(TWO_PI);
    if r > PI {
        r - TWO_PI
    } else {
        r
    }
}

// ---------------------------------------------------------------------------
// Stable census sweep

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SweepConfig {
    pub n_values: usize,
    pub z0_window: (f64, f64),
    /// Range sampled uniformly for ln⁻¹ε⁻¹.
    pub inv_log_range: (f64, f64),
    pub criterion: StableCriterion,
    pub margin: f64,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n_values: 1000,
            z0_window: (0.12, 2.0),
            inv_log_range: (1.0 / 30.0, 1.0 / 10.0),
            criterion: StableCriterion::Window,
            margin: 0.05,
            seed: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SweepSample {
    pub inv_log: f64,
    pub eps: f64,
    /// Stable solutions with w₀ = 0 (period 1).
    pub stable_w0_0: usize,
    /// Stable solutions with w₀ = π/2 (period 2).
    pub stable_w0_half_pi: usize,
    pub stable_total: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub config: SweepConfig,
    pub samples: Vec<SweepSample>,
    /// histogram[k] = number of samples with k stable solutions.
    pub histogram: Vec<usize>,
    pub no_stable_fraction: f64,
    pub some_stable_fraction: f64,
}

pub fn stable_census_sweep(consts: &ModelConstants, cfg: &SweepConfig) -> Result<SweepReport> {
    if cfg.n_values < 100 {
        return Err(Error::Config(format!(
            "sweep needs at least 100 values, got {}",
            cfg.n_values
        )));
    }
    let (s0, s1) = cfg.inv_log_range;
    if !(s0 > 0.0 && s1 > s0) {
        return Err(Error::Config(format!(
            "bad ln^-1(1/eps) range ({s0}, {s1})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let draws: Vec<f64> = (0..cfg.n_values).map(|_| rng.gen_range(s0..s1)).collect();
    let adm = Admissible { margin: cfg.margin };
    let samples: Vec<SweepSample> = draws
        .par_iter()
        .map(|&s| -> Result<SweepSample> {
            let eps = (-1.0 / s).exp();
            let p = Predictor::new(eps, consts)?;
            let a = p
                .stable_solutions(0.0, cfg.z0_window, cfg.criterion, &adm)?
                .len();
            let b = p
                .stable_solutions(FRAC_PI_2, cfg.z0_window, cfg.criterion, &adm)?
                .len();
            Ok(SweepSample {
                inv_log: s,
                eps,
                stable_w0_0: a,
                stable_w0_half_pi: b,
                stable_total: a + b,
            })
        })
        .collect::<Result<_>>()?;
    Ok(summarize_sweep(*cfg, samples))
}

pub fn summarize_sweep(config: SweepConfig, samples: Vec<SweepSample>) -> SweepReport {
    let max = samples.iter().map(|s| s.stable_total).max().unwrap_or(0);
    let mut histogram = vec![0usize; max + 1];
    for s in &samples {
        histogram[s.stable_total] += 1;
    }
    let n = samples.len().max(1) as f64;
    let none = histogram.first().copied().unwrap_or(0) as f64 / n;
    SweepReport {
        config,
        samples,
        histogram,
        no_stable_fraction: none,
        some_stable_fraction: 1.0 - none,
    }
}

// ---------------------------------------------------------------------------
// Interval-cover analyses

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CoverMode {
    Part2,
    Part3,
    Part4,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct CoverStep {
    pub n: usize,
    pub eps: f64,
    /// Left end of the stable ẑ₀-interval.
    pub z0: f64,
    pub z0_right: f64,
    /// F_i^(2) at the left end, mod π in [0, π).
    pub f: f64,
    /// Image length (lifted).
    pub image_len: f64,
    /// f_{n+1} − f_n mod π in (−π/2, π/2]; NaN on the last step.
    pub step: f64,
    /// π(2A+D₁) mod π in (−π/2, π/2] at z0.
    pub step_predicted: f64,
    pub stable: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct CoverReport {
    pub mode: CoverMode,
    pub eps: f64,
    pub steps: Vec<CoverStep>,
    /// Part 2: largest run of consecutive intervals without a stable solution.
    pub longest_gap: usize,
    pub mean_gap: f64,
    /// Part 2: ln^{(1+d)/(2+d)} ε⁻¹ with d = 2.
    pub upper_estimate: f64,
    /// Part 3: ε-grid with the stable count at each point.
    pub eps_counts: Vec<(f64, usize)>,
    /// Part 3: maximal ε-subintervals with at least one stable solution.
    pub stable_eps_intervals: Vec<(f64, f64)>,
    pub count_changes: usize,
    /// Part 3: ((2A+D₁)e₃ − e₁)ε⁻² at the first interval.
    pub drift_rate: f64,
    /// Part 4: fraction of consecutive pairs whose images overlap mod π.
    pub overlap_fraction: f64,
    /// Part 4: 3πẐ₀ ln⁻¹ε⁻¹ for the chosen Ẑ₀.
    pub separation_predicted: f64,
    /// Part 4: fraction of the circle R/πZ covered by the images.
    pub coverage: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct CoverConfig {
    pub mode: CoverMode,
    pub eps: f64,
    pub z0_start: f64,
    pub n_steps: usize,
    pub margin: f64,
    /// Part 3: half-width factor c₁ of [ε₁ − c₁ε₁², ε₁ + c₁ε₁²].
    pub c1: f64,
    /// Part 3: number of ε samples.
    pub eps_samples: usize,
    /// Part 4: Ẑ₀ in ẑ₀ = (1/2π) ln(Ẑ₀⁻¹ ln ε⁻¹).
    pub big_z0: f64,
}

impl Default for CoverConfig {
    fn default() -> Self {
        Self {
            mode: CoverMode::Part2,
            eps: 1e-8,
            z0_start: 0.3,
            n_steps: 40,
            margin: 0.05,
            c1: 5.0,
            eps_samples: 2001,
            big_z0: 0.5,
        }
    }
}

fn cover_steps(
    p: &Predictor,
    z0_start: f64,
    n_steps: usize,
    margin: f64,
) -> Result<Vec<CoverStep>> {
    let adm = Admissible { margin };
    let zmax = z0_start + (n_steps as f64 + 2.0) * PI / p.ln_inv + 0.5;
    let intervals = p.stable_intervals(0.0, (z0_start, zmax), StableCriterion::Window, margin)?;
    let mut steps = Vec::new();
    for (n, &(a, b)) in intervals.iter().take(n_steps).enumerate() {
        let f = p.residual_case_i(a, 0.0, &adm)?;
        let (lo, hi) = p.image_interval(0.0, a, b, &adm)?;
        let stable = p
            .stable_solutions(0.0, (a, b), StableCriterion::Window, &adm)?
            .len();
        steps.push(CoverStep {
            n,
            eps: p.eps,
            z0: a,
            z0_right: b,
            f: f.rem_euclid(PI),
            image_len: hi - lo,
            step: f64::NAN,
            step_predicted: wrap_pi_centered(PI * two_a_plus_d1(a)),
            stable,
        });
    }
    for i in 0..steps.len().saturating_sub(1) {
        steps[i].step = wrap_pi_centered(steps[i + 1].f - steps[i].f);
    }
    Ok(steps)
}

pub fn interval_cover_analysis(consts: &ModelConstants, cfg: &CoverConfig) -> Result<CoverReport> {
    let p = Predictor::new(cfg.eps, consts)?;
    let mut rep = CoverReport {
        mode: cfg.mode,
        eps: cfg.eps,
        steps: Vec::new(),
        longest_gap: 0,
        mean_gap: f64::NAN,
        upper_estimate: p.ln_inv.powf(3.0 / 4.0),
        eps_counts: Vec::new(),
        stable_eps_intervals: Vec::new(),
        count_changes: 0,
        drift_rate: f64::NAN,
        overlap_fraction: f64::NAN,
        separation_predicted: f64::NAN,
        coverage: f64::NAN,
    };
    match cfg.mode {
        CoverMode::Part2 => {
            rep.steps = cover_steps(&p, cfg.z0_start, cfg.n_steps, cfg.margin)?;
            let mut gaps = Vec::new();
            let mut run = 0usize;
            for s in &rep.steps {
                if s.stable > 0 {
                    gaps.push(run);
                    run = 0;
                } else {
                    run += 1;
                }
            }
            gaps.push(run);
            rep.longest_gap = gaps.iter().copied().max().unwrap_or(0);
            rep.mean_gap = gaps.iter().sum::<usize>() as f64 / gaps.len() as f64;
        }
        CoverMode::Part3 => {
            let e1 = cfg.eps;
            let half = cfg.c1 * e1 * e1;
            let n = cfg.eps_samples.max(2);
            let window = (cfg.z0_start, 2.0);
            let adm = Admissible { margin: cfg.margin };
            let grid: Vec<f64> = (0..n)
                .map(|i| e1 - half + 2.0 * half * i as f64 / (n - 1) as f64)
                .collect();
            rep.eps_counts = grid
                .par_iter()
                .map(|&e| -> Result<(f64, usize)> {
                    let q = Predictor::new(e, consts)?;
                    let c = q
                        .stable_solutions(0.0, window, StableCriterion::Window, &adm)?
                        .len()
                        + q.stable_solutions(FRAC_PI_2, window, StableCriterion::Window, &adm)?
                            .len();
                    Ok((e, c))
                })
                .collect::<Result<_>>()?;
            rep.count_changes = rep
                .eps_counts
                .windows(2)
                .filter(|w| w[0].1 != w[1].1)
                .count();
            let mut start: Option<f64> = None;
            for (i, &(e, c)) in rep.eps_counts.iter().enumerate() {
                match (c > 0, start) {
                    (true, None) => start = Some(e),
                    (false, Some(s)) => {
                        rep.stable_eps_intervals.push((s, rep.eps_counts[i - 1].0));
                        start = None;
                    }
                    _ => {}
                }
            }
            if let Some(s) = start {
                rep.stable_eps_intervals
                    .push((s, rep.eps_counts.last().unwrap().0));
            }
            rep.steps = cover_steps(&p, cfg.z0_start, cfg.n_steps, cfg.margin)?;
            if let Some(s) = rep.steps.first() {
                rep.drift_rate = (two_a_plus_d1(s.z0) * consts.e3 - consts.e1) / (e1 * e1);
            }
        }
        CoverMode::Part4 => {
            let z0 = (p.ln_inv / cfg.big_z0).ln() / TWO_PI;
            rep.separation_predicted = 3.0 * PI * cfg.big_z0 / p.ln_inv;
            rep.steps = cover_steps(&p, z0, cfg.n_steps, cfg.margin)?;
            let adm = Admissible { margin: cfg.margin };
            let mut images = Vec::new();
            for s in &rep.steps {
                images.push(p.image_interval(0.0, s.z0, s.z0_right, &adm)?);
            }
            let mut overlaps = 0usize;
            for w in images.windows(2) {
                let (a, b) = (w[0], w[1]);
                // Shift b by a multiple of π to sit nearest a.
                let shift = PI * ((a.0 - b.0) / PI).round();
                let (b0, b1) = (b.0 + shift, b.1 + shift);
                if b0.max(a.0) <= b1.min(a.1) {
                    overlaps += 1;
                }
            }
            rep.overlap_fraction = overlaps as f64 / images.len().saturating_sub(1).max(1) as f64;
            rep.coverage = circle_coverage(&images);
        }
    }
    Ok(rep)
}

/// Measure of the union of lifted intervals mod π, as a fraction of π.
fn circle_coverage(intervals: &[(f64, f64)]) -> f64 {
    let mut pieces = Vec::new();
    for &(a, b) in intervals {
        if b - a >= PI {
            return 1.0;
        }
        let s = a.rem_euclid(PI);
        let e = s + (b - a);
        if e <= PI {
            pieces.push((s, e));
        } else {
            pieces.push((s, PI));
            pieces.push((0.0, e - PI));
        }
    }
    pieces.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut total = 0.0;
    let mut cur: Option<(f64, f64)> = None;
    for (a, b) in pieces {
        cur = match cur {
            None => Some((a, b)),
            Some((ca, cb)) if a <= cb => Some((ca, cb.max(b))),
            Some((ca, cb)) => {
                total += cb - ca;
                Some((a, b))
            }
        };
    }
    if let Some((a, b)) = cur {
        total += b - a;
    }
    total / PI
}

// ---------------------------------------------------------------------------
// Seeds to orbits

/// (x, y) on the section u = −π + τ/2 for the outer action-angle (ẑ₀, w₀).
pub fn seed_to_initial_condition(seed: &AnalyticSeed, model: &ModelSpec) -> Result<(f64, f64)> {
    let eps = seed.eps;
    let delta = eps.powf(DEFAULT_DELTA_EXPONENT);
    let frame = ScaleFrame::with_threshold(eps, delta, 1.0, f64::INFINITY)?;
    let u = section_phase(model);
    let u_hat = u / (frame.mu * frame.mu);
    let (xh, yh) = from_outer_action_angle(
        &OuterAA {
            z0_hat: seed.z0_hat,
            w0: seed.w0,
        },
        u_hat,
        &frame,
        model,
    )?;
    let (x, y, _) = blowdown_outer(xh, yh, u_hat, &frame);
    Ok((x, y))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ContinuationResult {
    pub z0_hat: f64,
    pub w0: f64,
    pub period_mult: u32,
    pub predicted_trace: f64,
    pub x_seed: f64,
    pub y_seed: f64,
    pub x: f64,
    pub y: f64,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    pub trace: f64,
    pub stability: Stability,
}

pub const CONTINUATION_TOLERANCE: f64 = 1e-9;

/// Newton on P^k(z) − z, k the seed's period multiple. Case-(i) seeds are
/// first refined along their symmetry line with the half-period defect; the
/// 2D polish then confirms closure. `iterations` counts both stages.
pub fn continue_seed(
    seed: &AnalyticSeed,
    model: &ModelSpec,
    cfg: &IntegratorConfig,
    max_iter: usize,
) -> Result<ContinuationResult> {
    let eps = seed.eps;
    let (x0, y0) = seed_to_initial_condition(seed, model)?;
    let k = seed.period_mult;
    let mut z = Vector2::new(x0, y0);
    let mut iterations = 0;
    if seed.case == Case::I {
        // Symmetric seeds: shoot along the symmetry line through the seed first.
        let on_x_axis = seed.w0.rem_euclid(PI) < FRAC_PI_2 / 2.0;
        let (col, defect) = match (on_x_axis, k) {
            (true, 1) | (false, 2) => (if on_x_axis { 0 } else { 1 }, 1),
            _ => (if on_x_axis { 0 } else { 1 }, 0),
        };
        if on_x_axis {
            z[1] = 0.0;
        } else {
            z[0] = 0.0;
        }
        let cap = 0.05 * eps.sqrt();
        // Leave room for the 2D polish.
        while iterations + 3 < max_iter {
            iterations += 1;
            let (e, phi) = half_shot_from(z[0], z[1], model, eps, cfg, true)?;
            let d = e[defect];
            let dd = phi.map(|m| m[(defect, col)]).unwrap_or(f64::NAN);
            if d.abs() < 1e-13 || dd == 0.0 || !dd.is_finite() {
                break;
            }
            let mut step = d / dd;
            if step.abs() > cap {
                step = cap * step.signum();
            }
            z[col] -= step;
            if step.abs() < 1e-15 * z[col].abs().max(1e-3) {
                break;
            }
        }
    }
    let cap = 0.25 * eps.sqrt();
    let eval = |z: &Vector2<f64>| -> Result<(Vector2<f64>, Matrix2<f64>)> {
        let ((px, py), phi) = return_map_jac(z[0], z[1], model, eps, cfg, k)?;
        Ok((Vector2::new(px - z[0], py - z[1]), phi))
    };
    let (mut g, mut phi) = eval(&z)?;
    let mut res = g.norm();
    while iterations < max_iter && res >= CONTINUATION_TOLERANCE {
        iterations += 1;
        let Some(inv) = (phi - Matrix2::identity()).try_inverse() else {
            break;
        };
        let mut step = -(inv * g);
        if step.norm() > cap {
            step *= cap / step.norm();
        }
        // Backtrack until the residual decreases.
        let mut accepted = false;
        for _ in 0..8 {
            let trial = z + step;
            if let Ok((gt, pt)) = eval(&trial) {
                if gt.norm() < res {
                    z = trial;
                    g = gt;
                    phi = pt;
                    res = g.norm();
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let trace = phi.trace();
    let converged = res < CONTINUATION_TOLERANCE;
    Ok(ContinuationResult {
        z0_hat: seed.z0_hat,
        w0: seed.w0,
        period_mult: k,
        predicted_trace: seed.predicted_trace,
        x_seed: x0,
        y_seed: y0,
        x: z[0],
        y: z[1],
        converged,
        iterations,
        residual: res,
        trace,
        stability: Stability::from_trace(trace, STABILITY_MARGIN),
    })
}
