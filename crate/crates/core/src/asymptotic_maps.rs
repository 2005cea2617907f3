//! The analytic factorization of the half-period map: outer averaged map,
//! Painlevé-II crossing, inner averaged map, together with the blowup charts
//! and action-angle frames they live in.

use std::f64::consts::{LN_2, PI, SQRT_2};

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ExtendedState, ModelSpec, ScaleFrame};
use crate::numerics;
use crate::specfun;

const TWO_PI: f64 = 2.0 * PI;

pub fn wrap_2pi(a: f64) -> f64 {
    let r = a.rem_euclid(TWO_PI);
    if r >= TWO_PI {
        0.0
    } else {
        r
    }
}

/// Outer action-angle coordinates: x̂₀ = √(2ẑ₀)cos w₀, ŷ₀ = √(2ẑ₀)sin w₀.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OuterAA {
    pub z0_hat: f64,
    pub w0: f64,
}

/// Inner action-angle coordinates about the κ-branch selected by `eta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InnerAA {
    pub rho0_hat: f64,
    pub phi0: f64,
    pub eta: i8,
}

/// A truncated-map output with the size of the dropped remainder.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimated<T> {
    pub value: T,
    pub error_estimate: f64,
}

/// Admissible set for the crossing: λ kept `margin` away from {0, π} and ẑ₀
/// kept `margin` away from ln 2/(2π), where 1 + p² can vanish.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Admissible {
    pub margin: f64,
}

impl Default for Admissible {
    fn default() -> Self {
        Self { margin: 0.05 }
    }
}

/// ẑ₀ at which |p| = 1.
pub const Z0_SINGULAR: f64 = LN_2 / TWO_PI;

impl Admissible {
    pub fn check(&self, z0_hat: f64, lambda: f64) -> Result<()> {
        let lm = lambda.rem_euclid(PI);
        if lm < self.margin || PI - lm < self.margin {
            return Err(Error::OutsideDomain(format!(
                "lambda={lambda:.6} within {} of 0 or pi",
                self.margin
            )));
        }
        if (z0_hat - Z0_SINGULAR).abs() < self.margin {
            return Err(Error::OutsideDomain(format!(
                "z0_hat={z0_hat:.6} within {} of ln2/(2pi)",
                self.margin
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Blowup charts and action-angle frames

/// (x, y, u) → (x̂, ŷ, û) with x̂ = x/(μδ^{3/4}), ŷ = y/(μ²δ^{3/4}), û = u/μ².
pub fn blowup_outer(s: &ExtendedState, frame: &ScaleFrame) -> (f64, f64, f64) {
    let (sx, sy) = chart_scales(frame);
    (s.x / sx, s.y / sy, s.u / (frame.mu * frame.mu))
}

pub fn blowdown_outer(x_hat: f64, y_hat: f64, u_hat: f64, frame: &ScaleFrame) -> (f64, f64, f64) {
    let (sx, sy) = chart_scales(frame);
    (x_hat * sx, y_hat * sy, frame.u_of(u_hat))
}

fn chart_scales(frame: &ScaleFrame) -> (f64, f64) {
    let d34 = frame.delta.powf(0.75);
    (frame.mu * d34, frame.mu * frame.mu * d34)
}

fn check_sign(sign: i8) -> Result<f64> {
    match sign {
        1 => Ok(1.0),
        -1 => Ok(-1.0),
        _ => Err(Error::Domain(format!("branch sign must be ±1, got {sign}"))),
    }
}

/// Deviation from the branch (sκ(u), 0): x = s(κ + ξ), y = sσ, then scaled
/// like the outer chart.
pub fn blowup_inner(
    s: &ExtendedState,
    frame: &ScaleFrame,
    model: &ModelSpec,
    sign: i8,
) -> Result<(f64, f64, f64)> {
    let sg = check_sign(sign)?;
    let k = model.kappa(s.u)?;
    let (sx, sy) = chart_scales(frame);
    Ok((
        (sg * s.x - k) / sx,
        sg * s.y / sy,
        s.u / (frame.mu * frame.mu),
    ))
}

pub fn blowdown_inner(
    xi_hat: f64,
    sigma_hat: f64,
    u_hat: f64,
    frame: &ScaleFrame,
    model: &ModelSpec,
    sign: i8,
) -> Result<(f64, f64, f64)> {
    let sg = check_sign(sign)?;
    let u = frame.u_of(u_hat);
    let k = model.kappa(u)?;
    let (sx, sy) = chart_scales(frame);
    Ok((sg * (k + xi_hat * sx), sg * sigma_hat * sy, u))
}

fn polar(a: f64, b: f64) -> (f64, f64) {
    let r = 0.5 * (a * a + b * b);
    if r == 0.0 {
        return (0.0, 0.0);
    }
    (r, wrap_2pi(b.atan2(a)))
}

/// Weight w with x̂₀ = w x̂, ŷ₀ = ŷ / w.
fn outer_weight(u_hat: f64, frame: &ScaleFrame, model: &ModelSpec) -> Result<f64> {
    let fh = model.f_hat(u_hat, frame)?;
    let a = 1.0 + model.m(0.0, 0.0, frame.u_of(u_hat));
    Ok((fh / a).sqrt())
}

fn inner_weight(u_hat: f64, frame: &ScaleFrame, model: &ModelSpec) -> Result<f64> {
    let u = frame.u_of(u_hat);
    let om = model.omega_hat(u_hat, frame)?;
    let k = model.kappa(u)?;
    let a = 1.0 + model.m(k * k, 0.0, u);
    Ok((om / a).sqrt())
}

pub fn to_outer_action_angle(
    x_hat: f64,
    y_hat: f64,
    u_hat: f64,
    frame: &ScaleFrame,
    model: &ModelSpec,
) -> Result<OuterAA> {
    let w = outer_weight(u_hat, frame, model)?;
    let (z0_hat, w0) = polar(w * x_hat, y_hat / w);
    Ok(OuterAA { z0_hat, w0 })
}

pub fn from_outer_action_angle(
    aa: &OuterAA,
    u_hat: f64,
    frame: &ScaleFrame,
    model: &ModelSpec,
) -> Result<(f64, f64)> {
    let w = outer_weight(u_hat, frame, model)?;
    let r = (2.0 * aa.z0_hat).sqrt();
    Ok((r * aa.w0.cos() / w, r * aa.w0.sin() * w))
}

/// `eta` is carried through unchanged; it names the branch the chart was
/// taken about.
pub fn to_inner_action_angle(
    xi_hat: f64,
    sigma_hat: f64,
    u_hat: f64,
    eta: i8,
    frame: &ScaleFrame,
    model: &ModelSpec,
) -> Result<InnerAA> {
    check_sign(eta)?;
    let w = inner_weight(u_hat, frame, model)?;
    let (rho0_hat, phi0) = polar(w * xi_hat, sigma_hat / w);
    Ok(InnerAA {
        rho0_hat,
        phi0,
        eta,
    })
}

pub fn from_inner_action_angle(
    aa: &InnerAA,
    u_hat: f64,
    frame: &ScaleFrame,
    model: &ModelSpec,
) -> Result<(f64, f64)> {
    let w = inner_weight(u_hat, frame, model)?;
    let r = (2.0 * aa.rho0_hat).sqrt();
    Ok((r * aa.phi0.cos() / w, r * aa.phi0.sin() * w))
}

// ---------------------------------------------------------------------------
// Crossing

/// p = (e^{2πẑ₀} − 1)^{1/2} e^{iλ}.
pub fn p_of(z0_hat: f64, lambda: f64) -> Complex64 {
    Complex64::from_polar((TWO_PI * z0_hat).exp_m1().sqrt(), lambda)
}

/// ϱ̂₀ = (1/2π) ln((1 + |p|²)/(2|Im p|)).
pub fn rho0_from_p(z0_hat: f64, lambda: f64) -> f64 {
    let p = p_of(z0_hat, lambda);
    ((1.0 + p.norm_sqr()) / (2.0 * p.im.abs())).ln() / TWO_PI
}

/// ϱ̂₀ = ẑ₀/2 − (1/4π) ln(1 − e^{−2πẑ₀}) − (1/2π) ln(2|sin λ|).
pub fn rho0_closed(z0_hat: f64, lambda: f64) -> f64 {
    0.5 * z0_hat
        - (-(-TWO_PI * z0_hat).exp_m1()).ln() / (2.0 * TWO_PI)
        - (2.0 * lambda.sin().abs()).ln() / TWO_PI
}

/// Q(ϱ̂₀) = −π/4 + 7ϱ̂₀ ln 2 − arg Γ(2iϱ̂₀).
pub fn q_phase(rho0_hat: f64) -> Result<f64> {
    Ok(-PI / 4.0 + 7.0 * rho0_hat * LN_2 - specfun::arg_gamma_imag(2.0 * rho0_hat)?)
}

/// λ-independent part of the pseudo-phase: 3ẑ₀ ln 2 − π/4 − arg Γ(iẑ₀).
pub fn pseudo_phase_offset(z0_hat: f64) -> Result<f64> {
    Ok(3.0 * z0_hat * LN_2 - PI / 4.0 - specfun::arg_gamma_imag(z0_hat)?)
}

/// Branch sign for a pseudo-phase λ: +1 on (π, 2π), −1 on (0, π).
pub fn eta_of(lambda: f64) -> i8 {
    if wrap_2pi(lambda) > PI {
        1
    } else {
        -1
    }
}

/// Quantities of the connection formula at (ẑ₀, λ).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Connection {
    pub z0_hat: f64,
    pub lambda: f64,
    pub p_re: f64,
    pub p_im: f64,
    pub rho0_hat: f64,
    /// θ = Q(ϱ̂₀) − arg(1 + p²).
    pub theta: f64,
    pub eta: i8,
}

pub fn connection(z0_hat: f64, lambda: f64, adm: &Admissible) -> Result<Connection> {
    adm.check(z0_hat, lambda)?;
    let p = p_of(z0_hat, lambda);
    let one_p2 = 1.0 + p * p;
    if one_p2.norm() < 1e-12 {
        return Err(Error::SingularP { z0: z0_hat, lambda });
    }
    let rho0_hat = rho0_closed(z0_hat, lambda);
    let theta = q_phase(rho0_hat)? - one_p2.arg();
    Ok(Connection {
        z0_hat,
        lambda,
        p_re: p.re,
        p_im: p.im,
        rho0_hat,
        theta,
        eta: eta_of(lambda),
    })
}

fn ln_ratio(frame: &ScaleFrame) -> f64 {
    (frame.u_star_hat / frame.delta).ln()
}

/// (2/3)δ^{−3/2}û∗^{3/2}, the outer WKB phase accumulated up to −û∗.
fn outer_wkb(frame: &ScaleFrame) -> f64 {
    2.0 / 3.0 * (frame.u_star_hat / frame.delta).powf(1.5)
}

/// Crossing from û = −û∗ to û = +û∗ given the outer action-angle at −û∗.
pub fn crossing_map(
    aa: &OuterAA,
    frame: &ScaleFrame,
    adm: &Admissible,
) -> Result<Estimated<InnerAA>> {
    let (value, _) = crossing_with_connection(aa, frame, adm)?;
    Ok(value)
}

/// Outer angle w₀ at −û∗ whose crossing has pseudo-phase λ.
pub fn outer_phase_for(z0_hat: f64, lambda: f64, frame: &ScaleFrame) -> Result<f64> {
    let l = pseudo_phase_offset(z0_hat)? - lambda;
    Ok(wrap_2pi(
        l + outer_wkb(frame) + 1.5 * z0_hat * ln_ratio(frame) - PI / 2.0,
    ))
}

pub fn crossing_with_connection(
    aa: &OuterAA,
    frame: &ScaleFrame,
    adm: &Admissible,
) -> Result<(Estimated<InnerAA>, Connection)> {
    let z = aa.z0_hat;
    let lr = ln_ratio(frame);
    let l = aa.w0 - outer_wkb(frame) - 1.5 * z * lr + PI / 2.0;
    let lambda = pseudo_phase_offset(z)? - l;
    let c = connection(z, lambda, adm)?;
    let phi0 = -SQRT_2 * outer_wkb(frame) + 3.0 * c.rho0_hat * lr - c.theta;
    let out = InnerAA {
        rho0_hat: c.rho0_hat,
        phi0: wrap_2pi(phi0),
        eta: c.eta,
    };
    Ok((
        Estimated {
            value: out,
            error_estimate: frame.delta.powf(0.75),
        },
        c,
    ))
}

// ---------------------------------------------------------------------------
// Averaged maps

const SMALLNESS_WARN: f64 = 0.5;

/// Outer averaged map from û = +û∗ (after the previous crossing) round to
/// û = −û∗ of the next one.
pub fn outer_map(aa: &OuterAA, frame: &ScaleFrame, consts: &ModelConstants) -> Estimated<OuterAA> {
    if frame.outer_smallness > SMALLNESS_WARN {
        log::warn!(
            "delta^(3/2) ln(1/eps) = {:.3} is not small",
            frame.outer_smallness
        );
    }
    let eps = frame.eps;
    let shift = -consts.e3 / eps - ((consts.e4 / eps).ln() - 1.5 * ln_ratio(frame)) * aa.z0_hat
        + outer_wkb(frame);
    Estimated {
        value: OuterAA {
            z0_hat: aa.z0_hat,
            w0: wrap_2pi(aa.w0 + shift),
        },
        error_estimate: frame.outer_smallness,
    }
}

/// Inner averaged map from û = +û∗ along the κ-branch to û = τ/2 scale.
pub fn inner_map(aa: &InnerAA, frame: &ScaleFrame, consts: &ModelConstants) -> Estimated<InnerAA> {
    if frame.inner_smallness > SMALLNESS_WARN {
        log::warn!(
            "delta^(3/4) ln(1/eps) = {:.3} is not small",
            frame.inner_smallness
        );
    }
    let eps = frame.eps;
    let shift = -SQRT_2 * consts.e1 / eps
        + (2.0 * (consts.e2 / eps).ln() - 3.0 * ln_ratio(frame)) * aa.rho0_hat
        + SQRT_2 * outer_wkb(frame);
    Estimated {
        value: InnerAA {
            rho0_hat: aa.rho0_hat,
            phi0: wrap_2pi(aa.phi0 + shift),
            eta: aa.eta,
        },
        error_estimate: frame.inner_smallness,
    }
}

/// P_i ∘ P_cr ∘ P_o.
pub fn half_map(
    aa: &OuterAA,
    frame: &ScaleFrame,
    consts: &ModelConstants,
    adm: &Admissible,
) -> Result<Estimated<InnerAA>> {
    let o = outer_map(aa, frame, consts);
    let c = crossing_map(&o.value, frame, adm)?;
    let i = inner_map(&c.value, frame, consts);
    Ok(Estimated {
        value: i.value,
        error_estimate: o.error_estimate + c.error_estimate + i.error_estimate,
    })
}

// ---------------------------------------------------------------------------
// Model constants

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelConstants {
    /// ∫₀^{τ/2} ϑ^{1/2}.
    pub e1: f64,
    /// exp(3C₂).
    pub e2: f64,
    /// ∫₀^{π−τ/2} (−f(−u))^{1/2}.
    pub e3: f64,
    /// Coefficient in ln(e₄ε⁻¹) of the outer map, `e4_raw^{3/2}`.
    pub e4: f64,
    /// exp(C₄).
    pub e4_raw: f64,
    pub c2: f64,
    pub c4: f64,
    /// (u∗, C₂(u∗)) before extrapolation.
    pub c2_table: Vec<[f64; 2]>,
    pub c4_table: Vec<[f64; 2]>,
    /// |extrapolated − direct subtracted-kernel integral|.
    pub c2_cross_check: f64,
    pub c4_cross_check: f64,
    pub quad_tol: f64,
    pub notes: Vec<String>,
}

pub const EXTRAPOLATION_CUTOFFS: [f64; 3] = [1e-2, 1e-3, 1e-4];

/// Two-level Richardson extrapolation in u∗ for values sampled at
/// u∗ = 1e-2, 1e-3, 1e-4, removing the O(u∗) and O(u∗²) terms.
fn richardson(vals: [f64; 3]) -> f64 {
    let r0 = (10.0 * vals[1] - vals[0]) / 9.0;
    let r1 = (10.0 * vals[2] - vals[1]) / 9.0;
    (100.0 * r1 - r0) / 99.0
}

pub fn compute_constants(model: &ModelSpec, quad_tol: f64) -> Result<ModelConstants> {
    let tau = model.tau;
    let half = tau / 2.0;
    let outer_end = PI - half;
    let theta = |u: f64| model.vartheta(u).unwrap_or(f64::NAN);
    let neg_f = |u: f64| -model.f(-u);

    let e1 = numerics::integrate(
        |u| if u <= 0.0 { 0.0 } else { theta(u).sqrt() },
        0.0,
        half,
        quad_tol,
    )?;
    let e3 = numerics::integrate(|u| neg_f(u).max(0.0).sqrt(), 0.0, outer_end, quad_tol)?;

    let mut c2_table = Vec::new();
    let mut c4_table = Vec::new();
    let mut c2v = [0.0; 3];
    let mut c4v = [0.0; 3];
    for (i, &us) in EXTRAPOLATION_CUTOFFS.iter().enumerate() {
        let a = 0.5 * integrate_split(|u| 1.0 / theta(u), us, half, quad_tol)? + 0.5 * us.ln();
        let b = integrate_split(|u| 1.0 / neg_f(u), us, outer_end, quad_tol)? + us.ln();
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::Domain(format!("non-finite log-integral at u*={us}")));
        }
        c2v[i] = a;
        c4v[i] = b;
        c2_table.push([us, a]);
        c4_table.push([us, b]);
    }
    let c2 = richardson(c2v);
    let c4 = richardson(c4v);

    // Subtracted-kernel route: C = ∫₀^L (k(u) − 1/u) du + ln L.
    let c2_direct =
        0.5 * numerics::integrate(
            |u| {
                if u <= 0.0 {
                    0.0
                } else {
                    1.0 / theta(u) - 1.0 / u
                }
            },
            0.0,
            half,
            quad_tol,
        )? + 0.5 * half.ln();
    let c4_direct = numerics::integrate(
        |u| {
            if u <= 0.0 {
                0.0
            } else {
                1.0 / neg_f(u) - 1.0 / u
            }
        },
        0.0,
        outer_end,
        quad_tol,
    )? + outer_end.ln();

    let e4_raw = c4.exp();
    let mut notes = vec![
        format!("e1, e3: adaptive Gauss-Kronrod, tol {quad_tol:.1e}"),
        "e2 = exp(3 C2), C2 = lim [1/2 int_{u*}^{tau/2} 1/vartheta + 1/2 ln u*]".into(),
        "e4 = exp(C4)^(3/2), C4 = lim [int_{u*}^{pi-tau/2} 1/(-f(-u)) + ln u*]".into(),
    ];
    let c2_cross_check = (c2 - c2_direct).abs();
    let c4_cross_check = (c4 - c4_direct).abs();
    if c2_cross_check > 1e-6 || c4_cross_check > 1e-6 {
        notes.push(format!("extrapolation disagrees with the subtracted-kernel route: {c2_cross_check:.2e}, {c4_cross_check:.2e}"));
    }
    Ok(ModelConstants {
        e1,
        e2: (3.0 * c2).exp(),
        e3,
        e4: e4_raw.powf(1.5),
        e4_raw,
        c2,
        c4,
        c2_table,
        c4_table,
        c2_cross_check,
        c4_cross_check,
        quad_tol,
        notes,
    })
}

/// Integrates a 1/u-type kernel on [a, b] after splitting at a geometric
/// sequence so each piece is smooth on its own scale.
fn integrate_split<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    let mut total = 0.0;
    let mut lo = a;
    while lo < b {
        let hi = (lo * 4.0).min(b);
        total += numerics::integrate(&f, lo, hi, tol)?;
        lo = hi;
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// δ schedule

pub const DEFAULT_DELTA_EXPONENT: f64 = 0.15;
/// δ = ε^a keeps ε^{2/3}δ^{−7/2} → 0 only for a < 4/21.
pub const MAX_DELTA_EXPONENT: f64 = 4.0 / 21.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DeltaChoice {
    pub delta: f64,
    pub exponent: f64,
    pub clamped: bool,
    /// ε^{2/3}δ^{−7/2}.
    pub power_condition: f64,
    pub inner_smallness: f64,
    pub outer_smallness: f64,
}

pub fn delta_schedule(eps: f64, exponent: f64) -> Result<DeltaChoice> {
    if !(eps > 0.0 && eps < 1.0) || !(exponent > 0.0) {
        return Err(Error::Domain(format!(
            "delta schedule needs 0<eps<1 and a>0 (got {eps}, {exponent})"
        )));
    }
    let clamped = exponent >= MAX_DELTA_EXPONENT;
    let a = if clamped {
        0.95 * MAX_DELTA_EXPONENT
    } else {
        exponent
    };
    if clamped {
        log::warn!("delta exponent {exponent} clamped to {a}");
    }
    let delta = eps.powf(a);
    let ln_e = (1.0 / eps).ln();
    let choice = DeltaChoice {
        delta,
        exponent: a,
        clamped,
        power_condition: eps.powf(2.0 / 3.0) * delta.powf(-3.5),
        inner_smallness: delta.powf(0.75) * ln_e,
        outer_smallness: delta.powf(1.5) * ln_e,
    };
    if choice.inner_smallness > SMALLNESS_WARN {
        log::warn!(
            "delta^(3/4) ln(1/eps) = {:.3} at eps={eps}",
            choice.inner_smallness
        );
    }
    Ok(choice)
}
