//! The Hamiltonian model family, its vector field, symmetries, slow manifold
//! and frequency functions.
//!
//! `M` and `V` are represented as polynomials in `X = x²`, `Y = y²` whose
//! coefficients are periodic functions of `u`:
//!
//! ```text
//! M(X, Y, u) = Σ m_jk(u) XʲYᵏ,     V(X, u) = Σ v_j(u) Xʲ.
//! ```
//!
//! This covers every model whose corrections are polynomial in the fast
//! variables and keeps all partial derivatives exact.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 2π-periodic scalar function of the slow phase.
#[derive(Clone, Debug, PartialEq)]
pub enum Profile {
    /// `a0 + Σ_k (cos[k−1] cos(ku) + sin[k−1] sin(ku))`.
    Fourier {
        a0: f64,
        cos: Vec<f64>,
        sin: Vec<f64>,
    },
    Spline(PeriodicSpline),
}

impl Profile {
    pub fn constant(c: f64) -> Self {
        Profile::Fourier {
            a0: c,
            cos: vec![],
            sin: vec![],
        }
    }

    pub fn sin() -> Self {
        Profile::Fourier {
            a0: 0.0,
            cos: vec![],
            sin: vec![1.0],
        }
    }

    /// Value, first and second derivative.
    pub fn eval3(&self, u: f64) -> (f64, f64, f64) {
        match self {
            Profile::Fourier { a0, cos, sin } => {
                let n = cos.len().max(sin.len());
                let (mut v, mut d1, mut d2) = (*a0, 0.0, 0.0);
                for k in 1..=n {
                    let a = cos.get(k - 1).copied().unwrap_or(0.0);
                    let b = sin.get(k - 1).copied().unwrap_or(0.0);
                    let kf = k as f64;
                    let (s, c) = (kf * u).sin_cos();
                    v += a * c + b * s;
                    d1 += kf * (b * c - a * s);
                    d2 -= kf * kf * (a * c + b * s);
                }
                (v, d1, d2)
            }
            Profile::Spline(sp) => sp.eval3(u),
        }
    }

    pub fn value(&self, u: f64) -> f64 {
        match self {
            Profile::Fourier { a0, cos, sin } if cos.is_empty() && sin.len() == 1 => {
                a0 + sin[0] * u.sin()
            }
            _ => self.eval3(u).0,
        }
    }

    pub fn deriv(&self, u: f64) -> f64 {
        self.value_deriv(u).1
    }

    pub fn value_deriv(&self, u: f64) -> (f64, f64) {
        match self {
            Profile::Fourier { a0, cos, sin } if cos.is_empty() && sin.len() == 1 => {
                let (s, c) = u.sin_cos();
                (a0 + sin[0] * s, sin[0] * c)
            }
            _ => {
                let (v, d, _) = self.eval3(u);
                (v, d)
            }
        }
    }
}

/// Periodic cubic spline on a uniform grid over [0, 2π).
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicSpline {
    values: Vec<f64>,
    second: Vec<f64>,
    step: f64,
}

impl PeriodicSpline {
    /// `values[i]` is the sample at `u = 2πi/n`.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        if n < 4 {
            return Err(Error::Config(
                "periodic spline needs at least 4 samples".into(),
            ));
        }
        let step = TAU / n as f64;
        let rhs: Vec<f64> = (0..n)
            .map(|i| {
                6.0 * (values[(i + 1) % n] - 2.0 * values[i] + values[(i + n - 1) % n])
                    / (step * step)
            })
            .collect();
        // Cyclic system m[i-1] + 4m[i] + m[i+1] = rhs[i]; strictly diagonally
        // dominant, so Gauss–Seidel contracts by at least 1/2 per sweep.
        let mut second = vec![0.0; n];
        for _ in 0..200 {
            let mut change: f64 = 0.0;
            for i in 0..n {
                let new = (rhs[i] - second[(i + n - 1) % n] - second[(i + 1) % n]) / 4.0;
                change = change.max((new - second[i]).abs());
                second[i] = new;
            }
            let scale = second.iter().fold(1.0_f64, |a, b| a.max(b.abs()));
            if change <= 1e-15 * scale {
                break;
            }
        }
        Ok(Self {
            values,
            second,
            step,
        })
    }

    pub fn eval3(&self, u: f64) -> (f64, f64, f64) {
        let n = self.values.len();
        let s = u.rem_euclid(TAU) / self.step;
        let i = (s.floor() as usize).min(n - 1);
        let t = s - i as f64;
        let j = (i + 1) % n;
        let h = self.step;
        let (y0, y1, m0, m1) = (
            self.values[i],
            self.values[j],
            self.second[i],
            self.second[j],
        );
        let a = 1.0 - t;
        let v = a * y0 + t * y1 + h * h / 6.0 * ((a * a * a - a) * m0 + (t * t * t - t) * m1);
        let d1 = (y1 - y0) / h + h / 6.0 * (-(3.0 * a * a - 1.0) * m0 + (3.0 * t * t - 1.0) * m1);
        let d2 = a * m0 + t * m1;
        (v, d1, d2)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KineticTerm {
    pub x2_pow: u32,
    pub y2_pow: u32,
    pub coeff: Profile,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PotentialTerm {
    pub x2_pow: u32,
    pub coeff: Profile,
}

/// The Hamiltonian `H = v + ½y²(1+M) − ½f(u)x² + ½x⁴(1+V)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub name: String,
    pub f: Profile,
    pub kinetic: Vec<KineticTerm>,
    pub potential: Vec<PotentialTerm>,
    pub tau: f64,
}

/// Phase point on the extended phase space.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtendedState {
    pub x: f64,
    pub y: f64,
    pub u: f64,
    pub v: f64,
}

impl ExtendedState {
    pub fn new(x: f64, y: f64, u: f64, v: f64) -> Self {
        Self { x, y, u, v }
    }

    /// Copy with `u` reduced to [0, 2π).
    pub fn reduced(&self) -> Self {
        Self {
            u: self.u.rem_euclid(TAU),
            ..*self
        }
    }
}

/// Partial derivatives of `H − v` in the variables `X = x²`, `Y = y²`, `u`.
#[derive(Clone, Copy, Debug, Default)]
pub struct HPartials {
    pub h: f64,
    pub h_x: f64,
    pub h_y: f64,
    pub h_xx: f64,
    pub h_xy: f64,
    pub h_yy: f64,
    pub h_u: f64,
}

/// M and V with their partials at one point.
#[derive(Clone, Copy, Debug, Default)]
struct Corrections {
    m: f64,
    m_x: f64,
    m_y: f64,
    m_xx: f64,
    m_xy: f64,
    m_yy: f64,
    m_u: f64,
    v: f64,
    v_x: f64,
    v_xx: f64,
    v_u: f64,
}

fn pow_terms(base: f64, p: u32) -> (f64, f64, f64) {
    // (b^p, p b^{p-1}, p(p-1) b^{p-2}) without negative powers.
    let pf = p as f64;
    let v = base.powi(p as i32);
    let d1 = if p >= 1 {
        pf * base.powi(p as i32 - 1)
    } else {
        0.0
    };
    let d2 = if p >= 2 {
        pf * (pf - 1.0) * base.powi(p as i32 - 2)
    } else {
        0.0
    };
    (v, d1, d2)
}

/// Per-assumption outcome of [`ModelSpec::validate_assumptions`].
#[derive(Clone, Debug, Serialize)]
pub struct AssumptionCheck {
    pub name: &'static str,
    pub passed: bool,
    /// Grid point with the worst value of the tested quantity.
    pub worst_u: f64,
    pub worst_value: f64,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub model: String,
    pub grid_size: usize,
    pub checks: Vec<AssumptionCheck>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn passed(&self, name: &str) -> bool {
        self.checks.iter().any(|c| c.name == name && c.passed)
    }
}

/// Taylor coefficient functions at the two base points `(X,Y) = (0,0)` and
/// `(κ², 0)`. Products with `u` are stored as such (`u_m00 = uM₀₀(u)`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TaylorCoefficients {
    pub u_m00: f64,
    pub m10: f64,
    pub m01: f64,
    pub u_v0: f64,
    pub u_m_kappa00: f64,
    pub m_kappa10: f64,
    pub m_kappa01: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Symmetry {
    /// 𝓡: (x, y, u) ↦ (−x, −y, u).
    Reflection,
    /// 𝓣_τ: (x, y, u)(t) ↦ (x, −y, τ − u)(−t).
    TimeReversal,
}

impl ModelSpec {
    /// `f = sin u`, `M = V = 0`, `τ = π`.
    pub fn toy() -> Self {
        Self {
            name: "toy".into(),
            f: Profile::sin(),
            kinetic: vec![],
            potential: vec![],
            tau: PI,
        }
    }

    /// A model with the given profile and no corrections.
    pub fn with_profile(name: &str, f: Profile, tau: f64) -> Self {
        Self {
            name: name.into(),
            f,
            kinetic: vec![],
            potential: vec![],
            tau,
        }
    }

    fn corrections(&self, big_x: f64, big_y: f64, u: f64) -> Corrections {
        let mut c = Corrections::default();
        for t in &self.kinetic {
            let (a, da) = t.coeff.value_deriv(u);
            let (px, dpx, d2px) = pow_terms(big_x, t.x2_pow);
            let (py, dpy, d2py) = pow_terms(big_y, t.y2_pow);
            c.m += a * px * py;
            c.m_x += a * dpx * py;
            c.m_y += a * px * dpy;
            c.m_xx += a * d2px * py;
            c.m_xy += a * dpx * dpy;
            c.m_yy += a * px * d2py;
            c.m_u += da * px * py;
        }
        for t in &self.potential {
            let (a, da) = t.coeff.value_deriv(u);
            let (px, dpx, d2px) = pow_terms(big_x, t.x2_pow);
            c.v += a * px;
            c.v_x += a * dpx;
            c.v_xx += a * d2px;
            c.v_u += da * px;
        }
        c
    }

    /// Partials of `H − v` with respect to `X = x²`, `Y = y²` and `u`.
    pub fn h_partials(&self, big_x: f64, big_y: f64, u: f64) -> HPartials {
        let (f, fp) = self.f.value_deriv(u);
        let c = self.corrections(big_x, big_y, u);
        let x2 = big_x * big_x;
        HPartials {
            h: 0.5 * big_y * (1.0 + c.m) - 0.5 * f * big_x + 0.5 * x2 * (1.0 + c.v),
            h_x: 0.5 * big_y * c.m_x - 0.5 * f + big_x * (1.0 + c.v) + 0.5 * x2 * c.v_x,
            h_y: 0.5 * (1.0 + c.m) + 0.5 * big_y * c.m_y,
            h_xx: 0.5 * big_y * c.m_xx + (1.0 + c.v) + 2.0 * big_x * c.v_x + 0.5 * x2 * c.v_xx,
            h_xy: 0.5 * c.m_x + 0.5 * big_y * c.m_xy,
            h_yy: c.m_y + 0.5 * big_y * c.m_yy,
            h_u: 0.5 * big_y * c.m_u - 0.5 * fp * big_x + 0.5 * x2 * c.v_u,
        }
    }

    pub fn f(&self, u: f64) -> f64 {
        self.f.value(u)
    }

    /// M(x², y², u).
    pub fn m(&self, x2: f64, y2: f64, u: f64) -> f64 {
        self.corrections(x2, y2, u).m
    }

    /// V(x², u).
    pub fn v(&self, x2: f64, u: f64) -> f64 {
        self.corrections(x2, 0.0, u).v
    }

    pub fn eval_hamiltonian(&self, s: &ExtendedState) -> f64 {
        s.v + self.h_partials(s.x * s.x, s.y * s.y, s.u).h
    }

    /// Planar part (ẋ, ẏ) at fixed u.
    pub fn planar_field(&self, x: f64, y: f64, u: f64) -> [f64; 2] {
        let p = self.h_partials(x * x, y * y, u);
        [2.0 * y * p.h_y, -2.0 * x * p.h_x]
    }

    /// Planar field together with its Jacobian in (x, y).
    pub fn planar_field_jac(&self, x: f64, y: f64, u: f64) -> ([f64; 2], [[f64; 2]; 2]) {
        let (bx, by) = (x * x, y * y);
        let p = self.h_partials(bx, by, u);
        let xy4 = 4.0 * x * y * p.h_xy;
        (
            [2.0 * y * p.h_y, -2.0 * x * p.h_x],
            [
                [xy4, 2.0 * p.h_y + 4.0 * by * p.h_yy],
                [-2.0 * p.h_x - 4.0 * bx * p.h_xx, -xy4],
            ],
        )
    }

    /// (ẋ, ẏ, u̇, v̇) = (2y∂_{y²}H, −2x∂_{x²}H, ε, −ε∂_uH).
    pub fn vector_field(&self, s: &ExtendedState, eps: f64) -> ExtendedState {
        let p = self.h_partials(s.x * s.x, s.y * s.y, s.u);
        ExtendedState {
            x: 2.0 * s.y * p.h_y,
            y: -2.0 * s.x * p.h_x,
            u: eps,
            v: -eps * p.h_u,
        }
    }

    /// Positive root κ(u) of ∂_{x²}H(κ², 0, u) = 0 for u ∈ (0, τ).
    pub fn kappa(&self, u: f64) -> Result<f64> {
        let fu = self.f(u);
        if !(u > 0.0 && u < self.tau) || fu <= 0.0 {
            return Err(Error::NoRoot(format!("u={u} outside (0, tau) or f(u)<=0")));
        }
        let resid = |x: f64| self.h_partials(x * x, 0.0, u).h_x;
        let seed = (fu / 2.0).sqrt();
        let mut x = seed;
        for _ in 0..50 {
            let p = self.h_partials(x * x, 0.0, u);
            if p.h_x.abs() < 1e-14 {
                break;
            }
            // d/dx h_x(x²) = 2x h_xx
            let dx = p.h_x / (2.0 * x * p.h_xx);
            if !dx.is_finite() {
                break;
            }
            x -= dx;
            if dx.abs() < 1e-16 * x.abs() {
                break;
            }
        }
        if x > 0.0 && x.is_finite() && resid(x).abs() < 1e-12 {
            return Ok(x);
        }
        let (mut a, mut b) = (0.1 * seed, 3.0 * seed);
        let (ra, rb) = (resid(a), resid(b));
        if ra.signum() == rb.signum() {
            return Err(Error::NoRoot(format!("kappa: no sign change at u={u}")));
        }
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if resid(m).signum() == ra.signum() {
                a = m;
            } else {
                b = m;
            }
            if b - a < 1e-16 * b {
                break;
            }
        }
        let x = 0.5 * (a + b);
        if resid(x).abs() < 1e-12 {
            Ok(x)
        } else {
            Err(Error::NoRoot(format!(
                "kappa: residual {} at u={u}",
                resid(x)
            )))
        }
    }

    /// ϑ(u) = 2κ²∂²_{x²}H(κ², 0, u)(1 + uM⁰⁰(u)), the squared linear
    /// frequency about the κ-branch divided by two.
    pub fn vartheta(&self, u: f64) -> Result<f64> {
        let k = self.kappa(u)?;
        let k2 = k * k;
        let p = self.h_partials(k2, 0.0, u);
        let val = 2.0 * k2 * p.h_xx * (1.0 + self.m(k2, 0.0, u));
        if val <= 0.0 {
            return Err(Error::Domain(format!("vartheta({u}) = {val} <= 0")));
        }
        Ok(val)
    }

    /// Taylor coefficient functions, exact from the polynomial representation.
    pub fn taylor(&self, u: f64) -> Result<TaylorCoefficients> {
        let c0 = self.corrections(0.0, 0.0, u);
        let ck = match self.kappa(u) {
            Ok(k) => self.corrections(k * k, 0.0, u),
            Err(_) => c0,
        };
        Ok(TaylorCoefficients {
            u_m00: c0.m,
            m10: c0.m_x,
            m01: c0.m_y,
            u_v0: c0.v,
            u_m_kappa00: ck.m,
            m_kappa10: ck.m_x,
            m_kappa01: ck.m_y,
        })
    }

    /// Taylor coefficients by central differences of `M` and `V` with step `h`.
    pub fn taylor_fd(&self, u: f64, h: f64) -> TaylorCoefficients {
        let k2 = self.kappa(u).map(|k| k * k).unwrap_or(0.0);
        let m = |a: f64, b: f64| self.m(a, b, u);
        // one-sided at X = 0 or Y = 0 would be needed for non-analytic M; the
        // polynomial form extends smoothly to negative arguments
        TaylorCoefficients {
            u_m00: m(0.0, 0.0),
            m10: (m(h, 0.0) - m(-h, 0.0)) / (2.0 * h),
            m01: (m(0.0, h) - m(0.0, -h)) / (2.0 * h),
            u_v0: self.v(0.0, u),
            u_m_kappa00: m(k2, 0.0),
            m_kappa10: (m(k2 + h, 0.0) - m(k2 - h, 0.0)) / (2.0 * h),
            m_kappa01: (m(k2, h) - m(k2, -h)) / (2.0 * h),
        }
    }

    /// Distance from the singular closed orbit: ||x| − x_s(u)| + |y|.
    pub fn singular_distance(&self, s: &ExtendedState) -> f64 {
        let u = s.u.rem_euclid(TAU);
        let xs = if u > 0.0 && u < self.tau {
            self.kappa(u).unwrap_or(0.0)
        } else {
            0.0
        };
        (s.x.abs() - xs).abs() + s.y.abs()
    }

    pub fn apply_symmetry(&self, which: Symmetry, s: &ExtendedState) -> ExtendedState {
        match which {
            Symmetry::Reflection => ExtendedState {
                x: -s.x,
                y: -s.y,
                ..*s
            },
            Symmetry::TimeReversal => ExtendedState {
                y: -s.y,
                u: self.tau - s.u,
                ..*s
            },
        }
    }

    /// Image of a sampled trajectory; time reversal re-indexes t ↦ −t and
    /// reverses the sample order so time stays increasing.
    pub fn apply_symmetry_trajectory(
        &self,
        which: Symmetry,
        samples: &[(f64, ExtendedState)],
    ) -> Vec<(f64, ExtendedState)> {
        match which {
            Symmetry::Reflection => samples
                .iter()
                .map(|(t, s)| (*t, self.apply_symmetry(which, s)))
                .collect(),
            Symmetry::TimeReversal => samples
                .iter()
                .rev()
                .map(|(t, s)| (-t, self.apply_symmetry(which, s)))
                .collect(),
        }
    }

    /// Numerical check of the standing assumptions on f, M and V.
    pub fn validate_assumptions(&self, grid_size: usize) -> ValidationReport {
        let n = grid_size.max(16);
        let tau = self.tau;
        let mut checks = Vec::new();

        let (f0, fp0, _) = self.f.eval3(0.0);
        let ftau = self.f(tau);
        let a1 = [(0.0, f0.abs()), (tau, ftau.abs()), (0.0, (fp0 - 1.0).abs())];
        let worst = a1
            .iter()
            .cloned()
            .fold((0.0, -1.0), |a, b| if b.1 > a.1 { b } else { a });
        let m000 = self.m(0.0, 0.0, 0.0).abs();
        let v00 = self.v(0.0, 0.0).abs();
        checks.push(AssumptionCheck {
            name: "zeros",
            passed: worst.1 < 1e-8 && m000 < 1e-8 && v00 < 1e-8,
            worst_u: worst.0,
            worst_value: worst.1.max(m000).max(v00),
            detail: format!("f(0)={f0:.3e}, f(tau)={ftau:.3e}, f'(0)={fp0:.6}, M(0,0,0)={m000:.1e}, V(0,0)={v00:.1e}"),
        });

        // sign conditions on open intervals, sampled away from the zeros
        let mut worst = (0.0, f64::INFINITY);
        for i in 1..n {
            let u = tau * i as f64 / n as f64;
            let val = self.f(u);
            if val < worst.1 {
                worst = (u, val);
            }
            let u2 = tau + (TAU - tau) * i as f64 / n as f64;
            let val2 = -self.f(u2);
            if val2 < worst.1 {
                worst = (u2, val2);
            }
        }
        checks.push(AssumptionCheck {
            name: "sign",
            passed: worst.1 > 0.0,
            worst_u: worst.0,
            worst_value: worst.1,
            detail: "min of f on (0,tau) and -f on (tau,2pi)".into(),
        });

        let box_pts: Vec<(f64, f64)> = [
            (0.0, 0.0),
            (0.5, 0.0),
            (0.0, 0.5),
            (1.0, 1.0),
            (3.0, 0.5),
            (0.5, 3.0),
        ]
        .to_vec();
        let mut worst = (0.0, 0.0);
        for i in 0..=n {
            let u = TAU * i as f64 / n as f64;
            let mut d = (self.f(u) - self.f(tau - u)).abs();
            for &(a, b) in &box_pts {
                d = d.max((self.m(a, b, u) - self.m(a, b, tau - u)).abs());
                d = d.max((self.v(a, u) - self.v(a, tau - u)).abs());
            }
            if d > worst.1 {
                worst = (u, d);
            }
        }
        checks.push(AssumptionCheck {
            name: "reflection",
            passed: worst.1 < 1e-8,
            worst_u: worst.0,
            worst_value: worst.1,
            detail: "max asymmetry about tau/2 of f, M, V".into(),
        });

        // 1 + M > 0 on x² + y² ≤ 4
        let mut worst = (0.0, f64::INFINITY);
        let k = 12;
        for i in 0..=n {
            let u = TAU * i as f64 / n as f64;
            for a in 0..=k {
                for b in 0..=k {
                    let (x2, y2) = (4.0 * a as f64 / k as f64, 4.0 * b as f64 / k as f64);
                    if x2 + y2 > 4.0 {
                        continue;
                    }
                    let val = 1.0 + self.m(x2, y2, u);
                    if val < worst.1 {
                        worst = (u, val);
                    }
                }
            }
        }
        checks.push(AssumptionCheck {
            name: "kinetic-positive",
            passed: worst.1 > 0.0,
            worst_u: worst.0,
            worst_value: worst.1,
            detail: "min of 1+M on the working box".into(),
        });

        let mut worst = (0.0, f64::INFINITY);
        let mut failure = None;
        for i in 1..n {
            let u = tau * i as f64 / n as f64;
            match self.kappa(u) {
                Ok(kap) => {
                    let val = self.h_partials(kap * kap, 0.0, u).h_xx;
                    if val < worst.1 {
                        worst = (u, val);
                    }
                }
                Err(e) => {
                    failure.get_or_insert((u, e.to_string()));
                }
            }
        }
        let (passed, detail) = match failure {
            Some((u, msg)) => {
                worst = (u, f64::NAN);
                (false, msg)
            }
            None => (worst.1 > 0.0, "min of d²H/d(x²)² at kappa".into()),
        };
        checks.push(AssumptionCheck {
            name: "branch-convex",
            passed,
            worst_u: worst.0,
            worst_value: worst.1,
            detail,
        });

        ValidationReport {
            model: self.name.clone(),
            grid_size: n,
            checks,
        }
    }
}

// ---------------------------------------------------------------------------
// Model files

/// A profile as written in a model file: a constant, uniform samples on
/// [0, 2π) (periodic cubic spline) or Fourier coefficients.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum ProfileFile {
    Constant(f64),
    Samples {
        values: Vec<f64>,
    },
    Fourier {
        #[serde(default)]
        a0: f64,
        #[serde(default)]
        cos: Vec<f64>,
        #[serde(default)]
        sin: Vec<f64>,
    },
}

impl ProfileFile {
    fn build(self) -> Result<Profile> {
        Ok(match self {
            ProfileFile::Constant(c) => Profile::constant(c),
            ProfileFile::Samples { values } => Profile::Spline(PeriodicSpline::new(values)?),
            ProfileFile::Fourier { a0, cos, sin } => Profile::Fourier { a0, cos, sin },
        })
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KineticTermFile {
    pub x2_pow: u32,
    #[serde(default)]
    pub y2_pow: u32,
    pub coeff: ProfileFile,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialTermFile {
    pub x2_pow: u32,
    pub coeff: ProfileFile,
}

/// Model definition file: either `builtin = "toy"` or a profile `f` with
/// optional kinetic (M) and potential (V) terms and the symmetry phase τ.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub builtin: Option<String>,
    pub name: Option<String>,
    pub tau: Option<f64>,
    pub f: Option<ProfileFile>,
    #[serde(default)]
    pub kinetic: Vec<KineticTermFile>,
    #[serde(default)]
    pub potential: Vec<PotentialTermFile>,
}

impl ModelSpec {
    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "toy" => Ok(Self::toy()),
            other => Err(Error::Config(format!("unknown builtin model '{other}'"))),
        }
    }

    pub fn from_file_spec(file: ModelFile) -> Result<Self> {
        if let Some(b) = &file.builtin {
            if file.f.is_some() || !file.kinetic.is_empty() || !file.potential.is_empty() {
                return Err(Error::Config(
                    "builtin models take no profile tables".into(),
                ));
            }
            return Self::builtin(b);
        }
        let f = file
            .f
            .ok_or_else(|| Error::Config("model file needs either `builtin` or `f`".into()))?
            .build()?;
        let tau = file
            .tau
            .ok_or_else(|| Error::Config("model file needs `tau`".into()))?;
        let mut m = Self::with_profile(file.name.as_deref().unwrap_or("custom"), f, tau);
        for t in file.kinetic {
            m.kinetic.push(KineticTerm {
                x2_pow: t.x2_pow,
                y2_pow: t.y2_pow,
                coeff: t.coeff.build()?,
            });
        }
        for t in file.potential {
            m.potential.push(PotentialTerm {
                x2_pow: t.x2_pow,
                coeff: t.coeff.build()?,
            });
        }
        Ok(m)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ModelFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("model file: {e}")))?;
        Self::from_file_spec(file)
    }
}

/// Asymptotic bookkeeping shared by the blowup and averaged maps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScaleFrame {
    pub eps: f64,
    pub delta: f64,
    /// μ = ε^{1/3}δ^{−1/2}.
    pub mu: f64,
    pub u_star_hat: f64,
    /// ε^{2/3}δ^{−7/2}ln³δ⁻¹.
    pub delta_condition: f64,
    /// δ^{3/4} ln ε⁻¹.
    pub inner_smallness: f64,
    /// δ^{3/2} ln ε⁻¹.
    pub outer_smallness: f64,
}

impl ScaleFrame {
    pub const DEFAULT_WARN_THRESHOLD: f64 = 1.0;

    pub fn new(eps: f64, delta: f64, u_star_hat: f64) -> Result<Self> {
        Self::with_threshold(eps, delta, u_star_hat, Self::DEFAULT_WARN_THRESHOLD)
    }

    pub fn with_threshold(eps: f64, delta: f64, u_star_hat: f64, warn_above: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) || !(delta > 0.0 && delta < 1.0) || u_star_hat <= 0.0 {
            return Err(Error::Domain(format!(
                "frame needs 0<eps<1, 0<delta<1, u_star_hat>0 (got {eps}, {delta}, {u_star_hat})"
            )));
        }
        let mu = eps.cbrt() / delta.sqrt();
        let ln_d = (1.0 / delta).ln();
        let ln_e = (1.0 / eps).ln();
        let delta_condition = eps.powf(2.0 / 3.0) * delta.powf(-3.5) * ln_d.powi(3);
        if delta_condition > warn_above {
            log::warn!("delta condition eps^(2/3) delta^(-7/2) ln^3(1/delta) = {delta_condition:.3} exceeds {warn_above}");
        }
        Ok(Self {
            eps,
            delta,
            mu,
            u_star_hat,
            delta_condition,
            inner_smallness: delta.powf(0.75) * ln_e,
            outer_smallness: delta.powf(1.5) * ln_e,
        })
    }

    /// u∗ = μ²û∗.
    pub fn u_star(&self) -> f64 {
        self.mu * self.mu * self.u_star_hat
    }

    pub fn u_of(&self, u_hat: f64) -> f64 {
        self.mu * self.mu * u_hat
    }
}

/// Scaled frequencies at û: F̂ (outer, needs f(u) < 0), Ω̂ (inner, needs
/// u ∈ (0, τ)) and ϑ(u).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frequencies {
    pub f_hat: Option<f64>,
    pub omega_hat: Option<f64>,
    pub vartheta: Option<f64>,
}

impl ModelSpec {
    /// F̂(û) = (−μ⁻²f(μ²û)(1 + uM₀₀(u)))^{1/2}.
    pub fn f_hat(&self, u_hat: f64, frame: &ScaleFrame) -> Result<f64> {
        let u = frame.u_of(u_hat);
        let sq = -self.f(u) * (1.0 + self.m(0.0, 0.0, u)) / (frame.mu * frame.mu);
        if sq <= 0.0 {
            return Err(Error::Domain(format!(
                "F_hat^2 = {sq} <= 0 at u_hat={u_hat}"
            )));
        }
        Ok(sq.sqrt())
    }

    /// Ω̂(û) = (2μ⁻²ϑ(u))^{1/2}.
    pub fn omega_hat(&self, u_hat: f64, frame: &ScaleFrame) -> Result<f64> {
        let u = frame.u_of(u_hat);
        let th = self.vartheta(u)?;
        Ok((2.0 * th).sqrt() / frame.mu)
    }

    pub fn frequencies(&self, u_hat: f64, frame: &ScaleFrame) -> Frequencies {
        let u = frame.u_of(u_hat);
        Frequencies {
            f_hat: self.f_hat(u_hat, frame).ok(),
            omega_hat: self.omega_hat(u_hat, frame).ok(),
            vartheta: self.vartheta(u).ok(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shifted_cos_model(tau: f64) -> ModelSpec {
        // f(u) = (cos(u − τ/2) − cos(τ/2)) / sin(τ/2)
        let c = (tau / 2.0).cos();
        let s = (tau / 2.0).sin();
        let f = Profile::Fourier {
            a0: -c / s,
            cos: vec![c / s],
            sin: vec![1.0],
        };
        ModelSpec::with_profile("shifted", f, tau)
    }

    #[test]
    fn hamiltonian_examples() {
        let m = ModelSpec::toy();
        assert_eq!(
            m.eval_hamiltonian(&ExtendedState::new(0.0, 0.0, 1.3, 0.0)),
            0.0
        );
        let h = m.eval_hamiltonian(&ExtendedState::new(1.0, 0.0, PI / 2.0, 0.0));
        assert!(h.abs() < 1e-15);
        assert_eq!(
            m.eval_hamiltonian(&ExtendedState::new(0.0, 1.0, 0.0, 2.0)),
            2.5
        );
    }

    #[test]
    fn vector_field_examples() {
        let m = ModelSpec::toy();
        let d = m.vector_field(&ExtendedState::new(1.0, 0.0, PI / 2.0, 0.0), 0.1);
        assert!(d.x.abs() < 1e-15 && (d.y + 1.0).abs() < 1e-15 && d.u == 0.1);
        let d = m.vector_field(&ExtendedState::new(0.0, 0.0, 2.0, 0.0), 0.3);
        assert_eq!((d.x, d.y, d.u), (0.0, 0.0, 0.3));
        let u = PI / 3.0;
        let k = m.kappa(u).unwrap();
        let d = m.vector_field(&ExtendedState::new(k, 0.0, u, 0.0), 0.1);
        assert!(d.y.abs() < 1e-14);
    }

    #[test]
    fn jacobian_matches_differences() {
        let mut m = shifted_cos_model(2.5);
        m.kinetic.push(KineticTerm {
            x2_pow: 1,
            y2_pow: 1,
            coeff: Profile::constant(0.2),
        });
        m.potential.push(PotentialTerm {
            x2_pow: 1,
            coeff: Profile::constant(0.1),
        });
        let (x, y, u) = (0.4, -0.3, 0.9);
        let (_, j) = m.planar_field_jac(x, y, u);
        let h = 1e-6;
        for c in 0..2 {
            let (mut p, mut q) = ([x, y], [x, y]);
            p[c] += h;
            q[c] -= h;
            let fp = m.planar_field(p[0], p[1], u);
            let fq = m.planar_field(q[0], q[1], u);
            for r in 0..2 {
                let fd = (fp[r] - fq[r]) / (2.0 * h);
                assert!(
                    (fd - j[r][c]).abs() < 1e-8,
                    "entry {r}{c}: {fd} vs {}",
                    j[r][c]
                );
            }
        }
        // ∂_u H against a difference of H
        let s = ExtendedState::new(x, y, u, 0.0);
        let hp = m.h_partials(x * x, y * y, u);
        let du = 1e-6;
        let fd = (m.eval_hamiltonian(&ExtendedState { u: u + du, ..s })
            - m.eval_hamiltonian(&ExtendedState { u: u - du, ..s }))
            / (2.0 * du);
        assert!((fd - hp.h_u).abs() < 1e-8);
    }

    #[test]
    fn kappa_examples() {
        let m = ModelSpec::toy();
        assert!((m.kappa(PI / 2.0).unwrap() - 0.5_f64.sqrt()).abs() < 1e-14);
        assert!((m.kappa(PI / 6.0).unwrap() - 0.5).abs() < 1e-14);
        let u = 1e-6;
        assert!((m.kappa(u).unwrap() / (u / 2.0).sqrt() - 1.0).abs() < 1e-6);
        assert!(m.kappa(-0.1).is_err());
        assert!(m.kappa(4.0).is_err());
    }

    #[test]
    fn kappa_with_potential_correction() {
        let mut m = ModelSpec::toy();
        m.potential.push(PotentialTerm {
            x2_pow: 1,
            coeff: Profile::constant(0.5),
        });
        for &u in &[0.1, 1.0, 2.5] {
            let k = m.kappa(u).unwrap();
            assert!(m.h_partials(k * k, 0.0, u).h_x.abs() < 1e-12);
        }
    }

    #[test]
    fn vartheta_and_frequencies() {
        let m = ModelSpec::toy();
        for &u in &[0.3, 1.0, PI / 2.0, 2.9] {
            assert!((m.vartheta(u).unwrap() - u.sin()).abs() < 1e-12);
        }
        let frame = ScaleFrame::new(1e-3, 0.1, 1.0).unwrap();
        let u_hat = -PI / 2.0 / (frame.mu * frame.mu);
        let fh = m.f_hat(u_hat, &frame).unwrap();
        assert!((fh * fh * frame.mu * frame.mu - 1.0).abs() < 1e-12);
        let small = 1e-4 / (frame.mu * frame.mu);
        let om = m.omega_hat(small, &frame).unwrap();
        assert!((om * om / small - 2.0).abs() < 1e-3);
        assert!(m.f_hat(1.0, &frame).is_err());
        assert!(m.omega_hat(-1.0, &frame).is_err());
    }

    #[test]
    fn singular_distance_examples() {
        let m = ModelSpec::toy();
        assert_eq!(
            m.singular_distance(&ExtendedState::new(0.0, 0.0, 1.5 * PI, 0.0)),
            0.0
        );
        let k = m.kappa(PI / 2.0).unwrap();
        assert!(m.singular_distance(&ExtendedState::new(k, 0.0, PI / 2.0, 0.0)) < 1e-15);
        let d = m.singular_distance(&ExtendedState::new(0.8, 0.1, PI / 2.0, 0.0));
        assert!((d - 0.192_893_218_8).abs() < 1e-9);
    }

    #[test]
    fn symmetries_are_involutions() {
        let m = ModelSpec::toy();
        let s = ExtendedState::new(1.0, 2.0, 0.7, 0.3);
        let r = m.apply_symmetry(Symmetry::Reflection, &s);
        assert_eq!(r, ExtendedState::new(-1.0, -2.0, 0.7, 0.3));
        assert_eq!(m.apply_symmetry(Symmetry::Reflection, &r), s);
        let t = m.apply_symmetry(Symmetry::TimeReversal, &s);
        assert_eq!((t.x, t.y, t.u), (1.0, -2.0, PI - 0.7));
        let tt = m.apply_symmetry(Symmetry::TimeReversal, &t);
        assert!((tt.u - s.u).abs() < 1e-15 && tt.y == s.y);
        let traj = vec![(0.0, s), (1.0, r)];
        let rev = m.apply_symmetry_trajectory(Symmetry::TimeReversal, &traj);
        assert_eq!(rev[0].0, -1.0);
        assert_eq!(rev[1].0, 0.0);
    }

    #[test]
    fn field_is_reflection_equivariant() {
        let m = shifted_cos_model(2.0);
        for i in 0..50 {
            let s = ExtendedState::new(
                (i as f64 * 0.37).sin(),
                (i as f64 * 0.91).cos(),
                i as f64 * 0.13,
                0.0,
            );
            let a = m.vector_field(&m.apply_symmetry(Symmetry::Reflection, &s), 0.05);
            let b = m.apply_symmetry(Symmetry::Reflection, &m.vector_field(&s, 0.05));
            assert!(
                (a.x - b.x).abs() < 1e-13 && (a.y - b.y).abs() < 1e-13 && (a.v - b.v).abs() < 1e-13
            );
        }
    }

    #[test]
    fn validation_examples() {
        assert!(ModelSpec::toy().validate_assumptions(64).all_passed());
        assert!(shifted_cos_model(2.2).validate_assumptions(64).all_passed());
        let neg = ModelSpec::with_profile(
            "neg",
            Profile::Fourier {
                a0: 0.0,
                cos: vec![],
                sin: vec![-1.0],
            },
            PI,
        );
        assert!(!neg.validate_assumptions(32).passed("sign"));
        let off = ModelSpec::with_profile(
            "offset",
            Profile::Fourier {
                a0: 0.1,
                cos: vec![],
                sin: vec![1.0],
            },
            PI,
        );
        assert!(!off.validate_assumptions(32).passed("zeros"));
    }

    #[test]
    fn spline_reproduces_smooth_profile() {
        let n = 256;
        let vals: Vec<f64> = (0..n).map(|i| (TAU * i as f64 / n as f64).sin()).collect();
        let sp = Profile::Spline(PeriodicSpline::new(vals).unwrap());
        for i in 0..97 {
            let u = 0.0731 * i as f64;
            let (v, d, _) = sp.eval3(u);
            assert!((v - u.sin()).abs() < 1e-7);
            assert!((d - u.cos()).abs() < 1e-4);
        }
    }

    #[test]
    fn taylor_analytic_matches_differences() {
        let mut m = ModelSpec::toy();
        m.kinetic.push(KineticTerm {
            x2_pow: 0,
            y2_pow: 0,
            coeff: Profile::Fourier {
                a0: 0.0,
                cos: vec![],
                sin: vec![0.3],
            },
        });
        m.kinetic.push(KineticTerm {
            x2_pow: 1,
            y2_pow: 0,
            coeff: Profile::constant(0.2),
        });
        m.kinetic.push(KineticTerm {
            x2_pow: 1,
            y2_pow: 1,
            coeff: Profile::constant(-0.1),
        });
        m.kinetic.push(KineticTerm {
            x2_pow: 0,
            y2_pow: 2,
            coeff: Profile::constant(0.05),
        });
        for &u in &[0.4, 1.7] {
            let a = m.taylor(u).unwrap();
            let b = m.taylor_fd(u, 1e-5);
            for (p, q) in [
                (a.u_m00, b.u_m00),
                (a.m10, b.m10),
                (a.m01, b.m01),
                (a.m_kappa10, b.m_kappa10),
                (a.m_kappa01, b.m_kappa01),
                (a.u_m_kappa00, b.u_m_kappa00),
            ] {
                assert!((p - q).abs() < 1e-9, "{p} vs {q}");
            }
        }
    }

    #[test]
    fn frame_identities() {
        let fr = ScaleFrame::new(1e-3, 0.1, 1.0).unwrap();
        assert!((fr.mu * fr.mu * fr.delta - 1e-3_f64.powf(2.0 / 3.0)).abs() < 1e-15);
        assert!(ScaleFrame::new(0.0, 0.1, 1.0).is_err());
    }

    #[test]
    fn model_files() {
        assert_eq!(
            ModelSpec::from_toml_str("builtin = \"toy\"").unwrap(),
            ModelSpec::toy()
        );
        let m = ModelSpec::from_toml_str("tau = 3.141592653589793\nf = { sin = [1.0] }").unwrap();
        assert_eq!(m.f, Profile::sin());
        let n = 64;
        let vals: Vec<String> = (0..n)
            .map(|i| format!("{}", (TAU * i as f64 / n as f64).sin()))
            .collect();
        let text = format!(
            "name = \"tab\"\ntau = 3.141592653589793\nf = {{ values = [{}] }}\n[[kinetic]]\nx2_pow = 1\ncoeff = 0.2\n[[potential]]\nx2_pow = 1\ncoeff = {{ a0 = 0.1, cos = [0.05] }}\n",
            vals.join(", ")
        );
        let t = ModelSpec::from_toml_str(&text).unwrap();
        assert!((t.f(1.0) - 1.0f64.sin()).abs() < 1e-5);
        assert_eq!(t.kinetic.len(), 1);
        assert_eq!(
            t.potential[0].coeff,
            Profile::Fourier {
                a0: 0.1,
                cos: vec![0.05],
                sin: vec![]
            }
        );
        assert!(ModelSpec::from_toml_str("builtin = \"nope\"").is_err());
        assert!(ModelSpec::from_toml_str("f = 1.0").is_err());
        assert!(ModelSpec::from_toml_str("builtin = \"toy\"\nbogus = 1").is_err());
    }
}
