//! Numerical return map, symmetric periodic orbits and the orbit census.
//!
//! Orbits start on the section `u = −π + τ/2` at `(x₀, 0)`, a fixed set of
//! the reversor 𝓣_τ. If the orbit also meets `y = 0` at `u = τ/2` it is
//! 𝓣_τ-symmetric with period 2π/ε; if instead it meets `x = 0` there it is
//! symmetric under 𝓡∘𝓣_τ as well and closes after 4π/ε.

use std::f64::consts::{PI, TAU};

use nalgebra::Matrix2;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrator::{flow_for_time, integrate_planar, IntegratorConfig, ModelSystem};
use crate::model::{ExtendedState, ModelSpec};
use crate::numerics::linear_fit;

pub const STABILITY_MARGIN: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
}

impl Stability {
    pub fn from_trace(trace: f64, margin: f64) -> Self {
        if trace.abs() < 2.0 - margin {
            Stability::Stable
        } else if trace.abs() > 2.0 + margin {
            Stability::Unstable
        } else {
            Stability::Marginal
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SymmetryClass {
    #[serde(rename = "T_tau")]
    TTau,
    #[serde(rename = "R_and_T_tau")]
    RAndTTau,
    #[serde(rename = "R_only")]
    ROnly,
    #[serde(rename = "none")]
    NoSymmetry,
}

impl SymmetryClass {
    pub fn label(&self) -> &'static str {
        match self {
            SymmetryClass::TTau => "T_tau",
            SymmetryClass::RAndTTau => "R_and_T_tau",
            SymmetryClass::ROnly => "R_only",
            SymmetryClass::NoSymmetry => "none",
        }
    }
}

/// A periodic orbit found on the section `u = −π + τ/2`.
#[derive(Clone, Debug, Serialize)]
pub struct OrbitRecord {
    pub x0: f64,
    pub y0: f64,
    /// 1 for period 2π/ε, 2 for 4π/ε.
    pub period_mult: u32,
    /// Symmetry defect at `u = τ/2` (|y| for period 1, |x| for period 2).
    pub residual: f64,
    /// |P^k(x₀, y₀) − (x₀, y₀)| after the full period.
    pub closure_defect: f64,
    pub trace: f64,
    pub det: f64,
    /// ln of the largest multiplier modulus (0 on the unit circle).
    pub log_max_multiplier: f64,
    pub stability: Stability,
    pub symmetry: SymmetryClass,
    pub max_singular_distance: f64,
    pub newton_iterations: usize,
}

pub fn section_phase(model: &ModelSpec) -> f64 {
    -PI + model.tau / 2.0
}

/// Stroboscopic image of `(x, y)` after the slow phase advances by 2π.
pub fn return_map(
    x: f64,
    y: f64,
    model: &ModelSpec,
    eps: f64,
    cfg: &IntegratorConfig,
) -> Result<(f64, f64)> {
    let s = ExtendedState::new(x, y, section_phase(model), 0.0);
    let (e, _) = flow_for_time(&s, model, eps, TAU / eps, cfg, false)?;
    Ok((e.x, e.y))
}

/// Return map with its Jacobian (discrete variational equations).
pub fn return_map_jac(
    x: f64,
    y: f64,
    model: &ModelSpec,
    eps: f64,
    cfg: &IntegratorConfig,
    iterates: u32,
) -> Result<((f64, f64), Matrix2<f64>)> {
    let s = ExtendedState::new(x, y, section_phase(model), 0.0);
    let (e, phi) = flow_for_time(&s, model, eps, iterates as f64 * TAU / eps, cfg, true)?;
    Ok(((e.x, e.y), phi.unwrap()))
}

/// Monodromy data of the invariant orbit x = y = 0.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TrivialMultiplier {
    pub eps: f64,
    pub trace: f64,
    /// ln of the largest |multiplier|.
    pub ln_largest: f64,
}

pub fn trivial_multiplier(
    model: &ModelSpec,
    eps: f64,
    cfg: &IntegratorConfig,
) -> Result<TrivialMultiplier> {
    let (_, j) = return_map_jac(0.0, 0.0, model, eps, cfg, 1)?;
    let tr = j.trace();
    let ln_largest = if tr.abs() > 2.0 {
        (0.5 * (tr.abs() + (tr * tr - 4.0).sqrt())).ln()
    } else {
        0.0
    };
    Ok(TrivialMultiplier {
        eps,
        trace: tr,
        ln_largest,
    })
}

/// State at `u = τ/2` starting from `(x0, 0)` on the section.
fn half_shot(
    x0: f64,
    model: &ModelSpec,
    eps: f64,
    cfg: &IntegratorConfig,
    variational: bool,
) -> Result<([f64; 2], Option<Matrix2<f64>>)> {
    half_shot_from(x0, 0.0, model, eps, cfg, variational)
}

/// Flow from `(x0, y0)` on the section over half a slow period.
pub fn half_shot_from(
    x0: f64,
    y0: f64,
    model: &ModelSpec,
    eps: f64,
    cfg: &IntegratorConfig,
    variational: bool,
) -> Result<([f64; 2], Option<Matrix2<f64>>)> {
    let sys = ModelSystem {
        model,
        eps,
        u0: section_phase(model),
    };
    let out = integrate_planar(&sys, 0.0, [x0, y0], PI / eps, cfg, variational, None)?;
    Ok((out.z, out.phi))
}

/// Shooting defects at `u = τ/2`: `(y, x)`, the period-1 and period-2 conditions.
pub fn symmetry_defects(
    x0: f64,
    model: &ModelSpec,
    eps: f64,
    cfg: &IntegratorConfig,
) -> Result<(f64, f64)> {
    let (z, _) = half_shot(x0, model, eps, cfg, false)?;
    Ok((z[1], z[0]))
}

fn defect_index(period_mult: u32) -> usize {
    if period_mult == 1 {
        1
    } else {
        0
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NoConvergence {
    pub x_start: f64,
    pub x_last: f64,
    pub residual: f64,
    pub iterations: usize,
}

pub const MAX_SHOOTING_ITERATIONS: usize = 30;
pub const SHOOTING_TOLERANCE: f64 = 1e-9;

/// Newton iteration on the symmetry defect starting from `x0`.
pub fn find_symmetric_orbit(
    x0: f64,
    model: &ModelSpec,
    eps: f64,
    cfg: &IntegratorConfig,
    period_mult: u32,
) -> Result<std::result::Result<OrbitRecord, NoConvergence>> {
    find_symmetric_orbit_with(x0, model, eps, cfg, period_mult, MAX_SHOOTING_ITERATIONS)
}

pub fn find_symmetric_orbit_with(
    x0: f64,
    model: &ModelSpec,
    eps: f64,
    cfg: &IntegratorConfig,
    period_mult: u32,
    max_iter: usize,
) -> Result<std::result::Result<OrbitRecord, NoConvergence>> {
    if period_mult != 1 && period_mult != 2 {
        return Err(Error::Domain(format!(
            "period_mult must be 1 or 2, got {period_mult}"
        )));
    }
    let k = defect_index(period_mult);
    let mut x = x0;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let (z, phi) = half_shot(x, model, eps, cfg, true)?;
        let d = z[k];
        let dd = phi.unwrap()[(k, 0)];
        residual = d.abs();
        if residual < 1e-13 {
            converged = true;
            break;
        }
        if dd == 0.0 || !dd.is_finite() {
            break;
        }
        let mut step = d / dd;
        // keep the iteration local; the defect oscillates on scales ~ε
        let cap = 0.05 * eps.sqrt();
        if step.abs() > cap {
            step = cap * step.signum();
        }
        x -= step;
        if step.abs() < 1e-15 * x.abs().max(1e-3) {
            let (z, _) = half_shot(x, model, eps, cfg, false)?;
            residual = z[k].abs();
            converged = residual < SHOOTING_TOLERANCE;
            break;
        }
    }
    if !converged && residual < SHOOTING_TOLERANCE {
        converged = true;
    }
    if !converged {
        return Ok(Err(NoConvergence {
            x_start: x0,
            x_last: x,
            residual,
            iterations,
        }));
    }
    let mut rec = classify_orbit(x, 0.0, model, eps, cfg, period_mult)?;
    rec.residual = residual;
    rec.newton_iterations = iterations;
    rec.symmetry = if period_mult == 1 {
        SymmetryClass::TTau
    } else {
        SymmetryClass::RAndTTau
    };
    Ok(Ok(rec))
}

/// Full-period monodromy, closure defect and singular distance for a
/// candidate periodic orbit through `(x0, y0)`.
pub fn classify_orbit(
    x0: f64,
    y0: f64,
    model: &ModelSpec,
    eps: f64,
    cfg: &IntegratorConfig,
    period_mult: u32,
) -> Result<OrbitRecord> {
    let u0 = section_phase(model);
    let sys = ModelSystem { model, eps, u0 };
    let mut max_dist: f64 = 0.0;
    let mut count = 0usize;
    let mut obs = |t: f64, z: [f64; 2], _q: f64| {
        if count.is_multiple_of(20) {
            let s = ExtendedState::new(z[0], z[1], u0 + eps * t, 0.0);
            max_dist = max_dist.max(model.singular_distance(&s));
        }
        count += 1;
    };
    let period = period_mult as f64 * TAU / eps;
    let out = integrate_planar(&sys, 0.0, [x0, y0], period, cfg, true, Some(&mut obs))?;
    let phi = out.phi.unwrap();
    let trace = phi.trace();
    let det = out.det.unwrap();
    let disc = trace * trace - 4.0 * det;
    let log_max_multiplier = if disc > 0.0 {
        ((trace.abs() + disc.sqrt()) / 2.0).ln()
    } else {
        0.5 * det.abs().ln()
    };
    let closure_defect = (out.z[0] - x0).hypot(out.z[1] - y0);
    Ok(OrbitRecord {
        x0,
        y0,
        period_mult,
        residual: closure_defect,
        closure_defect,
        trace,
        det,
        log_max_multiplier,
        stability: Stability::from_trace(trace, STABILITY_MARGIN),
        symmetry: SymmetryClass::NoSymmetry,
        max_singular_distance: max_dist,
        newton_iterations: 0,
    })
}

/// Scan controls for [`scan_census`].
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CensusControls {
    /// Base grid size; `None` uses max(4000, 10/ε).
    pub n0: Option<usize>,
    /// Roots closer than this are merged.
    pub dedup_tol: f64,
    pub stability_margin: f64,
    /// Bracket width at which root isolation stops.
    pub bracket_tol: f64,
    /// An interval is split while |defect'|·width exceeds this fraction of
    /// the largest defect seen on the base grid.
    pub refine_ratio: f64,
    /// Intervals narrower than this are never split.
    pub min_width: f64,
    /// Cap on shooting integrations spent on refinement.
    pub max_refine_evals: usize,
}

impl Default for CensusControls {
    fn default() -> Self {
        Self {
            n0: None,
            dedup_tol: 1e-7,
            stability_margin: STABILITY_MARGIN,
            bracket_tol: 1e-15,
            refine_ratio: 0.3,
            min_width: 1e-5,
            max_refine_evals: 200_000,
        }
    }
}

impl CensusControls {
    pub fn grid_size(&self, eps: f64) -> usize {
        self.n0
            .unwrap_or_else(|| 4000usize.max((10.0 / eps).ceil() as usize))
    }
}

/// One row of the census table.
#[derive(Clone, Debug, Serialize)]
pub struct CensusRow {
    pub eps: f64,
    pub pos_count: usize,
    pub spos_count: usize,
    pub spos_small_count: usize,
    pub upos_small_count: usize,
    pub marginal_count: usize,
    pub period2_count: usize,
    pub period2_stable_count: usize,
    pub window: (f64, f64),
    pub small_bound: f64,
    pub n0: usize,
    pub samples: usize,
    pub integrations: usize,
    pub failed_samples: usize,
    pub refine_budget_hit: bool,
    pub integrator: IntegratorConfig,
    pub controls: CensusControls,
}

#[derive(Clone, Debug, Serialize)]
pub struct CensusResult {
    pub row: CensusRow,
    pub orbits: Vec<OrbitRecord>,
    pub period2_orbits: Vec<OrbitRecord>,
}

/// Illinois-type false position inside a sign-change bracket.
fn refine_bracket<F: FnMut(f64) -> Result<f64>>(
    mut f: F,
    mut a: f64,
    mut b: f64,
    mut fa: f64,
    mut fb: f64,
    xtol: f64,
    evals: &mut usize,
) -> Result<f64> {
    let mut side = 0i32;
    for _ in 0..200 {
        if (b - a).abs() <= xtol {
            break;
        }
        let mut c = (a * fb - b * fa) / (fb - fa);
        if !(c > a.min(b) && c < a.max(b)) {
            c = 0.5 * (a + b);
        }
        let fc = f(c)?;
        *evals += 1;
        if fc == 0.0 {
            return Ok(c);
        }
        if fc.signum() == fb.signum() {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    Ok(if fa.abs() < fb.abs() { a } else { b })
}

/// Both shooting defects and their x₀-derivatives at one initial condition.
#[derive(Clone, Copy, Debug)]
struct DefectSample {
    x: f64,
    /// (period-1 defect y, period-2 defect x)
    f: [f64; 2],
    d: [f64; 2],
}

fn sample_defects(
    x: f64,
    model: &ModelSpec,
    eps: f64,
    cfg: &IntegratorConfig,
) -> Option<DefectSample> {
    match half_shot(x, model, eps, cfg, true) {
        Ok((z, phi)) => {
            let phi = phi.unwrap();
            Some(DefectSample {
                x,
                f: [z[1], z[0]],
                d: [phi[(1, 0)], phi[(0, 0)]],
            })
        }
        Err(e) => {
            log::warn!("census sample x0={x} failed: {e}");
            None
        }
    }
}

/// Cubic Hermite interpolant on [a, b] changes sign in the interior.
fn hermite_sign_change(fa: f64, fb: f64, da: f64, db: f64, h: f64) -> bool {
    (1..16).any(|i| {
        let t = i as f64 / 16.0;
        let h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
        let h10 = t * (1.0 - t) * (1.0 - t);
        let h01 = t * t * (3.0 - 2.0 * t);
        let h11 = t * t * (t - 1.0);
        let p = h00 * fa + h10 * h * da + h01 * fb + h11 * h * db;
        p.signum() != fa.signum()
    })
}

fn needs_split(a: &DefectSample, b: &DefectSample, scale: f64, c: &CensusControls) -> bool {
    let h = b.x - a.x;
    if h < c.min_width * b.x.abs().max(1.0) {
        return false;
    }
    (0..2).any(|k| {
        let slope = a.d[k].abs().max(b.d[k].abs());
        if slope * h > c.refine_ratio * scale {
            return true;
        }
        a.f[k].signum() == b.f[k].signum()
            && a.d[k].signum() != b.d[k].signum()
            && hermite_sign_change(a.f[k], b.f[k], a.d[k], b.d[k], h)
    })
}

/// Census of symmetric periodic orbits with initial condition `(x₀, 0)`,
/// `x₀` in the half-open window `(lo, hi]`.
///
/// The uniform base grid is refined wherever the defect is under-resolved
/// (derivative times spacing large, or a hidden pair of roots suggested by the
/// Hermite interpolant). Roots accumulate geometrically towards initial
/// conditions that shadow the trivial orbit, so the refinement is what makes
/// the count converge.
pub fn scan_census(
    eps: f64,
    window: (f64, f64),
    model: &ModelSpec,
    cfg: &IntegratorConfig,
    controls: &CensusControls,
) -> Result<CensusResult> {
    let (lo, hi) = window;
    if !(lo >= 0.0 && hi > lo && hi < 1.0) {
        return Err(Error::Domain(format!(
            "census window ({lo}, {hi}] not inside (0, 1)"
        )));
    }
    cfg.validate()?;
    let n0 = controls.grid_size(eps);
    let xs: Vec<f64> = (0..=n0)
        .map(|i| lo + (hi - lo) * i as f64 / n0 as f64)
        .collect();
    let base: Vec<Option<DefectSample>> = xs
        .par_iter()
        .map(|&x| sample_defects(x, model, eps, cfg))
        .collect();
    let mut integrations = base.len();
    let failed_samples = base.iter().filter(|s| s.is_none()).count();
    let mut samples: Vec<DefectSample> = base.into_iter().flatten().collect();
    let scale = samples
        .iter()
        .flat_map(|s| s.f)
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Err(Error::Domain(
            "shooting defect vanishes on the whole grid".into(),
        ));
    }

    let mut refine_evals = 0usize;
    let mut budget_hit = false;
    loop {
        let mids: Vec<f64> = samples
            .windows(2)
            .filter(|w| needs_split(&w[0], &w[1], scale, controls))
            .map(|w| 0.5 * (w[0].x + w[1].x))
            .collect();
        if mids.is_empty() {
            break;
        }
        if refine_evals + mids.len() > controls.max_refine_evals {
            budget_hit = true;
            log::warn!("census refinement budget exhausted at eps={eps}");
            break;
        }
        refine_evals += mids.len();
        let new: Vec<DefectSample> = mids
            .par_iter()
            .filter_map(|&x| sample_defects(x, model, eps, cfg))
            .collect();
        samples.extend(new);
        samples.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap());
    }
    integrations += refine_evals;

    // brackets (a, b, fa, fb, period_mult); the window floor itself is excluded
    let mut brackets = Vec::new();
    for w in samples.windows(2) {
        for (k, pm) in [(0usize, 1u32), (1, 2)] {
            let (fa, fb) = (w[0].f[k], w[1].f[k]);
            if fb == 0.0 && w[1].x > lo {
                brackets.push((w[1].x, w[1].x, fb, fb, pm));
            } else if fa * fb < 0.0 {
                brackets.push((w[0].x, w[1].x, fa, fb, pm));
            }
        }
    }
    let refined: Vec<Result<(OrbitRecord, usize)>> = brackets
        .par_iter()
        .map(|&(a, b, fa, fb, pm)| {
            let mut evals = 0usize;
            let k = defect_index(pm);
            let root = if a == b {
                a
            } else {
                refine_bracket(
                    |x| Ok(half_shot(x, model, eps, cfg, false)?.0[k]),
                    a,
                    b,
                    fa,
                    fb,
                    controls.bracket_tol,
                    &mut evals,
                )?
            };
            let (z, _) = half_shot(root, model, eps, cfg, false)?;
            let mut r = classify_orbit(root, 0.0, model, eps, cfg, pm)?;
            r.residual = z[k].abs();
            r.symmetry = if pm == 1 {
                SymmetryClass::TTau
            } else {
                SymmetryClass::RAndTTau
            };
            Ok((r, evals + 2))
        })
        .collect();

    let mut p1: Vec<OrbitRecord> = Vec::new();
    let mut p2: Vec<OrbitRecord> = Vec::new();
    for r in refined {
        let (rec, evals) = r?;
        integrations += evals;
        if rec.period_mult == 1 {
            p1.push(rec)
        } else {
            p2.push(rec)
        }
    }
    let dedup = |v: &mut Vec<OrbitRecord>| {
        v.sort_by(|a, b| a.x0.partial_cmp(&b.x0).unwrap());
        let mut out: Vec<OrbitRecord> = Vec::with_capacity(v.len());
        for r in v.drain(..) {
            match out.last_mut() {
                Some(last) if (r.x0 - last.x0).abs() < controls.dedup_tol => {
                    if r.residual < last.residual {
                        *last = r;
                    }
                }
                _ => out.push(r),
            }
        }
        *v = out;
    };
    dedup(&mut p1);
    dedup(&mut p2);
    for r in p1.iter_mut().chain(p2.iter_mut()) {
        r.stability = Stability::from_trace(r.trace, controls.stability_margin);
    }

    let small = 2.0 * eps.sqrt();
    let row = CensusRow {
        eps,
        pos_count: p1.len(),
        spos_count: p1
            .iter()
            .filter(|r| r.stability == Stability::Stable)
            .count(),
        spos_small_count: p1
            .iter()
            .filter(|r| r.stability == Stability::Stable && r.x0 <= small)
            .count(),
        upos_small_count: p1
            .iter()
            .filter(|r| r.stability == Stability::Unstable && r.x0 <= small)
            .count(),
        marginal_count: p1
            .iter()
            .filter(|r| r.stability == Stability::Marginal)
            .count(),
        period2_count: p2.len(),
        period2_stable_count: p2
            .iter()
            .filter(|r| r.stability == Stability::Stable)
            .count(),
        window,
        small_bound: small,
        n0,
        samples: samples.len(),
        integrations,
        failed_samples,
        refine_budget_hit: budget_hit,
        integrator: *cfg,
        controls: *controls,
    };
    Ok(CensusResult {
        row,
        orbits: p1,
        period2_orbits: p2,
    })
}

/// Least-squares fit `upos_small ≈ a ln²ε⁻¹ + b` and per-row relative errors.
#[derive(Clone, Debug, Serialize)]
pub struct LogSquareFit {
    pub a: f64,
    pub b: f64,
    pub rows: Vec<(f64, f64, f64, f64)>,
}

impl LogSquareFit {
    pub fn max_relative_error(&self) -> f64 {
        self.rows.iter().map(|r| r.3).fold(0.0, f64::max)
    }
}

/// Fit over `(ε, count)` pairs; rows report `(ε, count, fitted, relative error)`.
pub fn fit_log_square(data: &[(f64, f64)]) -> Result<LogSquareFit> {
    if data.len() < 3 {
        return Err(Error::DegenerateFit(format!(
            "need at least 3 rows, got {}",
            data.len()
        )));
    }
    let l2: Vec<f64> = data.iter().map(|(e, _)| (1.0 / e).ln().powi(2)).collect();
    let ys: Vec<f64> = data.iter().map(|(_, c)| *c).collect();
    let (a, b) =
        linear_fit(&l2, &ys).ok_or_else(|| Error::DegenerateFit("all eps equal".into()))?;
    let rows = data
        .iter()
        .zip(&l2)
        .map(|(&(e, c), &l)| {
            let fit = a * l + b;
            (
                e,
                c,
                fit,
                if c != 0.0 {
                    ((fit - c) / c).abs()
                } else {
                    fit.abs()
                },
            )
        })
        .collect();
    Ok(LogSquareFit { a, b, rows })
}

pub fn fit_census_rows(rows: &[CensusRow]) -> Result<LogSquareFit> {
    let data: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.eps, r.upos_small_count as f64))
        .collect();
    fit_log_square(&data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_point_is_fixed() {
        let m = ModelSpec::toy();
        let cfg = IntegratorConfig::default();
        assert_eq!(return_map(0.0, 0.0, &m, 0.08, &cfg).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn return_map_is_reflection_equivariant() {
        let m = ModelSpec::toy();
        let cfg = IntegratorConfig::default();
        for &(x, y) in &[(0.2, 0.1), (0.37, -0.05), (0.05, 0.02)] {
            let (a, b) = return_map(x, y, &m, 0.08, &cfg).unwrap();
            let (c, d) = return_map(-x, -y, &m, 0.08, &cfg).unwrap();
            assert!((a + c).abs() < 1e-9 && (b + d).abs() < 1e-9);
        }
        let (_, j) = return_map_jac(0.3, 0.0, &m, 0.08, &cfg, 1).unwrap();
        assert!((j.determinant() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn stability_labels() {
        assert_eq!(Stability::from_trace(1.5, 1e-3), Stability::Stable);
        assert_eq!(Stability::from_trace(-2.5, 1e-3), Stability::Unstable);
        assert_eq!(Stability::from_trace(2.0005, 1e-3), Stability::Marginal);
    }

    #[test]
    fn log_square_fit() {
        let data: Vec<(f64, f64)> = [0.1, 0.01, 0.001]
            .iter()
            .map(|&e: &f64| (e, 3.0 * (1.0 / e).ln().powi(2) + 5.0))
            .collect();
        let fit = fit_log_square(&data).unwrap();
        assert!((fit.a - 3.0).abs() < 1e-10 && (fit.b - 5.0).abs() < 1e-9);
        let flat = fit_log_square(&[(0.1, 4.0), (0.01, 4.0), (0.001, 4.0)]).unwrap();
        assert!(flat.a.abs() < 1e-12);
        assert!(fit_log_square(&[(0.1, 1.0), (0.1, 2.0), (0.1, 3.0)]).is_err());
        assert!(fit_log_square(&[(0.1, 1.0), (0.2, 2.0)]).is_err());
    }

    #[test]
    fn tabulated_fit_quality() {
        let table = [
            (0.08, 33.0),
            (0.04, 46.0),
            (0.02, 64.0),
            (0.01, 72.0),
            (0.005, 84.0),
            (0.0025, 108.0),
        ];
        let fit = fit_log_square(&table).unwrap();
        assert!(fit.max_relative_error() < 0.12);
    }

    #[test]
    fn trivial_multiplier_grows_like_inverse_eps() {
        let m = ModelSpec::toy();
        let cfg = IntegratorConfig::default();
        let a = trivial_multiplier(&m, 0.08, &cfg).unwrap();
        let b = trivial_multiplier(&m, 0.04, &cfg).unwrap();
        assert!(a.trace.abs() > 1e6, "{a:?}");
        let r = b.ln_largest / a.ln_largest;
        assert!((r - 2.0).abs() < 0.4, "{a:?} {b:?}");
    }
}
