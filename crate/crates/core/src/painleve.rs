//! Direct integration of the scaled crossing near û = 0 and empirical checks
//! of the connection asymptotics, the growth bounds of the flow map and the
//! effect of the O(μ²) remainder.

use std::f64::consts::PI;

use nalgebra::Matrix2;
use rayon::prelude::*;
use serde::Serialize;

use crate::asymptotic_maps::{
    blowdown_outer, blowup_inner, blowup_outer, crossing_with_connection, outer_phase_for,
    to_inner_action_angle, wrap_2pi, Admissible, InnerAA, OuterAA,
};
use crate::error::{Error, Result};
use crate::integrator::{integrate_planar, IntegratorConfig, ModelSystem, PlanarSystem};
use crate::model::{ExtendedState, ModelSpec, ScaleFrame};
use crate::numerics::loglog_slope;

pub const DEFAULT_DELTAS: [f64; 4] = [0.1, 0.05, 0.02, 0.01];
pub const DEFAULT_U_STAR_HAT: f64 = 1.0;
/// Inner matching scale ŭ∗: the regimes |û| < ŭ∗δ and |û| ≥ ŭ∗δ.
pub const DEFAULT_U_BREVE_STAR: f64 = 10.0;

/// x̂' = δ^{−3/2}ŷ, ŷ' = δ^{−3/2}(ûx̂ − 2δ^{3/2}x̂³) with û as time.
#[derive(Clone, Copy, Debug)]
pub struct TruncatedBlowup {
    pub delta: f64,
}

impl PlanarSystem for TruncatedBlowup {
    fn field(&self, t: f64, z: [f64; 2]) -> [f64; 2] {
        let s = self.delta.powf(-1.5);
        let d32 = self.delta.powf(1.5);
        [s * z[1], s * (t * z[0] - 2.0 * d32 * z[0].powi(3))]
    }

    fn field_jac(&self, t: f64, z: [f64; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
        let s = self.delta.powf(-1.5);
        let d32 = self.delta.powf(1.5);
        let f = self.field(t, z);
        (f, [[0.0, s], [s * (t - 6.0 * d32 * z[0] * z[0]), 0.0]])
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PainleveConfig {
    pub u_star_hat: f64,
    pub u_breve_star: f64,
    /// Step in û as a multiple of δ^{3/2}.
    pub step_factor: f64,
    pub newton_tol: f64,
}

impl Default for PainleveConfig {
    fn default() -> Self {
        Self {
            u_star_hat: DEFAULT_U_STAR_HAT,
            u_breve_star: DEFAULT_U_BREVE_STAR,
            step_factor: 0.01,
            newton_tol: 1e-14,
        }
    }
}

impl PainleveConfig {
    fn integrator(&self, delta: f64) -> IntegratorConfig {
        IntegratorConfig {
            h: self.step_factor * delta.powf(1.5),
            newton_tol: self.newton_tol,
            ..Default::default()
        }
    }

    fn validate(&self, delta: f64) -> Result<()> {
        if !(delta > 0.0 && delta <= 0.2) {
            return Err(Error::Domain(format!("delta={delta} outside (0, 0.2]")));
        }
        if !(self.u_star_hat > 0.0 && self.u_breve_star > 0.0) {
            return Err(Error::Config(format!(
                "need u_star_hat > 0 and u_breve_star > 0 (got {}, {})",
                self.u_star_hat, self.u_breve_star
            )));
        }
        if !(self.step_factor > 0.0 && self.step_factor <= 0.05) {
            return Err(Error::Config(format!(
                "step_factor={} outside (0, 0.05]",
                self.step_factor
            )));
        }
        Ok(())
    }
}

/// Sup-ratios of the solution against the growth bounds on the two regimes.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct GrowthRecord {
    /// max |x̂| δ^{1/4} on 0 ≤ û < ŭ∗δ.
    pub x_inner: f64,
    /// max |ŷ| δ^{−1/4} on 0 ≤ û < ŭ∗δ.
    pub y_inner: f64,
    /// max |x̂| δ^{3/4} û^{−1/2} on û ≥ ŭ∗δ.
    pub x_outer: f64,
    /// max |ŷ| û^{−1/4} on û ≥ ŭ∗δ.
    pub y_outer: f64,
    pub steps: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct TruncatedRun {
    pub start: [f64; 2],
    pub end: [f64; 2],
    pub phi: Option<Matrix2<f64>>,
    pub growth: GrowthRecord,
}

/// Truncated flow from û = −û∗ to û = +û∗, split at ±ŭ∗δ.
pub fn integrate_truncated(
    start: [f64; 2],
    delta: f64,
    cfg: &PainleveConfig,
    variational: bool,
) -> Result<TruncatedRun> {
    cfg.validate(delta)?;
    let sys = TruncatedBlowup { delta };
    let icfg = cfg.integrator(delta);
    let ub = (cfg.u_breve_star * delta).min(0.5 * cfg.u_star_hat);
    let knots = [-cfg.u_star_hat, -ub, ub, cfg.u_star_hat];
    let mut z = start;
    let mut phi = Matrix2::identity();
    let mut growth = GrowthRecord::default();
    for w in knots.windows(2) {
        let mut obs = |t: f64, z: [f64; 2], _q: f64| {
            if t >= 0.0 && t < ub {
                growth.x_inner = growth.x_inner.max(z[0].abs() * delta.powf(0.25));
                growth.y_inner = growth.y_inner.max(z[1].abs() * delta.powf(-0.25));
            } else if t >= ub {
                growth.x_outer = growth.x_outer.max(z[0].abs() * delta.powf(0.75) / t.sqrt());
                growth.y_outer = growth.y_outer.max(z[1].abs() / t.powf(0.25));
            }
        };
        let out = integrate_planar(&sys, w[0], z, w[1], &icfg, variational, Some(&mut obs))?;
        growth.steps += out.steps;
        z = out.z;
        if let Some(p) = out.phi {
            phi = p * phi;
        }
    }
    Ok(TruncatedRun {
        start,
        end: z,
        phi: variational.then_some(phi),
        growth,
    })
}

/// (x̂, ŷ) at û = −û∗ for the outer action-angle (ẑ₀, w₀) with F̂² = −û.
pub fn truncated_initial(aa: &OuterAA, u_star_hat: f64) -> [f64; 2] {
    let w = u_star_hat.powf(0.25);
    let r = (2.0 * aa.z0_hat).sqrt();
    [r * aa.w0.cos() / w, r * aa.w0.sin() * w]
}

/// Inner action-angle at û = +û∗ about the branch selected by the sign of x̂.
pub fn truncated_inner_aa(end: [f64; 2], delta: f64, u_star_hat: f64) -> InnerAA {
    let s = if end[0] >= 0.0 { 1.0 } else { -1.0 };
    let kappa = (u_star_hat / 2.0).sqrt() * delta.powf(-0.75);
    let xi = s * end[0] - kappa;
    let sigma = s * end[1];
    let w = (2.0 * u_star_hat).powf(0.25);
    let a = w * xi;
    let b = sigma / w;
    InnerAA {
        rho0_hat: 0.5 * (a * a + b * b),
        phi0: wrap_2pi(b.atan2(a)),
        eta: s as i8,
    }
}

/// Frame carrying only δ and û∗; the ε it is built with is irrelevant to the
/// crossing prediction.
fn prediction_frame(delta: f64, u_star_hat: f64) -> Result<ScaleFrame> {
    ScaleFrame::with_threshold(1e-30, delta, u_star_hat, f64::INFINITY)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct CrossingExperiment {
    pub delta: f64,
    pub u_star_hat: f64,
    pub initial: OuterAA,
    pub lambda: f64,
    pub theta: f64,
    pub growth: GrowthRecord,
    pub end_x_hat: f64,
    pub end_y_hat: f64,
    pub measured: InnerAA,
    pub predicted: InnerAA,
    pub action_error: f64,
    pub phase_error: f64,
    /// Phase error against the prediction with θ replaced by −θ − π.
    pub phase_error_reflected: f64,
    pub branch_ok: bool,
}

/// Action and phase errors at one δ, averaged over the sample set.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConnectionLevel {
    pub delta: f64,
    pub samples: usize,
    pub skipped: usize,
    pub mean_action_error: f64,
    pub max_action_error: f64,
    pub mean_phase_error: f64,
    pub mean_phase_error_reflected: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConnectionReport {
    pub levels: Vec<ConnectionLevel>,
    pub experiments: Vec<CrossingExperiment>,
    /// Log-log slope of the mean action error against δ.
    pub action_slope: f64,
    pub phase_slope: f64,
    pub branch_mismatches: usize,
}

fn centered(a: f64) -> f64 {
    wrap_2pi(a + PI) - PI
}

pub fn crossing_experiment(
    aa: &OuterAA,
    delta: f64,
    cfg: &PainleveConfig,
    adm: &Admissible,
) -> Result<CrossingExperiment> {
    let frame = prediction_frame(delta, cfg.u_star_hat)?;
    let (est, conn) = crossing_with_connection(aa, &frame, adm)?;
    let predicted = est.value;
    let run = integrate_truncated(truncated_initial(aa, cfg.u_star_hat), delta, cfg, false)?;
    let measured = truncated_inner_aa(run.end, delta, cfg.u_star_hat);
    let dphi = centered(measured.phi0 - predicted.phi0);
    Ok(CrossingExperiment {
        delta,
        u_star_hat: cfg.u_star_hat,
        initial: *aa,
        lambda: conn.lambda,
        theta: conn.theta,
        growth: run.growth,
        end_x_hat: run.end[0],
        end_y_hat: run.end[1],
        measured,
        predicted,
        action_error: (measured.rho0_hat - predicted.rho0_hat).abs(),
        phase_error: dphi.abs(),
        phase_error_reflected: centered(dphi - 2.0 * conn.theta - PI).abs(),
        branch_ok: measured.eta == predicted.eta,
    })
}

/// A crossing chosen by its pseudo-phase, so the same crossing is compared
/// across δ.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PhaseSample {
    pub z0_hat: f64,
    pub lambda: f64,
}

/// ẑ₀ ∈ {0.3, 0.5, 1} against `n_phase` equally spaced λ.
pub fn default_connection_samples(n_phase: usize) -> Vec<PhaseSample> {
    let mut out = Vec::with_capacity(3 * n_phase);
    for z0_hat in [0.3, 0.5, 1.0] {
        for k in 0..n_phase {
            out.push(PhaseSample {
                z0_hat,
                lambda: (k as f64 + 0.5) * std::f64::consts::TAU / n_phase as f64,
            });
        }
    }
    out
}

/// (δ, outer start) for every δ × sample, δ-major.
fn sample_jobs(
    samples: &[PhaseSample],
    deltas: &[f64],
    cfg: &PainleveConfig,
) -> Result<Vec<(f64, OuterAA)>> {
    let mut jobs = Vec::with_capacity(samples.len() * deltas.len());
    for &d in deltas {
        let frame = prediction_frame(d, cfg.u_star_hat)?;
        for s in samples {
            let w0 = outer_phase_for(s.z0_hat, s.lambda, &frame)?;
            jobs.push((
                d,
                OuterAA {
                    z0_hat: s.z0_hat,
                    w0,
                },
            ));
        }
    }
    Ok(jobs)
}

fn check_deltas(deltas: &[f64]) -> Result<()> {
    if deltas.len() < 2 || deltas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config(
            "delta list must be decreasing with at least two entries".into(),
        ));
    }
    Ok(())
}

/// Crossing experiments over samples × δ. Inadmissible samples are skipped.
pub fn verify_connection(
    samples: &[PhaseSample],
    deltas: &[f64],
    cfg: &PainleveConfig,
    adm: &Admissible,
) -> Result<ConnectionReport> {
    check_deltas(deltas)?;
    if samples.is_empty() {
        return Err(Error::Config("no connection samples".into()));
    }
    let jobs = sample_jobs(samples, deltas, cfg)?;
    let results: Vec<Result<CrossingExperiment>> = jobs
        .par_iter()
        .map(|(d, s)| crossing_experiment(s, *d, cfg, adm))
        .collect();
    let mut experiments = Vec::new();
    let mut levels = Vec::new();
    for (i, &delta) in deltas.iter().enumerate() {
        let mut skipped = 0;
        let mut level: Vec<CrossingExperiment> = Vec::new();
        for r in &results[i * samples.len()..(i + 1) * samples.len()] {
            match r {
                Ok(e) => level.push(*e),
                Err(Error::OutsideDomain(_)) | Err(Error::SingularP { .. }) => skipped += 1,
                Err(e) => return Err(e.clone()),
            }
        }
        if level.is_empty() {
            return Err(Error::Domain(format!(
                "every connection sample skipped at delta={delta}"
            )));
        }
        let n = level.len() as f64;
        levels.push(ConnectionLevel {
            delta,
            samples: level.len(),
            skipped,
            mean_action_error: level.iter().map(|e| e.action_error).sum::<f64>() / n,
            max_action_error: level.iter().map(|e| e.action_error).fold(0.0, f64::max),
            mean_phase_error: level.iter().map(|e| e.phase_error).sum::<f64>() / n,
            mean_phase_error_reflected: level.iter().map(|e| e.phase_error_reflected).sum::<f64>()
                / n,
        });
        experiments.extend(level);
    }
    let ae: Vec<f64> = levels
        .iter()
        .map(|l| l.mean_action_error.max(1e-300))
        .collect();
    let pe: Vec<f64> = levels
        .iter()
        .map(|l| l.mean_phase_error.max(1e-300))
        .collect();
    Ok(ConnectionReport {
        action_slope: loglog_slope(deltas, &ae),
        phase_slope: loglog_slope(deltas, &pe),
        branch_mismatches: experiments.iter().filter(|e| !e.branch_ok).count(),
        levels,
        experiments,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct GrowthEntry {
    pub delta: f64,
    pub samples: usize,
    /// Largest spectral norm of Ψ_{û∗} or its inverse over the samples.
    pub norm: f64,
    /// Largest |det − 1| over the samples.
    pub det_defect: f64,
    /// norm / ln²δ⁻¹.
    pub ratio: f64,
    /// Same for the flow from −û∗ to 0, over δ^{−1/4} ln δ⁻¹.
    pub interior_ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GrowthReport {
    pub entries: Vec<GrowthEntry>,
    /// Least-squares slope of ln(ratio) against ln ln δ⁻¹ over the entries
    /// with δ ≤ 0.05 (all entries if fewer than two qualify).
    pub tail_slope: f64,
    pub tail_non_increasing: bool,
    pub max_ratio: f64,
}

fn spectral_norm(m: &Matrix2<f64>) -> f64 {
    m.singular_values().max()
}

fn two_sided_norm(m: &Matrix2<f64>) -> f64 {
    spectral_norm(m).max(
        m.try_inverse()
            .map(|i| spectral_norm(&i))
            .unwrap_or(f64::INFINITY),
    )
}

/// Variational Jacobians of the truncated flow, worst case over the samples
/// that are admissible at each δ.
pub fn jacobian_growth_check(
    samples: &[PhaseSample],
    deltas: &[f64],
    cfg: &PainleveConfig,
    adm: &Admissible,
) -> Result<GrowthReport> {
    check_deltas(deltas)?;
    let jobs = sample_jobs(samples, deltas, cfg)?;
    let per: Vec<Option<(f64, f64, f64)>> = jobs
        .par_iter()
        .map(|(delta, aa)| -> Result<Option<(f64, f64, f64)>> {
            match crossing_with_connection(aa, &prediction_frame(*delta, cfg.u_star_hat)?, adm) {
                Err(Error::OutsideDomain(_)) | Err(Error::SingularP { .. }) => return Ok(None),
                Err(e) => return Err(e),
                Ok(_) => {}
            }
            let z0 = truncated_initial(aa, cfg.u_star_hat);
            let full = integrate_truncated(z0, *delta, cfg, true)?.phi.unwrap();
            let sys = TruncatedBlowup { delta: *delta };
            let mid = integrate_planar(
                &sys,
                -cfg.u_star_hat,
                z0,
                0.0,
                &cfg.integrator(*delta),
                true,
                None,
            )?;
            Ok(Some((
                two_sided_norm(&full),
                (full.determinant() - 1.0).abs(),
                two_sided_norm(&mid.phi.unwrap()),
            )))
        })
        .collect::<Result<_>>()?;
    let mut entries = Vec::with_capacity(deltas.len());
    for (i, &delta) in deltas.iter().enumerate() {
        let chunk: Vec<(f64, f64, f64)> = per[i * samples.len()..(i + 1) * samples.len()]
            .iter()
            .flatten()
            .copied()
            .collect();
        if chunk.is_empty() {
            return Err(Error::Domain(format!(
                "no admissible growth sample at delta={delta}"
            )));
        }
        let ld = (1.0 / delta).ln();
        let norm = chunk.iter().map(|c| c.0).fold(0.0, f64::max);
        entries.push(GrowthEntry {
            delta,
            samples: chunk.len(),
            norm,
            det_defect: chunk.iter().map(|c| c.1).fold(0.0, f64::max),
            ratio: norm / (ld * ld),
            interior_ratio: chunk.iter().map(|c| c.2).fold(0.0, f64::max)
                / (delta.powf(-0.25) * ld),
        });
    }
    let mut tail: Vec<&GrowthEntry> = entries.iter().filter(|e| e.delta <= 0.05 + 1e-12).collect();
    if tail.len() < 2 {
        tail = entries.iter().collect();
    }
    let lx: Vec<f64> = tail.iter().map(|e| (1.0 / e.delta).ln()).collect();
    let ly: Vec<f64> = tail.iter().map(|e| e.ratio).collect();
    let tail_slope = loglog_slope(&lx, &ly);
    let max_ratio = entries.iter().map(|e| e.ratio).fold(0.0, f64::max);
    Ok(GrowthReport {
        entries,
        tail_slope,
        tail_non_increasing: tail_slope <= 0.0,
        max_ratio,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct FullBlowupRun {
    pub eps: f64,
    pub delta: f64,
    pub mu: f64,
    /// μ²δ^{−5/2}ln³δ⁻¹.
    pub remainder_budget: f64,
    /// Endpoint (x̂, ŷ) of the full system at û = +û∗.
    pub end: [f64; 2],
    /// Same for the truncated system.
    pub truncated_end: [f64; 2],
    /// |end − truncated_end| in the outer chart.
    pub endpoint_difference: f64,
    /// Inner action-angle of the full endpoint in the model's charts.
    pub measured: InnerAA,
}

/// The original system through the outer chart over û ∈ [−û∗, û∗].
pub fn integrate_full_blowup(
    start: [f64; 2],
    frame: &ScaleFrame,
    model: &ModelSpec,
    cfg: &PainleveConfig,
) -> Result<FullBlowupRun> {
    let delta = frame.delta;
    cfg.validate(delta)?;
    let us = cfg.u_star_hat;
    let (x0, y0, u0) = blowdown_outer(start[0], start[1], -us, frame);
    let eps = frame.eps;
    let mu2 = frame.mu * frame.mu;
    // dû = ε dt / μ².
    let dt = cfg.step_factor * delta.powf(1.5) * mu2 / eps;
    let icfg = IntegratorConfig {
        h: dt,
        newton_tol: cfg.newton_tol,
        ..Default::default()
    };
    let sys = ModelSystem { model, eps, u0 };
    let t1 = 2.0 * us * mu2 / eps;
    let out = integrate_planar(&sys, 0.0, [x0, y0], t1, &icfg, false, None)?;
    let s = ExtendedState::new(out.z[0], out.z[1], u0 + eps * t1, 0.0);
    let (xh, yh, uh) = blowup_outer(&s, frame);
    let trunc = integrate_truncated(start, delta, cfg, false)?;
    let sign: i8 = if xh >= 0.0 { 1 } else { -1 };
    let (xi, sigma, _) = blowup_inner(&s, frame, model, sign)?;
    let measured = to_inner_action_angle(xi, sigma, uh, sign, frame, model)?;
    let ld = (1.0 / delta).ln();
    Ok(FullBlowupRun {
        eps,
        delta,
        mu: frame.mu,
        remainder_budget: mu2 * delta.powf(-2.5) * ld.powi(3),
        end: [xh, yh],
        truncated_end: trunc.end,
        endpoint_difference: (xh - trunc.end[0]).hypot(yh - trunc.end[1]),
        measured,
    })
}
