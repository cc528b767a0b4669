//! Discrete envelopes `sup { phi m-sh : phi <= min(0, theta psi + C) }`.
//!
//! At a node the complex Hessian is `H' - (u / dx^2) Id`, where `H'` is
//! assembled with the centre value set to zero, so the node is m-subharmonic
//! iff `u <= v* = dx^2 * max_shift(H')`. The solver iterates
//! `u <- min(obstacle, v*)` with red-black ordering. Updates within one colour
//! read only pre-pass values, so the cross-stencil neighbours (same colour) are
//! lagged by one half-sweep.
//!
//! Two phases: an optional projected over-relaxation phase that brings the
//! iterate close to the fixpoint, then plain monotone sweeps `u <- min(u, v*)`
//! that never increase any value and carry the convergence certificate.
//!
//! Polar nodes (`-inf` obstacle) are capped at `theta * K_p(h)` instead.

use crate::cone::{elementary_symmetric, max_shift_for_eigenvalues};
use crate::error::{Error, Result};
use crate::grid::{assemble_hessian, Domain, ScalarField};
use crate::weights::{dyadic_shell_index, WeightData};
use serde::Serialize;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverSettings {
    /// Absolute stopping tolerance on the max nodewise change per sweep;
    /// `None` means `1e-8` times the obstacle's value range.
    pub tol: Option<f64>,
    pub max_sweeps: usize,
    /// Over-relaxation factor of the first phase; `None` picks
    /// `2 / (1 + sin(pi / N))` (capped at 1.4 for m = 2), `Some(1.0)` disables the phase.
    pub omega: Option<f64>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: None,
            max_sweeps: 200_000,
            omega: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnvelopeProblem {
    /// `min(0, theta psi + C)` with `-inf` on polar nodes where `theta > 0`.
    pub obstacle: ScalarField,
    /// Finite cap used by the solver: the obstacle with `-inf` replaced by the floor value.
    pub upper: Vec<f64>,
    pub m: usize,
    pub c_shift: f64,
    /// `K_p(h_floor)`, or the cap used for custom obstacles.
    pub floor_value: f64,
    pub settings: SolverSettings,
}

impl EnvelopeProblem {
    /// Problem for an explicit obstacle; `-inf` entries are capped at `floor_caps[i]`.
    pub fn from_obstacle(obstacle: ScalarField, floor_caps: &[f64], m: usize, floor_value: f64) -> Result<Self> {
        let d = obstacle.domain().clone();
        if floor_caps.len() != d.num_nodes() {
            return Err(Error::DimensionMismatch(floor_caps.len(), d.num_nodes()));
        }
        if m == 0 || m > d.n() {
            return Err(Error::OutOfRange(format!("m = {m}")));
        }
        let upper: Vec<f64> = (0..d.num_nodes())
            .map(|i| {
                let v = obstacle.values()[i];
                if v == f64::NEG_INFINITY {
                    floor_caps[i]
                } else {
                    v
                }
            })
            .collect();
        if let Some(bad) = upper.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("no finite cap at node {bad}")));
        }
        if let Some(mx) = obstacle.max_finite() {
            if mx > 0.0 {
                return Err(Error::Domain(format!("obstacle exceeds 0 (max {mx})")));
            }
        }
        Ok(Self {
            obstacle,
            upper,
            m,
            c_shift: 0.0,
            floor_value,
            settings: SolverSettings::default(),
        })
    }

    pub fn domain(&self) -> &Arc<Domain> {
        self.obstacle.domain()
    }

    /// Largest magnitude of the solver cap over interior nodes.
    pub fn value_range(&self) -> f64 {
        let d = self.domain();
        d.interior_nodes()
            .map(|i| self.upper[i].abs())
            .fold(0.0, f64::max)
    }

    pub fn effective_tol(&self) -> f64 {
        self.settings
            .tol
            .unwrap_or_else(|| 1e-8 * self.value_range().max(1.0))
    }
}

fn check_theta(theta: &ScalarField, d: &Arc<Domain>) -> Result<()> {
    if theta.values().len() != d.num_nodes() {
        return Err(Error::DimensionMismatch(theta.values().len(), d.num_nodes()));
    }
    if let Some(bad) = theta.values().iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::Domain(format!("theta value {bad} outside [0, 1]")));
    }
    Ok(())
}

/// Smallest weight value used for caps: a quarter cell, `(dx / 2R)^2`.
pub fn cell_floor(d: &Domain) -> f64 {
    (0.5 * d.spacing() / d.radius()).powi(2)
}

/// `min(0, theta psi + C)`; polar nodes get `-inf` where `theta > 0` and 0
/// where `theta = 0`. The solver caps a polar node at `theta K_p(h)` (with `h`
/// floored at [`cell_floor`]), the unshifted kernel, independent of `C`.
pub fn make_obstacle(w: &WeightData, theta: &ScalarField, c: f64, m: usize) -> Result<EnvelopeProblem> {
    let d = w.domain().clone();
    check_theta(theta, &d)?;
    if !(c >= 0.0) {
        return Err(Error::Domain(format!("shift C = {c} must be >= 0")));
    }
    let floor_value = w.kernel.k_pos(w.h_floor);
    let h_cell = cell_floor(&d);
    let mut values = Vec::with_capacity(d.num_nodes());
    let mut mask = Vec::with_capacity(d.num_nodes());
    let mut caps = Vec::with_capacity(d.num_nodes());
    for i in 0..d.num_nodes() {
        let t = theta.values()[i];
        if w.psi.is_masked(i) {
            if t > 0.0 {
                values.push(f64::NEG_INFINITY);
                mask.push(true);
            } else {
                values.push(0.0);
                mask.push(false);
            }
            caps.push((t * w.kernel.k_pos(w.h.values()[i].max(h_cell))).min(0.0));
        } else {
            values.push((t * w.psi.values()[i] + c).min(0.0));
            mask.push(false);
            caps.push(0.0);
        }
    }
    let obstacle = ScalarField::from_parts(d, values, mask)?;
    let mut prob = EnvelopeProblem::from_obstacle(obstacle, &caps, m, floor_value)?;
    prob.c_shift = c;
    Ok(prob)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveDiagnostics {
    pub omega: f64,
    pub accel_sweeps: usize,
    pub monotone_sweeps: usize,
    pub residual: f64,
    pub tol: f64,
    /// Max nodewise change per sweep, both phases in order.
    pub residual_history: Vec<f64>,
    /// Largest increase of any node in any monotone sweep (never positive).
    pub max_increase: f64,
    pub floor_value: f64,
    pub c_shift: f64,
}

#[derive(Clone, Copy)]
struct Geometry {
    n: usize,
    m: usize,
    s: [usize; 4],
}

impl Geometry {
    fn new(d: &Domain, m: usize) -> Self {
        let mut s = [0; 4];
        for (a, sa) in s.iter_mut().enumerate().take(d.real_dim()) {
            *sa = d.stride(a);
        }
        Self { n: d.n(), m, s }
    }

    /// `dx^2 * max_shift(H')` with the centre value excluded.
    #[inline(always)]
    fn target(&self, u: &[f64], i: usize) -> f64 {
        let s = &self.s;
        let plane1 = u[i + s[0]] + u[i - s[0]] + u[i + s[1]] + u[i - s[1]];
        if self.n == 1 {
            return 0.25 * plane1;
        }
        let plane2 = u[i + s[2]] + u[i - s[2]] + u[i + s[3]] + u[i - s[3]];
        if self.m == 1 {
            return 0.125 * (plane1 + plane2);
        }
        let cross = |a: usize, b: usize| -> f64 {
            0.25 * (u[i + a + b] - u[i + a - b] - u[i + b - a] + u[i - a - b])
        };
        let re = 0.25 * (cross(s[0], s[2]) + cross(s[1], s[3]));
        let im = 0.25 * (cross(s[0], s[3]) - cross(s[1], s[2]));
        let (a, b) = (0.25 * plane1, 0.25 * plane2);
        let half = 0.5 * (a - b);
        0.5 * (a + b) - (half * half + re * re + im * im).sqrt()
    }
}

struct Sweeper<'a> {
    geom: Geometry,
    colors: [Vec<usize>; 2],
    upper: &'a [f64],
    buf: Vec<f64>,
}

impl<'a> Sweeper<'a> {
    fn new(d: &Domain, m: usize, upper: &'a [f64]) -> Self {
        let mut colors = [Vec::new(), Vec::new()];
        for i in d.interior_nodes() {
            let mi = d.multi_index(i);
            let parity = mi[..d.real_dim()].iter().sum::<usize>() % 2;
            colors[parity].push(i);
        }
        let cap = colors[0].len().max(colors[1].len());
        Self {
            geom: Geometry::new(d, m),
            colors,
            upper,
            buf: vec![0.0; cap],
        }
    }

    /// One over-relaxed projected sweep; returns the max absolute change.
    fn relaxed(&mut self, u: &mut [f64], omega: f64) -> f64 {
        let mut change = 0.0f64;
        for c in 0..2 {
            let nodes = &self.colors[c];
            for (t, &i) in nodes.iter().enumerate() {
                let old = u[i];
                let v = old + omega * (self.geom.target(u, i) - old);
                self.buf[t] = v.min(self.upper[i]);
            }
            for (t, &i) in nodes.iter().enumerate() {
                change = change.max((self.buf[t] - u[i]).abs());
                u[i] = self.buf[t];
            }
        }
        change
    }

    /// One monotone sweep `u <- min(u, v*)`; returns (max decrease, max increase).
    fn monotone(&mut self, u: &mut [f64]) -> (f64, f64) {
        let mut decrease = 0.0f64;
        let mut increase = f64::NEG_INFINITY;
        for c in 0..2 {
            let nodes = &self.colors[c];
            for (t, &i) in nodes.iter().enumerate() {
                self.buf[t] = u[i].min(self.geom.target(u, i));
            }
            for (t, &i) in nodes.iter().enumerate() {
                let delta = self.buf[t] - u[i];
                decrease = decrease.max(-delta);
                increase = increase.max(delta);
                u[i] = self.buf[t];
            }
        }
        (decrease, increase)
    }
}

/// Optimal Poisson factor for m = 1. The m = 2 update is nonsmooth in the
/// cross terms and diverges above about 1.6, so it is capped at 1.4.
fn auto_omega(d: &Domain, m: usize) -> f64 {
    let n = (d.nodes_per_axis() - 1) as f64;
    let w = 2.0 / (1.0 + (std::f64::consts::PI / n).sin());
    if m > 1 {
        w.min(1.4)
    } else {
        w
    }
}

/// Discrete envelope starting from the obstacle.
pub fn solve_envelope(prob: &EnvelopeProblem) -> Result<(ScalarField, SolveDiagnostics)> {
    solve_from(prob, None)
}

/// Warm start from `init`, clipped to the obstacle.
pub fn solve_envelope_from(prob: &EnvelopeProblem, init: &ScalarField) -> Result<(ScalarField, SolveDiagnostics)> {
    if init.values().len() != prob.upper.len() {
        return Err(Error::DimensionMismatch(init.values().len(), prob.upper.len()));
    }
    solve_from(prob, Some(init.values()))
}

fn solve_from(prob: &EnvelopeProblem, init: Option<&[f64]>) -> Result<(ScalarField, SolveDiagnostics)> {
    let d = prob.domain().clone();
    let tol = prob.effective_tol();
    let omega = prob.settings.omega.unwrap_or_else(|| auto_omega(&d, prob.m));
    if !(omega > 0.0 && omega < 2.0) {
        return Err(Error::Domain(format!("relaxation factor {omega} outside (0, 2)")));
    }
    let mut u = vec![0.0; d.num_nodes()];
    for i in d.interior_nodes() {
        let start = init.map_or(prob.upper[i], |v| {
            let x = v[i];
            if x.is_finite() {
                x
            } else {
                prob.upper[i]
            }
        });
        u[i] = start.min(prob.upper[i]);
    }
    let mut sweeper = Sweeper::new(&d, prob.m, &prob.upper);
    let mut history = Vec::new();
    let max_sweeps = prob.settings.max_sweeps;
    let mut accel_sweeps = 0;
    if omega != 1.0 {
        // The relaxed phase stops a little short of the final tolerance so the
        // monotone phase has something left to certify.
        let target = 0.1 * tol;
        loop {
            let r = sweeper.relaxed(&mut u, omega);
            history.push(r);
            accel_sweeps += 1;
            if r <= target {
                break;
            }
            if accel_sweeps >= max_sweeps {
                return Err(Error::NonConvergence {
                    sweeps: accel_sweeps,
                    residual: r,
                    history,
                });
            }
        }
    }
    let mut monotone_sweeps = 0;
    let mut max_increase = f64::NEG_INFINITY;
    let residual = loop {
        let (dec, inc) = sweeper.monotone(&mut u);
        history.push(dec);
        monotone_sweeps += 1;
        max_increase = max_increase.max(inc);
        if dec <= tol {
            break dec;
        }
        if accel_sweeps + monotone_sweeps >= max_sweeps {
            return Err(Error::NonConvergence {
                sweeps: accel_sweeps + monotone_sweeps,
                residual: dec,
                history,
            });
        }
    };
    let mask = prob.obstacle.mask().to_vec();
    let field = ScalarField::from_parts(d, u, mask)?;
    Ok((
        field,
        SolveDiagnostics {
            omega,
            accel_sweeps,
            monotone_sweeps,
            residual,
            tol,
            residual_history: history,
            max_increase,
            floor_value: prob.floor_value,
            c_shift: prob.c_shift,
        },
    ))
}

/// Feasibility of a candidate envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Admissibility {
    /// `max(u - cap)` over interior nodes; nonpositive when feasible.
    pub obstacle_excess: f64,
    /// Worst normalized `sigma_k` margin of the discrete Hessian over interior nodes.
    pub cone_margin: f64,
    pub worst_node: usize,
}

pub fn admissibility(u: &ScalarField, prob: &EnvelopeProblem) -> Admissibility {
    let d = prob.domain();
    let mut excess = f64::NEG_INFINITY;
    let mut margin = f64::INFINITY;
    let mut worst = 0;
    for i in d.interior_nodes() {
        excess = excess.max(u.values()[i] - prob.upper[i]);
        let h = assemble_hessian(d, i, |j| u.values()[j]);
        let lam = h.eigenvalues();
        let e = elementary_symmetric(&lam);
        let scale = 1.0 + lam.iter().fold(0.0f64, |a, l| a.max(l.abs()));
        for (k, &s) in e.iter().enumerate().take(prob.m + 1).skip(1) {
            let v = s / scale.powi(k as i32);
            if v < margin {
                margin = v;
                worst = i;
            }
        }
    }
    Admissibility {
        obstacle_excess: excess,
        cone_margin: margin,
        worst_node: worst,
    }
}

/// The largest value the node could take with its neighbours fixed, through
/// the generic cone routine; used to cross-check the specialized update.
pub fn node_target(u: &ScalarField, m: usize, idx: usize) -> f64 {
    let d = u.domain();
    let dx2 = d.spacing() * d.spacing();
    let h = assemble_hessian(d, idx, |j| if j == idx { 0.0 } else { u.values()[j] });
    max_shift_for_eigenvalues(&h.eigenvalues(), m, 1.0 / dx2, 1e-14)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShellGap {
    pub shell: usize,
    pub gap: f64,
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilizationReport {
    pub c_values: Vec<f64>,
    pub diagnostics: Vec<SolveDiagnostics>,
    /// `max(u_{C_i} - u_{C_{i+1}})` per consecutive pair; nonpositive up to solver error.
    pub monotone_violation: Vec<f64>,
    /// Per consecutive pair, sup-norm gap on each dyadic shell in `h`.
    pub shell_gaps: Vec<Vec<ShellGap>>,
    pub tol: f64,
    pub stabilized: bool,
}

/// Solves for each shift in `c_list` (warm-starting from `u_{C_prev} + (C - C_prev)`,
/// which lies above `u_C`), checks monotonicity in `C`, and measures the gap
/// between the last two solutions per dyadic shell.
pub fn solve_envelope_stabilized(
    w: &WeightData,
    theta: &ScalarField,
    m: usize,
    c_list: &[f64],
    settings: SolverSettings,
    tol: f64,
) -> Result<(ScalarField, Vec<ScalarField>, StabilizationReport)> {
    if c_list.len() < 3 {
        return Err(Error::Domain(format!("need at least 3 shifts, got {}", c_list.len())));
    }
    if c_list.windows(2).any(|p| !(p[1] > p[0])) {
        return Err(Error::Domain("shift list must be increasing".into()));
    }
    let d = w.domain().clone();
    let mut fields: Vec<ScalarField> = Vec::with_capacity(c_list.len());
    let mut diags = Vec::with_capacity(c_list.len());
    for (k, &c) in c_list.iter().enumerate() {
        let mut prob = make_obstacle(w, theta, c, m)?;
        prob.settings = settings;
        let (u, diag) = if k == 0 {
            solve_envelope(&prob)?
        } else {
            let lift = c - c_list[k - 1];
            let init = fields[k - 1].map(|_, v| v + lift);
            solve_envelope_from(&prob, &init)?
        };
        fields.push(u);
        diags.push(diag);
    }
    let cross_tol = 1e3 * diags.iter().map(|g| g.tol).fold(0.0, f64::max);
    let mut violations = Vec::new();
    let mut gaps = Vec::new();
    let shells = dyadic_shell_index(w);
    for pair in fields.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let mut viol = f64::NEG_INFINITY;
        let mut per: Vec<ShellGap> = Vec::new();
        for i in d.interior_nodes() {
            let diff = a.values()[i] - b.values()[i];
            viol = viol.max(diff);
            if w.psi.is_masked(i) {
                continue;
            }
            let s = shells(i);
            while per.len() <= s {
                per.push(ShellGap {
                    shell: per.len(),
                    gap: 0.0,
                    nodes: 0,
                });
            }
            per[s].gap = per[s].gap.max(diff.abs());
            per[s].nodes += 1;
        }
        violations.push(viol);
        gaps.push(per);
    }
    if let Some(&worst) = violations.iter().max_by(|a, b| a.partial_cmp(b).unwrap()) {
        if worst > cross_tol {
            return Err(Error::SolverInconsistency(worst));
        }
    }
    let stabilized = gaps
        .last()
        .map(|g| g.iter().all(|s| s.gap < tol))
        .unwrap_or(false);
    let report = StabilizationReport {
        c_values: c_list.to_vec(),
        diagnostics: diags,
        monotone_violation: violations,
        shell_gaps: gaps,
        tol,
        stabilized,
    };
    let last = fields.last().unwrap().clone();
    Ok((last, fields, report))
}
