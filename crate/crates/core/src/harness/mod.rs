//! Scenario pipeline: weight, hypothesis checks, barriers, stabilized
//! envelope, then the four conclusions about the envelope (polar mass, lower
//! bound, boundedness off the support of `theta`, ratio limit) plus the
//! singularity-type comparison and the barrier sandwich.

pub mod config;

pub use config::{ScenarioConfig, ThetaSpec};

use crate::barrier::{
    build_subsolution, build_supersolution, default_gamma, superweight_check, superweight_shift, Barrier,
    BarrierSpec, SuperweightReport,
};
use crate::comparison::{dominance_check, geometric_levels};
use crate::error::{Error, Result};
use crate::grid::{distance_to_set, io, mass_near, Domain, MassSample, ScalarField};
use crate::envelope::{
    admissibility, make_obstacle, solve_envelope_stabilized, Admissibility, SolverSettings, StabilizationReport,
};
use crate::weights::{
    build_weight_with_floor, check_condition_one, check_condition_two, check_delta_regular, corollary_factors,
    dyadic_shells, floor_for, shell_of, EllipticFactors, HypothesisReport, ModelSubmanifold, Shell, WeightData,
};
use serde::Serialize;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

pub const RATIO_TOLERANCE: f64 = 0.1;
pub const MASS_TOLERANCE: f64 = 0.15;
/// Allowed rise of a per-shell supremum over the three deepest shells.
pub const GROWTH_TOLERANCE: f64 = 0.1;
pub const PROBE_FLOOR_FACTOR: f64 = 3.0;
/// Decrease of `min psi` across the probe shells that counts as divergence.
pub const PROBE_PSI_DROP: f64 = 3.0;
pub const MAX_MASS_CENTERS: usize = 64;
pub const CHECK_TOL: f64 = 1e-9;
pub const BARRIER_TOL: f64 = 1e-9;
/// Tolerance on the comparison hypotheses (`sup phi <= -1`, slope >= 1).
pub const COMPARISON_TOL: f64 = 0.1;
/// Mass below this is treated as unresolved.
pub const MASS_RESOLUTION: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Thresholds {
    pub ratio_tolerance: f64,
    pub mass_tolerance: f64,
    pub growth_tolerance: f64,
    pub probe_floor_factor: f64,
    pub probe_psi_drop: f64,
    pub theta_min: f64,
    pub comparison_tolerance: f64,
    pub sandwich_tolerance: f64,
}

/// Where a table row was computed: a dyadic shell in `h` (with the matching
/// distances to `V`) and the number of nodes used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShellGeometry {
    pub shell: usize,
    pub h_lo: f64,
    pub h_hi: f64,
    pub r_lo: f64,
    pub r_hi: f64,
    pub nodes: usize,
}

impl ShellGeometry {
    fn new(w: &WeightData, s: &Shell, nodes: usize) -> Self {
        let r = w.domain().radius();
        Self {
            shell: s.index,
            h_lo: s.h_lo,
            h_hi: s.h_hi,
            r_lo: r * s.h_lo.sqrt(),
            r_hi: r * s.h_hi.sqrt(),
            nodes,
        }
    }
}

/// Interior nodes where every field is finite, grouped by shell (rows with no
/// node are dropped).
fn group_by_shell(w: &WeightData, shells: &[Shell], keep: impl Fn(usize) -> bool) -> Vec<(Shell, Vec<usize>)> {
    let mut groups: Vec<(Shell, Vec<usize>)> = shells.iter().map(|s| (*s, Vec::new())).collect();
    let first = match shells.first() {
        Some(s) => s.index,
        None => return Vec::new(),
    };
    for i in w.domain().interior_nodes() {
        if w.psi.is_masked(i) || !keep(i) {
            continue;
        }
        let hv = w.h.values()[i];
        let j = shell_of(hv);
        if j < first || j - first >= groups.len() {
            continue;
        }
        let (s, v) = &mut groups[j - first];
        if hv >= s.h_lo && hv < s.h_hi {
            v.push(i);
        }
    }
    groups.retain(|(_, v)| !v.is_empty());
    groups
}

/// Shells used for asymptotic claims: those with `h >= 4 h_floor`.
pub fn admissible_shells(w: &WeightData) -> Vec<Shell> {
    dyadic_shells(4.0 * w.h_floor, false)
}

/// The last three values rise by at most `tol` above the first of them.
fn no_growth(values: &[f64], tol: f64) -> bool {
    if values.len() < 3 {
        return false;
    }
    let t = &values[values.len() - 3..];
    t[1].max(t[2]) <= t[0] + tol
}

#[derive(Debug, Clone, Serialize)]
pub struct RatioRow {
    #[serde(flatten)]
    pub geometry: ShellGeometry,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub max_deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RatioTable {
    pub rows: Vec<RatioRow>,
    pub theta_min: f64,
    pub deepest_deviation: f64,
    pub monotone: bool,
    pub passed: bool,
}

/// `u / (theta psi)` per shell over nodes with `theta >= theta_min`.
/// Passes when the maximal deviation from 1 is nonincreasing over the three
/// deepest shells and below the tolerance on the deepest.
pub fn ratio_profile(
    u: &ScalarField,
    w: &WeightData,
    theta: &ScalarField,
    shells: &[Shell],
    theta_min: f64,
) -> Result<RatioTable> {
    let keep = |i: usize| !u.is_masked(i) && theta.values()[i] >= theta_min && theta.values()[i] > 0.0;
    let mut rows = Vec::new();
    for (s, nodes) in group_by_shell(w, shells, keep) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &i in &nodes {
            let r = u.values()[i] / (theta.values()[i] * w.psi.values()[i]);
            lo = lo.min(r);
            hi = hi.max(r);
        }
        rows.push(RatioRow {
            geometry: ShellGeometry::new(w, &s, nodes.len()),
            min_ratio: lo,
            max_ratio: hi,
            max_deviation: (hi - 1.0).abs().max((lo - 1.0).abs()),
        });
    }
    let deepest_shell = shells.last().map(|s| s.index);
    if rows.last().map(|r| r.geometry.shell) != deepest_shell {
        return Err(Error::Empty(format!(
            "no node with theta >= {theta_min} on the deepest admissible shell: S_psi does not meet {{theta > 0}} on the grid"
        )));
    }
    let dev: Vec<f64> = rows.iter().map(|r| r.max_deviation).collect();
    let deepest = *dev.last().unwrap();
    let monotone = dev.len() >= 3 && dev[dev.len() - 3..].windows(2).all(|p| p[1] <= p[0]);
    Ok(RatioTable {
        rows,
        theta_min,
        deepest_deviation: deepest,
        monotone,
        passed: monotone && deepest < RATIO_TOLERANCE,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeRow {
    #[serde(flatten)]
    pub geometry: ShellGeometry,
    pub inf_u: f64,
    pub min_psi: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeTable {
    pub rows: Vec<ProbeRow>,
    /// Nodes kept must be this far from `{theta > 0}`.
    pub margin: f64,
    /// Range of the subsolution's bounded part on the probe region.
    pub bounded_range: f64,
    pub floor: f64,
    pub psi_drop: f64,
    pub bounded: bool,
    pub diverging: bool,
    pub passed: bool,
    pub skipped: Option<String>,
}

/// Infimum of `u` per shell over the interior of `{theta = 0}`, at distance
/// at least `margin` from `{theta > 0}`, shells down to the polar floor.
///
/// The floor is measured from the shallowest row: `inf_u(first) - min(3 R_F,
/// drop / 2)`, where `R_F` is the range of `sub_bounded` on the probe region
/// and `drop` is the decrease of `min psi` across the rows. The cap at half
/// the drop keeps the gate able to tell a bounded `u` from one that follows
/// `psi`.
pub fn boundedness_probe(
    u: &ScalarField,
    theta: &ScalarField,
    w: &WeightData,
    sub_bounded: &ScalarField,
    margin: f64,
) -> Result<ProbeTable> {
    let d = w.domain();
    let support: Vec<bool> = theta.values().iter().map(|&t| t > 0.0).collect();
    let dist = distance_to_set(d, &support);
    let keep = |i: usize| theta.values()[i] == 0.0 && dist[i] >= margin && !u.is_masked(i);
    let shells = dyadic_shells(w.h_floor, true);
    let groups = group_by_shell(w, &shells, keep);
    let mut table = ProbeTable {
        rows: Vec::new(),
        margin,
        bounded_range: 0.0,
        floor: f64::NEG_INFINITY,
        psi_drop: 0.0,
        bounded: true,
        diverging: false,
        passed: true,
        skipped: None,
    };
    if groups.is_empty() {
        table.skipped = Some(format!("no node of {{theta = 0}} at distance >= {margin} from supp theta"));
        return Ok(table);
    }
    let (mut blo, mut bhi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (s, nodes) in &groups {
        let mut inf_u = f64::INFINITY;
        let mut min_psi = f64::INFINITY;
        for &i in nodes {
            inf_u = inf_u.min(u.values()[i]);
            min_psi = min_psi.min(w.psi.values()[i]);
            if !sub_bounded.is_masked(i) {
                blo = blo.min(sub_bounded.values()[i]);
                bhi = bhi.max(sub_bounded.values()[i]);
            }
        }
        table.rows.push(ProbeRow {
            geometry: ShellGeometry::new(w, s, nodes.len()),
            inf_u,
            min_psi,
        });
    }
    table.bounded_range = if bhi >= blo { bhi - blo } else { 0.0 };
    let first = &table.rows[0];
    let last = table.rows.last().unwrap();
    table.psi_drop = first.min_psi - last.min_psi;
    table.floor = first.inf_u - (PROBE_FLOOR_FACTOR * table.bounded_range).min(0.5 * table.psi_drop);
    table.bounded = table.rows.iter().all(|r| r.inf_u >= table.floor);
    table.diverging = table.psi_drop >= PROBE_PSI_DROP;
    table.passed = table.rows.len() >= 2 && table.bounded && table.diverging;
    Ok(table)
}

#[derive(Debug, Clone, Serialize)]
pub struct MassRow {
    pub radius: f64,
    pub centers: usize,
    pub nodes: usize,
    pub mass_u: f64,
    pub mass_psi: f64,
    pub ratio: f64,
    /// Average of `theta^m` over the balls.
    pub theta_avg: f64,
    pub locally_constant: bool,
    pub inconclusive: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MassTable {
    pub rows: Vec<MassRow>,
    pub passed: bool,
}

/// Grid nodes within one spacing of `V`, subsampled evenly to at most
/// [`MAX_MASS_CENTERS`].
pub fn polar_centers(w: &WeightData) -> Vec<usize> {
    let d = w.domain();
    let r2 = d.radius() * d.radius();
    let dx2 = d.spacing() * d.spacing();
    let near: Vec<usize> = d
        .interior_nodes()
        .filter(|&i| d.has_box_stencil(i) && w.h.values()[i] * r2 <= dx2 * (1.0 + 1e-9))
        .collect();
    let stride = near.len().div_ceil(MAX_MASS_CENTERS).max(1);
    near.into_iter().step_by(stride).collect()
}

/// Ratio of the Hessian masses of `u` and `psi` near `V` against the local
/// average of `theta^m`. A row passes when the ratio is at most
/// `avg (1 + tol)` and, where `theta` is constant on the balls, within
/// `tol avg` of it; with `avg = 0` the bound is `tol` itself.
pub fn polar_mass_report(
    u: &ScalarField,
    w: &WeightData,
    theta: &ScalarField,
    m: usize,
    radii: &[f64],
) -> Result<MassTable> {
    let d = w.domain();
    let centers = polar_centers(w);
    if centers.is_empty() {
        return Err(Error::Empty("no grid node within one spacing of V".into()));
    }
    let mut rows = Vec::new();
    for &r in radii {
        if r < 4.0 * d.spacing() {
            return Err(Error::Domain(format!("mass radius {r} below four grid steps")));
        }
        let (mu, mp) = match (mass_near(u, m, &centers, r), mass_near(&w.psi, m, &centers, r)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(Error::Empty(_)), _) | (_, Err(Error::Empty(_))) => (MassSample::default(), MassSample::default()),
            (Err(e), _) | (_, Err(e)) => return Err(e),
        };
        let mut ball: Vec<usize> = Vec::new();
        for &c in &centers {
            let x = d.coords(c);
            ball.extend(d.nodes_within(&x[..d.real_dim()], r));
        }
        ball.sort_unstable();
        ball.dedup();
        ball.retain(|&i| d.is_interior(i));
        let (mut tmin, mut tmax, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for &i in &ball {
            let t = theta.values()[i];
            tmin = tmin.min(t);
            tmax = tmax.max(t);
            sum += t.powi(m as i32);
        }
        let avg = if ball.is_empty() { 0.0 } else { sum / ball.len() as f64 };
        let inconclusive = mp.nodes == 0 || mp.mass <= MASS_RESOLUTION;
        let ratio = if inconclusive { f64::NAN } else { mu.mass / mp.mass };
        let locally_constant = tmax - tmin <= 1e-6;
        let passed = if inconclusive {
            false
        } else if avg > 0.0 {
            ratio <= avg * (1.0 + MASS_TOLERANCE) && (!locally_constant || (ratio - avg).abs() <= MASS_TOLERANCE * avg)
        } else {
            ratio <= MASS_TOLERANCE
        };
        rows.push(MassRow {
            radius: r,
            centers: centers.len(),
            nodes: mu.nodes,
            mass_u: mu.mass,
            mass_psi: mp.mass,
            ratio,
            theta_avg: avg,
            locally_constant,
            inconclusive,
            passed,
        });
    }
    let conclusive: Vec<&MassRow> = rows.iter().filter(|r| !r.inconclusive).collect();
    let passed = !conclusive.is_empty() && conclusive.iter().all(|r| r.passed);
    Ok(MassTable { rows, passed })
}

/// Default mass radii: 0.4, 0.2 and 0.1 of `R`, keeping those of at least
/// four grid steps whose half-radius sphere clears the polar mask by a step;
/// if none qualifies, the smallest radius that does.
pub fn default_mass_radii(w: &WeightData) -> Vec<f64> {
    let d = w.domain();
    let min = (4.0 * d.spacing()).max(2.0 * (d.radius() * w.h_floor.sqrt() + d.spacing()));
    let v: Vec<f64> = [0.4, 0.2, 0.1].iter().map(|f| f * d.radius()).filter(|&r| r >= min).collect();
    if v.is_empty() {
        vec![min]
    } else {
        v
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GapRow {
    #[serde(flatten)]
    pub geometry: ShellGeometry,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SingularityReport {
    pub applicable: bool,
    /// `max(1 - delta - gt, -delta / 2)`; the check applies when `p` exceeds it.
    pub threshold: f64,
    /// Per shell, `sup |u - theta psi|`.
    pub rows: Vec<GapRow>,
    pub sup_gap: f64,
    pub passed: bool,
}

fn gap_rows(
    w: &WeightData,
    u: &ScalarField,
    f: impl Fn(usize) -> f64,
) -> Vec<GapRow> {
    group_by_shell(w, &admissible_shells(w), |i| !u.is_masked(i))
        .into_iter()
        .map(|(s, nodes)| GapRow {
            geometry: ShellGeometry::new(w, &s, nodes.len()),
            value: nodes.iter().map(|&i| f(i)).fold(f64::NEG_INFINITY, f64::max),
        })
        .collect()
}

/// `sup |u - theta psi|` per admissible shell; passes when it does not grow
/// over the three deepest shells.
pub fn singularity_type_check(u: &ScalarField, w: &WeightData, theta: &ScalarField) -> Result<SingularityReport> {
    let k = w.constants;
    let threshold = (1.0 - k.delta - k.gamma_tilde).max(-0.5 * k.delta);
    if !(w.p() > threshold) {
        return Ok(SingularityReport {
            applicable: false,
            threshold,
            rows: Vec::new(),
            sup_gap: f64::NAN,
            passed: true,
        });
    }
    let rows = gap_rows(w, u, |i| (u.values()[i] - theta.values()[i] * w.psi.values()[i]).abs());
    if rows.is_empty() {
        return Err(Error::Empty("no admissible shell".into()));
    }
    let values: Vec<f64> = rows.iter().map(|r| r.value).collect();
    Ok(SingularityReport {
        applicable: true,
        threshold,
        sup_gap: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        passed: no_growth(&values, GROWTH_TOLERANCE),
        rows,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LowerBoundTable {
    pub theta_max: f64,
    /// Per shell, `max((max theta) psi - u)`: the shift needed there.
    pub rows: Vec<GapRow>,
    /// Shift needed over all unmasked interior nodes.
    pub required_shift: f64,
    pub passed: bool,
}

/// `u >= (max theta) psi - C`: the least such `C`, overall and per shell.
pub fn lower_bound_margin(u: &ScalarField, w: &WeightData, theta: &ScalarField) -> Result<LowerBoundTable> {
    let d = w.domain();
    let tmax = d.interior_nodes().map(|i| theta.values()[i]).fold(0.0, f64::max);
    let need = |i: usize| tmax * w.psi.values()[i] - u.values()[i];
    let required = d
        .interior_nodes()
        .filter(|&i| !w.psi.is_masked(i) && !u.is_masked(i))
        .map(need)
        .fold(f64::NEG_INFINITY, f64::max);
    let rows = gap_rows(w, u, need);
    let values: Vec<f64> = rows.iter().map(|r| r.value).collect();
    Ok(LowerBoundTable {
        theta_max: tmax,
        passed: required.is_finite() && no_growth(&values, GROWTH_TOLERANCE),
        required_shift: required.max(0.0),
        rows,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SideReport {
    pub shift: f64,
    pub nodes_checked: usize,
    pub violations: usize,
    pub max_excess: f64,
    pub worst_node: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SandwichReport {
    /// `F - s <= u` with `s` the least shift putting `F` under the obstacle
    /// and the zero boundary values.
    pub lower: SideReport,
    /// `u <= G + t + 1`, `t` from [`superweight_shift`].
    pub upper: SideReport,
    /// Slope of `u - 1` against `G + t` on its sublevels, when available.
    pub comparison_slope: Option<f64>,
    /// Why the comparison hypotheses could not be evaluated or failed.
    pub comparison_note: Option<String>,
    pub tol: f64,
    pub passed: bool,
}

fn side(nodes: impl Iterator<Item = usize>, excess: impl Fn(usize) -> f64, shift: f64, tol: f64) -> SideReport {
    let mut r = SideReport {
        shift,
        nodes_checked: 0,
        violations: 0,
        max_excess: f64::NEG_INFINITY,
        worst_node: None,
    };
    for i in nodes {
        let e = excess(i);
        r.nodes_checked += 1;
        if e > r.max_excess {
            r.max_excess = e;
            r.worst_node = Some(i);
        }
        if e > tol {
            r.violations += 1;
        }
    }
    r
}

/// Pointwise sandwich of the envelope `u` (solved with shift `c`) between the
/// shifted barriers.
pub fn sandwich_check(
    u: &ScalarField,
    w: &WeightData,
    theta: &ScalarField,
    c: f64,
    sub: &ScalarField,
    sup: &ScalarField,
    tol: f64,
) -> Result<SandwichReport> {
    let d = w.domain().clone();
    let cap = |i: usize| {
        if d.is_interior(i) {
            (theta.values()[i] * w.psi.values()[i] + c).min(0.0)
        } else {
            0.0
        }
    };
    let s = (0..d.num_nodes())
        .filter(|&i| !sub.is_masked(i) && !w.psi.is_masked(i))
        .map(|i| sub.values()[i] - cap(i))
        .fold(0.0, f64::max);
    let nodes_for =
        |f: &ScalarField| -> Vec<usize> { d.interior_nodes().filter(|&i| !f.is_masked(i) && !u.is_masked(i)).collect() };
    let lower = side(nodes_for(sub).into_iter(), |i| sub.values()[i] - s - u.values()[i], s, tol);
    let t = superweight_shift(sup)?;
    let psi_bar = sup.map(|_, v| v + t);
    let upper = side(nodes_for(sup).into_iter(), |i| u.values()[i] - psi_bar.values()[i] - 1.0, t, tol);
    let phi = u.map(|_, v| v - 1.0);
    let (comparison_slope, comparison_note) = match geometric_levels(&psi_bar, 12, 0.0)
        .and_then(|levels| dominance_check(&phi, &psi_bar, 0.0, &levels, COMPARISON_TOL))
    {
        Ok(rep) => (Some(rep.slope), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(SandwichReport {
        passed: lower.violations == 0 && upper.violations == 0,
        lower,
        upper,
        comparison_slope,
        comparison_note,
        tol,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct WeightSummary {
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub p: f64,
    pub intervals: usize,
    pub spacing: f64,
    pub h_floor: f64,
    pub check_h_floor: f64,
    pub psi_shift: f64,
    pub psi_min: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BarrierSummary {
    pub gamma: f64,
    pub ell: usize,
    pub q: Vec<f64>,
    pub a: Vec<f64>,
    pub buffer: f64,
    pub super_a: f64,
    pub subsolution: Barrier,
    pub supersolution: Barrier,
    pub superweight_shift: f64,
    pub superweight: SuperweightReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub name: String,
    pub config: ScenarioConfig,
    pub thresholds: Thresholds,
    pub weight: WeightSummary,
    pub hypotheses: Vec<HypothesisReport>,
    pub barriers: BarrierSummary,
    pub stabilization: StabilizationReport,
    pub admissibility: Admissibility,
    pub polar_mass: MassTable,
    pub lower_bound: LowerBoundTable,
    pub boundedness: ProbeTable,
    pub ratio: Option<RatioTable>,
    pub ratio_note: Option<String>,
    pub singularity: SingularityReport,
    pub sandwich: SandwichReport,
    pub passed: bool,
}

impl VerificationReport {
    /// `(check, passed)` for every applicable item, in report order.
    pub fn verdicts(&self) -> Vec<(&'static str, bool)> {
        let mut v = vec![
            ("hypotheses", self.hypotheses.iter().all(|h| h.passed)),
            ("superweight", self.barriers.superweight.passed),
            ("stabilization", self.stabilization.stabilized),
            ("polar_mass", self.polar_mass.passed),
            ("lower_bound", self.lower_bound.passed),
        ];
        if self.boundedness.skipped.is_none() {
            v.push(("boundedness", self.boundedness.passed));
        }
        if let Some(r) = &self.ratio {
            v.push(("ratio", r.passed));
        }
        if self.singularity.applicable {
            v.push(("singularity", self.singularity.passed));
        }
        v.push(("sandwich", self.sandwich.passed));
        v
    }
}

/// Fields produced by a scenario run.
pub struct ScenarioFields {
    pub weight: WeightData,
    pub theta: ScalarField,
    pub u: ScalarField,
    pub per_c: Vec<ScalarField>,
    pub sub: Barrier,
    pub sup: Barrier,
}

pub fn scenario_domain(cfg: &ScenarioConfig) -> Result<Arc<Domain>> {
    cfg.validate()?;
    Domain::ball(cfg.n, cfg.radius, cfg.intervals)
}

pub fn scenario_weight(cfg: &ScenarioConfig, d: &Arc<Domain>, floor_cells: f64) -> Result<WeightData> {
    let v = ModelSubmanifold::new(cfg.n, cfg.k)?;
    build_weight_with_floor(v, cfg.m, d.clone(), floor_for(d, floor_cells))
}

/// Delta-regularity and the two kernel conditions on the weight masked at the
/// checker floor.
pub fn check_hypotheses(cfg: &ScenarioConfig, d: &Arc<Domain>) -> Result<Vec<HypothesisReport>> {
    let w = scenario_weight(cfg, d, cfg.check_floor_cells)?;
    let k = w.constants;
    let factors = corollary_factors(&w, k.gamma_tilde)?;
    Ok(vec![
        check_delta_regular(&w, cfg.m, k.epsilon, k.delta, CHECK_TOL)?,
        check_condition_one(&w, cfg.m, k.c, k.gamma_tilde, CHECK_TOL)?,
        check_condition_two(&w, &factors, cfg.m, k.c, k.gamma_tilde, CHECK_TOL)?,
    ])
}

pub fn default_buffer(d: &Domain) -> f64 {
    4.0 * d.spacing()
}

fn supersolution_factors(w: &WeightData) -> Result<EllipticFactors> {
    corollary_factors(w, w.constants.gamma_tilde)
}

pub fn scenario_barriers(cfg: &ScenarioConfig, w: &WeightData, theta: &ScalarField) -> Result<BarrierSummary> {
    let d = w.domain();
    let gamma = cfg.gamma.unwrap_or_else(|| default_gamma(&w.constants));
    let buffer = cfg.buffer.unwrap_or_else(|| default_buffer(d));
    let spec = BarrierSpec::with_ell(w, theta, gamma, cfg.a.clone(), buffer, cfg.ell)?;
    let sub = build_subsolution(w, &spec, BARRIER_TOL)?;
    let factors = supersolution_factors(w)?;
    let sup = build_supersolution(w, theta, gamma, cfg.super_a, &factors, BARRIER_TOL)?;
    let t = superweight_shift(&sup.field)?;
    let superweight = superweight_check(&sup.field.map(|_, v| v + t), &factors, w.m, BARRIER_TOL)?;
    Ok(BarrierSummary {
        gamma,
        ell: spec.ell,
        q: spec.q.clone(),
        a: spec.a.clone(),
        buffer,
        super_a: cfg.super_a,
        subsolution: sub,
        supersolution: sup,
        superweight_shift: t,
        superweight,
    })
}

pub fn solver_settings(cfg: &ScenarioConfig) -> SolverSettings {
    SolverSettings {
        tol: cfg.tol,
        max_sweeps: cfg.max_sweeps,
        omega: cfg.omega,
    }
}

pub fn scenario_envelope(
    cfg: &ScenarioConfig,
    w: &WeightData,
    theta: &ScalarField,
) -> Result<(ScalarField, Vec<ScalarField>, StabilizationReport)> {
    solve_envelope_stabilized(w, theta, cfg.m, &cfg.c_list, solver_settings(cfg), cfg.stab_tol)
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<VerificationReport> {
    run_scenario_full(cfg).map(|(r, _)| r)
}

/// The whole pipeline; errors carry the stage they came from.
pub fn run_scenario_full(cfg: &ScenarioConfig) -> Result<(VerificationReport, ScenarioFields)> {
    let d = scenario_domain(cfg).map_err(|e| e.at_stage("domain"))?;
    let w = scenario_weight(cfg, &d, cfg.floor_cells).map_err(|e| e.at_stage("weight"))?;
    let hypotheses = check_hypotheses(cfg, &d).map_err(|e| e.at_stage("checkers"))?;
    let theta = cfg.theta.field(&d).map_err(|e| e.at_stage("theta"))?;
    let barriers = scenario_barriers(cfg, &w, &theta).map_err(|e| e.at_stage("barriers"))?;
    let (u, per_c, stabilization) = scenario_envelope(cfg, &w, &theta).map_err(|e| e.at_stage("envelope"))?;
    let c_last = *cfg.c_list.last().unwrap();
    let verify = |e: Error| e.at_stage("verify");
    let prob = make_obstacle(&w, &theta, c_last, cfg.m).map_err(verify)?;
    let adm = admissibility(&u, &prob);
    let radii = cfg.mass_radii.clone().unwrap_or_else(|| default_mass_radii(&w));
    let polar_mass = polar_mass_report(&u, &w, &theta, cfg.m, &radii).map_err(verify)?;
    let lower_bound = lower_bound_margin(&u, &w, &theta).map_err(verify)?;
    let sub_bounded = bounded_part(&barriers.subsolution.field, &w, &theta);
    let boundedness =
        boundedness_probe(&u, &theta, &w, &sub_bounded, 2.0 * barriers.buffer).map_err(verify)?;
    let (ratio, ratio_note) = match ratio_profile(&u, &w, &theta, &admissible_shells(&w), cfg.theta_min) {
        Ok(t) => (Some(t), None),
        Err(Error::Empty(msg)) => (None, Some(msg)),
        Err(e) => return Err(verify(e)),
    };
    let singularity = singularity_type_check(&u, &w, &theta).map_err(verify)?;
    let solver_tol = stabilization.diagnostics.iter().map(|g| g.tol).fold(0.0, f64::max);
    let sandwich_tol = 1e3 * solver_tol;
    let sandwich = sandwich_check(
        &u,
        &w,
        &theta,
        c_last,
        &barriers.subsolution.field,
        &barriers.supersolution.field,
        sandwich_tol,
    )
    .map_err(verify)?;
    let check_w_floor = floor_for(&d, cfg.check_floor_cells);
    let mut report = VerificationReport {
        name: cfg.name.clone(),
        config: cfg.clone(),
        thresholds: Thresholds {
            ratio_tolerance: RATIO_TOLERANCE,
            mass_tolerance: MASS_TOLERANCE,
            growth_tolerance: GROWTH_TOLERANCE,
            probe_floor_factor: PROBE_FLOOR_FACTOR,
            probe_psi_drop: PROBE_PSI_DROP,
            theta_min: cfg.theta_min,
            comparison_tolerance: COMPARISON_TOL,
            sandwich_tolerance: sandwich_tol,
        },
        weight: WeightSummary {
            n: cfg.n,
            k: cfg.k,
            m: cfg.m,
            p: w.p(),
            intervals: cfg.intervals,
            spacing: d.spacing(),
            h_floor: w.h_floor,
            check_h_floor: check_w_floor,
            psi_shift: w.shift,
            psi_min: w.psi.min_finite().unwrap_or(f64::NAN),
        },
        hypotheses,
        barriers,
        stabilization,
        admissibility: adm,
        polar_mass,
        lower_bound,
        boundedness,
        ratio,
        ratio_note,
        singularity,
        sandwich,
        passed: false,
    };
    report.passed = report.verdicts().iter().all(|(_, ok)| *ok);
    let sub = report.barriers.subsolution.clone();
    let sup = report.barriers.supersolution.clone();
    Ok((
        report,
        ScenarioFields {
            weight: w,
            theta,
            u,
            per_c,
            sub,
            sup,
        },
    ))
}

/// `F - theta K_p(h)`: the subsolution without its singular term.
pub fn bounded_part(sub: &ScalarField, w: &WeightData, theta: &ScalarField) -> ScalarField {
    sub.map(|i, v| v - theta.values()[i] * w.kernel.k_pos(w.h.values()[i]))
}

fn f(v: f64) -> String {
    if v.is_finite() {
        format!("{v:e}")
    } else {
        String::new()
    }
}

fn geometry_cells(g: &ShellGeometry) -> String {
    format!("{},{},{},{},{},{}", g.shell, f(g.h_lo), f(g.h_hi), f(g.r_lo), f(g.r_hi), g.nodes)
}

const SHELL_HEADER: &str = "shell,h_lo,h_hi,r_lo,r_hi,nodes";

/// Writes `report.json` and one CSV per table into `dir`.
pub fn write_report(report: &VerificationReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(report)?)?;
    let mut s = format!("{SHELL_HEADER},min_ratio,max_ratio,max_deviation\n");
    for r in report.ratio.iter().flat_map(|t| &t.rows) {
        let _ = writeln!(s, "{},{},{},{}", geometry_cells(&r.geometry), f(r.min_ratio), f(r.max_ratio), f(r.max_deviation));
    }
    std::fs::write(dir.join("ratio.csv"), s)?;
    let mut s = format!("{SHELL_HEADER},inf_u,min_psi\n");
    for r in &report.boundedness.rows {
        let _ = writeln!(s, "{},{},{}", geometry_cells(&r.geometry), f(r.inf_u), f(r.min_psi));
    }
    std::fs::write(dir.join("probe.csv"), s)?;
    let mut s = String::from("radius,centers,nodes,mass_u,mass_psi,ratio,theta_avg,locally_constant,inconclusive,passed\n");
    for r in &report.polar_mass.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            f(r.radius),
            r.centers,
            r.nodes,
            f(r.mass_u),
            f(r.mass_psi),
            f(r.ratio),
            f(r.theta_avg),
            r.locally_constant,
            r.inconclusive,
            r.passed
        );
    }
    std::fs::write(dir.join("mass.csv"), s)?;
    for (name, rows) in [("singularity.csv", &report.singularity.rows), ("lower_bound.csv", &report.lower_bound.rows)] {
        let mut s = format!("{SHELL_HEADER},value\n");
        for r in rows {
            let _ = writeln!(s, "{},{}", geometry_cells(&r.geometry), f(r.value));
        }
        std::fs::write(dir.join(name), s)?;
    }
    let mut s = String::from("pair,shell,gap,nodes\n");
    for (k, gaps) in report.stabilization.shell_gaps.iter().enumerate() {
        for g in gaps {
            let _ = writeln!(s, "{k},{},{},{}", g.shell, f(g.gap), g.nodes);
        }
    }
    std::fs::write(dir.join("stabilization.csv"), s)?;
    Ok(())
}

/// Grids up to this many nodes are also written as CSV.
pub const CSV_FIELD_LIMIT: usize = 1 << 20;

/// Writes `field_<name>.bin` (and `.csv` for small grids).
pub fn write_field(field: &ScalarField, dir: &Path, name: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    io::save_binary(field, &dir.join(format!("field_{name}.bin")))?;
    if field.domain().num_nodes() <= CSV_FIELD_LIMIT {
        io::save_csv(field, &dir.join(format!("field_{name}.csv")))?;
    }
    Ok(())
}

pub fn write_fields(fields: &ScenarioFields, dir: &Path) -> Result<()> {
    write_field(&fields.u, dir, "u")?;
    write_field(&fields.weight.psi, dir, "psi")?;
    write_field(&fields.theta, dir, "theta")?;
    write_field(&fields.sub.field, dir, "sub")?;
    write_field(&fields.sup.field, dir, "super")
}
