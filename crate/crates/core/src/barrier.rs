//! Explicit barriers for the weighted envelope.
//!
//! Subsolution: `theta K_p(h) + sum_j a_j theta_j K_{q_j}(h) + C rho`, with
//! `q_j = p + j gamma` and a chain of nested cutoffs `theta_0 = theta, ..,
//! theta_l = 1`. Supersolution: `theta K_p(h) - a K_{p+gamma}(h) - C rho`,
//! superharmonic for an elliptic operator built from factor fields. In both
//! cases `C` is found by a doubling search followed by bisection, verifying the
//! assembled discrete field directly.

use crate::cone::{cone_report, m_elliptic_apply};
use crate::error::{Error, Result};
use crate::grid::{assemble_hessian, distance_to_set, Domain, ScalarField};
use crate::kernel::KernelParams;
use crate::weights::{factors_elliptic, ladder_length, EllipticFactors, RegularityConstants, WeightData};
use serde::Serialize;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

/// Quintic smoothstep `6t^5 - 15t^4 + 10t^3`; C2 with vanishing first and
/// second derivatives at both ends.
pub const CUTOFF_PROFILE: &str = "quintic 6t^5-15t^4+10t^3";

/// Bound on the second derivative of the cutoff profile on `[0, 1]`.
pub const PROFILE_SECOND_DERIVATIVE: f64 = 5.773_502_691_896_258;

pub const DEFAULT_C_MAX: f64 = 65_536.0;
pub const BISECTION_STEPS: usize = 20;

pub fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    (t * t * t * (10.0 + t * (-15.0 + 6.0 * t))).min(1.0)
}

/// Upper end of the admissible range `min(gt + delta - 1, delta / 2)`.
pub fn gamma_bound(k: &RegularityConstants) -> f64 {
    (k.gamma_tilde + k.delta - 1.0).min(0.5 * k.delta)
}

pub fn default_gamma(k: &RegularityConstants) -> f64 {
    0.9 * gamma_bound(k)
}

#[derive(Debug, Clone)]
pub struct BarrierSpec {
    pub p: f64,
    pub gamma: f64,
    pub ell: usize,
    /// `q_j = p + j gamma`, `j = 1..=ell`.
    pub q: Vec<f64>,
    pub a: Vec<f64>,
    /// `theta_0 ..= theta_ell`.
    pub theta_chain: Vec<ScalarField>,
    pub c: f64,
}

impl BarrierSpec {
    /// Spec for a weight: ladder from `(p, gamma)`, `a_j = 1` unless given,
    /// cutoff chain from `theta` with the given buffer.
    pub fn new(w: &WeightData, theta: &ScalarField, gamma: f64, a: Option<Vec<f64>>, buffer: f64) -> Result<Self> {
        Self::with_ell(w, theta, gamma, a, buffer, None)
    }

    /// As [`BarrierSpec::new`], with a longer ladder than the smallest one if
    /// `ell` is given.
    pub fn with_ell(
        w: &WeightData,
        theta: &ScalarField,
        gamma: f64,
        a: Option<Vec<f64>>,
        buffer: f64,
        ell: Option<usize>,
    ) -> Result<Self> {
        let p = w.p();
        if p > 0.0 {
            return Err(Error::Hypothesis(format!("barriers need p <= 0 (got {p})")));
        }
        let least = ladder_length(p, gamma)?;
        let ell = match ell {
            Some(l) if l < least => {
                return Err(Error::Domain(format!("ladder length {l} below the least admissible {least}")))
            }
            Some(l) => l,
            None => least,
        };
        let a = a.unwrap_or_else(|| vec![1.0; ell]);
        if a.len() != ell {
            return Err(Error::DimensionMismatch(a.len(), ell));
        }
        if let Some(bad) = a.iter().find(|&&x| !(x > 0.0)) {
            return Err(Error::Domain(format!("ladder coefficient {bad} must be positive")));
        }
        let q = (1..=ell).map(|j| p + j as f64 * gamma).collect();
        let theta_chain = make_cutoff_chain(theta, ell, buffer)?;
        let spec = Self {
            p,
            gamma,
            ell,
            q,
            a,
            theta_chain,
            c: 0.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn gamma_admissible(&self, k: &RegularityConstants) -> bool {
        self.gamma > 0.0 && self.gamma < gamma_bound(k)
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta_chain.len() != self.ell + 1 || self.q.len() != self.ell || self.a.len() != self.ell {
            return Err(Error::DimensionMismatch(self.theta_chain.len(), self.ell + 1));
        }
        for (j, t) in self.theta_chain.iter().enumerate() {
            if let Some(bad) = t.values().iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::Domain(format!("theta_{j} takes value {bad}")));
            }
        }
        if self.theta_chain[self.ell].values().iter().any(|&v| v != 1.0) {
            return Err(Error::Domain("last cutoff must be identically 1".into()));
        }
        if let Some(j) = nesting_failure(&self.theta_chain) {
            return Err(Error::Domain(format!("support of theta_{} not inside {{theta_{j} = 1}}", j - 1)));
        }
        Ok(())
    }
}

/// Nested cutoffs `theta_0 = theta, theta_1, .., theta_ell = 1`.
///
/// With `D` the distance to `{theta > 0}` and `b` the buffer, `theta_j` for
/// `0 < j < ell` is 1 on `{D <= (j - 1/2) b}` and falls to 0 at `D = j b`
/// along the quintic profile. The plateau clears the previous support by
/// `b / 2`, so nesting with a two-node margin needs `b >= 4 dx` (checked
/// only when there are intermediate rungs).
pub fn make_cutoff_chain(theta: &ScalarField, ell: usize, buffer: f64) -> Result<Vec<ScalarField>> {
    let d = theta.domain().clone();
    if let Some(bad) = theta.values().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Domain(format!("theta value {bad} outside [0, 1]")));
    }
    if ell == 0 {
        return Err(Error::OutOfRange("ladder length 0".into()));
    }
    if ell > 1 && !(buffer >= 4.0 * d.spacing() * (1.0 - 1e-12)) {
        return Err(Error::Domain(format!(
            "buffer {buffer} below 4 dx = {}",
            4.0 * d.spacing()
        )));
    }
    let support: Vec<bool> = theta.values().iter().map(|&v| v > 0.0).collect();
    let dist = distance_to_set(&d, &support);
    let mut chain = vec![theta.clone()];
    for j in 1..ell {
        let outer = j as f64 * buffer;
        let width = 0.5 * buffer;
        let field = ScalarField::from_real_fn(d.clone(), |i| smoothstep((outer - dist[i]) / width));
        let escapes = d.interior_nodes().any(|i| {
            let v = field.values()[i];
            v > 0.0 && v < 1.0 && d.depth(i) < 2.0 * d.spacing()
        });
        if escapes {
            return Err(Error::ChainOverflow(j));
        }
        chain.push(field);
    }
    chain.push(ScalarField::constant(d, 1.0));
    Ok(chain)
}

/// First `j` such that some node within `2 dx` of `{theta_{j-1} > 0}` has
/// `theta_j < 1`, if any.
pub fn nesting_failure(chain: &[ScalarField]) -> Option<usize> {
    let d = chain.first()?.domain().clone();
    let margin = 2.0 * d.spacing() * (1.0 + 1e-9);
    for j in 1..chain.len() {
        let prev: Vec<bool> = chain[j - 1].values().iter().map(|&v| v > 0.0).collect();
        if !prev.iter().any(|&b| b) {
            continue;
        }
        let dist = distance_to_set(&d, &prev);
        let bad = d
            .interior_nodes()
            .any(|i| dist[i] <= margin && chain[j].values()[i] < 1.0);
        if bad {
            return Some(j);
        }
    }
    None
}

#[derive(Debug, Clone, Serialize)]
pub struct Barrier {
    pub kind: String,
    /// The barrier with the found constant; `-inf` on the weight's mask.
    #[serde(skip)]
    pub field: ScalarField,
    pub c_found: f64,
    pub gamma: f64,
    pub ell: usize,
    pub nodes_checked: usize,
    /// Worst node margin at `c_found` (cone margin or `-(operator value)` scaled).
    pub worst_margin: f64,
    pub worst_node: Option<usize>,
    pub evaluations: usize,
    /// Up to 32 nodes with the smallest margins at `c_found`.
    pub worst_nodes: Vec<(usize, f64)>,
}

/// Per-node data affine in `C`: a node passes at `C` iff `margin(C) >= -tol`.
trait NodeTest {
    fn margin(&self, t: usize, c: f64) -> f64;
    fn len(&self) -> usize;
}

struct ConeTest {
    m: usize,
    n: usize,
    /// Eigenvalues of the base Hessian, `n` per node.
    lambdas: Vec<f64>,
    rho_coef: f64,
    tol: f64,
}

impl NodeTest for ConeTest {
    fn margin(&self, t: usize, c: f64) -> f64 {
        let mut l = [0.0; 3];
        for (k, lk) in l.iter_mut().enumerate().take(self.n) {
            *lk = self.lambdas[t * self.n + k] + c * self.rho_coef;
        }
        cone_report(&l[..self.n], self.m, self.tol).margin
    }

    fn len(&self) -> usize {
        self.lambdas.len() / self.n
    }
}

struct OperatorTest {
    /// `(D base, D rho)` per node.
    values: Vec<(f64, f64)>,
}

impl NodeTest for OperatorTest {
    fn margin(&self, t: usize, c: f64) -> f64 {
        let (base, rho) = self.values[t];
        -(base - c * rho) / (1.0 + base.abs())
    }

    fn len(&self) -> usize {
        self.values.len()
    }
}

struct SearchResult {
    c: f64,
    evaluations: usize,
}

fn passes(test: &dyn NodeTest, c: f64, tol: f64) -> bool {
    (0..test.len()).all(|t| test.margin(t, c) >= -tol)
}

fn worst(test: &dyn NodeTest, c: f64) -> (f64, usize) {
    (0..test.len())
        .map(|t| (test.margin(t, c), t))
        .fold((f64::INFINITY, 0), |a, b| if b.0 < a.0 { b } else { a })
}

/// `C = 0`, then doubling from 1 up to `c_max`, then bisection between the
/// last failing and first passing value.
fn search(test: &dyn NodeTest, tol: f64, c_max: f64, nodes: &[usize]) -> Result<SearchResult> {
    let mut evaluations = 1;
    if passes(test, 0.0, tol) {
        return Ok(SearchResult { c: 0.0, evaluations });
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    loop {
        evaluations += 1;
        if passes(test, hi, tol) {
            break;
        }
        lo = hi;
        hi *= 2.0;
        if hi > c_max {
            let (m, t) = worst(test, c_max);
            return Err(Error::SearchExhausted {
                c_max,
                worst_margin: m,
                worst_node: nodes[t],
            });
        }
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        evaluations += 1;
        if passes(test, mid, tol) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(SearchResult { c: hi, evaluations })
}

fn worst_sample(test: &dyn NodeTest, c: f64, nodes: &[usize]) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = (0..test.len()).map(|t| (nodes[t], test.margin(t, c))).collect();
    all.sort_by(|a, b| a.1.total_cmp(&b.1));
    all.truncate(32);
    all
}

fn check_theta_field(theta: &ScalarField, d: &Arc<Domain>) -> Result<()> {
    if theta.values().len() != d.num_nodes() {
        return Err(Error::DimensionMismatch(theta.values().len(), d.num_nodes()));
    }
    if let Some(bad) = theta.values().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Domain(format!("theta value {bad} outside [0, 1]")));
    }
    Ok(())
}

/// Base field (without `C rho`) on unmasked nodes, `-inf` on the mask.
fn assemble(w: &WeightData, f: impl Fn(usize, f64) -> f64) -> ScalarField {
    w.psi.map(|i, _| f(i, w.h.values()[i]))
}

fn with_rho(base: &ScalarField, c: f64) -> ScalarField {
    let d = base.domain().clone();
    base.map(|i, v| v + c * d.rho(i))
}

/// Subsolution with the least passing `C` from the search.
pub fn build_subsolution(w: &WeightData, spec: &BarrierSpec, tol: f64) -> Result<Barrier> {
    build_subsolution_with_cap(w, spec, tol, DEFAULT_C_MAX)
}

pub fn build_subsolution_with_cap(w: &WeightData, spec: &BarrierSpec, tol: f64, c_max: f64) -> Result<Barrier> {
    spec.validate()?;
    let d = w.domain().clone();
    for t in &spec.theta_chain {
        check_theta_field(t, &d)?;
    }
    let kp = w.kernel;
    let rungs: Vec<KernelParams> = spec.q.iter().map(|&q| KernelParams::new(q)).collect::<Result<_>>()?;
    let chain = &spec.theta_chain;
    let base = assemble(w, |i, hv| {
        let ladder: f64 = rungs
            .iter()
            .zip(&spec.a)
            .enumerate()
            .map(|(j, (k, a))| a * chain[j + 1].values()[i] * k.k_pos(hv))
            .sum();
        chain[0].values()[i] * kp.k_pos(hv) + ladder
    });
    let nodes = base.stencil_nodes();
    let n = d.n();
    let mut lambdas = Vec::with_capacity(nodes.len() * n);
    for &i in &nodes {
        let form = assemble_hessian(&d, i, |j| base.values()[j]);
        lambdas.extend(form.eigenvalues());
    }
    let test = ConeTest {
        m: w.m,
        n,
        lambdas,
        rho_coef: d.rho_hessian().get(0, 0).re,
        tol,
    };
    let found = search(&test, tol, c_max, &nodes)?;
    let (worst_margin, t) = worst(&test, found.c);
    Ok(Barrier {
        kind: "subsolution".into(),
        field: with_rho(&base, found.c),
        c_found: found.c,
        gamma: spec.gamma,
        ell: spec.ell,
        nodes_checked: nodes.len(),
        worst_margin,
        worst_node: nodes.get(t).copied(),
        evaluations: found.evaluations,
        worst_nodes: worst_sample(&test, found.c, &nodes),
    })
}

/// Supersolution `theta K_p(h) - a K_{p+gamma}(h) - C rho` with
/// `D G <= tol (1 + |D base|)` at every unmasked node where the factors give
/// an elliptic operator.
pub fn build_supersolution(
    w: &WeightData,
    theta: &ScalarField,
    gamma: f64,
    a: f64,
    factors: &EllipticFactors,
    tol: f64,
) -> Result<Barrier> {
    build_supersolution_with_cap(w, theta, gamma, a, factors, tol, DEFAULT_C_MAX)
}

pub fn build_supersolution_with_cap(
    w: &WeightData,
    theta: &ScalarField,
    gamma: f64,
    a: f64,
    factors: &EllipticFactors,
    tol: f64,
    c_max: f64,
) -> Result<Barrier> {
    let d = w.domain().clone();
    check_theta_field(theta, &d)?;
    if !(a > 0.0) {
        return Err(Error::Domain(format!("a = {a} must be positive")));
    }
    if !(gamma > 0.0) {
        return Err(Error::Domain(format!("gamma = {gamma} must be positive")));
    }
    let kp = w.kernel;
    let kq = KernelParams::new(w.p() + gamma)?;
    let base = assemble(w, |i, hv| theta.values()[i] * kp.k_pos(hv) - a * kq.k_pos(hv));
    let (nodes, values) = operator_values(&base, factors, w.m, tol, Some(w))?;
    let test = OperatorTest { values };
    let found = search(&test, tol, c_max, &nodes)?;
    let (worst_margin, t) = worst(&test, found.c);
    Ok(Barrier {
        kind: "supersolution".into(),
        field: with_rho(&base, -found.c),
        c_found: found.c,
        gamma,
        ell: 1,
        nodes_checked: nodes.len(),
        worst_margin,
        worst_node: nodes.get(t).copied(),
        evaluations: found.evaluations,
        worst_nodes: worst_sample(&test, found.c, &nodes),
    })
}

/// `(D f, D rho)` at unmasked full-stencil nodes where the factor forms are
/// elliptic, optionally restricted to `h > h_floor`.
fn operator_values(
    f: &ScalarField,
    factors: &EllipticFactors,
    m: usize,
    tol: f64,
    weight: Option<&WeightData>,
) -> Result<(Vec<usize>, Vec<(f64, f64)>)> {
    let d = f.domain().clone();
    let offsets = d.stencil_offsets();
    let rho_hess = d.rho_hessian();
    let n = d.n();
    if m == 0 || m > n {
        return Err(Error::OutOfRange(format!("m = {m}")));
    }
    if let EllipticFactors::Fields(v) = factors {
        if m > 1 && v.is_empty() {
            return Err(Error::Empty("elliptic factor fields".into()));
        }
    }
    let mut nodes = Vec::new();
    let mut values = Vec::new();
    for i in f.stencil_nodes() {
        if let Some(w) = weight {
            if !(w.h.values()[i] > w.h_floor) {
                continue;
            }
        }
        let Some(forms) = factors.forms_at(i, m, n, &offsets) else {
            continue;
        };
        if !factors_elliptic(&forms, m, tol)? {
            continue;
        }
        let hf = assemble_hessian(&d, i, |j| f.values()[j]);
        values.push((m_elliptic_apply(&forms, &hf)?, m_elliptic_apply(&forms, &rho_hess)?));
        nodes.push(i);
    }
    Ok((nodes, values))
}

#[derive(Debug, Clone, Serialize)]
pub struct SuperweightReport {
    pub passed: bool,
    /// No node lies in `{psi <= -1}`.
    pub sublevel_empty: bool,
    /// Distance from `{psi <= -1}` to the boundary (infinite if empty).
    pub sublevel_distance: f64,
    pub sublevel_ok: bool,
    pub max_operator: f64,
    pub operator_nodes: usize,
    pub operator_failures: usize,
    pub operator_ok: bool,
    pub nonfinite_unmasked: usize,
    pub finite_ok: bool,
}

/// On-grid superweight conditions: `{psi <= -1}` at distance `>= 2 dx` from
/// the boundary, `D psi <= tol (1 + |D psi|)` off the mask, finite off the mask.
pub fn superweight_check(psi_bar: &ScalarField, factors: &EllipticFactors, m: usize, tol: f64) -> Result<SuperweightReport> {
    let d = psi_bar.domain().clone();
    let mut sublevel_distance = f64::INFINITY;
    let mut sublevel_empty = true;
    for i in d.interior_nodes() {
        if psi_bar.values()[i] <= -1.0 {
            sublevel_empty = false;
            sublevel_distance = sublevel_distance.min(d.depth(i));
        }
    }
    let sublevel_ok = sublevel_distance >= 2.0 * d.spacing() * (1.0 - 1e-12);
    let (nodes, values) = operator_values(psi_bar, factors, m, tol, None)?;
    let mut max_operator = f64::NEG_INFINITY;
    let mut operator_failures = 0;
    for &(v, _) in &values {
        max_operator = max_operator.max(v);
        if v > tol * (1.0 + v.abs()) {
            operator_failures += 1;
        }
    }
    let nonfinite_unmasked = d
        .interior_nodes()
        .filter(|&i| !psi_bar.is_masked(i) && !psi_bar.values()[i].is_finite())
        .count();
    let operator_ok = operator_failures == 0;
    let finite_ok = nonfinite_unmasked == 0;
    Ok(SuperweightReport {
        passed: sublevel_ok && operator_ok && finite_ok,
        sublevel_empty,
        sublevel_distance,
        sublevel_ok,
        max_operator,
        operator_nodes: nodes.len(),
        operator_failures,
        operator_ok,
        nonfinite_unmasked,
        finite_ok,
    })
}

/// Shift `t` making `G + t` a superweight candidate: the minimum of `G + t`
/// over interior nodes within `2 dx` of the boundary is just above `-1`.
pub fn superweight_shift(g: &ScalarField) -> Result<f64> {
    let d = g.domain();
    let band = 2.0 * d.spacing();
    let low = d
        .interior_nodes()
        .filter(|&i| d.depth(i) < band && !g.is_masked(i))
        .map(|i| g.values()[i])
        .fold(f64::INFINITY, f64::min);
    if !low.is_finite() {
        return Err(Error::Empty("boundary band".into()));
    }
    Ok(-1.0 - low + 1e-9 * (1.0 + low.abs()))
}

/// Key-value summary of a barrier, one `key = value` per line.
pub fn barrier_key_values(b: &Barrier) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "kind = {}", b.kind);
    let _ = writeln!(s, "c_found = {}", b.c_found);
    let _ = writeln!(s, "gamma = {}", b.gamma);
    let _ = writeln!(s, "ell = {}", b.ell);
    let _ = writeln!(s, "nodes_checked = {}", b.nodes_checked);
    let _ = writeln!(s, "worst_margin = {:e}", b.worst_margin);
    let _ = writeln!(
        s,
        "worst_node = {}",
        b.worst_node.map_or("none".to_string(), |v| v.to_string())
    );
    let _ = writeln!(s, "evaluations = {}", b.evaluations);
    let _ = writeln!(s, "cutoff_profile = {CUTOFF_PROFILE}");
    let _ = writeln!(s, "profile_second_derivative = {PROFILE_SECOND_DERIVATIVE}");
    s
}

pub fn write_barrier_report(b: &Barrier, dir: &Path, stem: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(format!("{stem}.txt")), barrier_key_values(b))?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(format!("{stem}_worst.csv")))?);
    writeln!(f, "node,margin")?;
    for (i, m) in &b.worst_nodes {
        writeln!(f, "{i},{m:e}")?;
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests;
