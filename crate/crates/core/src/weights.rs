//! Model weights `h = dist(., V)^2` for linear submanifolds
//! `V = {z_1 = .. = z_k = 0}`, the kernel weight `psi = K_p(h)` with
//! `p = 1 - k/m`, and pointwise checkers for the regularity hypotheses on `h`.

use crate::cone::{is_m_positive, m_elliptic_apply, HermitianForm};
use crate::error::{Error, Result};
use crate::grid::{assemble_hessian, Domain, ScalarField};
use crate::kernel::{ExtReal, KernelParams};
use num_complex::Complex64;
use serde::Serialize;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelSubmanifold {
    pub n: usize,
    /// Complex codimension.
    pub k: usize,
}

impl ModelSubmanifold {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if !(1..=n).contains(&k) {
            return Err(Error::OutOfRange(format!("codimension {k} in C^{n}")));
        }
        Ok(Self { n, k })
    }

    /// Euclidean squared distance to `V`, unscaled.
    pub fn dist_sqr(&self, domain: &Domain, idx: usize) -> f64 {
        let x = domain.coords(idx);
        x[..2 * self.k].iter().map(|v| v * v).sum()
    }
}

/// Constants of the regularity hypotheses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegularityConstants {
    pub epsilon: f64,
    pub delta: f64,
    pub c: f64,
    pub gamma_tilde: f64,
}

impl Default for RegularityConstants {
    fn default() -> Self {
        Self {
            epsilon: 0.5,
            delta: 1.0,
            c: 1.0,
            gamma_tilde: 0.45,
        }
    }
}

#[derive(Debug, Clone)]
pub struct WeightData {
    /// `None` for user-supplied weights.
    pub submanifold: Option<ModelSubmanifold>,
    pub m: usize,
    pub kernel: KernelParams,
    pub h: ScalarField,
    /// `K_p(h) + shift`, masked on `{h < h_floor}`.
    pub psi: ScalarField,
    pub shift: f64,
    pub h_floor: f64,
    pub constants: RegularityConstants,
}

impl WeightData {
    pub fn p(&self) -> f64 {
        self.kernel.p()
    }

    pub fn domain(&self) -> &Arc<Domain> {
        self.h.domain()
    }

    /// `K_p(h_floor) + shift`, the value that replaces `-inf` in solver iterates.
    pub fn psi_floor(&self) -> f64 {
        self.kernel.k_pos(self.h_floor) + self.shift
    }

    /// `K_p'(h)` at a node.
    pub fn kernel_slope(&self, idx: usize) -> f64 {
        self.kernel.dk(self.h.values()[idx])
    }
}

/// Default polar floor in grid cells: `h_floor = (cells * dx / R)^2`.
pub const DEFAULT_FLOOR_CELLS: f64 = 10.0;

pub fn floor_for(domain: &Domain, cells: f64) -> f64 {
    (cells * domain.spacing() / domain.radius()).powi(2)
}

/// Flat model weight with the default polar floor.
pub fn build_weight(v: ModelSubmanifold, m: usize, domain: Arc<Domain>) -> Result<WeightData> {
    let h_floor = floor_for(&domain, DEFAULT_FLOOR_CELLS);
    build_weight_with_floor(v, m, domain, h_floor)
}

pub fn build_weight_with_floor(
    v: ModelSubmanifold,
    m: usize,
    domain: Arc<Domain>,
    h_floor: f64,
) -> Result<WeightData> {
    if v.n != domain.n() {
        return Err(Error::DimensionMismatch(v.n, domain.n()));
    }
    if m == 0 || m > v.n {
        return Err(Error::OutOfRange(format!("m = {m} in C^{}", v.n)));
    }
    if v.k < m {
        return Err(Error::Hypothesis(format!(
            "codimension k = {} below m = {m}",
            v.k
        )));
    }
    let p = 1.0 - v.k as f64 / m as f64;
    let r2 = domain.radius() * domain.radius();
    let d = domain.clone();
    let h = ScalarField::from_real_fn(domain.clone(), move |i| v.dist_sqr(&d, i) / r2);
    let mut w = weight_from_h(h, m, p, h_floor)?;
    w.submanifold = Some(v);
    Ok(w)
}

/// Kernel weight `K_p(h) + shift` of a user-supplied `h >= 0`; the shift makes
/// `psi <= -1` wherever `h <= 1`. No hypotheses are implied.
pub fn weight_from_h(h: ScalarField, m: usize, p: f64, h_floor: f64) -> Result<WeightData> {
    let kernel = KernelParams::new(p)?;
    if p > 0.0 {
        return Err(Error::Hypothesis(format!("kernel exponent p = {p} > 0")));
    }
    if !(h_floor > 0.0) {
        return Err(Error::Domain(format!("h_floor = {h_floor}")));
    }
    if let Some(lo) = h.min_finite() {
        if lo < 0.0 {
            return Err(Error::Domain(format!("negative weight value {lo}")));
        }
    }
    let shift = -1.0 - kernel.k_pos(1.0);
    let psi = ScalarField::from_fn(h.domain().clone(), |i| {
        let hv = h.values()[i];
        if hv < h_floor {
            ExtReal::NegInf
        } else {
            ExtReal::Finite(kernel.k_pos(hv) + shift)
        }
    });
    Ok(WeightData {
        submanifold: None,
        m,
        kernel,
        h,
        psi,
        shift,
        h_floor,
        constants: RegularityConstants::default(),
    })
}

/// A dyadic shell `h_lo <= h < h_hi` in the weight variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Shell {
    pub index: usize,
    pub h_lo: f64,
    pub h_hi: f64,
}

/// Shell `j` holds `2^{-j-1} <= h < 2^{-j}`; values `h >= 1/2` fall in shell 0.
pub fn shell_of(h: f64) -> usize {
    if h >= 0.5 {
        return 0;
    }
    if !(h > 0.0) {
        return usize::MAX;
    }
    ((-h.log2()).ceil() as usize).saturating_sub(1)
}

/// Shells whose lower edge is at least `h_min`; with `partial`, one more
/// truncated shell `[h_min, 2^{-j})` closes the list.
pub fn dyadic_shells(h_min: f64, partial: bool) -> Vec<Shell> {
    let mut out = Vec::new();
    for j in 0..64 {
        let hi = 0.5f64.powi(j as i32);
        let lo = 0.5 * hi;
        if lo >= h_min {
            out.push(Shell { index: j, h_lo: lo, h_hi: hi });
        } else {
            if partial && hi > h_min {
                out.push(Shell { index: j, h_lo: h_min, h_hi: hi });
            }
            break;
        }
    }
    out
}

/// Node to shell index for a weight.
pub fn dyadic_shell_index(w: &WeightData) -> impl Fn(usize) -> usize + '_ {
    move |i| shell_of(w.h.values()[i])
}

/// Outcome of a pointwise hypothesis check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub check: String,
    pub passed: bool,
    pub nodes_checked: usize,
    pub nodes_failed: usize,
    /// Nodes skipped because the operator failed to be elliptic there.
    pub nodes_excluded: usize,
    pub worst_margin: f64,
    pub worst_node: Option<usize>,
    pub worst_h: f64,
    /// First failing nodes, capped.
    pub failing_nodes: Vec<usize>,
}

const FAILING_SAMPLE: usize = 32;

struct Tally {
    report: HypothesisReport,
}

impl Tally {
    fn new(check: &str) -> Self {
        Self {
            report: HypothesisReport {
                check: check.to_string(),
                passed: true,
                nodes_checked: 0,
                nodes_failed: 0,
                nodes_excluded: 0,
                worst_margin: f64::INFINITY,
                worst_node: None,
                worst_h: f64::NAN,
                failing_nodes: Vec::new(),
            },
        }
    }

    fn record(&mut self, idx: usize, h: f64, margin: f64, ok: bool) {
        let r = &mut self.report;
        r.nodes_checked += 1;
        if margin < r.worst_margin {
            r.worst_margin = margin;
            r.worst_node = Some(idx);
            r.worst_h = h;
        }
        if !ok {
            r.passed = false;
            r.nodes_failed += 1;
            if r.failing_nodes.len() < FAILING_SAMPLE {
                r.failing_nodes.push(idx);
            }
        }
    }

    fn finish(mut self) -> HypothesisReport {
        if self.report.nodes_checked == 0 {
            self.report.passed = false;
        }
        self.report
    }
}

fn hessian_at(f: &ScalarField, idx: usize) -> HermitianForm {
    assemble_hessian(f.domain(), idx, |j| f.values()[j])
}

/// `i ddbar h >=_m eps h^{1-delta} Id` at every node where `psi` has a full stencil.
pub fn check_delta_regular(w: &WeightData, m: usize, eps: f64, delta: f64, tol: f64) -> Result<HypothesisReport> {
    if !(eps > 0.0 && delta > 0.0) {
        return Err(Error::Domain(format!("need eps, delta > 0 (got {eps}, {delta})")));
    }
    let mut t = Tally::new("delta_regular");
    for idx in w.psi.stencil_nodes() {
        let hv = w.h.values()[idx];
        let bound = eps * hv.powf(1.0 - delta);
        let form = hessian_at(&w.h, idx).shift(-bound);
        let rep = is_m_positive(&form, m, tol)?;
        t.record(idx, hv, rep.margin, rep.is_member);
    }
    Ok(t.finish())
}

/// Condition one: `i ddbar K_p(h) >=_m -c h^gt K_p'(h) Id`.
pub fn check_condition_one(w: &WeightData, m: usize, c: f64, gamma_tilde: f64, tol: f64) -> Result<HypothesisReport> {
    if c < 0.0 {
        return Err(Error::Domain(format!("c = {c}")));
    }
    let mut t = Tally::new("condition_one");
    for idx in w.psi.stencil_nodes() {
        let hv = w.h.values()[idx];
        let slack = c * hv.powf(gamma_tilde) * w.kernel.dk(hv);
        let form = hessian_at(&w.psi, idx).shift(slack);
        let rep = is_m_positive(&form, m, tol)?;
        t.record(idx, hv, rep.margin, rep.is_member);
    }
    Ok(t.finish())
}

/// The `m - 1` factor fields defining `g -> i ddbar g ^ T ^ w^{n-m}`.
#[derive(Debug, Clone)]
pub enum EllipticFactors {
    /// `T = w^{m-1}`.
    Flat,
    /// `T = i ddbar f_1 ^ .. ^ i ddbar f_{m-1}`.
    Fields(Vec<ScalarField>),
}

impl EllipticFactors {
    pub fn factor_count(&self, m: usize) -> usize {
        m.saturating_sub(1)
    }

    /// Factor forms at a node; `None` if a factor field lacks its stencil there.
    pub fn forms_at(&self, idx: usize, m: usize, n: usize, offsets: &[isize]) -> Option<Vec<HermitianForm>> {
        match self {
            EllipticFactors::Flat => Some(vec![HermitianForm::identity(n); m.saturating_sub(1)]),
            EllipticFactors::Fields(fields) => {
                let mut out = Vec::with_capacity(m.saturating_sub(1));
                for k in 0..m.saturating_sub(1) {
                    let f = &fields[k.min(fields.len() - 1)];
                    if !f.has_full_stencil(idx, offsets) {
                        return None;
                    }
                    out.push(hessian_at(f, idx));
                }
                Some(out)
            }
        }
    }

    fn validate(&self, m: usize) -> Result<()> {
        if let EllipticFactors::Fields(f) = self {
            if m > 1 && f.is_empty() {
                return Err(Error::Empty("elliptic factor fields".into()));
            }
        }
        Ok(())
    }
}

/// Whether the factor forms define an elliptic operator at a node: every
/// factor is `m`-positive and the trace coefficient is strictly positive.
pub fn factors_elliptic(forms: &[HermitianForm], m: usize, tol: f64) -> Result<bool> {
    for f in forms {
        if !is_m_positive(f, m, tol)?.is_member {
            return Ok(false);
        }
    }
    let n = forms.first().map_or(0, |f| f.dim());
    if n == 0 {
        return Ok(true);
    }
    Ok(m_elliptic_apply(forms, &HermitianForm::identity(n))? > 0.0)
}

/// `K~ = K_p(h) + sum_j a_j K_{p + j gamma}(h) + C rho`: the factor field of
/// the operator used for condition two, masked where `psi` is.
pub fn corollary_factor_field(w: &WeightData, gamma: f64, a: &[f64], c_rho: f64) -> Result<ScalarField> {
    let p = w.p();
    let rungs: Vec<KernelParams> = (1..=a.len())
        .map(|j| KernelParams::new(p + j as f64 * gamma))
        .collect::<Result<_>>()?;
    let d = w.domain().clone();
    Ok(w.psi.map(|i, v| {
        let hv = w.h.values()[i];
        let ladder: f64 = rungs.iter().zip(a).map(|(k, aj)| aj * k.k_pos(hv)).sum();
        v + ladder + c_rho * d.rho(i)
    }))
}

/// Default operator for condition two on the flat model: `m - 1` copies of
/// `K~` with one rung per ladder step, `a_j = 1`, `gamma = gamma_tilde`, `C = 0`.
pub fn corollary_factors(w: &WeightData, gamma_tilde: f64) -> Result<EllipticFactors> {
    if w.m <= 1 {
        return Ok(EllipticFactors::Flat);
    }
    let ell = ladder_length(w.p(), gamma_tilde)?;
    let field = corollary_factor_field(w, gamma_tilde, &vec![1.0; ell], 0.0)?;
    Ok(EllipticFactors::Fields(vec![field; w.m - 1]))
}

/// Smallest integer `l` with `p + l gamma > 0`.
pub fn ladder_length(p: f64, gamma: f64) -> Result<usize> {
    if !(gamma > 0.0) {
        return Err(Error::Domain(format!("gamma = {gamma}")));
    }
    let mut l = 1usize;
    while p + l as f64 * gamma <= 0.0 {
        l += 1;
        if l > 10_000 {
            return Err(Error::Domain(format!("ladder too long for p = {p}, gamma = {gamma}")));
        }
    }
    Ok(l)
}

/// Condition two: `D K_p(h) <= c h^gt K_p'(h) D rho` for `D g = i ddbar g ^ T ^ w^{n-m}`.
///
/// Margin is `(rhs - lhs) / (|lhs| + |rhs|)`.
pub fn check_condition_two(
    w: &WeightData,
    factors: &EllipticFactors,
    m: usize,
    c: f64,
    gamma_tilde: f64,
    tol: f64,
) -> Result<HypothesisReport> {
    factors.validate(m)?;
    let domain = w.domain();
    let offsets = domain.stencil_offsets();
    let rho_hess = domain.rho_hessian();
    let n = domain.n();
    let mut t = Tally::new("condition_two");
    for idx in w.psi.stencil_nodes() {
        let Some(forms) = factors.forms_at(idx, m, n, &offsets) else {
            t.report.nodes_excluded += 1;
            continue;
        };
        if !factors_elliptic(&forms, m, tol)? {
            t.report.nodes_excluded += 1;
            continue;
        }
        let hv = w.h.values()[idx];
        let lhs = m_elliptic_apply(&forms, &hessian_at(&w.psi, idx))?;
        let rhs = c * hv.powf(gamma_tilde) * w.kernel.dk(hv) * m_elliptic_apply(&forms, &rho_hess)?;
        let scale = lhs.abs() + rhs.abs();
        let margin = if scale > 0.0 { (rhs - lhs) / scale } else { 0.0 };
        t.record(idx, hv, margin, margin >= -tol);
    }
    Ok(t.finish())
}

/// `(1/h) i dh ^ dbar h` at a node by central differences; rank one with
/// eigenvalue `|dh|^2 / h`.
pub fn gradient_outer_form(w: &WeightData, idx: usize) -> Result<HermitianForm> {
    let d = w.domain();
    if !d.has_box_stencil(idx) {
        return Err(Error::StencilUnavailable(idx));
    }
    let hv = w.h.values()[idx];
    if !(hv > 0.0) {
        return Err(Error::Domain(format!("h = {hv} at node {idx}")));
    }
    let vals = w.h.values();
    let dx = d.spacing();
    let n = d.n();
    let grad: Vec<Complex64> = (0..n)
        .map(|j| {
            let (sx, sy) = (d.stride(2 * j), d.stride(2 * j + 1));
            let gx = (vals[idx + sx] - vals[idx - sx]) / (2.0 * dx);
            let gy = (vals[idx + sy] - vals[idx - sy]) / (2.0 * dx);
            Complex64::new(0.5 * gx, -0.5 * gy)
        })
        .collect();
    let rows: Vec<Vec<Complex64>> = (0..n)
        .map(|a| (0..n).map(|b| grad[a] * grad[b].conj() / hv).collect())
        .collect();
    HermitianForm::from_rows(&rows)
}

/// Negative-control weights for the checkers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PerturbedWeight {
    /// `|z_1|^2 + 0.1 |z_2|^2`: too flat in `z_2` for `eps = 0.5`.
    Anisotropic,
    /// `h (1 - 0.8 |z_1|^2)`: loses subharmonicity of `log h` near the boundary.
    Dented,
    /// `h exp(2 |z|^2)`: `log` picks up a strictly positive Hessian, breaking the
    /// upper bound away from `V`.
    Inflated,
}

pub fn perturbed_weight(kind: PerturbedWeight, m: usize, p: f64, domain: Arc<Domain>) -> Result<WeightData> {
    if domain.n() != 2 {
        return Err(Error::OutOfRange("perturbed weights are defined on C^2".into()));
    }
    let r2 = domain.radius() * domain.radius();
    let d = domain.clone();
    let h = ScalarField::from_real_fn(domain.clone(), move |i| {
        let x = d.coords(i);
        let a = (x[0] * x[0] + x[1] * x[1]) / r2;
        let b = (x[2] * x[2] + x[3] * x[3]) / r2;
        match kind {
            PerturbedWeight::Anisotropic => a + 0.1 * b,
            PerturbedWeight::Dented => (a + b) * (1.0 - 0.8 * a).max(0.0),
            PerturbedWeight::Inflated => (a + b) * (2.0 * (a + b)).exp(),
        }
    });
    let h_floor = floor_for(&domain, DEFAULT_FLOOR_CELLS);
    weight_from_h(h, m, p, h_floor)
}
