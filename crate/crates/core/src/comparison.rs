//! Sublevel maxima `M_s(phi) = max_{psi <= s} phi`, their convexity and
//! slopes, and pointwise dominance against a superweight.

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use serde::Serialize;
use std::io::Write as _;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SublevelProfile {
    /// Strictly decreasing levels.
    pub s_values: Vec<f64>,
    /// `None` where the sublevel has no node.
    pub m_values: Vec<Option<f64>>,
    pub counts: Vec<usize>,
}

impl SublevelProfile {
    /// `(s, M_s)` for nonempty sublevels, shallowest first.
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.s_values
            .iter()
            .zip(&self.m_values)
            .filter_map(|(&s, m)| m.map(|m| (s, m)))
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "s,M_s,count")?;
        for ((s, m), c) in self.s_values.iter().zip(&self.m_values).zip(&self.counts) {
            match m {
                Some(m) => writeln!(f, "{s:.17e},{m:.17e},{c}")?,
                None => writeln!(f, "{s:.17e},,{c}")?,
            }
        }
        f.flush()?;
        Ok(())
    }
}

/// Interior nodes where both fields are finite, sorted by `psi`.
fn sorted_nodes(phi: &ScalarField, psi: &ScalarField) -> Result<Vec<usize>> {
    if phi.values().len() != psi.values().len() {
        return Err(Error::DimensionMismatch(phi.values().len(), psi.values().len()));
    }
    let d = psi.domain();
    let mut nodes: Vec<usize> = d
        .interior_nodes()
        .filter(|&i| !psi.is_masked(i) && !phi.is_masked(i))
        .collect();
    nodes.sort_by(|&a, &b| psi.values()[a].total_cmp(&psi.values()[b]));
    Ok(nodes)
}

/// Exact grid maxima of `phi` over `{psi <= s}` (unmasked interior nodes).
pub fn sublevel_max(phi: &ScalarField, psi: &ScalarField, s_list: &[f64]) -> Result<SublevelProfile> {
    if s_list.is_empty() {
        return Err(Error::Empty("level list".into()));
    }
    if s_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Domain("levels must be strictly decreasing".into()));
    }
    let nodes = sorted_nodes(phi, psi)?;
    let mut prefix = Vec::with_capacity(nodes.len());
    let mut run = f64::NEG_INFINITY;
    for &i in &nodes {
        run = run.max(phi.values()[i]);
        prefix.push(run);
    }
    let mut m_values = Vec::with_capacity(s_list.len());
    let mut counts = Vec::with_capacity(s_list.len());
    for &s in s_list {
        let count = nodes.partition_point(|&i| psi.values()[i] <= s);
        counts.push(count);
        m_values.push(if count > 0 { Some(prefix[count - 1]) } else { None });
    }
    Ok(SublevelProfile {
        s_values: s_list.to_vec(),
        m_values,
        counts,
    })
}

/// Twelve levels geometric in `|s|` from `-2` down to the 0.5-percentile of
/// the unmasked values of `psi`.
pub fn default_levels(psi: &ScalarField) -> Result<Vec<f64>> {
    geometric_levels(psi, 12, 0.005)
}

pub fn geometric_levels(psi: &ScalarField, count: usize, quantile: f64) -> Result<Vec<f64>> {
    let d = psi.domain();
    let mut v: Vec<f64> = d
        .interior_nodes()
        .filter(|&i| !psi.is_masked(i))
        .map(|i| psi.values()[i])
        .collect();
    if v.is_empty() || count < 2 {
        return Err(Error::Empty("unmasked values".into()));
    }
    v.sort_by(f64::total_cmp);
    let q = v[((quantile * v.len() as f64) as usize).min(v.len() - 1)];
    if !(q < -2.0) {
        return Err(Error::Domain(format!("psi does not reach below -2 (quantile {q})")));
    }
    let ratio = (q / -2.0).powf(1.0 / (count - 1) as f64);
    Ok((0..count).map(|k| -2.0 * ratio.powi(k as i32)).collect())
}

/// Replaces each level by the largest value of `psi` attained on `ray`
/// that does not exceed it; duplicates are dropped.
pub fn snap_levels(psi: &ScalarField, ray: &[usize], s_list: &[f64]) -> Vec<f64> {
    let mut attained: Vec<f64> = ray
        .iter()
        .filter(|&&i| !psi.is_masked(i))
        .map(|&i| psi.values()[i])
        .collect();
    attained.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::new();
    for &s in s_list {
        let k = attained.partition_point(|&v| v <= s);
        if k == 0 {
            continue;
        }
        let v = attained[k - 1];
        if out.last().map_or(true, |&last| v < last) {
            out.push(v);
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvexityCertificate {
    pub levels: usize,
    /// Smallest `(M_c - M_b)/(s_c - s_b) - (M_b - M_a)/(s_b - s_a)` over
    /// consecutive triples `s_a < s_b < s_c`.
    pub min_second_difference: f64,
    pub scale: f64,
    pub convex: bool,
    /// Largest violation of monotonicity of the difference quotient in
    /// either argument.
    pub quotient_violation: f64,
    pub quotients_monotone: bool,
    /// `M_s` nondecreasing in `s`.
    pub increasing: bool,
}

/// Three-circles certificate with tolerance `tol * max |M|`.
pub fn convexity_certificate(profile: &SublevelProfile, tol: f64) -> Result<ConvexityCertificate> {
    let mut pts = profile.points();
    if pts.len() < 3 {
        return Err(Error::Empty(format!("{} nonempty levels, need 3", pts.len())));
    }
    pts.reverse();
    let scale = pts.iter().fold(0.0f64, |a, p| a.max(p.1.abs()));
    let slack = tol * scale.max(f64::MIN_POSITIVE);
    let q = |a: (f64, f64), b: (f64, f64)| (b.1 - a.1) / (b.0 - a.0);
    let mut min_second = f64::INFINITY;
    for w in pts.windows(3) {
        min_second = min_second.min(q(w[1], w[2]) - q(w[0], w[1]));
    }
    let mut violation = 0.0f64;
    let k = pts.len();
    for t in 0..k {
        for s1 in 0..t {
            for s2 in s1 + 1..t {
                violation = violation.max(q(pts[s1], pts[t]) - q(pts[s2], pts[t]));
            }
        }
    }
    for s in 0..k {
        for t1 in s + 1..k {
            for t2 in t1 + 1..k {
                violation = violation.max(q(pts[s], pts[t1]) - q(pts[s], pts[t2]));
            }
        }
    }
    let increasing = pts.windows(2).all(|w| w[1].1 >= w[0].1 - slack);
    Ok(ConvexityCertificate {
        levels: k,
        min_second_difference: min_second,
        scale,
        convex: min_second >= -slack,
        quotient_violation: violation,
        quotients_monotone: violation <= slack,
        increasing,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SlopeEstimate {
    pub slope: f64,
    pub intercept: f64,
    pub levels_used: usize,
    /// Difference quotients over the fitted levels are monotone.
    pub quotients_monotone: bool,
}

/// Least-squares slope of `M_s` against `s` over the deepest quartile of the
/// nonempty levels (at least four).
pub fn slope_estimate(profile: &SublevelProfile) -> Result<SlopeEstimate> {
    let pts = profile.points();
    if pts.len() < 4 {
        return Err(Error::Empty(format!("{} nonempty levels, need 4", pts.len())));
    }
    let used = (pts.len().div_ceil(4)).max(4);
    let deep = &pts[pts.len() - used..];
    let k = used as f64;
    let ms = deep.iter().map(|p| p.0).sum::<f64>() / k;
    let mm = deep.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = deep.iter().map(|p| (p.0 - ms).powi(2)).sum();
    let sxy: f64 = deep.iter().map(|p| (p.0 - ms) * (p.1 - mm)).sum();
    let slope = sxy / sxx;
    let sub = SublevelProfile {
        s_values: deep.iter().map(|p| p.0).collect(),
        m_values: deep.iter().map(|p| Some(p.1)).collect(),
        counts: vec![0; used],
    };
    let cert = convexity_certificate(&sub, 1e-9)?;
    Ok(SlopeEstimate {
        slope,
        intercept: mm - slope * ms,
        levels_used: used,
        quotients_monotone: cert.quotients_monotone,
    })
}

/// Largest `gamma` on the sweep grid `0, step, 2 step, ..` up to `gamma_max`
/// such that `max (phi - gamma psi)` over `{psi <= s_split}` does not exceed
/// its maximum over `{s_split < psi <= s_top}` by more than `tol`: the bound
/// `phi <= gamma psi + C` is then set away from the pole.
pub fn best_feasible_gamma(
    phi: &ScalarField,
    psi: &ScalarField,
    s_top: f64,
    s_split: f64,
    gamma_max: f64,
    step: f64,
    tol: f64,
) -> Result<f64> {
    if !(s_split < s_top) || !(step > 0.0) {
        return Err(Error::Domain(format!("need s_split < s_top and step > 0")));
    }
    let nodes = sorted_nodes(phi, psi)?;
    let split = nodes.partition_point(|&i| psi.values()[i] <= s_split);
    let top = nodes.partition_point(|&i| psi.values()[i] <= s_top);
    if split == 0 || top == split {
        return Err(Error::Empty("sublevel bands".into()));
    }
    let band_max = |range: &[usize], g: f64| {
        range
            .iter()
            .map(|&i| phi.values()[i] - g * psi.values()[i])
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let mut best = 0.0;
    let steps = (gamma_max / step).floor() as usize;
    for k in 0..=steps {
        let g = k as f64 * step;
        if band_max(&nodes[..split], g) <= band_max(&nodes[split..top], g) + tol {
            best = g;
        } else {
            break;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Serialize)]
pub struct DominanceReport {
    pub passed: bool,
    pub nodes_checked: usize,
    pub violations: usize,
    /// `max (phi - psi_bar - shift)`; nonpositive when passing.
    pub max_excess: f64,
    pub worst_node: Option<usize>,
    pub slope: f64,
    pub sup_phi: f64,
    pub violating_nodes: Vec<usize>,
}

/// `phi <= psi_bar + shift` at every interior node where both are finite,
/// under the hypotheses `slope(phi against psi_bar) >= 1 - tol` and
/// `max phi <= -1 + tol`.
pub fn dominance_check(phi: &ScalarField, psi_bar: &ScalarField, shift: f64, levels: &[f64], tol: f64) -> Result<DominanceReport> {
    let nodes = sorted_nodes(phi, psi_bar)?;
    let sup_phi = nodes.iter().map(|&i| phi.values()[i]).fold(f64::NEG_INFINITY, f64::max);
    if sup_phi > -1.0 + tol {
        return Err(Error::Hypothesis(format!("sup phi = {sup_phi} exceeds -1")));
    }
    let slope = slope_estimate(&sublevel_max(phi, psi_bar, levels)?)?.slope;
    if slope < 1.0 - tol {
        return Err(Error::Hypothesis(format!("slope {slope} below 1")));
    }
    let mut report = DominanceReport {
        passed: true,
        nodes_checked: nodes.len(),
        violations: 0,
        max_excess: f64::NEG_INFINITY,
        worst_node: None,
        slope,
        sup_phi,
        violating_nodes: Vec::new(),
    };
    for &i in &nodes {
        let excess = phi.values()[i] - psi_bar.values()[i] - shift;
        if excess > report.max_excess {
            report.max_excess = excess;
            report.worst_node = Some(i);
        }
        if excess > 0.0 {
            report.violations += 1;
            if report.violating_nodes.len() < 32 {
                report.violating_nodes.push(i);
            }
        }
    }
    report.passed = report.violations == 0;
    Ok(report)
}
