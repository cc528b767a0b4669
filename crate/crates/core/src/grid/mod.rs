//! Rectilinear grids over a ball in `C^n` (n = 1, 2), scalar fields with polar
//! masks, and discrete complex Hessians.
//!
//! Real axes are ordered `(x_1, y_1, x_2, y_2)` with `z_j = x_j + i y_j`. Every
//! field stores a value at every node of the bounding box; nodes with `rho >= 0`
//! form the ghost region that carries boundary values.

pub mod io;

use crate::cone::{elementary_symmetric, HermitianForm};
use crate::error::{Error, Result};
use crate::kernel::ExtReal;
use num_complex::Complex64;
use std::sync::Arc;

pub const MAX_REAL_DIM: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    n: usize,
    radius: f64,
    nodes_per_axis: usize,
    spacing: f64,
    strides: [usize; MAX_REAL_DIM],
    num_nodes: usize,
    interior: Vec<bool>,
}

impl Domain {
    /// Ball of radius `radius` centered at the origin, gridded with
    /// `intervals` cells per real axis over `[-radius, radius]`.
    pub fn ball(n: usize, radius: f64, intervals: usize) -> Result<Arc<Domain>> {
        if !(1..=2).contains(&n) {
            return Err(Error::OutOfRange(format!("complex dimension {n}")));
        }
        if !(radius > 0.0) || intervals < 4 {
            return Err(Error::Domain(format!(
                "ball needs radius > 0 and >= 4 intervals (got {radius}, {intervals})"
            )));
        }
        let npa = intervals + 1;
        let spacing = 2.0 * radius / intervals as f64;
        let mut strides = [0; MAX_REAL_DIM];
        let mut s = 1;
        for st in strides.iter_mut().take(2 * n) {
            *st = s;
            s *= npa;
        }
        let num_nodes = s;
        let mut d = Domain {
            n,
            radius,
            nodes_per_axis: npa,
            spacing,
            strides,
            num_nodes,
            interior: Vec::new(),
        };
        d.interior = (0..num_nodes).map(|i| d.rho(i) < 0.0).collect();
        Ok(Arc::new(d))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn real_dim(&self) -> usize {
        2 * self.n
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.nodes_per_axis
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    /// Volume element `dx^{2n}`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.real_dim() as i32)
    }

    pub fn is_interior(&self, idx: usize) -> bool {
        self.interior[idx]
    }

    pub fn interior_mask(&self) -> &[bool] {
        &self.interior
    }

    pub fn interior_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_nodes).filter(move |&i| self.interior[i])
    }

    pub fn multi_index(&self, idx: usize) -> [usize; MAX_REAL_DIM] {
        let mut out = [0; MAX_REAL_DIM];
        let mut r = idx;
        for a in 0..self.real_dim() {
            out[a] = r % self.nodes_per_axis;
            r /= self.nodes_per_axis;
        }
        out
    }

    pub fn index_of(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .zip(self.strides.iter())
            .map(|(i, s)| i * s)
            .sum()
    }

    /// Real coordinates; unused trailing axes are zero.
    pub fn coords(&self, idx: usize) -> [f64; MAX_REAL_DIM] {
        let m = self.multi_index(idx);
        let mut x = [0.0; MAX_REAL_DIM];
        for a in 0..self.real_dim() {
            x[a] = -self.radius + m[a] as f64 * self.spacing;
        }
        x
    }

    pub fn z(&self, idx: usize) -> Vec<Complex64> {
        let x = self.coords(idx);
        (0..self.n)
            .map(|j| Complex64::new(x[2 * j], x[2 * j + 1]))
            .collect()
    }

    pub fn norm_sqr(&self, idx: usize) -> f64 {
        self.coords(idx).iter().map(|v| v * v).sum()
    }

    /// Defining function `rho = (|z|^2 - R^2) / (2R)`.
    pub fn rho(&self, idx: usize) -> f64 {
        (self.norm_sqr(idx) - self.radius * self.radius) / (2.0 * self.radius)
    }

    /// `i ddbar rho = Id / (2R)`.
    pub fn rho_hessian(&self) -> HermitianForm {
        HermitianForm::scaled_identity(self.n, 1.0 / (2.0 * self.radius))
    }

    /// Euclidean distance from the node to the sphere `|z| = R` (positive inside).
    pub fn depth(&self, idx: usize) -> f64 {
        self.radius - self.norm_sqr(idx).sqrt()
    }

    /// Node whose coordinates are nearest to `x` (clamped to the box).
    pub fn nearest_node(&self, x: &[f64]) -> usize {
        let mut multi = [0usize; MAX_REAL_DIM];
        for a in 0..self.real_dim() {
            let v = x.get(a).copied().unwrap_or(0.0);
            let i = ((v + self.radius) / self.spacing).round();
            multi[a] = i.clamp(0.0, (self.nodes_per_axis - 1) as f64) as usize;
        }
        self.index_of(&multi[..self.real_dim()])
    }

    /// Nodes whose multi-index is strictly inside the box, i.e. every stencil
    /// neighbour exists.
    pub fn has_box_stencil(&self, idx: usize) -> bool {
        let m = self.multi_index(idx);
        (0..self.real_dim()).all(|a| m[a] >= 1 && m[a] + 1 < self.nodes_per_axis)
    }

    /// The `4n + 8 C(n,2)` neighbours used by the complex Hessian stencil.
    pub fn stencil_offsets(&self) -> Vec<isize> {
        let mut out = Vec::new();
        let d = self.real_dim();
        for a in 0..d {
            let s = self.strides[a] as isize;
            out.push(s);
            out.push(-s);
        }
        for j in 0..self.n {
            for k in j + 1..self.n {
                for &a in &[2 * j, 2 * j + 1] {
                    for &b in &[2 * k, 2 * k + 1] {
                        let (sa, sb) = (self.strides[a] as isize, self.strides[b] as isize);
                        out.extend_from_slice(&[sa + sb, sa - sb, -sa + sb, -sa - sb]);
                    }
                }
            }
        }
        out
    }

    /// All nodes within Euclidean distance `r` of `center`, by scanning the
    /// bounding sub-box only.
    pub fn nodes_within(&self, center: &[f64], r: f64) -> Vec<usize> {
        let d = self.real_dim();
        let mut lo = [0usize; MAX_REAL_DIM];
        let mut hi = [0usize; MAX_REAL_DIM];
        for a in 0..d {
            let c = center.get(a).copied().unwrap_or(0.0);
            let l = ((c - r + self.radius) / self.spacing).floor().max(0.0) as usize;
            let h = ((c + r + self.radius) / self.spacing).ceil();
            lo[a] = l;
            hi[a] = (h.max(0.0) as usize).min(self.nodes_per_axis - 1);
        }
        let mut out = Vec::new();
        let mut cur = lo;
        loop {
            let idx = self.index_of(&cur[..d]);
            let x = self.coords(idx);
            let dist2: f64 = (0..d)
                .map(|a| (x[a] - center.get(a).copied().unwrap_or(0.0)).powi(2))
                .sum();
            if dist2 <= r * r {
                out.push(idx);
            }
            let mut a = 0;
            loop {
                if a == d {
                    return out;
                }
                if cur[a] < hi[a] {
                    cur[a] += 1;
                    break;
                }
                cur[a] = lo[a];
                a += 1;
            }
        }
    }
}

/// Central-difference complex Hessian `[d^2 f / dz_j dzbar_k]` from a value
/// accessor. The diagonal uses the 5-point Laplacian in each complex plane,
/// off-diagonals the 4-point cross differences; the result is Hermitian by
/// construction. The caller guarantees the stencil lies in the box.
#[inline]
pub fn assemble_hessian(domain: &Domain, idx: usize, get: impl Fn(usize) -> f64) -> HermitianForm {
    let n = domain.n;
    let inv = 1.0 / (4.0 * domain.spacing * domain.spacing);
    let centre = get(idx);
    let mut diag = [0.0; 2];
    for (j, dj) in diag.iter_mut().enumerate().take(n) {
        let (sx, sy) = (domain.strides[2 * j], domain.strides[2 * j + 1]);
        let sum = get(idx + sx) + get(idx - sx) + get(idx + sy) + get(idx - sy);
        *dj = (sum - 4.0 * centre) * inv;
    }
    if n == 1 {
        return HermitianForm::from_upper(1, &diag[..1], &[]);
    }
    let cross = |a: usize, b: usize| -> f64 {
        let (sa, sb) = (domain.strides[a], domain.strides[b]);
        (get(idx + sa + sb) - get(idx + sa - sb) - get(idx + sb - sa) + get(idx - sa - sb)) * inv
    };
    let re = 0.25 * (cross(0, 2) + cross(1, 3));
    let im = 0.25 * (cross(0, 3) - cross(1, 2));
    HermitianForm::from_upper(2, &diag, &[(0, 1, Complex64::new(re, im))])
}

/// A real field on the grid with a polar mask. Masked nodes may carry `-inf`;
/// unmasked nodes are always finite.
#[derive(Debug, Clone)]
pub struct ScalarField {
    domain: Arc<Domain>,
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl ScalarField {
    pub fn from_parts(domain: Arc<Domain>, values: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        if values.len() != domain.num_nodes() {
            return Err(Error::DimensionMismatch(values.len(), domain.num_nodes()));
        }
        if mask.len() != domain.num_nodes() {
            return Err(Error::DimensionMismatch(mask.len(), domain.num_nodes()));
        }
        for (i, (&v, &m)) in values.iter().zip(mask.iter()).enumerate() {
            if !m && !v.is_finite() {
                return Err(Error::Domain(format!("non-finite value {v} at unmasked node {i}")));
            }
            if v.is_nan() || v == f64::INFINITY {
                return Err(Error::Domain(format!("invalid value {v} at node {i}")));
            }
        }
        Ok(Self {
            domain,
            values,
            mask,
        })
    }

    /// Evaluates `f` at every node; `NegInf` results become masked entries.
    pub fn from_fn(domain: Arc<Domain>, f: impl Fn(usize) -> ExtReal) -> Self {
        let mut values = Vec::with_capacity(domain.num_nodes());
        let mut mask = Vec::with_capacity(domain.num_nodes());
        for i in 0..domain.num_nodes() {
            match f(i) {
                ExtReal::Finite(v) => {
                    values.push(v);
                    mask.push(false);
                }
                ExtReal::NegInf => {
                    values.push(f64::NEG_INFINITY);
                    mask.push(true);
                }
            }
        }
        Self {
            domain,
            values,
            mask,
        }
    }

    pub fn from_real_fn(domain: Arc<Domain>, f: impl Fn(usize) -> f64) -> Self {
        let values = (0..domain.num_nodes()).map(f).collect();
        let mask = vec![false; domain.num_nodes()];
        Self {
            domain,
            values,
            mask,
        }
    }

    pub fn constant(domain: Arc<Domain>, v: f64) -> Self {
        Self::from_real_fn(domain, |_| v)
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn value(&self, idx: usize) -> ExtReal {
        if self.values[idx] == f64::NEG_INFINITY {
            ExtReal::NegInf
        } else {
            ExtReal::Finite(self.values[idx])
        }
    }

    pub fn is_masked(&self, idx: usize) -> bool {
        self.mask[idx]
    }

    /// Pointwise map over finite values; `-inf` entries and the mask are kept.
    pub fn map(&self, f: impl Fn(usize, f64) -> f64) -> ScalarField {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| if v.is_finite() { f(i, v) } else { v })
            .collect();
        Self {
            domain: self.domain.clone(),
            values,
            mask: self.mask.clone(),
        }
    }

    /// Replaces the mask, keeping values. Masked entries may stay finite.
    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.values.len() {
            return Err(Error::DimensionMismatch(mask.len(), self.values.len()));
        }
        for (i, (&v, &m)) in self.values.iter().zip(mask.iter()).enumerate() {
            if !m && !v.is_finite() {
                return Err(Error::Domain(format!("unmasking -inf at node {i}")));
            }
        }
        self.mask = mask;
        Ok(self)
    }

    /// Whether the node is interior and its whole Hessian stencil is unmasked.
    pub fn has_full_stencil(&self, idx: usize, offsets: &[isize]) -> bool {
        if !self.domain.is_interior(idx) || self.mask[idx] {
            return false;
        }
        offsets.iter().all(|&o| {
            let j = (idx as isize + o) as usize;
            !self.mask[j]
        })
    }

    /// Unmasked interior nodes whose stencil is also unmasked.
    pub fn stencil_nodes(&self) -> Vec<usize> {
        let offsets = self.domain.stencil_offsets();
        self.domain
            .interior_nodes()
            .filter(|&i| self.has_full_stencil(i, &offsets))
            .collect()
    }

    pub fn min_finite(&self) -> Option<f64> {
        self.values
            .iter()
            .zip(self.mask.iter())
            .filter(|(_, &m)| !m)
            .map(|(&v, _)| v)
            .fold(None, |a: Option<f64>, v| Some(a.map_or(v, |a| a.min(v))))
    }

    pub fn max_finite(&self) -> Option<f64> {
        self.values
            .iter()
            .zip(self.mask.iter())
            .filter(|(_, &m)| !m)
            .map(|(&v, _)| v)
            .fold(None, |a: Option<f64>, v| Some(a.map_or(v, |a| a.max(v))))
    }
}

pub fn complex_hessian(f: &ScalarField, idx: usize) -> Result<HermitianForm> {
    let domain = &f.domain;
    if idx >= domain.num_nodes() {
        return Err(Error::OutOfRange(format!("node {idx}")));
    }
    if !domain.is_interior(idx) || !domain.has_box_stencil(idx) {
        return Err(Error::StencilUnavailable(idx));
    }
    let offsets = domain.stencil_offsets();
    if !f.has_full_stencil(idx, &offsets) {
        return Err(Error::StencilUnavailable(idx));
    }
    Ok(assemble_hessian(domain, idx, |j| f.values[j]))
}

/// `sigma_m` of the discrete complex Hessian; negative for non-m-sh fields.
pub fn hessian_measure_density(f: &ScalarField, m: usize, idx: usize) -> Result<f64> {
    let h = complex_hessian(f, idx)?;
    if m == 0 || m > h.dim() {
        return Err(Error::OutOfRange(format!("m = {m}")));
    }
    Ok(elementary_symmetric(&h.eigenvalues())[m])
}

/// Pointwise `max(f, s)`; removes every `-inf` and clears the mask.
pub fn canonical_cutoff(f: &ScalarField, s: f64) -> ScalarField {
    let values = f.values.iter().map(|&v| v.max(s)).collect();
    ScalarField {
        domain: f.domain.clone(),
        values,
        mask: vec![false; f.values.len()],
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize)]
pub struct MassSample {
    pub mass: f64,
    pub cutoff_level: f64,
    pub nodes: usize,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = v.len();
    Some(if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    })
}

/// Regularized Hessian mass of `f` within distance `r` of `centers`.
///
/// The density is evaluated on the canonical cutoff `max(f, s)` where `s` is the
/// median of `f` over unmasked nodes on the sphere of radius `r / 2` about the
/// centres, so the mass carried by the polar part lands well inside the ball.
pub fn mass_near(f: &ScalarField, m: usize, centers: &[usize], r: f64) -> Result<MassSample> {
    let domain = &f.domain;
    let dx = domain.spacing();
    if r < 2.0 * dx {
        return Err(Error::Domain(format!("mass radius {r} below two grid steps")));
    }
    if centers.is_empty() {
        return Err(Error::Empty("no centres".into()));
    }
    if m == 0 || m > domain.n() {
        return Err(Error::OutOfRange(format!("m = {m}")));
    }
    let d = domain.real_dim();
    let centre_coords: Vec<[f64; MAX_REAL_DIM]> = centers.iter().map(|&c| domain.coords(c)).collect();
    let dist = |idx: usize| -> f64 {
        let x = domain.coords(idx);
        centre_coords
            .iter()
            .map(|c| (0..d).map(|a| (x[a] - c[a]).powi(2)).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    };
    let mut candidates: Vec<usize> = Vec::new();
    for c in &centre_coords {
        candidates.extend(domain.nodes_within(&c[..d], r + dx));
    }
    candidates.sort_unstable();
    candidates.dedup();

    let sphere_r = 0.5 * r;
    let on_sphere: Vec<f64> = candidates
        .iter()
        .filter(|&&i| !f.mask[i] && (dist(i) - sphere_r).abs() <= 0.5 * dx)
        .map(|&i| f.values[i])
        .collect();
    let s = median(on_sphere)
        .ok_or_else(|| Error::Empty(format!("no unmasked nodes on sphere of radius {sphere_r}")))?;

    let cut = |j: usize| f.values[j].max(s);
    let mut mass = 0.0;
    let mut nodes = 0;
    for &i in &candidates {
        if !domain.is_interior(i) || !domain.has_box_stencil(i) || dist(i) > r {
            continue;
        }
        let h = assemble_hessian(domain, i, cut);
        let dens = elementary_symmetric(&h.eigenvalues())[m];
        mass += dens.max(0.0);
        nodes += 1;
    }
    Ok(MassSample {
        mass: mass * domain.cell_volume(),
        cutoff_level: s,
        nodes,
    })
}

/// Exact Euclidean distance (in length units) from every node to the nearest
/// node of `set`, by the separable lower-envelope transform. Nodes are at
/// infinite distance when `set` is empty.
pub fn distance_to_set(domain: &Domain, set: &[bool]) -> Vec<f64> {
    const BIG: f64 = 1e30;
    let mut f: Vec<f64> = set.iter().map(|&s| if s { 0.0 } else { BIG }).collect();
    let npa = domain.nodes_per_axis();
    let mut line = vec![0.0; npa];
    let mut out = vec![0.0; npa];
    for a in 0..domain.real_dim() {
        let stride = domain.stride(a);
        for start in 0..domain.num_nodes() {
            if (start / stride) % npa != 0 {
                continue;
            }
            for (k, l) in line.iter_mut().enumerate() {
                *l = f[start + k * stride];
            }
            edt_1d(&line, &mut out);
            for (k, o) in out.iter().enumerate() {
                f[start + k * stride] = *o;
            }
        }
    }
    let dx = domain.spacing();
    f.iter()
        .map(|&v| if v >= BIG { f64::INFINITY } else { v.sqrt() * dx })
        .collect()
}

/// Squared-distance transform of a sampled function along one line.
fn edt_1d(f: &[f64], d: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= z[k] {
                // k == 0: replace the only parabola
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
                break;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    k = 0;
    for (q, dq) in d.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        *dq = (q as f64 - p as f64).powi(2) + f[p];
    }
}
