//! Hermitian (1,1)-forms in flat coordinates and the Garding cones `Gamma_m`.
//!
//! Normalization: `sigma_k` is the raw elementary symmetric polynomial of the
//! eigenvalues. For a form `a` on `C^n` the wedge density is
//! `a^k ^ w^{n-k} = (k! (n-k)! / n!) sigma_k(a) w^n`; that constant is
//! [`wedge_constant`] and is never folded into reported densities.
//!
//! The linearized operator `g -> i ddbar g ^ T ^ w^{n-m}` is evaluated as the
//! polarization `P` of `sigma_m` with `P(A, .., A) = m! sigma_m(A)`, so with
//! every factor equal to the identity it reduces to
//! `(m-1)! C(n-1, m-1) tr(g)`.

use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub const MAX_DIM: usize = 3;
const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HermitianForm {
    dim: usize,
    entries: [[Complex64; MAX_DIM]; MAX_DIM],
}

impl HermitianForm {
    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dim must be 1..=3");
        Self {
            dim,
            entries: [[Complex64::new(0.0, 0.0); MAX_DIM]; MAX_DIM],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, s: f64) -> Self {
        let mut f = Self::zeros(dim);
        for i in 0..dim {
            f.entries[i][i] = Complex64::new(s, 0.0);
        }
        f
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut f = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            f.entries[i][i] = Complex64::new(v, 0.0);
        }
        f
    }

    /// Builds a form from a full matrix, rejecting non-Hermitian input.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let dim = rows.len();
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::OutOfRange(format!("form dimension {dim}")));
        }
        let mut f = Self::zeros(dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimensionMismatch(row.len(), dim));
            }
            f.entries[i][..dim].copy_from_slice(row);
        }
        let asym = f.asymmetry();
        let scale = 1.0 + f.max_abs_entry();
        if asym > HERMITIAN_TOL * scale {
            return Err(Error::NotHermitian(asym));
        }
        Ok(f)
    }

    /// Builds a form from the upper triangle; the lower triangle is its conjugate.
    pub(crate) fn from_upper(dim: usize, diag: &[f64], upper: &[(usize, usize, Complex64)]) -> Self {
        let mut f = Self::zeros(dim);
        for i in 0..dim {
            f.entries[i][i] = Complex64::new(diag[i], 0.0);
        }
        for &(i, j, z) in upper {
            f.entries[i][j] = z;
            f.entries[j][i] = z.conj();
        }
        f
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.entries[i][j]
    }

    fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                worst = worst.max((self.entries[i][j] - self.entries[j][i].conj()).norm());
            }
        }
        worst
    }

    fn max_abs_entry(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                m = m.max(self.entries[i][j].norm());
            }
        }
        m
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.entries[i][i].re).sum()
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        let mut out = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.entries[i][j] += other.entries[i][j];
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(self.add(&other.scale(-1.0))?)
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.entries[i][j] *= s;
            }
        }
        out
    }

    /// `self + s * Id`.
    pub fn shift(&self, s: f64) -> Self {
        let mut out = *self;
        for i in 0..self.dim {
            out.entries[i][i].re += s;
        }
        out
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch(self.dim, other.dim));
        }
        Ok(())
    }

    /// Real determinant of the Hermitian matrix.
    pub fn det(&self) -> f64 {
        let a = &self.entries;
        match self.dim {
            1 => a[0][0].re,
            2 => a[0][0].re * a[1][1].re - a[0][1].norm_sqr(),
            _ => {
                let d = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
                    - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
                    + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
                d.re
            }
        }
    }

    /// Eigenvalues in ascending order, from the closed-form solvers.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let a = &self.entries;
        match self.dim {
            1 => vec![a[0][0].re],
            2 => {
                let (p, q) = (a[0][0].re, a[1][1].re);
                let mean = 0.5 * (p + q);
                let r = (0.25 * (p - q) * (p - q) + a[0][1].norm_sqr()).sqrt();
                vec![mean - r, mean + r]
            }
            _ => eig3(self),
        }
    }
}

/// Trigonometric solution of the characteristic cubic of a 3x3 Hermitian matrix.
fn eig3(f: &HermitianForm) -> Vec<f64> {
    let a = &f.entries;
    let off = a[0][1].norm_sqr() + a[0][2].norm_sqr() + a[1][2].norm_sqr();
    let (d0, d1, d2) = (a[0][0].re, a[1][1].re, a[2][2].re);
    let mut out = if off == 0.0 {
        vec![d0, d1, d2]
    } else {
        let q = (d0 + d1 + d2) / 3.0;
        let p2 = (d0 - q).powi(2) + (d1 - q).powi(2) + (d2 - q).powi(2) + 2.0 * off;
        let p = (p2 / 6.0).sqrt();
        // B = (A - qI) / p
        let b = f.shift(-q).scale(1.0 / p);
        let r = (0.5 * b.det()).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let e1 = q + 2.0 * p * phi.cos();
        let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        let e2 = 3.0 * q - e1 - e3;
        vec![e1, e2, e3]
    };
    out.sort_by(|x, y| x.partial_cmp(y).unwrap());
    out
}

/// `k`-th elementary symmetric polynomial.
pub fn sigma_k(lambdas: &[f64], k: usize) -> Result<f64> {
    if k == 0 || k > lambdas.len() {
        return Err(Error::OutOfRange(format!(
            "sigma_k needs 1 <= k <= {}, got {k}",
            lambdas.len()
        )));
    }
    Ok(elementary_symmetric(lambdas)[k])
}

/// All `e_0 ..= e_n` by the usual recurrence.
pub fn elementary_symmetric(lambdas: &[f64]) -> Vec<f64> {
    let mut e = vec![0.0; lambdas.len() + 1];
    e[0] = 1.0;
    for (i, &l) in lambdas.iter().enumerate() {
        for k in (1..=i + 1).rev() {
            e[k] += l * e[k - 1];
        }
    }
    e
}

/// `a^k ^ w^{n-k} = wedge_constant(n, k) * sigma_k * w^n`.
pub fn wedge_constant(n: usize, k: usize) -> f64 {
    factorial(k) * factorial(n - k) / factorial(n)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

fn binomial(n: usize, k: usize) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeCheckReport {
    /// `sigma_1 ..= sigma_m`.
    pub sigma_values: Vec<f64>,
    pub is_member: bool,
    /// `min_k sigma_k / (1 + |lambda|_inf)^k`.
    pub margin: f64,
}

/// [`is_m_positive`] for a known eigenvalue vector.
pub fn cone_report(lambdas: &[f64], m: usize, tol: f64) -> ConeCheckReport {
    let e = elementary_symmetric(lambdas);
    let scale = 1.0 + lambdas.iter().fold(0.0f64, |a, l| a.max(l.abs()));
    let mut margin = f64::INFINITY;
    let mut sigma_values = Vec::with_capacity(m);
    for (k, &s) in e.iter().enumerate().take(m + 1).skip(1) {
        sigma_values.push(s);
        margin = margin.min(s / scale.powi(k as i32));
    }
    ConeCheckReport {
        sigma_values,
        is_member: margin >= -tol,
        margin,
    }
}

/// Pointwise `m`-positivity: `sigma_k(lambda) >= -tol (1 + |lambda|_inf)^k` for `k <= m`.
pub fn is_m_positive(h: &HermitianForm, m: usize, tol: f64) -> Result<ConeCheckReport> {
    if m == 0 || m > h.dim {
        return Err(Error::OutOfRange(format!("m = {m} for dim {}", h.dim)));
    }
    let asym = h.asymmetry();
    if asym > HERMITIAN_TOL * (1.0 + h.max_abs_entry()) {
        return Err(Error::NotHermitian(asym));
    }
    Ok(cone_report(&h.eigenvalues(), m, tol))
}

/// Membership of an eigenvalue vector in the closed cone, no tolerance.
pub fn in_closed_cone(lambdas: &[f64], m: usize) -> bool {
    let e = elementary_symmetric(lambdas);
    e[1..=m].iter().all(|&s| s >= 0.0)
}

/// `T >=_m S`.
pub fn m_dominates(t: &HermitianForm, s: &HermitianForm, m: usize, tol: f64) -> Result<bool> {
    Ok(is_m_positive(&t.sub(s)?, m, tol)?.is_member)
}

/// Largest `v` with `lambda(H) - v c (1, .., 1)` in the closed cone `Gamma_m`.
///
/// The admissible set of `v` is a half-line, bracketed by
/// `[lambda_min / c, mean(lambda) / c]`; the general case bisects to width `tol`.
/// For `m = 1` and `m = dim` the endpoints are exact and returned directly.
pub fn max_shift_in_cone(h: &HermitianForm, m: usize, c: f64, tol: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::Domain(format!("max_shift_in_cone needs c > 0, got {c}")));
    }
    if m == 0 || m > h.dim {
        return Err(Error::OutOfRange(format!("m = {m} for dim {}", h.dim)));
    }
    let lambdas = h.eigenvalues();
    Ok(max_shift_for_eigenvalues(&lambdas, m, c, tol))
}

pub fn max_shift_for_eigenvalues(lambdas: &[f64], m: usize, c: f64, tol: f64) -> f64 {
    let n = lambdas.len();
    let mean = lambdas.iter().sum::<f64>() / n as f64;
    let lmin = lambdas.iter().cloned().fold(f64::INFINITY, f64::min);
    if m == 1 {
        return mean / c;
    }
    if m == n {
        return lmin / c;
    }
    max_shift_bisect(lambdas, m, c, tol)
}

pub(crate) fn max_shift_bisect(lambdas: &[f64], m: usize, c: f64, tol: f64) -> f64 {
    let n = lambdas.len();
    let mean = lambdas.iter().sum::<f64>() / n as f64;
    let lmin = lambdas.iter().cloned().fold(f64::INFINITY, f64::min);
    let (mut lo, mut hi) = (lmin / c, mean / c);
    let shifted = |v: f64| -> Vec<f64> { lambdas.iter().map(|l| l - v * c).collect() };
    if in_closed_cone(&shifted(hi), m) {
        return hi;
    }
    let tol = tol.max(f64::EPSILON * (1.0 + lo.abs().max(hi.abs())));
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if in_closed_cone(&shifted(mid), m) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Mixed discriminant `D(A_1, .., A_n)` with `D(A, .., A) = n! det A`,
/// via the polarization identity over subsets.
pub fn mixed_discriminant(forms: &[HermitianForm]) -> Result<f64> {
    let n = forms.len();
    if n == 0 || n > MAX_DIM {
        return Err(Error::OutOfRange(format!("{n} forms")));
    }
    for f in forms {
        if f.dim != n {
            return Err(Error::DimensionMismatch(f.dim, n));
        }
    }
    let mut total = 0.0;
    for mask in 1u32..(1 << n) {
        let mut sum = HermitianForm::zeros(n);
        for (i, f) in forms.iter().enumerate() {
            if mask & (1 << i) != 0 {
                sum = sum.add(f)?;
            }
        }
        let sign = if (n - mask.count_ones() as usize) % 2 == 0 {
            1.0
        } else {
            -1.0
        };
        total += sign * sum.det();
    }
    Ok(total)
}

/// Density of `i ddbar g ^ T ^ w^{n-m}` where `T` is the wedge of the `m - 1`
/// factors, as the polarized `sigma_m` of `(g, factors..)`.
pub fn m_elliptic_apply(factors: &[HermitianForm], g_hess: &HermitianForm) -> Result<f64> {
    let n = g_hess.dim;
    let m = factors.len() + 1;
    if m > n {
        return Err(Error::OutOfRange(format!("{} factors for dim {n}", factors.len())));
    }
    let mut forms = Vec::with_capacity(n);
    forms.push(*g_hess);
    forms.extend_from_slice(factors);
    while forms.len() < n {
        forms.push(HermitianForm::identity(n));
    }
    Ok(mixed_discriminant(&forms)? / factorial(n - m))
}

/// `m_elliptic_apply(factors, Id)`: the trace coefficient of the operator,
/// which must be strictly positive for the operator to be elliptic.
pub fn trace_coefficient(factors: &[HermitianForm], n: usize) -> Result<f64> {
    m_elliptic_apply(factors, &HermitianForm::identity(n))
}

/// Normalization constant of `m_elliptic_apply` against the identity:
/// `(m-1)! C(n-1, m-1)`.
pub fn identity_operator_constant(n: usize, m: usize) -> f64 {
    factorial(m - 1) * binomial(n - 1, m - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    pub(crate) fn random_form(rng: &mut impl Rng, dim: usize, scale: f64) -> HermitianForm {
        let diag: Vec<f64> = (0..dim).map(|_| rng.gen_range(-scale..scale)).collect();
        let mut upper = Vec::new();
        for i in 0..dim {
            for j in i + 1..dim {
                upper.push((i, j, c(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale))));
            }
        }
        HermitianForm::from_upper(dim, &diag, &upper)
    }

    /// Sum over all k-subsets of products, by enumeration.
    fn brute_sigma(l: &[f64], k: usize) -> f64 {
        let n = l.len();
        (0u32..(1 << n))
            .filter(|m| m.count_ones() as usize == k)
            .map(|m| (0..n).filter(|i| m & (1 << i) != 0).map(|i| l[i]).product::<f64>())
            .sum()
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(sigma_k(&[1.0, 1.0, 1.0], 2).unwrap(), 3.0);
        let eps = 0.1;
        assert!((sigma_k(&[1.0, eps, -eps], 2).unwrap() + 0.01).abs() < 1e-15);
        assert!(sigma_k(&[1.0, 2.0], 3).is_err());
        assert!(sigma_k(&[1.0, 2.0], 0).is_err());
    }

    #[test]
    fn sigma_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            for n in 2..=3 {
                let l: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
                for k in 1..=n {
                    assert!((sigma_k(&l, k).unwrap() - brute_sigma(&l, k)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn eigenvalues_reproduce_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..300 {
            for n in 1..=3 {
                let f = random_form(&mut rng, n, 2.0);
                let l = f.eigenvalues();
                assert!((l.iter().sum::<f64>() - f.trace()).abs() < 1e-10);
                assert!((l.iter().product::<f64>() - f.det()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn counterexample_not_two_positive() {
        for eps in [0.1, 0.01] {
            let f = HermitianForm::diag(&[1.0, eps, -eps]);
            assert!(is_m_positive(&f, 1, 0.0).unwrap().is_member);
            assert!(!is_m_positive(&f, 2, 0.0).unwrap().is_member);
        }
    }

    #[test]
    fn corollary_leading_term_on_boundary() {
        // diag(1 - k/m, Id_{k-1}, 0) with k = m = 2, n = 3
        let f = HermitianForm::diag(&[0.0, 1.0, 0.0]);
        let r = is_m_positive(&f, 2, 0.0).unwrap();
        assert!(r.is_member);
        assert_eq!(r.sigma_values[1], 0.0);
        assert_eq!(r.margin, 0.0);
    }

    #[test]
    fn identity_is_member() {
        for n in 1..=3 {
            for m in 1..=n {
                let r = is_m_positive(&HermitianForm::identity(n), m, 0.0).unwrap();
                assert!(r.is_member && r.margin > 0.0);
            }
        }
    }

    #[test]
    fn rejects_non_hermitian() {
        let rows = vec![vec![c(1.0, 0.0), c(0.5, 0.2)], vec![c(0.5, 0.2), c(1.0, 0.0)]];
        assert!(matches!(HermitianForm::from_rows(&rows), Err(Error::NotHermitian(_))));
        let ok = vec![vec![c(1.0, 0.0), c(0.5, 0.2)], vec![c(0.5, -0.2), c(1.0, 0.0)]];
        assert!(HermitianForm::from_rows(&ok).is_ok());
    }

    #[test]
    fn dominance_examples() {
        let id = HermitianForm::identity(2);
        assert!(m_dominates(&id.scale(2.0), &id, 2, 0.0).unwrap());
        assert!(m_dominates(&id, &id, 2, 0.0).unwrap());
        assert!(m_dominates(&id, &HermitianForm::identity(3), 1, 0.0).is_err());
    }

    #[test]
    fn mutual_dominance_is_rare() {
        // both directions can only hold when every sigma_k(T - S) vanishes
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut both = 0;
        for _ in 0..2000 {
            let t = random_form(&mut rng, 3, 1.0);
            let s = random_form(&mut rng, 3, 1.0);
            if m_dominates(&t, &s, 1, 0.0).unwrap() && m_dominates(&s, &t, 1, 0.0).unwrap() {
                both += 1;
            }
        }
        assert_eq!(both, 0);
    }

    #[test]
    fn shift_examples() {
        let id = HermitianForm::identity(2);
        assert_eq!(max_shift_in_cone(&id, 2, 1.0, 1e-12).unwrap(), 1.0);
        let d = HermitianForm::diag(&[2.0, 0.0]);
        assert_eq!(max_shift_in_cone(&d, 1, 1.0, 1e-12).unwrap(), 1.0);
        assert_eq!(max_shift_in_cone(&d, 2, 1.0, 1e-12).unwrap(), 0.0);
        assert!(max_shift_in_cone(&d, 2, 0.0, 1e-12).is_err());
    }

    #[test]
    fn closed_form_shifts_agree_with_bisection() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..300 {
            for n in 1..=3 {
                let l = random_form(&mut rng, n, 2.0).eigenvalues();
                for m in [1, n] {
                    let fast = max_shift_for_eigenvalues(&l, m, 1.5, 1e-13);
                    let slow = max_shift_bisect(&l, m, 1.5, 1e-13);
                    assert!((fast - slow).abs() < 1e-10, "n={n} m={m}");
                }
            }
        }
    }

    #[test]
    fn n2_mixed_discriminant_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..500 {
            let g = random_form(&mut rng, 2, 2.0);
            let u = random_form(&mut rng, 2, 2.0);
            let closed = g.get(0, 0).re * u.get(1, 1).re + g.get(1, 1).re * u.get(0, 0).re
                - 2.0 * (g.get(0, 1) * u.get(1, 0)).re;
            assert!((m_elliptic_apply(&[u], &g).unwrap() - closed).abs() < 1e-12);
        }
    }

    #[test]
    fn elliptic_apply_examples() {
        let id = HermitianForm::identity(2);
        assert_eq!(m_elliptic_apply(&[id], &id).unwrap(), 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..100 {
            let a = random_form(&mut rng, 3, 1.0);
            let b = random_form(&mut rng, 3, 1.0);
            let x = m_elliptic_apply(&[b], &a).unwrap();
            let y = m_elliptic_apply(&[a], &b).unwrap();
            assert!((x - y).abs() < 1e-12);
            // identity factors reduce to a multiple of the trace
            for m in 1..=3 {
                let ids = vec![HermitianForm::identity(3); m - 1];
                let v = m_elliptic_apply(&ids, &a).unwrap();
                assert!((v - identity_operator_constant(3, m) * a.trace()).abs() < 1e-12);
            }
            // diagonal polarization is m! sigma_m
            for m in 1..=3 {
                let fs = vec![a; m - 1];
                let v = m_elliptic_apply(&fs, &a).unwrap();
                let s = sigma_k(&a.eigenvalues(), m).unwrap();
                assert!((v - factorial(m) * s).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn wedge_constants() {
        assert_eq!(wedge_constant(2, 2), 1.0);
        assert_eq!(wedge_constant(2, 1), 0.5);
        assert!((wedge_constant(3, 1) - 1.0 / 3.0).abs() < 1e-15);
    }

    proptest::proptest! {
        #[test]
        fn cones_are_nested(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = random_form(&mut rng, 3, 1.0).shift(0.6);
            for m in 2..=3 {
                if is_m_positive(&f, m, 0.0).unwrap().is_member {
                    proptest::prop_assert!(is_m_positive(&f, m - 1, 0.0).unwrap().is_member);
                }
            }
        }

        #[test]
        fn cone_is_convex(seed in 0u64..10_000, m in 1usize..=3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_form(&mut rng, 3, 1.0).shift(0.8);
            let b = random_form(&mut rng, 3, 1.0).shift(0.8);
            if is_m_positive(&a, m, 0.0).unwrap().is_member && is_m_positive(&b, m, 0.0).unwrap().is_member {
                let mid = a.add(&b).unwrap().scale(0.5);
                proptest::prop_assert!(is_m_positive(&mid, m, 1e-12).unwrap().is_member);
            }
        }

        #[test]
        fn shift_lands_on_boundary(seed in 0u64..10_000, m in 1usize..=3, c in 0.1f64..4.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = random_form(&mut rng, 3, 2.0);
            let tol = 1e-12;
            let v = max_shift_in_cone(&f, m, c, tol).unwrap();
            let l: Vec<f64> = f.eigenvalues().iter().map(|x| x - v * c).collect();
            let e = elementary_symmetric(&l);
            let lo = e[1..=m].iter().cloned().fold(f64::INFINITY, f64::min);
            proptest::prop_assert!(lo.abs() <= 1e-9, "min sigma {lo}");
        }
    }
}
