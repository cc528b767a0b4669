//! Riesz kernels `K_p`, their inverses `L_p`, and the reparametrizations
//! `chi = K_{q+gamma} o L_q` used by the barrier constructions.
//!
//! `K_p(s) = log s` for `p = 0` and `s^p / p` otherwise. The value at `s = 0`
//! is an explicit [`ExtReal::NegInf`] for `p <= 0`, never a large negative float.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

pub const P_MIN: f64 = -8.0;
pub const P_MAX: f64 = 1.0;

/// A real number or negative infinity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ExtReal {
    Finite(f64),
    NegInf,
}

impl ExtReal {
    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(v),
            ExtReal::NegInf => None,
        }
    }

    pub fn is_neg_inf(self) -> bool {
        matches!(self, ExtReal::NegInf)
    }

    /// IEEE encoding, for storage in dense fields that carry a separate mask.
    pub fn to_f64(self) -> f64 {
        match self {
            ExtReal::Finite(v) => v,
            ExtReal::NegInf => f64::NEG_INFINITY,
        }
    }
}

/// Exponent selecting a kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    p: f64,
}

impl KernelParams {
    pub fn new(p: f64) -> Result<Self> {
        if !p.is_finite() || !(P_MIN..=P_MAX).contains(&p) {
            return Err(Error::UnsupportedExponent(p));
        }
        Ok(Self { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    fn is_log(&self) -> bool {
        self.p == 0.0
    }

    /// `K_p(s)`.
    pub fn k(&self, s: f64) -> Result<ExtReal> {
        if !(s >= 0.0) {
            return Err(Error::Domain(format!("K_p needs s >= 0, got {s}")));
        }
        if s == 0.0 {
            return Ok(if self.p <= 0.0 {
                ExtReal::NegInf
            } else {
                ExtReal::Finite(0.0)
            });
        }
        Ok(ExtReal::Finite(self.k_pos(s)))
    }

    /// `K_p(s)` for `s > 0`, unchecked.
    #[inline]
    pub fn k_pos(&self, s: f64) -> f64 {
        if self.is_log() {
            s.ln()
        } else {
            s.powf(self.p) / self.p
        }
    }

    /// `K_p'(s) = s^{p-1}`.
    #[inline]
    pub fn dk(&self, s: f64) -> f64 {
        s.powf(self.p - 1.0)
    }

    /// `K_p''(s) = (p-1) s^{p-2}`.
    #[inline]
    pub fn d2k(&self, s: f64) -> f64 {
        (self.p - 1.0) * s.powf(self.p - 2.0)
    }

    /// `L_p(t)`, the inverse of `K_p`.
    pub fn l(&self, t: ExtReal) -> Result<f64> {
        let t = match t {
            ExtReal::NegInf if self.p <= 0.0 => return Ok(0.0),
            ExtReal::NegInf => {
                return Err(Error::Domain("L_p(-inf) needs p <= 0".into()));
            }
            ExtReal::Finite(t) => t,
        };
        if !t.is_finite() {
            return Err(Error::Domain(format!("L_p needs a finite argument, got {t}")));
        }
        if self.is_log() {
            return Ok(t.exp());
        }
        let pt = self.p * t;
        // p < 0 needs t < 0; p > 0 needs t >= 0.
        if pt < 0.0 || (self.p < 0.0 && t == 0.0) {
            return Err(Error::Domain(format!(
                "L_p undefined for p = {}, t = {t}",
                self.p
            )));
        }
        Ok(pt.powf(1.0 / self.p))
    }
}

pub fn kernel_k(params: KernelParams, s: f64) -> Result<ExtReal> {
    params.k(s)
}

pub fn kernel_l(params: KernelParams, t: f64) -> Result<f64> {
    if t == f64::NEG_INFINITY {
        params.l(ExtReal::NegInf)
    } else {
        params.l(ExtReal::Finite(t))
    }
}

/// `chi(t) = K_{q+gamma}(L_q(t))` with its first two derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chi {
    pub value: f64,
    pub first_deriv: f64,
    pub second_deriv: f64,
}

pub fn chi_eval(q: f64, gamma: f64, t: f64) -> Result<Chi> {
    if !(gamma > 0.0) {
        return Err(Error::Domain(format!("chi needs gamma > 0, got {gamma}")));
    }
    if q + gamma > P_MAX {
        return Err(Error::Domain(format!(
            "chi needs q + gamma <= 1, got {}",
            q + gamma
        )));
    }
    let inner = KernelParams::new(q)?;
    let outer = KernelParams::new(q + gamma)?;
    let l = inner.l(ExtReal::Finite(t))?;
    if l == 0.0 {
        return Err(Error::Domain(format!("chi evaluated at L_q(t) = 0 (t = {t})")));
    }
    Ok(Chi {
        value: outer.k_pos(l),
        first_deriv: l.powf(gamma),
        second_deriv: gamma * l.powf(gamma - q),
    })
}
