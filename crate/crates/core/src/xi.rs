//! The one-dimensional family Ξ_ρ(s) = ∫₀^∞ dt/t t^{s/2} Ψ(t) e^{−ρ ln²t}
//! and related Mellin transforms, all integrated on the axis x = ln t.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::quadrature::{integrate_interval, log_window, QuadSpec};
use crate::theta::{CompiledOp, ThetaOperator};

/// Results with ∫|f|/|∫f| above this have lost most of their digits.
pub const CONDITION_WARNING: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum KernelTheta {
    Op(ThetaOperator),
    /// No theta factor: a pure Gaussian in ln t.
    PureExp,
}

/// ∫₀^∞ dt/t · t^arg · ln^m t · (θΨ)(t) · e^{−ρ ln²t}
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MellinKernel {
    pub theta: KernelTheta,
    pub log_power: u32,
    pub rho: Complex64,
    pub arg: Complex64,
}

impl MellinKernel {
    pub fn new(theta: KernelTheta, rho: Complex64, arg: Complex64) -> Self {
        MellinKernel {
            theta,
            log_power: 0,
            rho,
            arg,
        }
    }

    pub fn with_log_power(mut self, m: u32) -> Self {
        self.log_power = m;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XiValue {
    pub value: Complex64,
    pub quad_error: f64,
    pub evaluations: usize,
    /// ∫|f| / |∫f| for the underlying quadrature.
    pub condition: f64,
}

impl XiValue {
    pub fn exact(value: Complex64) -> Self {
        XiValue {
            value,
            quad_error: 0.0,
            evaluations: 0,
            condition: 1.0,
        }
    }

    pub fn ill_conditioned(&self) -> bool {
        self.condition > CONDITION_WARNING
    }

    /// c·self + other, with error estimates added.
    pub fn axpy(self, c: Complex64, other: XiValue) -> XiValue {
        XiValue {
            value: c * self.value + other.value,
            quad_error: c.norm() * self.quad_error + other.quad_error,
            evaluations: self.evaluations + other.evaluations,
            condition: self.condition.max(other.condition),
        }
    }

    pub fn scale(self, c: Complex64) -> XiValue {
        self.axpy(c, XiValue::exact(Complex64::new(0.0, 0.0)))
    }
}

pub(crate) fn check_rho(rho: Complex64) -> Result<()> {
    if !(rho.re > 0.0) || !rho.im.is_finite() {
        return domain(format!("need Re ρ > 0, got {rho}"));
    }
    Ok(())
}

fn check_arg(a: Complex64) -> Result<()> {
    if !a.re.is_finite() || !a.im.is_finite() {
        return domain(format!("argument must be finite, got {a}"));
    }
    Ok(())
}

/// Window for ∫e^{bound}: tails below abs_tol/100 and below rel_tol/100 of the peak.
fn window<F: Fn(f64) -> f64>(bound: F, start: f64, spec: &QuadSpec) -> (f64, f64) {
    let abs_target = (spec.abs_tol / 100.0).ln();
    let (lo, hi) = log_window(&bound, abs_target, start, 0.25);
    let n = ((hi - lo) / 0.05).ceil().max(1.0) as usize;
    let peak = (0..=n)
        .map(|i| bound(lo + (hi - lo) * i as f64 / n as f64))
        .fold(f64::NEG_INFINITY, f64::max);
    let rel_target = peak + (spec.rel_tol / 100.0).ln();
    if rel_target < abs_target {
        log_window(&bound, rel_target, start, 0.25)
    } else {
        (lo, hi)
    }
}

/// Shared 1D log-axis integral with a precompiled theta operator.
pub(crate) fn mellin_op(
    op: &CompiledOp,
    m: u32,
    rho: Complex64,
    a: Complex64,
    spec: &QuadSpec,
) -> Result<XiValue> {
    check_rho(rho)?;
    check_arg(a)?;
    let mf = m as f64;
    let bound = |x: f64| a.re * x - rho.re * x * x + mf * x.abs().max(1.0).ln() + op.log_envelope(x);
    let start = (a.re / (2.0 * rho.re)).clamp(-100.0, 100.0);
    let (lo, hi) = match spec.trunc_radius {
        Some(r) => (-r, r),
        None => window(bound, start, spec),
    };
    let r = integrate_interval(
        |x| {
            let g = (a * x - rho * x * x).exp() * op.eval_log(x);
            if m == 0 {
                g
            } else {
                g * x.powi(m as i32)
            }
        },
        lo,
        hi,
        spec,
    )?;
    Ok(XiValue {
        value: r.value,
        quad_error: r.error_estimate,
        evaluations: r.evaluations,
        condition: r.condition(),
    })
}

/// Pure Gaussian moment ∫ x^m e^{ax − ρx²} dx, integrated along the horizontal
/// line through the saddle a/2ρ.
fn mellin_pure(m: u32, rho: Complex64, a: Complex64, spec: &QuadSpec) -> Result<XiValue> {
    check_rho(rho)?;
    check_arg(a)?;
    let saddle = a / (2.0 * rho);
    let eta = saddle.im;
    let f = |y: f64| {
        let z = Complex64::new(y, eta);
        (a * z - rho * z * z).exp() * z.powi(m as i32)
    };
    let bound = |y: f64| {
        let z = Complex64::new(y, eta);
        (a * z - rho * z * z).re + m as f64 * z.norm().max(1.0).ln()
    };
    let (lo, hi) = match spec.trunc_radius {
        Some(r) => (saddle.re - r, saddle.re + r),
        None => window(bound, saddle.re, spec),
    };
    let r = integrate_interval(f, lo, hi, spec)?;
    Ok(XiValue {
        value: r.value,
        quad_error: r.error_estimate,
        evaluations: r.evaluations,
        condition: r.condition(),
    })
}

pub fn mellin(kernel: &MellinKernel) -> Result<XiValue> {
    mellin_with(kernel, &QuadSpec::for_dim(1))
}

pub fn mellin_with(kernel: &MellinKernel, spec: &QuadSpec) -> Result<XiValue> {
    match kernel.theta {
        KernelTheta::PureExp => mellin_pure(kernel.log_power, kernel.rho, kernel.arg, spec),
        KernelTheta::Op(op) => {
            let c = CompiledOp::new(&op)?;
            mellin_op(&c, kernel.log_power, kernel.rho, kernel.arg, spec)
        }
    }
}

/// Ξ_ρ and its relatives at a fixed ρ and quadrature spec.
#[derive(Debug, Clone)]
pub struct Xi1 {
    rho: Complex64,
    spec: QuadSpec,
    plain: CompiledOp,
    h4: CompiledOp,
    delta4: CompiledOp,
}

impl Xi1 {
    pub fn new(rho: Complex64) -> Result<Self> {
        Self::with_spec(rho, QuadSpec::for_dim(1))
    }

    pub fn with_spec(rho: Complex64, spec: QuadSpec) -> Result<Self> {
        check_rho(rho)?;
        spec.validate()?;
        Ok(Xi1 {
            rho,
            spec,
            plain: CompiledOp::new(&ThetaOperator::Plain)?,
            h4: CompiledOp::new(&ThetaOperator::H(Complex64::new(4.0, 0.0)))?,
            delta4: CompiledOp::new(&ThetaOperator::Delta4)?,
        })
    }

    pub fn rho(&self) -> Complex64 {
        self.rho
    }

    pub fn spec(&self) -> &QuadSpec {
        &self.spec
    }

    /// M[(opΨ) ln^m t · e^{−ρln²t}](s/2)
    pub fn op(&self, op: &ThetaOperator, s: Complex64, m: u32) -> Result<XiValue> {
        let compiled;
        let c = match op {
            ThetaOperator::Plain => &self.plain,
            ThetaOperator::Delta4 => &self.delta4,
            ThetaOperator::H(a) if *a == Complex64::new(4.0, 0.0) => &self.h4,
            _ => {
                compiled = CompiledOp::new(op)?;
                &compiled
            }
        };
        mellin_op(c, m, self.rho, s / 2.0, &self.spec)
    }

    /// Ξ_ρ(s)
    pub fn value(&self, s: Complex64) -> Result<XiValue> {
        mellin_op(&self.plain, 0, self.rho, s / 2.0, &self.spec)
    }

    /// ∂_s^m Ξ_ρ(s) = 2^{−m} M[Ψ ln^m t · e](s/2)
    pub fn deriv(&self, s: Complex64, m: u32) -> Result<XiValue> {
        let v = mellin_op(&self.plain, m, self.rho, s / 2.0, &self.spec)?;
        Ok(v.scale(Complex64::new(0.5f64.powi(m as i32), 0.0)))
    }

    /// Ξ̃_ρ(s) = M[(H₄Ψ)e](s/2), direct kernel.
    pub fn tilde(&self, s: Complex64) -> Result<XiValue> {
        mellin_op(&self.h4, 0, self.rho, s / 2.0, &self.spec)
    }

    /// Ξ̃_ρ(s) as (1−2s)Ξ_ρ(s) + 16ρ∂_sΞ_ρ(s).
    pub fn tilde_dual(&self, s: Complex64) -> Result<XiValue> {
        let x = self.value(s)?;
        let d = self.deriv(s, 1)?;
        Ok(x.scale(1.0 - 2.0 * s).axpy(Complex64::new(1.0, 0.0), d.scale(16.0 * self.rho)))
    }

    /// M[(Δ₄Ψ)e](s/2)
    pub fn delta4(&self, s: Complex64) -> Result<XiValue> {
        mellin_op(&self.delta4, 0, self.rho, s / 2.0, &self.spec)
    }

    /// Σ_{l=0}^{m} Ξ_ρ(s+l)
    pub fn sum_m(&self, s: Complex64, m: u32) -> Result<XiValue> {
        let mut acc = XiValue::exact(Complex64::new(0.0, 0.0));
        for l in 0..=m {
            acc = self.value(s + l as f64)?.axpy(Complex64::new(1.0, 0.0), acc);
        }
        Ok(acc)
    }

    /// Σ_{l=0}^{m} (−1)^l Ξ̃_ρ(s+l)
    pub fn tilde_sum_m(&self, s: Complex64, m: u32) -> Result<XiValue> {
        let mut acc = XiValue::exact(Complex64::new(0.0, 0.0));
        for l in 0..=m {
            let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
            acc = self.tilde(s + l as f64)?.axpy(Complex64::new(sign, 0.0), acc);
        }
        Ok(acc)
    }

    /// M[Δ₄Ψe](s/2) − [(4s(s−1) − 32ρ)Ξ + 32ρ(1−2s)Ξ′ + (16ρ)²Ξ″].
    pub fn second_order_residual(&self, s: Complex64) -> Result<f64> {
        let lhs = self.delta4(s)?.value;
        let k = 16.0 * self.rho;
        let rhs = (4.0 * s * (s - 1.0) - 32.0 * self.rho) * self.value(s)?.value
            + 2.0 * k * (1.0 - 2.0 * s) * self.deriv(s, 1)?.value
            + k * k * self.deriv(s, 2)?.value;
        Ok((lhs - rhs).norm())
    }

    /// |∂_ρΞ + 4∂²_sΞ| with ∂_ρ inserting −ln²t and ∂²_s inserting ln²t/4.
    pub fn heat_residual(&self, s: Complex64) -> Result<f64> {
        let d_rho = self.d_rho(s)?.value;
        let d_ss = self.deriv(s, 2)?.value;
        Ok((d_rho + 4.0 * d_ss).norm())
    }

    /// ∂_ρ Ξ_ρ(s) = −M[Ψ ln²t e](s/2)
    pub fn d_rho(&self, s: Complex64) -> Result<XiValue> {
        Ok(mellin_op(&self.plain, 2, self.rho, s / 2.0, &self.spec)?.scale(Complex64::new(-1.0, 0.0)))
    }
}

pub fn xi(rho: Complex64, s: Complex64) -> Result<XiValue> {
    Xi1::new(rho)?.value(s)
}

pub fn xi_deriv(rho: Complex64, s: Complex64, m: u32) -> Result<XiValue> {
    Xi1::new(rho)?.deriv(s, m)
}

pub fn xi_sum_m(rho: Complex64, s: Complex64, m: u32) -> Result<XiValue> {
    Xi1::new(rho)?.sum_m(s, m)
}

pub fn xi_tilde_sum_m(rho: Complex64, s: Complex64, m: u32) -> Result<XiValue> {
    Xi1::new(rho)?.tilde_sum_m(s, m)
}

pub fn xi_tilde(rho: Complex64, s: Complex64) -> Result<XiValue> {
    Xi1::new(rho)?.tilde(s)
}

pub fn mellin_delta4(rho: Complex64, s: Complex64) -> Result<XiValue> {
    Xi1::new(rho)?.delta4(s)
}

pub fn heat_residual(rho: Complex64, s: Complex64) -> Result<f64> {
    Xi1::new(rho)?.heat_residual(s)
}

/// √(π/ρ)e^{s²/4ρ}
pub fn gauss_identity(rho: Complex64, s: Complex64) -> Complex64 {
    (PI / rho).sqrt() * (s * s / (4.0 * rho)).exp()
}

/// Ξ^m_ρ(s) − Ξ^m_ρ(1−m−s) = √(π/ρ)(e^{(s−1)²/16ρ} − e^{(s+m)²/16ρ})/2
pub fn telescope_rhs(rho: Complex64, s: Complex64, m: u32) -> Complex64 {
    let k = 16.0 * rho;
    let mf = m as f64;
    0.5 * (PI / rho).sqrt() * (((s - 1.0) * (s - 1.0) / k).exp() - ((s + mf) * (s + mf) / k).exp())
}

/// Ξ̃^m_ρ(s) + (−1)^m Ξ̃^m_ρ(1−m−s) = −½√(π/ρ)(e^{(s−1)²/16ρ} + (−1)^m e^{(s+m)²/16ρ})
pub fn tilde_telescope_rhs(rho: Complex64, s: Complex64, m: u32) -> Complex64 {
    let k = 16.0 * rho;
    let mf = m as f64;
    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
    -0.5 * (PI / rho).sqrt() * (((s - 1.0) * (s - 1.0) / k).exp() + sign * ((s + mf) * (s + mf) / k).exp())
}
