//! Differential equations in s satisfied by Ξ_ρ and their solutions:
//! first-order transport, the second-order equation with its
//! variation-of-parameters solution, the canonical decomposition about ½,
//! χ and its transformation law, and the iterated P^n/I^n expansion.
//!
//! w_α(s) = e^{(−s² + 4s/α)/16ρ} throughout; k = 4αρ.

use std::cell::RefCell;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result, XiError};
use crate::funceq::zero_scan;
use crate::quadrature::{integrate_segment, QuadSpec};
use crate::theta::{CompiledOp, ThetaOperator};
use crate::xi::{check_rho, mellin_op, telescope_rhs, Xi1};

type C64 = Complex64;

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

const HALF: C64 = C64 { re: 0.5, im: 0.0 };

/// e^{(−s² + 4s/α)/16ρ}
pub fn weight(rho: C64, alpha: C64, s: C64) -> C64 {
    ((-s * s + 4.0 * s / alpha) / (16.0 * rho)).exp()
}

fn check_alpha(alpha: C64) -> Result<()> {
    if alpha.norm() == 0.0 || !alpha.re.is_finite() || !alpha.im.is_finite() {
        return domain("α must be finite and nonzero");
    }
    Ok(())
}

fn segment_spec() -> QuadSpec {
    QuadSpec::for_dim(1).with_tol(1e-12, 1e-11)
}

/// ∫_z^s f(t) dt on the straight segment, with errors from f propagated.
fn segment<F>(mut f: F, z: C64, s: C64, spec: &QuadSpec) -> Result<C64>
where
    F: FnMut(C64) -> Result<C64>,
{
    let failure = RefCell::new(None);
    let r = integrate_segment(
        |t| match f(t) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                c(0.0)
            }
        },
        z,
        s,
        spec,
    )?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(r.value)
}

/// Mellin values M[(opΨ)e](s/2) at fixed ρ.
struct Kern {
    x: Xi1,
}

impl Kern {
    fn new(rho: C64) -> Result<Self> {
        check_rho(rho)?;
        Ok(Kern {
            x: Xi1::with_spec(rho, QuadSpec::for_dim(1).with_tol(1e-13, 1e-12))?,
        })
    }

    fn rho(&self) -> C64 {
        self.x.rho()
    }

    fn op(&self, op: &ThetaOperator, s: C64) -> Result<C64> {
        Ok(self.x.op(op, s, 0)?.value)
    }

    fn xi(&self, s: C64) -> Result<C64> {
        Ok(self.x.value(s)?.value)
    }

    fn delta4(&self, s: C64) -> Result<C64> {
        Ok(self.x.delta4(s)?.value)
    }
}

fn h(alpha: C64) -> ThetaOperator {
    ThetaOperator::H(alpha)
}

/// Residuals of the two first-order identities for w_α(s)Ξ_ρ(s):
/// (i) = w_α(z)Ξ(z) + (1/4αρ)∫_z^s w_α M[(H_αΨ)e](t/2) dt,
/// (ii) the reflected form with H_{α/(α/2−1)} and boundary terms.
/// α = 2 is degenerate for (ii); use `first_order_forward_residual` there.
pub fn first_order_residual(rho: C64, alpha: C64, z: C64, s: C64) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    if (alpha - 2.0).norm() < 1e-12 {
        return Err(XiError::Degenerate(
            "α = 2 makes the reflected operator index singular".into(),
        ));
    }
    let kern = Kern::new(rho)?;
    let first = first_order_rhs(&kern, alpha, z, s)?;
    let lhs = weight(rho, alpha, s) * kern.xi(s)?;
    let ap = alpha / (alpha / 2.0 - 1.0);
    let hp = h(ap);
    let bnd = |x: C64| {
        ((1.0 - 4.0 / ap * x) / (16.0 * rho)).exp() - ((4.0 / alpha) * x / (16.0 * rho)).exp()
    };
    let int = segment(
        |t| Ok(weight(rho, ap, t) * kern.op(&hp, t)?),
        1.0 - z,
        1.0 - s,
        &segment_spec(),
    )?;
    let rhs2 = weight(rho, alpha, z) * kern.xi(z)?
        + 0.5 * (PI / rho).sqrt() * (bnd(s) - bnd(z))
        + ((4.0 / alpha - 1.0) / (16.0 * rho)).exp() * (alpha / 2.0 - 1.0) / (4.0 * alpha * rho) * int;
    Ok(((lhs - first).norm(), (lhs - rhs2).norm()))
}

fn first_order_rhs(kern: &Kern, alpha: C64, z: C64, s: C64) -> Result<C64> {
    let rho = kern.rho();
    let ha = h(alpha);
    let int = segment(|t| Ok(weight(rho, alpha, t) * kern.op(&ha, t)?), z, s, &segment_spec())?;
    Ok(weight(rho, alpha, z) * kern.xi(z)? + int / (4.0 * alpha * rho))
}

/// Residual of identity (i) alone; valid for every α ≠ 0.
pub fn first_order_forward_residual(rho: C64, alpha: C64, z: C64, s: C64) -> Result<f64> {
    check_alpha(alpha)?;
    let kern = Kern::new(rho)?;
    let rhs = first_order_rhs(&kern, alpha, z, s)?;
    Ok((weight(rho, alpha, s) * kern.xi(s)? - rhs).norm())
}

/// Vanishing of ∫_z^{1−z} w₄ M[(H₄Ψ)e](t/2) dt at z = ½ − 16ρπik, where the
/// weighted values at z and 1 − z agree. Returns (|weighted difference|, |integral|).
pub fn vanishing_path_residual(rho: C64, k: i64) -> Result<(f64, f64)> {
    let kern = Kern::new(rho)?;
    let a = c(4.0);
    let z = HALF - 16.0 * rho * PI * C64::i() * k as f64;
    let zp = 1.0 - z;
    let diff = weight(rho, a, z) * kern.xi(z)? - weight(rho, a, zp) * kern.xi(zp)?;
    let ha = h(a);
    let int = segment(|t| Ok(weight(rho, a, t) * kern.op(&ha, t)?), z, zp, &segment_spec())?;
    Ok((diff.norm(), int.norm()))
}

/// |(id − (4αρ)²∂²_s)(w_αΞ) + w_α M[(Δ_αΨ)e](s/2)|, with ∂²_s taken through
/// the product rule onto log-moment kernels.
pub fn second_order_residual(rho: C64, alpha: C64, s: C64) -> Result<f64> {
    check_alpha(alpha)?;
    let kern = Kern::new(rho)?;
    let w = weight(rho, alpha, s);
    let g = (-2.0 * s + 4.0 / alpha) / (16.0 * rho);
    let gp = -1.0 / (8.0 * rho);
    let x0 = kern.xi(s)?;
    let x1 = kern.x.deriv(s, 1)?.value;
    let x2 = kern.x.deriv(s, 2)?.value;
    let e = w * x0;
    let e2 = w * ((g * g + gp) * x0 + 2.0 * g * x1 + x2);
    let k = 4.0 * alpha * rho;
    let lhs = e - k * k * e2;
    let rhs = -w * kern.op(&ThetaOperator::Delta(alpha), s)?;
    Ok((lhs - rhs).norm())
}

/// The same residual with ∂²_s by central differences of step h.
pub fn second_order_fd_residual(rho: C64, alpha: C64, s: C64, step: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let kern = Kern::new(rho)?;
    let e = |x: C64| -> Result<C64> { Ok(weight(rho, alpha, x) * kern.xi(x)?) };
    let e0 = e(s)?;
    let e2 = (e(s + step)? - 2.0 * e0 + e(s - step)?) / (step * step);
    let k = 4.0 * alpha * rho;
    let rhs = -weight(rho, alpha, s) * kern.op(&ThetaOperator::Delta(alpha), s)?;
    Ok((e0 - k * k * e2 - rhs).norm())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VopCoefficients {
    pub a: C64,
    pub b: C64,
    pub beta: [C64; 2],
    pub alpha: C64,
    pub z: C64,
    pub rho: C64,
}

impl VopCoefficients {
    /// A sinh((β₁−s)/4αρ) + B cosh((β₂−s)/4αρ)
    pub fn homogeneous(&self, s: C64) -> C64 {
        let k = 4.0 * self.alpha * self.rho;
        self.a * ((self.beta[0] - s) / k).sinh() + self.b * ((self.beta[1] - s) / k).cosh()
    }
}

/// β₁ − β₂ within 1e−8 of πi·4αρ(½ + ℤ).
fn check_fundamental(rho: C64, alpha: C64, beta: [C64; 2]) -> Result<()> {
    let unit = PI * C64::i() * 4.0 * alpha * rho;
    let u = (beta[0] - beta[1]) / unit - 0.5;
    let near = C64::new(u.re.round(), 0.0);
    if ((u - near) * unit).norm() < 1e-8 {
        return Err(XiError::Degenerate(
            "β₁ − β₂ lies on πi·4αρ(½ + ℤ); sinh/cosh pair is not a fundamental system".into(),
        ));
    }
    Ok(())
}

/// A and B from the 2×2 hyperbolic system at the matching point z.
pub fn vop_coefficients(rho: C64, alpha: C64, beta: [C64; 2], z: C64) -> Result<VopCoefficients> {
    check_alpha(alpha)?;
    let kern = Kern::new(rho)?;
    check_fundamental(rho, alpha, beta)?;
    let k = 4.0 * alpha * rho;
    let den = ((beta[1] - beta[0]) / k).cosh();
    if den.norm() < 1e-300 {
        return Err(XiError::Degenerate("cosh((β₂ − β₁)/4αρ) = 0".into()));
    }
    let m0 = -kern.xi(z)?;
    let m1 = kern.op(&h(alpha), z)?;
    let pre = weight(rho, alpha, z) / den;
    let (b1, b2) = ((beta[0] - z) / k, (beta[1] - z) / k);
    Ok(VopCoefficients {
        a: pre * (b2.sinh() * m0 - b2.cosh() * m1),
        b: pre * (-b1.cosh() * m0 + b1.sinh() * m1),
        beta,
        alpha,
        z,
        rho,
    })
}

/// (1/4αρ)∫_z^s sinh((s−t)/4αρ) w_α(t) M[(Δ_αΨ)e](t/2) dt
pub fn vop_particular(rho: C64, alpha: C64, z: C64, s: C64) -> Result<C64> {
    check_alpha(alpha)?;
    let kern = Kern::new(rho)?;
    particular(&kern, alpha, z, s)
}

fn particular(kern: &Kern, alpha: C64, z: C64, s: C64) -> Result<C64> {
    let rho = kern.rho();
    let k = 4.0 * alpha * rho;
    let op = ThetaOperator::Delta(alpha);
    let int = segment(
        |t| Ok(((s - t) / k).sinh() * weight(rho, alpha, t) * kern.op(&op, t)?),
        z,
        s,
        &segment_spec(),
    )?;
    Ok(int / k)
}

/// |w_α(s)Ξ(s) − homogeneous(s) − particular(s)|
pub fn vop_reconstruction_residual(rho: C64, alpha: C64, beta: [C64; 2], z: C64, s: C64) -> Result<f64> {
    let coef = vop_coefficients(rho, alpha, beta, z)?;
    let kern = Kern::new(rho)?;
    let total = coef.homogeneous(s) + particular(&kern, alpha, z, s)?;
    Ok((weight(rho, alpha, s) * kern.xi(s)? - total).norm())
}

/// Residuals of the two constraints fixing A, B at β = (½, ½), z = ½, α = 4:
/// A(e^{(β₁−1)/16ρ} + e^{−β₁/16ρ}) + B(e^{(β₂−1)/16ρ} − e^{−β₂/16ρ}) = √(π/ρ) and
/// e^{1/64ρ}Ξ(½) = (e^{1/32ρ}/2)(A(e^{(β₁−1)/16ρ} − e^{−β₁/16ρ}) + B(e^{(β₂−1)/16ρ} + e^{−β₂/16ρ})).
pub fn canonical_constraints(rho: C64) -> Result<(f64, f64)> {
    let beta = [HALF, HALF];
    let v = vop_coefficients(rho, c(4.0), beta, HALF)?;
    let k = 16.0 * rho;
    let ep = |b: C64| ((b - 1.0) / k).exp();
    let em = |b: C64| (-b / k).exp();
    let r1 = v.a * (ep(beta[0]) + em(beta[0])) + v.b * (ep(beta[1]) - em(beta[1])) - (PI / rho).sqrt();
    let xi_half = Xi1::new(rho)?.value(HALF)?.value;
    let r2 = (1.0 / (64.0 * rho)).exp() * xi_half
        - (1.0 / (32.0 * rho)).exp() / 2.0 * (v.a * (ep(beta[0]) - em(beta[0])) + v.b * (ep(beta[1]) + em(beta[1])));
    Ok((r1.norm(), r2.norm()))
}

/// χ_ρ(φ, α, s, z) = ∫_z^s e^{(−t²+φt)/16ρ} M[(Δ_αΨ)e](t/2) dt
pub fn chi(rho: C64, phi: C64, alpha: C64, s: C64, z: C64) -> Result<C64> {
    let kern = Kern::new(rho)?;
    chi_k(&kern, phi, &ThetaOperator::Delta(alpha), s, z)
}

fn chi_k(kern: &Kern, phi: C64, op: &ThetaOperator, s: C64, z: C64) -> Result<C64> {
    let rho = kern.rho();
    segment(
        |t| Ok(((-t * t + phi * t) / (16.0 * rho)).exp() * kern.op(op, t)?),
        z,
        s,
        &segment_spec(),
    )
}

/// |LHS − RHS| of the s → 1 − s transformation law for χ.
pub fn chi_transform_residual(rho: C64, phi: C64, alpha: C64, s: C64, z: C64) -> Result<f64> {
    check_alpha(alpha)?;
    let kern = Kern::new(rho)?;
    let da = ThetaOperator::Delta(alpha);
    let lhs = chi_k(&kern, phi, &da, s, z)?;
    let psi = 2.0 - phi;
    let reflected = chi_k(&kern, psi, &da, 1.0 - s, 1.0 - z)?;
    let h4 = chi_k(&kern, psi, &h(c(4.0)), 1.0 - s, 1.0 - z)?;
    let prim = |x: C64| {
        if psi.norm() == 0.0 {
            x
        } else {
            16.0 * rho / psi * (psi * x / (16.0 * rho)).exp()
        }
    };
    let boundary = 0.5 * (PI / rho).sqrt() * (prim(1.0 - s) - prim(1.0 - z));
    let rhs = -((phi - 1.0) / (16.0 * rho)).exp() * (reflected + alpha * (alpha - 4.0) / 4.0 * (h4 + boundary));
    Ok((lhs - rhs).norm())
}

/// |χ(1,α,s,z) + χ(1,α,1−s,1−z) − 16ρ·α(4−α)/4·[w₄(x)Ξ(x) + ½√(π/ρ)e^{x/16ρ}]_{x=1−z}^{1−s}|
pub fn chi_phi1_residual(rho: C64, alpha: C64, s: C64, z: C64) -> Result<f64> {
    check_alpha(alpha)?;
    let kern = Kern::new(rho)?;
    let da = ThetaOperator::Delta(alpha);
    let lhs = chi_k(&kern, c(1.0), &da, s, z)? + chi_k(&kern, c(1.0), &da, 1.0 - s, 1.0 - z)?;
    let f = |x: C64| -> Result<C64> {
        Ok(weight(rho, c(4.0), x) * kern.xi(x)? + 0.5 * (PI / rho).sqrt() * (x / (16.0 * rho)).exp())
    };
    let rhs = 16.0 * rho * alpha * (4.0 - alpha) / 4.0 * (f(1.0 - s)? - f(1.0 - z)?);
    Ok((lhs - rhs).norm())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionResult {
    pub sinh_coeff: C64,
    pub cosh_coeff: C64,
    pub integral_part: C64,
    pub total: C64,
}

impl DecompositionResult {
    fn assemble(rho: C64, s: C64, sinh_coeff: C64, cosh_coeff: C64, integral_part: C64) -> Self {
        let u = (HALF - s) / (16.0 * rho);
        DecompositionResult {
            sinh_coeff,
            cosh_coeff,
            integral_part,
            total: sinh_coeff * u.sinh() + cosh_coeff * u.cosh() + integral_part,
        }
    }
}

/// e^{1/32ρ}√(π/ρ)/2
pub fn canonical_sinh_coeff(rho: C64) -> C64 {
    (1.0 / (32.0 * rho)).exp() * (PI / rho).sqrt() / 2.0
}

/// e^{(−s²+s)/16ρ}Ξ_ρ(s), the quantity the decompositions reproduce.
pub fn canonical_target(rho: C64, s: C64) -> Result<C64> {
    Ok(weight(rho, c(4.0), s) * Xi1::new(rho)?.value(s)?.value)
}

fn kernel_integral(kern: &Kern, s: C64, cosh_kernel: bool, op: &ThetaOperator) -> Result<C64> {
    let rho = kern.rho();
    let k = 16.0 * rho;
    let int = segment(
        |t| {
            let x = (s - t) / k;
            let ker = if cosh_kernel { x.cosh() } else { x.sinh() };
            Ok(ker * weight(rho, c(4.0), t) * kern.op(op, t)?)
        },
        HALF,
        s,
        &segment_spec(),
    )?;
    Ok(int / k)
}

/// e^{(−s²+s)/16ρ}Ξ_ρ(s) = S sinh((½−s)/16ρ) + C cosh((½−s)/16ρ)
/// + (1/16ρ)∫_{½}^s sinh((s−t)/16ρ) w₄(t) M[(Δ₄Ψ)e](t/2) dt,
/// S = e^{1/32ρ}√(π/ρ)/2, C = e^{1/64ρ}Ξ_ρ(½).
pub fn canonical_decomposition(rho: C64, s: C64) -> Result<DecompositionResult> {
    let kern = Kern::new(rho)?;
    let ip = kernel_integral(&kern, s, false, &ThetaOperator::Delta4)?;
    let cc = (1.0 / (64.0 * rho)).exp() * kern.xi(HALF)?;
    Ok(DecompositionResult::assemble(rho, s, canonical_sinh_coeff(rho), cc, ip))
}

/// The integral part written with the Jensen kernel 2t²Ψ″ + 3tΨ′ and prefactor 1/2ρ.
pub fn jensen_integral_part(rho: C64, s: C64) -> Result<C64> {
    let kern = Kern::new(rho)?;
    let jensen = CompiledOp::from_d_polynomial(&[c(0.0), c(1.0), c(2.0)], crate::theta::DEFAULT_EPS);
    let spec = kern.x.spec().clone();
    let k = 16.0 * rho;
    let int = segment(
        |t| {
            let m = mellin_op(&jensen, 0, rho, t / 2.0, &spec)?.value;
            Ok(((s - t) / k).sinh() * weight(rho, c(4.0), t) * m)
        },
        HALF,
        s,
        &segment_spec(),
    )?;
    Ok(int / (2.0 * rho))
}

/// a±_ρ(s) = (1/32ρ)∫_{½}^s (e^{(½−t)/16ρ} ± e^{(t−½)/16ρ}) w₄(t) M[(Δ₄Ψ)e](t/2) dt
pub fn a_pm(rho: C64, s: C64) -> Result<(C64, C64)> {
    let kern = Kern::new(rho)?;
    a_pm_k(&kern, s)
}

fn a_pm_k(kern: &Kern, s: C64) -> Result<(C64, C64)> {
    let rho = kern.rho();
    let k = 16.0 * rho;
    let mut out = [c(0.0); 2];
    for (i, sg) in [1.0, -1.0].iter().enumerate() {
        out[i] = segment(
            |t| {
                let u = (HALF - t) / k;
                Ok((u.exp() + sg * (-u).exp()) * weight(rho, c(4.0), t) * kern.delta4(t)?)
            },
            HALF,
            s,
            &segment_spec(),
        )? / (2.0 * k);
    }
    Ok((out[0], out[1]))
}

/// Canonical decomposition in the a± form: [S − a⁺] sinh + [C + a⁻] cosh.
pub fn a_pm_form(rho: C64, s: C64) -> Result<DecompositionResult> {
    let kern = Kern::new(rho)?;
    let (ap, am) = a_pm_k(&kern, s)?;
    let cc = (1.0 / (64.0 * rho)).exp() * kern.xi(HALF)?;
    Ok(DecompositionResult::assemble(
        rho,
        s,
        canonical_sinh_coeff(rho) - ap,
        cc + am,
        c(0.0),
    ))
}

/// e^{(−s²+s)/16ρ}Ξ̃_ρ(s) = C_ρ sinh((½−s)/16ρ) − S cosh((½−s)/16ρ)
/// + (1/16ρ)∫_{½}^s cosh((s−t)/16ρ) w₄(t) M[(Δ₄Ψ)e](t/2) dt, C_ρ = −e^{1/64ρ}Ξ_ρ(½).
pub fn tilde_decomposition(rho: C64, s: C64) -> Result<DecompositionResult> {
    let kern = Kern::new(rho)?;
    let ip = kernel_integral(&kern, s, true, &ThetaOperator::Delta4)?;
    let c_rho = -(1.0 / (64.0 * rho)).exp() * kern.xi(HALF)?;
    Ok(DecompositionResult::assemble(rho, s, c_rho, -canonical_sinh_coeff(rho), ip))
}

/// The sinh-kernel form of the Ξ̃ decomposition with Δ₄H₄Ψ; here
/// C_ρ = −e^{1/64ρ}(Ξ_ρ(½) + M[(Δ₄Ψ)e](¼)).
pub fn tilde_c_form(rho: C64, s: C64) -> Result<DecompositionResult> {
    let kern = Kern::new(rho)?;
    let ip = kernel_integral(&kern, s, false, &ThetaOperator::Delta4H4)?;
    let c_rho = -(1.0 / (64.0 * rho)).exp() * (kern.xi(HALF)? + kern.delta4(HALF)?);
    Ok(DecompositionResult::assemble(rho, s, c_rho, -canonical_sinh_coeff(rho), ip))
}

/// e^{(−s²+s)/16ρ}Ξ̃_ρ(s) by direct quadrature.
pub fn tilde_target(rho: C64, s: C64) -> Result<C64> {
    Ok(weight(rho, c(4.0), s) * Xi1::new(rho)?.tilde(s)?.value)
}

/// |M[(Δ_αΨ)e](s/2) − M[(Δ_αΨ)e]((1−s)/2) − α(α−4)/4·(M[(H₄Ψ)e]((1−s)/2) + √(π/ρ)e^{(s−1)²/16ρ}/2)|
pub fn mellin_reflection_residual(rho: C64, alpha: C64, s: C64) -> Result<f64> {
    check_alpha(alpha)?;
    let kern = Kern::new(rho)?;
    let da = ThetaOperator::Delta(alpha);
    let lhs = kern.op(&da, s)? - kern.op(&da, 1.0 - s)?;
    let rhs = alpha * (alpha - 4.0) / 4.0
        * (kern.op(&h(c(4.0)), 1.0 - s)? + 0.5 * (PI / rho).sqrt() * ((s - 1.0) * (s - 1.0) / (16.0 * rho)).exp());
    Ok((lhs - rhs).norm())
}

/// Ξ(s) − Ξ(1−s) rebuilt from the canonical decomposition against the closed form.
pub fn reflection_difference_residual(rho: C64, s: C64) -> Result<f64> {
    let w = weight(rho, c(4.0), s);
    let a = canonical_decomposition(rho, s)?.total;
    let b = canonical_decomposition(rho, 1.0 - s)?.total;
    Ok(((a - b) / w - telescope_rhs(rho, s, 0)).norm())
}

const MAX_ITERATED: usize = 3;

/// K_n(x) = ∫_0^x sinh((x−y)/16ρ) K_{n−1}(y) dy, K_1(x) = sinh(x/16ρ),
/// so that the n-fold nested sinh integral equals ∫_{½}^s K_n(s−t) f(t) dt.
fn nested_kernel(rho: C64, n: usize, x: C64, spec: &QuadSpec) -> Result<C64> {
    let k = 16.0 * rho;
    if n == 1 {
        return Ok((x / k).sinh());
    }
    segment(
        |y| Ok(((x - y) / k).sinh() * nested_kernel(rho, n - 1, y, spec)?),
        c(0.0),
        x,
        spec,
    )
}

fn iterated<F>(rho: C64, n: usize, s: C64, mut f: F) -> Result<C64>
where
    F: FnMut(C64) -> Result<C64>,
{
    let inner = QuadSpec::for_dim(1).with_tol(1e-14, 1e-13);
    segment(
        |t| Ok(nested_kernel(rho, n, s - t, &inner)? * f(t)?),
        HALF,
        s,
        &segment_spec(),
    )
}

fn check_order(n: usize, min: usize) -> Result<()> {
    if n < min || n > MAX_ITERATED {
        return Err(XiError::UnsupportedOrder {
            what: "iterated integral",
            order: n,
        });
    }
    Ok(())
}

/// P^0 = cosh((½−s)/16ρ); P^n = ∫_{½}^s sinh((s−t)/16ρ) P^{n−1}(t) dt.
pub fn iterated_p(rho: C64, n: usize, s: C64) -> Result<C64> {
    check_rho(rho)?;
    check_order(n, 0)?;
    let k = 16.0 * rho;
    if n == 0 {
        return Ok(((HALF - s) / k).cosh());
    }
    iterated(rho, n, s, |t| Ok(((HALF - t) / k).cosh()))
}

/// P¹(s) = (½−s) sinh((½−s)/16ρ)/2
pub fn p1_closed_form(rho: C64, s: C64) -> C64 {
    (HALF - s) * ((HALF - s) / (16.0 * rho)).sinh() / 2.0
}

/// I^n = n-fold nested sinh integral of w₄(t) M[(Δ₄^nΨ)e](t/2).
pub fn iterated_i(rho: C64, n: usize, s: C64) -> Result<C64> {
    check_order(n, 1)?;
    let kern = Kern::new(rho)?;
    let op = ThetaOperator::Delta4Power(n as u32);
    iterated(rho, n, s, |t| Ok(weight(rho, c(4.0), t) * kern.op(&op, t)?))
}

/// |e^{(−s²+s)/16ρ}Ξ(s) − [S sinh((½−s)/16ρ) + Σ_{i<n} e^{1/64ρ}M[(Δ₄^iΨ)e](¼)P^i(s)/(16ρ)^i + I^n(s)/(16ρ)^n]|
pub fn expansion_residual(rho: C64, n: usize, s: C64) -> Result<f64> {
    check_order(n, 1)?;
    let kern = Kern::new(rho)?;
    let k = 16.0 * rho;
    let mut total = canonical_sinh_coeff(rho) * ((HALF - s) / k).sinh();
    for i in 0..n {
        let m = kern.op(&ThetaOperator::Delta4Power(i as u32), HALF)?;
        total += (1.0 / (64.0 * rho)).exp() * m * iterated_p(rho, i, s)? / k.powi(i as i32);
    }
    total += iterated_i(rho, n, s)? / k.powi(n as i32);
    Ok((weight(rho, c(4.0), s) * kern.xi(s)? - total).norm())
}

/// The iterated first-order formula at n = 2 needs real zeros z₁ of Ξ_ρ and z₂ of
/// Ξ̃_ρ. Returns None (skipped) when the scan over [−len, len] finds none.
pub fn iterated_first_order_residual(rho: C64, len: f64) -> Result<Option<f64>> {
    let kern = Kern::new(rho)?;
    let z1 = zero_scan(|s| kern.xi(s), c(0.5), c(1.0), len, 80)?;
    let h4 = h(c(4.0));
    let z2 = zero_scan(|s| kern.op(&h4, s), c(0.5), c(1.0), len, 80)?;
    let (Some(&z1), Some(&z2)) = (z1.first(), z2.first()) else {
        return Ok(None);
    };
    let a = c(4.0);
    let s = C64::new(1.3, 0.2);
    let sq = ThetaOperator::Delta(a);
    // H₄² = Δ₄ + id
    let int = segment(
        |t1| {
            segment(
                |t2| Ok(weight(rho, a, t2) * (kern.op(&sq, t2)? + kern.xi(t2)?)),
                z2,
                t1,
                &segment_spec(),
            )
        },
        z1,
        s,
        &segment_spec(),
    )?;
    let rhs = int / (4.0 * a * rho).powi(2) / weight(rho, a, s);
    Ok(Some((kern.xi(s)? - rhs).norm()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ci(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn first_order_both_forms() {
        let (a, b) = first_order_residual(c(1.0), c(4.0), HALF, c(1.5)).unwrap();
        assert!(a < 1e-8 && b < 1e-8, "{a:e} {b:e}");
        let (a, b) = first_order_residual(c(0.5), c(3.0), ci(0.2, 0.3), ci(1.1, -0.4)).unwrap();
        assert!(a < 1e-8 && b < 1e-8, "{a:e} {b:e}");
        let (a, _) = first_order_residual(c(0.7), c(4.0), ci(0.3, 0.2), ci(0.3, 0.2)).unwrap();
        assert!(a < 1e-12);
    }

    #[test]
    fn first_order_alpha_two_and_zero() {
        assert!(matches!(
            first_order_residual(c(1.0), c(2.0), HALF, c(1.5)),
            Err(XiError::Degenerate(_))
        ));
        assert!(first_order_forward_residual(c(1.0), c(2.0), HALF, c(1.5)).unwrap() < 1e-8);
        assert!(first_order_residual(c(1.0), c(0.0), HALF, c(1.5)).is_err());
    }

    #[test]
    fn vanishing_path_integral() {
        let (d, i) = vanishing_path_residual(c(0.1), 1).unwrap();
        assert!(d < 1e-8 && i < 1e-8, "{d:e} {i:e}");
    }

    #[test]
    fn second_order_general_alpha() {
        for a in [4.0, 2.0, 3.0] {
            let r = second_order_residual(c(0.5), c(a), c(0.7)).unwrap();
            assert!(r < 1e-8, "α = {a}: {r:e}");
        }
        let a = second_order_residual(c(0.5), c(4.0), ci(0.7, 0.5)).unwrap();
        let b = second_order_fd_residual(c(0.5), c(4.0), ci(0.7, 0.5), 1e-3).unwrap();
        assert!(a < 1e-8 && b < 1e-5, "{a:e} {b:e}");
    }

    #[test]
    fn variation_of_parameters() {
        let r = vop_reconstruction_residual(c(1.0), c(4.0), [c(0.0), c(1.0)], c(0.25), c(1.2)).unwrap();
        assert!(r < 1e-8, "{r:e}");
        let r = vop_reconstruction_residual(c(0.5), c(3.0), [ci(0.1, 0.2), c(0.7)], c(0.4), ci(1.0, 0.3)).unwrap();
        assert!(r < 1e-8, "{r:e}");
    }

    #[test]
    fn canonical_coefficients_match_vop() {
        for rho in [0.25, 0.5, 1.0] {
            let rho = c(rho);
            let v = vop_coefficients(rho, c(4.0), [HALF, HALF], HALF).unwrap();
            let d = canonical_decomposition(rho, c(2.0)).unwrap();
            assert!((v.a - d.sinh_coeff).norm() < 1e-9 * v.a.norm());
            assert!((v.b - d.cosh_coeff).norm() < 1e-9 * v.b.norm());
            let (r1, r2) = canonical_constraints(rho).unwrap();
            assert!(r1 < 1e-9 && r2 < 1e-9, "{r1:e} {r2:e}");
        }
    }

    #[test]
    fn fundamental_system_degeneracy() {
        let rho = c(0.5);
        let unit = PI * C64::i() * 16.0 * rho;
        let b2 = c(0.3);
        assert!(matches!(
            vop_coefficients(rho, c(4.0), [b2 + 1.5 * unit, b2], HALF),
            Err(XiError::Degenerate(_))
        ));
        assert!(vop_coefficients(rho, c(4.0), [b2 + 1.5 * unit + 1e-6, b2], HALF).is_ok());
    }

    #[test]
    fn canonical_reconstruction() {
        for (rho, s) in [(1.0, c(2.0)), (0.5, ci(0.8, 1.0)), (0.25, c(-0.4))] {
            let d = canonical_decomposition(c(rho), s).unwrap();
            let t = canonical_target(c(rho), s).unwrap();
            assert!((d.total - t).norm() < 1e-9, "{rho} {s}");
        }
        let d = canonical_decomposition(c(1.0), HALF).unwrap();
        assert_eq!(d.integral_part, c(0.0));
        assert!((d.total - d.cosh_coeff).norm() < 1e-15);
    }

    #[test]
    fn integral_part_symmetry_and_jensen_form() {
        let s = ci(1.7, 0.4);
        let a = canonical_decomposition(c(1.0), s).unwrap().integral_part;
        let b = canonical_decomposition(c(1.0), 1.0 - s).unwrap().integral_part;
        assert!((a - b).norm() < 1e-9);
        let j = jensen_integral_part(c(1.0), s).unwrap();
        assert!((a - j).norm() < 1e-12 * a.norm().max(1.0));
    }

    #[test]
    fn a_pm_parity_and_form() {
        let s = c(1.7);
        let (p, m) = a_pm(c(1.0), s).unwrap();
        let (p2, m2) = a_pm(c(1.0), 1.0 - s).unwrap();
        assert!((p + p2).norm() < 1e-9 && (m - m2).norm() < 1e-9);
        assert_eq!(a_pm(c(1.0), HALF).unwrap(), (c(0.0), c(0.0)));
        let f = a_pm_form(c(1.0), s).unwrap();
        let d = canonical_decomposition(c(1.0), s).unwrap();
        assert!((f.total - d.total).norm() < 1e-9);
    }

    #[test]
    fn tilde_decompositions() {
        let s = c(1.3);
        let t = tilde_target(c(1.0), s).unwrap();
        let d = tilde_decomposition(c(1.0), s).unwrap();
        assert!((d.total - t).norm() < 1e-8);
        let cf = tilde_c_form(c(1.0), s).unwrap();
        assert!((cf.total - t).norm() < 1e-8);
        // derivative link: 16ρ ∂_s(canonical total) = tilde total
        let h = 1e-4;
        let f = |x: C64| canonical_decomposition(c(1.0), x).unwrap().total;
        let deriv = (f(s + h) - f(s - h)) / (2.0 * h);
        assert!((16.0 * deriv - d.total).norm() < 1e-5);
    }

    #[test]
    fn conjugate_symmetry() {
        let s = ci(0.9, 0.6);
        let a = canonical_decomposition(c(0.5), s).unwrap().total;
        let b = canonical_decomposition(c(0.5), s.conj()).unwrap().total;
        assert!((a - b.conj()).norm() < 1e-12);
    }

    #[test]
    fn chi_properties() {
        let rho = c(0.5);
        let (s, y, z) = (ci(1.0, 0.5), c(0.8), HALF);
        let a = chi(rho, c(1.0), c(4.0), s, z).unwrap();
        let b = chi(rho, c(1.0), c(4.0), z, s).unwrap();
        assert!((a + b).norm() < 1e-14 * a.norm().max(1.0));
        let t = chi(rho, c(1.0), c(4.0), s, y).unwrap() + chi(rho, c(1.0), c(4.0), y, z).unwrap();
        assert!((t - a).norm() < 1e-11);
        assert!(chi_phi1_residual(rho, c(4.0), s, z).unwrap() < 1e-8);
        assert!(chi_phi1_residual(rho, c(3.0), s, z).unwrap() < 1e-8);
        let c4 = chi(rho, c(1.0), c(4.0), 1.0 - s, 1.0 - z).unwrap();
        assert!((a + c4).norm() < 1e-8);
    }

    #[test]
    fn chi_transformation_law() {
        let rho = c(0.5);
        for (phi, alpha) in [(1.0, 4.0), (0.3, 3.0), (2.0, 3.0), (2.0, 2.0)] {
            let r = chi_transform_residual(rho, c(phi), c(alpha), ci(1.0, 0.5), HALF).unwrap();
            assert!(r < 1e-7, "φ = {phi}, α = {alpha}: {r:e}");
        }
    }

    #[test]
    fn sinh_integral_via_chi() {
        let (rho, alpha, s, z) = (c(0.5), c(3.0), ci(1.2, 0.3), c(0.4));
        let k = 4.0 * alpha * rho;
        let lhs = vop_particular(rho, alpha, z, s).unwrap() * k;
        let rhs = ((s / k).exp() * chi(rho, c(0.0), alpha, s, z).unwrap()
            - (-s / k).exp() * chi(rho, 8.0 / alpha, alpha, s, z).unwrap())
            / 2.0;
        assert!((lhs - rhs).norm() < 1e-10);
    }

    #[test]
    fn reflection_identities() {
        for a in [2.0, 3.0, 4.0] {
            assert!(mellin_reflection_residual(c(0.5), c(a), ci(0.3, 0.8)).unwrap() < 1e-8);
        }
        assert!(reflection_difference_residual(c(1.0), ci(1.4, 0.6)).unwrap() < 1e-8);
    }

    #[test]
    fn p1_closed_form_and_symmetry() {
        let (rho, s) = (c(1.0), c(1.4));
        assert!((iterated_p(rho, 1, s).unwrap() - p1_closed_form(rho, s)).norm() < 1e-10);
        for n in 1..=2 {
            let a = iterated_p(rho, n, s).unwrap();
            let b = iterated_p(rho, n, 1.0 - s).unwrap();
            assert!((a - b).norm() < 1e-8);
        }
        let a = iterated_i(rho, 1, s).unwrap();
        let b = iterated_i(rho, 1, 1.0 - s).unwrap();
        assert!((a - b).norm() < 1e-8);
        assert!(iterated_p(rho, 4, s).is_err());
    }

    #[test]
    fn p_recursion() {
        let (rho, s, h) = (c(1.0), c(1.4), 1e-3);
        let k = 16.0 * rho;
        for n in 1..=2 {
            let p = |x: C64| iterated_p(rho, n, x).unwrap();
            let d2 = (p(s + h) - 2.0 * p(s) + p(s - h)) / (h * h);
            let lhs = p(s) - k * k * d2;
            let rhs = -k * iterated_p(rho, n - 1, s).unwrap();
            assert!((lhs - rhs).norm() < 1e-5 * rhs.norm().max(1.0), "n = {n}");
        }
    }

    #[test]
    fn expansion_n2() {
        let r = expansion_residual(c(1.0), 2, c(1.2)).unwrap();
        assert!(r < 1e-7, "{r:e}");
        let r = expansion_residual(c(1.0), 1, c(1.2)).unwrap();
        assert!(r < 1e-9, "{r:e}");
    }

    #[test]
    fn iterated_first_order_skips_without_real_roots() {
        assert_eq!(iterated_first_order_residual(c(0.5), 4.0).unwrap(), None);
    }
}
