//! Multidimensional integrals
//! Ξ(ρ, s) = ∫ Π dt_i/t_i t_i^{s_i/2} (θΨ)(t_i) e^{−Σρ_ij ln t_i ln t_j}, d ≤ 3.
//!
//! The integral is nested axis by axis on x_i = ln t_i. Each level picks its
//! window from an envelope of everything still to be integrated, so tails of
//! the outer axes skip the inner integrals entirely.

use std::cell::{Cell, RefCell};
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result, XiError};
use crate::gaussmat::RhoMatrix;
use crate::quadrature::{integrate_interval, log_window, IntegralResult, QuadSpec};
use crate::theta::{CompiledOp, ThetaOperator};
use crate::xi::{check_rho, XiValue, Xi1};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// Ψ on every axis.
    Theta,
    /// Δ₄Ψ on every axis.
    Jensen,
}

impl Variant {
    fn op(self) -> ThetaOperator {
        match self {
            Variant::Theta => ThetaOperator::Plain,
            Variant::Jensen => ThetaOperator::Delta4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiXiParams {
    pub rho: RhoMatrix,
    pub s: Vec<Complex64>,
    pub variant: Variant,
}

/// c with env(x) ≤ c + max(−x/2, 0) for all x.
fn envelope_offset(op: &CompiledOp) -> f64 {
    let mut c = f64::NEG_INFINITY;
    let mut x = -60.0;
    while x <= 60.0 {
        c = c.max(op.log_envelope(x) - (-0.5 * x).max(0.0));
        x += 0.01;
    }
    c + 1e-3
}

/// Bound data for the axes after a given level.
#[derive(Debug, Clone)]
struct TailBound {
    idx: Vec<usize>,
    inv: Vec<Vec<f64>>,
    ln_norm: f64,
    c0: f64,
}

impl TailBound {
    fn new(re: &[[f64; 3]; 3], idx: Vec<usize>, c0: f64) -> Result<Self> {
        let r = idx.len();
        let (inv, det) = match r {
            0 => (vec![], 1.0),
            1 => {
                let a = re[idx[0]][idx[0]];
                (vec![vec![1.0 / a]], a)
            }
            _ => {
                let (a, b, d) = (re[idx[0]][idx[0]], re[idx[0]][idx[1]], re[idx[1]][idx[1]]);
                let det = a * d - b * b;
                (vec![vec![d / det, -b / det], vec![-b / det, a / det]], det)
            }
        };
        if !(det > 0.0) {
            return domain("real part of the coupling matrix is not positive definite");
        }
        Ok(TailBound {
            ln_norm: 0.5 * (r as f64 * PI.ln() - det.ln()),
            idx,
            inv,
            c0,
        })
    }

    /// ln of a bound for |∫ exp(l·y − yᵀρy) Π(θΨ)(e^{y_i}) dy| with Re l = `lre`.
    fn ln_bound(&self, lre: &[f64]) -> f64 {
        let r = self.idx.len();
        if r == 0 {
            return 0.0;
        }
        let mut best = f64::NEG_INFINITY;
        let mut terms = Vec::with_capacity(1 << r);
        for mask in 0..(1usize << r) {
            let g: Vec<f64> = (0..r)
                .map(|i| lre[i] - if mask >> i & 1 == 1 { 0.5 } else { 0.0 })
                .collect();
            let mut q = 0.0;
            for i in 0..r {
                for j in 0..r {
                    q += g[i] * self.inv[i][j] * g[j];
                }
            }
            let v = q / 4.0;
            best = best.max(v);
            terms.push(v);
        }
        let sum: f64 = terms.iter().map(|v| (v - best).exp()).sum();
        self.c0 + self.ln_norm + best + sum.ln()
    }
}

struct Nested<'a> {
    d: usize,
    rho: &'a RhoMatrix,
    re: [[f64; 3]; 3],
    ops: &'a [CompiledOp],
    powers: [u32; 3],
    tails: Vec<TailBound>,
    margin: f64,
    evaluations: Cell<usize>,
    failure: RefCell<Option<XiError>>,
}

impl<'a> Nested<'a> {
    /// ln of the bound on the level-k integrand at x.
    fn level_bound(&self, k: usize, l: &[Complex64; 3], x: f64) -> f64 {
        let tail = &self.tails[k];
        let lre: Vec<f64> = tail.idx.iter().map(|&i| l[i].re - 2.0 * self.re[i][k] * x).collect();
        l[k].re * x - self.re[k][k] * x * x
            + self.ops[k].log_envelope(x)
            + self.powers[k] as f64 * x.abs().max(1.0).ln()
            + tail.ln_bound(&lre)
    }

    fn integrate(&self, k: usize, l: [Complex64; 3], spec: &QuadSpec) -> Result<IntegralResult> {
        let target = (spec.abs_tol / 100.0).ln() - self.margin;
        let start = (l[k].re / (2.0 * self.re[k][k])).clamp(-100.0, 100.0);
        let bound = |x: f64| self.level_bound(k, &l, x);
        let (lo, hi) = log_window(bound, target, start, 0.25);
        let width = hi - lo;
        let n = (width / 0.1).ceil().max(1.0) as usize;
        let peak = (0..=n)
            .map(|i| bound(lo + width * i as f64 / n as f64))
            .fold(f64::NEG_INFINITY, f64::max);
        if peak + width.max(1.0).ln() < target {
            return Ok(IntegralResult::zero());
        }
        let skip = target - width.max(1.0).ln();
        let inner = spec.with_tol(spec.abs_tol / (2.0 * width.max(1.0)), spec.rel_tol / 2.0);
        let rho = self.rho;
        let pk = self.powers[k] as i32;
        let last = k + 1 == self.d;
        let f = |x: f64| -> Complex64 {
            if !last && bound(x) < skip {
                return Complex64::new(0.0, 0.0);
            }
            self.evaluations.set(self.evaluations.get() + 1);
            let mut g = (l[k] * x - rho.get(k, k) * x * x).exp() * self.ops[k].eval_log(x);
            if pk > 0 {
                g *= x.powi(pk);
            }
            if last {
                return g;
            }
            let mut l2 = l;
            for i in k + 1..self.d {
                l2[i] = l[i] - 2.0 * rho.get(i, k) * x;
            }
            match self.integrate(k + 1, l2, &inner) {
                Ok(r) => g * r.value,
                Err(XiError::NonConvergence { best, .. }) => {
                    self.failure.borrow_mut().get_or_insert(XiError::NonConvergence {
                        best,
                        error: f64::NAN,
                        evaluations: 0,
                    });
                    g * best
                }
                Err(e) => {
                    self.failure.borrow_mut().get_or_insert(e);
                    Complex64::new(0.0, 0.0)
                }
            }
        };
        integrate_interval(f, lo, hi, spec)
    }
}

/// Evaluator for a fixed operator per axis and quadrature spec.
#[derive(Debug, Clone)]
pub struct MultiXi {
    ops: Vec<CompiledOp>,
    c0: Vec<f64>,
    spec: QuadSpec,
}

impl MultiXi {
    pub fn new(variant: Variant, d: usize) -> Result<Self> {
        Self::with_spec(variant, d, QuadSpec::for_dim(d))
    }

    pub fn with_spec(variant: Variant, d: usize, spec: QuadSpec) -> Result<Self> {
        Self::with_ops(&vec![variant.op(); d], spec)
    }

    /// One operator per axis.
    pub fn with_ops(ops: &[ThetaOperator], spec: QuadSpec) -> Result<Self> {
        if ops.is_empty() || ops.len() > 3 {
            return domain(format!("dimension must be 1, 2 or 3, got {}", ops.len()));
        }
        spec.validate()?;
        let ops = ops.iter().map(CompiledOp::new).collect::<Result<Vec<_>>>()?;
        let c0 = ops.iter().map(envelope_offset).collect();
        Ok(MultiXi { ops, c0, spec })
    }

    pub fn dim(&self) -> usize {
        self.ops.len()
    }

    pub fn spec(&self) -> &QuadSpec {
        &self.spec
    }

    pub fn eval(&self, rho: &RhoMatrix, s: &[Complex64]) -> Result<XiValue> {
        self.eval_moment(rho, s, &[0; 3])
    }

    /// The integral with an extra factor Π x_i^{powers[i]}, x_i = ln t_i.
    pub fn eval_moment(&self, rho: &RhoMatrix, s: &[Complex64], powers: &[u32]) -> Result<XiValue> {
        let d = self.dim();
        if rho.dim() != d || s.len() != d {
            return domain(format!(
                "dimension mismatch: evaluator {d}, matrix {}, arguments {}",
                rho.dim(),
                s.len()
            ));
        }
        if s.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return domain("arguments must be finite");
        }
        rho.check_convergence()?;
        let mut re = [[0.0; 3]; 3];
        for i in 0..d {
            for j in 0..d {
                re[i][j] = rho.get(i, j).re;
            }
        }
        let mut tails = Vec::with_capacity(d);
        for k in 0..d {
            let idx: Vec<usize> = (k + 1..d).collect();
            let c0: f64 = idx.iter().map(|&i| self.c0[i]).sum();
            tails.push(TailBound::new(&re, idx, c0)?);
        }
        let mut pw = [0u32; 3];
        for (i, p) in powers.iter().take(d).enumerate() {
            pw[i] = *p;
        }
        let total_power: u32 = pw.iter().sum();
        let nested = Nested {
            d,
            rho,
            re,
            ops: &self.ops,
            powers: pw,
            tails,
            margin: 5.0 + 3.0 * total_power as f64,
            evaluations: Cell::new(0),
            failure: RefCell::new(None),
        };
        let mut l = [Complex64::new(0.0, 0.0); 3];
        for i in 0..d {
            l[i] = s[i] / 2.0;
        }
        let r = nested.integrate(0, l, &self.spec)?;
        let evaluations = nested.evaluations.get();
        if let Some(e) = nested.failure.into_inner() {
            return Err(match e {
                XiError::NonConvergence { .. } => XiError::NonConvergence {
                    best: r.value,
                    error: r.error_estimate,
                    evaluations,
                },
                other => other,
            });
        }
        Ok(XiValue {
            value: r.value,
            quad_error: r.error_estimate,
            evaluations,
            condition: r.condition(),
        })
    }
}

pub fn xi_d(params: &MultiXiParams) -> Result<XiValue> {
    MultiXi::new(params.variant, params.rho.dim())?.eval(&params.rho, &params.s)
}

pub fn xi_d_with(params: &MultiXiParams, spec: &QuadSpec) -> Result<XiValue> {
    MultiXi::with_spec(params.variant, params.rho.dim(), *spec)?.eval(&params.rho, &params.s)
}

/// |ξ(ρ, s) − ξ(flip_k ρ, s with s_k → 1 − s_k)| for the Jensen variant.
pub fn jensen_flip_residual(rho: &RhoMatrix, s: &[Complex64], k: usize) -> Result<f64> {
    if k >= rho.dim() {
        return domain(format!("index {k} out of range"));
    }
    let ev = MultiXi::new(Variant::Jensen, rho.dim())?;
    let a = ev.eval(rho, s)?.value;
    let mut s2 = s.to_vec();
    s2[k] = 1.0 - s2[k];
    let b = ev.eval(&rho.flip_k(k), &s2)?.value;
    Ok((a - b).norm())
}

fn pair_powers(d: usize, i: usize, j: usize) -> Result<[u32; 3]> {
    if i >= d || j >= d {
        return domain(format!("indices ({i}, {j}) out of range for d = {d}"));
    }
    let mut p = [0u32; 3];
    p[i] += 1;
    p[j] += 1;
    Ok(p)
}

/// ∂Ξ/∂ρ_ij with ρ_ij and ρ_ji moved together: −(2−δ_ij)∫ x_i x_j (…).
pub fn d_rho_ij(ev: &MultiXi, rho: &RhoMatrix, s: &[Complex64], i: usize, j: usize) -> Result<XiValue> {
    let p = pair_powers(rho.dim(), i, j)?;
    let c = if i == j { -1.0 } else { -2.0 };
    Ok(ev.eval_moment(rho, s, &p)?.scale(Complex64::new(c, 0.0)))
}

/// ∂²Ξ/∂s_i∂s_j = ¼∫ x_i x_j (…).
pub fn d2_s_ij(ev: &MultiXi, rho: &RhoMatrix, s: &[Complex64], i: usize, j: usize) -> Result<XiValue> {
    let p = pair_powers(rho.dim(), i, j)?;
    Ok(ev.eval_moment(rho, s, &p)?.scale(Complex64::new(0.25, 0.0)))
}

/// |(∂_{ρij} + 8/(1+δ_ij) ∂²_{s_i s_j})Ξ(ρ, s)|
pub fn heat_residual_multi(rho: &RhoMatrix, s: &[Complex64], i: usize, j: usize) -> Result<f64> {
    let ev = MultiXi::new(Variant::Theta, rho.dim())?;
    let a = d_rho_ij(&ev, rho, s, i, j)?.value;
    let b = d2_s_ij(&ev, rho, s, i, j)?.value;
    let c = if i == j { 4.0 } else { 8.0 };
    Ok((a + c * b).norm())
}

/// Π_i Ξ_{Re ρ_ii}(Re s_i), which dominates |Ξ(ρ, s)| when the off-diagonal entries are imaginary.
pub fn domination_bound(rho: &RhoMatrix, s: &[Complex64]) -> Result<f64> {
    let mut out = 1.0;
    for i in 0..rho.dim() {
        let x = Xi1::new(Complex64::new(rho.get(i, i).re, 0.0))?;
        out *= x.value(Complex64::new(s[i].re, 0.0))?.value.re;
    }
    Ok(out)
}

/// M[Ψe^{−ρ ln²}](a) = Ξ_ρ(2a)
fn m_plain(x: &Xi1, a: Complex64) -> Result<Complex64> {
    Ok(x.value(2.0 * a)?.value)
}

/// Bound on ln|M[Ψe^{−ρln²}](a)| for real part `are`.
fn m_plain_ln_bound(rho_re: f64, c0: f64, are: f64) -> f64 {
    let t = |g: f64| g * g / (4.0 * rho_re);
    let (a, b) = (t(are), t(are - 0.5));
    let m = a.max(b);
    c0 + 0.5 * (PI / rho_re).ln() + m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Both sides of the d = 2 Fubini mean-value identity:
/// ∫dx M_{ρ22}(s₂/2 + 2(ρ22−ρ12)x) e^{−Dx² + (s₁−s₂)x/2}
/// = √(π/D) e^{(s₁−s₂)²/16D} M_{det/D}((s₁ρ22 + s₂ρ11 − (s₁+s₂)ρ12)/2D),
/// D = ρ11 + ρ22 − 2ρ12.
pub fn fubini_mean_value(rho: &RhoMatrix, s: &[Complex64], spec: &QuadSpec) -> Result<(XiValue, XiValue)> {
    if rho.dim() != 2 || s.len() != 2 {
        return domain("mean-value identity is two-dimensional");
    }
    rho.check_convergence()?;
    let (r11, r12, r22) = (rho.get(0, 0), rho.get(0, 1), rho.get(1, 1));
    let dd = r11 + r22 - 2.0 * r12;
    if !(dd.re > 0.0) {
        return domain("need Re(ρ11 + ρ22 − 2ρ12) > 0");
    }
    let x22 = Xi1::with_spec(r22, *spec)?;
    let c0 = envelope_offset(&CompiledOp::new(&ThetaOperator::Plain)?);
    let lin = (s[0] - s[1]) / 2.0;
    let shift = 2.0 * (r22 - r12);
    let bound = |x: f64| {
        let a = s[1] / 2.0 + shift * x;
        m_plain_ln_bound(r22.re, c0, a.re) + (lin * x - dd * x * x).re
    };
    let outer = spec.with_tol(spec.abs_tol * 10.0, spec.rel_tol * 10.0);
    let target = (outer.abs_tol / 100.0).ln();
    let (lo, hi) = log_window(bound, target, 0.0, 0.25);
    let failure = RefCell::new(None);
    let r = integrate_interval(
        |x| {
            let a = s[1] / 2.0 + shift * x;
            match m_plain(&x22, a) {
                Ok(v) => v * (lin * x - dd * x * x).exp(),
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    Complex64::new(0.0, 0.0)
                }
            }
        },
        lo,
        hi,
        &outer,
    )?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let lhs = XiValue {
        value: r.value,
        quad_error: r.error_estimate,
        evaluations: r.evaluations,
        condition: r.condition(),
    };
    let det = rho.det();
    let xr = Xi1::with_spec(det / dd, *spec)?;
    let arg = (s[0] * r22 + s[1] * r11 - (s[0] + s[1]) * r12) / (2.0 * dd);
    let pre = (PI / dd).sqrt() * ((s[0] - s[1]) * (s[0] - s[1]) / (16.0 * dd)).exp();
    let rhs = xr.value(2.0 * arg)?.scale(pre);
    Ok((lhs, rhs))
}

/// Gaussian-convolution form of the mean value property, γ > ρ > 0:
/// returns (M[Ψe^{−ρln²}](s), ∫dq M[Ψe^{−γln²}](q) e^{−(q−s)²/4(γ−ρ)}/√(4π(γ−ρ))).
pub fn convolution_mean_value(gamma: f64, rho: f64, s: Complex64, spec: &QuadSpec) -> Result<(XiValue, XiValue)> {
    check_rho(Complex64::new(rho, 0.0))?;
    if !(gamma > rho) {
        return domain("convolution form needs γ > ρ");
    }
    let direct = Xi1::with_spec(Complex64::new(rho, 0.0), *spec)?.value(2.0 * s)?;
    let xg = Xi1::with_spec(Complex64::new(gamma, 0.0), *spec)?;
    let c = gamma - rho;
    let norm = (4.0 * PI * c).sqrt();
    let c0 = envelope_offset(&CompiledOp::new(&ThetaOperator::Plain)?);
    // integrate over q = s.re + u on the horizontal line through s
    let bound = |u: f64| m_plain_ln_bound(gamma, c0, s.re + u) - u * u / (4.0 * c);
    let outer = spec.with_tol(spec.abs_tol * 10.0, spec.rel_tol * 10.0);
    let (lo, hi) = log_window(bound, (outer.abs_tol / 100.0).ln(), 0.0, 0.25);
    let failure = RefCell::new(None);
    let r = integrate_interval(
        |u| {
            let q = Complex64::new(s.re + u, 0.0);
            match m_plain(&xg, q) {
                Ok(v) => v * (-(q - s) * (q - s) / (4.0 * c)).exp() / norm,
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    Complex64::new(0.0, 0.0)
                }
            }
        },
        lo,
        hi,
        &outer,
    )?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok((
        direct,
        XiValue {
            value: r.value,
            quad_error: r.error_estimate,
            evaluations: r.evaluations,
            condition: r.condition(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::xi::xi;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }
    fn ci(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn one_dim_matches_xi() {
        let rho = RhoMatrix::scalar(c(0.7));
        let s = ci(0.4, 1.1);
        let a = MultiXi::new(Variant::Theta, 1).unwrap().eval(&rho, &[s]).unwrap().value;
        let b = xi(c(0.7), s).unwrap().value;
        assert!((a - b).norm() < 1e-11);
    }

    #[test]
    fn diagonal_factorizes() {
        let rho = RhoMatrix::two(c(0.5), c(0.0), c(1.0));
        let s = [c(1.0), c(2.0)];
        let v = xi_d(&MultiXiParams {
            rho,
            s: s.to_vec(),
            variant: Variant::Theta,
        })
        .unwrap()
        .value;
        let e = xi(c(0.5), s[0]).unwrap().value * xi(c(1.0), s[1]).unwrap().value;
        assert!((v - e).norm() < 1e-8);
    }

    #[test]
    fn diagonal_factorizes_3d() {
        let rho = RhoMatrix::diagonal(&[c(0.8), c(1.0), c(1.3)]).unwrap();
        let s = [ci(0.2, 0.3), c(0.5), ci(0.9, -0.2)];
        let v = MultiXi::new(Variant::Theta, 3).unwrap().eval(&rho, &s).unwrap().value;
        let e = xi(c(0.8), s[0]).unwrap().value * xi(c(1.0), s[1]).unwrap().value * xi(c(1.3), s[2]).unwrap().value;
        assert!((v - e).norm() < 1e-7);
    }

    #[test]
    fn swap_symmetry() {
        let rho = RhoMatrix::two(c(1.0), ci(0.2, 0.1), c(1.0));
        let ev = MultiXi::new(Variant::Theta, 2).unwrap();
        let a = ev.eval(&rho, &[ci(0.3, 0.5), c(1.2)]).unwrap().value;
        let b = ev.eval(&rho.permute(&[1, 0]), &[c(1.2), ci(0.3, 0.5)]).unwrap().value;
        assert!((a - b).norm() < 1e-9);
    }

    #[test]
    fn domination() {
        let rho = RhoMatrix::two(c(1.0), ci(0.0, 0.2), c(0.8));
        let s = [ci(0.5, 1.0), ci(1.5, -0.5)];
        let v = MultiXi::new(Variant::Theta, 2).unwrap().eval(&rho, &s).unwrap().value;
        assert!(v.norm() <= domination_bound(&rho, &s).unwrap());
    }

    #[test]
    fn jensen_flip() {
        let rho1 = RhoMatrix::scalar(c(1.0));
        assert!(jensen_flip_residual(&rho1, &[c(0.3)], 0).unwrap() < 1e-9);
        let rho = RhoMatrix::two(c(1.0), c(0.2), c(1.0));
        let s = [c(0.7), c(1.1)];
        assert!(jensen_flip_residual(&rho, &s, 0).unwrap() < 1e-8);
        assert!(jensen_flip_residual(&rho, &s, 1).unwrap() < 1e-8);
    }

    #[test]
    fn jensen_conjugation() {
        let rho = RhoMatrix::two(ci(1.0, 0.1), ci(0.2, -0.05), c(0.9));
        let s = [ci(0.7, 0.4), ci(0.2, -1.0)];
        let ev = MultiXi::new(Variant::Jensen, 2).unwrap();
        let a = ev.eval(&rho, &s).unwrap().value;
        let b = ev.eval(&rho.conj(), &[s[0].conj(), s[1].conj()]).unwrap().value;
        assert!((a - b.conj()).norm() < 1e-9);
    }

    #[test]
    fn heat_multi() {
        let rho = RhoMatrix::two(c(1.0), c(0.2), c(0.9));
        let s = [ci(0.5, 0.3), c(1.0)];
        assert!(heat_residual_multi(&rho, &s, 0, 0).unwrap() < 1e-12);
        assert!(heat_residual_multi(&rho, &s, 0, 1).unwrap() < 1e-12);
        let h = 1e-4;
        let tight = MultiXi::with_spec(Variant::Theta, 2, QuadSpec::for_dim(2).with_tol(1e-14, 1e-13)).unwrap();
        let plus = RhoMatrix::two(c(1.0), c(0.2 + h), c(0.9));
        let minus = RhoMatrix::two(c(1.0), c(0.2 - h), c(0.9));
        let fd = (tight.eval(&plus, &s).unwrap().value - tight.eval(&minus, &s).unwrap().value) / (2.0 * h);
        let an = d_rho_ij(&tight, &rho, &s, 0, 1).unwrap().value;
        assert!((fd - an).norm() < 1e-6);
    }

    #[test]
    fn rejects_bad_input() {
        let bad = RhoMatrix::two(c(1.0), c(2.0), c(1.0));
        let ev = MultiXi::new(Variant::Theta, 2).unwrap();
        assert!(matches!(ev.eval(&bad, &[c(0.0), c(0.0)]), Err(XiError::Domain(_))));
        assert!(ev.eval(&RhoMatrix::scalar(c(1.0)), &[c(0.0)]).is_err());
        assert!(MultiXi::new(Variant::Theta, 4).is_err());
    }

    #[test]
    fn mean_value_fubini() {
        let rho = RhoMatrix::two(c(1.2), c(0.1), c(1.0));
        let (l, r) = fubini_mean_value(&rho, &[c(0.8), c(0.6)], &QuadSpec::for_dim(1)).unwrap();
        assert!((l.value - r.value).norm() < 1e-7, "{} {}", l.value, r.value);
    }

    #[test]
    fn mean_value_convolution() {
        let (a, b) = convolution_mean_value(1.0, 0.5, c(0.4), &QuadSpec::for_dim(1)).unwrap();
        assert!((a.value - b.value).norm() < 1e-7, "{} {}", a.value, b.value);
    }

    #[test]
    fn correlated_against_plain_tensor_quadrature() {
        let rho = RhoMatrix::two(c(1.1), ci(0.3, 0.1), c(0.9));
        let s = [ci(0.4, 0.2), c(0.7)];
        let v = MultiXi::new(Variant::Theta, 2).unwrap().eval(&rho, &s).unwrap().value;
        let op = CompiledOp::new(&ThetaOperator::Plain).unwrap();
        let spec = QuadSpec::for_dim(2).with_tol(1e-12, 1e-11);
        let r = crate::quadrature::tensor_integrate_box(
            |x| {
                let xc = [c(x[0]), c(x[1])];
                (s[0] * xc[0] / 2.0 + s[1] * xc[1] / 2.0 - rho.quad_form(&xc)).exp()
                    * op.eval_log(x[0])
                    * op.eval_log(x[1])
            },
            &[(-12.0, 12.0), (-12.0, 12.0)],
            &spec,
        )
        .unwrap();
        assert!((v - r.value).norm() < 1e-9, "{v} {}", r.value);
    }
}
