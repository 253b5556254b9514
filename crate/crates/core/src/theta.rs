//! The theta sum Ψ(t) = Σ_{n≥1} e^{−πn²t} and differential operators acting on it.
//!
//! Every operator here is a polynomial p(D) in the Euler operator D = t·d/dt.
//! On a single term D^k e^{−u} = P_k(u)e^{−u} with u = πn²t, so an operator is
//! evaluated termwise from one polynomial in u. Small arguments go through the
//! Poisson reflection of θ(t) = 1 + 2Ψ(t), which turns p(D) into p(−½ − D).

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result, XiError};

/// Default absolute tail tolerance for the series.
pub const DEFAULT_EPS: f64 = 1e-18;

/// Arguments below this are evaluated through the reflection t → 1/t.
pub const REFLECT_BELOW: f64 = 0.2;

const MAX_DELTA4_POWER: u32 = 3;
const MAX_DERIVATIVE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ThetaOperator {
    Plain,
    /// H_α = 1 + αt∂_t
    H(Complex64),
    /// Δ_α = H_α² − 1
    Delta(Complex64),
    Delta4,
    Delta4H4,
    Delta4Power(u32),
}

impl ThetaOperator {
    /// Coefficients of p with the operator equal to p(D), lowest power first.
    pub fn d_polynomial(&self) -> Result<Vec<Complex64>> {
        let c = |x: f64| Complex64::new(x, 0.0);
        let delta4 = vec![c(0.0), c(8.0), c(16.0)];
        Ok(match *self {
            ThetaOperator::Plain => vec![c(1.0)],
            ThetaOperator::H(a) => vec![c(1.0), a],
            ThetaOperator::Delta(a) => vec![c(0.0), 2.0 * a, a * a],
            ThetaOperator::Delta4 => delta4,
            ThetaOperator::Delta4H4 => poly_mul(&delta4, &[c(1.0), c(4.0)]),
            ThetaOperator::Delta4Power(n) => {
                if n > MAX_DELTA4_POWER {
                    return Err(XiError::UnsupportedOrder {
                        what: "Delta4Power",
                        order: n as usize,
                    });
                }
                let mut p = vec![c(1.0)];
                for _ in 0..n {
                    p = poly_mul(&p, &delta4);
                }
                p
            }
        })
    }
}

fn poly_mul(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_eval(p: &[Complex64], x: Complex64) -> Complex64 {
    p.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * x + c)
}

/// P_k in D^k e^{−u} = P_k(u) e^{−u}, as coefficients in u.
fn euler_power(k: usize) -> Vec<f64> {
    let mut p = vec![1.0];
    for _ in 0..k {
        // P_{k+1}(u) = u (P_k'(u) − P_k(u))
        let mut next = vec![0.0; p.len() + 1];
        for (j, c) in p.iter().enumerate() {
            if j > 0 {
                next[j] += j as f64 * c;
            }
            next[j + 1] -= c;
        }
        p = next;
    }
    p
}

/// Termwise polynomial Q(u) = Σ_k c_k P_k(u) for p(D) = Σ_k c_k D^k.
fn termwise(p: &[Complex64]) -> Vec<Complex64> {
    let mut q = vec![Complex64::new(0.0, 0.0); p.len()];
    for (k, c) in p.iter().enumerate() {
        for (j, e) in euler_power(k).iter().enumerate() {
            q[j] += c * e;
        }
    }
    q
}

/// Coefficients of x ↦ p(−½ − x).
fn reflect(p: &[Complex64]) -> Vec<Complex64> {
    let mut q = vec![Complex64::new(0.0, 0.0); p.len()];
    for (k, c) in p.iter().enumerate() {
        let mut binom = 1.0;
        for j in 0..=k {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            q[j] += c * binom * (-0.5f64).powi((k - j) as i32) * sign;
            binom = binom * (k - j) as f64 / (j + 1) as f64;
        }
    }
    q
}

/// Truncation rule for the derivative series Σ (πn²)^k e^{−πn²t}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaTruncation {
    pub eps: f64,
}

impl Default for ThetaTruncation {
    fn default() -> Self {
        ThetaTruncation { eps: DEFAULT_EPS }
    }
}

impl ThetaTruncation {
    /// Smallest N with π^k N^{2k} e^{−πN²t} / (1 − e^{−π(2N+1)t}) ≤ eps.
    pub fn terms(&self, t: f64, k: usize) -> usize {
        let mut n = 1usize;
        loop {
            let nf = n as f64;
            let u = PI * nf * nf * t;
            if u >= k as f64 {
                let ln_bound = k as f64 * (PI.ln() + 2.0 * nf.ln()) - u
                    - (-(-PI * (2.0 * nf + 1.0) * t).exp()).ln_1p();
                if ln_bound <= self.eps.ln() {
                    return n;
                }
            }
            n += 1;
            if n > 1_000_000 {
                return n;
            }
        }
    }
}

/// Sum Σ_{n≥1} Q(πn²τ)e^{−πn²τ}, stopping once a geometric tail bound drops below eps.
fn series(q: &[Complex64], qabs: &[f64], tau: f64, eps: f64) -> Complex64 {
    let deg = (q.len() - 1) as i32;
    let mut sum = Complex64::new(0.0, 0.0);
    let mut n = 1u32;
    loop {
        let nf = n as f64;
        let u = PI * nf * nf * tau;
        let e = (-u).exp();
        if e == 0.0 {
            break;
        }
        sum += poly_eval(q, Complex64::new(u, 0.0)) * e;

        let m = nf + 1.0;
        let um = PI * m * m * tau;
        if um >= deg as f64 {
            let lead: f64 = qabs
                .iter()
                .enumerate()
                .map(|(j, a)| a * um.powi(j as i32))
                .sum::<f64>()
                * (-um).exp();
            let ratio = ((m + 1.0) / m).powi(2 * deg) * (-PI * (2.0 * m + 1.0) * tau).exp();
            if ratio < 1.0 && lead / (1.0 - ratio) <= eps {
                break;
            }
        }
        n += 1;
        if n > 1_000_000 {
            break;
        }
    }
    sum
}

/// ln of an upper bound for |Σ_n Q(πn²τ)e^{−πn²τ}| valid for τ ≥ 1.
fn series_log_bound(qabs_sum: &[f64], tau: f64) -> f64 {
    let u = PI * tau;
    let s: f64 = qabs_sum
        .iter()
        .enumerate()
        .map(|(j, a)| a * u.powi(j as i32))
        .sum();
    (2.0 * s).ln() - u
}

/// A theta operator prepared for repeated evaluation.
#[derive(Debug, Clone)]
pub struct CompiledOp {
    direct: Vec<Complex64>,
    reflected: Vec<Complex64>,
    direct_abs: Vec<f64>,
    reflected_abs: Vec<f64>,
    p_half: Complex64,
    p_zero: Complex64,
    eps: f64,
}

impl CompiledOp {
    pub fn new(op: &ThetaOperator) -> Result<Self> {
        Ok(Self::from_d_polynomial(&op.d_polynomial()?, DEFAULT_EPS))
    }

    pub fn from_d_polynomial(p: &[Complex64], eps: f64) -> Self {
        let direct = termwise(p);
        let reflected = termwise(&reflect(p));
        CompiledOp {
            direct_abs: direct.iter().map(|c| c.norm()).collect(),
            reflected_abs: reflected.iter().map(|c| c.norm()).collect(),
            direct,
            reflected,
            p_half: poly_eval(p, Complex64::new(-0.5, 0.0)),
            p_zero: p[0],
            eps,
        }
    }

    /// (pΨ)(t) for t > 0.
    pub fn eval(&self, t: f64) -> Complex64 {
        if t < REFLECT_BELOW {
            let r = t.sqrt().recip();
            0.5 * (r * (self.p_half + 2.0 * series(&self.reflected, &self.reflected_abs, 1.0 / t, self.eps)) - self.p_zero)
        } else {
            series(&self.direct, &self.direct_abs, t, self.eps)
        }
    }

    /// (pΨ)(e^x), avoiding a round trip through t for very negative x.
    pub fn eval_log(&self, x: f64) -> Complex64 {
        if x < REFLECT_BELOW.ln() {
            let r = (-0.5 * x).exp();
            let tau = (-x).exp();
            0.5 * (r * (self.p_half + 2.0 * series(&self.reflected, &self.reflected_abs, tau, self.eps)) - self.p_zero)
        } else {
            series(&self.direct, &self.direct_abs, x.exp(), self.eps)
        }
    }

    /// Plain series without reflection. Slow for small t; used as an oracle.
    pub fn eval_direct(&self, t: f64) -> Complex64 {
        series(&self.direct, &self.direct_abs, t, self.eps)
    }

    /// ln of an upper bound for |(pΨ)(e^x)|.
    pub fn log_envelope(&self, x: f64) -> f64 {
        if x >= 0.0 {
            series_log_bound(&self.direct_abs, x.exp())
        } else {
            let r = (-0.5 * x).exp();
            let refl = series_log_bound(&self.reflected_abs, (-x).exp()).exp();
            (0.5 * self.p_half.norm() * r + 0.5 * self.p_zero.norm() + r * refl).ln()
        }
    }
}

/// k-th derivative of Ψ at t.
pub fn psi(t: f64, deriv_order: usize) -> Result<f64> {
    psi_with(t, deriv_order, &ThetaTruncation::default())
}

pub fn psi_with(t: f64, deriv_order: usize, trunc: &ThetaTruncation) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return domain(format!("psi needs t > 0, got {t}"));
    }
    if deriv_order > MAX_DERIVATIVE {
        return Err(XiError::UnsupportedOrder {
            what: "psi derivative",
            order: deriv_order,
        });
    }
    let k = deriv_order;
    if t >= REFLECT_BELOW {
        let n = trunc.terms(t, k);
        let mut sum = 0.0;
        for i in (1..=n).rev() {
            let a = PI * (i * i) as f64;
            sum += (-a).powi(k as i32) * (-a * t).exp();
        }
        return Ok(sum);
    }
    // d^k/dt^k = t^{−k} D(D−1)…(D−k+1)
    let mut p = vec![Complex64::new(1.0, 0.0)];
    for j in 0..k {
        p = poly_mul(&p, &[Complex64::new(-(j as f64), 0.0), Complex64::new(1.0, 0.0)]);
    }
    let op = CompiledOp::from_d_polynomial(&p, trunc.eps);
    Ok(op.eval(t).re * t.powi(-(k as i32)))
}

/// The chosen operator applied to Ψ at t.
pub fn apply_theta_op(op: ThetaOperator, t: f64) -> Result<Complex64> {
    if !(t > 0.0) || !t.is_finite() {
        return domain(format!("theta operator needs t > 0, got {t}"));
    }
    Ok(CompiledOp::new(&op)?.eval(t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ReflectionLaw {
    Psi,
    H4,
    Delta4,
    DeltaAlpha(Complex64),
}

/// |LHS − RHS| of the t → 1/t law for `kind`, both sides summed directly.
pub fn functional_residual(kind: ReflectionLaw, t: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return domain(format!("reflection law needs t > 0, got {t}"));
    }
    let r = t.sqrt().recip();
    let direct = |op: ThetaOperator, x: f64| -> Result<Complex64> {
        Ok(CompiledOp::new(&op)?.eval_direct(x))
    };
    let diff = match kind {
        ReflectionLaw::Psi => {
            let p = ThetaOperator::Plain;
            direct(p, t)? - (r * direct(p, 1.0 / t)? + (r - 1.0) / 2.0)
        }
        ReflectionLaw::H4 => {
            let h = ThetaOperator::H(Complex64::new(4.0, 0.0));
            direct(h, t)? + r * direct(h, 1.0 / t)? + (r + 1.0) / 2.0
        }
        ReflectionLaw::Delta4 => {
            let d = ThetaOperator::Delta4;
            direct(d, t)? - r * direct(d, 1.0 / t)?
        }
        ReflectionLaw::DeltaAlpha(a) => {
            let d = ThetaOperator::Delta(a);
            let h = ThetaOperator::H(Complex64::new(4.0, 0.0));
            let c = a * (a - 4.0) / 4.0;
            direct(d, t)? - r * (direct(d, 1.0 / t)? + c * (direct(h, 1.0 / t)? + 0.5))
        }
    };
    Ok(diff.norm())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    // plain summation with a fixed, generous term count
    fn oracle(t: f64, k: i32) -> f64 {
        (1..=50)
            .rev()
            .map(|n| {
                let a = PI * (n * n) as f64;
                (-a).powi(k) * (-a * t).exp()
            })
            .sum()
    }

    #[test]
    fn psi_at_one() {
        let v = psi(1.0, 0).unwrap();
        assert!((v - oracle(1.0, 0)).abs() < 1e-17);
        assert!((v - 0.0432174).abs() < 1e-7);
    }

    #[test]
    fn psi_derivatives_match_oracle() {
        for &t in &[0.25, 0.7, 1.0, 3.0] {
            for k in 0..=3 {
                let v = psi(t, k).unwrap();
                let o = oracle(t, k as i32);
                assert!((v - o).abs() <= 1e-13 * o.abs().max(1.0), "t={t} k={k}");
            }
        }
    }

    #[test]
    fn small_t_derivatives_agree_with_series() {
        // reflection path vs brute-force series
        for &t in &[0.05, 0.1, 0.15] {
            for k in 0..=3 {
                let v = psi(t, k).unwrap();
                let o = oracle(t, k as i32);
                assert!((v - o).abs() <= 1e-11 * o.abs().max(1.0), "t={t} k={k}: {v} vs {o}");
            }
        }
    }

    #[test]
    fn poisson_identity() {
        let lhs = psi(2.0, 0).unwrap();
        let rhs = 0.5f64.sqrt() * psi(0.5, 0).unwrap() + (0.5f64.sqrt() - 1.0) / 2.0;
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn psi_errors() {
        assert!(matches!(psi(0.0, 0), Err(XiError::Domain(_))));
        assert!(matches!(psi(-1.0, 0), Err(XiError::Domain(_))));
        assert!(matches!(psi(1.0, 4), Err(XiError::UnsupportedOrder { .. })));
        assert!(matches!(
            apply_theta_op(ThetaOperator::Delta4Power(4), 1.0),
            Err(XiError::UnsupportedOrder { .. })
        ));
    }

    #[test]
    fn h4_reflection_at_three() {
        let h = ThetaOperator::H(c(4.0));
        let t = 3.0;
        let v = apply_theta_op(h, t).unwrap()
            + t.powf(-0.5) * apply_theta_op(h, 1.0 / t).unwrap()
            + (t.powf(-0.5) + 1.0) / 2.0;
        assert!(v.norm() < 1e-12);
    }

    #[test]
    fn delta4_self_reciprocal() {
        let t = 2.0;
        let v = apply_theta_op(ThetaOperator::Delta4, t).unwrap()
            - t.powf(-0.5) * apply_theta_op(ThetaOperator::Delta4, 1.0 / t).unwrap();
        assert!(v.norm() < 1e-12);
    }

    #[test]
    fn delta4_from_derivatives() {
        for &t in &[0.1, 0.5, 1.0, 2.5] {
            let v = apply_theta_op(ThetaOperator::Delta4, t).unwrap();
            let w = 8.0 * (2.0 * t * t * psi(t, 2).unwrap() + 3.0 * t * psi(t, 1).unwrap());
            assert!((v.re - w).abs() < 1e-12 * w.abs().max(1.0), "t={t}");
            assert_eq!(v.im, 0.0);
        }
    }

    #[test]
    fn delta4h4_coefficients() {
        // 16(4t³Ψ‴ + 15t²Ψ″ + 7.5tΨ′)
        for &t in &[0.3, 1.0, 1.7] {
            let v = apply_theta_op(ThetaOperator::Delta4H4, t).unwrap().re;
            let w = 16.0
                * (4.0 * t.powi(3) * psi(t, 3).unwrap()
                    + 15.0 * t * t * psi(t, 2).unwrap()
                    + 7.5 * t * psi(t, 1).unwrap());
            assert!((v - w).abs() < 1e-11 * w.abs().max(1.0), "t={t}: {v} vs {w}");
        }
    }

    #[test]
    fn h_alpha_is_first_order() {
        let t = 0.8;
        let v = apply_theta_op(ThetaOperator::H(c(4.0)), t).unwrap().re;
        let w = psi(t, 0).unwrap() + 4.0 * t * psi(t, 1).unwrap();
        assert!((v - w).abs() < 1e-14);
    }

    #[test]
    fn delta4_powers_compose() {
        // Δ4² equals Δ4 applied to the Δ4 polynomial: compare to H4² − 1 iterated
        let t = 1.3;
        let p2 = ThetaOperator::Delta4Power(2).d_polynomial().unwrap();
        let d = ThetaOperator::Delta(c(4.0)).d_polynomial().unwrap();
        let dd = poly_mul(&d, &d);
        for (a, b) in p2.iter().zip(dd.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
        let v1 = apply_theta_op(ThetaOperator::Delta4Power(1), t).unwrap();
        let v2 = apply_theta_op(ThetaOperator::Delta4, t).unwrap();
        assert!((v1 - v2).norm() < 1e-15);
        let v0 = apply_theta_op(ThetaOperator::Delta4Power(0), t).unwrap();
        assert!((v0.re - psi(t, 0).unwrap()).abs() < 1e-16);
    }

    #[test]
    fn reflection_laws() {
        assert!(functional_residual(ReflectionLaw::Psi, 1.0).unwrap() < 1e-16);
        assert!(functional_residual(ReflectionLaw::Delta4, 5.0).unwrap() < 1e-12);
        assert!(functional_residual(ReflectionLaw::DeltaAlpha(c(2.0)), 2.0).unwrap() < 1e-12);
        assert!(functional_residual(ReflectionLaw::DeltaAlpha(Complex64::new(3.0, 0.5)), 0.7).unwrap() < 1e-12);
        assert!(functional_residual(ReflectionLaw::H4, 0.4).unwrap() < 1e-12);
    }

    #[test]
    fn psi_reflection_on_grid() {
        for i in 0..100 {
            let t = 0.1 + 9.9 * i as f64 / 99.0;
            let r = functional_residual(ReflectionLaw::Psi, t).unwrap();
            assert!(r < 1e-12 * (1.0 + t.powf(-0.5)), "t={t}: {r}");
        }
    }

    #[test]
    fn psi_positive_and_decreasing() {
        let mut prev = f64::INFINITY;
        for i in 0..200 {
            let t = 0.01 + 0.05 * i as f64;
            let v = psi(t, 0).unwrap();
            assert!(v > 0.0 && v < prev, "t={t}");
            prev = v;
        }
    }

    #[test]
    fn truncation_certificate() {
        let tr = ThetaTruncation::default();
        for &t in &[0.2, 0.5, 1.0, 4.0] {
            for k in 0..=3 {
                let n = tr.terms(t, k);
                let partial = |m: usize| -> f64 {
                    (1..=m)
                        .rev()
                        .map(|i| {
                            let a = PI * (i * i) as f64;
                            a.powi(k as i32) * (-a * t).exp()
                        })
                        .sum()
                };
                assert!((partial(2 * n) - partial(n)).abs() <= tr.eps, "t={t} k={k}");
            }
        }
    }

    #[test]
    fn envelope_bounds_values() {
        let ops = [
            ThetaOperator::Plain,
            ThetaOperator::H(c(4.0)),
            ThetaOperator::Delta4,
            ThetaOperator::Delta4H4,
            ThetaOperator::Delta4Power(3),
            ThetaOperator::Delta(Complex64::new(2.0, 1.0)),
        ];
        for op in ops {
            let k = CompiledOp::new(&op).unwrap();
            for i in 0..400 {
                let x = -30.0 + 0.1 * i as f64;
                let v = k.eval_log(x).norm();
                assert!(v == 0.0 || v.ln() <= k.log_envelope(x) + 1e-9, "{op:?} x={x}");
            }
        }
    }

    #[test]
    fn eval_log_matches_eval() {
        let k = CompiledOp::new(&ThetaOperator::Delta4H4).unwrap();
        for &x in &[-5.0, -1.7, -1.0, 0.0, 1.2] {
            let a = k.eval_log(x);
            let b = k.eval(f64::exp(x));
            assert!((a - b).norm() <= 1e-13 * b.norm().max(1.0));
        }
    }
}
