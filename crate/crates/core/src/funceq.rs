//! Catalog of functional equations for the Ξ family. Each identity is
//! evaluated on both sides independently and compared.
//!
//! The rewrite identities hold only on a zero set; for those the
//! report compares the integral-side difference with the exact defect term it
//! equals everywhere, so both sides vanish together at the roots.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::ops::RangeInclusive;

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result, XiError};
use crate::gaussmat::{gaussian_e, RhoMatrix};
use crate::multi::{fubini_mean_value, MultiXi, Variant};
use crate::quadrature::QuadSpec;
use crate::xi::{check_rho, telescope_rhs, tilde_telescope_rhs, Xi1, XiValue};

type C64 = Complex64;

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentityId {
    Telescope(u32),
    SkFlip(usize),
    Fun1,
    Fun11,
    FunCor1,
    FunCor2,
    Rho12Roots,
    MeanValue,
    Result3d,
    SixTerm,
    Rewrite3dA,
    Rewrite3dB,
    Rewrite2d,
    MobiusRewrite,
}

impl IdentityId {
    pub const NAMES: [&'static str; 14] = [
        "telescope",
        "sk_flip",
        "fun1",
        "fun11",
        "funcor1",
        "funcor2",
        "rho12_roots",
        "mean_value",
        "result3d",
        "sixterm",
        "rewrite_3d_a",
        "rewrite_3d_b",
        "rewrite_2d",
        "mobius_rewrite",
    ];

    /// Parse a name; `index` is m for telescope and k for sk_flip.
    pub fn parse(name: &str, index: usize) -> Result<Self> {
        let n = name.to_ascii_lowercase().replace('-', "_");
        Ok(match n.as_str() {
            "telescope" => IdentityId::Telescope(index as u32),
            "sk_flip" | "skflip" => IdentityId::SkFlip(index),
            "fun1" => IdentityId::Fun1,
            "fun11" => IdentityId::Fun11,
            "funcor1" => IdentityId::FunCor1,
            "funcor2" => IdentityId::FunCor2,
            "rho12_roots" | "rho12" => IdentityId::Rho12Roots,
            "mean_value" | "meanvalue" => IdentityId::MeanValue,
            "result3d" => IdentityId::Result3d,
            "sixterm" | "six_term" => IdentityId::SixTerm,
            "rewrite_3d_a" | "rewrite3d_a" => IdentityId::Rewrite3dA,
            "rewrite_3d_b" | "rewrite3d_b" => IdentityId::Rewrite3dB,
            "rewrite_2d" | "rewrite2d" => IdentityId::Rewrite2d,
            "mobius_rewrite" | "mobius" => IdentityId::MobiusRewrite,
            _ => return domain(format!("unknown identity '{name}'")),
        })
    }

    /// Default tolerance: 1e−9 for d = 1, 1e−6 for d = 2, 1e−5 for d = 3,
    /// 1e−4 for the triple-integral rewrites.
    pub fn default_tolerance(&self) -> f64 {
        match self {
            IdentityId::Telescope(_) | IdentityId::Rho12Roots => 1e-9,
            IdentityId::SkFlip(k) => match k + 1 {
                1 => 1e-9,
                2 => 1e-6,
                _ => 1e-5,
            },
            IdentityId::Fun1
            | IdentityId::Fun11
            | IdentityId::FunCor1
            | IdentityId::FunCor2
            | IdentityId::MeanValue
            | IdentityId::Rewrite2d
            | IdentityId::MobiusRewrite => 1e-6,
            IdentityId::Result3d | IdentityId::SixTerm => 1e-5,
            IdentityId::Rewrite3dA | IdentityId::Rewrite3dB => 1e-4,
        }
    }
}

impl fmt::Display for IdentityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IdentityId::Telescope(m) => write!(f, "telescope({m})"),
            IdentityId::SkFlip(k) => write!(f, "sk_flip({k})"),
            IdentityId::Fun1 => write!(f, "fun1"),
            IdentityId::Fun11 => write!(f, "fun11"),
            IdentityId::FunCor1 => write!(f, "funcor1"),
            IdentityId::FunCor2 => write!(f, "funcor2"),
            IdentityId::Rho12Roots => write!(f, "rho12_roots"),
            IdentityId::MeanValue => write!(f, "mean_value"),
            IdentityId::Result3d => write!(f, "result3d"),
            IdentityId::SixTerm => write!(f, "sixterm"),
            IdentityId::Rewrite3dA => write!(f, "rewrite_3d_a"),
            IdentityId::Rewrite3dB => write!(f, "rewrite_3d_b"),
            IdentityId::Rewrite2d => write!(f, "rewrite_2d"),
            IdentityId::MobiusRewrite => write!(f, "mobius_rewrite"),
        }
    }
}

/// Parameters for a verification. Scalar ρ is a 1×1 matrix; scalar s is a
/// one-element vector. Extras by identity:
/// rewrite_3d_a/b: `gamma`; rewrite_2d: `alpha`, `n`; mobius_rewrite: `alpha`;
/// rho12_roots: `gamma`, `n`, `branch`, `s2`, `nprime`, optional `swap`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyParams {
    pub rho: RhoMatrix,
    pub s: Vec<C64>,
    pub extras: BTreeMap<String, C64>,
}

impl VerifyParams {
    pub fn new(rho: RhoMatrix, s: Vec<C64>) -> Self {
        VerifyParams {
            rho,
            s,
            extras: BTreeMap::new(),
        }
    }

    pub fn scalar(rho: C64, s: C64) -> Self {
        Self::new(RhoMatrix::scalar(rho), vec![s])
    }

    pub fn with(mut self, key: &str, v: C64) -> Self {
        self.extras.insert(key.to_string(), v);
        self
    }

    fn extra(&self, key: &str) -> Result<C64> {
        self.extras
            .get(key)
            .copied()
            .ok_or_else(|| XiError::Domain(format!("missing parameter '{key}'")))
    }

    fn int_extra(&self, key: &str) -> Result<i64> {
        let v = self.extra(key)?;
        if v.im != 0.0 || v.re.fract() != 0.0 || v.re.abs() > 1e9 {
            return domain(format!("parameter '{key}' must be an integer, got {v}"));
        }
        Ok(v.re as i64)
    }

    /// Flattened map used in reports: rho (row-major), s, extras.
    pub fn to_map(&self) -> BTreeMap<String, Vec<C64>> {
        let mut m = BTreeMap::new();
        m.insert("rho".to_string(), self.rho.rows().concat());
        m.insert("s".to_string(), self.s.clone());
        for (k, v) in &self.extras {
            m.insert(k.clone(), vec![*v]);
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub id: IdentityId,
    pub params: BTreeMap<String, Vec<C64>>,
    pub lhs: C64,
    pub rhs: C64,
    pub abs_residual: f64,
    pub rel_residual: f64,
    pub pass: bool,
    pub tolerance: f64,
    pub rel_tolerance: f64,
    pub evaluations: usize,
    /// false when some quadrature hit its panel budget; values are best effort.
    pub converged: bool,
}

impl VerificationReport {
    fn build(id: IdentityId, params: &VerifyParams, lhs: C64, rhs: C64, tol: f64, acc: &Acc) -> Self {
        let abs = (lhs - rhs).norm();
        let scale = lhs.norm().max(rhs.norm()).max(1.0);
        let rel = abs / scale;
        let finite = abs.is_finite();
        VerificationReport {
            id,
            params: params.to_map(),
            lhs,
            rhs,
            abs_residual: abs,
            rel_residual: rel,
            pass: finite && acc.converged && abs <= tol.max(tol * scale),
            tolerance: tol,
            rel_tolerance: tol,
            evaluations: acc.evals,
            converged: acc.converged,
        }
    }

    /// FNV-1a over the parameter names and bit patterns.
    pub fn params_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |bytes: &[u8]| {
            for b in bytes {
                h ^= *b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for (k, vs) in &self.params {
            eat(k.as_bytes());
            for v in vs {
                eat(&v.re.to_bits().to_le_bytes());
                eat(&v.im.to_bits().to_le_bytes());
            }
        }
        h
    }

    pub const CSV_HEADER: &'static str = "id,params_hash,abs_residual,rel_residual,pass";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:016x},{:.16e},{:.16e},{}",
            self.id,
            self.params_hash(),
            self.abs_residual,
            self.rel_residual,
            self.pass
        )
    }
}

/// Evaluation context: quadrature specs per dimension, cached evaluators and
/// bookkeeping.
struct Acc {
    spec1: QuadSpec,
    ev2: Option<MultiXi>,
    ev3: Option<MultiXi>,
    spec2: QuadSpec,
    spec3: QuadSpec,
    evals: usize,
    converged: bool,
}

impl Acc {
    fn new() -> Self {
        Acc {
            spec1: QuadSpec::for_dim(1),
            spec2: QuadSpec::for_dim(2),
            spec3: QuadSpec::for_dim(3),
            ev2: None,
            ev3: None,
            evals: 0,
            converged: true,
        }
    }

    fn take(&mut self, r: Result<XiValue>) -> Result<C64> {
        match r {
            Ok(v) => {
                self.evals += v.evaluations;
                Ok(v.value)
            }
            Err(XiError::NonConvergence { best, evaluations, .. }) => {
                self.converged = false;
                self.evals += evaluations;
                Ok(best)
            }
            Err(e) => Err(e),
        }
    }

    fn xi1(&mut self, rho: C64, s: C64) -> Result<C64> {
        let r = Xi1::with_spec(rho, self.spec1)?.value(s);
        self.take(r)
    }

    fn xi2(&mut self, rho: &RhoMatrix, s: [C64; 2]) -> Result<C64> {
        if self.ev2.is_none() {
            self.ev2 = Some(MultiXi::with_spec(Variant::Theta, 2, self.spec2)?);
        }
        let r = self.ev2.as_ref().unwrap().eval(rho, &s);
        self.take(r)
    }

    fn xi3(&mut self, rho: &RhoMatrix, s: [C64; 3]) -> Result<C64> {
        if self.ev3.is_none() {
            self.ev3 = Some(MultiXi::with_spec(Variant::Theta, 3, self.spec3)?);
        }
        let r = self.ev3.as_ref().unwrap().eval(rho, &s);
        self.take(r)
    }

    fn xid(&mut self, rho: &RhoMatrix, s: &[C64]) -> Result<C64> {
        match rho.dim() {
            1 => self.xi1(rho.get(0, 0), s[0]),
            2 => self.xi2(rho, [s[0], s[1]]),
            _ => self.xi3(rho, [s[0], s[1], s[2]]),
        }
    }
}

fn need_dim(p: &VerifyParams, d: usize, ns: usize) -> Result<()> {
    if p.rho.dim() != d || p.s.len() != ns {
        return domain(format!(
            "expected a {d}×{d} matrix and {ns} argument(s), got {}×{} and {}",
            p.rho.dim(),
            p.rho.dim(),
            p.s.len()
        ));
    }
    if p.s.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return domain("arguments must be finite");
    }
    Ok(())
}

/// Re ρ11 > 0 < Re ρ22 and det Re ρ > 0.
fn check_2d(rho: &RhoMatrix) -> Result<()> {
    rho.check_convergence()
}

/// Re ρ_ii > 0, Re R_ij(Re ρ) > 0 for i ≠ j, det Re ρ > 0.
fn check_3d(rho: &RhoMatrix) -> Result<()> {
    rho.check_convergence()
}

/// The four-exponential combination of the d = 2 inhomogeneity,
/// 1 + e^{(a+c−2b−2cs₁−2as₂+2b(s₁+s₂))/16D} − e^{(c−2cs₁+2bs₂)/16D} − e^{(a−2as₂+2bs₁)/16D}.
pub fn bracket(a: C64, b: C64, cc: C64, s1: C64, s2: C64) -> C64 {
    let d16 = 16.0 * (a * cc - b * b);
    1.0 + ((a + cc - 2.0 * b - 2.0 * cc * s1 - 2.0 * a * s2 + 2.0 * b * (s1 + s2)) / d16).exp()
        - ((cc - 2.0 * cc * s1 + 2.0 * b * s2) / d16).exp()
        - ((a - 2.0 * a * s2 + 2.0 * b * s1) / d16).exp()
}

/// Gaussian part of the d = 2 functional equation.
fn fun1_gauss(rho: &RhoMatrix, s1: C64, s2: C64) -> C64 {
    let (a, b, cc) = (rho.get(0, 0), rho.get(0, 1), rho.get(1, 1));
    let det = a * cc - b * b;
    PI * ((cc * s1 * s1 + a * s2 * s2 - 2.0 * b * s1 * s2) / (16.0 * det)).exp() / (4.0 * det.sqrt())
        * bracket(a, b, cc, s1, s2)
}

/// √π/(2√ρ_pp)[e^{(sp−1)²/16ρ_pp}Ξ_{D/ρ_pp}(u₁) − e^{sp²/16ρ_pp}Ξ_{D/ρ_pp}(u₂)] with
/// u = 1 − sq ∓ … when `reflect`, else sq ± ….
fn half_term(acc: &mut Acc, rho: &RhoMatrix, p: usize, sp: C64, sq: C64, reflect: bool) -> Result<C64> {
    let rp = rho.get(p, p);
    let b = rho.get(0, 1);
    let red = rho.det() / rp;
    let (u1, u2) = if reflect {
        (1.0 - sq - b / rp * (1.0 - sp), 1.0 - sq + b / rp * sp)
    } else {
        (sq + b / rp * (1.0 - sp), sq - b / rp * sp)
    };
    let x1 = acc.xi1(red, u1)?;
    let x2 = acc.xi1(red, u2)?;
    Ok(PI.sqrt() / (2.0 * rp.sqrt())
        * (((sp - 1.0) * (sp - 1.0) / (16.0 * rp)).exp() * x1 - (sp * sp / (16.0 * rp)).exp() * x2))
}

fn verify_telescope(acc: &mut Acc, m: u32, p: &VerifyParams) -> Result<(C64, C64)> {
    need_dim(p, 1, 1)?;
    let rho = p.rho.get(0, 0);
    check_rho(rho)?;
    let s = p.s[0];
    let x = Xi1::with_spec(rho, acc.spec1)?;
    let a = x.sum_m(s, m);
    let a = acc.take(a)?;
    let b = x.sum_m(1.0 - m as f64 - s, m);
    let b = acc.take(b)?;
    Ok((a - b, telescope_rhs(rho, s, m)))
}

/// Ξ(ρ, s) against Ξ(flip_k ρ, s_k → 1 − s_k) plus the two reduced terms.
fn verify_sk_flip(acc: &mut Acc, k: usize, p: &VerifyParams) -> Result<(C64, C64)> {
    let d = p.rho.dim();
    need_dim(p, d, d)?;
    if k >= d {
        return domain(format!("flip index {k} out of range for d = {d}"));
    }
    p.rho.check_convergence()?;
    let lhs = acc.xid(&p.rho, &p.s)?;
    let mut s2 = p.s.clone();
    s2[k] = 1.0 - s2[k];
    let flipped = acc.xid(&p.rho.flip_k(k), &s2)?;
    let rkk = p.rho.get(k, k);
    let sk = p.s[k];
    let pre = 0.5 * (PI / rkk).sqrt();
    let (r1, r2) = if d == 1 {
        (c(1.0), c(1.0))
    } else {
        let red = p.rho.reduce_k(k)?;
        let shifted = |shift: C64| -> Vec<C64> {
            (0..d)
                .filter(|&i| i != k)
                .map(|i| p.s[i] - shift * p.rho.get(i, k) / rkk)
                .collect()
        };
        let a = acc.xid(&red, &shifted(sk - 1.0))?;
        let b = acc.xid(&red, &shifted(sk))?;
        (a, b)
    };
    let rhs = flipped
        + pre * (((sk - 1.0) * (sk - 1.0) / (16.0 * rkk)).exp() * r1 - (sk * sk / (16.0 * rkk)).exp() * r2);
    Ok((lhs, rhs))
}

fn flip_lhs_2d(acc: &mut Acc, rho: &RhoMatrix, s1: C64, s2: C64) -> Result<C64> {
    let a = acc.xi2(rho, [s1, s2])?;
    let b = acc.xi2(rho, [1.0 - s1, 1.0 - s2])?;
    Ok(a - b)
}

fn verify_fun(acc: &mut Acc, p: &VerifyParams, variant11: bool) -> Result<(C64, C64)> {
    need_dim(p, 2, 2)?;
    check_2d(&p.rho)?;
    let (s1, s2) = (p.s[0], p.s[1]);
    let lhs = flip_lhs_2d(acc, &p.rho, s1, s2)?;
    let r2 = half_term(acc, &p.rho, 1, s2, s1, true)?;
    let rhs = if variant11 {
        half_term(acc, &p.rho, 0, s1, s2, false)? + r2
    } else {
        fun1_gauss(&p.rho, s1, s2) + half_term(acc, &p.rho, 0, s1, s2, true)? + r2
    };
    Ok((lhs, rhs))
}

fn check_symmetric_2d(p: &VerifyParams) -> Result<()> {
    need_dim(p, 2, 1)?;
    if p.rho.get(0, 0) != p.rho.get(1, 1) {
        return domain("corollary needs ρ11 = ρ22");
    }
    if !(p.rho.get(0, 0).re > 0.0) || !(p.rho.real_part().det().re > 0.0) {
        return domain("corollary needs Re ρ11 > 0 and det Re ρ > 0");
    }
    Ok(())
}

fn verify_funcor1(acc: &mut Acc, p: &VerifyParams) -> Result<(C64, C64)> {
    check_symmetric_2d(p)?;
    let s = p.s[0];
    let lhs = flip_lhs_2d(acc, &p.rho, s, s)?;
    let rhs = 2.0 * half_term(acc, &p.rho, 0, s, s, true)?;
    Ok((lhs, rhs))
}

fn verify_funcor2(acc: &mut Acc, p: &VerifyParams) -> Result<(C64, C64)> {
    check_symmetric_2d(p)?;
    let s = p.s[0];
    let a = p.rho.get(0, 0);
    let q = p.rho.get(0, 1) / a;
    let red = p.rho.det() / a;
    let e = |x: C64| (x * x / (16.0 * a)).exp();
    let t1 = e(s) * acc.xi1(red, 1.0 - s - q * s)?;
    let t2 = e(1.0 - s) * acc.xi1(red, 1.0 - s + q * (1.0 - s))?;
    let t3 = e(s - 1.0) * acc.xi1(red, s - q * (1.0 - s))?;
    let t4 = e(s) * acc.xi1(red, s + q * s)?;
    Ok((c(0.0), t1 - t2 + t3 - t4))
}

fn verify_rho12(p: &VerifyParams) -> Result<(C64, C64)> {
    let gamma = p.extra("gamma")?;
    let n = p.int_extra("n")?;
    let branch = p.int_extra("branch")?;
    let s2 = p.extra("s2")?;
    let np = p.int_extra("nprime")?;
    let swap = p.extras.get("swap").map(|v| v.re != 0.0).unwrap_or(false);
    let (r12, s1) = rho12_special_roots(gamma, n, branch, s2, np)?;
    let v = if swap {
        bracket(gamma, r12, gamma, s2, s1)
    } else {
        bracket(gamma, r12, gamma, s1, s2)
    };
    Ok((v, c(0.0)))
}

fn verify_mean_value(acc: &mut Acc, p: &VerifyParams) -> Result<(C64, C64)> {
    need_dim(p, 2, 2)?;
    let (l, r) = fubini_mean_value(&p.rho, &p.s, &acc.spec2)?;
    acc.evals += l.evaluations + r.evaluations;
    Ok((l.value, r.value))
}

/// Ξ(ρ, s) − Ξ(ρ, 1 − s) for d = 3 against Gaussian, C_k and reduced 2×2 terms.
fn verify_result3d(acc: &mut Acc, p: &VerifyParams) -> Result<(C64, C64)> {
    need_dim(p, 3, 3)?;
    check_3d(&p.rho)?;
    let r = &p.rho;
    let s = [p.s[0], p.s[1], p.s[2]];
    let lhs = acc.xi3(r, s)? - acc.xi3(r, [1.0 - s[0], 1.0 - s[1], 1.0 - s[2]])?;
    let (s1, s2, s3) = (s[0], s[1], s[2]);
    let e = |a: C64, b: C64, cc: C64| gaussian_e(r, &[a, b, cc]);
    let e_sum = e(s1, s2 - 1.0, s3)? - e(s1 - 1.0, s2, s3 - 1.0)? + e(s1 - 1.0, s2, s3)?
        - e(s1 - 1.0, s2 - 1.0, s3)?
        + e(s1 - 1.0, s2 - 1.0, s3 - 1.0)?
        - e(s1, s2, s3)?
        + e(s1, s2, s3 - 1.0)?
        - e(s1, s2 - 1.0, s3 - 1.0)?;
    let det = r.det();
    let ck = |acc: &mut Acc, k: usize, x: C64, y: C64, z: C64| -> Result<C64> {
        let (i, j) = others(k);
        let rij = r.r(i, j);
        let pre = ((r.get(j, j) * x * x + r.get(i, i) * y * y - 2.0 * r.get(i, j) * x * y) / (16.0 * rij)).exp()
            / rij.sqrt();
        let arg = 1.0 - z + (x * r.t(k, i, j) + y * r.t(k, j, i)) / rij;
        Ok(pre * acc.xi1(det / rij, arg)?)
    };
    let mut c_sum = c(0.0);
    for (k, x, y, z) in [(2, s1, s2, s3), (1, s1, s3, s2), (0, s2, s3, s1)] {
        c_sum += ck(acc, k, x, y, z)? - ck(acc, k, x, y - 1.0, z)? + ck(acc, k, x - 1.0, y - 1.0, z)?
            - ck(acc, k, x - 1.0, y, z)?;
    }
    let mut b_sum = c(0.0);
    for k in 0..3 {
        let (a, b) = others(k);
        let rkk = r.get(k, k);
        let m = RhoMatrix::two(r.r(a, k) / rkk, r.t(a, b, k) / rkk, r.r(b, k) / rkk);
        let sk = s[k];
        let arg = |sh: C64| [1.0 - s[a] + sh * r.get(a, k) / rkk, 1.0 - s[b] + sh * r.get(b, k) / rkk];
        let x1 = acc.xi2(&m, arg(sk - 1.0))?;
        let x2 = acc.xi2(&m, arg(sk))?;
        b_sum += (((sk - 1.0) * (sk - 1.0) / (16.0 * rkk)).exp() * x1 - (sk * sk / (16.0 * rkk)).exp() * x2)
            / rkk.sqrt();
    }
    let rhs = e_sum / 8.0 + PI / 4.0 * c_sum + PI.sqrt() / 2.0 * b_sum;
    Ok((lhs, rhs))
}

fn others(k: usize) -> (usize, usize) {
    match k {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    }
}

fn negate_offdiag(m: &RhoMatrix) -> RhoMatrix {
    RhoMatrix::two(m.get(0, 0), -m.get(0, 1), m.get(1, 1))
}

/// Two expansions of Ξ(ρ, (1+s)/2): flipping s₃ first, or s₁ then s₂.
fn verify_sixterm(acc: &mut Acc, p: &VerifyParams) -> Result<(C64, C64)> {
    need_dim(p, 3, 3)?;
    check_3d(&p.rho)?;
    let r = &p.rho;
    let (s1, s2, s3) = (p.s[0], p.s[1], p.s[2]);
    let f3 = r.flip_k(2);
    let half = |x: C64| x / 2.0;
    let g = |rkk: C64, sk: C64| 0.5 * PI.sqrt() * ((1.0 + sk * sk) / (64.0 * rkk)).exp() / rkk.sqrt();
    let w = |rkk: C64, sk: C64| (-sk / (32.0 * rkk)).exp();

    let (r11, r22, r33) = (r.get(0, 0), r.get(1, 1), r.get(2, 2));
    let (r12, r13, r23) = (r.get(0, 1), r.get(0, 2), r.get(1, 2));

    let sch3 = r.reduce_k(2)?;
    let e1 = acc.xi3(&f3, [half(1.0 + s1), half(1.0 + s2), half(1.0 - s3)])?
        + g(r33, s3)
            * (w(r33, s3)
                * acc.xi2(
                    &sch3,
                    [half(1.0 + s1 + (1.0 - s3) * r13 / r33), half(1.0 + s2 + (1.0 - s3) * r23 / r33)],
                )?
                - w(r33, -s3)
                    * acc.xi2(
                        &sch3,
                        [half(1.0 + s1 - (1.0 + s3) * r13 / r33), half(1.0 + s2 - (1.0 + s3) * r23 / r33)],
                    )?);

    let sch1 = r.reduce_k(0)?;
    let sch2 = negate_offdiag(&r.reduce_k(1)?);
    let e2 = acc.xi3(&f3, [half(1.0 - s1), half(1.0 - s2), half(1.0 + s3)])?
        + g(r11, s1)
            * (w(r11, s1)
                * acc.xi2(
                    &sch1,
                    [half(1.0 + s2 + (1.0 - s1) * r12 / r11), half(1.0 + s3 + (1.0 - s1) * r13 / r11)],
                )?
                - w(r11, -s1)
                    * acc.xi2(
                        &sch1,
                        [half(1.0 + s2 - (1.0 + s1) * r12 / r11), half(1.0 + s3 - (1.0 + s1) * r13 / r11)],
                    )?)
        + g(r22, s2)
            * (w(r22, s2)
                * acc.xi2(
                    &sch2,
                    [half(1.0 - s1 - (1.0 - s2) * r12 / r22), half(1.0 + s3 + (1.0 - s2) * r23 / r22)],
                )?
                - w(r22, -s2)
                    * acc.xi2(
                        &sch2,
                        [half(1.0 - s1 + (1.0 + s2) * r12 / r22), half(1.0 + s3 - (1.0 + s2) * r23 / r22)],
                    )?);
    Ok((e1, e2))
}

fn rewrite_scalars(p: &VerifyParams) -> Result<(C64, C64)> {
    need_dim(p, 1, 1)?;
    let rho = p.rho.get(0, 0);
    check_rho(rho)?;
    Ok((rho, p.s[0]))
}

/// (Ξ_ρ((1+s)/2), Ξ_ρ((1−s)/2))
fn xi_pm(acc: &mut Acc, rho: C64, s: C64) -> Result<(C64, C64)> {
    Ok((acc.xi1(rho, (1.0 + s) / 2.0)?, acc.xi1(rho, (1.0 - s) / 2.0)?))
}

/// The 3×3 matrix [[ρ+s²γ, s²γ, sγ], [s²γ, ρ+s²γ, sγ], [sγ, sγ, γ]].
pub fn rewrite3d_matrix(rho: C64, gamma: C64, s: C64) -> RhoMatrix {
    let q = s * s * gamma;
    RhoMatrix::three([rho + q, rho + q, gamma], [q, s * gamma, s * gamma])
}

/// Ξ₃(A, ½⃗) − Ξ₃(flip₃A, ½⃗) against ½√(π/γ)e^{1/64γ}(Ξ²((1+s)/2) − Ξ²((1−s)/2)).
fn verify_rewrite3d_a(acc: &mut Acc, p: &VerifyParams) -> Result<(C64, C64)> {
    let (rho, s) = rewrite_scalars(p)?;
    let gamma = p.extra("gamma")?;
    if !(gamma.re > 0.0) {
        return domain("need Re γ > 0");
    }
    let a = rewrite3d_matrix(rho, gamma, s);
    check_3d(&a)?;
    let h = [c(0.5); 3];
    let lhs = acc.xi3(&a, h)? - acc.xi3(&a.flip_k(2), h)?;
    let (xp, xm) = xi_pm(acc, rho, s)?;
    let rhs = 0.5 * (PI / gamma).sqrt() * (1.0 / (64.0 * gamma)).exp() * (xp * xp - xm * xm);
    Ok((lhs, rhs))
}

/// The 2×2 matrix of the reduced two-dimensional rewrite and its two argument pairs.
pub fn rewrite3d_reduced_terms(rho: C64, gamma: C64, s: C64) -> (RhoMatrix, [C64; 2], [C64; 2], [C64; 2], [C64; 2]) {
    let d = rho + gamma * s * s;
    let n = RhoMatrix::two(
        (rho * rho + 2.0 * rho * gamma * s * s) / d,
        rho * gamma * s / d,
        rho * gamma / d,
    );
    let u1 = (rho + 2.0 * gamma * s * s) / (2.0 * d);
    let u2 = rho / (2.0 * d);
    let vp = (d + gamma * s) / (2.0 * d);
    let vm = (d - gamma * s) / (2.0 * d);
    (n, [u1, vp], [u2, vm], [u1, vm], [u2, vp])
}

/// (L − R) of the reduced two-dimensional rewrite against √(D/γ)e^{1/64γ−1/64D}(Ξ²(+) − Ξ²(−)), D = ρ + γs².
fn verify_rewrite3d_b(acc: &mut Acc, p: &VerifyParams) -> Result<(C64, C64)> {
    let (rho, s) = rewrite_scalars(p)?;
    let gamma = p.extra("gamma")?;
    if !(gamma.re > 0.0) {
        return domain("need Re γ > 0");
    }
    let d = rho + gamma * s * s;
    if d.norm() < 1e-12 {
        return Err(XiError::DivisionByZero("ρ + γs²"));
    }
    let (n, a1, a2, b1, b2) = rewrite3d_reduced_terms(rho, gamma, s);
    check_2d(&n)?;
    let nm = negate_offdiag(&n);
    let l = acc.xi2(&n, a1)? - acc.xi2(&n, a2)?;
    let r = acc.xi2(&nm, b1)? - acc.xi2(&nm, b2)?;
    let (xp, xm) = xi_pm(acc, rho, s)?;
    let rhs = (d / gamma).sqrt() * (1.0 / (64.0 * gamma) - 1.0 / (64.0 * d)).exp() * (xp * xp - xm * xm);
    Ok((l - r, rhs))
}

fn check_alpha_form(rho: C64, alpha: C64, s: C64) -> Result<RhoMatrix> {
    let top = rho + alpha * s * s;
    if !(top.re > 0.0 && alpha.re > 0.0) {
        return domain("need Re(ρ + αs²) > 0 < Re α");
    }
    if !((alpha * s).re < (alpha.re * top.re).sqrt()) {
        return domain("need Re(αs) < √(Re α · Re(ρ + αs²))");
    }
    let m = RhoMatrix::two(top, alpha * s, alpha);
    m.check_convergence()?;
    Ok(m)
}

/// Ξ(M₋, v₋) − Ξ(M₊, v₊) of the (1+2n) equality against
/// ½√(π/α)e^{(1−c)²/64α}(Ξ((1+s)/2) + Ξ((1−s)/2)), c = 16πi(1+2n)α.
fn verify_rewrite2d(acc: &mut Acc, p: &VerifyParams) -> Result<(C64, C64)> {
    let (rho, s) = rewrite_scalars(p)?;
    let alpha = p.extra("alpha")?;
    let n = p.int_extra("n")?;
    let m = check_alpha_form(rho, alpha, s)?;
    let cc = 16.0 * PI * I * (1.0 + 2.0 * n as f64) * alpha;
    let v1 = (1.0 - cc * s) / 2.0;
    let lhs = acc.xi2(&negate_offdiag(&m), [v1, (1.0 + cc) / 2.0])? - acc.xi2(&m, [v1, (1.0 - cc) / 2.0])?;
    let (xp, xm) = xi_pm(acc, rho, s)?;
    let rhs = 0.5 * (PI / alpha).sqrt() * ((1.0 - cc) * (1.0 - cc) / (64.0 * alpha)).exp() * (xp + xm);
    Ok((lhs, rhs))
}

/// Σ(−1)^i(R_i − L_i) of the Möbius-rewritten equality against
/// 2K sinh(s/32ρ)(Ξ((1+s)/2) + Ξ((1−s)/2)), K = ½√(π/α)e^{(1+α²s²/ρ²)/64α}.
fn verify_mobius(acc: &mut Acc, p: &VerifyParams) -> Result<(C64, C64)> {
    let (rho, s) = rewrite_scalars(p)?;
    let alpha = p.extra("alpha")?;
    let m = check_alpha_form(rho, alpha, s)?;
    let mm = negate_offdiag(&m);
    let q = alpha / rho;
    let mut lhs = c(0.0);
    for (i, sg) in [(0, 1.0), (1, -1.0)] {
        let u = (1.0 + sg * q * s * s) / 2.0;
        let l = acc.xi2(&m, [u, (1.0 + sg * q * s) / 2.0])?;
        let r = acc.xi2(&mm, [u, (1.0 - sg * q * s) / 2.0])?;
        let sign = if i == 0 { 1.0 } else { -1.0 };
        lhs += sign * (r - l);
    }
    let (xp, xm) = xi_pm(acc, rho, s)?;
    let k = 0.5 * (PI / alpha).sqrt() * ((1.0 + q * q * s * s) / (64.0 * alpha)).exp();
    let rhs = 2.0 * k * (s / (32.0 * rho)).sinh() * (xp + xm);
    Ok((lhs, rhs))
}

/// Evaluate both sides of `id` at `params`. `tol` defaults to the identity's
/// declared tolerance.
pub fn verify(id: IdentityId, params: &VerifyParams, tol: Option<f64>) -> Result<VerificationReport> {
    verify_with(id, params, tol, None)
}

/// As `verify`, with the absolute quadrature tolerance of every level scaled
/// by `quad_scale` (rel tolerance scaled alike).
pub fn verify_with(
    id: IdentityId,
    params: &VerifyParams,
    tol: Option<f64>,
    quad_scale: Option<f64>,
) -> Result<VerificationReport> {
    let tol = tol.unwrap_or_else(|| id.default_tolerance());
    if !(tol > 0.0) || !tol.is_finite() {
        return domain(format!("tolerance must be positive, got {tol}"));
    }
    let mut acc = Acc::new();
    if let Some(f) = quad_scale {
        acc.spec1 = acc.spec1.scaled(f);
        acc.spec2 = acc.spec2.scaled(f);
        acc.spec3 = acc.spec3.scaled(f);
        acc.spec1.validate()?;
    }
    let (lhs, rhs) = match id {
        IdentityId::Telescope(m) => verify_telescope(&mut acc, m, params)?,
        IdentityId::SkFlip(k) => verify_sk_flip(&mut acc, k, params)?,
        IdentityId::Fun1 => verify_fun(&mut acc, params, false)?,
        IdentityId::Fun11 => verify_fun(&mut acc, params, true)?,
        IdentityId::FunCor1 => verify_funcor1(&mut acc, params)?,
        IdentityId::FunCor2 => verify_funcor2(&mut acc, params)?,
        IdentityId::Rho12Roots => verify_rho12(params)?,
        IdentityId::MeanValue => verify_mean_value(&mut acc, params)?,
        IdentityId::Result3d => verify_result3d(&mut acc, params)?,
        IdentityId::SixTerm => verify_sixterm(&mut acc, params)?,
        IdentityId::Rewrite3dA => verify_rewrite3d_a(&mut acc, params)?,
        IdentityId::Rewrite3dB => verify_rewrite3d_b(&mut acc, params)?,
        IdentityId::Rewrite2d => verify_rewrite2d(&mut acc, params)?,
        IdentityId::MobiusRewrite => verify_mobius(&mut acc, params)?,
    };
    Ok(VerificationReport::build(id, params, lhs, rhs, tol, &acc))
}

fn uni(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..hi)
}

fn random_matrix(rng: &mut ChaCha8Rng, d: usize) -> RhoMatrix {
    loop {
        let diag: Vec<C64> = (0..d).map(|_| c(uni(rng, 0.7, 1.3))).collect();
        let off: Vec<C64> = (0..3)
            .map(|_| C64::new(uni(rng, -0.25, 0.25), uni(rng, -0.05, 0.05)))
            .collect();
        let m = match d {
            1 => RhoMatrix::scalar(diag[0]),
            2 => RhoMatrix::two(diag[0], off[0], diag[1]),
            _ => RhoMatrix::three([diag[0], diag[1], diag[2]], [off[0], off[1], off[2]]),
        };
        if m.convergence_predicate() {
            return m;
        }
    }
}

fn random_s(rng: &mut ChaCha8Rng, d: usize) -> Vec<C64> {
    (0..d).map(|_| C64::new(uni(rng, -0.5, 1.5), uni(rng, -1.0, 1.0))).collect()
}

/// A predicate-satisfying random parameter set for `id`.
pub fn random_params(id: IdentityId, rng: &mut ChaCha8Rng) -> VerifyParams {
    match id {
        IdentityId::Telescope(_) => VerifyParams::scalar(
            c(uni(rng, 0.25, 2.0)),
            C64::new(uni(rng, -1.0, 2.0), uni(rng, -3.0, 3.0)),
        ),
        IdentityId::SkFlip(k) => {
            let d = (k + 1).max(2);
            VerifyParams::new(random_matrix(rng, d), random_s(rng, d))
        }
        IdentityId::Fun1 | IdentityId::Fun11 | IdentityId::MeanValue => {
            VerifyParams::new(random_matrix(rng, 2), random_s(rng, 2))
        }
        IdentityId::FunCor1 | IdentityId::FunCor2 => {
            let a = uni(rng, 0.7, 1.3);
            let mut b = uni(rng, -0.3, 0.3);
            if b.abs() < 0.02 {
                b = 0.1;
            }
            let rho = RhoMatrix::two(c(a), c(b), c(a));
            let fam = if id == IdentityId::FunCor1 {
                ZeroFamily::FunCor1
            } else {
                ZeroFamily::FunCor2
            };
            let roots = candidate_zeros(fam, &rho, 0..=0).expect("non-degenerate draw");
            let s = roots[rng.gen_range(0..roots.len())];
            VerifyParams::new(rho, vec![s])
        }
        IdentityId::Rho12Roots => {
            let ns = [-3, -2, -1, 1, 2, 3];
            VerifyParams::new(RhoMatrix::scalar(c(1.0)), vec![])
                .with("gamma", C64::new(uni(rng, 0.5, 1.5), uni(rng, -0.1, 0.1)))
                .with("n", c(ns[rng.gen_range(0..ns.len())] as f64))
                .with("branch", c(if rng.gen_bool(0.5) { 1.0 } else { -1.0 }))
                .with("s2", C64::new(uni(rng, -1.0, 2.0), uni(rng, -1.0, 1.0)))
                .with("nprime", c(rng.gen_range(-2..=2) as f64))
                .with("swap", c(if rng.gen_bool(0.5) { 1.0 } else { 0.0 }))
        }
        IdentityId::Result3d | IdentityId::SixTerm => {
            VerifyParams::new(random_matrix(rng, 3), random_s(rng, 3))
        }
        IdentityId::Rewrite3dA | IdentityId::Rewrite3dB => {
            let rho = uni(rng, 0.3, 1.0);
            let y = uni(rng, 0.2, 1.5);
            let gamma = uni(rng, 0.2, 0.8) * rho / (2.0 * y * y);
            VerifyParams::scalar(c(rho), C64::new(0.0, y)).with("gamma", c(gamma.min(2.0)))
        }
        IdentityId::Rewrite2d | IdentityId::MobiusRewrite => {
            let rho = uni(rng, 0.3, 1.0);
            let y = uni(rng, 0.2, 1.5);
            let alpha = uni(rng, 0.2, 0.8) * rho / (y * y);
            let p = VerifyParams::scalar(c(rho), C64::new(0.0, y)).with("alpha", c(alpha.min(2.0)));
            if id == IdentityId::Rewrite2d {
                p.with("n", c(rng.gen_range(-1..=1) as f64))
            } else {
                p
            }
        }
    }
}

pub fn seeded_params(id: IdentityId, seed: u64) -> VerifyParams {
    random_params(id, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroFamily {
    /// Zeros of Ξ^m_ρ(s) − Ξ^m_ρ(1−m−s).
    Telescope(u32),
    /// Zeros of Ξ̃^m_ρ(s) + (−1)^m Ξ̃^m_ρ(1−m−s).
    Tilde(u32),
    FunCor1,
    FunCor2,
}

/// Closed-form root sets for k in `range`. For the corollaries both
/// logarithm branches are returned per k, "+" first.
pub fn candidate_zeros(family: ZeroFamily, rho: &RhoMatrix, range: RangeInclusive<i64>) -> Result<Vec<C64>> {
    match family {
        ZeroFamily::Telescope(m) | ZeroFamily::Tilde(m) => {
            if rho.dim() != 1 {
                return domain("telescope zeros need a scalar ρ");
            }
            let r = rho.get(0, 0);
            check_rho(r)?;
            let mf = m as f64;
            let base = (1.0 - mf) / 2.0
                + if matches!(family, ZeroFamily::Tilde(_)) {
                    8.0 * r * PI * I
                } else {
                    c(0.0)
                };
            Ok(range
                .map(|k| base + 16.0 * r * PI * I * k as f64 / (1.0 + mf))
                .collect())
        }
        ZeroFamily::FunCor1 | ZeroFamily::FunCor2 => {
            if rho.dim() != 2 {
                return domain("corollary zeros need a 2×2 matrix");
            }
            let (a, b) = (rho.get(0, 0), rho.get(0, 1));
            let det = a * a - b * b;
            let sg = if family == ZeroFamily::FunCor1 { -1.0 } else { 1.0 };
            let den = a + sg * b;
            if den.norm() < 1e-14 * a.norm().max(1.0) || det.norm() < 1e-300 {
                return Err(XiError::Degenerate(format!("denominator ρ11 {} ρ12 vanishes", if sg < 0.0 { "−" } else { "+" })));
            }
            let root = (1.0 - (sg * b / (8.0 * det)).exp()).sqrt();
            let mut out = Vec::new();
            for k in range {
                for br in [1.0, -1.0] {
                    let arg = 1.0 + br * root;
                    if arg.norm() < 1e-300 {
                        return Err(XiError::Degenerate("logarithm argument is zero".into()));
                    }
                    let l = 2.0 * PI * I * k as f64 + arg.ln();
                    out.push(0.5 + sg * b / (2.0 * den) - 8.0 * det / den * l);
                }
            }
            Ok(out)
        }
    }
}

/// The difference whose zeros `candidate_zeros` lists, in closed form.
pub fn zero_family_value(family: ZeroFamily, rho: &RhoMatrix, s: C64) -> C64 {
    match family {
        ZeroFamily::Telescope(m) => telescope_rhs(rho.get(0, 0), s, m),
        ZeroFamily::Tilde(m) => tilde_telescope_rhs(rho.get(0, 0), s, m),
        ZeroFamily::FunCor1 => {
            let (a, b) = (rho.get(0, 0), rho.get(0, 1));
            bracket(a, b, a, s, s)
        }
        ZeroFamily::FunCor2 => {
            let (a, b) = (rho.get(0, 0), rho.get(0, 1));
            bracket(a, b, a, s, 1.0 - s)
        }
    }
}

/// ρ12 = 1/(32πin) + branch·√(γ² − 1/(32πn)²) and the matching
/// s₁ = (γ/ρ12)(s₂ − ½) + n′/n, at which the four-exponential combination vanishes.
pub fn rho12_special_roots(gamma: C64, n: i64, branch: i64, s2: C64, nprime: i64) -> Result<(C64, C64)> {
    if n == 0 {
        return domain("n must be nonzero");
    }
    if branch != 1 && branch != -1 {
        return domain("branch must be ±1");
    }
    let nf = n as f64;
    let q = 1.0 / (32.0 * PI * nf);
    let r12 = -I * q + branch as f64 * (gamma * gamma - q * q).sqrt();
    if r12.norm() < 1e-300 {
        return Err(XiError::DivisionByZero("ρ12"));
    }
    let s1 = gamma / r12 * (s2 - 0.5) + nprime as f64 / nf;
    Ok((r12, s1))
}

/// Roots of the real reduction of f on anchor + t·direction, t ∈ [−length, length].
/// The reduction is whichever of Re f, Im f is larger over the grid; sign
/// changes are bisected to 1e−10 in t·|direction|.
pub fn zero_scan<F>(mut f: F, anchor: C64, direction: C64, length: f64, grid: usize) -> Result<Vec<C64>>
where
    F: FnMut(C64) -> Result<C64>,
{
    if grid < 2 || !(length > 0.0) || direction.norm() == 0.0 {
        return domain("zero_scan needs grid ≥ 2, length > 0 and a nonzero direction");
    }
    let pt = |t: f64| anchor + direction * t;
    let ts: Vec<f64> = (0..=grid)
        .map(|i| -length + 2.0 * length * i as f64 / grid as f64)
        .collect();
    let vals = ts.iter().map(|&t| f(pt(t))).collect::<Result<Vec<_>>>()?;
    let re_mass: f64 = vals.iter().map(|v| v.re.abs()).sum();
    let im_mass: f64 = vals.iter().map(|v| v.im.abs()).sum();
    let use_im = im_mass > re_mass;
    let part = |v: C64| if use_im { v.im } else { v.re };
    let step_tol = 1e-10 / direction.norm();
    let mut roots = Vec::new();
    for i in 0..grid {
        let (a, b) = (part(vals[i]), part(vals[i + 1]));
        if a == 0.0 {
            roots.push(pt(ts[i]));
            continue;
        }
        if a.signum() == b.signum() || b == 0.0 {
            continue;
        }
        let (mut lo, mut hi, mut flo) = (ts[i], ts[i + 1], a);
        while hi - lo > step_tol {
            let mid = 0.5 * (lo + hi);
            let fm = part(f(pt(mid))?);
            if fm == 0.0 {
                lo = mid;
                hi = mid;
                break;
            }
            if fm.signum() == flo.signum() {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
            }
        }
        roots.push(pt(0.5 * (lo + hi)));
    }
    if part(vals[grid]) == 0.0 {
        roots.push(pt(ts[grid]));
    }
    Ok(roots)
}
