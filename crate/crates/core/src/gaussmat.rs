//! Symmetric complex coupling matrices of size d ≤ 3 and the Gaussian
//! integrals e(ρ, s) = ∫ e^{−xᵀρx + s·x/2} dx attached to them.
//!
//! Indices are zero-based throughout.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result, XiError};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoMatrix {
    d: usize,
    m: [[Complex64; 3]; 3],
}

/// R[i][k] = ρ_ii ρ_kk − ρ_ik², T[i][j][k] = ρ_ij ρ_kk − ρ_ik ρ_jk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinorSet {
    pub r: [[Complex64; 3]; 3],
    pub t: [[[Complex64; 3]; 3]; 3],
}

impl RhoMatrix {
    pub fn new(rows: &[Vec<Complex64>]) -> Result<Self> {
        let d = rows.len();
        if !(1..=3).contains(&d) {
            return domain(format!("matrix dimension must be 1, 2 or 3, got {d}"));
        }
        let mut m = [[ZERO; 3]; 3];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return domain("matrix must be square");
            }
            for (j, v) in row.iter().enumerate() {
                if !v.re.is_finite() || !v.im.is_finite() {
                    return domain("matrix entries must be finite");
                }
                m[i][j] = *v;
            }
        }
        for i in 0..d {
            for j in 0..i {
                if m[i][j] != m[j][i] {
                    return domain(format!("matrix is not symmetric at ({i}, {j})"));
                }
            }
        }
        Ok(RhoMatrix { d, m })
    }

    pub fn scalar(rho: Complex64) -> Self {
        let mut m = [[ZERO; 3]; 3];
        m[0][0] = rho;
        RhoMatrix { d: 1, m }
    }

    pub fn two(r11: Complex64, r12: Complex64, r22: Complex64) -> Self {
        let mut m = [[ZERO; 3]; 3];
        m[0][0] = r11;
        m[0][1] = r12;
        m[1][0] = r12;
        m[1][1] = r22;
        RhoMatrix { d: 2, m }
    }

    /// Diagonal (r11, r22, r33) and off-diagonal (r12, r13, r23).
    pub fn three(diag: [Complex64; 3], off: [Complex64; 3]) -> Self {
        let mut m = [[ZERO; 3]; 3];
        for i in 0..3 {
            m[i][i] = diag[i];
        }
        m[0][1] = off[0];
        m[1][0] = off[0];
        m[0][2] = off[1];
        m[2][0] = off[1];
        m[1][2] = off[2];
        m[2][1] = off[2];
        RhoMatrix { d: 3, m }
    }

    pub fn diagonal(diag: &[Complex64]) -> Result<Self> {
        let rows: Vec<Vec<Complex64>> = (0..diag.len())
            .map(|i| (0..diag.len()).map(|j| if i == j { diag[i] } else { ZERO }).collect())
            .collect();
        Self::new(&rows)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        assert!(i < self.d && j < self.d, "index out of range");
        self.m[i][j]
    }

    pub fn rows(&self) -> Vec<Vec<Complex64>> {
        (0..self.d).map(|i| self.m[i][..self.d].to_vec()).collect()
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        let mut out = *self;
        for i in 0..self.d {
            for j in 0..self.d {
                out.m[i][j] = f(self.m[i][j]);
            }
        }
        out
    }

    pub fn conj(&self) -> Self {
        self.map(|v| v.conj())
    }

    pub fn real_part(&self) -> Self {
        self.map(|v| Complex64::new(v.re, 0.0))
    }

    pub fn r(&self, i: usize, k: usize) -> Complex64 {
        self.m[i][i] * self.m[k][k] - self.m[i][k] * self.m[i][k]
    }

    pub fn t(&self, i: usize, j: usize, k: usize) -> Complex64 {
        self.m[i][j] * self.m[k][k] - self.m[i][k] * self.m[j][k]
    }

    pub fn minors(&self) -> MinorSet {
        let mut out = MinorSet {
            r: [[ZERO; 3]; 3],
            t: [[[ZERO; 3]; 3]; 3],
        };
        for i in 0..self.d {
            for k in 0..self.d {
                out.r[i][k] = self.r(i, k);
                for j in 0..self.d {
                    out.t[i][j][k] = self.t(i, j, k);
                }
            }
        }
        out
    }

    pub fn det(&self) -> Complex64 {
        let m = &self.m;
        match self.d {
            1 => m[0][0],
            2 => m[0][0] * m[1][1] - m[0][1] * m[0][1],
            _ => {
                m[0][0] * m[1][1] * m[2][2] + 2.0 * m[0][1] * m[0][2] * m[1][2]
                    - m[0][0] * m[1][2] * m[1][2]
                    - m[1][1] * m[0][2] * m[0][2]
                    - m[2][2] * m[0][1] * m[0][1]
            }
        }
    }

    /// Adjugate (transposed cofactor matrix).
    pub fn adjugate(&self) -> Self {
        let m = &self.m;
        let mut a = [[ZERO; 3]; 3];
        match self.d {
            1 => a[0][0] = Complex64::new(1.0, 0.0),
            2 => {
                a[0][0] = m[1][1];
                a[1][1] = m[0][0];
                a[0][1] = -m[0][1];
                a[1][0] = -m[0][1];
            }
            _ => {
                for i in 0..3 {
                    for j in 0..3 {
                        let (r0, r1) = others(j);
                        let (c0, c1) = others(i);
                        let minor = m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
                        a[i][j] = if (i + j) % 2 == 0 { minor } else { -minor };
                    }
                }
            }
        }
        RhoMatrix { d: self.d, m: a }
    }

    pub fn inverse(&self) -> Result<Self> {
        let det = self.det();
        if det.norm() <= 1e-300 || det.norm() <= 1e-14 * self.scale().powi(self.d as i32) {
            return Err(XiError::Singular(det));
        }
        Ok(self.adjugate().map(|v| v / det))
    }

    fn scale(&self) -> f64 {
        let mut s: f64 = 0.0;
        for i in 0..self.d {
            for j in 0..self.d {
                s = s.max(self.m[i][j].norm());
            }
        }
        s
    }

    /// xᵀρx for a complex vector x.
    pub fn quad_form(&self, x: &[Complex64]) -> Complex64 {
        let mut acc = ZERO;
        for i in 0..self.d {
            for j in 0..self.d {
                acc += x[i] * self.m[i][j] * x[j];
            }
        }
        acc
    }

    /// Re ρ_ii > 0, det Re ρ > 0 and, for d = 3, R_ij(Re ρ) > 0.
    pub fn convergence_predicate(&self) -> bool {
        let re = self.real_part();
        (0..self.d).all(|i| self.m[i][i].re > 0.0)
            && re.det().re > 0.0
            && (self.d < 3
                || (0..3).all(|i| (0..3).all(|j| i == j || re.r(i, j).re > 0.0)))
    }

    pub fn check_convergence(&self) -> Result<()> {
        if self.convergence_predicate() {
            Ok(())
        } else {
            domain(format!(
                "coupling matrix violates the convergence conditions (Re ρ_ii > 0, det Re ρ > 0): {:?}",
                self.rows()
            ))
        }
    }

    /// All T_ijk with distinct indices vanish (|T| ≤ 1e−14·scale).
    pub fn factorization_predicate(&self) -> bool {
        let tol = 1e-14 * self.scale().powi(2).max(f64::MIN_POSITIVE);
        for i in 0..self.d {
            for j in 0..self.d {
                for k in 0..self.d {
                    if i != j && j != k && i != k && self.t(i, j, k).norm() > tol {
                        return false;
                    }
                }
            }
        }
        if self.d == 2 {
            return self.m[0][1].norm() <= tol;
        }
        true
    }

    /// Schur complement after eliminating index k.
    pub fn reduce_k(&self, k: usize) -> Result<Self> {
        if self.d < 2 {
            return domain("reduce_k needs d ≥ 2");
        }
        if k >= self.d {
            return domain(format!("index {k} out of range"));
        }
        let rkk = self.m[k][k];
        if rkk == ZERO {
            return Err(XiError::DivisionByZero("ρ_kk in reduce_k"));
        }
        let keep: Vec<usize> = (0..self.d).filter(|&i| i != k).collect();
        let mut m = [[ZERO; 3]; 3];
        for (a, &i) in keep.iter().enumerate() {
            for (b, &j) in keep.iter().enumerate() {
                m[a][b] = if i == j {
                    self.r(i, k) / rkk
                } else {
                    self.t(i, j, k) / rkk
                };
            }
        }
        Ok(RhoMatrix { d: self.d - 1, m })
    }

    /// Negates the off-diagonal entries of row and column k.
    pub fn flip_k(&self, k: usize) -> Self {
        let mut out = *self;
        for i in 0..self.d {
            if i != k {
                out.m[i][k] = -out.m[i][k];
                out.m[k][i] = -out.m[k][i];
            }
        }
        out
    }

    /// Simultaneous permutation of rows and columns: new index a takes old index perm[a].
    pub fn permute(&self, perm: &[usize]) -> Self {
        let mut out = *self;
        for a in 0..self.d {
            for b in 0..self.d {
                out.m[a][b] = self.m[perm[a]][perm[b]];
            }
        }
        out
    }

    /// Coordinate scaling x_i → λ_i x_i: returns (ρ′, s′, 1/Πλ) with
    /// e(ρ, s) = prefactor·e(ρ′, s′).
    pub fn rescale_class(&self, s: &[Complex64], lambda: &[f64]) -> Result<(Self, Vec<Complex64>, f64)> {
        if s.len() != self.d || lambda.len() != self.d {
            return domain("rescale_class: length mismatch");
        }
        if lambda.iter().any(|l| !(*l > 0.0)) {
            return domain("rescale_class needs λ_i > 0");
        }
        let mut out = *self;
        for k in 0..self.d {
            for l in 0..self.d {
                out.m[k][l] = self.m[k][l] / (lambda[k] * lambda[l]);
            }
        }
        let s2 = s.iter().zip(lambda).map(|(v, l)| v / l).collect();
        Ok((out, s2, 1.0 / lambda.iter().product::<f64>()))
    }
}

fn others(i: usize) -> (usize, usize) {
    match i {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    }
}

/// √(π^d/det ρ)·exp(sᵀρ⁻¹s/16), principal square root. No convergence check.
pub fn gaussian_e(rho: &RhoMatrix, s: &[Complex64]) -> Result<Complex64> {
    if s.len() != rho.dim() {
        return domain(format!("expected {} arguments, got {}", rho.dim(), s.len()));
    }
    let det = rho.det();
    let inv = rho.inverse()?;
    let q = inv.quad_form(s);
    Ok(PI.powf(rho.dim() as f64 / 2.0) / det.sqrt() * (q / 16.0).exp())
}

/// e(ρ, s) = ∫_{ℝ^d} e^{−xᵀρx + s·x/2} dx.
pub fn closed_form_e(rho: &RhoMatrix, s: &[Complex64]) -> Result<Complex64> {
    if rho.det() == ZERO {
        return Err(XiError::Singular(ZERO));
    }
    rho.check_convergence()?;
    gaussian_e(rho, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{gaussian_radius, tensor_integrate, QuadSpec};
    use proptest::prelude::*;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn sample3() -> RhoMatrix {
        RhoMatrix::three(
            [c(1.2), Complex64::new(0.9, 0.1), c(1.1)],
            [Complex64::new(0.2, 0.05), c(-0.1), Complex64::new(0.15, -0.03)],
        )
    }

    #[test]
    fn scalar_at_zero_is_sqrt_pi() {
        let v = closed_form_e(&RhoMatrix::scalar(c(1.0)), &[c(0.0)]).unwrap();
        assert!((v - PI.sqrt()).norm() < 1e-15);
    }

    #[test]
    fn two_dim_formula() {
        let (a, b, d) = (Complex64::new(1.0, 0.2), c(0.3), c(0.8));
        let rho = RhoMatrix::two(a, b, d);
        let s = [Complex64::new(1.0, 1.0), c(0.5)];
        let det = a * d - b * b;
        let expect = PI * ((a * s[1] * s[1] + d * s[0] * s[0] - 2.0 * b * s[0] * s[1]) / (16.0 * det)).exp()
            / det.sqrt();
        assert!((closed_form_e(&rho, &s).unwrap() - expect).norm() < 1e-14);
        assert!((rho.r(0, 1) - det).norm() < 1e-15);
    }

    #[test]
    fn three_dim_numerator_from_minors() {
        let rho = sample3();
        let s = [Complex64::new(0.3, 0.2), c(-0.4), Complex64::new(1.0, -0.5)];
        let num = rho.adjugate().quad_form(&s);
        let mut expect = ZERO;
        for k in 0..3 {
            let (i, j) = others(k);
            expect += s[k] * s[k] * rho.r(i, j);
            expect -= 2.0 * s[i] * s[j] * rho.t(i, j, k);
        }
        assert!((num - expect).norm() < 1e-14);
    }

    #[test]
    fn det_expansion_and_inverse() {
        let rho = sample3();
        let m = |i: usize, j: usize| rho.get(i, j);
        let direct = m(0, 0) * m(1, 1) * m(2, 2) + 2.0 * m(0, 1) * m(0, 2) * m(1, 2)
            - m(0, 0) * m(1, 2).powi(2)
            - m(1, 1) * m(0, 2).powi(2)
            - m(2, 2) * m(0, 1).powi(2);
        assert!((rho.det() - direct).norm() < 1e-15);
        let inv = rho.inverse().unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let p: Complex64 = (0..3).map(|k| rho.get(i, k) * inv.get(k, j)).sum();
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((p - e).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn singular_and_domain_errors() {
        let sing = RhoMatrix::two(c(1.0), c(1.0), c(1.0));
        assert!(matches!(closed_form_e(&sing, &[c(0.0), c(0.0)]), Err(XiError::Singular(_))));
        let bad = RhoMatrix::scalar(c(-1.0));
        assert!(matches!(closed_form_e(&bad, &[c(0.0)]), Err(XiError::Domain(_))));
        assert!(RhoMatrix::new(&[vec![c(1.0), c(0.2)], vec![c(0.3), c(1.0)]]).is_err());
        let zero_kk = RhoMatrix::two(c(1.0), c(0.1), c(0.0));
        assert!(matches!(zero_kk.reduce_k(1), Err(XiError::DivisionByZero(_))));
    }

    #[test]
    fn reduce_examples() {
        let rho = RhoMatrix::two(c(1.0), c(0.2), c(0.8));
        let r = rho.reduce_k(1).unwrap();
        assert_eq!(r.dim(), 1);
        assert!((r.get(0, 0) - rho.det() / c(0.8)).norm() < 1e-15);

        let rho = sample3();
        let r = rho.reduce_k(0).unwrap();
        let r11 = rho.get(0, 0);
        assert!((r.get(0, 0) - rho.r(1, 0) / r11).norm() < 1e-15);
        assert!((r.get(1, 1) - rho.r(2, 0) / r11).norm() < 1e-15);
        assert!((r.get(0, 1) - rho.t(1, 2, 0) / r11).norm() < 1e-15);

        let diag = RhoMatrix::diagonal(&[c(0.5), c(2.0), c(1.5)]).unwrap();
        let r = diag.reduce_k(1).unwrap();
        assert_eq!(r.get(0, 0), c(0.5));
        assert_eq!(r.get(1, 1), c(1.5));
    }

    #[test]
    fn flip_examples() {
        let rho = RhoMatrix::two(c(1.0), c(0.3), c(2.0));
        let f = rho.flip_k(1);
        assert_eq!(f.get(0, 1), c(-0.3));
        assert_eq!(f.get(1, 1), c(2.0));
        let rho = sample3();
        for k in 0..3 {
            assert_eq!(rho.flip_k(k).flip_k(k), rho);
            assert!((rho.flip_k(k).det() - rho.det()).norm() < 1e-15);
        }
    }

    #[test]
    fn rescale_examples() {
        let rho = RhoMatrix::scalar(c(1.0));
        let (r2, s2, pre) = rho.rescale_class(&[c(2.0)], &[2.0]).unwrap();
        assert_eq!(r2.get(0, 0), c(0.25));
        assert_eq!(s2[0], c(1.0));
        assert_eq!(pre, 0.5);
        let lhs = closed_form_e(&rho, &[c(2.0)]).unwrap();
        let rhs = pre * closed_form_e(&r2, &s2).unwrap();
        assert!((lhs - rhs).norm() < 1e-14);

        let rho = sample3();
        let (same, _, one) = rho.rescale_class(&[c(0.0); 3], &[1.0; 3]).unwrap();
        assert_eq!(same, rho);
        assert_eq!(one, 1.0);
        assert!(rho.rescale_class(&[c(0.0); 3], &[1.0, -1.0, 1.0]).is_err());
    }

    #[test]
    fn factorization() {
        assert!(RhoMatrix::diagonal(&[c(1.0), c(2.0), c(3.0)]).unwrap().factorization_predicate());
        assert!(!sample3().factorization_predicate());
        assert!(!RhoMatrix::two(c(1.0), c(0.1), c(1.0)).factorization_predicate());
    }

    #[test]
    fn gaussian_quadrature_cross_check() {
        let cases: Vec<(RhoMatrix, Vec<Complex64>)> = vec![
            (RhoMatrix::two(c(1.0), c(0.3), c(1.0)), vec![c(1.0), c(2.0)]),
            (RhoMatrix::scalar(Complex64::new(0.7, 0.3)), vec![Complex64::new(0.5, 1.0)]),
        ];
        for (rho, s) in cases {
            let d = rho.dim();
            let spec = QuadSpec {
                trunc_radius: Some(gaussian_radius(0.5, 2.0, 1e-14)),
                ..QuadSpec::for_dim(d).with_tol(1e-12, 1e-11)
            };
            let r = tensor_integrate(
                |x| {
                    let xc: Vec<Complex64> = x.iter().map(|v| c(*v)).collect();
                    let lin: Complex64 = s.iter().zip(&xc).map(|(a, b)| a * b).sum();
                    (-rho.quad_form(&xc) + lin / 2.0).exp()
                },
                d,
                &spec,
            )
            .unwrap();
            let e = closed_form_e(&rho, &s).unwrap();
            assert!((r.value - e).norm() < 1e-8, "{} vs {}", r.value, e);
        }
    }

    #[test]
    fn marginal_over_last_axis() {
        // ∫dx₃ e(…) reduces the 3×3 Gaussian to the reduced 2×2 one at fixed (x₁, x₂).
        let rho = sample3();
        let (x1, x2) = (0.3, -0.2);
        let spec = QuadSpec {
            trunc_radius: Some(12.0),
            ..QuadSpec::default()
        };
        let r = crate::quadrature::integrate_log_axis(
            |x3| {
                let v = [c(x1), c(x2), c(x3)];
                (-rho.quad_form(&v)).exp()
            },
            &spec,
        )
        .unwrap();
        let red = rho.reduce_k(2).unwrap();
        let expect = (PI / rho.get(2, 2)).sqrt() * (-red.quad_form(&[c(x1), c(x2)])).exp();
        assert!((r.value - expect).norm() < 1e-12);
    }

    fn rho_strategy(d: usize) -> impl Strategy<Value = (RhoMatrix, Vec<Complex64>)> {
        (
            proptest::collection::vec(0.8f64..1.4, 3),
            proptest::collection::vec((-0.25f64..0.25, -0.1f64..0.1), 3),
            proptest::collection::vec((0.0f64..0.6, -0.4f64..0.4), 3),
        )
            .prop_map(move |(diag, off, s)| {
                let off: Vec<Complex64> = off.iter().map(|(a, b)| Complex64::new(*a, *b)).collect();
                let rho = match d {
                    1 => RhoMatrix::scalar(c(diag[0])),
                    2 => RhoMatrix::two(c(diag[0]), off[0], c(diag[1])),
                    _ => RhoMatrix::three([c(diag[0]), c(diag[1]), c(diag[2])], [off[0], off[1], off[2]]),
                };
                let s = s[..d].iter().map(|(a, b)| Complex64::new(*a, *b)).collect();
                (rho, s)
            })
            .prop_filter("convergent", |(rho, _)| rho.convergence_predicate())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]

        #[test]
        fn closed_form_matches_quadrature((rho, s) in (1usize..=3).prop_flat_map(rho_strategy)) {
            let d = rho.dim();
            let spec = QuadSpec {
                trunc_radius: Some(gaussian_radius(0.4, 0.6, 1e-12)),
                ..QuadSpec::for_dim(d).with_tol(1e-10, 1e-10)
            };
            let r = tensor_integrate(|x| {
                let xc: Vec<Complex64> = x.iter().map(|v| c(*v)).collect();
                let lin: Complex64 = s.iter().zip(&xc).map(|(a, b)| a * b).sum();
                (-rho.quad_form(&xc) + lin / 2.0).exp()
            }, d, &spec).unwrap();
            let e = closed_form_e(&rho, &s).unwrap();
            prop_assert!((r.value - e).norm() < 1e-8);
        }

        #[test]
        fn flip_preserves_det_and_predicate(
            (rho, _) in rho_strategy(3), k in 0usize..3
        ) {
            let f = rho.flip_k(k);
            prop_assert_eq!(f.flip_k(k), rho);
            prop_assert!((f.det() - rho.det()).norm() < 1e-14);
            prop_assert_eq!(f.convergence_predicate(), rho.convergence_predicate());
        }

        #[test]
        fn rescaling_is_covariant(
            (rho, s) in rho_strategy(3),
            l in proptest::collection::vec(0.3f64..3.0, 3)
        ) {
            let (r2, s2, pre) = rho.rescale_class(&s, &l).unwrap();
            prop_assert!(r2.convergence_predicate());
            let a = closed_form_e(&rho, &s).unwrap();
            let b = pre * closed_form_e(&r2, &s2).unwrap();
            prop_assert!((a - b).norm() < 1e-12 * a.norm().max(1.0));
        }

        #[test]
        fn minors_are_symmetric((rho, _) in rho_strategy(3)) {
            let m = rho.minors();
            for i in 0..3 { for j in 0..3 {
                prop_assert_eq!(m.r[i][j], m.r[j][i]);
                for k in 0..3 { prop_assert_eq!(m.t[i][j][k], m.t[j][i][k]); }
            }}
        }
    }
}
