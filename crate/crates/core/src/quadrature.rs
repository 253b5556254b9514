//! Adaptive Gauss–Kronrod quadrature for complex-valued integrands.
//!
//! Intervals are refined globally: the panel with the largest error estimate
//! is bisected until the summed estimate falls below the requested tolerance.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result, XiError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Half-width of the symmetric window used by `integrate_log_axis` and
    /// `tensor_integrate`. `None` picks one from `abs_tol` for a unit Gaussian.
    pub trunc_radius: Option<f64>,
    pub max_panels: usize,
    /// Kronrod nodes per panel: 15 or 21.
    pub panel_order: usize,
}

impl Default for QuadSpec {
    fn default() -> Self {
        QuadSpec {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            trunc_radius: None,
            max_panels: 4000,
            panel_order: 21,
        }
    }
}

impl QuadSpec {
    pub fn for_dim(d: usize) -> Self {
        let (abs_tol, rel_tol) = match d {
            0 | 1 => (1e-12, 1e-10),
            2 => (1e-11, 1e-9),
            _ => (1e-9, 1e-7),
        };
        QuadSpec {
            abs_tol,
            rel_tol,
            ..QuadSpec::default()
        }
    }

    pub fn with_tol(mut self, abs_tol: f64, rel_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self.rel_tol = rel_tol;
        self
    }

    /// Tolerances multiplied by `factor`.
    pub fn scaled(mut self, factor: f64) -> Self {
        self.abs_tol *= factor;
        self.rel_tol *= factor;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0) || !(self.rel_tol > 0.0) {
            return domain("quadrature tolerances must be positive");
        }
        if self.max_panels == 0 {
            return domain("max_panels must be positive");
        }
        rule(self.panel_order).map(|_| ())
    }

    pub fn radius(&self) -> f64 {
        self.trunc_radius
            .unwrap_or_else(|| gaussian_radius(1.0, 0.0, self.abs_tol))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegralResult {
    pub value: Complex64,
    pub error_estimate: f64,
    pub evaluations: usize,
    /// Estimate of ∫|f|, used for the round-off floor.
    pub l1: f64,
}

impl IntegralResult {
    pub fn zero() -> Self {
        IntegralResult {
            value: Complex64::new(0.0, 0.0),
            error_estimate: 0.0,
            evaluations: 0,
            l1: 0.0,
        }
    }

    /// ∫|f| / |∫f|; large values mean cancellation eats digits.
    pub fn condition(&self) -> f64 {
        if self.value.norm() == 0.0 {
            if self.l1 == 0.0 {
                1.0
            } else {
                f64::INFINITY
            }
        } else {
            self.l1 / self.value.norm()
        }
    }
}

/// Window half-width with e^{−ρx² + |slope|x} below tolerance:
/// X = sqrt((ln(1/abs_tol) + |slope|·X₀ + 5)/ρ), iterated from X₀ = 0.
pub fn gaussian_radius(rho_eff: f64, slope: f64, abs_tol: f64) -> f64 {
    let base = (1.0 / abs_tol).ln() + 5.0;
    let mut x = 0.0;
    for _ in 0..50 {
        let next = ((base + slope.abs() * x) / rho_eff).sqrt();
        if (next - x).abs() < 1e-9 {
            return next;
        }
        x = next;
    }
    x
}

/// Interval outside which `ln_bound` stays below `ln_target` and keeps falling.
/// The scan starts at `start` and walks outward in steps of `step`.
pub fn log_window<F: Fn(f64) -> f64>(ln_bound: F, ln_target: f64, start: f64, step: f64) -> (f64, f64) {
    let walk = |dir: f64| {
        let mut x = start;
        let mut prev = ln_bound(x);
        for _ in 0..20_000 {
            let next = x + dir * step;
            let b = ln_bound(next);
            if b < ln_target && b <= prev {
                return next;
            }
            x = next;
            prev = b;
        }
        x
    };
    (walk(-1.0), walk(1.0))
}

struct Rule {
    xgk: &'static [f64],
    wgk: &'static [f64],
    wg: &'static [f64],
}

static GK15: Rule = Rule {
    xgk: &[
        0.991455371120812639206854697526329,
        0.949107912342758524526189684047851,
        0.864864423359769072789712788640926,
        0.741531185599394439863864773280788,
        0.586087235467691130294144845693013,
        0.405845151377397166906606412076961,
        0.207784955007898467600689403773245,
        0.000000000000000000000000000000000,
    ],
    wgk: &[
        0.022935322010529224963732008058970,
        0.063092092629978553290700663189204,
        0.104790010322250183839876322541518,
        0.140653259715525918745189590510238,
        0.169004726639267902826583426598550,
        0.190350578064785409913256402421014,
        0.204432940075298892414161999234649,
        0.209482141084727828012999174891714,
    ],
    wg: &[
        0.129484966168869693270611432679082,
        0.279705391489276667901467771423780,
        0.381830050505118944950369775488975,
        0.417959183673469387755102040816327,
    ],
};

static GK21: Rule = Rule {
    xgk: &[
        0.995657163025808080735527280689003,
        0.973906528517171720077964012084452,
        0.930157491355708226001207180059508,
        0.865063366688984510732096688423493,
        0.780817726586416897063717578345042,
        0.679409568299024406234327365114874,
        0.562757134668604683339000099272694,
        0.433395394129247190799265943165784,
        0.294392862701460198131126603103866,
        0.148874338981631210884826001129720,
        0.000000000000000000000000000000000,
    ],
    wgk: &[
        0.011694638867371874278064396062192,
        0.032558162307964727478818972459390,
        0.054755896574351996031381300244580,
        0.075039674810919952767043140916190,
        0.093125454583697605535065465083366,
        0.109387158802297641899210590325805,
        0.123491976262065851077600552738491,
        0.134709217311473325928054001771707,
        0.142775938577060080797094273138717,
        0.147739104901338491374841515972068,
        0.149445554002916905664936468389821,
    ],
    wg: &[
        0.066671344308688137593568809893332,
        0.149451349150580593145776339657697,
        0.219086362515982043995534934228163,
        0.269266719309996355091226921569469,
        0.295524224714752870173892994651338,
    ],
};

fn rule(order: usize) -> Result<&'static Rule> {
    match order {
        15 => Ok(&GK15),
        21 => Ok(&GK21),
        _ => domain(format!("panel_order must be 15 or 21, got {order}")),
    }
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: Complex64,
    err: f64,
    l1: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err
            .total_cmp(&other.err)
            .then(other.a.total_cmp(&self.a))
    }
}

fn eval_panel<F: FnMut(f64) -> Complex64>(f: &mut F, a: f64, b: f64, r: &Rule) -> Panel {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let n = r.xgk.len() - 1;
    let gauss_center = r.wg.len() * 2 > n;

    let fc = f(center);
    let mut resk = fc * r.wgk[n];
    let mut resg = if gauss_center {
        fc * r.wg[r.wg.len() - 1]
    } else {
        Complex64::new(0.0, 0.0)
    };
    let mut resabs = fc.norm() * r.wgk[n];
    let mut vals = [(Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)); 10];
    for j in 0..n {
        let dx = half * r.xgk[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        vals[j] = (f1, f2);
        resk += (f1 + f2) * r.wgk[j];
        resabs += (f1.norm() + f2.norm()) * r.wgk[j];
        if j % 2 == 1 {
            resg += (f1 + f2) * r.wg[j / 2];
        }
    }
    let mean = resk * 0.5;
    let mut resasc = (fc - mean).norm() * r.wgk[n];
    for j in 0..n {
        resasc += ((vals[j].0 - mean).norm() + (vals[j].1 - mean).norm()) * r.wgk[j];
    }
    let h = half.abs();
    let resasc = resasc * h;
    let resabs = resabs * h;
    let mut err = ((resk - resg) * half).norm();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    if !resk.re.is_finite() || !resk.im.is_finite() {
        err = f64::INFINITY;
    }
    Panel {
        a,
        b,
        value: resk * half,
        err,
        l1: resabs,
    }
}

/// ∫_a^b f(x) dx with `initial` equal starting panels.
pub fn integrate_panels<F: FnMut(f64) -> Complex64>(
    mut f: F,
    a: f64,
    b: f64,
    initial: usize,
    spec: &QuadSpec,
) -> Result<IntegralResult> {
    spec.validate()?;
    let r = rule(spec.panel_order)?;
    if a == b {
        return Ok(IntegralResult::zero());
    }
    let per_panel = 2 * (r.xgk.len() - 1) + 1;
    let initial = initial.clamp(1, spec.max_panels);
    let mut heap = BinaryHeap::with_capacity(initial * 2);
    let mut evaluations = 0usize;
    for i in 0..initial {
        let lo = a + (b - a) * i as f64 / initial as f64;
        let hi = if i + 1 == initial {
            b
        } else {
            a + (b - a) * (i + 1) as f64 / initial as f64
        };
        heap.push(eval_panel(&mut f, lo, hi, r));
        evaluations += per_panel;
    }

    loop {
        let (value, err, l1) = heap.iter().fold(
            (Complex64::new(0.0, 0.0), 0.0, 0.0),
            |(v, e, l), p| (v + p.value, e + p.err, l + p.l1),
        );
        let tol = spec
            .abs_tol
            .max(spec.rel_tol * value.norm())
            .max(100.0 * f64::EPSILON * l1);
        if err <= tol {
            return Ok(finish(heap, evaluations));
        }
        if heap.len() >= spec.max_panels || !err.is_finite() {
            return Err(XiError::NonConvergence {
                best: value,
                error: err,
                evaluations,
            });
        }
        let worst = heap.pop().expect("non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid == worst.a || mid == worst.b {
            return Err(XiError::NonConvergence {
                best: value,
                error: err,
                evaluations,
            });
        }
        heap.push(eval_panel(&mut f, worst.a, mid, r));
        heap.push(eval_panel(&mut f, mid, worst.b, r));
        evaluations += 2 * per_panel;
    }
}

fn finish(heap: BinaryHeap<Panel>, evaluations: usize) -> IntegralResult {
    let mut panels = heap.into_vec();
    panels.sort_by(|p, q| p.a.total_cmp(&q.a));
    let mut out = IntegralResult::zero();
    for p in &panels {
        out.value += p.value;
        out.error_estimate += p.err;
        out.l1 += p.l1;
    }
    out.evaluations = evaluations;
    out
}

/// ∫_a^b f(x) dx, starting from panels of width at most 4.
pub fn integrate_interval<F: FnMut(f64) -> Complex64>(
    f: F,
    a: f64,
    b: f64,
    spec: &QuadSpec,
) -> Result<IntegralResult> {
    let initial = ((b - a).abs() / 4.0).ceil() as usize;
    integrate_panels(f, a, b, initial.clamp(1, 64), spec)
}

/// ∫_{−X}^{X} f(x) dx with X = `spec.radius()`.
pub fn integrate_log_axis<F: FnMut(f64) -> Complex64>(f: F, spec: &QuadSpec) -> Result<IntegralResult> {
    let x = spec.radius();
    integrate_interval(f, -x, x, spec)
}

/// Contour integral of f along the straight segment from z to s.
pub fn integrate_segment<F: FnMut(Complex64) -> Complex64>(
    mut f: F,
    z: Complex64,
    s: Complex64,
    spec: &QuadSpec,
) -> Result<IntegralResult> {
    if z == s {
        spec.validate()?;
        return Ok(IntegralResult::zero());
    }
    let dir = s - z;
    let len = dir.norm();
    integrate_panels(|u| f(z + dir * u) * dir, 0.0, 1.0, 2, &spec.scaled_abs(1.0 / len.max(1.0)))
}

impl QuadSpec {
    fn scaled_abs(mut self, factor: f64) -> Self {
        self.abs_tol *= factor;
        self
    }
}

/// Nested adaptive quadrature over a box. Inner tolerances are tightened by
/// the outer widths so the accumulated error stays within `spec`.
pub fn tensor_integrate_box<F: FnMut(&[f64]) -> Complex64>(
    mut f: F,
    bounds: &[(f64, f64)],
    spec: &QuadSpec,
) -> Result<IntegralResult> {
    spec.validate()?;
    if bounds.is_empty() || bounds.len() > 3 {
        return domain(format!("tensor quadrature supports 1 ≤ d ≤ 3, got {}", bounds.len()));
    }
    let mut prefix = Vec::with_capacity(bounds.len());
    let mut failure = None;
    let mut evaluations = 0;
    let out = nested(&mut f, bounds, &mut prefix, spec, &mut evaluations, &mut failure);
    match (out, failure) {
        (Ok(mut r), None) => {
            r.evaluations = evaluations;
            Ok(r)
        }
        (Ok(r), Some(_)) => Err(XiError::NonConvergence {
            best: r.value,
            error: r.error_estimate,
            evaluations,
        }),
        (Err(e), _) => Err(e),
    }
}

fn nested(
    f: &mut dyn FnMut(&[f64]) -> Complex64,
    bounds: &[(f64, f64)],
    prefix: &mut Vec<f64>,
    spec: &QuadSpec,
    evaluations: &mut usize,
    failure: &mut Option<XiError>,
) -> Result<IntegralResult> {
    let level = prefix.len();
    let (a, b) = bounds[level];
    if level + 1 == bounds.len() {
        let r = integrate_interval(
            |x| {
                prefix.push(x);
                let v = f(prefix);
                prefix.pop();
                v
            },
            a,
            b,
            spec,
        );
        if let Ok(ref v) = r {
            *evaluations += v.evaluations;
        }
        return r;
    }
    let inner = spec
        .with_tol(spec.abs_tol / (2.0 * (b - a).abs().max(1.0)), spec.rel_tol / 2.0);
    integrate_interval(
        |x| {
            prefix.push(x);
            let v = match nested(f, bounds, prefix, &inner, evaluations, failure) {
                Ok(r) => r.value,
                Err(XiError::NonConvergence { best, .. }) => {
                    failure.get_or_insert(XiError::NonConvergence {
                        best,
                        error: f64::NAN,
                        evaluations: 0,
                    });
                    best
                }
                Err(e) => {
                    failure.get_or_insert(e);
                    Complex64::new(0.0, 0.0)
                }
            };
            prefix.pop();
            v
        },
        a,
        b,
        spec,
    )
}

/// Nested quadrature over the cube [−X, X]^d, X = `spec.radius()`.
pub fn tensor_integrate<F: FnMut(&[f64]) -> Complex64>(
    f: F,
    d: usize,
    spec: &QuadSpec,
) -> Result<IntegralResult> {
    if d == 0 || d > 3 {
        return domain(format!("tensor quadrature supports 1 ≤ d ≤ 3, got {d}"));
    }
    let x = spec.radius();
    tensor_integrate_box(f, &vec![(-x, x); d], spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn kronrod_weights_sum_to_two() {
        for r in [&GK15, &GK21] {
            let n = r.xgk.len() - 1;
            let k: f64 = 2.0 * r.wgk[..n].iter().sum::<f64>() + r.wgk[n];
            assert!((k - 2.0).abs() < 1e-14);
            let g: f64 = if r.wg.len() * 2 > n {
                2.0 * r.wg[..r.wg.len() - 1].iter().sum::<f64>() + r.wg[r.wg.len() - 1]
            } else {
                2.0 * r.wg.iter().sum::<f64>()
            };
            assert!((g - 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn polynomials_exact_on_one_panel() {
        for order in [15, 21] {
            let spec = QuadSpec {
                panel_order: order,
                ..QuadSpec::default()
            };
            let r = integrate_panels(|x| c(x.powi(20) - 3.0 * x.powi(7)), -1.0, 1.0, 1, &spec).unwrap();
            assert!((r.value.re - 2.0 / 21.0).abs() < 1e-14);
        }
    }

    #[test]
    fn unit_gaussian() {
        let r = integrate_log_axis(|x| c((-x * x).exp()), &QuadSpec::default()).unwrap();
        assert!((r.value.re - PI.sqrt()).abs() < 1e-12);
        assert!(r.error_estimate <= 1e-10 * r.value.norm());
    }

    #[test]
    fn shifted_gaussian() {
        // ∫ e^{−ρx² + sx/2} = √(π/ρ) e^{s²/16ρ}
        let spec = QuadSpec {
            trunc_radius: Some(gaussian_radius(1.0, 1.0, 1e-12)),
            ..QuadSpec::default()
        };
        let r = integrate_log_axis(|x| c((-x * x + x).exp()), &spec).unwrap();
        assert!((r.value.re - PI.sqrt() * 0.25f64.exp()).abs() < 1e-10);
    }

    #[test]
    fn odd_integrand_vanishes() {
        let spec = QuadSpec::default();
        let r = integrate_log_axis(|x| c(x * (-x * x).exp()), &spec).unwrap();
        assert!(r.value.norm() <= spec.abs_tol);
    }

    #[test]
    fn segment_basics() {
        let spec = QuadSpec::default();
        let s = Complex64::new(1.0, 1.0);
        let r = integrate_segment(|_| c(1.0), c(0.0), s, &spec).unwrap();
        assert!((r.value - s).norm() < 1e-14);
        let e = integrate_segment(|t| t * t, c(0.5), c(0.5), &spec).unwrap();
        assert_eq!(e.value, c(0.0));
    }

    #[test]
    fn segment_reversal_and_transitivity() {
        let spec = QuadSpec::default();
        let f = |t: Complex64| (t * t * 0.3).exp() * t.sin();
        let z = Complex64::new(0.2, -0.4);
        let y = Complex64::new(1.1, 0.3);
        let s = Complex64::new(0.7, 1.5);
        let a = integrate_segment(f, z, s, &spec).unwrap().value;
        let b = integrate_segment(f, s, z, &spec).unwrap().value;
        assert!((a + b).norm() < 1e-14);
        let p = integrate_segment(f, z, y, &spec).unwrap().value;
        let q = integrate_segment(f, y, s, &spec).unwrap().value;
        assert!((p + q - a).norm() < 3.0 * spec.abs_tol);
    }

    #[test]
    fn segment_against_antiderivative() {
        let spec = QuadSpec::default();
        let z = Complex64::new(-0.3, 0.2);
        let s = Complex64::new(1.4, -2.0);
        let r = integrate_segment(|t| t.cos(), z, s, &spec).unwrap();
        assert!((r.value - (s.sin() - z.sin())).norm() < 1e-12);
    }

    #[test]
    fn tensor_gaussians() {
        let spec = QuadSpec::for_dim(2);
        let r = tensor_integrate(|x| c((-x[0] * x[0] - x[1] * x[1]).exp()), 2, &spec).unwrap();
        assert!((r.value.re - PI).abs() < 1e-10);
        let spec3 = QuadSpec::for_dim(3);
        let r = tensor_integrate(|x| c((-x.iter().map(|v| v * v).sum::<f64>()).exp()), 3, &spec3).unwrap();
        assert!((r.value.re - PI.powf(1.5)).abs() < 1e-8);
    }

    #[test]
    fn nonconvergence_reports_best() {
        let spec = QuadSpec {
            max_panels: 3,
            ..QuadSpec::default()
        };
        match integrate_interval(|x| c((50.0 * x).sin()), 0.0, 1.0, &spec) {
            Err(XiError::NonConvergence { best, .. }) => assert!(best.re.is_finite()),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let bad = QuadSpec {
            panel_order: 7,
            ..QuadSpec::default()
        };
        assert!(integrate_interval(|_| c(1.0), 0.0, 1.0, &bad).is_err());
        assert!(tensor_integrate(|_| c(1.0), 4, &QuadSpec::default()).is_err());
    }

    #[test]
    fn halving_tolerance_is_consistent() {
        let f = |x: f64| Complex64::new((-x * x).exp() * (3.0 * x).cos(), x.sin() * (-x * x).exp());
        let coarse = QuadSpec::default().with_tol(1e-8, 1e-8);
        let a = integrate_log_axis(f, &coarse).unwrap();
        let b = integrate_log_axis(f, &coarse.scaled(0.5)).unwrap();
        assert!((a.value - b.value).norm() <= a.error_estimate.max(1e-15));
    }
}
