//! Analytic tests for zero draw probability and finite expected duration.
//!
//! * [`kappa2_draw_zero`]: exact phase boundaries at `kappa = 2`.
//! * [`kappa3_bounds`] and [`kappa3_contraction_holds`]: contraction bound at `kappa = 3`.
//! * [`kappa3_special_ratio`] and [`kappa3_p0_zero_check`]: special laws at `kappa = 3`.
//! * [`duration_criterion`]: row-sum test for finite expected duration.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fixpoint::{
    classify_draw, DrawVerdict, EdgeWeightLaw, GameSpec, ProbMatrix, SolveResult,
    DEFAULT_POSITIVE_THRESHOLD,
};
use crate::offspring::OffspringDistribution;

/// Lower end of the ratio interval certified for the binary tree.
pub const SPECIAL_RATIO_LOW: f64 = 0.242915;
/// Upper end of the ratio interval certified for the binary tree.
pub const SPECIAL_RATIO_HIGH: f64 = 2.57162;
/// Tolerance when matching a law against the `1 : alpha : alpha^2` shape.
pub const SPECIAL_LAW_TOL: f64 = 1e-9;

/// Exact zero-draw test at `kappa = 2`; true iff `d(1,1) = 0`.
///
/// Supported families: binomial with `n >= 2`, Poisson, negative binomial and two-point.
pub fn kappa2_draw_zero(dist: &OffspringDistribution, law: &EdgeWeightLaw) -> Result<bool> {
    dist.validate()?;
    law.validate()?;
    let (pm, p0, p1) = (law.p_minus1, law.p_0, law.p_1);
    let boundary = |d: u32| {
        let d = f64::from(d);
        (d + 1.0).powf(d - 1.0) * d.powf(-d)
    };
    let holds = match *dist {
        OffspringDistribution::Binomial { n, pi } if n >= 2 => {
            p0 * pi * (1.0 - pi * p1).powi(n as i32 - 1) <= boundary(n)
        }
        OffspringDistribution::Poisson { lambda } => {
            p0 * lambda * (-lambda * p1).exp() <= std::f64::consts::E
        }
        OffspringDistribution::NegBinomial { r, pi } => {
            let r = f64::from(r);
            let lhs = (r - 1.0).powf(r + 1.0) * (1.0 - pi) * p0 * pi.powf(r);
            let rhs = (p1 + pi - p1 * pi).powf(r + 1.0) * r.powf(r);
            lhs <= rhs
        }
        OffspringDistribution::TwoPoint { pi, d } => {
            p0 * pi * (pi * (1.0 - p1) + pm * (1.0 - pi)).powi(d as i32 - 1) <= boundary(d)
        }
        _ => return Err(Error::UnsupportedFamily(dist.label())),
    };
    Ok(holds)
}

/// Bounds and contraction coefficients at `kappa = 3`, indexed `[i - 1][j - 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kappa3Bounds {
    /// Lower bounds on the loss probabilities.
    #[serde(rename = "A")]
    pub a: [[f64; 2]; 2],
    /// Upper bounds on one minus the win probabilities.
    #[serde(rename = "B")]
    pub b: [[f64; 2]; 2],
    /// Contraction coefficients; all below one certifies zero draws.
    #[serde(rename = "E")]
    pub e: [[f64; 2]; 2],
    /// Two-term variant of `E`: the second term evaluates `G` instead of `G'` at its
    /// inner argument and the `p_{i-2}` terms are omitted. It reproduces the
    /// published tables but is not a certified bound.
    #[serde(rename = "E_reduced")]
    pub e_reduced: [[f64; 2]; 2],
}

impl Kappa3Bounds {
    /// Largest entry of `E`.
    pub fn max_e(&self) -> f64 {
        self.e
            .iter()
            .flatten()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest entry of `E_reduced`.
    pub fn max_e_reduced(&self) -> f64 {
        self.e_reduced
            .iter()
            .flatten()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `f1(x1, x2) = G(1 - p1 x2 - p0 x1)`.
pub fn f1(dist: &OffspringDistribution, law: &EdgeWeightLaw, x1: f64, x2: f64) -> f64 {
    dist.pgf_clamped(1.0 - law.p_1 * x2 - law.p_0 * x1)
}

/// `f2(x1, x2) = G(p0 + p_minus1 - p0 x2 - p_minus1 x1)`.
pub fn f2(dist: &OffspringDistribution, law: &EdgeWeightLaw, x1: f64, x2: f64) -> f64 {
    dist.pgf_clamped(law.p_0 + law.p_minus1 - law.p_0 * x2 - law.p_minus1 * x1)
}

/// Gradient `[d/dx1, d/dx2]` of [`f1`].
pub fn f1_partials(
    dist: &OffspringDistribution,
    law: &EdgeWeightLaw,
    x1: f64,
    x2: f64,
) -> [f64; 2] {
    let g = dist.pgf_derivative_clamped(1.0 - law.p_1 * x2 - law.p_0 * x1);
    [-law.p_0 * g, -law.p_1 * g]
}

/// Gradient `[d/dx1, d/dx2]` of [`f2`].
pub fn f2_partials(
    dist: &OffspringDistribution,
    law: &EdgeWeightLaw,
    x1: f64,
    x2: f64,
) -> [f64; 2] {
    let g = dist.pgf_derivative_clamped(law.p_0 + law.p_minus1 - law.p_0 * x2 - law.p_minus1 * x1);
    [-law.p_minus1 * g, -law.p_0 * g]
}

/// Computes the bounds `A`, `B` and the coefficients `E` at `kappa = 3`.
///
/// Composite pgf arguments are clamped to [0, 1].
pub fn kappa3_bounds(dist: &OffspringDistribution, law: &EdgeWeightLaw) -> Result<Kappa3Bounds> {
    dist.validate()?;
    law.validate()?;
    let g = |x: f64| dist.pgf_clamped(x);
    let gp = |x: f64| dist.pgf_derivative_clamped(x);
    let (pm, p0, p1) = (law.p_minus1, law.p_0, law.p_1);

    let g_pm = g(pm);
    let g_1p1 = g(1.0 - p1);
    let a11 = g_pm;
    let b21 = g_1p1;
    let a21 = g(pm * (1.0 - g(1.0 - (1.0 - pm) * g_pm)));
    let a22 = g(pm * (1.0 - g(1.0 - g_pm))) + g((1.0 - p1) * (1.0 - g_1p1))
        - g(pm * (1.0 - g_1p1 - g(1.0 - g_pm) + g((1.0 - p1) * (1.0 - g_pm))));
    let b11 = g(1.0 - (1.0 - pm) * g_pm) - g((1.0 - pm) * (1.0 - g_pm) + pm)
        + g((1.0 - pm) * (1.0 - g_pm) + pm - p1 * g(1.0 - g_1p1) + p1 * g(pm * (1.0 - g_1p1)));
    let b12 = g(1.0 - p1 * g((1.0 - p1) * (1.0 - g_1p1)));
    let a = [[a11, a11], [a21, a22]];
    let b = [[b11, b12], [b21, b21]];

    let f1b = [
        f1(dist, law, b[0][0], b[0][1]),
        f1(dist, law, b[1][0], b[1][1]),
    ];
    let f2b = [
        f2(dist, law, b[0][0], b[0][1]),
        f2(dist, law, b[1][0], b[1][1]),
    ];
    let outer = [
        gp(1.0 - p1 * f1b[1] - p0 * f1b[0]),
        gp(1.0 - p1 * f2b[1] - p0 * f2b[0]),
        gp(p0 + pm - p0 * f1b[1] - pm * f1b[0]),
        gp(p0 + pm - p0 * f2b[1] - pm * f2b[0]),
    ];

    let mut e = [[0.0; 2]; 2];
    let mut e_reduced = [[0.0; 2]; 2];
    for r in 0..2 {
        let i = r as i64 + 1;
        let (x1, x2) = (a[r][0], a[r][1]);
        let d1 = f1_partials(dist, law, x1, x2);
        let d2 = f2_partials(dist, law, x1, x2);
        let (c_near, c_far) = (law.p(i - 1), law.p(i - 2));
        let f2_inner = g(p0 + pm - p0 * x2 - pm * x1);
        for c in 0..2 {
            let sum = c_near * d1[c] * outer[0]
                + c_near * d2[c] * outer[1]
                + c_far * d1[c] * outer[2]
                + c_far * d2[c] * outer[3];
            e[r][c] = sum.abs();
            let f2_coef = if c == 0 { pm } else { p0 };
            e_reduced[r][c] =
                (c_near * d1[c] * outer[0]).abs() + c_near * f2_coef * f2_inner * outer[1];
        }
    }
    Ok(Kappa3Bounds { a, b, e, e_reduced })
}

/// True iff every `E` entry is below one (sufficient for zero draws at `kappa = 3`).
pub fn kappa3_contraction_holds(bounds: &Kappa3Bounds) -> bool {
    bounds.e.iter().flatten().all(|&x| x < 1.0)
}

/// Binary-tree law with `p_minus1 : p_0 : p_1 = 1 : alpha : alpha^2`.
pub fn special_ratio_law(alpha: f64) -> Result<EdgeWeightLaw> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(invalid("alpha", "must be a non-negative real"));
    }
    let z = alpha * alpha + alpha + 1.0;
    EdgeWeightLaw::new(1.0 / z, alpha / z, alpha * alpha / z)
}

/// Recovers `alpha` from a law of the form `1 : alpha : alpha^2`.
pub fn special_ratio_alpha(law: &EdgeWeightLaw) -> Result<f64> {
    law.validate()?;
    if law.p_minus1 <= 0.0 {
        return Err(Error::LawMismatch("p_minus1 must be positive".into()));
    }
    let alpha = law.p_0 / law.p_minus1;
    let want = special_ratio_law(alpha)?;
    if (want.p_1 - law.p_1).abs() > SPECIAL_LAW_TOL || (want.p_0 - law.p_0).abs() > SPECIAL_LAW_TOL
    {
        return Err(Error::LawMismatch(format!(
            "law ({}, {}, {}) is not of the form 1 : alpha : alpha^2",
            law.p_minus1, law.p_0, law.p_1
        )));
    }
    Ok(alpha)
}

/// Binary tree at `kappa = 3`: true iff `alpha` lies outside
/// `[SPECIAL_RATIO_LOW, SPECIAL_RATIO_HIGH]`, which certifies zero draws.
pub fn kappa3_special_ratio(alpha: f64) -> Result<bool> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(invalid("alpha", "must be a non-negative real"));
    }
    Ok(alpha < SPECIAL_RATIO_LOW || alpha > SPECIAL_RATIO_HIGH)
}

/// Product tested by [`kappa3_p0_zero_check`].
pub fn p0_zero_product(dist: &OffspringDistribution, p_minus1: f64) -> f64 {
    let pm = p_minus1;
    let g_pm = dist.pgf_clamped(pm);
    pm * (1.0 - pm)
        * dist.pgf_derivative_clamped(1.0 - (1.0 - pm) * g_pm)
        * dist.pgf_derivative_clamped(pm * (1.0 - g_pm))
}

/// At `kappa = 3` with no zero weights (`p_1 = 1 - p_minus1`): true when the
/// sufficient product inequality holds, certifying all four draws zero.
pub fn kappa3_p0_zero_check(dist: &OffspringDistribution, p_minus1: f64) -> Result<bool> {
    dist.validate()?;
    if !(0.0..=1.0).contains(&p_minus1) {
        return Err(invalid(
            "p_minus1",
            format!("{p_minus1} is not a probability"),
        ));
    }
    Ok(p0_zero_product(dist, p_minus1) < 1.0)
}

/// Distinct limits of `x <- f(x)` from the seeds `0, 0.1, ..., 1`.
pub fn scalar_fixed_points(
    f: impl Fn(f64) -> f64,
    tol: f64,
    max_iter: u64,
    radius: f64,
) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for s in 0..=10 {
        let mut x = f64::from(s) / 10.0;
        for _ in 0..max_iter {
            let y = f(x);
            let done = (y - x).abs() < tol;
            x = y;
            if done {
                break;
            }
        }
        if !out.iter().any(|p| (p - x).abs() < radius) {
            out.push(x);
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

/// Scalar maps `a(x) = G(p_minus1 - p_minus1 x)` and `b(x) = G(1 - p_1 x)` for the
/// law without zero weights. Returns whether `b∘b∘a∘a` and `b∘a∘a∘b` each have
/// a unique fixed point, which is equivalent to `d(1,1) = 0` and `d(1,2) = 0`.
pub fn p0_zero_compositions_unique(
    dist: &OffspringDistribution,
    p_minus1: f64,
    tol: f64,
    max_iter: u64,
    radius: f64,
) -> (bool, bool) {
    let p1 = 1.0 - p_minus1;
    let a = |x: f64| dist.pgf_clamped(p_minus1 - p_minus1 * x);
    let b = |x: f64| dist.pgf_clamped(1.0 - p1 * x);
    let bbaa = scalar_fixed_points(|x| b(b(a(a(x)))), tol, max_iter, radius);
    let baab = scalar_fixed_points(|x| b(a(a(b(x)))), tol, max_iter, radius);
    (bbaa.len() == 1, baab.len() == 1)
}

/// Outcome of the finite-duration row-sum test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationReport {
    pub alpha: ProbMatrix,
    pub beta: ProbMatrix,
    /// Row sums indexed `[i - 1][j - 1]`.
    pub row_sums: Vec<Vec<f64>>,
    pub criterion_holds: bool,
    pub draws_zero: bool,
}

/// Row-sum test certifying finite expected duration for every interior start.
///
/// Requires all three weights to have positive probability and a converged solve.
pub fn duration_criterion(
    spec: &GameSpec,
    result: &SolveResult,
    tol: f64,
) -> Result<DurationReport> {
    spec.validate()?;
    let law = spec.law;
    if !law.all_positive() {
        return Err(Error::HypothesisViolation(
            "every edge weight must have positive probability".into(),
        ));
    }
    let verdicts = classify_draw(result, &law, tol, DEFAULT_POSITIVE_THRESHOLD)?;
    let draws_zero = verdicts.iter().flatten().all(|v| *v == DrawVerdict::Zero);

    let n = spec.dim();
    let k = spec.kappa as usize;
    let w_at = |j: usize, c: usize| match c {
        0 => 1.0,
        c if c == k => 0.0,
        c => result.w.get(j, c - 1),
    };
    let l_at = |j: usize, c: usize| match c {
        0 => 0.0,
        c if c == k => 1.0,
        c => result.l.get(j, c - 1),
    };
    let mut alpha = ProbMatrix::zeros(n);
    let mut beta = ProbMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let c = i + 1;
            let a = law.p_minus1 * w_at(j, c - 1) + law.p_0 * w_at(j, c) + law.p_1 * w_at(j, c + 1);
            let b = law.p_minus1 * (1.0 - l_at(j, c - 1))
                + law.p_0 * (1.0 - l_at(j, c))
                + law.p_1 * (1.0 - l_at(j, c + 1));
            alpha.set(i, j, a);
            beta.set(i, j, b);
        }
    }

    let gp = |x: f64| spec.dist.pgf_derivative_clamped(x);
    let mut row_sums = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut sum = 0.0;
            for s in i.saturating_sub(1)..(i + 2).min(n) {
                for t in j.saturating_sub(1)..(j + 2).min(n) {
                    sum += gp(beta.get(s, t))
                        * gp(alpha.get(t, i))
                        * law.p(i as i64 - s as i64)
                        * law.p(j as i64 - t as i64);
                }
            }
            row_sums[i][j] = sum;
        }
    }
    let rows_ok = row_sums.iter().flatten().all(|&x| x < 1.0);
    Ok(DurationReport {
        alpha,
        beta,
        row_sums,
        criterion_holds: draws_zero && rows_ok,
        draws_zero,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixpoint::{solve, SolveOptions, DEFAULT_TOL};

    fn law(p0: f64, p1: f64) -> EdgeWeightLaw {
        EdgeWeightLaw::from_p0_p1(p0, p1).unwrap()
    }

    #[test]
    fn kappa2_examples() {
        for pi in [0.2, 0.5, 0.9] {
            let g = OffspringDistribution::geometric(pi).unwrap();
            for (p0, p1) in [(0.99, 0.0), (0.5, 0.3), (0.0, 0.5)] {
                assert!(kappa2_draw_zero(&g, &law(p0, p1)).unwrap());
            }
        }
        let p2 = OffspringDistribution::poisson(2.0).unwrap();
        for (p0, p1) in [(1.0, 0.0), (0.95, 0.03), (0.5, 0.5)] {
            assert!(kappa2_draw_zero(&p2, &law(p0, p1)).unwrap());
        }
        let p10 = OffspringDistribution::poisson(10.0).unwrap();
        assert!(!kappa2_draw_zero(&p10, &law(0.99, 0.005)).unwrap());
        let d = OffspringDistribution::dirac(2).unwrap();
        assert!(matches!(
            kappa2_draw_zero(&d, &law(0.5, 0.2)),
            Err(Error::UnsupportedFamily(_))
        ));
        let b1 = OffspringDistribution::binomial(1, 0.5).unwrap();
        assert!(matches!(
            kappa2_draw_zero(&b1, &law(0.5, 0.2)),
            Err(Error::UnsupportedFamily(_))
        ));
    }

    #[test]
    fn worked_bounds_poisson() {
        let p5 = OffspringDistribution::poisson(5.0).unwrap();
        let b = kappa3_bounds(&p5, &law(0.3, 0.35)).unwrap();
        let rel = |x: f64, y: f64| (x - y).abs() / y.abs();
        assert!(rel(b.a[1][0], 0.008_289_206_5) < 1e-6);
        assert!(rel(b.a[1][0], 0.00828) < 2e-3);
        assert!(rel(b.a[1][1], 0.0991) < 1e-3);
        assert!(rel(b.b[0][0], 0.44488) < 1e-3);
        assert!(rel(b.b[0][1], 0.84123) < 1e-3);
    }

    #[test]
    fn worked_bounds_regular_tree() {
        let d15 = OffspringDistribution::dirac(15).unwrap();
        let b = kappa3_bounds(&d15, &law(0.3, 0.35)).unwrap();
        let rel = |x: f64, y: f64| (x - y).abs() / y.abs();
        assert!(rel(b.a[0][0], 1.4488e-7) < 1e-3);
        assert!(rel(b.b[1][0], 0.0015620) < 1e-3);
        assert!(rel(b.a[1][0], 2.57866e-95) < 1e-3);
        assert!(rel(b.b[0][0], 0.00188145) < 1e-3);
    }

    #[test]
    fn reduced_coefficients_match_published_rows() {
        let p5 = OffspringDistribution::poisson(5.0).unwrap();
        let b = kappa3_bounds(&p5, &law(0.3, 0.35)).unwrap();
        let want = [[0.68, 0.773], [0.749, 0.851]];
        for r in 0..2 {
            for c in 0..2 {
                assert!((b.e_reduced[r][c] - want[r][c]).abs() < 5e-3);
            }
        }
    }

    #[test]
    fn partials_match_finite_differences() {
        let dists = [
            OffspringDistribution::poisson(5.0).unwrap(),
            OffspringDistribution::dirac(4).unwrap(),
            OffspringDistribution::neg_binomial(2, 0.4).unwrap(),
        ];
        let l = law(0.3, 0.35);
        let h = 1e-6;
        for d in &dists {
            for (x1, x2) in [(0.2, 0.4), (0.5, 0.5), (0.7, 0.1)] {
                let p1 = f1_partials(d, &l, x1, x2);
                let p2 = f2_partials(d, &l, x1, x2);
                let fd1 = [
                    (f1(d, &l, x1 + h, x2) - f1(d, &l, x1 - h, x2)) / (2.0 * h),
                    (f1(d, &l, x1, x2 + h) - f1(d, &l, x1, x2 - h)) / (2.0 * h),
                ];
                let fd2 = [
                    (f2(d, &l, x1 + h, x2) - f2(d, &l, x1 - h, x2)) / (2.0 * h),
                    (f2(d, &l, x1, x2 + h) - f2(d, &l, x1, x2 - h)) / (2.0 * h),
                ];
                for k in 0..2 {
                    assert!((p1[k] - fd1[k]).abs() < 1e-5);
                    assert!((p2[k] - fd2[k]).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn contraction_examples() {
        let p50 = OffspringDistribution::poisson(50.0).unwrap();
        let b = kappa3_bounds(&p50, &law(0.4, 0.3)).unwrap();
        assert!(kappa3_contraction_holds(&b));
        assert!(b.max_e() < 5e-4);
        let p5 = OffspringDistribution::poisson(5.0).unwrap();
        let b = kappa3_bounds(&p5, &law(0.8, 0.1)).unwrap();
        assert!(!kappa3_contraction_holds(&b));
        let zero = Kappa3Bounds {
            a: [[0.0; 2]; 2],
            b: [[0.0; 2]; 2],
            e: [[0.0; 2]; 2],
            e_reduced: [[0.0; 2]; 2],
        };
        assert!(kappa3_contraction_holds(&zero));
    }

    #[test]
    fn special_ratio_examples() {
        assert!(kappa3_special_ratio(0.1).unwrap());
        assert!(!kappa3_special_ratio(1.0).unwrap());
        assert!(kappa3_special_ratio(3.0).unwrap());
        assert!(kappa3_special_ratio(-1.0).is_err());
        let l = special_ratio_law(2.0).unwrap();
        assert!((special_ratio_alpha(&l).unwrap() - 2.0).abs() < 1e-12);
        assert!(matches!(
            special_ratio_alpha(&law(0.5, 0.2)),
            Err(Error::LawMismatch(_))
        ));
    }

    #[test]
    fn p0_zero_examples() {
        let d2 = OffspringDistribution::dirac(2).unwrap();
        let p2 = OffspringDistribution::poisson(2.0).unwrap();
        for k in 0..=20 {
            let pm = f64::from(k) / 20.0;
            assert!(kappa3_p0_zero_check(&d2, pm).unwrap());
            assert!(kappa3_p0_zero_check(&p2, pm).unwrap());
        }
        assert_eq!(p0_zero_product(&d2, 0.0), 0.0);
    }

    #[test]
    fn duration_examples() {
        let d2 = OffspringDistribution::dirac(2).unwrap();
        let s = GameSpec::new(3, d2.clone(), law(0.9, 0.05)).unwrap();
        let r = solve(&s, &SolveOptions::default()).unwrap();
        let rep = duration_criterion(&s, &r, DEFAULT_TOL).unwrap();
        assert!(!rep.draws_zero && !rep.criterion_holds);

        let s = GameSpec::new(
            2,
            OffspringDistribution::poisson(2.0).unwrap(),
            law(0.5, 0.25),
        )
        .unwrap();
        let r = solve(&s, &SolveOptions::default()).unwrap();
        let rep = duration_criterion(&s, &r, DEFAULT_TOL).unwrap();
        assert!(rep.draws_zero);
        let g = s.dist.pgf_derivative(rep.beta.get(0, 0)).unwrap();
        assert!((rep.row_sums[0][0] - g * g * 0.25).abs() < 1e-9);

        let s = GameSpec::new(3, d2, law(0.0, 0.5)).unwrap();
        let r = solve(&s, &SolveOptions::default()).unwrap();
        assert!(matches!(
            duration_criterion(&s, &r, DEFAULT_TOL),
            Err(Error::HypothesisViolation(_))
        ));
    }
}
