//! Offspring laws of the Galton-Watson tree: pmf, pgf, pgf derivative and sampling.
//!
//! Every family is evaluated through its closed form. Distributions serialize to
//! `{"family": <name>, "params": {...}}`; deserialization validates parameters and
//! accepts `geometric` as an alias for a negative binomial with `r = 1`.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::{ln_binomial, ln_factorial};

use crate::error::{invalid, Error, Result};

/// Tolerance on the total mass of an explicit pmf.
pub const PMF_SUM_TOL: f64 = 1e-12;

/// Offspring distribution of the tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Repr", into = "Repr")]
pub enum OffspringDistribution {
    /// Point mass at `m`.
    Dirac { m: u32 },
    /// Uniform on `{1, ..., m}`.
    UniformRange { m: u32 },
    /// Binomial with `n` trials and success probability `pi`.
    Binomial { n: u32, pi: f64 },
    /// Poisson with mean `lambda`.
    Poisson { lambda: f64 },
    /// Number of failures before the `r`-th success, success probability `pi`.
    NegBinomial { r: u32, pi: f64 },
    /// Mass `1 - pi` at 0 and `pi` at `d`.
    TwoPoint { pi: f64, d: u32 },
    /// Finite pmf `pmf[m] = P(m children)`.
    Explicit { pmf: Vec<f64> },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
enum Repr {
    Dirac { m: u32 },
    UniformRange { m: u32 },
    Binomial { n: u32, pi: f64 },
    Poisson { lambda: f64 },
    NegBinomial { r: u32, pi: f64 },
    Geometric { pi: f64 },
    TwoPoint { pi: f64, d: u32 },
    Explicit { pmf: Vec<f64> },
}

impl TryFrom<Repr> for OffspringDistribution {
    type Error = Error;

    fn try_from(r: Repr) -> Result<Self> {
        let d = match r {
            Repr::Dirac { m } => Self::Dirac { m },
            Repr::UniformRange { m } => Self::UniformRange { m },
            Repr::Binomial { n, pi } => Self::Binomial { n, pi },
            Repr::Poisson { lambda } => Self::Poisson { lambda },
            Repr::NegBinomial { r, pi } => Self::NegBinomial { r, pi },
            Repr::Geometric { pi } => Self::NegBinomial { r: 1, pi },
            Repr::TwoPoint { pi, d } => Self::TwoPoint { pi, d },
            Repr::Explicit { pmf } => Self::Explicit { pmf },
        };
        d.validate()?;
        Ok(d)
    }
}

impl From<OffspringDistribution> for Repr {
    fn from(d: OffspringDistribution) -> Self {
        use OffspringDistribution as D;
        match d {
            D::Dirac { m } => Repr::Dirac { m },
            D::UniformRange { m } => Repr::UniformRange { m },
            D::Binomial { n, pi } => Repr::Binomial { n, pi },
            D::Poisson { lambda } => Repr::Poisson { lambda },
            D::NegBinomial { r, pi } => Repr::NegBinomial { r, pi },
            D::TwoPoint { pi, d } => Repr::TwoPoint { pi, d },
            D::Explicit { pmf } => Repr::Explicit { pmf },
        }
    }
}

fn check_prob(field: &str, p: f64) -> Result<()> {
    if p.is_finite() && (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(invalid(field, format!("{p} is not a probability")))
    }
}

fn check_unit(x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Domain { x })
    }
}

impl OffspringDistribution {
    /// Point mass at `m`.
    pub fn dirac(m: u32) -> Result<Self> {
        Self::Dirac { m }.validated()
    }

    /// Uniform on `{1, ..., m}`.
    pub fn uniform_range(m: u32) -> Result<Self> {
        Self::UniformRange { m }.validated()
    }

    /// Binomial(n, pi).
    pub fn binomial(n: u32, pi: f64) -> Result<Self> {
        Self::Binomial { n, pi }.validated()
    }

    /// Poisson(lambda).
    pub fn poisson(lambda: f64) -> Result<Self> {
        Self::Poisson { lambda }.validated()
    }

    /// Negative binomial with pgf `pi^r (1 - (1 - pi) x)^(-r)`.
    pub fn neg_binomial(r: u32, pi: f64) -> Result<Self> {
        Self::NegBinomial { r, pi }.validated()
    }

    /// Geometric(pi), the negative binomial with `r = 1`.
    pub fn geometric(pi: f64) -> Result<Self> {
        Self::neg_binomial(1, pi)
    }

    /// Two-point law on `{0, d}`.
    pub fn two_point(pi: f64, d: u32) -> Result<Self> {
        Self::TwoPoint { pi, d }.validated()
    }

    /// Finite explicit pmf.
    pub fn explicit(pmf: Vec<f64>) -> Result<Self> {
        Self::Explicit { pmf }.validated()
    }

    fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    /// Checks parameter domains and the requirement that `P(0 children) < 1`.
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Dirac { m } | Self::UniformRange { m } => {
                if *m == 0 {
                    return Err(invalid("m", "must be a positive integer"));
                }
            }
            Self::Binomial { n, pi } => {
                if *n == 0 {
                    return Err(invalid("n", "must be a positive integer"));
                }
                check_prob("pi", *pi)?;
            }
            Self::Poisson { lambda } => {
                if !(lambda.is_finite() && *lambda > 0.0) {
                    return Err(invalid("lambda", "must be a positive real"));
                }
            }
            Self::NegBinomial { r, pi } => {
                if *r == 0 {
                    return Err(invalid("r", "must be a positive integer"));
                }
                check_prob("pi", *pi)?;
                if *pi == 0.0 {
                    return Err(invalid("pi", "must be positive"));
                }
            }
            Self::TwoPoint { pi, d } => {
                check_prob("pi", *pi)?;
                if *d < 2 {
                    return Err(invalid("d", "must be at least 2"));
                }
            }
            Self::Explicit { pmf } => {
                if pmf.is_empty() {
                    return Err(invalid("pmf", "must be non-empty"));
                }
                for &p in pmf {
                    check_prob("pmf", p)?;
                }
                let total: f64 = pmf.iter().sum();
                if (total - 1.0).abs() > PMF_SUM_TOL {
                    return Err(invalid("pmf", format!("sums to {total}, not 1")));
                }
            }
        }
        if self.pmf(0) >= 1.0 {
            return Err(invalid(
                "family",
                "probability of no children must be below 1",
            ));
        }
        Ok(())
    }

    /// Short family name used in tables and error messages.
    pub fn family(&self) -> &'static str {
        match self {
            Self::Dirac { .. } => "dirac",
            Self::UniformRange { .. } => "uniform_range",
            Self::Binomial { .. } => "binomial",
            Self::Poisson { .. } => "poisson",
            Self::NegBinomial { .. } => "neg_binomial",
            Self::TwoPoint { .. } => "two_point",
            Self::Explicit { .. } => "explicit",
        }
    }

    /// Compact human-readable label such as `poisson(5)`.
    pub fn label(&self) -> String {
        match self {
            Self::Dirac { m } => format!("dirac({m})"),
            Self::UniformRange { m } => format!("uniform_range({m})"),
            Self::Binomial { n, pi } => format!("binomial({n};{pi})"),
            Self::Poisson { lambda } => format!("poisson({lambda})"),
            Self::NegBinomial { r, pi } => format!("neg_binomial({r};{pi})"),
            Self::TwoPoint { pi, d } => format!("two_point({pi};{d})"),
            Self::Explicit { pmf } => format!(
                "explicit({})",
                pmf.iter()
                    .map(|p| p.to_string())
                    .collect::<Vec<_>>()
                    .join(";")
            ),
        }
    }

    /// Probability of exactly `m` children.
    pub fn pmf(&self, m: u64) -> f64 {
        match *self {
            Self::Dirac { m: k } => f64::from(u8::from(m == u64::from(k))),
            Self::UniformRange { m: k } => {
                if (1..=u64::from(k)).contains(&m) {
                    1.0 / f64::from(k)
                } else {
                    0.0
                }
            }
            Self::Binomial { n, pi } => {
                let n = u64::from(n);
                if m > n {
                    0.0
                } else if pi == 0.0 {
                    f64::from(u8::from(m == 0))
                } else if pi == 1.0 {
                    f64::from(u8::from(m == n))
                } else {
                    (ln_binomial(n, m) + m as f64 * pi.ln() + (n - m) as f64 * (1.0 - pi).ln())
                        .exp()
                }
            }
            Self::Poisson { lambda } => (-lambda + m as f64 * lambda.ln() - ln_factorial(m)).exp(),
            Self::NegBinomial { r, pi } => {
                let r = u64::from(r);
                if pi == 1.0 {
                    f64::from(u8::from(m == 0))
                } else {
                    (ln_binomial(m + r - 1, m) + r as f64 * pi.ln() + m as f64 * (1.0 - pi).ln())
                        .exp()
                }
            }
            Self::TwoPoint { pi, d } => {
                if m == 0 {
                    1.0 - pi
                } else if m == u64::from(d) {
                    pi
                } else {
                    0.0
                }
            }
            Self::Explicit { ref pmf } => usize::try_from(m)
                .ok()
                .and_then(|i| pmf.get(i).copied())
                .unwrap_or(0.0),
        }
    }

    /// Mean number of children.
    pub fn mean(&self) -> f64 {
        match *self {
            Self::Dirac { m } => f64::from(m),
            Self::UniformRange { m } => (f64::from(m) + 1.0) / 2.0,
            Self::Binomial { n, pi } => f64::from(n) * pi,
            Self::Poisson { lambda } => lambda,
            Self::NegBinomial { r, pi } => f64::from(r) * (1.0 - pi) / pi,
            Self::TwoPoint { pi, d } => pi * f64::from(d),
            Self::Explicit { ref pmf } => pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum(),
        }
    }

    /// pgf `G(x) = sum_m x^m P(m)`, checked for `x` in [0, 1].
    pub fn pgf(&self, x: f64) -> Result<f64> {
        check_unit(x)?;
        Ok(self.pgf_clamped(x))
    }

    /// Derivative `G'(x)`, checked for `x` in [0, 1].
    pub fn pgf_derivative(&self, x: f64) -> Result<f64> {
        check_unit(x)?;
        Ok(self.pgf_derivative_clamped(x))
    }

    /// `G` at `x` clamped to [0, 1]; absorbs rounding in composed arguments.
    pub fn pgf_clamped(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        match *self {
            Self::Dirac { m } => x.powi(m as i32),
            Self::UniformRange { m } => {
                let mut acc = 0.0;
                let mut pow = 1.0;
                for _ in 0..m {
                    pow *= x;
                    acc += pow;
                }
                acc / f64::from(m)
            }
            Self::Binomial { n, pi } => ((1.0 - pi) + pi * x).powi(n as i32),
            Self::Poisson { lambda } => (lambda * (x - 1.0)).exp(),
            Self::NegBinomial { r, pi } => (pi / (1.0 - (1.0 - pi) * x)).powi(r as i32),
            Self::TwoPoint { pi, d } => (1.0 - pi) + pi * x.powi(d as i32),
            Self::Explicit { ref pmf } => pmf.iter().rev().fold(0.0, |acc, &p| acc * x + p),
        }
    }

    /// `G'` at `x` clamped to [0, 1].
    pub fn pgf_derivative_clamped(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        match *self {
            Self::Dirac { m } => f64::from(m) * x.powi(m as i32 - 1),
            Self::UniformRange { m } => {
                let mut acc = 0.0;
                let mut pow = 1.0;
                for k in 1..=m {
                    acc += f64::from(k) * pow;
                    pow *= x;
                }
                acc / f64::from(m)
            }
            Self::Binomial { n, pi } => {
                f64::from(n) * pi * ((1.0 - pi) + pi * x).powi(n as i32 - 1)
            }
            Self::Poisson { lambda } => lambda * (lambda * (x - 1.0)).exp(),
            Self::NegBinomial { r, pi } => {
                let base = 1.0 - (1.0 - pi) * x;
                f64::from(r) * (1.0 - pi) * pi.powi(r as i32) / base.powi(r as i32 + 1)
            }
            Self::TwoPoint { pi, d } => pi * f64::from(d) * x.powi(d as i32 - 1),
            Self::Explicit { ref pmf } => pmf
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (k, &p)| acc * x + k as f64 * p),
        }
    }

    /// Prepared sampler; build once and reuse for many draws.
    pub fn sampler(&self) -> OffspringSampler {
        let inner = match *self {
            Self::Dirac { m } => SamplerKind::Constant(u64::from(m)),
            Self::UniformRange { m } => SamplerKind::Uniform(u64::from(m)),
            Self::Binomial { n, pi } => SamplerKind::Binomial(
                rand_distr::Binomial::new(u64::from(n), pi).expect("validated binomial"),
            ),
            Self::Poisson { lambda } => {
                SamplerKind::Poisson(rand_distr::Poisson::new(lambda).expect("validated poisson"))
            }
            Self::NegBinomial { r, pi } => SamplerKind::NegBinomial {
                r,
                geometric: rand_distr::Geometric::new(pi).expect("validated geometric"),
            },
            Self::TwoPoint { pi, d } => SamplerKind::TwoPoint {
                pi,
                d: u64::from(d),
            },
            Self::Explicit { ref pmf } => {
                SamplerKind::Explicit(WeightedIndex::new(pmf).expect("validated pmf"))
            }
        };
        OffspringSampler { inner }
    }

    /// Draws one offspring count.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        self.sampler().sample(rng)
    }
}

/// Reusable sampler produced by [`OffspringDistribution::sampler`].
#[derive(Debug, Clone)]
pub struct OffspringSampler {
    inner: SamplerKind,
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Constant(u64),
    Uniform(u64),
    Binomial(rand_distr::Binomial),
    Poisson(rand_distr::Poisson<f64>),
    NegBinomial {
        r: u32,
        geometric: rand_distr::Geometric,
    },
    TwoPoint {
        pi: f64,
        d: u64,
    },
    Explicit(WeightedIndex<f64>),
}

impl Distribution<u64> for OffspringSampler {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match &self.inner {
            SamplerKind::Constant(m) => *m,
            SamplerKind::Uniform(m) => rng.random_range(1..=*m),
            SamplerKind::Binomial(b) => b.sample(rng),
            SamplerKind::Poisson(p) => p.sample(rng) as u64,
            SamplerKind::NegBinomial { r, geometric } => {
                (0..*r).map(|_| geometric.sample(rng)).sum()
            }
            SamplerKind::TwoPoint { pi, d } => {
                if rng.random::<f64>() < *pi {
                    *d
                } else {
                    0
                }
            }
            SamplerKind::Explicit(w) => w.sample(rng) as u64,
        }
    }
}
