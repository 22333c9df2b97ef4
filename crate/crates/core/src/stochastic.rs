//! Transmission-time laws and the seeded random streams that drive them.
//!
//! Every [`DistributionSpec`] knows its exact mean and variance, which the
//! closed-form analytics and the MCA rule consume, and can draw strictly
//! positive samples from an [`RngStream`].
//!
//! Streams are ChaCha8 generators. Replicate `r` of an experiment with base
//! seed `b` uses the seed returned by [`derive_seed`], a splitmix64 mix of
//! `b` and `r`, so replicates never share a stream.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Below this mu/sigma the positive part of the Gaussian has mass under 1e-6.
pub const TRUNCATED_GAUSSIAN_MIN_RATIO: f64 = -4.75;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// One round of the splitmix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for replicate `replicate` of an experiment started from `base`:
/// `splitmix64(base ^ splitmix64(replicate))`.
pub fn derive_seed(base: u64, replicate: u64) -> u64 {
    splitmix64(base ^ splitmix64(replicate))
}

/// A single-owner reproducible random stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn for_replicate(base: u64, replicate: u64) -> Self {
        Self::new(derive_seed(base, replicate))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on the open interval (0, 1); consumes one 64-bit draw.
    pub fn open01(&mut self) -> f64 {
        ((self.next_u64() >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
    }

    /// Uniform index in `0..n` from a single 64-bit draw (multiply-shift).
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }
}

/// Exact first two moments of a law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
}

impl Moments {
    pub fn second_moment(&self) -> f64 {
        self.variance + self.mean * self.mean
    }

    /// Squared coefficient of variation.
    pub fn scv(&self) -> f64 {
        self.variance / (self.mean * self.mean)
    }
}

/// A parametric transmission-time law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistributionSpec {
    Deterministic {
        value: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    Exponential {
        mean: f64,
    },
    /// Gaussian with parameters `mu`, `sigma` conditioned on being positive.
    TruncatedGaussian {
        mu: f64,
        sigma: f64,
    },
    /// With probability `p` an exponential of mean `mean1`, else of mean `mean2`.
    Hyperexponential {
        p: f64,
        mean1: f64,
        mean2: f64,
    },
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{name} must be finite and > 0, got {v}")))
    }
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Upper tail 1 - Phi(x).
fn std_normal_sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

impl DistributionSpec {
    pub fn deterministic(value: f64) -> Self {
        Self::Deterministic { value }
    }

    pub fn uniform(lo: f64, hi: f64) -> Self {
        Self::Uniform { lo, hi }
    }

    pub fn exponential(mean: f64) -> Self {
        Self::Exponential { mean }
    }

    pub fn truncated_gaussian(mu: f64, sigma: f64) -> Self {
        Self::TruncatedGaussian { mu, sigma }
    }

    /// Parameter check only; sampling adds the acceptance-rate check.
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Deterministic { value } => positive("value", value),
            Self::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi > lo) {
                    return Err(Error::Parameter(format!(
                        "uniform needs 0 <= lo < hi, got lo={lo}, hi={hi}"
                    )));
                }
                Ok(())
            }
            Self::Exponential { mean } => positive("mean", mean),
            Self::TruncatedGaussian { mu, sigma } => {
                positive("sigma", sigma)?;
                if !mu.is_finite() {
                    return Err(Error::Parameter(format!("mu must be finite, got {mu}")));
                }
                Ok(())
            }
            Self::Hyperexponential { p, mean1, mean2 } => {
                if !(p > 0.0 && p < 1.0) {
                    return Err(Error::Parameter(format!("p must lie in (0,1), got {p}")));
                }
                positive("mean1", mean1)?;
                positive("mean2", mean2)
            }
        }
    }

    /// Validates parameters and that sampling terminates in practice.
    pub fn validate_sampling(&self) -> Result<()> {
        self.validate()?;
        if let Self::TruncatedGaussian { mu, sigma } = *self {
            let ratio = mu / sigma;
            if ratio <= TRUNCATED_GAUSSIAN_MIN_RATIO {
                return Err(Error::RejectedConfiguration { ratio });
            }
        }
        Ok(())
    }

    /// Exact mean and variance. For the truncated Gaussian these are the
    /// moments after conditioning on (0, inf).
    pub fn moments(&self) -> Result<Moments> {
        self.validate()?;
        Ok(self.moments_unchecked())
    }

    pub fn mean(&self) -> Result<f64> {
        self.moments().map(|m| m.mean)
    }

    pub fn variance(&self) -> Result<f64> {
        self.moments().map(|m| m.variance)
    }

    fn moments_unchecked(&self) -> Moments {
        match *self {
            Self::Deterministic { value } => Moments {
                mean: value,
                variance: 0.0,
            },
            Self::Uniform { lo, hi } => Moments {
                mean: 0.5 * (lo + hi),
                variance: (hi - lo) * (hi - lo) / 12.0,
            },
            Self::Exponential { mean } => Moments {
                mean,
                variance: mean * mean,
            },
            Self::TruncatedGaussian { mu, sigma } => {
                let alpha = -mu / sigma;
                let tail = std_normal_sf(alpha);
                let lambda = std_normal_pdf(alpha) / tail;
                Moments {
                    mean: mu + sigma * lambda,
                    variance: sigma * sigma * (1.0 + alpha * lambda - lambda * lambda),
                }
            }
            Self::Hyperexponential { p, mean1, mean2 } => {
                let mean = p * mean1 + (1.0 - p) * mean2;
                let second = 2.0 * (p * mean1 * mean1 + (1.0 - p) * mean2 * mean2);
                Moments {
                    mean,
                    variance: second - mean * mean,
                }
            }
        }
    }

    /// One strictly positive draw.
    pub fn sample(&self, rng: &mut RngStream) -> Result<f64> {
        self.validate_sampling()?;
        Ok(self.draw(rng))
    }

    /// Draw without re-validating. The spec must have passed
    /// [`validate_sampling`](Self::validate_sampling).
    pub fn draw(&self, rng: &mut RngStream) -> f64 {
        match *self {
            Self::Deterministic { value } => value,
            Self::Uniform { lo, hi } => lo + (hi - lo) * rng.open01(),
            Self::Exponential { mean } => -mean * rng.open01().ln(),
            Self::TruncatedGaussian { mu, sigma } => loop {
                let x = mu + sigma * rng.standard_normal();
                if x > 0.0 {
                    break x;
                }
            },
            Self::Hyperexponential { p, mean1, mean2 } => {
                let mean = if rng.open01() < p { mean1 } else { mean2 };
                -mean * rng.open01().ln()
            }
        }
    }

    /// Same family with every time parameter multiplied by `factor`, so the
    /// mean scales by `factor` and the variance by `factor²`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        positive("scale factor", factor)?;
        let out = match *self {
            Self::Deterministic { value } => Self::Deterministic { value: value * factor },
            Self::Uniform { lo, hi } => Self::Uniform {
                lo: lo * factor,
                hi: hi * factor,
            },
            Self::Exponential { mean } => Self::Exponential { mean: mean * factor },
            Self::TruncatedGaussian { mu, sigma } => Self::TruncatedGaussian {
                mu: mu * factor,
                sigma: sigma * factor,
            },
            Self::Hyperexponential { p, mean1, mean2 } => Self::Hyperexponential {
                p,
                mean1: mean1 * factor,
                mean2: mean2 * factor,
            },
        };
        out.validate()?;
        Ok(out)
    }

    /// A law of the same family whose mean is `eta1` times this one's and
    /// whose variance is `eta2` times this one's (`eta2` defaults to
    /// `eta1²`, i.e. plain scaling).
    ///
    /// The truncated Gaussian scales its pre-truncation parameters. Families
    /// with a single free parameter reject an `eta2` they cannot honour.
    pub fn with_moment_ratios(&self, eta1: f64, eta2: Option<f64>) -> Result<Self> {
        positive("eta1", eta1)?;
        let Some(eta2) = eta2 else {
            return self.scaled(eta1);
        };
        if !(eta2.is_finite() && eta2 >= 0.0) {
            return Err(Error::Parameter(format!("eta2 must be >= 0, got {eta2}")));
        }
        let m = self.moments()?;
        match *self {
            Self::Deterministic { value } => Ok(Self::Deterministic { value: value * eta1 }),
            Self::Exponential { .. } => {
                if ((eta1 * eta1) - eta2).abs() > 1e-9 * eta2.max(1.0) {
                    return Err(Error::Parameter(format!(
                        "exponential monitor law fixes eta2 = eta1^2 = {}, got {eta2}",
                        eta1 * eta1
                    )));
                }
                self.scaled(eta1)
            }
            Self::Uniform { .. } => {
                let mean = m.mean * eta1;
                let half = (3.0 * m.variance * eta2).sqrt();
                let out = Self::Uniform {
                    lo: mean - half,
                    hi: mean + half,
                };
                out.validate().map_err(|_| {
                    Error::Parameter(format!(
                        "no nonnegative uniform law has mean {mean} and variance {}",
                        m.variance * eta2
                    ))
                })?;
                Ok(out)
            }
            Self::TruncatedGaussian { mu, sigma } => {
                let out = Self::TruncatedGaussian {
                    mu: mu * eta1,
                    sigma: sigma * eta2.sqrt(),
                };
                out.validate()?;
                Ok(out)
            }
            Self::Hyperexponential { .. } => fit_hyperexponential(m.mean * eta1, m.variance * eta2),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Deterministic { .. } => "det",
            Self::Uniform { .. } => "unif",
            Self::Exponential { .. } => "exp",
            Self::TruncatedGaussian { .. } => "tnorm",
            Self::Hyperexponential { .. } => "hyperexp",
        }
    }
}

/// Balanced-means two-phase hyperexponential with the given mean and
/// variance: with `c² = var/mean²`, `p = (1 + sqrt((c²-1)/(c²+1)))/2`,
/// `mean1 = mean/(2p)`, `mean2 = mean/(2(1-p))`.
pub fn fit_hyperexponential(mean: f64, variance: f64) -> Result<DistributionSpec> {
    positive("mean", mean)?;
    if !variance.is_finite() {
        return Err(Error::Parameter(format!("variance must be finite, got {variance}")));
    }
    let scv = variance / (mean * mean);
    if scv <= 1.0 {
        return Err(Error::InfeasibleFit { scv });
    }
    let p = 0.5 * (1.0 + ((scv - 1.0) / (scv + 1.0)).sqrt());
    let spec = DistributionSpec::Hyperexponential {
        p,
        mean1: mean / (2.0 * p),
        mean2: mean / (2.0 * (1.0 - p)),
    };
    spec.validate()?;
    Ok(spec)
}

impl fmt::Display for DistributionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::Deterministic { value } => write!(f, "det(value={value})"),
            Self::Uniform { lo, hi } => write!(f, "unif(lo={lo}, hi={hi})"),
            Self::Exponential { mean } => write!(f, "exp(mean={mean})"),
            Self::TruncatedGaussian { mu, sigma } => write!(f, "tnorm(mu={mu}, sigma={sigma})"),
            Self::Hyperexponential { p, mean1, mean2 } => {
                write!(f, "hyperexp(p={p}, mean1={mean1}, mean2={mean2})")
            }
        }
    }
}

struct Args<'a> {
    kind: &'a str,
    positional: Vec<f64>,
    named: Vec<(&'a str, f64)>,
}

impl<'a> Args<'a> {
    fn parse(text: &'a str) -> Result<Self> {
        let bad = || Error::Parameter(format!("malformed distribution `{text}`"));
        let text = text.trim();
        let open = text.find('(').ok_or_else(bad)?;
        let body = text[open + 1..].strip_suffix(')').ok_or_else(bad)?;
        let kind = text[..open].trim();
        let mut positional = Vec::new();
        let mut named = Vec::new();
        for part in body.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let number = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parameter(format!("`{s}` is not a number in `{text}`")))
            };
            match part.split_once('=') {
                Some((k, v)) => named.push((k.trim(), number(v)?)),
                None => {
                    if !named.is_empty() {
                        return Err(Error::Parameter(format!(
                            "positional argument after named one in `{text}`"
                        )));
                    }
                    positional.push(number(part)?)
                }
            }
        }
        Ok(Self {
            kind,
            positional,
            named,
        })
    }

    /// Resolves the argument list against one of several accepted signatures.
    fn bind(&self, signatures: &[&[&str]]) -> Result<(usize, Vec<f64>)> {
        let total = self.positional.len() + self.named.len();
        'sig: for (idx, sig) in signatures.iter().enumerate() {
            if sig.len() != total || self.positional.len() > sig.len() {
                continue;
            }
            let mut vals = vec![f64::NAN; sig.len()];
            vals[..self.positional.len()].copy_from_slice(&self.positional);
            let mut seen = vec![false; sig.len()];
            seen[..self.positional.len()].fill(true);
            for (key, v) in &self.named {
                match sig.iter().position(|s| s == key) {
                    Some(i) if !seen[i] => {
                        vals[i] = *v;
                        seen[i] = true;
                    }
                    _ => continue 'sig,
                }
            }
            return Ok((idx, vals));
        }
        let expected: Vec<String> = signatures
            .iter()
            .map(|s| format!("{}({})", self.kind, s.join(", ")))
            .collect();
        Err(Error::Parameter(format!(
            "bad arguments for `{}`; expected one of {}",
            self.kind,
            expected.join(" | ")
        )))
    }
}

impl FromStr for DistributionSpec {
    type Err = Error;

    /// Accepts `det(1)`, `unif(lo=0, hi=10)`, `exp(mean=1)`,
    /// `tnorm(mu=50, sigma=5)`, `tnorm(mean=50, var=25)` (pre-truncation),
    /// `hyperexp(mean=20, var=1300)` (balanced-means fit) and
    /// `hyperexp(p=.., mean1=.., mean2=..)`.
    fn from_str(s: &str) -> Result<Self> {
        let args = Args::parse(s)?;
        let spec = match args.kind {
            "det" | "deterministic" => {
                let (_, v) = args.bind(&[&["value"]])?;
                Self::Deterministic { value: v[0] }
            }
            "unif" | "uniform" => {
                let (_, v) = args.bind(&[&["lo", "hi"]])?;
                Self::Uniform { lo: v[0], hi: v[1] }
            }
            "exp" | "exponential" => {
                let (_, v) = args.bind(&[&["mean"]])?;
                Self::Exponential { mean: v[0] }
            }
            "tnorm" => match args.bind(&[&["mu", "sigma"], &["mean", "var"]])? {
                (0, v) => Self::TruncatedGaussian { mu: v[0], sigma: v[1] },
                (_, v) => Self::TruncatedGaussian {
                    mu: v[0],
                    sigma: v[1].sqrt(),
                },
            },
            "hyperexp" => match args.bind(&[&["mean", "var"], &["p", "mean1", "mean2"]])? {
                (0, v) => return fit_hyperexponential(v[0], v[1]),
                (_, v) => Self::Hyperexponential {
                    p: v[0],
                    mean1: v[1],
                    mean2: v[2],
                },
            },
            other => {
                return Err(Error::Parameter(format!(
                    "unknown distribution kind `{other}` (det, unif, exp, tnorm, hyperexp)"
                )))
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}
