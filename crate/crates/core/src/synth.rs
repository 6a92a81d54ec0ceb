//! Synthetic catastrophe bond datasets.
//!
//! Continuous predictors are drawn by inverse-CDF interpolation through five
//! quantile anchors (min, lower quartile, median, upper quartile, max), so the
//! target CDF is piecewise linear. Expected loss and attachment probability
//! are coupled through a Gaussian copula, which leaves both marginals intact.
//! Term's top quartile uses a rising density so that the distribution has a
//! second mode near its maximum; the anchors are still hit exactly.
//! Categorical predictors are drawn independently from level probabilities.
//! The response is a ground-truth function plus Gaussian noise, truncated at 0.

use rand::Rng as _;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::{BondFeatures, BondRecord, Coverage, Diversifier, RatingStatus, Trigger, Vendor};
use crate::rng::{derived_rng, stream};
use crate::schema::Dataset;

/// Values at cumulative probabilities 0, 0.25, 0.5, 0.75 and 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileAnchors(pub [f64; 5]);

impl QuantileAnchors {
    fn validate(&self, name: &str) -> Result<()> {
        let a = &self.0;
        if a.iter().any(|v| !v.is_finite()) || a.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParams(format!("{name} anchors must be finite and strictly increasing")));
        }
        Ok(())
    }

    /// Piecewise-linear quantile function.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let j = ((u * 4.0).floor() as usize).min(3);
        let t = u * 4.0 - j as f64;
        self.0[j] + t * (self.0[j + 1] - self.0[j])
    }

    /// Piecewise-linear CDF through the anchors.
    pub fn cdf(&self, x: f64) -> f64 {
        let a = &self.0;
        if x <= a[0] {
            return 0.0;
        }
        if x >= a[4] {
            return 1.0;
        }
        let j = (0..4).find(|&j| x < a[j + 1]).unwrap_or(3);
        (j as f64 + (x - a[j]) / (a[j + 1] - a[j])) / 4.0
    }
}

/// Largest gap between the empirical CDF of `sample` and `cdf`.
pub fn ks_distance(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < s.len() {
        let mut j = i;
        while j + 1 < s.len() && s[j + 1] == s[i] {
            j += 1;
        }
        let f = cdf(s[i]);
        d = d.max((f - i as f64 / n).abs()).max(((j + 1) as f64 / n - f).abs());
        i = j + 1;
    }
    d
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginals {
    pub ap: QuantileAnchors,
    pub el: QuantileAnchors,
    pub size: QuantileAnchors,
    pub term: QuantileAnchors,
    /// Tilt of term's top-quartile density, in [0, 1); 0 keeps it uniform.
    pub term_tilt: f64,
    /// Gaussian copula correlation between expected loss and attachment
    /// probability.
    pub el_ap_correlation: f64,
    pub coverage: Vec<f64>,
    pub diversifier: Vec<f64>,
    pub rating_status: Vec<f64>,
    pub trigger: Vec<f64>,
    pub vendor: Vec<f64>,
}

fn shares(counts: &[u32]) -> Vec<f64> {
    let total: u32 = counts.iter().sum();
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

impl Default for Marginals {
    /// Market-wide figures for 934 tranches.
    fn default() -> Self {
        Marginals {
            ap: QuantileAnchors([0.02, 1.36, 2.51, 4.68, 25.04]),
            el: QuantileAnchors([0.01, 1.11, 1.88, 3.34, 17.35]),
            size: QuantileAnchors([3.0, 75.0, 130.0, 200.0, 1500.0]),
            term: QuantileAnchors([1.00, 3.02, 3.18, 4.02, 5.12]),
            term_tilt: 0.4,
            el_ap_correlation: 0.9,
            coverage: shares(&[303, 627, 4]),
            diversifier: shares(&[73, 66, 528, 80, 184, 3]),
            rating_status: shares(&[435, 499]),
            trigger: shares(&[511, 29, 325, 23, 22, 24]),
            vendor: shares(&[741, 4, 42, 141, 6]),
        }
    }
}

impl Marginals {
    fn validate(&self) -> Result<()> {
        self.ap.validate("ap")?;
        self.el.validate("el")?;
        self.size.validate("size")?;
        self.term.validate("term")?;
        if self.el.0[0] < 0.0 || self.el.0[4] > 100.0 || self.ap.0[0] < 0.0 || self.ap.0[4] > 100.0 {
            return Err(Error::InvalidParams("el and ap anchors must lie within [0, 100]".into()));
        }
        if self.size.0[0] <= 0.0 || self.term.0[0] <= 0.0 {
            return Err(Error::InvalidParams("size and term anchors must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.term_tilt) {
            return Err(Error::InvalidParams("term_tilt must lie in [0, 1)".into()));
        }
        if !(-1.0..=1.0).contains(&self.el_ap_correlation) {
            return Err(Error::InvalidParams("el_ap_correlation must lie in [-1, 1]".into()));
        }
        let tables: [(&str, &[f64], usize); 5] = [
            ("coverage", &self.coverage, Coverage::ALL.len()),
            ("diversifier", &self.diversifier, Diversifier::ALL.len()),
            ("rating_status", &self.rating_status, RatingStatus::ALL.len()),
            ("trigger", &self.trigger, Trigger::ALL.len()),
            ("vendor", &self.vendor, Vendor::ALL.len()),
        ];
        for (name, probs, levels) in tables {
            if probs.len() != levels {
                return Err(Error::InvalidParams(format!("{name} needs {levels} level probabilities")));
            }
            if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParams(format!("{name} probabilities must be non-negative and sum to 1")));
            }
        }
        Ok(())
    }

    /// Term quantile: the lower three quartiles interpolate linearly, the top
    /// quartile has CDF `(1 - tilt) s + tilt s^2` in its relative position `s`.
    pub fn term_quantile(&self, u: f64) -> f64 {
        let a = &self.term.0;
        if u < 0.75 || self.term_tilt == 0.0 {
            return self.term.quantile(u);
        }
        let v = ((u - 0.75) / 0.25).min(1.0);
        let t = self.term_tilt;
        let s = (-(1.0 - t) + ((1.0 - t) * (1.0 - t) + 4.0 * t * v).sqrt()) / (2.0 * t);
        a[3] + s * (a[4] - a[3])
    }
}

/// Spread as a linear function of the predictors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearTruth {
    pub intercept: f64,
    pub ap: f64,
    pub el: f64,
    pub size: f64,
    pub term: f64,
    /// Additive offset per level, in level order; empty means all zero.
    #[serde(default)]
    pub coverage: Vec<f64>,
    #[serde(default)]
    pub diversifier: Vec<f64>,
    #[serde(default)]
    pub rating_status: Vec<f64>,
    #[serde(default)]
    pub trigger: Vec<f64>,
    #[serde(default)]
    pub vendor: Vec<f64>,
}

impl LinearTruth {
    /// Only an expected loss slope.
    pub fn el_only(slope: f64) -> Self {
        LinearTruth {
            intercept: 0.0,
            ap: 0.0,
            el: slope,
            size: 0.0,
            term: 0.0,
            coverage: vec![],
            diversifier: vec![],
            rating_status: vec![],
            trigger: vec![],
            vendor: vec![],
        }
    }

    fn offset(table: &[f64], code: usize) -> f64 {
        table.get(code).copied().unwrap_or(0.0)
    }

    fn eval(&self, r: &BondFeatures) -> f64 {
        self.intercept
            + self.ap * r.ap
            + self.el * r.el
            + self.size * r.size
            + self.term * r.term
            + Self::offset(&self.coverage, r.coverage.code())
            + Self::offset(&self.diversifier, r.diversifier.code())
            + Self::offset(&self.rating_status, r.rating_status.code())
            + Self::offset(&self.trigger, r.trigger.code())
            + Self::offset(&self.vendor, r.vendor.code())
    }
}

/// `intercept + el·EL + ap·AP − size_curvature·(ln size − ln size_center)²
/// + diversifier offset + bump·[indemnity trigger and aggregate coverage]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearTruth {
    pub intercept: f64,
    pub el: f64,
    pub ap: f64,
    pub size_curvature: f64,
    pub size_center: f64,
    pub diversifier: Vec<f64>,
    pub indemnity_aggregate_bump: f64,
}

impl Default for NonlinearTruth {
    fn default() -> Self {
        NonlinearTruth {
            intercept: 4.0,
            el: 0.4,
            ap: 0.12,
            size_curvature: 1.0,
            size_center: 130.0,
            // APAC, Europe, MultiPeril, NAQuake, NAWind, SAQuake
            diversifier: vec![0.0, -0.5, 0.5, 1.5, 2.5, 2.0],
            indemnity_aggregate_bump: 5.0,
        }
    }
}

impl NonlinearTruth {
    fn eval(&self, r: &BondFeatures) -> f64 {
        let dev = r.size.ln() - self.size_center.ln();
        let bump = if r.trigger == Trigger::Indemnity && r.coverage == Coverage::Aggregate {
            self.indemnity_aggregate_bump
        } else {
            0.0
        };
        self.intercept + self.el * r.el + self.ap * r.ap - self.size_curvature * dev * dev
            + self.diversifier.get(r.diversifier.code()).copied().unwrap_or(0.0)
            + bump
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroundTruth {
    Linear(LinearTruth),
    Nonlinear(NonlinearTruth),
}

impl Default for GroundTruth {
    fn default() -> Self {
        GroundTruth::Nonlinear(NonlinearTruth::default())
    }
}

impl GroundTruth {
    /// Noise-free spread for one set of predictors.
    pub fn eval(&self, r: &BondFeatures) -> f64 {
        match self {
            GroundTruth::Linear(t) => t.eval(r),
            GroundTruth::Nonlinear(t) => t.eval(r),
        }
    }
}

/// The default nonlinear ground truth.
pub fn default_ground_truth(r: &BondFeatures) -> f64 {
    NonlinearTruth::default().eval(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n: usize,
    pub seed: u64,
    #[serde(default)]
    pub marginals: Marginals,
    #[serde(default)]
    pub truth: GroundTruth,
    pub noise_sd: f64,
}

pub const DEFAULT_NOISE_SD: f64 = 1.0;
pub const DEFAULT_ROWS: usize = 934;

impl GeneratorConfig {
    pub fn new(n: usize, seed: u64) -> Self {
        GeneratorConfig {
            n,
            seed,
            marginals: Marginals::default(),
            truth: GroundTruth::default(),
            noise_sd: DEFAULT_NOISE_SD,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParams("n must be at least 1".into()));
        }
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return Err(Error::InvalidParams("noise_sd must be finite and non-negative".into()));
        }
        self.marginals.validate()
    }
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + libm::erf(z / std::f64::consts::SQRT_2))
}

fn level<T: Copy>(all: &[T], dist: &WeightedIndex<f64>, rng: &mut crate::rng::Rng) -> T {
    all[dist.sample(rng)]
}

/// Draws `cfg.n` records. Identical configurations give identical output.
pub fn generate_records(cfg: &GeneratorConfig) -> Result<Vec<BondRecord>> {
    cfg.validate()?;
    let m = &cfg.marginals;
    let weights = |p: &[f64]| WeightedIndex::new(p.to_vec()).map_err(|e| Error::InvalidParams(e.to_string()));
    let coverage = weights(&m.coverage)?;
    let diversifier = weights(&m.diversifier)?;
    let rating = weights(&m.rating_status)?;
    let trigger = weights(&m.trigger)?;
    let vendor = weights(&m.vendor)?;
    let rho = m.el_ap_correlation;
    let mut rng = derived_rng(cfg.seed, stream::SYNTH, 0);
    let mut out = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let z_el: f64 = StandardNormal.sample(&mut rng);
        let e: f64 = StandardNormal.sample(&mut rng);
        let z_ap = rho * z_el + (1.0 - rho * rho).sqrt() * e;
        let features = BondFeatures {
            el: m.el.quantile(normal_cdf(z_el)),
            ap: m.ap.quantile(normal_cdf(z_ap)),
            size: m.size.quantile(rng.random()),
            term: m.term_quantile(rng.random()),
            coverage: level(Coverage::ALL, &coverage, &mut rng),
            diversifier: level(Diversifier::ALL, &diversifier, &mut rng),
            rating_status: level(RatingStatus::ALL, &rating, &mut rng),
            trigger: level(Trigger::ALL, &trigger, &mut rng),
            vendor: level(Vendor::ALL, &vendor, &mut rng),
        };
        let noise: f64 = StandardNormal.sample(&mut rng);
        let spread = (cfg.truth.eval(&features) + cfg.noise_sd * noise).max(0.0);
        out.push(BondRecord { spread, features });
    }
    Ok(out)
}

pub fn generate(cfg: &GeneratorConfig) -> Result<Dataset> {
    let records = generate_records(cfg)?;
    Ok(Dataset::from_records(&records)?.with_provenance(format!("synthetic, n={}, seed={}", cfg.n, cfg.seed)))
}
