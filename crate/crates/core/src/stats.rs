//! Scalar statistics: two-proportion Z-score, observed and theoretical
//! spiking efficiency (KL divergence, natural log), ability and the
//! regularity-learning verdict.

use serde::{Deserialize, Serialize};

use crate::distributions::DataDistribution;
use crate::error::{Error, Result};
use crate::geometry::{measure, Region};

pub const DEFAULT_ALPHA: f64 = 1e-10;

/// Spike tallies: `data` spikes on data samples (M), `random` spikes on
/// uniform samples (M'), both out of `n` draws.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpikeCounts {
    pub data: u64,
    pub random: u64,
    pub n: u64,
}

impl SpikeCounts {
    pub fn new(data: u64, random: u64, n: u64) -> Result<Self> {
        let c = SpikeCounts { data, random, n };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.data > self.n || self.random > self.n {
            return Err(Error::InvalidCounts(format!(
                "need 0 <= M, M' <= N and N >= 1, got M={}, M'={}, N={}",
                self.data, self.random, self.n
            )));
        }
        Ok(())
    }
}

/// Per-level tallies for levels `-1..=L`; index 0 holds level -1.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeveledCounts {
    pub data: Vec<u64>,
    pub random: Vec<u64>,
    pub n: u64,
}

impl LeveledCounts {
    pub fn new(data: Vec<u64>, random: Vec<u64>, n: u64) -> Result<Self> {
        let c = LeveledCounts { data, random, n };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.len() != self.random.len() || self.data.len() < 2 {
            return Err(Error::InvalidCounts("level vectors must match and cover -1 and 0".into()));
        }
        let sd: u64 = self.data.iter().sum();
        let sr: u64 = self.random.iter().sum();
        if self.n == 0 || sd != self.n || sr != self.n {
            return Err(Error::InvalidCounts(format!(
                "level counts must sum to N={}, got {sd} and {sr}",
                self.n
            )));
        }
        Ok(())
    }

    /// Top level `L`.
    pub fn top_level(&self) -> usize {
        self.data.len() - 2
    }

    /// Collapses levels `>= 0` into a single spike count.
    pub fn collapsed(&self) -> SpikeCounts {
        SpikeCounts {
            data: self.n - self.data[0],
            random: self.n - self.random[0],
            n: self.n,
        }
    }
}

/// Thresholds for the regularity verdict plus the smoothing constant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatConfig {
    pub alpha: f64,
    pub tau1: f64,
    pub tau2: f64,
}

impl StatConfig {
    /// `tau2` depends on the data space and has no default.
    pub fn new(tau2: f64) -> Self {
        StatConfig {
            alpha: DEFAULT_ALPHA,
            tau1: 2.0,
            tau2,
        }
    }
}

/// Two-proportion Z-test score of M spikes on data vs M' on random samples.
pub fn z_score(c: SpikeCounts) -> Result<f64> {
    c.validate()?;
    let n = c.n as f64;
    let total = c.data + c.random;
    if total == 0 || total == 2 * c.n {
        return Err(Error::DegenerateZ { total, n: c.n });
    }
    let s = total as f64;
    Ok((c.data as f64 - c.random as f64) * (2.0 * n / (s * (2.0 * n - s))).sqrt())
}

/// One `(m/n) ln((m+a)/(m'+a))` term of the observed KL sum.
#[inline]
fn kl_term(m: u64, m_prime: u64, n: f64, alpha: f64) -> f64 {
    let m = m as f64;
    (m / n) * ((m + alpha) / (m_prime as f64 + alpha)).ln()
}

/// Observed spiking efficiency `SE^(M, M', N)`.
pub fn observed_se(c: SpikeCounts, alpha: f64) -> f64 {
    let n = c.n as f64;
    kl_term(c.data, c.random, n, alpha) + kl_term(c.n - c.data, c.n - c.random, n, alpha)
}

/// Leveled observed efficiency, summed from level -1 up to `L`.
pub fn observed_se_leveled(c: &LeveledCounts, alpha: f64) -> f64 {
    let n = c.n as f64;
    c.data
        .iter()
        .zip(&c.random)
        .map(|(&m, &mp)| kl_term(m, mp, n, alpha))
        .sum()
}

/// Ability `SE * C_f = SE / |f|`.
pub fn ability(se: f64, size: u64) -> Result<f64> {
    if size < 1 {
        return Err(Error::InvalidSize(size));
    }
    Ok(se / size as f64)
}

/// Non-random (`|z| >= tau1`) and concise (`1/|f| >= tau2`).
pub fn learns_regularities(z: f64, size: u64, tau1: f64, tau2: f64) -> bool {
    z.abs() >= tau1 && size >= 1 && 1.0 / size as f64 >= tau2
}

/// `p ln(p/q)` with `0 ln 0 = 0`; `None` when `p > 0 = q`.
fn xlogx_ratio(p: f64, q: f64) -> Option<f64> {
    if p <= 0.0 {
        Some(0.0)
    } else if q <= 0.0 {
        None
    } else {
        Some(p * (p / q).ln())
    }
}

/// Binary KL divergence between spike probability `p` under the data and
/// `q` under the uniform null.
pub fn binary_kl(p: f64, q: f64) -> Result<f64> {
    let inside = xlogx_ratio(p, q);
    let outside = xlogx_ratio(1.0 - p, 1.0 - q);
    match (inside, outside) {
        (Some(a), Some(b)) => Ok((a + b).max(0.0)),
        _ => Err(Error::SingularRegion { measure: q, mass: p }),
    }
}

/// Theoretical efficiency of a function spiking exactly on `region`.
pub fn theoretical_se(dist: &DataDistribution, region: &Region) -> Result<f64> {
    let space = dist.space();
    let area = measure(region, space, dist.mc())?.value;
    let p = dist.mass(region)?;
    let q = area / space.measure();
    binary_kl(p, q).map_err(|_| Error::SingularRegion { measure: area, mass: p })
}

/// Upper bound `Omega |S| ln(Omega |S|)` on any spiking efficiency.
pub fn se_upper_bound(omega: f64, space_measure: f64) -> Result<f64> {
    let t = omega * space_measure;
    // tolerate rounding when omega is exactly 1/|S|
    if !(t >= 1.0 - 1e-12) {
        return Err(Error::InconsistentBound {
            omega,
            min: 1.0 / space_measure,
        });
    }
    let t = t.max(1.0);
    Ok(t * t.ln())
}
