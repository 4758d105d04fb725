//! Noise distributions used by the synthetic experiments.
//!
//! Samplers favor simple, oracle-checkable constructions over speed: the
//! chi-square is a sum of squared standard normals, the Rayleigh inverts its
//! CDF, and the binomial sums Bernoulli trials. Batch sizes here are small
//! enough that none of this matters for runtime.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistSpec {
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, sd: f64 },
    Exponential { rate: f64 },
    ChiSquare { dof: u32 },
    Rayleigh { scale: f64 },
    Binomial { trials: u32, prob: f64 },
    LogNormal { mu: f64, sigma: f64 },
    Shifted { inner: Box<DistSpec>, offset: f64 },
}

/// Standard normal draw via Box-Muller; consumes exactly two uniforms.
pub fn standard_normal(rng: &mut RngState) -> f64 {
    let u1 = 1.0 - rng.next_f64(); // (0, 1], keeps ln finite
    let u2 = rng.next_f64();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

impl DistSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            DistSpec::Uniform { lo, hi } => {
                if !(hi > lo) {
                    return Err(Error::param(format!("uniform needs hi > lo, got [{lo}, {hi}]")));
                }
            }
            DistSpec::Normal { sd, .. } => {
                if !(*sd > 0.0) {
                    return Err(Error::param(format!("normal needs sd > 0, got {sd}")));
                }
            }
            DistSpec::Exponential { rate } => {
                if !(*rate > 0.0) {
                    return Err(Error::param(format!("exponential needs rate > 0, got {rate}")));
                }
            }
            DistSpec::ChiSquare { dof } => {
                if *dof < 1 {
                    return Err(Error::param("chi-square needs dof >= 1"));
                }
            }
            DistSpec::Rayleigh { scale } => {
                if !(*scale > 0.0) {
                    return Err(Error::param(format!("rayleigh needs scale > 0, got {scale}")));
                }
            }
            DistSpec::Binomial { prob, .. } => {
                if !(0.0..=1.0).contains(prob) {
                    return Err(Error::param(format!("binomial needs prob in [0,1], got {prob}")));
                }
            }
            DistSpec::LogNormal { sigma, .. } => {
                if !(*sigma > 0.0) {
                    return Err(Error::param(format!("log-normal needs sigma > 0, got {sigma}")));
                }
            }
            DistSpec::Shifted { inner, offset } => {
                if !offset.is_finite() {
                    return Err(Error::param("shift offset must be finite"));
                }
                inner.validate()?;
            }
        }
        Ok(())
    }

    fn draw(&self, rng: &mut RngState) -> f64 {
        match self {
            DistSpec::Uniform { lo, hi } => lo + (hi - lo) * rng.next_f64(),
            DistSpec::Normal { mean, sd } => mean + sd * standard_normal(rng),
            DistSpec::Exponential { rate } => -(1.0 - rng.next_f64()).ln() / rate,
            DistSpec::ChiSquare { dof } => (0..*dof)
                .map(|_| {
                    let z = standard_normal(rng);
                    z * z
                })
                .sum(),
            DistSpec::Rayleigh { scale } => {
                scale * (-2.0 * (1.0 - rng.next_f64()).ln()).sqrt()
            }
            DistSpec::Binomial { trials, prob } => {
                (0..*trials).filter(|_| rng.next_f64() < *prob).count() as f64
            }
            DistSpec::LogNormal { mu, sigma } => (mu + sigma * standard_normal(rng)).exp(),
            DistSpec::Shifted { inner, offset } => inner.draw(rng) + offset,
        }
    }

    /// Draws `n` i.i.d. samples, consuming the stream deterministically.
    pub fn sample(&self, n: usize, rng: &mut RngState) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::param("sample count must be >= 1"));
        }
        self.validate()?;
        Ok((0..n).map(|_| self.draw(rng)).collect())
    }

    /// Parses a compact CLI spec, e.g. `exp:1`, `uniform:-1,1`,
    /// `binom:20,0.3`, or `lognormal:1,0.6+1` (a trailing `+c` shifts by c).
    pub fn parse(text: &str) -> Result<DistSpec> {
        let bad = |msg: &str| Error::param(format!("noise spec '{text}': {msg}"));
        let (name, rest) = text
            .split_once(':')
            .ok_or_else(|| bad("expected name:params"))?;

        // A shift suffix must come after the last parameter.
        let (params, offset) = match rest.rfind(['+']) {
            Some(pos) if pos > 0 => {
                let off: f64 = rest[pos + 1..]
                    .parse()
                    .map_err(|_| bad("bad shift offset"))?;
                (&rest[..pos], Some(off))
            }
            _ => (rest, None),
        };
        let nums: Vec<f64> = params
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad("non-numeric parameter"))?;

        let arg = |i: usize| -> Result<f64> {
            nums.get(i).copied().ok_or_else(|| bad("missing parameter"))
        };
        let spec = match name.trim().to_ascii_lowercase().as_str() {
            "uniform" | "unif" => DistSpec::Uniform {
                lo: arg(0)?,
                hi: arg(1)?,
            },
            "normal" | "gauss" => DistSpec::Normal {
                mean: arg(0)?,
                sd: arg(1)?,
            },
            "exp" | "exponential" => DistSpec::Exponential { rate: arg(0)? },
            "chisq" | "chisquare" => DistSpec::ChiSquare {
                dof: arg(0)? as u32,
            },
            "rayl" | "rayleigh" => DistSpec::Rayleigh { scale: arg(0)? },
            "binom" | "binomial" => DistSpec::Binomial {
                trials: arg(0)? as u32,
                prob: arg(1)?,
            },
            "lognormal" | "lognorm" => DistSpec::LogNormal {
                mu: arg(0)?,
                sigma: arg(1)?,
            },
            other => return Err(bad(&format!("unknown distribution '{other}'"))),
        };
        let spec = match offset {
            Some(offset) => DistSpec::Shifted {
                inner: Box::new(spec),
                offset,
            },
            None => spec,
        };
        spec.validate()?;
        Ok(spec)
    }
}
