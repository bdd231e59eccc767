//! Geological leads, information purchases and belief updates.
//!
//! A lead's value (USD MM) is log-normal. Agents never see the realized
//! value; they hold a Gaussian belief over its logarithm and sharpen it by
//! buying signals `ln(value) + noise`, which keeps the update conjugate.
//! Competing bidders draw independent signals on the same lead.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::csv_error;
use crate::rng::std_normal;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeadSpec {
    pub lead_id: u32,
    /// Mean of ln(value in USD MM).
    pub mu_log: f64,
    /// Std of ln(value).
    pub sigma_log: f64,
}

impl LeadSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.mu_log.is_finite() || !(self.sigma_log > 0.0) || !self.sigma_log.is_finite() {
            return Err(Error::Validation(format!(
                "lead {} needs finite mu_log and sigma_log > 0",
                self.lead_id
            )));
        }
        Ok(())
    }

    pub fn median_value(&self) -> f64 {
        self.mu_log.exp()
    }

    pub fn mean_value(&self) -> f64 {
        (self.mu_log + 0.5 * self.sigma_log * self.sigma_log).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lead {
    pub spec: LeadSpec,
    /// Realized value in USD MM. Hidden from agents.
    pub true_value: f64,
}

impl Lead {
    pub fn log_value(&self) -> f64 {
        self.true_value.ln()
    }
}

/// Discrete information quality. Ordered from no data to the best survey.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
pub enum InfoLevel {
    #[default]
    None,
    Low,
    Med,
    High,
}

impl InfoLevel {
    pub const ALL: [InfoLevel; 4] = [
        InfoLevel::None,
        InfoLevel::Low,
        InfoLevel::Med,
        InfoLevel::High,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

impl fmt::Display for InfoLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            InfoLevel::None => "None",
            InfoLevel::Low => "Low",
            InfoLevel::Med => "Med",
            InfoLevel::High => "High",
        };
        f.write_str(s)
    }
}

impl FromStr for InfoLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(InfoLevel::None),
            "low" => Ok(InfoLevel::Low),
            "med" | "medium" => Ok(InfoLevel::Med),
            "high" => Ok(InfoLevel::High),
            other => Err(Error::config(format!(
                "unknown information level '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfoQuality {
    pub level: InfoLevel,
    /// Signal noise in log-value units; infinite for `None`.
    pub noise_std: f64,
    /// USD MM.
    pub cost: f64,
}

/// Noise and price of each purchasable quality level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InfoSchedule {
    /// Noise std for Low, Med, High.
    pub noise_std: [f64; 3],
    /// Cost of the Low level, USD MM.
    pub base_cost: f64,
    /// Geometric cost ratio between consecutive levels.
    pub cost_ratio: f64,
}

impl Default for InfoSchedule {
    fn default() -> Self {
        Self {
            noise_std: [0.6, 0.3, 0.1],
            base_cost: 2.0,
            cost_ratio: 3.0,
        }
    }
}

impl InfoSchedule {
    pub fn validate(&self) -> Result<()> {
        let [low, med, high] = self.noise_std;
        if !(low > med && med > high && high >= 0.0) || !low.is_finite() {
            return Err(Error::config(
                "information noise_std must be finite and strictly decreasing Low > Med > High >= 0",
            ));
        }
        if !(self.base_cost > 0.0) || !(self.cost_ratio > 1.0) || !self.base_cost.is_finite() {
            return Err(Error::config(
                "information base_cost must be > 0 and cost_ratio > 1",
            ));
        }
        Ok(())
    }

    pub fn quality(&self, level: InfoLevel) -> InfoQuality {
        match level {
            InfoLevel::None => InfoQuality {
                level,
                noise_std: f64::INFINITY,
                cost: 0.0,
            },
            _ => {
                let k = level.index() - 1;
                InfoQuality {
                    level,
                    noise_std: self.noise_std[k],
                    cost: self.base_cost * self.cost_ratio.powi(k as i32),
                }
            }
        }
    }

    pub fn cost(&self, level: InfoLevel) -> f64 {
        self.quality(level).cost
    }
}

/// Gaussian posterior over ln(value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    pub mean_log: f64,
    pub var_log: f64,
}

impl Belief {
    /// Common prior: the lead's generating distribution.
    pub fn prior(spec: &LeadSpec) -> Self {
        Self {
            mean_log: spec.mu_log,
            var_log: spec.sigma_log * spec.sigma_log,
        }
    }

    pub fn std_log(&self) -> f64 {
        self.var_log.sqrt()
    }

    /// Risk-shaded value `exp(mean - lambda var)`, USD MM.
    pub fn certainty_equivalent(&self, risk_aversion: f64) -> f64 {
        (self.mean_log - risk_aversion * self.var_log).exp()
    }
}

/// Parameter grid for generated lead catalogs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CatalogSpec {
    pub n_leads: usize,
    /// Uniform range of `mu_log`.
    pub mu_log_range: [f64; 2],
    /// Uniform range of `sigma_log`.
    pub sigma_log_range: [f64; 2],
}

impl Default for CatalogSpec {
    fn default() -> Self {
        Self {
            n_leads: 20,
            mu_log_range: [50f64.ln(), 800f64.ln()],
            sigma_log_range: [0.3, 1.0],
        }
    }
}

impl CatalogSpec {
    pub fn validate(&self) -> Result<()> {
        let [m0, m1] = self.mu_log_range;
        let [s0, s1] = self.sigma_log_range;
        if self.n_leads < 1 {
            return Err(Error::config("catalog n_leads must be >= 1"));
        }
        if !(m0 <= m1)
            || !(s0 > 0.0 && s0 <= s1)
            || !m0.is_finite()
            || !m1.is_finite()
            || !s1.is_finite()
        {
            return Err(Error::config(
                "catalog ranges must be ordered with sigma_log > 0",
            ));
        }
        Ok(())
    }
}

pub fn sample_lead_catalog<R: Rng + ?Sized>(
    spec: &CatalogSpec,
    rng: &mut R,
) -> Result<Vec<LeadSpec>> {
    spec.validate()?;
    let [m0, m1] = spec.mu_log_range;
    let [s0, s1] = spec.sigma_log_range;
    Ok((0..spec.n_leads)
        .map(|i| LeadSpec {
            lead_id: i as u32,
            mu_log: m0 + (m1 - m0) * rng.random::<f64>(),
            sigma_log: s0 + (s1 - s0) * rng.random::<f64>(),
        })
        .collect())
}

pub fn realize_true_value<R: Rng + ?Sized>(spec: &LeadSpec, rng: &mut R) -> Lead {
    let z = std_normal(rng);
    Lead {
        spec: *spec,
        true_value: (spec.mu_log + spec.sigma_log * z).exp(),
    }
}

/// Noisy observation of ln(true value).
pub fn acquire_signal<R: Rng + ?Sized>(lead: &Lead, q: &InfoQuality, rng: &mut R) -> Result<f64> {
    if q.level == InfoLevel::None {
        return Err(Error::InvalidQuality(
            "cannot acquire a signal at level None".into(),
        ));
    }
    let z = std_normal(rng);
    Ok(lead.log_value() + q.noise_std * z)
}

/// Conjugate normal update of a log-value belief.
pub fn update_belief(prior: &Belief, signal: f64, q: &InfoQuality) -> Result<Belief> {
    if q.level == InfoLevel::None {
        return Err(Error::InvalidQuality(
            "cannot update on a level None signal".into(),
        ));
    }
    if !(prior.var_log >= 0.0) {
        return Err(Error::domain(format!(
            "prior variance must be >= 0, got {}",
            prior.var_log
        )));
    }
    let noise_var = q.noise_std * q.noise_std;
    if noise_var == 0.0 {
        // Perfect signal dominates, even a perfectly certain prior.
        return Ok(Belief {
            mean_log: signal,
            var_log: 0.0,
        });
    }
    if prior.var_log == 0.0 || noise_var.is_infinite() {
        return Ok(*prior);
    }
    let prior_prec = 1.0 / prior.var_log;
    let signal_prec = 1.0 / noise_var;
    let post_prec = prior_prec + signal_prec;
    Ok(Belief {
        mean_log: (prior_prec * prior.mean_log + signal_prec * signal) / post_prec,
        var_log: (1.0 / post_prec).min(prior.var_log),
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct CatalogRow {
    lead_id: u32,
    mu_log: f64,
    sigma_log: f64,
}

pub fn write_catalog_csv(path: &Path, catalog: &[LeadSpec]) -> Result<()> {
    let display = path.display().to_string();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(&display, e))?;
    for spec in catalog {
        w.serialize(CatalogRow {
            lead_id: spec.lead_id,
            mu_log: spec.mu_log,
            sigma_log: spec.sigma_log,
        })
        .map_err(|e| csv_error(&display, e))?;
    }
    w.flush().map_err(|e| Error::io(&display, e))
}

pub fn read_catalog_csv(path: &Path) -> Result<Vec<LeadSpec>> {
    let display = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| Error::io(&display, e))?;
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = r.headers().map_err(|e| csv_error(&display, e))?.clone();
    let expected = ["lead_id", "mu_log", "sigma_log"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Schema {
            path: display,
            message: format!("expected header {}", expected.join(",")),
        });
    }
    let mut out = Vec::new();
    for row in r.deserialize::<CatalogRow>() {
        let row = row.map_err(|e| csv_error(&display, e))?;
        let spec = LeadSpec {
            lead_id: row.lead_id,
            mu_log: row.mu_log,
            sigma_log: row.sigma_log,
        };
        spec.validate()?;
        out.push(spec);
    }
    if out.is_empty() {
        return Err(Error::Validation(format!("{display}: catalog is empty")));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use proptest::prelude::*;

    fn q(noise: f64) -> InfoQuality {
        InfoQuality {
            level: InfoLevel::Med,
            noise_std: noise,
            cost: 1.0,
        }
    }

    #[test]
    fn twenty_distinct_curves() {
        let cat = sample_lead_catalog(&CatalogSpec::default(), &mut stream_rng(5, 7)).unwrap();
        assert_eq!(cat.len(), 20);
        for (i, a) in cat.iter().enumerate() {
            for b in &cat[i + 1..] {
                assert!(a.mu_log != b.mu_log || a.sigma_log != b.sigma_log);
            }
            assert!(a.sigma_log >= 0.3 && a.sigma_log <= 1.0);
            assert!(a.median_value() >= 50.0 - 1e-9 && a.median_value() <= 800.0 + 1e-9);
        }
    }

    #[test]
    fn single_lead_catalog_and_determinism() {
        let spec = CatalogSpec {
            n_leads: 1,
            ..CatalogSpec::default()
        };
        assert_eq!(
            sample_lead_catalog(&spec, &mut stream_rng(1, 7))
                .unwrap()
                .len(),
            1
        );
        let a = sample_lead_catalog(&CatalogSpec::default(), &mut stream_rng(9, 7)).unwrap();
        let b = sample_lead_catalog(&CatalogSpec::default(), &mut stream_rng(9, 7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_lead_realizes_its_median() {
        let spec = LeadSpec {
            lead_id: 0,
            mu_log: 4.0,
            sigma_log: 1e-14,
        };
        let lead = realize_true_value(&spec, &mut stream_rng(1, 2));
        assert!((lead.true_value - 4f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn lognormal_median_and_mean() {
        let spec = LeadSpec {
            lead_id: 0,
            mu_log: 100f64.ln(),
            sigma_log: 0.5,
        };
        let mut rng = stream_rng(77, 2);
        let mut v: Vec<f64> = (0..100_000)
            .map(|_| realize_true_value(&spec, &mut rng).true_value)
            .collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.sort_by(|a, b| a.total_cmp(b));
        let median = v[v.len() / 2];
        assert!((median / 100.0 - 1.0).abs() < 0.05, "median {median}");
        let expected = (100f64.ln() + 0.125).exp();
        assert!((mean / expected - 1.0).abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn schedule_costs_are_geometric() {
        let s = InfoSchedule::default();
        assert_eq!(s.cost(InfoLevel::None), 0.0);
        assert_eq!(s.cost(InfoLevel::Low), 2.0);
        assert_eq!(s.cost(InfoLevel::Med), 6.0);
        assert_eq!(s.cost(InfoLevel::High), 18.0);
        assert!(s.quality(InfoLevel::None).noise_std.is_infinite());
    }

    #[test]
    fn signal_at_none_is_rejected() {
        let lead = Lead {
            spec: LeadSpec {
                lead_id: 0,
                mu_log: 5.0,
                sigma_log: 0.5,
            },
            true_value: 120.0,
        };
        let none = InfoSchedule::default().quality(InfoLevel::None);
        assert!(matches!(
            acquire_signal(&lead, &none, &mut stream_rng(1, 3)),
            Err(Error::InvalidQuality(_))
        ));
    }

    #[test]
    fn perfect_signal_is_exact() {
        let lead = Lead {
            spec: LeadSpec {
                lead_id: 0,
                mu_log: 5.0,
                sigma_log: 0.5,
            },
            true_value: 120.0,
        };
        let s = acquire_signal(&lead, &q(0.0), &mut stream_rng(1, 3)).unwrap();
        assert_eq!(s, 120f64.ln());
    }

    #[test]
    fn higher_quality_signals_have_smaller_error_variance() {
        let lead = Lead {
            spec: LeadSpec {
                lead_id: 0,
                mu_log: 5.0,
                sigma_log: 0.5,
            },
            true_value: 150.0,
        };
        let sched = InfoSchedule::default();
        let var_of = |level| {
            let quality = sched.quality(level);
            let mut rng = stream_rng(31, 3);
            let errs: Vec<f64> = (0..10_000)
                .map(|_| acquire_signal(&lead, &quality, &mut rng).unwrap() - lead.log_value())
                .collect();
            errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64
        };
        let ratio = var_of(InfoLevel::High) / var_of(InfoLevel::Low);
        let expected = (0.1f64 / 0.6).powi(2);
        assert!(
            (ratio / expected - 1.0).abs() < 0.05,
            "ratio {ratio} vs {expected}"
        );
    }

    #[test]
    fn repeated_signals_are_conditionally_independent() {
        let lead = Lead {
            spec: LeadSpec {
                lead_id: 0,
                mu_log: 5.0,
                sigma_log: 0.5,
            },
            true_value: 150.0,
        };
        let quality = InfoSchedule::default().quality(InfoLevel::Low);
        let mut rng = stream_rng(8, 3);
        let pairs: Vec<(f64, f64)> = (0..10_000)
            .map(|_| {
                let a = acquire_signal(&lead, &quality, &mut rng).unwrap() - lead.log_value();
                let b = acquire_signal(&lead, &quality, &mut rng).unwrap() - lead.log_value();
                (a, b)
            })
            .collect();
        let n = pairs.len() as f64;
        let (ma, mb) = pairs
            .iter()
            .fold((0.0, 0.0), |(x, y), (a, b)| (x + a / n, y + b / n));
        let cov = pairs.iter().map(|(a, b)| (a - ma) * (b - mb)).sum::<f64>() / n;
        let va = pairs.iter().map(|(a, _)| (a - ma).powi(2)).sum::<f64>() / n;
        let vb = pairs.iter().map(|(_, b)| (b - mb).powi(2)).sum::<f64>() / n;
        let corr = cov / (va * vb).sqrt();
        assert!(corr.abs() < 0.03, "corr {corr}");
    }

    #[test]
    fn closed_form_conjugate_update() {
        let prior = Belief {
            mean_log: 0.0,
            var_log: 1.0,
        };
        let post = update_belief(&prior, 2.0, &q(1.0)).unwrap();
        assert!((post.mean_log - 1.0).abs() < 1e-12);
        assert!((post.var_log - 0.5).abs() < 1e-12);
    }

    #[test]
    fn limiting_noise_levels() {
        let prior = Belief {
            mean_log: 3.0,
            var_log: 0.4,
        };
        let exact = update_belief(&prior, 5.0, &q(0.0)).unwrap();
        assert_eq!(
            exact,
            Belief {
                mean_log: 5.0,
                var_log: 0.0
            }
        );
        let useless = update_belief(&prior, 5.0, &q(1e12)).unwrap();
        assert!((useless.mean_log - 3.0).abs() < 1e-9);
        assert!((useless.var_log - 0.4).abs() < 1e-9);
        let certain = Belief {
            mean_log: 3.0,
            var_log: 0.0,
        };
        let collapsed = update_belief(&certain, 4.0, &q(0.0)).unwrap();
        assert_eq!(
            collapsed,
            Belief {
                mean_log: 4.0,
                var_log: 0.0
            }
        );
    }

    #[test]
    fn posterior_z_scores_are_calibrated() {
        let spec = LeadSpec {
            lead_id: 0,
            mu_log: 5.0,
            sigma_log: 0.7,
        };
        let quality = InfoSchedule::default().quality(InfoLevel::Low);
        let mut rng = stream_rng(123, 3);
        let zs: Vec<f64> = (0..10_000)
            .map(|_| {
                let lead = realize_true_value(&spec, &mut rng);
                let s = acquire_signal(&lead, &quality, &mut rng).unwrap();
                let post = update_belief(&Belief::prior(&spec), s, &quality).unwrap();
                (lead.log_value() - post.mean_log) / post.std_log()
            })
            .collect();
        let n = zs.len() as f64;
        let mean = zs.iter().sum::<f64>() / n;
        let var = zs.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - 1.0).abs() < 0.1, "var {var}");
    }

    #[test]
    fn better_quality_gives_smaller_posterior_variance() {
        let sched = InfoSchedule::default();
        let prior = Belief {
            mean_log: 5.0,
            var_log: 0.49,
        };
        let vars: Vec<f64> = [InfoLevel::Low, InfoLevel::Med, InfoLevel::High]
            .iter()
            .map(|l| {
                update_belief(&prior, 5.0, &sched.quality(*l))
                    .unwrap()
                    .var_log
            })
            .collect();
        assert!(vars[0] > vars[1] && vars[1] > vars[2]);
    }

    #[test]
    fn catalog_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("catalog.csv");
        let cat = sample_lead_catalog(&CatalogSpec::default(), &mut stream_rng(4, 7)).unwrap();
        write_catalog_csv(&path, &cat).unwrap();
        assert_eq!(read_catalog_csv(&path).unwrap(), cat);
    }

    proptest! {
        #[test]
        fn update_never_increases_variance(
            mean in -5.0f64..10.0,
            var in 0.0f64..4.0,
            signal in -5.0f64..12.0,
            noise in 0.0f64..5.0,
        ) {
            let prior = Belief { mean_log: mean, var_log: var };
            let post = update_belief(&prior, signal, &q(noise)).unwrap();
            prop_assert!(post.var_log <= prior.var_log);
            prop_assert!(post.var_log >= 0.0);
        }
    }
}
