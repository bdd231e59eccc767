//! Stochastic market environment.
//!
//! Oil prices follow a proportional-noise Ornstein-Uhlenbeck process
//! discretized with Euler-Maruyama:
//!
//! ```text
//! p' = p + kappa (pbar - p) dt + sigma p sqrt(dt) z
//! ```
//!
//! Industry aggregates (investment, production, reserves) drift around
//! historical means as independent AR(1) processes. They only reach the
//! agents through the observation vector.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::std_normal;

/// Prices never go below this level (USD/bbl).
pub const PRICE_FLOOR: f64 = 1.0;

/// Minimum series length accepted by [`calibrate_ou`].
pub const MIN_CALIBRATION_POINTS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OuParams {
    /// Mean-reversion speed per year.
    pub kappa: f64,
    /// Long-run equilibrium price, USD/bbl.
    pub pbar: f64,
    /// Proportional volatility per sqrt(year).
    pub sigma_p: f64,
    /// Step size in years.
    pub dt: f64,
}

impl Default for OuParams {
    /// Brent calibration over 2001-2021 at annual steps.
    fn default() -> Self {
        Self {
            kappa: 0.38,
            pbar: 65.40,
            sigma_p: 0.28,
            dt: 1.0,
        }
    }
}

impl OuParams {
    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.kappa, self.pbar, self.sigma_p, self.dt]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::domain("OU parameters must be finite"));
        }
        if self.kappa < 0.0 {
            return Err(Error::domain(format!(
                "kappa must be >= 0, got {}",
                self.kappa
            )));
        }
        if self.pbar <= 0.0 {
            return Err(Error::domain(format!(
                "pbar must be > 0, got {}",
                self.pbar
            )));
        }
        if self.sigma_p < 0.0 {
            return Err(Error::domain(format!(
                "sigma_p must be >= 0, got {}",
                self.sigma_p
            )));
        }
        if self.dt <= 0.0 {
            return Err(Error::domain(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.kappa * self.dt >= 1.0 {
            return Err(Error::domain(format!(
                "kappa * dt must be < 1 for a stable Euler step, got {}",
                self.kappa * self.dt
            )));
        }
        Ok(())
    }

    pub fn with_sigma(self, sigma_p: f64) -> Self {
        Self { sigma_p, ..self }
    }
}

/// One Euler-Maruyama step of the price process, floored at [`PRICE_FLOOR`].
pub fn ou_step(p: f64, params: &OuParams, z: f64) -> Result<f64> {
    if !p.is_finite() || !z.is_finite() {
        return Err(Error::domain(format!("non-finite OU input p={p} z={z}")));
    }
    if p <= 0.0 {
        return Err(Error::domain(format!("price must be > 0, got {p}")));
    }
    let drift = params.kappa * (params.pbar - p) * params.dt;
    let shock = params.sigma_p * p * params.dt.sqrt() * z;
    let next = p + drift + shock;
    if !next.is_finite() {
        return Err(Error::domain("OU step produced a non-finite price"));
    }
    Ok(next.max(PRICE_FLOOR))
}

/// Price path of length `n_steps + 1` starting at `p0`.
pub fn simulate_price_path<R: Rng + ?Sized>(
    p0: f64,
    params: &OuParams,
    n_steps: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    params.validate()?;
    if n_steps == 0 {
        return Err(Error::domain("n_steps must be >= 1"));
    }
    let mut path = Vec::with_capacity(n_steps + 1);
    let mut p = p0;
    path.push(p);
    for _ in 0..n_steps {
        p = ou_step(p, params, std_normal(rng))?;
        path.push(p);
    }
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Regime {
    Resilient,
    Neutral,
    Heat,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Resilient, Regime::Neutral, Regime::Heat];

    /// Label used in the scenario metrics table (Low / Medium / High).
    pub fn table_label(self) -> &'static str {
        match self {
            Regime::Resilient => "Low",
            Regime::Neutral => "Medium",
            Regime::Heat => "High",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Regime::Resilient => "Resilient",
            Regime::Neutral => "Neutral",
            Regime::Heat => "Heat",
        };
        f.write_str(s)
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "resilient" | "low" => Ok(Regime::Resilient),
            "neutral" | "medium" => Ok(Regime::Neutral),
            "heat" | "high" => Ok(Regime::Heat),
            other => Err(Error::config(format!("unknown scenario regime '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub regime: Regime,
    /// Demand growth, fraction per year.
    pub demand_growth: f64,
    /// Multiplier on the base price volatility.
    pub vol_scale: f64,
    pub horizon_years: usize,
    /// Starting price; the long-run mean when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_price: Option<f64>,
}

impl ScenarioSpec {
    /// Default parameters for a named regime.
    pub fn preset(regime: Regime, horizon_years: usize) -> Self {
        let (demand_growth, vol_scale) = match regime {
            Regime::Resilient => (-0.01, 0.8),
            Regime::Neutral => (0.0, 1.0),
            Regime::Heat => (0.02, 1.5),
        };
        Self {
            regime,
            demand_growth,
            vol_scale,
            horizon_years,
            initial_price: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.vol_scale > 0.0) || !self.vol_scale.is_finite() {
            return Err(Error::config(format!(
                "scenario vol_scale must be > 0, got {}",
                self.vol_scale
            )));
        }
        if self.horizon_years < 1 {
            return Err(Error::config("scenario horizon_years must be >= 1"));
        }
        if !self.demand_growth.is_finite() || self.demand_growth <= -1.0 {
            return Err(Error::config("scenario demand_growth must be > -1"));
        }
        if let Some(p0) = self.initial_price {
            if !(p0 > 0.0) || !p0.is_finite() {
                return Err(Error::config("scenario initial_price must be > 0"));
            }
        }
        Ok(())
    }

    pub fn effective_params(&self, base: &OuParams) -> OuParams {
        base.with_sigma(base.sigma_p * self.vol_scale)
    }
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self::preset(Regime::Neutral, 40)
    }
}

/// Long-run means of the industry aggregates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndustryBaseline {
    /// USD billions per year.
    pub tot_inv: f64,
    pub tot_inv_up: f64,
    pub tot_inv_exp: f64,
    /// MBOE per day.
    pub tot_prod: f64,
    /// BBOE.
    pub tot_res: f64,
    /// BBOE per year.
    pub tot_inc_res: f64,
}

impl IndustryBaseline {
    fn as_array(&self) -> [f64; 6] {
        [
            self.tot_inv,
            self.tot_inv_up,
            self.tot_inv_exp,
            self.tot_prod,
            self.tot_res,
            self.tot_inc_res,
        ]
    }
}

impl Default for IndustryBaseline {
    /// Sums of the shipped top-ten firm means.
    fn default() -> Self {
        Self {
            tot_inv: 175.5,
            tot_inv_up: 143.687,
            tot_inv_exp: 20.206,
            tot_prod: 25.5,
            tot_res: 125.3,
            tot_inc_res: 9.7,
        }
    }
}

/// AR(1) dynamics of the industry aggregates around their baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregateDynamics {
    /// Persistence of deviations from the mean.
    pub persistence: f64,
    /// Innovation std as a fraction of the mean.
    pub noise: f64,
}

impl Default for AggregateDynamics {
    fn default() -> Self {
        Self {
            persistence: 0.7,
            noise: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketState {
    /// USD/bbl.
    pub price: f64,
    /// Annualized proportional volatility.
    pub volatility: f64,
    /// Demand index, base year = 1.0.
    pub demand: f64,
    pub tot_inv: f64,
    pub tot_inv_up: f64,
    pub tot_inv_exp: f64,
    pub tot_prod: f64,
    pub tot_res: f64,
    pub tot_inc_res: f64,
}

impl MarketState {
    fn aggregates(&self) -> [f64; 6] {
        [
            self.tot_inv,
            self.tot_inv_up,
            self.tot_inv_exp,
            self.tot_prod,
            self.tot_res,
            self.tot_inc_res,
        ]
    }

    fn set_aggregates(&mut self, v: [f64; 6]) {
        [
            self.tot_inv,
            self.tot_inv_up,
            self.tot_inv_exp,
            self.tot_prod,
            self.tot_res,
            self.tot_inc_res,
        ] = v;
    }
}

/// Yearly market trajectory for a scenario, `horizon_years` states long.
///
/// Each year draws one price shock followed by the six aggregate shocks, so
/// two regimes on the same seed share the same price innovations.
pub fn generate_scenario<R: Rng + ?Sized>(
    spec: &ScenarioSpec,
    base: &OuParams,
    baseline: &IndustryBaseline,
    dynamics: &AggregateDynamics,
    rng: &mut R,
) -> Result<Vec<MarketState>> {
    spec.validate()?;
    base.validate()?;
    let params = spec.effective_params(base);
    let means = baseline.as_array();

    let mut state = MarketState {
        price: spec.initial_price.unwrap_or(params.pbar),
        volatility: params.sigma_p,
        demand: 1.0,
        tot_inv: 0.0,
        tot_inv_up: 0.0,
        tot_inv_exp: 0.0,
        tot_prod: 0.0,
        tot_res: 0.0,
        tot_inc_res: 0.0,
    };
    state.set_aggregates(means);

    let mut out = Vec::with_capacity(spec.horizon_years);
    out.push(state);
    for _ in 1..spec.horizon_years {
        let z = std_normal(rng);
        let mut next = state;
        next.price = ou_step(state.price, &params, z)?;
        next.demand = state.demand * (1.0 + spec.demand_growth);
        let prev = state.aggregates();
        let mut agg = [0.0; 6];
        for (k, slot) in agg.iter_mut().enumerate() {
            // Production tracks demand; the rest revert to the flat mean.
            let mean = if k == 3 {
                means[k] * next.demand
            } else {
                means[k]
            };
            let dev = prev[k] - mean;
            let v = mean + dynamics.persistence * dev + dynamics.noise * mean * std_normal(rng);
            *slot = v.max(0.0);
        }
        next.set_aggregates(agg);
        out.push(next);
        state = next;
    }
    Ok(out)
}

/// Least-squares fit of `p[t+1] = a + b p[t]`, mapped back to OU parameters.
pub fn calibrate_ou(prices: &[f64], dt: f64) -> Result<OuParams> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::domain(format!("dt must be > 0, got {dt}")));
    }
    if prices.len() < MIN_CALIBRATION_POINTS {
        return Err(Error::DegenerateFit(format!(
            "need at least {MIN_CALIBRATION_POINTS} prices, got {}",
            prices.len()
        )));
    }
    if let Some(bad) = prices.iter().find(|p| !(**p > 0.0) || !p.is_finite()) {
        return Err(Error::domain(format!(
            "prices must be positive and finite, got {bad}"
        )));
    }

    let x = &prices[..prices.len() - 1];
    let y = &prices[1..];
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mean_x).powi(2)).sum();
    let sxy: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (a - mean_x) * (b - mean_y))
        .sum();
    if sxx <= f64::EPSILON * mean_x * mean_x * n {
        return Err(Error::DegenerateFit("price series has no variation".into()));
    }
    let b = sxy / sxx;
    let a = mean_y - b * mean_x;

    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| (yi - a - b * xi).powi(2))
        .sum();
    let resid_std = (sse / (n - 2.0)).sqrt();
    let level = prices.iter().sum::<f64>() / prices.len() as f64;

    let (kappa, pbar) = if b < 1.0 {
        ((1.0 - b) / dt, a / (1.0 - b))
    } else {
        // No reversion detected: clamp and fall back to the sample level.
        (0.0, level)
    };
    let pbar = if pbar > 0.0 && pbar.is_finite() {
        pbar
    } else {
        level
    };

    Ok(OuParams {
        kappa,
        pbar,
        sigma_p: resid_std / (level * dt.sqrt()),
        dt,
    })
}

/// Reads a two-column `date,price` CSV with a header row.
pub fn read_price_csv(path: &Path) -> Result<Vec<f64>> {
    let display = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| Error::io(&display, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| csv_error(&display, e))?
        .clone();
    if headers.len() != 2 {
        return Err(Error::Schema {
            path: display,
            message: format!("expected 2 columns (date, price), found {}", headers.len()),
        });
    }
    let mut prices = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(&display, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let raw = record.get(1).unwrap_or("");
        let price: f64 = raw.parse().map_err(|_| Error::Parse {
            path: display.clone(),
            line,
            message: format!("invalid price '{raw}'"),
        })?;
        prices.push(price);
    }
    Ok(prices)
}

pub(crate) fn csv_error(path: &str, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_string(),
            line,
            message: format!("{other:?}"),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use proptest::prelude::*;

    fn no_noise(kappa: f64) -> OuParams {
        OuParams {
            kappa,
            sigma_p: 0.0,
            ..OuParams::default()
        }
    }

    #[test]
    fn fixed_point_at_long_run_mean() {
        let p = ou_step(65.40, &OuParams::default(), 0.0).unwrap();
        assert_eq!(p, 65.40);
    }

    #[test]
    fn hand_evaluated_euler_step() {
        let p = ou_step(50.0, &no_noise(0.38), 0.0).unwrap();
        assert!((p - 55.852).abs() < 1e-12);
    }

    #[test]
    fn degenerate_process_is_constant() {
        for p in [3.0, 65.4, 140.0] {
            assert_eq!(ou_step(p, &no_noise(0.0), 1.7).unwrap(), p);
        }
    }

    #[test]
    fn non_finite_inputs_rejected() {
        let params = OuParams::default();
        assert!(matches!(
            ou_step(f64::NAN, &params, 0.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            ou_step(60.0, &params, f64::INFINITY),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn floor_holds_under_large_negative_shock() {
        let p = ou_step(10.0, &OuParams::default(), -50.0).unwrap();
        assert_eq!(p, PRICE_FLOOR);
    }

    #[test]
    fn deterministic_path_rises_toward_mean() {
        let mut rng = stream_rng(1, 1);
        let path = simulate_price_path(30.0, &no_noise(0.38), 40, &mut rng).unwrap();
        assert_eq!(path.len(), 41);
        for w in path.windows(2) {
            assert!(w[1] > w[0]);
            assert!(w[1] < 65.40);
        }
    }

    #[test]
    fn constant_path_at_mean() {
        let mut rng = stream_rng(1, 1);
        let path = simulate_price_path(65.40, &no_noise(0.38), 10, &mut rng).unwrap();
        assert!(path.iter().all(|p| *p == 65.40));
    }

    #[test]
    fn stability_constraint_rejected() {
        let params = OuParams {
            kappa: 1.2,
            ..OuParams::default()
        };
        assert!(params.validate().is_err());
    }

    #[test]
    fn neutral_zero_growth_keeps_demand_flat() {
        let spec = ScenarioSpec::preset(Regime::Neutral, 20);
        let mut rng = stream_rng(3, 1);
        let traj = generate_scenario(
            &spec,
            &OuParams::default(),
            &IndustryBaseline::default(),
            &AggregateDynamics::default(),
            &mut rng,
        )
        .unwrap();
        assert!(traj.iter().all(|m| m.demand == 1.0));
    }

    #[test]
    fn trajectory_length_matches_horizon() {
        let spec = ScenarioSpec::preset(Regime::Resilient, 38);
        let mut rng = stream_rng(3, 1);
        let traj = generate_scenario(
            &spec,
            &OuParams::default(),
            &IndustryBaseline::default(),
            &AggregateDynamics::default(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(traj.len(), 38);
        let growth = spec.demand_growth;
        assert!((traj[10].demand - (1.0 + growth).powi(10)).abs() < 1e-12);
    }

    #[test]
    fn heat_is_more_volatile_than_neutral_on_paired_seed() {
        let base = OuParams::default();
        let sd = |regime: Regime| {
            let mut spec = ScenarioSpec::preset(regime, 400);
            spec.demand_growth = 0.0;
            let mut rng = stream_rng(11, 1);
            let traj = generate_scenario(
                &spec,
                &base,
                &IndustryBaseline::default(),
                &AggregateDynamics::default(),
                &mut rng,
            )
            .unwrap();
            let prices: Vec<f64> = traj.iter().map(|m| m.price).collect();
            let mean = prices.iter().sum::<f64>() / prices.len() as f64;
            (prices.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / prices.len() as f64).sqrt()
        };
        assert!(sd(Regime::Heat) > sd(Regime::Neutral));
    }

    #[test]
    fn unknown_regime_is_config_error() {
        assert!(matches!("boom".parse::<Regime>(), Err(Error::Config(_))));
        assert_eq!("heat".parse::<Regime>().unwrap(), Regime::Heat);
    }

    #[test]
    fn calibration_recovers_simulated_params() {
        let truth = OuParams::default();
        let mut rng = stream_rng(2024, 1);
        let path = simulate_price_path(truth.pbar, &truth, 4999, &mut rng).unwrap();
        let fit = calibrate_ou(&path, 1.0).unwrap();
        assert!((fit.kappa - 0.38).abs() < 0.08, "kappa {}", fit.kappa);
        assert!((fit.pbar - 65.40).abs() < 3.0, "pbar {}", fit.pbar);
        assert!((fit.sigma_p - 0.28).abs() < 0.05, "sigma {}", fit.sigma_p);
    }

    #[test]
    fn noiseless_relaxation_has_zero_sigma() {
        let params = no_noise(0.38);
        let mut p = 30.0;
        let mut series = vec![p];
        for _ in 0..40 {
            p = ou_step(p, &params, 0.0).unwrap();
            series.push(p);
        }
        let fit = calibrate_ou(&series, 1.0).unwrap();
        assert!(fit.sigma_p < 1e-9);
        assert!((fit.kappa - 0.38).abs() < 1e-6);
        assert!((fit.pbar - 65.40).abs() < 1e-6);
    }

    #[test]
    fn short_or_constant_series_is_degenerate() {
        assert!(matches!(
            calibrate_ou(&[60.0, 61.0], 1.0),
            Err(Error::DegenerateFit(_))
        ));
        assert!(matches!(
            calibrate_ou(&[60.0; 50], 1.0),
            Err(Error::DegenerateFit(_))
        ));
    }

    proptest! {
        #[test]
        fn noiseless_step_contracts_toward_mean(p in 1.5f64..300.0, kappa in 0.01f64..0.99) {
            prop_assume!((p - 65.40).abs() > 1e-9);
            let next = ou_step(p, &no_noise(kappa), 0.0).unwrap();
            prop_assert!((next - 65.40).abs() < (p - 65.40).abs());
        }

        #[test]
        fn emitted_prices_stay_positive(seed in 0u64..500, sigma in 0.0f64..2.0) {
            let params = OuParams::default().with_sigma(sigma);
            let mut rng = stream_rng(seed, 1);
            let path = simulate_price_path(65.4, &params, 200, &mut rng).unwrap();
            prop_assert!(path.iter().all(|p| *p >= PRICE_FLOOR));
        }

        #[test]
        fn equal_seeds_give_identical_paths(seed in any::<u64>()) {
            let params = OuParams::default();
            let a = simulate_price_path(50.0, &params, 50, &mut stream_rng(seed, 1)).unwrap();
            let b = simulate_price_path(50.0, &params, 50, &mut stream_rng(seed, 1)).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
