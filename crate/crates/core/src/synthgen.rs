//! Synthetic admission datasets calibrated to per-ward mean daily arrivals.
//!
//! Each base series has a latent daily rate
//!
//! ```text
//! rate_t = mean * weekly[dow] * (1 + amplitude * sin(2π doy / 365.25 + phase))
//!        * holiday_factor * exp(weather effects) * (1 - depth if in anomaly window)
//! ```
//!
//! and counts are Poisson (dispersion 0) or negative binomial draws with that
//! mean. Aggregates are summed from the base draws.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::calendar::{CalendarDate, DateRange};
use crate::dataset::{Complexity, CovariateRecord, CovariateTable, DailySeries, Dataset, SeriesKey, Ward};
use crate::error::{Error, Result};
use crate::math::{cos, exp, sin, TAU};
use crate::rng::{self, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WardMeans {
    pub major: f64,
    pub other: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonthDay {
    pub month: u8,
    pub day: u8,
}

impl MonthDay {
    pub const fn new(month: u8, day: u8) -> Self {
        Self { month, day }
    }

    pub fn matches(self, date: CalendarDate) -> bool {
        date.month() == self.month && date.day() == self.day
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalyConfig {
    pub window: DateRange,
    /// Fractional drop of the rate inside the window, in (0, 1].
    pub depth: f64,
}

/// Linear effects on the log-rate of each weather variable's deviation from
/// its seasonal expectation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeatherCoeffs {
    pub tmax: f64,
    pub tmin: f64,
    pub wind_mean: f64,
    pub precip_total: f64,
}

/// Simulated climate: temperatures are annual sinusoids plus Gaussian noise,
/// wind and rain amounts log-normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeatherConfig {
    pub tmax_mean: f64,
    pub tmax_amplitude: f64,
    /// Day of year of the temperature peak.
    pub warmest_day: f64,
    pub tmax_noise_sd: f64,
    /// Median diurnal range (tmax - tmin), °C.
    pub diurnal_range: f64,
    pub wind_median: f64,
    pub wind_log_sd: f64,
    pub rain_probability: f64,
    pub rain_median: f64,
    pub rain_log_sd: f64,
}

impl Default for WeatherConfig {
    fn default() -> Self {
        // Temperate southern-hemisphere coastal climate.
        Self {
            tmax_mean: 17.5,
            tmax_amplitude: 5.5,
            warmest_day: 30.0,
            tmax_noise_sd: 2.5,
            diurnal_range: 9.0,
            wind_median: 3.5,
            wind_log_sd: 0.4,
            rain_probability: 0.4,
            rain_median: 2.5,
            rain_log_sd: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub start: CalendarDate,
    pub n_days: usize,
    pub ward_means: BTreeMap<Ward, WardMeans>,
    /// Multiplicative day-of-week factors, Monday first; must average to 1.
    pub weekly_profile: [f64; 7],
    pub annual_amplitude: f64,
    /// Phase of the annual sinusoid in radians.
    pub annual_phase: f64,
    pub holiday_effect: f64,
    pub holidays: Vec<MonthDay>,
    pub weather: WeatherConfig,
    pub weather_coeffs: WeatherCoeffs,
    pub anomaly: Option<AnomalyConfig>,
    /// Negative-binomial overdispersion `k` (variance = mean + k mean²); 0 = Poisson.
    pub dispersion: f64,
    pub seed: u64,
}

/// Mean daily arrivals per ward and complexity for the reference hospital.
pub fn reference_ward_means() -> BTreeMap<Ward, WardMeans> {
    let table = [
        (Ward::EmergencyMedicine, 2.35, 12.82),
        (Ward::GeneralMedicine, 5.92, 5.38),
        (Ward::Surgery, 2.58, 7.52),
        (Ward::Paediatric, 0.85, 2.46),
        (Ward::Psychiatry, 0.66, 2.17),
        (Ward::Cardiology, 0.78, 1.75),
        (Ward::Neurology, 0.24, 0.45),
        (Ward::Other, 3.00, 4.83),
    ];
    table.into_iter().map(|(w, major, other)| (w, WardMeans { major, other })).collect()
}

/// Reference mean of the total-arrivals series.
pub const REFERENCE_TOTAL_MEAN: f64 = 53.70;

pub const DEFAULT_WEEKLY_PROFILE: [f64; 7] = [1.12, 1.04, 1.0, 1.0, 1.0, 0.92, 0.92];

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            start: CalendarDate::ymd(2017, 1, 1),
            n_days: 1826,
            ward_means: reference_ward_means(),
            weekly_profile: DEFAULT_WEEKLY_PROFILE,
            annual_amplitude: 0.08,
            // Peak at day 365.25 / 2: southern-hemisphere winter.
            annual_phase: -core::f64::consts::FRAC_PI_2,
            holiday_effect: 0.85,
            holidays: alloc::vec![
                MonthDay::new(1, 1),
                MonthDay::new(1, 26),
                MonthDay::new(4, 25),
                MonthDay::new(12, 25),
                MonthDay::new(12, 26),
            ],
            weather: WeatherConfig::default(),
            weather_coeffs: WeatherCoeffs::default(),
            anomaly: Some(AnomalyConfig {
                window: DateRange { start: CalendarDate::ymd(2020, 3, 23), end: CalendarDate::ymd(2020, 6, 14) },
                depth: 0.4,
            }),
            dispersion: 0.0,
            seed: 1,
        }
    }
}

impl GeneratorConfig {
    pub fn end(&self) -> CalendarDate {
        self.start.add_days(self.n_days as i64 - 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_days < 28 {
            return Err(Error::config(format!("n_days = {} < 28 is too short for windowing", self.n_days)));
        }
        for w in Ward::BASE {
            let m = self.ward_means.get(&w).ok_or_else(|| Error::config(format!("ward_means missing {w}")))?;
            for v in [m.major, m.other] {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::config(format!("ward mean for {w} must be positive, got {v}")));
                }
            }
        }
        if self.ward_means.contains_key(&Ward::TotalAllWards) {
            return Err(Error::config("ward_means cannot set the derived total"));
        }
        if self.weekly_profile.iter().any(|&f| !(f > 0.0 && f.is_finite())) {
            return Err(Error::config("weekly_profile factors must be positive"));
        }
        let avg = self.weekly_profile.iter().sum::<f64>() / 7.0;
        if (avg - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("weekly_profile must average to 1, got {avg}")));
        }
        if !(0.0..1.0).contains(&self.annual_amplitude) {
            return Err(Error::config("annual_amplitude must lie in [0, 1)"));
        }
        if !(self.holiday_effect > 0.0 && self.holiday_effect.is_finite()) {
            return Err(Error::config("holiday_effect must be positive"));
        }
        if !(self.dispersion >= 0.0 && self.dispersion.is_finite()) {
            return Err(Error::config("dispersion must be >= 0"));
        }
        for h in &self.holidays {
            if CalendarDate::new(2000, h.month, h.day).is_err() {
                return Err(Error::config(format!("invalid holiday {:02}-{:02}", h.month, h.day)));
            }
        }
        let wc = &self.weather;
        if wc.diurnal_range <= 0.0 || wc.wind_median <= 0.0 || wc.rain_median <= 0.0 {
            return Err(Error::config("weather medians must be positive"));
        }
        if !(0.0..=1.0).contains(&wc.rain_probability) || wc.wind_log_sd < 0.0 || wc.rain_log_sd < 0.0 || wc.tmax_noise_sd < 0.0 {
            return Err(Error::config("invalid weather spread parameters"));
        }
        if let Some(a) = &self.anomaly {
            if !(a.depth > 0.0 && a.depth <= 1.0) {
                return Err(Error::config(format!("anomaly depth {} outside (0, 1]", a.depth)));
            }
            if a.window.start < self.start || a.window.end > self.end() || a.window.end < a.window.start {
                return Err(Error::config(format!("anomaly window {} outside generated range", a.window)));
            }
        }
        Ok(())
    }

    pub fn is_holiday(&self, date: CalendarDate) -> bool {
        self.holidays.iter().any(|h| h.matches(date))
    }
}

/// Generated dataset together with the latent rates it was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTruth {
    /// Latent daily rate for all 27 series (aggregates are sums of rates).
    pub rates: BTreeMap<SeriesKey, Vec<f64>>,
    pub dataset: Dataset,
}

const WEATHER_STREAM: u64 = 1 << 32;

struct Weather {
    records: Vec<CovariateRecord>,
    /// Deviations of (tmax, tmin, wind, precip) from their expectations.
    anomalies: Vec<[f64; 4]>,
}

fn simulate_weather(config: &GeneratorConfig) -> Result<Weather> {
    let wc = &config.weather;
    let mut rng = rng::stream(config.seed, WEATHER_STREAM);
    let noise = Normal::new(0.0, 1.0).map_err(|e| Error::config(format!("{e}")))?;
    let wind_mean = wc.wind_median * exp(0.5 * wc.wind_log_sd * wc.wind_log_sd);
    let rain_mean = wc.rain_probability * wc.rain_median * exp(0.5 * wc.rain_log_sd * wc.rain_log_sd);
    let mut records = Vec::with_capacity(config.n_days);
    let mut anomalies = Vec::with_capacity(config.n_days);
    for i in 0..config.n_days {
        let date = config.start.add_days(i as i64);
        let doy = f64::from(date.day_of_year());
        let seasonal_tmax = wc.tmax_mean + wc.tmax_amplitude * cos(TAU * (doy - wc.warmest_day) / 365.25);
        let tmax = seasonal_tmax + wc.tmax_noise_sd * noise.sample(&mut rng);
        let range = wc.diurnal_range * exp(0.25 * noise.sample(&mut rng));
        let tmin = tmax - range;
        let wind = wc.wind_median * exp(wc.wind_log_sd * noise.sample(&mut rng));
        let wet = rng.random::<f64>() < wc.rain_probability;
        let rain_draw = wc.rain_median * exp(wc.rain_log_sd * noise.sample(&mut rng));
        let precip = if wet { rain_draw } else { 0.0 };
        let expected_range = wc.diurnal_range * exp(0.5 * 0.0625);
        records.push(CovariateRecord { date, tmax, tmin, wind_mean: wind, precip_total: precip, is_holiday: config.is_holiday(date) });
        anomalies.push([tmax - seasonal_tmax, tmin - (seasonal_tmax - expected_range), wind - wind_mean, precip - rain_mean]);
    }
    Ok(Weather { records, anomalies })
}

fn draw_count(rng: &mut StreamRng, rate: f64, dispersion: f64) -> Result<u32> {
    if rate <= 0.0 {
        return Ok(0);
    }
    let mean = if dispersion > 0.0 {
        let g = Gamma::new(1.0 / dispersion, rate * dispersion).map_err(|e| Error::config(format!("{e}")))?;
        g.sample(rng)
    } else {
        rate
    };
    if mean <= 0.0 {
        return Ok(0);
    }
    let p = Poisson::new(mean).map_err(|e| Error::config(format!("rate {mean}: {e}")))?;
    Ok(p.sample(rng) as u32)
}

/// Generates the 16 base series, derives the aggregates and simulates the
/// covariate table. Deterministic given the config (including its seed).
pub fn generate(config: &GeneratorConfig) -> Result<SyntheticTruth> {
    config.validate()?;
    let weather = simulate_weather(config)?;
    let c = &config.weather_coeffs;
    // Multiplier shared by every series: weekly, annual, holiday and weather.
    let shared: Vec<f64> = (0..config.n_days)
        .map(|i| {
            let date = config.start.add_days(i as i64);
            let doy = f64::from(date.day_of_year());
            let mut f = config.weekly_profile[date.weekday() as usize]
                * (1.0 + config.annual_amplitude * sin(TAU * doy / 365.25 + config.annual_phase));
            if weather.records[i].is_holiday {
                f *= config.holiday_effect;
            }
            let a = weather.anomalies[i];
            let lin = c.tmax * a[0] + c.tmin * a[1] + c.wind_mean * a[2] + c.precip_total * a[3];
            if lin != 0.0 {
                f *= exp(lin);
            }
            if let Some(an) = &config.anomaly {
                if an.window.contains(date) {
                    f *= 1.0 - an.depth;
                }
            }
            f
        })
        .collect();

    let mut rates = BTreeMap::new();
    let mut base = Vec::with_capacity(16);
    for (stream_id, key) in SeriesKey::base_keys().enumerate() {
        let m = config.ward_means[&key.ward];
        let mean = match key.complexity {
            Complexity::Major => m.major,
            _ => m.other,
        };
        let mut rng = rng::stream(config.seed, stream_id as u64);
        let rate: Vec<f64> = shared.iter().map(|f| mean * f).collect();
        let counts = rate.iter().map(|&r| draw_count(&mut rng, r, config.dispersion)).collect::<Result<Vec<u32>>>()?;
        base.push(DailySeries::new(key, config.start, counts, config.anomaly.map(|a| a.window))?);
        rates.insert(key, rate);
    }
    for w in Ward::BASE {
        let sum: Vec<f64> = rates[&SeriesKey::new(w, Complexity::Major)]
            .iter()
            .zip(&rates[&SeriesKey::new(w, Complexity::Other)])
            .map(|(a, b)| a + b)
            .collect();
        rates.insert(SeriesKey::new(w, Complexity::All), sum);
    }
    for cx in Complexity::ALL {
        let mut sum = alloc::vec![0.0; config.n_days];
        for w in Ward::BASE {
            for (s, r) in sum.iter_mut().zip(&rates[&SeriesKey::new(w, cx)]) {
                *s += r;
            }
        }
        rates.insert(SeriesKey::new(Ward::TotalAllWards, cx), sum);
    }
    let covariates = CovariateTable::from_records(weather.records)?;
    let dataset = Dataset::from_base(base, Some(covariates))?;
    Ok(SyntheticTruth { rates, dataset })
}

/// Configured mean of the total-arrivals series before seasonal effects.
pub fn total_configured_mean(config: &GeneratorConfig) -> f64 {
    config.ward_means.values().map(|m| m.major + m.other).sum()
}
