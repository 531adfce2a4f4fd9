//! Synthetic indoor sensors. Values follow a daily cycle plus seeded noise,
//! so a given seed and start time always produce the same payloads.

use std::f64::consts::PI;
use std::time::Duration;

use chrono::{DateTime, Timelike, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde_json::{json, Value};

#[derive(Debug, Clone)]
pub struct SimulationPlan {
    pub devices: usize,
    pub interval: Duration,
    pub duration: Duration,
    pub start: DateTime<Utc>,
    pub seed: u64,
}

impl SimulationPlan {
    /// Number of sampling instants per device. A duration shorter than the
    /// interval still produces one sample.
    pub fn ticks(&self) -> usize {
        let interval = self.interval.as_secs_f64();
        if interval <= 0.0 {
            return 1;
        }
        ((self.duration.as_secs_f64() / interval).floor() as usize).max(1)
    }

    pub fn device_id(i: usize) -> String {
        format!("sim-{}", i + 1)
    }
}

/// Generates readings in posting order: tick by tick, devices in turn.
pub struct SensorModel {
    rng: ChaCha8Rng,
    temp_noise: Normal<f64>,
    co2_noise: Normal<f64>,
    pm_base: Exp<f64>,
    pm_step: Exp<f64>,
}

impl SensorModel {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            temp_noise: Normal::new(0.0, 0.3).unwrap(),
            co2_noise: Normal::new(0.0, 40.0).unwrap(),
            pm_base: Exp::new(1.0 / 6.0).unwrap(),
            pm_step: Exp::new(1.0 / 4.0).unwrap(),
        }
    }

    pub fn reading(&mut self, device_id: &str, at: DateTime<Utc>) -> Value {
        let hour = at.hour() as f64 + at.minute() as f64 / 60.0 + at.second() as f64 / 3600.0;
        let phase = 2.0 * PI * hour / 24.0;
        let temperature = 21.0 + 4.0 * phase.sin() + self.temp_noise.sample(&mut self.rng);
        let humidity = (45.0 + 10.0 * (phase + PI / 3.0).sin()).clamp(0.0, 100.0);
        let co2 = (500.0 + self.co2_noise.sample(&mut self.rng)).max(400.0);
        let pm1_0 = self.pm_base.sample(&mut self.rng);
        let pm2_5 = pm1_0 + self.pm_step.sample(&mut self.rng);
        let pm10 = pm2_5 + self.pm_step.sample(&mut self.rng);
        json!({
            "device_id": device_id,
            "captured_at": at.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            "temperature": round2(temperature),
            "humidity": round2(humidity),
            "co2": round2(co2),
            "pm1_0": round2(pm1_0),
            "pm2_5": round2(pm2_5),
            "pm10": round2(pm10),
        })
    }
}

// Rounding is monotone, so the PM ordering survives it.
fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// All payloads of a plan, grouped by tick.
pub fn payloads(plan: &SimulationPlan) -> Vec<Vec<Value>> {
    let mut model = SensorModel::new(plan.seed);
    let step = chrono::Duration::from_std(plan.interval).unwrap_or_else(|_| chrono::Duration::zero());
    (0..plan.ticks())
        .map(|t| {
            let at = plan.start + step * t as i32;
            (0..plan.devices)
                .map(|d| model.reading(&SimulationPlan::device_id(d), at))
                .collect()
        })
        .collect()
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct SimulationReport {
    pub posted: usize,
    pub failed: usize,
}

impl SimulationReport {
    /// More than a tenth of the posts failed.
    pub fn too_many_failures(&self) -> bool {
        self.failed * 10 > self.posted
    }
}

/// Post every payload to `{base_url}/sensor_data/`. With `realtime`, ticks are
/// spaced by the plan interval; otherwise everything is posted at once.
pub fn run(
    base_url: &str,
    plan: &SimulationPlan,
    device_key: Option<&str>,
    realtime: bool,
) -> anyhow::Result<SimulationReport> {
    let client = reqwest::blocking::Client::builder().timeout(Duration::from_secs(10)).build()?;
    let url = format!("{}/sensor_data/", base_url.trim_end_matches('/'));
    let mut report = SimulationReport::default();
    for (t, tick) in payloads(plan).into_iter().enumerate() {
        if realtime && t > 0 {
            std::thread::sleep(plan.interval);
        }
        for body in tick {
            report.posted += 1;
            let mut req = client.post(&url).json(&body);
            if let Some(key) = device_key {
                req = req.header(ami_server::http::DEVICE_KEY_HEADER, key);
            }
            match req.send() {
                Ok(resp) if resp.status().is_success() => {}
                Ok(resp) => {
                    report.failed += 1;
                    let status = resp.status();
                    let text = resp.text().unwrap_or_default();
                    tracing::warn!(device = %body["device_id"], %status, "reading rejected: {text}");
                }
                Err(e) => {
                    report.failed += 1;
                    tracing::warn!(device = %body["device_id"], "post failed: {e}");
                }
            }
        }
    }
    Ok(report)
}
