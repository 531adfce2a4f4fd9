//! Fuzzed bodies for the ingestion endpoint.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

pub const FIELDS: [&str; 8] = [
    "device_id",
    "captured_at",
    "temperature",
    "humidity",
    "co2",
    "pm1_0",
    "pm2_5",
    "pm10",
];

pub fn valid_body(rng: &mut ChaCha8Rng) -> Map<String, Value> {
    let pm1 = rng.random_range(0.0..50.0);
    let pm25 = pm1 + rng.random_range(0.0..30.0);
    let mut m = Map::new();
    m.insert("device_id".into(), json!(format!("s{}", rng.random_range(1..5))));
    m.insert("captured_at".into(), json!(1_735_689_600 + rng.random_range(0..86_400 * 30)));
    m.insert("temperature".into(), json!(rng.random_range(-20.0..45.0)));
    m.insert("humidity".into(), json!(rng.random_range(0.0..=100.0)));
    m.insert("co2".into(), json!(rng.random_range(350.0..2000.0)));
    m.insert("pm1_0".into(), json!(pm1));
    m.insert("pm2_5".into(), json!(pm25));
    m.insert("pm10".into(), json!(pm25 + rng.random_range(0.0..40.0)));
    m
}

fn junk_value(rng: &mut ChaCha8Rng) -> Value {
    match rng.random_range(0..16) {
        0 => json!(null),
        1 => json!(true),
        2 => json!("12.5"),
        3 => json!("not a number"),
        4 => json!([]),
        5 => json!({"v": 1}),
        6 => json!(-1.0e-9),
        7 => json!(1.0e308),
        8 => json!(-1.0e308),
        9 => json!(i64::MAX),
        10 => json!(u64::MAX),
        11 => json!(100.000_000_1),
        12 => json!(-90.000_001),
        13 => json!("2025-13-45T99:00:00Z"),
        14 => json!("2025-01-01T00:00:00+05:30"),
        _ => json!(rng.random_range(-1000.0..3000.0)),
    }
}

/// A body and its content type. Roughly a third are valid readings; the
/// rest are mutated, truncated or not JSON objects at all.
pub fn fuzz_case(rng: &mut ChaCha8Rng) -> (Vec<u8>, &'static str) {
    let content_type = *["application/json", "application/json", "application/json; charset=utf-8", "text/plain", ""]
        .choose(rng)
        .unwrap();
    let body = match rng.random_range(0..10) {
        0..=2 => Value::Object(valid_body(rng)).to_string().into_bytes(),
        3..=6 => {
            let mut m = valid_body(rng);
            for _ in 0..rng.random_range(1..4) {
                let field = *FIELDS.choose(rng).unwrap();
                match rng.random_range(0..3) {
                    0 => {
                        m.remove(field);
                    }
                    _ => {
                        m.insert(field.into(), junk_value(rng));
                    }
                }
            }
            if rng.random_bool(0.2) {
                m.insert("extra".into(), junk_value(rng));
            }
            Value::Object(m).to_string().into_bytes()
        }
        7 => junk_value(rng).to_string().into_bytes(),
        8 => {
            let s = Value::Object(valid_body(rng)).to_string();
            let cut = rng.random_range(0..s.len());
            s.as_bytes()[..cut].to_vec()
        }
        _ => (0..rng.random_range(0..40)).map(|_| rng.random::<u8>()).collect(),
    };
    (body, content_type)
}
