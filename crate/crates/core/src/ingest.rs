//! Validation of sensor payloads posted to the ingestion endpoint.

use chrono::{DateTime, TimeZone, Utc};
use serde::Serialize;
use serde_json::{Map, Value};

use crate::timeseries::{Field, ReadingFlag, SensorReading};

/// A field-level rejection of an ingestion payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, thiserror::Error)]
#[error("{field}: {message}")]
pub struct ValidationError {
    pub field: String,
    pub message: String,
}

impl ValidationError {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestResult {
    pub stored_id: u64,
    pub warnings: Vec<ReadingFlag>,
}

/// Parse a timestamp given as an RFC 3339 string or integer epoch seconds.
pub fn parse_timestamp(value: &Value) -> Result<DateTime<Utc>, String> {
    match value {
        Value::String(s) => DateTime::parse_from_rfc3339(s.trim())
            .map(|t| t.with_timezone(&Utc))
            .map_err(|e| format!("unparseable RFC 3339 timestamp `{s}`: {e}")),
        Value::Number(n) => {
            let secs = n
                .as_i64()
                .ok_or_else(|| format!("epoch seconds must be an integer, got {n}"))?;
            Utc.timestamp_opt(secs, 0)
                .single()
                .ok_or_else(|| format!("epoch seconds {secs} out of range"))
        }
        other => Err(format!(
            "expected an RFC 3339 string or epoch seconds, got {}",
            json_kind(other)
        )),
    }
}

/// Validate a posted body and turn it into a normalized reading.
///
/// Unknown keys are ignored. Checks run in a fixed order (device_id,
/// captured_at, then the measurements in column order) so the reported field
/// is deterministic.
pub fn parse_reading(body: &Value) -> Result<SensorReading, ValidationError> {
    let obj = body
        .as_object()
        .ok_or_else(|| ValidationError::new("body", format!("expected a JSON object, got {}", json_kind(body))))?;

    let device_id = match required(obj, "device_id")? {
        Value::String(s) if !s.trim().is_empty() => s.clone(),
        Value::String(_) => return Err(ValidationError::new("device_id", "must be a non-empty string")),
        other => {
            return Err(ValidationError::new(
                "device_id",
                format!("expected a string, got {}", json_kind(other)),
            ))
        }
    };
    let captured_at = parse_timestamp(required(obj, "captured_at")?)
        .map_err(|m| ValidationError::new("captured_at", m))?;

    let mut values = [0f64; 6];
    for (slot, field) in values.iter_mut().zip(Field::ALL) {
        let v = required(obj, field.name())?;
        let n = v.as_f64().ok_or_else(|| {
            ValidationError::new(field.name(), format!("expected a number, got {}", json_kind(v)))
        })?;
        *slot = n;
    }
    let reading = SensorReading::new(
        device_id,
        captured_at,
        values[0],
        values[1],
        values[2],
        values[3],
        values[4],
        values[5],
    );
    reading
        .check_bounds()
        .map_err(|v| ValidationError::new(v.field, v.message))?;
    Ok(reading)
}

fn required<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a Value, ValidationError> {
    match obj.get(key) {
        None | Some(Value::Null) => Err(ValidationError::new(key, "missing required field")),
        Some(v) => Ok(v),
    }
}

fn json_kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn base() -> Value {
        json!({
            "device_id": "s1",
            "captured_at": "2025-01-01T00:00:00Z",
            "temperature": 21.5,
            "humidity": 40,
            "co2": 600,
            "pm1_0": 3,
            "pm2_5": 8,
            "pm10": 12
        })
    }

    #[test]
    fn accepts_valid_body() {
        let r = parse_reading(&base()).unwrap();
        assert_eq!(r.device_id, "s1");
        assert_eq!(r.temperature, 21.5);
        assert!(r.flags.is_empty());
    }

    #[test]
    fn humidity_out_of_range_names_field() {
        let mut b = base();
        b["humidity"] = json!(150);
        assert_eq!(parse_reading(&b).unwrap_err().field, "humidity");
    }

    #[test]
    fn pm_ordering_is_a_warning() {
        let mut b = base();
        b["pm2_5"] = json!(20);
        let r = parse_reading(&b).unwrap();
        assert_eq!(r.flags.into_iter().collect::<Vec<_>>(), vec![ReadingFlag::PmOrdering]);
    }

    #[test]
    fn missing_and_non_numeric_fields() {
        let mut b = base();
        b.as_object_mut().unwrap().remove("co2");
        let e = parse_reading(&b).unwrap_err();
        assert_eq!((e.field.as_str(), e.message.as_str()), ("co2", "missing required field"));

        let mut b = base();
        b["pm10"] = json!("12");
        assert_eq!(parse_reading(&b).unwrap_err().field, "pm10");
    }

    #[test]
    fn timestamps() {
        let mut b = base();
        b["captured_at"] = json!(1_735_689_600);
        assert_eq!(
            parse_reading(&b).unwrap().captured_at,
            parse_reading(&base()).unwrap().captured_at
        );
        b["captured_at"] = json!("2025-01-01T01:00:00+01:00");
        assert_eq!(
            parse_reading(&b).unwrap().captured_at,
            parse_reading(&base()).unwrap().captured_at
        );
        b["captured_at"] = json!("yesterday");
        assert_eq!(parse_reading(&b).unwrap_err().field, "captured_at");
        b["captured_at"] = json!(1.5);
        assert_eq!(parse_reading(&b).unwrap_err().field, "captured_at");
    }

    #[test]
    fn non_object_body() {
        assert_eq!(parse_reading(&json!([1, 2])).unwrap_err().field, "body");
    }
}
