//! IMU trace CSV: `t_ms,ax,ay,az,gx,gy,gz,button` with raw i16 counts.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::protocol::ImuSample;

use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuTraceRow {
    pub t_ms: f64,
    pub ax: i16,
    pub ay: i16,
    pub az: i16,
    pub gx: i16,
    pub gy: i16,
    pub gz: i16,
    #[serde(with = "bool_as_int")]
    pub button: bool,
}

impl ImuTraceRow {
    pub fn sample(&self) -> ImuSample {
        ImuSample {
            accel: [self.ax, self.ay, self.az],
            gyro: [self.gx, self.gy, self.gz],
        }
    }

    pub fn from_sample(t_ms: f64, s: ImuSample, button: bool) -> Self {
        Self {
            t_ms,
            ax: s.accel[0],
            ay: s.accel[1],
            az: s.accel[2],
            gx: s.gyro[0],
            gy: s.gyro[1],
            gz: s.gyro[2],
            button,
        }
    }
}

mod bool_as_int {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(*v as u8)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(de::Error::custom(format!("button must be 0 or 1, got {other}"))),
        }
    }
}

/// Reads and validates a trace; rows must be in nondecreasing time order.
pub fn read_imu_trace<R: Read>(r: R) -> Result<Vec<ImuTraceRow>, SimError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let headers = rdr.headers().map_err(|e| SimError::Trace(e.to_string()))?.clone();
    let expected = ["t_ms", "ax", "ay", "az", "gx", "gy", "gz", "button"];
    if headers.iter().ne(expected.iter().copied()) {
        return Err(SimError::Trace(format!(
            "header must be {}, got {}",
            expected.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows: Vec<ImuTraceRow> = Vec::new();
    for (i, rec) in rdr.deserialize().enumerate() {
        let row: ImuTraceRow = rec.map_err(|e| SimError::Trace(e.to_string()))?;
        if !row.t_ms.is_finite() {
            return Err(SimError::Trace(format!("row {i}: non-finite timestamp")));
        }
        if rows.last().is_some_and(|prev| prev.t_ms > row.t_ms) {
            return Err(SimError::UnsortedTrace { row: i });
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_imu_trace<W: Write>(w: W, rows: &[ImuTraceRow]) -> Result<(), SimError> {
    let mut wtr = csv::Writer::from_writer(w);
    for row in rows {
        wtr.serialize(row).map_err(|e| SimError::Trace(e.to_string()))?;
    }
    wtr.flush().map_err(|e| SimError::Trace(e.to_string()))
}
