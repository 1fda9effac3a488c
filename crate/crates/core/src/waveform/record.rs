use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spatial::Point;

/// Minimum number of bins in a waveform.
pub const MIN_BINS: usize = 10;

/// One large-footprint LiDAR return profile, bins ordered top to bottom.
///
/// `lon`/`lat` hold the footprint centre in the same CRS as the rasters it is
/// combined with; the mapping chain assumes projected meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformRecord {
    pub id: String,
    pub lon: f64,
    pub lat: f64,
    /// Elevation of bin 0, m.
    pub bin_top_elev: f64,
    /// Vertical bin size, m.
    pub bin_size: f64,
    pub intensities: Vec<f64>,
    pub sat_ndx: i32,
    pub cloud_flag: i32,
    pub srtm_elev: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acquired_at: Option<String>,
}

impl WaveformRecord {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::InvalidWaveform { id: self.id.clone(), reason });
        if self.intensities.len() < MIN_BINS {
            return bad(format!("{} bins, need at least {MIN_BINS}", self.intensities.len()));
        }
        if !(self.bin_size.is_finite() && self.bin_size > 0.0) {
            return bad(format!("bin_size must be > 0, got {}", self.bin_size));
        }
        if !self.bin_top_elev.is_finite() {
            return bad("bin_top_elev is not finite".into());
        }
        if let Some(v) = self.intensities.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return bad(format!("intensity {v} is not a finite non-negative count"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.intensities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intensities.is_empty()
    }

    #[inline]
    pub fn elev(&self, bin: usize) -> f64 {
        self.bin_top_elev - bin as f64 * self.bin_size
    }

    /// Elevations of every bin.
    pub fn elevations(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.elev(i)).collect()
    }

    pub fn location(&self) -> Point {
        Point::new(self.lon, self.lat)
    }
}

/// Reads newline-delimited JSON records; blank lines are skipped.
pub fn read_waveforms(path: impl AsRef<Path>) -> Result<Vec<WaveformRecord>> {
    let path = path.as_ref();
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: WaveformRecord = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, format!("line {}: {e}", lineno + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_waveforms(path: impl AsRef<Path>, records: &[WaveformRecord]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
