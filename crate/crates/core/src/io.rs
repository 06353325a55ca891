//! Target logs on disk: JSONL and CSV records plus the JSON track manifest.
//!
//! A record carries `t`, `track`, `v` and either a Cartesian position
//! (`x`, `y`) or a polar measurement (`r`, `phi`) with the sensor pose
//! (`sx`, `sy`, `syaw`) it was taken from. Polar records are converted to
//! the earth-fixed frame on ingestion.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{RadarTarget, TrackId};
use crate::dataset::Manifest;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("unknown log format `{0}` (expected jsonl or csv)")]
    UnknownFormat(String),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("manifest: {0}")]
    Manifest(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Jsonl,
    Csv,
}

impl Format {
    /// Format implied by a file extension.
    pub fn from_path(path: &Path) -> Result<Self, IoError> {
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        ext.parse()
    }
}

impl FromStr for Format {
    type Err = IoError;

    fn from_str(s: &str) -> Result<Self, IoError> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "ndjson" => Ok(Format::Jsonl),
            "csv" => Ok(Format::Csv),
            _ => Err(IoError::UnknownFormat(s.to_string())),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Jsonl => "jsonl",
            Format::Csv => "csv",
        })
    }
}

/// One log line as stored; every position field is optional so both
/// layouts share a schema.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub t: f64,
    pub track: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub syaw: Option<f64>,
    pub v: f64,
}

impl Record {
    pub fn cartesian(target: &RadarTarget) -> Self {
        Record {
            t: target.t,
            track: target.track.0.clone(),
            x: Some(target.x),
            y: Some(target.y),
            v: target.v,
            ..Default::default()
        }
    }

    /// Earth-fixed target; `phi` is measured from the sensor boresight,
    /// which points along `syaw`.
    pub fn to_target(&self) -> Result<RadarTarget, String> {
        let (x, y) = match (self.x, self.y, self.r, self.phi, self.sx, self.sy, self.syaw) {
            (Some(x), Some(y), None, None, None, None, None) => (x, y),
            (None, None, Some(r), Some(phi), Some(sx), Some(sy), Some(syaw)) => {
                let a = syaw + phi;
                (sx + r * a.cos(), sy + r * a.sin())
            }
            _ => return Err("need either x,y or r,phi,sx,sy,syaw".into()),
        };
        if self.track.is_empty() {
            return Err("empty track id".into());
        }
        RadarTarget::new(self.t, x, y, self.v, TrackId::new(self.track.clone())).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    /// 1-based line number in the input (the CSV header is line 1).
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ingested {
    pub targets: Vec<RadarTarget>,
    pub rejected: Vec<Rejection>,
}

impl Ingested {
    pub fn summary(&self) -> String {
        let mut s = format!("{} targets read, {} records rejected", self.targets.len(), self.rejected.len());
        for r in self.rejected.iter().take(5) {
            s.push_str(&format!("\n  line {}: {}", r.line, r.reason));
        }
        if self.rejected.len() > 5 {
            s.push_str(&format!("\n  ... {} more", self.rejected.len() - 5));
        }
        s
    }

    fn accept(&mut self, line: usize, parsed: Result<RadarTarget, String>, strict: bool) -> Result<(), IoError> {
        match parsed {
            Ok(t) => self.targets.push(t),
            Err(reason) if strict => return Err(IoError::Malformed { line, reason }),
            Err(reason) => self.rejected.push(Rejection { line, reason }),
        }
        Ok(())
    }
}

fn open(path: &Path) -> Result<File, IoError> {
    File::open(path).map_err(|source| IoError::File { path: path.display().to_string(), source })
}

fn create(path: &Path) -> Result<File, IoError> {
    File::create(path).map_err(|source| IoError::File { path: path.display().to_string(), source })
}

/// Reads a target log. Malformed or invalid records are skipped and counted;
/// with `strict` the first one aborts the read.
pub fn ingest(path: &Path, format: Format, strict: bool) -> Result<Ingested, IoError> {
    let file = open(path)?;
    match format {
        Format::Jsonl => parse_jsonl(BufReader::new(file), strict),
        Format::Csv => parse_csv(file, strict),
    }
}

pub fn parse_jsonl<R: BufRead>(reader: R, strict: bool) -> Result<Ingested, IoError> {
    let mut out = Ingested::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<Record>(&line).map_err(|e| e.to_string()).and_then(|r| r.to_target());
        out.accept(i + 1, parsed, strict)?;
    }
    Ok(out)
}

pub fn parse_csv<R: Read>(reader: R, strict: bool) -> Result<Ingested, IoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| IoError::Malformed { line: 1, reason: e.to_string() })?.clone();
    let mut out = Ingested::default();
    for (i, row) in rdr.records().enumerate() {
        let line = row.as_ref().ok().and_then(|r| r.position()).map_or(i + 2, |p| p.line() as usize);
        let parsed = row
            .map_err(|e| e.to_string())
            .and_then(|r| r.deserialize::<Record>(Some(&headers)).map_err(|e| e.to_string()))
            .and_then(|r| r.to_target());
        out.accept(line, parsed, strict)?;
    }
    Ok(out)
}

pub fn write_jsonl<W: Write>(mut w: W, targets: &[RadarTarget]) -> Result<(), IoError> {
    for t in targets {
        serde_json::to_writer(&mut w, &Record::cartesian(t)).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct CsvRow<'a> {
    t: f64,
    track: &'a str,
    x: f64,
    y: f64,
    v: f64,
}

pub fn write_csv<W: Write>(w: W, targets: &[RadarTarget]) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(w);
    for t in targets {
        wtr.serialize(CsvRow { t: t.t, track: t.track.as_str(), x: t.x, y: t.y, v: t.v })
            .map_err(std::io::Error::other)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_targets(path: &Path, format: Format, targets: &[RadarTarget]) -> Result<(), IoError> {
    let w = BufWriter::new(create(path)?);
    match format {
        Format::Jsonl => write_jsonl(w, targets),
        Format::Csv => write_csv(w, targets),
    }
}

pub fn read_manifest(path: &Path) -> Result<Manifest, IoError> {
    let file = open(path)?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| IoError::Manifest(e.to_string()))
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<(), IoError> {
    let mut w = BufWriter::new(create(path)?);
    serde_json::to_writer_pretty(&mut w, manifest).map_err(|e| IoError::Manifest(e.to_string()))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polar_record_on_boresight() {
        let line = r#"{"t": 0.5, "track": "a", "r": 10, "phi": 0, "sx": 0, "sy": 0, "syaw": 0, "v": 1.2}"#;
        let got = parse_jsonl(line.as_bytes(), true).unwrap();
        let t = &got.targets[0];
        assert_eq!((t.x, t.y, t.v), (10.0, 0.0, 1.2));
    }

    #[test]
    fn rotated_and_offset_sensor() {
        let rec = Record {
            t: 0.0,
            track: "a".into(),
            r: Some(2.0),
            phi: Some(0.25 * std::f64::consts::PI),
            sx: Some(1.0),
            sy: Some(-1.0),
            syaw: Some(0.25 * std::f64::consts::PI),
            v: 0.0,
            ..Default::default()
        };
        let t = rec.to_target().unwrap();
        assert!((t.x - 1.0).abs() < 1e-12 && (t.y - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lenient_mode_counts_rejections() {
        let text = concat!(
            r#"{"t": 0, "track": "a", "x": 1, "y": 2, "v": 1}"#,
            "\n",
            r#"{"t": 1, "track": "a", "x": 1, "y": 2, "v": NaN}"#,
            "\n\n",
            r#"{"t": 2, "track": "a", "x": 1, "v": 1}"#,
            "\n",
            r#"{"t": 3, "track": "a", "x": 1, "y": 2, "v": 99}"#,
            "\n",
        );
        let got = parse_jsonl(text.as_bytes(), false).unwrap();
        assert_eq!(got.targets.len(), 1);
        let lines: Vec<usize> = got.rejected.iter().map(|r| r.line).collect();
        assert_eq!(lines, vec![2, 4, 5]);
        let err = parse_jsonl(text.as_bytes(), true).unwrap_err();
        assert!(matches!(err, IoError::Malformed { line: 2, .. }));
    }

    #[test]
    fn csv_accepts_either_layout() {
        let text = "t,track,x,y,r,phi,sx,sy,syaw,v\n0,a,1,2,,,,,,0.5\n1,a,,,3,0,0,0,0,0.5\n2,a,1,,,,,,,0.5\n";
        let got = parse_csv(text.as_bytes(), false).unwrap();
        assert_eq!(got.targets.len(), 2);
        assert_eq!(got.targets[1].x, 3.0);
        assert_eq!(got.rejected, vec![Rejection { line: 4, reason: "need either x,y or r,phi,sx,sy,syaw".into() }]);
    }

    #[test]
    fn writers_round_trip_bit_exactly() {
        let targets: Vec<RadarTarget> = (0..50)
            .map(|i| {
                let f = i as f64;
                RadarTarget::new(f * 0.0181, (f * 0.37).sin() * 1e3, 1.0 / (f + 3.0), (f * 1.3).cos(), TrackId::new("s1/r2"))
                    .unwrap()
            })
            .collect();
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &targets).unwrap();
        assert_eq!(parse_jsonl(buf.as_slice(), true).unwrap().targets, targets);
        let mut buf = Vec::new();
        write_csv(&mut buf, &targets).unwrap();
        assert_eq!(parse_csv(buf.as_slice(), true).unwrap().targets, targets);
    }

    #[test]
    fn format_names() {
        assert_eq!(Format::from_path(Path::new("a/b.JSONL")).unwrap(), Format::Jsonl);
        assert_eq!("csv".parse::<Format>().unwrap(), Format::Csv);
        assert!(matches!("xml".parse::<Format>(), Err(IoError::UnknownFormat(_))));
    }
}
