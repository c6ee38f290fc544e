//! CSV formats for sensor series, cycle events and per-minute predictions,
//! and the on-disk dataset directory.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use beltwatch_core::datamodel::{validate_events, EventViolation};
use beltwatch_core::pipeline::MinutePrediction;
use beltwatch_core::synth::{Dataset, Provenance};
use beltwatch_core::{CycleClass, CycleEvent, OperationMode, SensorRecord};

use crate::error::FormatError;

pub const SENSOR_HEADER: [&str; 5] = [
    "timestamp_min",
    "month",
    "speed_rpm",
    "high_pressure_bar",
    "low_pressure_bar",
];
pub const MODE_COLUMN: &str = "mode";
pub const EVENT_HEADER: [&str; 3] = ["onset_min", "offset_min", "class"];
pub const MINUTE_HEADER: [&str; 3] = ["timestamp_min", "predicted_mode", "filtered_mode"];

pub const SENSORS_FILE: &str = "sensors.csv";
pub const EVENTS_FILE: &str = "events.csv";
pub const PROVENANCE_FILE: &str = "provenance.json";

/// How to treat the optional `mode` column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModeColumn {
    /// Read it when present.
    #[default]
    Optional,
    /// Fail if the header lacks it or a row leaves it empty.
    Required,
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r)
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

fn open(path: &Path) -> Result<BufReader<File>, FormatError> {
    File::open(path).map(BufReader::new).map_err(|e| FormatError::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, FormatError> {
    File::create(path).map(BufWriter::new).map_err(|e| FormatError::io(path, e))
}

fn check_header(path: &Path, got: &csv::StringRecord, expected: &[&str]) -> Result<(), FormatError> {
    let ok = got.len() == expected.len() && got.iter().zip(expected).all(|(g, e)| g == *e);
    if ok {
        Ok(())
    } else {
        Err(FormatError::parse(
            path,
            1,
            format!("header {:?}, expected {:?}", got.iter().collect::<Vec<_>>(), expected),
        ))
    }
}

fn field<T: std::str::FromStr>(row: &csv::StringRecord, i: usize, name: &str) -> Result<T, String> {
    let raw = row.get(i).ok_or_else(|| format!("missing {name}"))?;
    raw.parse().map_err(|_| format!("bad {name} {raw:?}"))
}

fn line_of(row: &csv::StringRecord) -> u64 {
    row.position().map_or(0, |p| p.line())
}

/// Streams sensor records out of a CSV source, checking each row and the
/// timestamp order as it goes.
pub struct SensorReader<R: Read> {
    path: PathBuf,
    inner: csv::Reader<R>,
    row: csv::StringRecord,
    has_mode: bool,
    require_mode: bool,
    last: Option<i64>,
}

impl SensorReader<BufReader<File>> {
    pub fn open(path: &Path, mode: ModeColumn) -> Result<Self, FormatError> {
        Self::new(open(path)?, path, mode)
    }
}

impl<R: Read> SensorReader<R> {
    /// `path` only labels error messages.
    pub fn new(source: R, path: &Path, mode: ModeColumn) -> Result<Self, FormatError> {
        let mut inner = reader(source);
        let header = inner.headers().map_err(|e| FormatError::csv(path, e))?.clone();
        let has_mode = header.len() == SENSOR_HEADER.len() + 1;
        let mut expected = SENSOR_HEADER.to_vec();
        if has_mode || mode == ModeColumn::Required {
            expected.push(MODE_COLUMN);
        }
        check_header(path, &header, &expected)?;
        Ok(SensorReader {
            path: path.to_path_buf(),
            inner,
            row: csv::StringRecord::new(),
            has_mode,
            require_mode: mode == ModeColumn::Required,
            last: None,
        })
    }

    pub fn has_mode(&self) -> bool {
        self.has_mode
    }

    fn parse_row(&self) -> Result<SensorRecord, String> {
        let row = &self.row;
        if row.len() != SENSOR_HEADER.len() + usize::from(self.has_mode) {
            return Err(format!("expected {} fields, got {}", SENSOR_HEADER.len() + usize::from(self.has_mode), row.len()));
        }
        let timestamp: i64 = field(row, 0, "timestamp")?;
        let month = row.get(1).unwrap_or_default();
        if month.is_empty() {
            return Err("empty month".into());
        }
        let mut values = [0.0f64; 3];
        for (k, v) in values.iter_mut().enumerate() {
            let name = SENSOR_HEADER[k + 2];
            *v = field(row, k + 2, name)?;
            if !v.is_finite() {
                return Err(format!("non-finite {name}"));
            }
            if *v < 0.0 {
                return Err(format!("negative {name} {}", row.get(k + 2).unwrap_or_default()));
            }
        }
        let mut rec = SensorRecord::new(timestamp, month, values[0], values[1], values[2]);
        if self.has_mode {
            let raw = row.get(5).unwrap_or_default();
            if raw.is_empty() {
                if self.require_mode {
                    return Err("missing mode label".into());
                }
            } else {
                let m: OperationMode = raw.parse().map_err(|e| format!("{e}"))?;
                if m == OperationMode::Pad {
                    return Err("Pad is not a sensor mode".into());
                }
                rec.mode = Some(m);
            }
        }
        if let Some(prev) = self.last {
            if timestamp <= prev {
                return Err(format!("timestamp {timestamp} not after {prev}"));
            }
        }
        Ok(rec)
    }
}

impl<R: Read> Iterator for SensorReader<R> {
    type Item = Result<SensorRecord, FormatError>;

    fn next(&mut self) -> Option<Self::Item> {
        match self.inner.read_record(&mut self.row) {
            Ok(false) => None,
            Err(e) => Some(Err(FormatError::csv(&self.path, e))),
            Ok(true) => {
                let line = line_of(&self.row);
                Some(match self.parse_row() {
                    Ok(r) => {
                        self.last = Some(r.timestamp);
                        Ok(r)
                    }
                    Err(msg) => Err(FormatError::parse(&self.path, line, msg)),
                })
            }
        }
    }
}

pub fn read_sensors(path: &Path, mode: ModeColumn) -> Result<Vec<SensorRecord>, FormatError> {
    SensorReader::open(path, mode)?.collect()
}

pub fn read_sensors_from<R: Read>(source: R, label: &Path, mode: ModeColumn) -> Result<Vec<SensorRecord>, FormatError> {
    SensorReader::new(source, label, mode)?.collect()
}

/// Writes the `mode` column when any record carries a label.
pub fn write_sensors_to<W: Write>(w: W, records: &[SensorRecord]) -> Result<(), csv::Error> {
    let with_mode = records.iter().any(|r| r.mode.is_some());
    let mut out = writer(w);
    let mut header = SENSOR_HEADER.to_vec();
    if with_mode {
        header.push(MODE_COLUMN);
    }
    out.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.timestamp.to_string(),
            r.month.clone(),
            r.speed.to_string(),
            r.high_pressure.to_string(),
            r.low_pressure.to_string(),
        ];
        if with_mode {
            row.push(r.mode.map(|m| m.as_str().to_string()).unwrap_or_default());
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_sensors(path: &Path, records: &[SensorRecord]) -> Result<(), FormatError> {
    write_sensors_to(create(path)?, records).map_err(|e| FormatError::csv(path, e))
}

pub fn read_events_from<R: Read>(source: R, path: &Path) -> Result<Vec<CycleEvent>, FormatError> {
    let mut rd = reader(source);
    let header = rd.headers().map_err(|e| FormatError::csv(path, e))?.clone();
    check_header(path, &header, &EVENT_HEADER)?;
    let mut events = Vec::new();
    let mut lines = Vec::new();
    for row in rd.records() {
        let row = row.map_err(|e| FormatError::csv(path, e))?;
        let line = line_of(&row);
        let parse = || -> Result<CycleEvent, String> {
            if row.len() != EVENT_HEADER.len() {
                return Err(format!("expected 3 fields, got {}", row.len()));
            }
            let onset: i64 = field(&row, 0, "onset")?;
            let offset: i64 = field(&row, 1, "offset")?;
            let class: CycleClass = row[2].parse().map_err(|e| format!("{e}"))?;
            Ok(CycleEvent::new(onset, offset, class))
        };
        events.push(parse().map_err(|m| FormatError::parse(path, line, m))?);
        lines.push(line);
    }
    if let Some(v) = validate_events(&events).first() {
        let (i, msg) = match *v {
            EventViolation::OnsetNotBeforeOffset(i) => (i, "onset >= offset"),
            EventViolation::Overlap(i) => (i, "overlapping reference cycles"),
        };
        return Err(FormatError::parse(path, lines[i], msg.into()));
    }
    Ok(events)
}

pub fn read_events(path: &Path) -> Result<Vec<CycleEvent>, FormatError> {
    read_events_from(open(path)?, path)
}

/// Incremental events writer; used both for whole lists and for cycles
/// emitted one at a time by the streaming pipeline.
pub struct EventWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> EventWriter<W> {
    pub fn new(w: W) -> Result<Self, csv::Error> {
        let mut inner = writer(w);
        inner.write_record(EVENT_HEADER)?;
        Ok(EventWriter { inner })
    }

    pub fn write(&mut self, e: &CycleEvent) -> Result<(), csv::Error> {
        self.inner
            .write_record([e.onset.to_string(), e.offset.to_string(), e.class.as_str().to_string()])
    }

    pub fn finish(mut self) -> Result<(), csv::Error> {
        self.inner.flush()?;
        Ok(())
    }
}

pub fn write_events_to<W: Write>(w: W, events: &[CycleEvent]) -> Result<(), csv::Error> {
    let mut out = EventWriter::new(w)?;
    for e in events {
        out.write(e)?;
    }
    out.finish()
}

pub fn write_events(path: &Path, events: &[CycleEvent]) -> Result<(), FormatError> {
    write_events_to(create(path)?, events).map_err(|e| FormatError::csv(path, e))
}

pub struct MinuteWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> MinuteWriter<W> {
    pub fn new(w: W) -> Result<Self, csv::Error> {
        let mut inner = writer(w);
        inner.write_record(MINUTE_HEADER)?;
        Ok(MinuteWriter { inner })
    }

    pub fn write(&mut self, m: &MinutePrediction) -> Result<(), csv::Error> {
        self.inner
            .write_record([m.timestamp.to_string().as_str(), m.predicted.as_str(), m.filtered.as_str()])
    }

    pub fn finish(mut self) -> Result<(), csv::Error> {
        self.inner.flush()?;
        Ok(())
    }
}

pub fn read_minutes_from<R: Read>(source: R, path: &Path) -> Result<Vec<MinutePrediction>, FormatError> {
    let mut rd = reader(source);
    let header = rd.headers().map_err(|e| FormatError::csv(path, e))?.clone();
    check_header(path, &header, &MINUTE_HEADER)?;
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row.map_err(|e| FormatError::csv(path, e))?;
        let parse = || -> Result<MinutePrediction, String> {
            let mode = |i: usize| row.get(i).unwrap_or_default().parse::<OperationMode>().map_err(|e| format!("{e}"));
            Ok(MinutePrediction {
                timestamp: field(&row, 0, "timestamp")?,
                predicted: mode(1)?,
                filtered: mode(2)?,
            })
        };
        out.push(parse().map_err(|m| FormatError::parse(path, line_of(&row), m))?);
    }
    Ok(out)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), FormatError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| FormatError::json(path, e))?;
    s.push('\n');
    fs::write(path, s).map_err(|e| FormatError::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, FormatError> {
    let bytes = fs::read(path).map_err(|e| FormatError::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| FormatError::json(path, e))
}

/// Paths of the files making up a dataset directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetFiles {
    pub sensors: PathBuf,
    pub events: PathBuf,
    pub provenance: PathBuf,
}

impl DatasetFiles {
    pub fn in_dir(dir: &Path) -> Self {
        DatasetFiles {
            sensors: dir.join(SENSORS_FILE),
            events: dir.join(EVENTS_FILE),
            provenance: dir.join(PROVENANCE_FILE),
        }
    }

    pub fn all(&self) -> [&Path; 3] {
        [&self.sensors, &self.events, &self.provenance]
    }
}

/// Creates `dir` if needed and writes the three dataset files.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<DatasetFiles, FormatError> {
    fs::create_dir_all(dir).map_err(|e| FormatError::io(dir, e))?;
    let files = DatasetFiles::in_dir(dir);
    write_sensors(&files.sensors, &dataset.records)?;
    write_events(&files.events, &dataset.reference_cycles)?;
    write_json(&files.provenance, &dataset.provenance)?;
    Ok(files)
}

/// Reads a dataset directory. Without a provenance file the dataset is
/// marked as ingested from the two CSV files.
pub fn read_dataset(dir: &Path) -> Result<Dataset, FormatError> {
    let files = DatasetFiles::in_dir(dir);
    let records = read_sensors(&files.sensors, ModeColumn::Optional)?;
    let reference_cycles = read_events(&files.events)?;
    let provenance = if files.provenance.exists() {
        read_json(&files.provenance)?
    } else {
        Provenance::Ingested {
            sensors: files.sensors.display().to_string(),
            events: files.events.display().to_string(),
        }
    };
    let d = Dataset {
        records,
        reference_cycles,
        provenance,
    };
    d.validate().map_err(|e| FormatError::invalid(dir, e.to_string()))?;
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sensors(text: &str) -> Result<Vec<SensorRecord>, FormatError> {
        read_sensors_from(text.as_bytes(), Path::new("s.csv"), ModeColumn::Optional)
    }

    fn events(text: &str) -> Result<Vec<CycleEvent>, FormatError> {
        read_events_from(text.as_bytes(), Path::new("e.csv"))
    }

    const H: &str = "timestamp_min,month,speed_rpm,high_pressure_bar,low_pressure_bar";

    #[test]
    fn sensor_row_with_mode() {
        let r = sensors(&format!("{H},mode\n26838000,2021-06,44.8,180.2,8.1,Active\n")).unwrap();
        assert_eq!(r, vec![SensorRecord::new(26838000, "2021-06", 44.8, 180.2, 8.1).with_mode(OperationMode::Active)]);
    }

    #[test]
    fn negative_speed_reports_line() {
        let e = sensors(&format!("{H}\n1,m,1,1,1\n2,m,-3,1,1\n")).unwrap_err();
        assert!(e.to_string().contains("s.csv:3:"), "{e}");
        assert!(e.to_string().contains("speed"), "{e}");
    }

    #[test]
    fn header_only_is_empty() {
        assert!(sensors(&format!("{H}\n")).unwrap().is_empty());
        assert!(events("onset_min,offset_min,class\n").unwrap().is_empty());
    }

    #[test]
    fn sensor_errors() {
        assert!(sensors(&format!("{H},mode\n1,m,1,1,1,Sleeping\n")).is_err());
        assert!(sensors(&format!("{H},mode\n1,m,1,1,1,Pad\n")).is_err());
        assert!(sensors(&format!("{H}\n2,m,1,1,1\n1,m,1,1,1\n")).is_err());
        assert!(sensors(&format!("{H}\n1,m,x,1,1\n")).is_err());
        assert!(sensors(&format!("{H}\n1,m,NaN,1,1\n")).is_err());
        assert!(sensors("time,month,speed,hp,lp\n").is_err());
        let req = read_sensors_from(format!("{H}\n1,m,1,1,1\n").as_bytes(), Path::new("s"), ModeColumn::Required);
        assert!(req.is_err());
    }

    #[test]
    fn event_rows() {
        let e = events("onset_min,offset_min,class\n1000,1020,normal\n1030,1040,ABNORMAL\n").unwrap();
        assert_eq!(
            e,
            vec![
                CycleEvent::new(1000, 1020, CycleClass::Normal),
                CycleEvent::new(1030, 1040, CycleClass::Abnormal)
            ]
        );
        let err = events("onset_min,offset_min,class\n1020,1000,normal\n").unwrap_err();
        assert!(err.to_string().contains("onset >= offset"), "{err}");
        let err = events("onset_min,offset_min,class\n1000,1020,normal\n1010,1030,normal\n").unwrap_err();
        assert!(err.to_string().contains("overlapping reference cycles"), "{err}");
        assert!(err.to_string().contains("e.csv:3:"), "{err}");
        assert!(events("onset_min,offset_min,class\n1,2,weird\n").is_err());
    }

    #[test]
    fn written_files_use_lf() {
        let mut buf = Vec::new();
        write_events_to(&mut buf, &[CycleEvent::new(1, 2, CycleClass::Normal)]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "onset_min,offset_min,class\n1,2,normal\n");
    }

    #[test]
    fn minutes_round_trip() {
        let m = MinutePrediction {
            timestamp: 5,
            predicted: OperationMode::Idle,
            filtered: OperationMode::Active,
        };
        let mut buf = Vec::new();
        let mut w = MinuteWriter::new(&mut buf).unwrap();
        w.write(&m).unwrap();
        w.finish().unwrap();
        assert_eq!(read_minutes_from(buf.as_slice(), Path::new("m")).unwrap(), vec![m]);
    }
}
