//! Versioned dataset files.
//!
//! The text format is line-delimited JSON: one file header, then per
//! trajectory a header line followed by one line per transition. The binary
//! format stores the same header as JSON followed by little-endian records.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::actions::{AiAction, HumanAction};
use crate::cognitive::{CognitiveState, DriverProfile, Level};
use crate::env::{EnvSpec, RewardBreakdown};
use crate::error::{Error, Result};

use super::{Dataset, Trajectory, Transition};

pub const FORMAT_NAME: &str = "hmiway-dataset";
pub const FORMAT_VERSION: u32 = 1;
const BINARY_MAGIC: &[u8; 8] = b"HMWYDSB\0";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileHeader {
    format: String,
    version: u32,
    env_spec: EnvSpec,
    profiles: Vec<DriverProfile>,
    labeled_fraction: f64,
    trajectories: usize,
    transitions: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrajectoryHeader {
    driver_id: u32,
    trait_label: Option<Level>,
    preference_label: Option<Level>,
    seed: u64,
    length: usize,
}

impl FileHeader {
    fn of(dataset: &Dataset) -> Self {
        Self {
            format: FORMAT_NAME.to_string(),
            version: FORMAT_VERSION,
            env_spec: dataset.env_spec.clone(),
            profiles: dataset.profiles.clone(),
            labeled_fraction: dataset.labeled_fraction,
            trajectories: dataset.trajectories.len(),
            transitions: dataset.transition_count(),
        }
    }

    /// Checks format and version before the rest of the schema so that
    /// files from other versions report a version error.
    fn parse(text: &str, line: usize) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Schema { line, message: e.to_string() })?;
        if value.get("format").and_then(|f| f.as_str()) != Some(FORMAT_NAME) {
            return Err(Error::Schema { line, message: format!("not a {FORMAT_NAME} file") });
        }
        let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0);
        if version != u64::from(FORMAT_VERSION) {
            return Err(Error::VersionMismatch { found: version as u32, expected: FORMAT_VERSION });
        }
        serde_json::from_value(value).map_err(|e| Error::Schema { line, message: e.to_string() })
    }
}

/// Writes the binary format when the path ends in `.bin`, text otherwise.
pub fn save(dataset: &Dataset, path: &Path) -> Result<()> {
    if is_binary(path) {
        save_binary(dataset, path)
    } else {
        save_text(dataset, path)
    }
}

pub fn load(path: &Path) -> Result<Dataset> {
    if is_binary(path) {
        load_binary(path)
    } else {
        load_text(path)
    }
}

fn is_binary(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "bin")
}

fn to_line<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string(value).map_err(|e| Error::Schema { line: 0, message: e.to_string() })
}

pub fn save_text(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{}", to_line(&FileHeader::of(dataset))?)?;
    for t in &dataset.trajectories {
        let header = TrajectoryHeader {
            driver_id: t.driver_id,
            trait_label: t.trait_label,
            preference_label: t.preference_label,
            seed: t.seed,
            length: t.len(),
        };
        writeln!(out, "{}", to_line(&header)?)?;
        for tr in &t.transitions {
            writeln!(out, "{}", to_line(tr)?)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn load_text(path: &Path) -> Result<Dataset> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let mut line_no = 0usize;
    let mut next_line = |what: &str| -> Result<(usize, String)> {
        line_no += 1;
        match lines.next() {
            Some(l) => Ok((line_no, l?)),
            None => Err(Error::Truncated(format!("file ended at line {line_no} while reading {what}"))),
        }
    };

    let (n, text) = next_line("the file header")?;
    let header = FileHeader::parse(&text, n)?;
    let mut trajectories = Vec::with_capacity(header.trajectories);
    for k in 0..header.trajectories {
        let (n, text) = next_line(&format!("trajectory {k} header"))?;
        let th: TrajectoryHeader =
            serde_json::from_str(&text).map_err(|e| Error::Schema { line: n, message: e.to_string() })?;
        let mut transitions = Vec::with_capacity(th.length.min(1 << 16));
        for j in 0..th.length {
            let (n, text) = next_line(&format!("transition {j} of trajectory {k}"))?;
            let tr: Transition = serde_json::from_str(&text).map_err(|e| {
                if serde_json::from_str::<TrajectoryHeader>(&text).is_ok() {
                    Error::Truncated(format!("trajectory {k} declares {} transitions, found {j}", th.length))
                } else {
                    Error::Schema { line: n, message: e.to_string() }
                }
            })?;
            transitions.push(tr);
        }
        trajectories.push(Trajectory {
            driver_id: th.driver_id,
            trait_label: th.trait_label,
            preference_label: th.preference_label,
            seed: th.seed,
            transitions,
        });
    }
    while let Ok((n, text)) = next_line("trailing data") {
        if !text.trim().is_empty() {
            return Err(Error::Schema { line: n, message: "unexpected data after the last trajectory".into() });
        }
    }
    finish(header, trajectories)
}

fn finish(header: FileHeader, trajectories: Vec<Trajectory>) -> Result<Dataset> {
    let dataset = Dataset {
        env_spec: header.env_spec,
        profiles: header.profiles,
        labeled_fraction: header.labeled_fraction,
        trajectories,
    };
    if dataset.transition_count() != header.transitions {
        return Err(Error::Truncated(format!(
            "header declares {} transitions, found {}",
            header.transitions,
            dataset.transition_count()
        )));
    }
    dataset.validate()?;
    Ok(dataset)
}

fn eof_as_truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Truncated("unexpected end of binary dataset".into())
    } else {
        Error::Io(e)
    }
}

fn level_code(l: Option<Level>) -> u8 {
    match l {
        None => 0,
        Some(Level::Low) => 1,
        Some(Level::High) => 2,
    }
}

fn level_from(code: u8) -> Result<Option<Level>> {
    match code {
        0 => Ok(None),
        1 => Ok(Some(Level::Low)),
        2 => Ok(Some(Level::High)),
        c => Err(Error::Schema { line: 0, message: format!("invalid label code {c}") }),
    }
}

fn human_from(code: u8) -> Result<HumanAction> {
    HumanAction::from_index(code as usize)
        .ok_or_else(|| Error::Schema { line: 0, message: format!("invalid human action code {code}") })
}

fn ai_from(code: u8) -> Result<AiAction> {
    AiAction::from_index(code as usize)
        .ok_or_else(|| Error::Schema { line: 0, message: format!("invalid AI action code {code}") })
}

pub fn save_binary(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(BINARY_MAGIC)?;
    out.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    let header = serde_json::to_vec(&FileHeader::of(dataset))
        .map_err(|e| Error::Schema { line: 0, message: e.to_string() })?;
    out.write_u64::<LittleEndian>(header.len() as u64)?;
    out.write_all(&header)?;
    let dim = dataset.env_spec.driver_obs_dim;
    for t in &dataset.trajectories {
        out.write_u32::<LittleEndian>(t.driver_id)?;
        out.write_u8(level_code(t.trait_label))?;
        out.write_u8(level_code(t.preference_label))?;
        out.write_u64::<LittleEndian>(t.seed)?;
        out.write_u64::<LittleEndian>(t.len() as u64)?;
        for tr in &t.transitions {
            for v in [&tr.obs, &tr.sensor_obs, &tr.next_obs, &tr.next_sensor_obs] {
                if v.len() != dim {
                    return Err(Error::WidthMismatch { expected: dim, got: v.len() });
                }
                for x in v.iter() {
                    out.write_f64::<LittleEndian>(*x)?;
                }
            }
            out.write_u8(tr.human_action.index() as u8)?;
            out.write_u8(tr.ai_action.index() as u8)?;
            out.write_u8(tr.applied.index() as u8)?;
            for x in tr.rewards.as_array() {
                out.write_f64::<LittleEndian>(x)?;
            }
            let c = &tr.cognitive;
            out.write_u8(u8::from(c.distracted))?;
            out.write_u8(u8::from(c.accepted))?;
            out.write_u32::<LittleEndian>(c.counter)?;
            out.write_u8(c.applied.map_or(u8::MAX, |a| a.index() as u8))?;
            out.write_u8(u8::from(tr.done))?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn load_binary(path: &Path) -> Result<Dataset> {
    let mut input = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(eof_as_truncated)?;
    if &magic != BINARY_MAGIC {
        return Err(Error::Schema { line: 0, message: format!("not a binary {FORMAT_NAME} file") });
    }
    let version = input.read_u32::<LittleEndian>().map_err(eof_as_truncated)?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch { found: version, expected: FORMAT_VERSION });
    }
    let header_len = input.read_u64::<LittleEndian>().map_err(eof_as_truncated)?;
    let mut header_bytes = Vec::new();
    (&mut input).take(header_len).read_to_end(&mut header_bytes)?;
    if header_bytes.len() as u64 != header_len {
        return Err(Error::Truncated("binary header is shorter than declared".into()));
    }
    let text = String::from_utf8(header_bytes).map_err(|e| Error::Schema { line: 0, message: e.to_string() })?;
    let header = FileHeader::parse(&text, 0)?;
    let dim = header.env_spec.driver_obs_dim;

    let read_vec = |input: &mut BufReader<File>| -> Result<Vec<f64>> {
        let mut v = vec![0.0; dim];
        input.read_f64_into::<LittleEndian>(&mut v).map_err(eof_as_truncated)?;
        Ok(v)
    };

    let mut trajectories = Vec::with_capacity(header.trajectories.min(1 << 16));
    for _ in 0..header.trajectories {
        let driver_id = input.read_u32::<LittleEndian>().map_err(eof_as_truncated)?;
        let trait_label = level_from(input.read_u8().map_err(eof_as_truncated)?)?;
        let preference_label = level_from(input.read_u8().map_err(eof_as_truncated)?)?;
        let seed = input.read_u64::<LittleEndian>().map_err(eof_as_truncated)?;
        let length = input.read_u64::<LittleEndian>().map_err(eof_as_truncated)? as usize;
        let mut transitions = Vec::with_capacity(length.min(1 << 16));
        for _ in 0..length {
            let obs = read_vec(&mut input)?;
            let sensor_obs = read_vec(&mut input)?;
            let next_obs = read_vec(&mut input)?;
            let next_sensor_obs = read_vec(&mut input)?;
            let human_action = human_from(input.read_u8().map_err(eof_as_truncated)?)?;
            let ai_action = ai_from(input.read_u8().map_err(eof_as_truncated)?)?;
            let applied = human_from(input.read_u8().map_err(eof_as_truncated)?)?;
            let mut terms = [0.0; 8];
            input.read_f64_into::<LittleEndian>(&mut terms).map_err(eof_as_truncated)?;
            let distracted = input.read_u8().map_err(eof_as_truncated)? != 0;
            let accepted = input.read_u8().map_err(eof_as_truncated)? != 0;
            let counter = input.read_u32::<LittleEndian>().map_err(eof_as_truncated)?;
            let applied_code = input.read_u8().map_err(eof_as_truncated)?;
            let last_applied = if applied_code == u8::MAX { None } else { Some(human_from(applied_code)?) };
            let done = input.read_u8().map_err(eof_as_truncated)? != 0;
            transitions.push(Transition {
                obs,
                sensor_obs,
                human_action,
                ai_action,
                applied,
                rewards: RewardBreakdown::from_array(terms),
                cognitive: CognitiveState { distracted, accepted, counter, applied: last_applied },
                next_obs,
                next_sensor_obs,
                done,
            });
        }
        trajectories.push(Trajectory { driver_id, trait_label, preference_label, seed, transitions });
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(Error::Schema { line: 0, message: "unexpected data after the last trajectory".into() });
    }
    finish(header, trajectories)
}
