//! Trajectory files.
//!
//! Binary: `"TTKD"`, `u32` version, `u64` d, `u64` m, then `d·m` little-endian
//! `f64`, one snapshot after another. A paired file holds two such records
//! (X, then Y). CSV: a header row, one snapshot per row; paired files name
//! their columns `x1..xd, y1..yd`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ttkoop::Snapshots;

use crate::error::{CliError, CliResult};

const MAGIC: &[u8; 4] = b"TTKD";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8;

/// Contents of a trajectory file.
#[derive(Debug, Clone, PartialEq)]
pub enum Trajectory {
    Single(Snapshots),
    Paired(Snapshots, Snapshots),
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        match self {
            Trajectory::Single(z) | Trajectory::Paired(z, _) => z.dim(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Trajectory::Single(z) | Trajectory::Paired(z, _) => z.len(),
        }
    }

    pub fn is_paired(&self) -> bool {
        matches!(self, Trajectory::Paired(..))
    }
}

pub fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

pub fn write(path: &Path, traj: &Trajectory) -> CliResult<()> {
    if is_csv(path) {
        write_csv(path, traj)
    } else {
        let mut bytes = Vec::new();
        match traj {
            Trajectory::Single(z) => encode_record(z, &mut bytes),
            Trajectory::Paired(x, y) => {
                encode_record(x, &mut bytes);
                encode_record(y, &mut bytes);
            }
        }
        fs::write(path, bytes).map_err(|e| CliError::io(path, e))
    }
}

pub fn read(path: &Path) -> CliResult<Trajectory> {
    if is_csv(path) {
        read_csv(path)
    } else {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        decode(&bytes).map_err(|msg| CliError::validation(format!("{}: {msg}", path.display())))
    }
}

fn encode_record(z: &Snapshots, out: &mut Vec<u8>) {
    out.reserve(HEADER_LEN + 8 * z.as_slice().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(z.dim() as u64).to_le_bytes());
    out.extend_from_slice(&(z.len() as u64).to_le_bytes());
    for v in z.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn decode(bytes: &[u8]) -> Result<Trajectory, String> {
    let mut records = Vec::new();
    let mut rest = bytes;
    while !rest.is_empty() {
        let (z, tail) = decode_record(rest)?;
        records.push(z);
        rest = tail;
    }
    let mut it = records.into_iter();
    match (it.next(), it.next(), it.next()) {
        (Some(z), None, None) => Ok(Trajectory::Single(z)),
        (Some(x), Some(y), None) => {
            if x.dim() != y.dim() || x.len() != y.len() {
                return Err("paired records differ in shape".into());
            }
            Ok(Trajectory::Paired(x, y))
        }
        (None, ..) => Err("empty trajectory file".into()),
        _ => Err("more than two records".into()),
    }
}

fn decode_record(bytes: &[u8]) -> Result<(Snapshots, &[u8]), String> {
    if bytes.len() < HEADER_LEN {
        return Err("truncated header".into());
    }
    if &bytes[..4] != MAGIC {
        return Err("not a TTKD file (bad magic)".into());
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(format!("unsupported format version {version}"));
    }
    let d = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let m = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let len = d
        .checked_mul(m)
        .and_then(|n| usize::try_from(n).ok())
        .filter(|n| n.checked_mul(8).is_some())
        .ok_or("record size overflows")?;
    let body = &bytes[HEADER_LEN..];
    if body.len() < 8 * len {
        return Err(format!("truncated record: expected {} values", len));
    }
    let data: Vec<f64> =
        body[..8 * len].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let z = Snapshots::new(d as usize, data).map_err(|e| e.to_string())?;
    Ok((z, &body[8 * len..]))
}

fn write_csv(path: &Path, traj: &Trajectory) -> CliResult<()> {
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let d = traj.dim();
    let (header, rows): (Vec<String>, Box<dyn Iterator<Item = Vec<f64>> + '_>) = match traj {
        Trajectory::Single(z) => ((1..=d).map(|k| format!("x{k}")).collect(), Box::new(z.iter().map(|s| s.to_vec()))),
        Trajectory::Paired(x, y) => (
            (1..=d).map(|k| format!("x{k}")).chain((1..=d).map(|k| format!("y{k}"))).collect(),
            Box::new(x.iter().zip(y.iter()).map(|(a, b)| [a, b].concat())),
        ),
    };
    let fail = |e: csv::Error| CliError::io(path, e);
    w.write_record(&header).map_err(fail)?;
    for row in rows {
        w.write_record(row.iter().map(|v| format_float(*v))).map_err(fail)?;
    }
    w.into_inner().map_err(|e| CliError::io(path, e))?.flush().map_err(|e| CliError::io(path, e))
}

fn read_csv(path: &Path) -> CliResult<Trajectory> {
    let bad = |msg: String| CliError::validation(format!("{}: {msg}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => CliError::io(path, e),
        _ => bad(e.to_string()),
    })?;
    let header: Vec<String> = r.headers().map_err(|e| bad(e.to_string()))?.iter().map(|h| h.trim().to_string()).collect();
    if header.is_empty() {
        return Err(bad("no columns".into()));
    }
    let width = header.len();
    let mut data = Vec::new();
    for (row, record) in r.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        for field in record.iter() {
            let v: f64 = field.trim().parse().map_err(|_| bad(format!("row {}: not a number: {field:?}", row + 2)))?;
            data.push(v);
        }
    }
    let paired = width % 2 == 0 && {
        let d = width / 2;
        (1..=d).all(|k| header[k - 1] == format!("x{k}") && header[d + k - 1] == format!("y{k}"))
    };
    if !paired {
        return Ok(Trajectory::Single(Snapshots::new(width, data)?));
    }
    let d = width / 2;
    let (mut xs, mut ys) = (Vec::with_capacity(data.len() / 2), Vec::with_capacity(data.len() / 2));
    for row in data.chunks_exact(width) {
        xs.extend_from_slice(&row[..d]);
        ys.extend_from_slice(&row[d..]);
    }
    Ok(Trajectory::Paired(Snapshots::new(d, xs)?, Snapshots::new(d, ys)?))
}

/// 17 significant digits.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}
