//! Trajectory file format.
//!
//! ```text
//! magic "REEL" | version u32 | nx u32 | ny u32 | dx f64 | dt f64
//! model id str | n_evolving u32 | n_fields u32 | field names str...
//! n_params u32 | (name str, theta_true f64)... | seed u64 | config str
//! n_states u32 | payload
//! ```
//!
//! Strings are a `u32` byte length followed by UTF-8. The payload holds, for
//! every state and every field in header order, `nx * ny` little-endian
//! `f64` values in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{SimError, Trajectory};
use crate::field::{GridSpec, ScalarField};
use crate::io::{ByteReader, ByteWriter, FormatError};
use crate::model::{ModelKind, ModelState};

pub const DATASET_MAGIC: &[u8; 4] = b"REEL";
pub const DATASET_VERSION: u32 = 1;

/// Everything in a dataset file except the field payload.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetHeader {
    pub version: u32,
    pub grid: GridSpec,
    pub model: ModelKind,
    /// Evolving fields followed by auxiliary fields.
    pub field_names: Vec<String>,
    pub n_evolving: usize,
    pub param_names: Vec<String>,
    pub theta_true: Vec<f64>,
    pub seed: u64,
    pub config_text: String,
    pub n_states: usize,
    /// Size of the header in bytes; the payload starts here.
    pub header_bytes: u64,
}

impl DatasetHeader {
    pub fn payload_bytes(&self) -> u64 {
        (self.n_states * self.field_names.len() * self.grid.len() * 8) as u64
    }
}

fn write_to<W: Write>(traj: &Trajectory, w: W) -> Result<(), std::io::Error> {
    let mut w = ByteWriter::new(w);
    let names: Vec<String> = traj
        .states
        .first()
        .map(|s| s.names().to_vec())
        .unwrap_or_else(|| traj.field_names.clone());
    w.bytes(DATASET_MAGIC)?;
    w.u32(DATASET_VERSION)?;
    w.len_u32(traj.grid.nx)?;
    w.len_u32(traj.grid.ny)?;
    w.f64(traj.grid.dx)?;
    w.f64(traj.grid.dt)?;
    w.str(traj.model.id())?;
    w.len_u32(traj.field_names.len())?;
    w.len_u32(names.len())?;
    for n in &names {
        w.str(n)?;
    }
    w.len_u32(traj.param_names.len())?;
    for (n, v) in traj.param_names.iter().zip(&traj.theta_true) {
        w.str(n)?;
        w.f64(*v)?;
    }
    w.u64(traj.seed)?;
    w.str(&traj.config_text)?;
    w.len_u32(traj.states.len())?;
    for s in &traj.states {
        for n in &names {
            let f = s
                .get(n)
                .ok_or_else(|| std::io::Error::other(format!("state is missing field '{n}'")))?;
            w.f64s(f.data())?;
        }
    }
    w.into_inner().flush()
}

pub fn save(traj: &Trajectory, path: &Path) -> Result<(), SimError> {
    if let Some(first) = traj.states.first() {
        if traj.states.iter().any(|s| s.names() != first.names()) {
            return Err(SimError::Mismatch("states carry different field sets".into()));
        }
    }
    let file = File::create(path).map_err(|e| FormatError::io(path, e))?;
    write_to(traj, BufWriter::new(file)).map_err(|e| FormatError::io(path, e))?;
    Ok(())
}

fn read_header_from<R: Read>(r: &mut ByteReader<R>) -> Result<DatasetHeader, FormatError> {
    r.magic(DATASET_MAGIC)?;
    let at = r.offset();
    let version = r.u32("version")?;
    if version != DATASET_VERSION {
        return Err(FormatError::Corrupt {
            offset: at,
            message: format!("unsupported version {version} (expected {DATASET_VERSION})"),
        });
    }
    let at = r.offset();
    let nx = r.u32("nx")? as usize;
    let ny = r.u32("ny")? as usize;
    let dx = r.f64("dx")?;
    let dt = r.f64("dt")?;
    let grid = GridSpec::new(nx, ny, dx, dt).map_err(|e| FormatError::Corrupt {
        offset: at,
        message: e.to_string(),
    })?;
    let at = r.offset();
    let id = r.str("model id")?;
    let model: ModelKind = id.parse().map_err(|_| FormatError::Corrupt {
        offset: at,
        message: format!("unknown model id '{id}'"),
    })?;
    let n_evolving = r.len("evolving field count", 4096)?;
    let n_fields = r.len("field count", 4096)?;
    if n_evolving > n_fields {
        return Err(r.corrupt("more evolving fields than fields"));
    }
    let field_names = (0..n_fields)
        .map(|_| r.str("field name"))
        .collect::<Result<Vec<_>, _>>()?;
    let n_params = r.len("parameter count", 4096)?;
    let mut param_names = Vec::with_capacity(n_params);
    let mut theta_true = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        param_names.push(r.str("parameter name")?);
        theta_true.push(r.f64("parameter value")?);
    }
    let seed = r.u64("seed")?;
    let config_text = r.str("config")?;
    let n_states = r.len("state count", usize::MAX)?;
    Ok(DatasetHeader {
        version,
        grid,
        model,
        field_names,
        n_evolving,
        param_names,
        theta_true,
        seed,
        config_text,
        n_states,
        header_bytes: r.offset(),
    })
}

/// Reads only the header; the payload is not touched.
pub fn read_header(path: &Path) -> Result<DatasetHeader, SimError> {
    let file = File::open(path).map_err(|e| FormatError::io(path, e))?;
    let mut r = ByteReader::new(BufReader::new(file));
    Ok(read_header_from(&mut r)?)
}

pub fn load(path: &Path) -> Result<Trajectory, SimError> {
    let file = File::open(path).map_err(|e| FormatError::io(path, e))?;
    let mut r = ByteReader::new(BufReader::new(file));
    let h = read_header_from(&mut r)?;
    let mut states = Vec::with_capacity(h.n_states);
    for t in 0..h.n_states {
        let mut s = ModelState::new();
        for name in &h.field_names {
            let data = r.f64s(h.grid.len(), &format!("state {t} field '{name}'"))?;
            let f = ScalarField::new(h.grid, data).expect("length matches grid");
            s.insert(name, f).expect("shared grid");
        }
        states.push(s);
    }
    r.finish()?;
    Ok(Trajectory {
        model: h.model,
        grid: h.grid,
        field_names: h.field_names[..h.n_evolving].to_vec(),
        param_names: h.param_names,
        theta_true: h.theta_true,
        seed: h.seed,
        config_text: h.config_text,
        states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SimConfig;
    use crate::sim::simulate;

    fn traj(kind: ModelKind, steps: usize) -> Trajectory {
        simulate(&SimConfig {
            steps,
            ..SimConfig::preset(kind, 8)
        })
        .unwrap()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        for kind in [ModelKind::Heat, ModelKind::SinteringLite, ModelKind::Nanovoid] {
            let t = traj(kind, 5);
            let p = dir.path().join(format!("{kind}.reel"));
            save(&t, &p).unwrap();
            let back = load(&p).unwrap();
            assert_eq!(t, back);
            let h = read_header(&p).unwrap();
            let size = std::fs::metadata(&p).unwrap().len();
            assert_eq!(size, h.header_bytes + h.payload_bytes());
            assert_eq!(h.n_states, 6);
        }
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.reel");
        save(&traj(ModelKind::Heat, 3), &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        let cut = dir.path().join("cut.reel");
        std::fs::write(&cut, &bytes[..bytes.len() - 17]).unwrap();
        match load(&cut) {
            Err(SimError::Format(FormatError::Corrupt { offset, message })) => {
                assert!(offset > 0);
                assert!(message.contains("truncated"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        // The header alone is still readable.
        assert!(read_header(&cut).is_ok());
    }

    #[test]
    fn bad_magic_and_version() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.reel");
        save(&traj(ModelKind::Heat, 1), &p).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes[4] = 9;
        let q = dir.path().join("v.reel");
        std::fs::write(&q, &bytes).unwrap();
        assert!(load(&q).unwrap_err().to_string().contains("version"));
        bytes[0] = b'X';
        std::fs::write(&q, &bytes).unwrap();
        assert!(load(&q).unwrap_err().to_string().contains("magic"));
    }
}
