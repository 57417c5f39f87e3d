//! Compressed dataset file format.
//!
//! ```text
//! magic "RLCD" | version u32 | prng str | model id str | config str
//! nx u32 | ny u32 | dx f64 | dt f64
//! n_channels u32 | (field str, n_features u32, routing u32)...
//! n_params u32 | (name str, theta_true f64)...
//! beta kind u32 (0 none, 1 fixed, 2 percentile) | beta f64 | ratio f64
//! val projection: n u32, d u32, seed u64, kind u32
//! freq projection: n u32, d u32, seed u64, kind u32
//! lambda f64 | n_steps u32
//! ```
//!
//! Each step then holds, per channel: a mask flag `u32` followed by the mask
//! packed eight bins per byte when the flag is 1; the value length `u32`,
//! target and features as `f64`; the frequency length `u32`, target and
//! features as interleaved `(re, im)` `f64` pairs. All values little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use super::{ChannelInfo, ChannelSketch, CompressedDataset, DomainRouting, LearnError, StepSketch};
use crate::field::GridSpec;
use crate::io::{ByteReader, ByteWriter, FormatError};
use crate::model::ModelKind;
use crate::sketch::{ProjectionKind, ProjectionSpec, PRNG_NAME};
use crate::spectral::{BetaRule, FrequencyMask};

pub const CDS_MAGIC: &[u8; 4] = b"RLCD";
pub const CDS_VERSION: u32 = 1;

/// Everything in a compressed dataset file except the per-step blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct CdsHeader {
    pub version: u32,
    pub prng: String,
    pub model: ModelKind,
    pub config_text: String,
    pub grid: GridSpec,
    pub channels: Vec<ChannelInfo>,
    pub param_names: Vec<String>,
    pub theta_true: Vec<f64>,
    pub beta: Option<BetaRule>,
    pub ratio: f64,
    pub val_spec: ProjectionSpec,
    pub freq_spec: ProjectionSpec,
    pub lambda: f64,
    pub n_steps: usize,
    pub header_bytes: u64,
}

impl CdsHeader {
    pub fn n_features(&self) -> usize {
        self.channels.iter().map(|c| c.n_features).sum()
    }
}

fn routing_code(r: DomainRouting) -> u32 {
    match r {
        DomainRouting::Split => 0,
        DomainRouting::ValueOnly => 1,
        DomainRouting::FrequencyOnly => 2,
    }
}

fn kind_code(k: ProjectionKind) -> u32 {
    match k {
        ProjectionKind::Gaussian => 0,
        ProjectionKind::Identity => 1,
    }
}

fn write_spec<W: Write>(w: &mut ByteWriter<W>, s: &ProjectionSpec) -> std::io::Result<()> {
    w.len_u32(s.n)?;
    w.len_u32(s.d)?;
    w.u64(s.seed)?;
    w.u32(kind_code(s.kind))
}

fn write_complex<W: Write>(w: &mut ByteWriter<W>, v: &[Complex64]) -> std::io::Result<()> {
    let flat: Vec<f64> = v.iter().flat_map(|c| [c.re, c.im]).collect();
    w.f64s(&flat)
}

fn write_to<W: Write>(cds: &CompressedDataset, w: W) -> std::io::Result<()> {
    let mut w = ByteWriter::new(w);
    w.bytes(CDS_MAGIC)?;
    w.u32(CDS_VERSION)?;
    w.str(PRNG_NAME)?;
    w.str(cds.model.id())?;
    w.str(&cds.config_text)?;
    w.len_u32(cds.grid.nx)?;
    w.len_u32(cds.grid.ny)?;
    w.f64(cds.grid.dx)?;
    w.f64(cds.grid.dt)?;
    w.len_u32(cds.channels.len())?;
    for c in &cds.channels {
        w.str(&c.field)?;
        w.len_u32(c.n_features)?;
        w.u32(routing_code(c.routing))?;
    }
    w.len_u32(cds.param_names.len())?;
    for (n, v) in cds.param_names.iter().zip(&cds.theta_true) {
        w.str(n)?;
        w.f64(*v)?;
    }
    let (code, beta) = match cds.beta {
        None => (0, 0.0),
        Some(BetaRule::Fixed(b)) => (1, b),
        Some(BetaRule::Percentile(p)) => (2, p),
    };
    w.u32(code)?;
    w.f64(beta)?;
    w.f64(cds.ratio)?;
    write_spec(&mut w, &cds.val_spec)?;
    write_spec(&mut w, &cds.freq_spec)?;
    w.f64(cds.lambda)?;
    w.len_u32(cds.steps.len())?;
    for step in &cds.steps {
        for ch in &step.channels {
            match &ch.mask {
                None => w.u32(0)?,
                Some(m) => {
                    w.u32(1)?;
                    let mut packed = vec![0u8; m.keep().len().div_ceil(8)];
                    for (k, &b) in m.keep().iter().enumerate() {
                        if b {
                            packed[k / 8] |= 1 << (k % 8);
                        }
                    }
                    w.bytes(&packed)?;
                }
            }
            w.len_u32(ch.val_target.len())?;
            w.f64s(&ch.val_target)?;
            w.f64s(&ch.val_features)?;
            w.len_u32(ch.freq_target.len())?;
            write_complex(&mut w, &ch.freq_target)?;
            write_complex(&mut w, &ch.freq_features)?;
        }
    }
    w.into_inner().flush()
}

pub fn save_cds(cds: &CompressedDataset, path: &Path) -> Result<(), LearnError> {
    cds.validate()?;
    let file = File::create(path).map_err(|e| FormatError::io(path, e))?;
    write_to(cds, BufWriter::new(file)).map_err(|e| FormatError::io(path, e))?;
    Ok(())
}

fn read_spec<R: Read>(r: &mut ByteReader<R>, what: &str) -> Result<ProjectionSpec, FormatError> {
    let n = r.u32(what)? as usize;
    let d = r.u32(what)? as usize;
    let seed = r.u64(what)?;
    let at = r.offset();
    let kind = match r.u32(what)? {
        0 => ProjectionKind::Gaussian,
        1 => ProjectionKind::Identity,
        k => {
            return Err(FormatError::Corrupt {
                offset: at,
                message: format!("{what}: unknown projection kind {k}"),
            })
        }
    };
    if n > d || (kind == ProjectionKind::Identity && n != d) {
        return Err(r.corrupt(format!("{what}: invalid shape {n}x{d}")));
    }
    Ok(ProjectionSpec { n, d, seed, kind })
}

fn read_header_from<R: Read>(r: &mut ByteReader<R>) -> Result<CdsHeader, FormatError> {
    r.magic(CDS_MAGIC)?;
    let at = r.offset();
    let version = r.u32("version")?;
    if version != CDS_VERSION {
        return Err(FormatError::Corrupt {
            offset: at,
            message: format!("unsupported version {version} (expected {CDS_VERSION})"),
        });
    }
    let at = r.offset();
    let prng = r.str("prng name")?;
    if prng != PRNG_NAME {
        return Err(FormatError::Corrupt {
            offset: at,
            message: format!("projection generator '{prng}' is not supported (expected '{PRNG_NAME}')"),
        });
    }
    let at = r.offset();
    let id = r.str("model id")?;
    let model: ModelKind = id.parse().map_err(|_| FormatError::Corrupt {
        offset: at,
        message: format!("unknown model id '{id}'"),
    })?;
    let config_text = r.str("config")?;
    let at = r.offset();
    let nx = r.u32("nx")? as usize;
    let ny = r.u32("ny")? as usize;
    let dx = r.f64("dx")?;
    let dt = r.f64("dt")?;
    let grid = GridSpec::new(nx, ny, dx, dt).map_err(|e| FormatError::Corrupt {
        offset: at,
        message: e.to_string(),
    })?;
    let n_channels = r.len("channel count", 4096)?;
    let mut channels = Vec::with_capacity(n_channels);
    for _ in 0..n_channels {
        let field = r.str("channel field")?;
        let n_features = r.len("feature count", 1 << 16)?;
        let at = r.offset();
        let routing = match r.u32("routing")? {
            0 => DomainRouting::Split,
            1 => DomainRouting::ValueOnly,
            2 => DomainRouting::FrequencyOnly,
            k => {
                return Err(FormatError::Corrupt {
                    offset: at,
                    message: format!("unknown routing {k}"),
                })
            }
        };
        channels.push(ChannelInfo {
            field,
            n_features,
            routing,
        });
    }
    let n_params = r.len("parameter count", 4096)?;
    let mut param_names = Vec::with_capacity(n_params);
    let mut theta_true = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        param_names.push(r.str("parameter name")?);
        theta_true.push(r.f64("parameter value")?);
    }
    let at = r.offset();
    let code = r.u32("beta kind")?;
    let b = r.f64("beta")?;
    let beta = match code {
        0 => None,
        1 => Some(BetaRule::Fixed(b)),
        2 => Some(BetaRule::Percentile(b)),
        k => {
            return Err(FormatError::Corrupt {
                offset: at,
                message: format!("unknown beta kind {k}"),
            })
        }
    };
    let ratio = r.f64("ratio")?;
    let val_spec = read_spec(r, "value projection")?;
    let freq_spec = read_spec(r, "frequency projection")?;
    let lambda = r.f64("lambda")?;
    let n_steps = r.len("step count", usize::MAX)?;
    Ok(CdsHeader {
        version,
        prng,
        model,
        config_text,
        grid,
        channels,
        param_names,
        theta_true,
        beta,
        ratio,
        val_spec,
        freq_spec,
        lambda,
        n_steps,
        header_bytes: r.offset(),
    })
}

/// Reads only the header.
pub fn read_cds_header(path: &Path) -> Result<CdsHeader, LearnError> {
    let file = File::open(path).map_err(|e| FormatError::io(path, e))?;
    let mut r = ByteReader::new(BufReader::new(file));
    Ok(read_header_from(&mut r)?)
}

fn read_complex<R: Read>(r: &mut ByteReader<R>, n: usize, what: &str) -> Result<Vec<Complex64>, FormatError> {
    let flat = r.f64s(2 * n, what)?;
    Ok(flat.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect())
}

fn read_channel<R: Read>(
    r: &mut ByteReader<R>,
    h: &CdsHeader,
    info: &ChannelInfo,
    t: usize,
) -> Result<ChannelSketch, FormatError> {
    let at = r.offset();
    let mask = match r.u32("mask flag")? {
        0 => None,
        1 => {
            let len = h.grid.len();
            let mut packed = vec![0u8; len.div_ceil(8)];
            r.fill(&mut packed, "mask")?;
            let keep: Vec<bool> = (0..len).map(|k| packed[k / 8] >> (k % 8) & 1 == 1).collect();
            if !FrequencyMask::new(h.grid, keep.clone())
                .map(|m| m.keep() == keep.as_slice())
                .unwrap_or(false)
            {
                return Err(FormatError::Corrupt {
                    offset: at,
                    message: format!("step {t} channel '{}': mask is not conjugate symmetric", info.field),
                });
            }
            Some(FrequencyMask::new(h.grid, keep).expect("checked above"))
        }
        k => {
            return Err(FormatError::Corrupt {
                offset: at,
                message: format!("bad mask flag {k}"),
            })
        }
    };
    let n_val = r.len("value length", h.val_spec.n)?;
    let val_target = r.f64s(n_val, "value target")?;
    let val_features = r.f64s(n_val * info.n_features, "value features")?;
    let n_freq = r.len("frequency length", h.freq_spec.n)?;
    let freq_target = read_complex(r, n_freq, "frequency target")?;
    let freq_features = read_complex(r, n_freq * info.n_features, "frequency features")?;
    Ok(ChannelSketch {
        mask,
        val_target,
        val_features,
        freq_target,
        freq_features,
    })
}

pub fn load_cds(path: &Path) -> Result<CompressedDataset, LearnError> {
    let file = File::open(path).map_err(|e| FormatError::io(path, e))?;
    let mut r = ByteReader::new(BufReader::new(file));
    let h = read_header_from(&mut r)?;
    let mut steps = Vec::with_capacity(h.n_steps.min(1 << 20));
    for t in 0..h.n_steps {
        let channels = h
            .channels
            .iter()
            .map(|info| read_channel(&mut r, &h, info, t))
            .collect::<Result<Vec<_>, _>>()?;
        steps.push(StepSketch { channels });
    }
    r.finish()?;
    let cds = CompressedDataset {
        model: h.model,
        config_text: h.config_text,
        grid: h.grid,
        channels: h.channels,
        param_names: h.param_names,
        theta_true: h.theta_true,
        beta: h.beta,
        ratio: h.ratio,
        val_spec: h.val_spec,
        freq_spec: h.freq_spec,
        lambda: h.lambda,
        steps,
    };
    cds.validate()?;
    Ok(cds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::{preprocess, raw_dataset, PreprocessConfig};
    use crate::model::{build_model, SimConfig};
    use crate::sim::simulate;

    fn cds(kind: ModelKind) -> CompressedDataset {
        let cfg = SimConfig {
            steps: 4,
            ..SimConfig::preset(kind, 12)
        };
        let traj = simulate(&cfg).unwrap();
        let model = build_model(&cfg).unwrap();
        preprocess(&traj, model.as_ref(), &PreprocessConfig::new(BetaRule::Percentile(80.0), 0.25, 9)).unwrap()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        for kind in [ModelKind::Heat, ModelKind::SinteringLite, ModelKind::Nanovoid] {
            let c = cds(kind);
            let p = dir.path().join(format!("{kind}.cds"));
            save_cds(&c, &p).unwrap();
            assert_eq!(load_cds(&p).unwrap(), c);
            let h = read_cds_header(&p).unwrap();
            assert_eq!(h.n_steps, 4);
            assert_eq!(h.n_features(), c.n_features());
            assert_eq!(h.prng, PRNG_NAME);
        }
    }

    #[test]
    fn raw_dataset_round_trips() {
        let cfg = SimConfig {
            steps: 3,
            ..SimConfig::preset(ModelKind::Heat, 8)
        };
        let traj = simulate(&cfg).unwrap();
        let model = build_model(&cfg).unwrap();
        let c = raw_dataset(&traj, model.as_ref()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("raw.cds");
        save_cds(&c, &p).unwrap();
        assert_eq!(load_cds(&p).unwrap(), c);
    }

    #[test]
    fn corruption_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.cds");
        save_cds(&cds(ModelKind::Heat), &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();

        let q = dir.path().join("b.cds");
        std::fs::write(&q, &bytes[..bytes.len() - 5]).unwrap();
        assert!(load_cds(&q).unwrap_err().to_string().contains("truncated"));

        let mut extra = bytes.clone();
        extra.push(0);
        std::fs::write(&q, &extra).unwrap();
        assert!(load_cds(&q).unwrap_err().to_string().contains("trailing"));

        let mut bad = bytes.clone();
        bad[0] = b'Z';
        std::fs::write(&q, &bad).unwrap();
        assert!(load_cds(&q).unwrap_err().to_string().contains("magic"));

        let mut bad = bytes;
        bad[4] = 7;
        std::fs::write(&q, &bad).unwrap();
        assert!(load_cds(&q).unwrap_err().to_string().contains("version"));
    }
}
