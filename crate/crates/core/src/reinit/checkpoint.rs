//! Adapter-only checkpoint codec.
//!
//! Versioned little-endian binary container. Two persistence modes:
//!
//! * FULL    — frozen matrices stored verbatim.
//! * COMPACT — only the init origin (seed/stream/cursor), the reinit
//!   event log, and the trainable vectors; the frozen matrices are
//!   reconstructed by replaying the draws.
//!
//! Every layer embeds per-dimension FNV-1a checksums of row `i` of `A`
//! and column `i` of `B`, so replay verification can name the first
//! divergent layer/dimension.
//!
//! Layout: file header (magic, version, mode, reinit stream identity,
//! layer count), then per layer a sequence of tagged sections
//! `[tag u8][len u64][payload]`: header, vectors, counters, events,
//! checksums, and (FULL or LoRA) matrices.

use super::{ReinitConfig, ReinitError, ReinitEvent, ReinitMonitor, ReinitTarget};
use crate::adapter::{
    Adapter, AdapterMethod, InitOrigin, LoraState, MatrixProvenance, UoraState,
};
use crate::linalg::{init_matrix, init_vector, lerp, InitFamily, InitKind, Matrix, SeededRng, Vector};
use std::fs;
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 8] = b"UORACKPT";
const VERSION: u16 = 1;

const SEC_HEADER: u8 = 1;
const SEC_VECTORS: u8 = 2;
const SEC_COUNTERS: u8 = 3;
const SEC_EVENTS: u8 = 4;
const SEC_CHECKSUMS: u8 = 5;
const SEC_MATRICES: u8 = 6;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    Magic,
    #[error("unsupported checkpoint version {found} (this build reads {supported})")]
    Version { found: u16, supported: u16 },
    #[error("decode error in section '{section}': {detail}")]
    Decode { section: String, detail: String },
    #[error("invalid checkpoint content: {0}")]
    Invalid(String),
    #[error(transparent)]
    Reinit(#[from] ReinitError),
}

fn decode_err(section: &str, detail: impl Into<String>) -> CheckpointError {
    CheckpointError::Decode {
        section: section.to_string(),
        detail: detail.into(),
    }
}

/// FULL stores matrices; COMPACT stores seed + event log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckpointMode {
    Full,
    Compact,
}

/// One adapted layer as persisted.
#[derive(Debug, Clone)]
pub struct LayerSnapshot {
    pub layer_id: u32,
    pub method: AdapterMethod,
    pub d_out: usize,
    pub d_in: usize,
    pub rank: usize,
    pub body: SnapshotBody,
}

#[derive(Debug, Clone)]
pub enum SnapshotBody {
    /// UORA or VeRA: scaling vectors plus replay metadata.
    Scaled {
        d_vec: Vector,
        b_vec: Vector,
        origin: InitOrigin,
        provenance: MatrixProvenance,
        config: ReinitConfig,
        counters: Vec<u32>,
        events: Vec<ReinitEvent>,
        /// Present in FULL mode only.
        matrices: Option<(Matrix, Matrix)>,
        a_row_sums: Vec<u64>,
        b_col_sums: Vec<u64>,
    },
    /// LoRA: both trained factors (never replayable).
    Factors {
        a: Matrix,
        b: Matrix,
        a_row_sums: Vec<u64>,
        b_col_sums: Vec<u64>,
    },
}

/// Whole checkpoint: persistence mode, reinit stream identity, layers.
#[derive(Debug, Clone)]
pub struct CheckpointFile {
    pub mode: CheckpointMode,
    pub reinit_seed: u64,
    pub reinit_stream: u64,
    pub layers: Vec<LayerSnapshot>,
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn checksum_f64s<'a>(vals: impl IntoIterator<Item = &'a f64>) -> u64 {
    fnv1a64(vals.into_iter().flat_map(|v| v.to_le_bytes()))
}

/// Per-dimension checksums: one over each row of `A`, one over each
/// column of `B`.
pub fn dimension_checksums(a: &Matrix, b: &Matrix) -> (Vec<u64>, Vec<u64>) {
    let rank = a.rows();
    debug_assert_eq!(b.cols(), rank);
    let a_rows = (0..rank).map(|i| checksum_f64s(a.row(i))).collect();
    let b_cols = (0..rank)
        .map(|j| checksum_f64s(&b.col(j)))
        .collect();
    (a_rows, b_cols)
}

/// Snapshot a UORA/VeRA layer together with its monitor.
pub fn snapshot_scaled(
    layer_id: u32,
    method: AdapterMethod,
    state: &UoraState,
    monitor: &ReinitMonitor,
    mode: CheckpointMode,
) -> LayerSnapshot {
    let (a_row_sums, b_col_sums) = dimension_checksums(state.a(), state.b());
    let matrices = match mode {
        CheckpointMode::Full => Some((state.a().clone(), state.b().clone())),
        CheckpointMode::Compact => None,
    };
    LayerSnapshot {
        layer_id,
        method,
        d_out: state.d_out(),
        d_in: state.d_in(),
        rank: state.rank(),
        body: SnapshotBody::Scaled {
            d_vec: state.d_vec().clone(),
            b_vec: state.b_vec().clone(),
            origin: *state.origin(),
            provenance: state.provenance(),
            config: *monitor.config(),
            counters: monitor.counters().to_vec(),
            events: monitor.events().to_vec(),
            matrices,
            a_row_sums,
            b_col_sums,
        },
    }
}

/// Snapshot a LoRA layer (always stores both factors).
pub fn snapshot_factors(layer_id: u32, state: &LoraState) -> LayerSnapshot {
    let (a_row_sums, b_col_sums) = dimension_checksums(state.a(), state.b());
    LayerSnapshot {
        layer_id,
        method: AdapterMethod::Lora,
        d_out: state.d_out(),
        d_in: state.d_in(),
        rank: state.rank(),
        body: SnapshotBody::Factors {
            a: state.a().clone(),
            b: state.b().clone(),
            a_row_sums,
            b_col_sums,
        },
    }
}

/// Replay a layer's frozen matrices from its init origin plus the
/// ordered event log. Bit-identical to the live matrices in the same
/// build.
pub fn reconstruct_frozen(
    snap: &LayerSnapshot,
    reinit_seed: u64,
    reinit_stream: u64,
) -> Result<(Matrix, Matrix), CheckpointError> {
    let SnapshotBody::Scaled {
        origin,
        config,
        events,
        ..
    } = &snap.body
    else {
        return Err(CheckpointError::Invalid(
            "only UORA/VeRA layers can be reconstructed by replay".into(),
        ));
    };
    let (rank, d_in, d_out) = (snap.rank, snap.d_in, snap.d_out);
    let mut rng_a = SeededRng::at(origin.seed, origin.stream, origin.cursor_a);
    let mut a = init_matrix(origin.kind, rank, d_in, &mut rng_a);
    let mut rng_b = SeededRng::at(origin.seed, origin.stream, origin.cursor_b);
    let mut b = init_matrix(origin.kind, d_out, rank, &mut rng_b);
    for ev in events {
        if ev.dim >= rank {
            return Err(CheckpointError::Invalid(format!(
                "event at step {} names dimension {} but rank is {}",
                ev.step, ev.dim, rank
            )));
        }
        let mut rng = SeededRng::at(reinit_seed, reinit_stream, ev.rng_cursor);
        match ev.target {
            ReinitTarget::ARow => {
                let fresh = init_vector(config.rand_kind, d_in, d_in, rank, &mut rng);
                let old = Vector::from_slice(a.row(ev.dim));
                let new = lerp(&old, &fresh, config.alpha).map_err(ReinitError::from)?;
                a.row_mut(ev.dim).copy_from_slice(new.data());
            }
            ReinitTarget::BCol => {
                let fresh = init_vector(config.rand_kind, d_out, rank, d_out, &mut rng);
                let old = Vector::from_vec(b.col(ev.dim));
                let new = lerp(&old, &fresh, config.alpha).map_err(ReinitError::from)?;
                b.set_col(ev.dim, new.data());
            }
        }
    }
    Ok((a, b))
}

/// Outcome of verifying one layer against its embedded checksums.
#[derive(Debug, Clone)]
pub struct LayerVerifyReport {
    pub layer_id: u32,
    /// True when the matrices were rebuilt by replay (COMPACT), false
    /// when stored matrices were checked directly.
    pub replayed: bool,
    pub passed: bool,
    /// First divergent (dimension, which matrix) on failure.
    pub first_divergence: Option<(usize, ReinitTarget)>,
}

/// Verify every layer: COMPACT layers are reconstructed by replay, FULL
/// and LoRA layers are checked against their stored matrices.
pub fn verify(file: &CheckpointFile) -> Result<Vec<LayerVerifyReport>, CheckpointError> {
    let mut reports = Vec::with_capacity(file.layers.len());
    for snap in &file.layers {
        let (a, b, replayed, a_sums, b_sums) = match &snap.body {
            SnapshotBody::Scaled {
                matrices,
                a_row_sums,
                b_col_sums,
                ..
            } => match matrices {
                Some((a, b)) => (a.clone(), b.clone(), false, a_row_sums, b_col_sums),
                None => {
                    let (a, b) =
                        reconstruct_frozen(snap, file.reinit_seed, file.reinit_stream)?;
                    (a, b, true, a_row_sums, b_col_sums)
                }
            },
            SnapshotBody::Factors {
                a,
                b,
                a_row_sums,
                b_col_sums,
            } => (a.clone(), b.clone(), false, a_row_sums, b_col_sums),
        };
        let (got_a, got_b) = dimension_checksums(&a, &b);
        let mut first_divergence = None;
        for dim in 0..snap.rank {
            if got_a[dim] != a_sums[dim] {
                first_divergence = Some((dim, ReinitTarget::ARow));
                break;
            }
            if got_b[dim] != b_sums[dim] {
                first_divergence = Some((dim, ReinitTarget::BCol));
                break;
            }
        }
        reports.push(LayerVerifyReport {
            layer_id: snap.layer_id,
            replayed,
            passed: first_divergence.is_none(),
            first_divergence,
        });
    }
    Ok(reports)
}

/// A restored layer: the adapter state plus (for UORA/VeRA) its monitor.
#[derive(Debug, Clone)]
pub struct RestoredLayer {
    pub layer_id: u32,
    pub method: AdapterMethod,
    pub adapter: Adapter,
    pub monitor: Option<ReinitMonitor>,
}

/// Rebuild adapter states and monitors. COMPACT layers are reconstructed
/// by replay and checked against the embedded checksums.
pub fn restore(file: &CheckpointFile) -> Result<Vec<RestoredLayer>, CheckpointError> {
    let mut out = Vec::with_capacity(file.layers.len());
    for snap in &file.layers {
        match &snap.body {
            SnapshotBody::Scaled {
                d_vec,
                b_vec,
                origin,
                provenance,
                config,
                counters,
                events,
                matrices,
                a_row_sums,
                b_col_sums,
            } => {
                let (a, b) = match matrices {
                    Some((a, b)) => (a.clone(), b.clone()),
                    None => reconstruct_frozen(snap, file.reinit_seed, file.reinit_stream)?,
                };
                let (got_a, got_b) = dimension_checksums(&a, &b);
                if &got_a != a_row_sums || &got_b != b_col_sums {
                    return Err(CheckpointError::Invalid(format!(
                        "layer {}: matrices do not match embedded checksums",
                        snap.layer_id
                    )));
                }
                let state = UoraState::from_parts(
                    a,
                    b,
                    d_vec.clone(),
                    b_vec.clone(),
                    *provenance,
                    *origin,
                )
                .map_err(|e| CheckpointError::Invalid(e.to_string()))?;
                let monitor =
                    ReinitMonitor::from_parts(counters.clone(), *config, events.clone());
                out.push(RestoredLayer {
                    layer_id: snap.layer_id,
                    method: snap.method,
                    adapter: Adapter::Uora(state),
                    monitor: Some(monitor),
                });
            }
            SnapshotBody::Factors { a, b, .. } => {
                let state = LoraState::from_parts(a.clone(), b.clone())
                    .map_err(|e| CheckpointError::Invalid(e.to_string()))?;
                out.push(RestoredLayer {
                    layer_id: snap.layer_id,
                    method: snap.method,
                    adapter: Adapter::Lora(state),
                    monitor: None,
                });
            }
        }
    }
    Ok(out)
}

pub fn save_checkpoint(file: &CheckpointFile, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    fs::write(path, encode(file))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<CheckpointFile, CheckpointError> {
    decode(&fs::read(path)?)
}

// --- encoding ---------------------------------------------------------

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer { buf: Vec::new() }
    }
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u128(&mut self, v: u128) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vals: &[f64]) {
        self.u32(vals.len() as u32);
        for v in vals {
            self.f64(*v);
        }
    }
    fn matrix(&mut self, m: &Matrix) {
        self.u32(m.rows() as u32);
        self.u32(m.cols() as u32);
        for v in m.data() {
            self.f64(*v);
        }
    }
    fn section(&mut self, tag: u8, body: Writer) {
        self.u8(tag);
        self.u64(body.buf.len() as u64);
        self.buf.extend_from_slice(&body.buf);
    }
}

fn family_code(f: InitFamily) -> u8 {
    match f {
        InitFamily::OrthogonalUniform => 0,
        InitFamily::KaimingUniform => 1,
        InitFamily::XavierUniform => 2,
        InitFamily::RandomUniform => 3,
    }
}

fn family_from_code(code: u8, section: &str) -> Result<InitFamily, CheckpointError> {
    Ok(match code {
        0 => InitFamily::OrthogonalUniform,
        1 => InitFamily::KaimingUniform,
        2 => InitFamily::XavierUniform,
        3 => InitFamily::RandomUniform,
        other => return Err(decode_err(section, format!("bad init family code {other}"))),
    })
}

fn method_code(m: AdapterMethod) -> u8 {
    match m {
        AdapterMethod::None => 0,
        AdapterMethod::Lora => 1,
        AdapterMethod::Vera => 2,
        AdapterMethod::Uora => 3,
    }
}

fn method_from_code(code: u8, section: &str) -> Result<AdapterMethod, CheckpointError> {
    Ok(match code {
        0 => AdapterMethod::None,
        1 => AdapterMethod::Lora,
        2 => AdapterMethod::Vera,
        3 => AdapterMethod::Uora,
        other => return Err(decode_err(section, format!("bad method code {other}"))),
    })
}

fn write_init_kind(w: &mut Writer, kind: InitKind) {
    w.u8(family_code(kind.family));
    w.f64(kind.gain);
}

/// Serialize to the versioned binary form.
pub fn encode(file: &CheckpointFile) -> Vec<u8> {
    let mut w = Writer::new();
    w.buf.extend_from_slice(MAGIC);
    w.u16(VERSION);
    w.u8(match file.mode {
        CheckpointMode::Full => 0,
        CheckpointMode::Compact => 1,
    });
    w.u64(file.reinit_seed);
    w.u64(file.reinit_stream);
    w.u32(file.layers.len() as u32);
    for snap in &file.layers {
        encode_layer(&mut w, snap);
    }
    w.buf
}

fn encode_layer(w: &mut Writer, snap: &LayerSnapshot) {
    let mut header = Writer::new();
    header.u32(snap.layer_id);
    header.u8(method_code(snap.method));
    header.u32(snap.d_out as u32);
    header.u32(snap.d_in as u32);
    header.u32(snap.rank as u32);
    match &snap.body {
        SnapshotBody::Scaled {
            origin,
            provenance,
            config,
            ..
        } => {
            match provenance {
                MatrixProvenance::SharedHandle(id) => {
                    header.u8(1);
                    header.u64(*id);
                }
                MatrixProvenance::PrivateCopy => {
                    header.u8(0);
                    header.u64(0);
                }
            }
            write_init_kind(&mut header, origin.kind);
            header.u64(origin.seed);
            header.u64(origin.stream);
            header.u128(origin.cursor_a);
            header.u128(origin.cursor_b);
            header.f64(config.tau);
            header.u64(config.count_k as u64);
            header.f64(config.alpha);
            write_init_kind(&mut header, config.rand_kind);
        }
        SnapshotBody::Factors { .. } => {}
    }
    w.section(SEC_HEADER, header);

    match &snap.body {
        SnapshotBody::Scaled {
            d_vec,
            b_vec,
            counters,
            events,
            matrices,
            a_row_sums,
            b_col_sums,
            ..
        } => {
            let mut vectors = Writer::new();
            vectors.f64s(d_vec.data());
            vectors.f64s(b_vec.data());
            w.section(SEC_VECTORS, vectors);

            let mut cnt = Writer::new();
            cnt.u32(counters.len() as u32);
            for c in counters {
                cnt.u32(*c);
            }
            w.section(SEC_COUNTERS, cnt);

            let mut ev = Writer::new();
            ev.u32(events.len() as u32);
            for e in events {
                ev.u64(e.step);
                ev.u32(e.dim as u32);
                ev.u32(e.layer_id);
                ev.u8(match e.target {
                    ReinitTarget::ARow => 0,
                    ReinitTarget::BCol => 1,
                });
                ev.u128(e.rng_cursor);
            }
            w.section(SEC_EVENTS, ev);

            let mut sums = Writer::new();
            sums.u32(a_row_sums.len() as u32);
            for s in a_row_sums {
                sums.u64(*s);
            }
            for s in b_col_sums {
                sums.u64(*s);
            }
            w.section(SEC_CHECKSUMS, sums);

            if let Some((a, b)) = matrices {
                let mut mats = Writer::new();
                mats.matrix(a);
                mats.matrix(b);
                w.section(SEC_MATRICES, mats);
            }
        }
        SnapshotBody::Factors {
            a,
            b,
            a_row_sums,
            b_col_sums,
        } => {
            let mut sums = Writer::new();
            sums.u32(a_row_sums.len() as u32);
            for s in a_row_sums {
                sums.u64(*s);
            }
            for s in b_col_sums {
                sums.u64(*s);
            }
            w.section(SEC_CHECKSUMS, sums);

            let mut mats = Writer::new();
            mats.matrix(a);
            mats.matrix(b);
            w.section(SEC_MATRICES, mats);
        }
    }
}

// --- decoding ---------------------------------------------------------

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    section: &'static str,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], section: &'static str) -> Self {
        Reader {
            buf,
            pos: 0,
            section,
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.buf.len() {
            return Err(decode_err(
                self.section,
                format!(
                    "unexpected end of data (wanted {n} bytes at offset {}, have {})",
                    self.pos,
                    self.buf.len()
                ),
            ));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn u128(&mut self) -> Result<u128, CheckpointError> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self) -> Result<Vec<f64>, CheckpointError> {
        let n = self.u32()? as usize;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(self.f64()?);
        }
        Ok(out)
    }
    fn matrix(&mut self) -> Result<Matrix, CheckpointError> {
        let rows = self.u32()? as usize;
        let cols = self.u32()? as usize;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(self.f64()?);
        }
        Matrix::from_vec(rows, cols, data)
            .map_err(|e| decode_err(self.section, e.to_string()))
    }
    fn done(&self) -> Result<(), CheckpointError> {
        if self.pos != self.buf.len() {
            return Err(decode_err(
                self.section,
                format!("{} trailing bytes", self.buf.len() - self.pos),
            ));
        }
        Ok(())
    }
}

/// Pull the next `[tag][len][payload]` section, checking the tag.
fn expect_section<'a>(
    outer: &mut Reader<'a>,
    tag: u8,
    name: &'static str,
) -> Result<Reader<'a>, CheckpointError> {
    let got = outer.u8()?;
    if got != tag {
        return Err(decode_err(
            name,
            format!("expected section tag {tag}, found {got}"),
        ));
    }
    let len = outer.u64()? as usize;
    let body = {
        let prev = outer.section;
        outer.section = name;
        let body = outer.take(len)?;
        outer.section = prev;
        body
    };
    Ok(Reader::new(body, name))
}

fn read_init_kind(r: &mut Reader) -> Result<InitKind, CheckpointError> {
    let family = family_from_code(r.u8()?, r.section)?;
    let gain = r.f64()?;
    InitKind::new(family, gain).map_err(|e| decode_err(r.section, e.to_string()))
}

/// Parse the versioned binary form.
pub fn decode(bytes: &[u8]) -> Result<CheckpointFile, CheckpointError> {
    let mut r = Reader::new(bytes, "file header");
    if r.take(8)? != MAGIC {
        return Err(CheckpointError::Magic);
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(CheckpointError::Version {
            found: version,
            supported: VERSION,
        });
    }
    let mode = match r.u8()? {
        0 => CheckpointMode::Full,
        1 => CheckpointMode::Compact,
        other => return Err(decode_err("file header", format!("bad mode byte {other}"))),
    };
    let reinit_seed = r.u64()?;
    let reinit_stream = r.u64()?;
    let layer_count = r.u32()? as usize;
    let mut layers = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        layers.push(decode_layer(&mut r, mode)?);
    }
    r.done()?;
    Ok(CheckpointFile {
        mode,
        reinit_seed,
        reinit_stream,
        layers,
    })
}

fn decode_layer(r: &mut Reader, mode: CheckpointMode) -> Result<LayerSnapshot, CheckpointError> {
    let mut header = expect_section(r, SEC_HEADER, "header")?;
    let layer_id = header.u32()?;
    let method = method_from_code(header.u8()?, "header")?;
    let d_out = header.u32()? as usize;
    let d_in = header.u32()? as usize;
    let rank = header.u32()? as usize;

    match method {
        AdapterMethod::Uora | AdapterMethod::Vera => {
            let provenance = match header.u8()? {
                1 => MatrixProvenance::SharedHandle(header.u64()?),
                0 => {
                    header.u64()?;
                    MatrixProvenance::PrivateCopy
                }
                other => {
                    return Err(decode_err("header", format!("bad provenance byte {other}")))
                }
            };
            let kind = read_init_kind(&mut header)?;
            let origin = InitOrigin {
                kind,
                seed: header.u64()?,
                stream: header.u64()?,
                cursor_a: header.u128()?,
                cursor_b: header.u128()?,
            };
            let tau = header.f64()?;
            let count_k = header.u64()? as usize;
            let alpha = header.f64()?;
            let rand_kind = read_init_kind(&mut header)?;
            header.done()?;
            let config = ReinitConfig::new(tau, count_k, alpha, rand_kind)
                .map_err(|e| decode_err("header", e.to_string()))?;

            let mut vectors = expect_section(r, SEC_VECTORS, "vectors")?;
            let d_vec = Vector::from_vec(vectors.f64s()?);
            let b_vec = Vector::from_vec(vectors.f64s()?);
            vectors.done()?;
            if d_vec.len() != rank || b_vec.len() != d_out {
                return Err(decode_err(
                    "vectors",
                    format!(
                        "vector lengths {}/{} do not match rank {} / d_out {}",
                        d_vec.len(),
                        b_vec.len(),
                        rank,
                        d_out
                    ),
                ));
            }

            let mut cnt = expect_section(r, SEC_COUNTERS, "counters")?;
            let n = cnt.u32()? as usize;
            let mut counters = Vec::with_capacity(n);
            for _ in 0..n {
                counters.push(cnt.u32()?);
            }
            cnt.done()?;
            if counters.len() != rank {
                return Err(decode_err(
                    "counters",
                    format!("{} counters for rank {}", counters.len(), rank),
                ));
            }

            let mut ev = expect_section(r, SEC_EVENTS, "events")?;
            let n = ev.u32()? as usize;
            let mut events = Vec::with_capacity(n);
            for _ in 0..n {
                let step = ev.u64()?;
                let dim = ev.u32()? as usize;
                let ev_layer = ev.u32()?;
                let target = match ev.u8()? {
                    0 => ReinitTarget::ARow,
                    1 => ReinitTarget::BCol,
                    other => {
                        return Err(decode_err("events", format!("bad target byte {other}")))
                    }
                };
                let rng_cursor = ev.u128()?;
                events.push(ReinitEvent {
                    step,
                    dim,
                    layer_id: ev_layer,
                    target,
                    rng_cursor,
                });
            }
            ev.done()?;

            let (a_row_sums, b_col_sums) = decode_checksums(r, rank)?;

            let matrices = match mode {
                CheckpointMode::Full => {
                    let mut mats = expect_section(r, SEC_MATRICES, "matrices")?;
                    let a = mats.matrix()?;
                    let b = mats.matrix()?;
                    mats.done()?;
                    Some((a, b))
                }
                CheckpointMode::Compact => None,
            };

            Ok(LayerSnapshot {
                layer_id,
                method,
                d_out,
                d_in,
                rank,
                body: SnapshotBody::Scaled {
                    d_vec,
                    b_vec,
                    origin,
                    provenance,
                    config,
                    counters,
                    events,
                    matrices,
                    a_row_sums,
                    b_col_sums,
                },
            })
        }
        AdapterMethod::Lora => {
            header.done()?;
            let (a_row_sums, b_col_sums) = decode_checksums(r, rank)?;
            let mut mats = expect_section(r, SEC_MATRICES, "matrices")?;
            let a = mats.matrix()?;
            let b = mats.matrix()?;
            mats.done()?;
            Ok(LayerSnapshot {
                layer_id,
                method,
                d_out,
                d_in,
                rank,
                body: SnapshotBody::Factors {
                    a,
                    b,
                    a_row_sums,
                    b_col_sums,
                },
            })
        }
        AdapterMethod::None => Err(decode_err(
            "header",
            "checkpoint contains a layer with no adapter",
        )),
    }
}

fn decode_checksums(r: &mut Reader, rank: usize) -> Result<(Vec<u64>, Vec<u64>), CheckpointError> {
    let mut sums = expect_section(r, SEC_CHECKSUMS, "checksums")?;
    let n = sums.u32()? as usize;
    if n != rank {
        return Err(decode_err(
            "checksums",
            format!("{n} checksum pairs for rank {rank}"),
        ));
    }
    let mut a_row_sums = Vec::with_capacity(n);
    for _ in 0..n {
        a_row_sums.push(sums.u64()?);
    }
    let mut b_col_sums = Vec::with_capacity(n);
    for _ in 0..n {
        b_col_sums.push(sums.u64()?);
    }
    sums.done()?;
    Ok((a_row_sums, b_col_sums))
}
