//! On-disk formats: channel dumps, codebook tables, checkpoints and CSVs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use mimo_jscc_core::codec::{CodecSpec, JsccCodec};
use mimo_jscc_core::evaluator::{Evaluator, LabeledSet, Normalization};
use mimo_jscc_core::feedback::DegradationTable;
use mimo_jscc_core::image::ImageDims;
use mimo_jscc_core::linalg::{CMatrix, C64};
use mimo_jscc_core::nn::{LayerSpec, Mlp};
use mimo_jscc_core::quantizer::CsiCodebook;
use serde::{Deserialize, Serialize};

use crate::error::{SimError, SimResult};

const CHANNEL_MAGIC: &[u8; 4] = b"MJCH";
const CHECKPOINT_MAGIC: &[u8; 4] = b"MJCK";
const FORMAT_VERSION: u32 = 1;

fn create(path: &Path) -> SimResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| SimError::io(path, e))
}

fn read_all(path: &Path) -> SimResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| SimError::io(path, e))
}

/// Little-endian cursor that reports truncation with the byte offset.
struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(path: &'a Path, bytes: &'a [u8]) -> Self {
        Self { path, bytes, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> SimResult<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(SimError::Truncated {
                path: self.path.to_path_buf(),
                offset: self.pos as u64,
                detail: format!("expected {n} bytes of {what}"),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> SimResult<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> SimResult<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> SimResult<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> SimResult<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> SimResult<String> {
        let n = self.u32(what)? as usize;
        let raw = self.take(n, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| SimError::format(self.path, format!("{what} is not UTF-8")))
    }

    fn header(&mut self, magic: &[u8; 4]) -> SimResult<()> {
        if self.take(4, "magic")? != magic {
            return Err(SimError::format(self.path, "bad magic"));
        }
        let v = self.u32("version")?;
        if v != FORMAT_VERSION {
            return Err(SimError::format(self.path, format!("unsupported format version {v}")));
        }
        Ok(())
    }

    fn finish(&self) -> SimResult<()> {
        if self.pos != self.bytes.len() {
            return Err(SimError::format(
                self.path,
                format!("{} trailing bytes after offset {}", self.bytes.len() - self.pos, self.pos),
            ));
        }
        Ok(())
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_string(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

fn write_bytes(path: &Path, bytes: &[u8]) -> SimResult<()> {
    let mut w = create(path)?;
    w.write_all(bytes).and_then(|_| w.flush()).map_err(|e| SimError::io(path, e))
}

/// Channel realizations with the seed and config hash that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDump {
    pub seed: u64,
    pub config_hash: String,
    pub channels: Vec<CMatrix>,
}

/// `MJCH`, version, seed, config hash, count, then per matrix rows, cols
/// and row-major `(re, im)` pairs, all little-endian.
pub fn encode_channels(dump: &ChannelDump) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHANNEL_MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    put_u64(&mut out, dump.seed);
    put_string(&mut out, &dump.config_hash);
    put_u64(&mut out, dump.channels.len() as u64);
    for h in &dump.channels {
        put_u32(&mut out, h.rows() as u32);
        put_u32(&mut out, h.cols() as u32);
        for z in h.as_slice() {
            put_f64(&mut out, z.re);
            put_f64(&mut out, z.im);
        }
    }
    out
}

pub fn decode_channels(path: &Path, bytes: &[u8]) -> SimResult<ChannelDump> {
    let mut r = Reader::new(path, bytes);
    r.header(CHANNEL_MAGIC)?;
    let seed = r.u64("seed")?;
    let config_hash = r.string("config hash")?;
    let count = r.u64("channel count")?;
    let mut channels = Vec::new();
    for _ in 0..count {
        let rows = r.u32("rows")? as usize;
        let cols = r.u32("cols")? as usize;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            let re = r.f64("entry")?;
            let im = r.f64("entry")?;
            data.push(C64::new(re, im));
        }
        channels.push(CMatrix::from_row_major(rows, cols, data).expect("sized"));
    }
    r.finish()?;
    Ok(ChannelDump {
        seed,
        config_hash,
        channels,
    })
}

pub fn write_channels(path: &Path, dump: &ChannelDump) -> SimResult<()> {
    write_bytes(path, &encode_channels(dump))
}

pub fn read_channels(path: &Path) -> SimResult<ChannelDump> {
    decode_channels(path, &read_all(path)?)
}

const CODEBOOK_VERSION: u32 = 1;

/// Plain-text codebook: `version`, `bits`, `fitted_on`, then one level per line and
/// one threshold per line, printed with 17 significant digits.
pub fn format_codebook(book: &CsiCodebook) -> String {
    let mut s = format!("version {CODEBOOK_VERSION}\n");
    s.push_str(&format!("bits {}\n", book.bits()));
    s.push_str(&format!("fitted_on {}\n", book.fitted_on()));
    s.push_str(&format!("levels {}\n", book.levels().len()));
    for l in book.levels() {
        s.push_str(&format!("{l:.16e}\n"));
    }
    s.push_str(&format!("thresholds {}\n", book.thresholds().len()));
    for t in book.thresholds() {
        s.push_str(&format!("{t:.16e}\n"));
    }
    s
}

struct Lines<'a> {
    path: &'a Path,
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Lines<'a> {
    fn bad(&self, line: usize, what: &str) -> SimError {
        SimError::format(self.path, format!("line {}: {what}", line + 1))
    }

    fn next(&mut self, what: &str) -> SimResult<(usize, &'a str)> {
        let line = self
            .lines
            .get(self.pos)
            .copied()
            .ok_or_else(|| SimError::format(self.path, format!("missing {what}")))?;
        self.pos += 1;
        Ok(line)
    }

    fn keyed(&mut self, name: &str) -> SimResult<(usize, &'a str)> {
        let (i, line) = self.next(name)?;
        match line.split_once(' ') {
            Some((key, rest)) if key == name => Ok((i, rest.trim())),
            _ => Err(self.bad(i, &format!("expected `{name}`"))),
        }
    }

    fn list(&mut self, name: &str) -> SimResult<Vec<f64>> {
        let (i, n) = self.keyed(name)?;
        let n: usize = n.parse().map_err(|_| self.bad(i, "bad count"))?;
        (0..n)
            .map(|_| {
                let (j, v) = self.next(name)?;
                v.trim().parse::<f64>().map_err(|_| self.bad(j, "bad number"))
            })
            .collect()
    }
}

pub fn parse_codebook(path: &Path, text: &str) -> SimResult<CsiCodebook> {
    let mut lines = Lines {
        path,
        lines: text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).collect(),
        pos: 0,
    };
    let (i, version) = lines.keyed("version")?;
    if version != CODEBOOK_VERSION.to_string() {
        return Err(lines.bad(i, &format!("unsupported codebook version {version}")));
    }
    let (i, bits) = lines.keyed("bits")?;
    let bits: u8 = bits.parse().map_err(|_| lines.bad(i, "bad bit depth"))?;
    let fitted_on = lines.keyed("fitted_on")?.1.to_string();
    let levels = lines.list("levels")?;
    let thresholds = lines.list("thresholds")?;
    if let Ok((i, _)) = lines.next("") {
        return Err(lines.bad(i, "unexpected trailing content"));
    }
    Ok(CsiCodebook::from_parts(bits, levels, thresholds, fitted_on)?)
}

pub fn write_codebook(path: &Path, book: &CsiCodebook) -> SimResult<()> {
    write_bytes(path, format_codebook(book).as_bytes())
}

pub fn read_codebook(path: &Path) -> SimResult<CsiCodebook> {
    let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
    parse_codebook(path, &text)
}

/// A serialized network stack plus scalar metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_hash: String,
    pub kind: CheckpointKind,
    pub meta: Vec<u64>,
    pub scalars: Vec<f64>,
    pub nets: Vec<NetRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckpointKind {
    Codec = 1,
    Evaluator = 2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetRecord {
    pub input_dim: usize,
    pub layers: Vec<LayerSpec>,
    pub params: Vec<f64>,
}

impl NetRecord {
    fn of(net: &Mlp) -> Self {
        Self {
            input_dim: net.input_dim(),
            layers: net.layers().to_vec(),
            params: net.params().to_vec(),
        }
    }
}

fn put_layer(out: &mut Vec<u8>, layer: &LayerSpec) {
    let (tag, a, b) = match *layer {
        LayerSpec::Dense { inputs, outputs } => (1u8, inputs, outputs),
        LayerSpec::Softplus => (2, 0, 0),
        LayerSpec::Sigmoid => (3, 0, 0),
        LayerSpec::Constant { outputs } => (4, 0, outputs),
    };
    out.push(tag);
    put_u32(out, a as u32);
    put_u32(out, b as u32);
}

fn get_layer(r: &mut Reader<'_>) -> SimResult<LayerSpec> {
    let tag = r.u8("layer tag")?;
    let a = r.u32("layer size")? as usize;
    let b = r.u32("layer size")? as usize;
    Ok(match tag {
        1 => LayerSpec::Dense { inputs: a, outputs: b },
        2 => LayerSpec::Softplus,
        3 => LayerSpec::Sigmoid,
        4 => LayerSpec::Constant { outputs: b },
        t => return Err(SimError::format(r.path, format!("unknown layer tag {t}"))),
    })
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        put_u32(&mut out, FORMAT_VERSION);
        put_string(&mut out, &self.config_hash);
        out.push(self.kind as u8);
        put_u32(&mut out, self.meta.len() as u32);
        self.meta.iter().for_each(|&m| put_u64(&mut out, m));
        put_u32(&mut out, self.scalars.len() as u32);
        self.scalars.iter().for_each(|&s| put_f64(&mut out, s));
        put_u32(&mut out, self.nets.len() as u32);
        for net in &self.nets {
            put_u32(&mut out, net.input_dim as u32);
            put_u32(&mut out, net.layers.len() as u32);
            net.layers.iter().for_each(|l| put_layer(&mut out, l));
            put_u64(&mut out, net.params.len() as u64);
            net.params.iter().for_each(|&p| put_f64(&mut out, p));
        }
        out
    }

    pub fn decode(path: &Path, bytes: &[u8]) -> SimResult<Self> {
        let mut r = Reader::new(path, bytes);
        r.header(CHECKPOINT_MAGIC)?;
        let config_hash = r.string("config hash")?;
        let kind = match r.u8("kind")? {
            1 => CheckpointKind::Codec,
            2 => CheckpointKind::Evaluator,
            k => return Err(SimError::format(path, format!("unknown checkpoint kind {k}"))),
        };
        let n_meta = r.u32("meta count")?;
        let meta = (0..n_meta).map(|_| r.u64("meta")).collect::<SimResult<_>>()?;
        let n_scalars = r.u32("scalar count")?;
        let scalars = (0..n_scalars).map(|_| r.f64("scalar")).collect::<SimResult<_>>()?;
        let n_nets = r.u32("net count")?;
        let mut nets = Vec::new();
        for _ in 0..n_nets {
            let input_dim = r.u32("input dim")? as usize;
            let n_layers = r.u32("layer count")?;
            let layers = (0..n_layers).map(|_| get_layer(&mut r)).collect::<SimResult<_>>()?;
            let n_params = r.u64("param count")?;
            let params = (0..n_params).map(|_| r.f64("param")).collect::<SimResult<_>>()?;
            nets.push(NetRecord {
                input_dim,
                layers,
                params,
            });
        }
        r.finish()?;
        Ok(Self {
            config_hash,
            kind,
            meta,
            scalars,
            nets,
        })
    }

    pub fn write(&self, path: &Path) -> SimResult<()> {
        write_bytes(path, &self.encode())
    }

    pub fn read(path: &Path) -> SimResult<Self> {
        Self::decode(path, &read_all(path)?)
    }

    pub fn from_codec(codec: &JsccCodec, config_hash: &str) -> Self {
        let spec = codec.spec();
        let enc = Mlp::from_params(spec.dims.len(), spec.encoder_layers(), codec.encoder_params().to_vec())
            .expect("codec layout");
        let dec = Mlp::from_params(2 * spec.symbol_count, spec.decoder_layers(), codec.decoder_params().to_vec())
            .expect("codec layout");
        Self {
            config_hash: config_hash.to_string(),
            kind: CheckpointKind::Codec,
            meta: vec![
                spec.dims.height as u64,
                spec.dims.width as u64,
                spec.dims.channels as u64,
                spec.symbol_count as u64,
                spec.hidden as u64,
                codec.seed(),
            ],
            scalars: Vec::new(),
            nets: vec![NetRecord::of(&enc), NetRecord::of(&dec)],
        }
    }

    pub fn to_codec(&self, path: &Path) -> SimResult<JsccCodec> {
        if self.kind != CheckpointKind::Codec || self.meta.len() != 6 || self.nets.len() != 2 {
            return Err(SimError::format(path, "not a codec checkpoint"));
        }
        let m = &self.meta;
        let spec = CodecSpec {
            dims: ImageDims::new(m[0] as usize, m[1] as usize, m[2] as usize),
            symbol_count: m[3] as usize,
            hidden: m[4] as usize,
        };
        if self.nets[0].layers != spec.encoder_layers() || self.nets[1].layers != spec.decoder_layers() {
            return Err(SimError::format(path, "codec layers do not match the stored spec"));
        }
        Ok(JsccCodec::from_params(
            spec,
            m[5],
            self.nets[0].params.clone(),
            self.nets[1].params.clone(),
        )?)
    }

    /// Scalars hold the label offset and scale, then the per-pixel input
    /// means, then the per-pixel input spreads.
    pub fn from_evaluator(ev: &Evaluator, config_hash: &str) -> Self {
        let norm = ev.normalization();
        let mut scalars = vec![norm.label_offset, norm.label_scale];
        scalars.extend(&norm.input_mean);
        scalars.extend(&norm.input_std);
        Self {
            config_hash: config_hash.to_string(),
            kind: CheckpointKind::Evaluator,
            meta: Vec::new(),
            scalars,
            nets: vec![NetRecord::of(ev.network())],
        }
    }

    pub fn to_evaluator(&self, path: &Path) -> SimResult<Evaluator> {
        if self.kind != CheckpointKind::Evaluator || self.nets.len() != 1 {
            return Err(SimError::format(path, "not an evaluator checkpoint"));
        }
        let n = &self.nets[0];
        if self.scalars.len() != 2 + 2 * n.input_dim {
            return Err(SimError::format(path, "evaluator normalization has the wrong length"));
        }
        let (mean, std) = self.scalars[2..].split_at(n.input_dim);
        let norm = Normalization {
            label_offset: self.scalars[0],
            label_scale: self.scalars[1],
            input_mean: mean.to_vec(),
            input_std: std.to_vec(),
        };
        Ok(Evaluator::from_parts(n.input_dim, n.layers.clone(), n.params.clone(), norm)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub source_id: u64,
    pub true_psnr_db: f64,
    pub snr_db: f64,
    pub realizations: usize,
}

pub fn label_rows(set: &LabeledSet) -> Vec<LabelRow> {
    set.items
        .iter()
        .map(|l| LabelRow {
            source_id: l.image.source_id(),
            true_psnr_db: l.true_psnr_db,
            snr_db: set.snr_db,
            realizations: set.realizations,
        })
        .collect()
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> SimResult<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| SimError::io(path, e))
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> SimResult<Vec<T>> {
    let f = File::open(path).map_err(|e| SimError::io(path, e))?;
    let mut r = csv::Reader::from_reader(BufReader::new(f));
    r.deserialize().map(|row| row.map_err(SimError::from)).collect()
}

/// Renders rows to CSV text in memory.
pub fn csv_string<T: Serialize>(rows: &[T]) -> SimResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| SimError::Invariant(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is UTF-8"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyRow {
    pub bits: u8,
    pub penalty_db: f64,
}

pub fn write_degradation(path: &Path, table: &DegradationTable) -> SimResult<()> {
    let rows: Vec<PenaltyRow> = table
        .entries()
        .map(|(bits, penalty_db)| PenaltyRow { bits, penalty_db })
        .collect();
    write_csv(path, &rows)
}

pub fn read_degradation(path: &Path) -> SimResult<DegradationTable> {
    let rows: Vec<PenaltyRow> = read_csv(path)?;
    Ok(DegradationTable::new(rows.into_iter().map(|r| (r.bits, r.penalty_db)))?)
}


#[cfg(test)]
mod tests {
    use super::*;

    fn mem() -> &'static Path {
        Path::new("mem")
    }

    fn dump() -> ChannelDump {
        let a = CMatrix::from_fn(2, 3, |i, j| C64::new(i as f64 + 0.1, -(j as f64) / 3.0));
        let b = CMatrix::from_fn(1, 1, |_, _| C64::new(f64::MIN_POSITIVE, 1e300));
        ChannelDump {
            seed: 42,
            config_hash: "abc123".into(),
            channels: vec![a, b],
        }
    }

    #[test]
    fn channels_round_trip_bit_exactly() {
        let d = dump();
        let back = decode_channels(mem(), &encode_channels(&d)).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn channel_truncation_reports_offset() {
        let bytes = encode_channels(&dump());
        let cut = bytes.len() - 3;
        match decode_channels(mem(), &bytes[..cut]) {
            Err(SimError::Truncated { offset, .. }) => assert_eq!(offset, (bytes.len() - 8) as u64),
            other => panic!("unexpected {other:?}"),
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(decode_channels(mem(), &extra), Err(SimError::Format { .. })));
        let mut bad = bytes;
        bad[0] = b'X';
        assert!(matches!(decode_channels(mem(), &bad), Err(SimError::Format { .. })));
    }

    #[test]
    fn codebook_text_round_trips() {
        let book = CsiCodebook::from_parts(1, vec![-0.1 / 3.0, 2.0 / 3.0], vec![0.1], "cfg".into()).unwrap();
        let text = format_codebook(&book);
        assert!(text.starts_with("version 1\nbits 1\nfitted_on cfg\n"));
        assert_eq!(parse_codebook(mem(), &text).unwrap(), book);
    }

    #[test]
    fn codebook_text_rejects_damage() {
        let book = CsiCodebook::from_parts(1, vec![-1.0, 1.0], vec![0.0], "cfg".into()).unwrap();
        let text = format_codebook(&book);
        assert!(parse_codebook(mem(), &text.replace("version 1", "version 9")).is_err());
        assert!(parse_codebook(mem(), &text.replace("levels 2", "levels 3")).is_err());
        assert!(parse_codebook(mem(), &format!("{text}junk\n")).is_err());
        let cut: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
        assert!(parse_codebook(mem(), &cut).is_err());
    }

    #[test]
    fn checkpoint_truncation_is_reported() {
        let dims = mimo_jscc_core::image::ImageDims::new(1, 2, 3);
        let images = mimo_jscc_core::image::synthesize_images(8, dims, 0.5, 4).unwrap();
        let set = LabeledSet {
            items: images
                .into_iter()
                .enumerate()
                .map(|(i, image)| mimo_jscc_core::evaluator::LabeledImage {
                    image,
                    true_psnr_db: 10.0 + i as f64,
                })
                .collect(),
            snr_db: 6.0,
            realizations: 1,
        };
        let mut ev = Evaluator::desk(6, 1).unwrap();
        let cfg = mimo_jscc_core::evaluator::EvaluatorTraining {
            epochs: 2,
            ..Default::default()
        };
        mimo_jscc_core::evaluator::train_evaluator(&mut ev, &set, &cfg).unwrap();
        let bytes = Checkpoint::from_evaluator(&ev, "h").encode();
        for cut in [3, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(Checkpoint::decode(mem(), &bytes[..cut]).is_err(), "cut at {cut}");
        }
        let back = Checkpoint::decode(mem(), &bytes).unwrap().to_evaluator(mem()).unwrap();
        assert_eq!(back.params(), ev.params());
        assert_eq!(back.normalization(), ev.normalization());
        let img = &set.items[3].image;
        assert_eq!(back.predict_db(img).unwrap().to_bits(), ev.predict_db(img).unwrap().to_bits());
    }

    #[test]
    fn csv_string_has_header() {
        let rows = vec![PenaltyRow { bits: 5, penalty_db: 0.25 }];
        assert_eq!(csv_string(&rows).unwrap(), "bits,penalty_db\n5,0.25\n");
    }
}
