//! Flat binary model artifact.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! header    "MAED" | u32 version | u32 metadata length | u32 layer count
//! metadata  u32 class count, then (u32 length, UTF-8 bytes) per class name
//!           u32 x3 input shape (H, W, C) | f32 threshold
//!           u32 C | f32 x C means | f32 x C standard deviations
//!           u8 ZCA flag; when 1: u32 d | f64 epsilon | f64 x d mean | f64 x d*d matrix
//!           u32 length + UTF-8 model version | u64 training seed
//! layers    u8 tag, then per kind:
//!             1 Conv2D    u32 in, out, kh, kw, stride | u8 padding (0 valid, 1 same)
//!                         f32 x out*in*kh*kw weights ([out, in, kh, kw]) | f32 x out bias
//!             2 MaxPool2D u32 window, stride
//!             3 Dense     u32 in, out | f32 x in*out weights ([in, out]) | f32 x out bias
//!             4 Dropout   f32 rate
//!             5 Flatten   6 ReLU   7 Sigmoid (no payload)
//! trailer   u32 CRC-32 of every preceding byte
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::imgpipe::{NormStats, Preprocessor, ZcaTransform};
use crate::model::{Model, ModelMeta};
use crate::nn::{Conv2d, Dense, Dropout, Flatten, Layer, MaxPool2d, Network, Padding, Relu, Sigmoid};
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"MAED";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

mod tag {
    pub const CONV2D: u8 = 1;
    pub const MAXPOOL2D: u8 = 2;
    pub const DENSE: u8 = 3;
    pub const DROPOUT: u8 = 4;
    pub const FLATTEN: u8 = 5;
    pub const RELU: u8 = 6;
    pub const SIGMOID: u8 = 7;
}

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::Format(format!("value {v} does not fit in u32")))?;
        self.buf.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f32s(&mut self, vs: &[f32]) {
        for v in vs {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn str(&mut self, s: &str) -> Result<()> {
        self.u32(s.len())?;
        self.buf.extend_from_slice(s.as_bytes());
        Ok(())
    }
}

fn write_metadata(w: &mut Writer, model: &Model) -> Result<()> {
    let meta = model.meta();
    w.u32(meta.class_names.len())?;
    for name in &meta.class_names {
        w.str(name)?;
    }
    for d in model.input_shape() {
        w.u32(d)?;
    }
    w.f32s(&[meta.threshold]);
    let norm = &model.preprocessor().norm;
    w.u32(norm.channels())?;
    w.f32s(&norm.mean);
    w.f32s(&norm.std);
    match &model.preprocessor().zca {
        None => w.u8(0),
        Some(z) => {
            w.u8(1);
            w.u32(z.dim())?;
            w.f64s(&[z.epsilon]);
            w.f64s(&z.mean);
            w.f64s(&z.whitening);
        }
    }
    w.str(&meta.version)?;
    w.u64(meta.seed);
    Ok(())
}

fn write_layer(w: &mut Writer, layer: &Layer<f32>) -> Result<()> {
    match layer {
        Layer::Conv2D(c) => {
            w.u8(tag::CONV2D);
            let s = c.weight.shape();
            for d in [s[1], s[0], s[2], s[3], c.stride()] {
                w.u32(d)?;
            }
            w.u8(match c.padding() {
                Padding::Valid => 0,
                Padding::Same => 1,
            });
            w.f32s(c.weight.data());
            w.f32s(c.bias.data());
        }
        Layer::MaxPool2D(p) => {
            w.u8(tag::MAXPOOL2D);
            w.u32(p.window)?;
            w.u32(p.stride)?;
        }
        Layer::Dense(d) => {
            w.u8(tag::DENSE);
            w.u32(d.in_features())?;
            w.u32(d.out_features())?;
            w.f32s(d.weight.data());
            w.f32s(d.bias.data());
        }
        Layer::Dropout(d) => {
            w.u8(tag::DROPOUT);
            w.f32s(&[d.rate()]);
        }
        Layer::Flatten(_) => w.u8(tag::FLATTEN),
        Layer::ReLU(_) => w.u8(tag::RELU),
        Layer::Sigmoid(_) => w.u8(tag::SIGMOID),
    }
    Ok(())
}

/// Serializes a model. The output is a pure function of the model.
pub fn to_bytes(model: &Model) -> Result<Vec<u8>> {
    let mut meta = Writer::default();
    write_metadata(&mut meta, model)?;
    let layers = model.network().layers();

    let mut w = Writer::default();
    w.buf.extend_from_slice(&MAGIC);
    w.u32(FORMAT_VERSION as usize)?;
    w.u32(meta.buf.len())?;
    w.u32(layers.len())?;
    w.buf.extend_from_slice(&meta.buf);
    for layer in layers {
        write_layer(&mut w, layer)?;
    }
    let crc = crc32fast::hash(&w.buf);
    w.buf.extend_from_slice(&crc.to_le_bytes());
    Ok(w.buf)
}

/// Writes the artifact and returns its size in bytes.
pub fn save_model(model: &Model, path: &Path) -> Result<usize> {
    let bytes = to_bytes(model)?;
    fs::write(path, &bytes)?;
    Ok(bytes.len())
}

pub fn load_model(path: &Path) -> Result<Model> {
    from_bytes(&fs::read(path)?)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Truncated {
                offset: self.pos,
                needed: n - self.remaining(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    /// Byte count for `count` items of `width` bytes, failing on overflow so
    /// that a corrupted count never turns into a huge allocation.
    fn span(&self, count: usize, width: usize) -> Result<usize> {
        count.checked_mul(width).ok_or_else(|| Error::Truncated {
            offset: self.pos,
            needed: usize::MAX,
        })
    }

    fn f32s(&mut self, count: usize) -> Result<Vec<f32>> {
        let bytes = self.take(self.span(count, 4)?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }

    fn f64s(&mut self, count: usize) -> Result<Vec<f64>> {
        let bytes = self.take(self.span(count, 8)?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(self.f32s(1)?[0])
    }

    fn str(&mut self) -> Result<String> {
        let start = self.pos;
        let len = self.u32()?;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| Error::Format(format!("invalid UTF-8 string at byte offset {start}")))
    }
}

fn format_err(offset: usize, msg: impl std::fmt::Display) -> Error {
    Error::Format(format!("{msg} (byte offset {offset})"))
}

struct Header {
    metadata_len: usize,
    layer_count: usize,
}

fn read_header(r: &mut Reader<'_>) -> Result<Header> {
    if r.take(4)? != MAGIC {
        return Err(Error::Format("not a model artifact (bad magic bytes)".into()));
    }
    let version = r.u32()? as u32;
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    Ok(Header {
        metadata_len: r.u32()?,
        layer_count: r.u32()?,
    })
}

struct Metadata {
    meta: ModelMeta,
    input_shape: [usize; 3],
    preprocessor: Preprocessor,
}

fn read_metadata(r: &mut Reader<'_>) -> Result<Metadata> {
    let class_count = r.u32()?;
    if class_count != 2 {
        return Err(format_err(r.pos - 4, format!("expected 2 class names, found {class_count}")));
    }
    let class_names = (0..class_count).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
    let input_shape = [r.u32()?, r.u32()?, r.u32()?];
    let threshold = r.f32()?;
    let channels = r.u32()?;
    if channels != input_shape[2] {
        return Err(format_err(
            r.pos - 4,
            format!("normalization has {channels} channels, input has {}", input_shape[2]),
        ));
    }
    let mean = r.f32s(channels)?;
    let std = r.f32s(channels)?;
    let zca = match r.u8()? {
        0 => None,
        1 => {
            let d = r.u32()?;
            let epsilon = r.f64s(1)?[0];
            let zmean = r.f64s(d)?;
            let whitening = r.f64s(r.span(d, d)?)?;
            Some(ZcaTransform {
                mean: zmean,
                whitening,
                epsilon,
            })
        }
        other => return Err(format_err(r.pos - 1, format!("invalid ZCA flag {other}"))),
    };
    let version = r.str()?;
    let seed = r.u64()?;
    Ok(Metadata {
        meta: ModelMeta {
            class_names,
            threshold,
            version,
            seed,
        },
        input_shape,
        preprocessor: Preprocessor {
            norm: NormStats { mean, std },
            zca,
        },
    })
}

fn read_layer(r: &mut Reader<'_>) -> Result<Layer<f32>> {
    let start = r.pos;
    let wrap = |e: Error| match e {
        Error::Truncated { .. } => e,
        other => format_err(start, format!("invalid layer record: {other}")),
    };
    Ok(match r.u8()? {
        tag::CONV2D => {
            let (cin, cout, kh, kw, stride) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?, r.u32()?);
            let padding = match r.u8()? {
                0 => Padding::Valid,
                1 => Padding::Same,
                other => return Err(format_err(r.pos - 1, format!("invalid padding code {other}"))),
            };
            let n = r.span(cout, cin).and_then(|v| r.span(v, kh)).and_then(|v| r.span(v, kw))?;
            let weight = Tensor::new(&[cout, cin, kh, kw], r.f32s(n)?).map_err(wrap)?;
            let bias = Tensor::new(&[cout], r.f32s(cout)?).map_err(wrap)?;
            Layer::Conv2D(Conv2d::new(weight, bias, stride, padding).map_err(wrap)?)
        }
        tag::MAXPOOL2D => {
            let (window, stride) = (r.u32()?, r.u32()?);
            if window == 0 || stride == 0 {
                return Err(format_err(start, "max pool window and stride must be positive"));
            }
            Layer::MaxPool2D(MaxPool2d::new(window, stride))
        }
        tag::DENSE => {
            let (fin, fout) = (r.u32()?, r.u32()?);
            let weight = Tensor::new(&[fin, fout], r.f32s(r.span(fin, fout)?)?).map_err(wrap)?;
            let bias = Tensor::new(&[fout], r.f32s(fout)?).map_err(wrap)?;
            Layer::Dense(Dense::new(weight, bias).map_err(wrap)?)
        }
        tag::DROPOUT => Layer::Dropout(Dropout::new(r.f32()?).map_err(wrap)?),
        tag::FLATTEN => Layer::Flatten(Flatten::default()),
        tag::RELU => Layer::ReLU(Relu::default()),
        tag::SIGMOID => Layer::Sigmoid(Sigmoid::default()),
        other => return Err(format_err(start, format!("unknown layer tag {other}"))),
    })
}

/// Parses and verifies an artifact: structure first, then the checksum.
pub fn from_bytes(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let header = read_header(&mut r)?;
    let meta_start = r.pos;
    let md = read_metadata(&mut r)?;
    if r.pos - meta_start != header.metadata_len {
        return Err(format_err(
            meta_start,
            format!(
                "metadata is {} bytes, header declares {}",
                r.pos - meta_start,
                header.metadata_len
            ),
        ));
    }
    let mut layers = Vec::new();
    for _ in 0..header.layer_count {
        layers.push(read_layer(&mut r)?);
    }
    let body_end = r.pos;
    let stored = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    if r.remaining() != 0 {
        return Err(format_err(r.pos, format!("{} unexpected trailing bytes", r.remaining())));
    }
    let actual = crc32fast::hash(&bytes[..body_end]);
    if stored != actual {
        return Err(Error::Corrupt(format!(
            "checksum mismatch: stored {stored:08x}, computed {actual:08x}"
        )));
    }

    let network = Network::from_layers(&md.input_shape, layers).map_err(|e| Error::Format(e.to_string()))?;
    Model::new(network, md.preprocessor, md.meta).map_err(|e| Error::Format(e.to_string()))
}

/// Human-readable listing of an artifact's header, metadata and layers.
pub fn dump(bytes: &[u8]) -> Result<String> {
    let model = from_bytes(bytes)?;
    let mut r = Reader { buf: bytes, pos: 0 };
    let header = read_header(&mut r)?;
    let meta = model.meta();
    let mut out = String::new();
    let _ = writeln!(out, "format      MAED v{FORMAT_VERSION}, {} bytes", bytes.len());
    let _ = writeln!(out, "metadata    {} bytes", header.metadata_len);
    let _ = writeln!(out, "classes     {}", meta.class_names.join(" | "));
    let _ = writeln!(out, "input       {:?}", model.input_shape());
    let _ = writeln!(out, "threshold   {}", meta.threshold);
    let _ = writeln!(out, "norm mean   {:?}", model.preprocessor().norm.mean);
    let _ = writeln!(out, "norm std    {:?}", model.preprocessor().norm.std);
    match &model.preprocessor().zca {
        None => {
            let _ = writeln!(out, "zca         off");
        }
        Some(z) => {
            let _ = writeln!(out, "zca         d={} epsilon={}", z.dim(), z.epsilon);
        }
    }
    let _ = writeln!(out, "version     {}", meta.version);
    let _ = writeln!(out, "seed        {}", meta.seed);
    let _ = writeln!(out, "layers      {}", header.layer_count);
    let mut offset = HEADER_LEN + header.metadata_len;
    let mut scratch = Writer::default();
    for (i, layer) in model.network().layers().iter().enumerate() {
        scratch.buf.clear();
        write_layer(&mut scratch, layer)?;
        let params: usize = layer.params().iter().map(|p| p.len()).sum();
        let _ = writeln!(
            out,
            "  [{i:2}] @{offset:<8} {:<9} {:>8} bytes {:>9} params",
            layer.spec().kind_name(),
            scratch.buf.len(),
            params
        );
        offset += scratch.buf.len();
    }
    let crc = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().expect("4 bytes"));
    let _ = write!(out, "crc32       {crc:08x} @{offset}");
    Ok(out)
}
