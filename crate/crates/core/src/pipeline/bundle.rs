//! Model bundle file: an 8-byte magic, a `u32` format version, the config
//! as `key = value` text, then every parameter array as little-endian `f64`
//! preceded by its `u64` shape.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::config::PipelineConfig;
use super::features::{Frontend, Standardizer};
use super::train::ModelBundle;
use crate::dbn::{DbnModel, DenseLayer, Provenance};
use crate::dsp::PcaWhitener;
use crate::error::{Error, Result};
use crate::gmm::{GmmModel, ScoreNormalization, SpeakerModelSet};

const MAGIC: &[u8; 8] = b"SPKRECMB";
const VERSION: u32 = 1;

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn str(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.buf.extend_from_slice(s.as_bytes());
    }

    fn array1(&mut self, a: &Array1<f64>) {
        self.u64(a.len() as u64);
        a.iter().for_each(|&v| self.f64(v));
    }

    fn array2(&mut self, a: &Array2<f64>) {
        self.u64(a.nrows() as u64);
        self.u64(a.ncols() as u64);
        a.iter().for_each(|&v| self.f64(v));
    }

    fn layer(&mut self, l: &DenseLayer) {
        self.array2(&l.weights);
        self.array1(&l.bias);
    }

    fn gmm(&mut self, g: &GmmModel) {
        self.array1(g.weights());
        self.array2(g.means());
        self.array2(g.variances());
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

fn corrupt(what: &str) -> Error {
    Error::Bundle(format!("truncated or corrupt {what}"))
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len()).ok_or_else(|| corrupt(what))?;
        let out = &self.data[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1, "flag")?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, "u32")?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, "u64")?.try_into().expect("8 bytes")))
    }

    fn len(&mut self, what: &str) -> Result<usize> {
        let n = self.u64()?;
        // every element needs at least one byte, which bounds allocations on bad input
        let n = usize::try_from(n).map_err(|_| corrupt(what))?;
        if n > self.data.len() - self.pos {
            return Err(corrupt(what));
        }
        Ok(n)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, "f64")?.try_into().expect("8 bytes")))
    }

    fn str(&mut self) -> Result<String> {
        let n = self.len("string")?;
        String::from_utf8(self.take(n, "string")?.to_vec()).map_err(|_| corrupt("string"))
    }

    fn values(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| corrupt("array"))?, "array")?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }

    fn array1(&mut self) -> Result<Array1<f64>> {
        let n = self.len("array")?;
        Ok(Array1::from(self.values(n)?))
    }

    fn array2(&mut self) -> Result<Array2<f64>> {
        let rows = self.len("array")?;
        let cols = self.len("array")?;
        let n = rows.checked_mul(cols).ok_or_else(|| corrupt("array"))?;
        Array2::from_shape_vec((rows, cols), self.values(n)?).map_err(|_| corrupt("array"))
    }

    fn layer(&mut self) -> Result<DenseLayer> {
        let weights = self.array2()?;
        let bias = self.array1()?;
        DenseLayer::new(weights, bias)
    }

    fn gmm(&mut self) -> Result<GmmModel> {
        let weights = self.array1()?;
        let means = self.array2()?;
        let variances = self.array2()?;
        GmmModel::new(weights, means, variances)
    }
}

impl ModelBundle {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.buf.extend_from_slice(MAGIC);
        w.u32(VERSION);
        w.str(&self.config.to_kv_string());
        w.u32(self.sample_rate_hz);

        match &self.frontend {
            None => w.u8(0),
            Some(fe) => {
                w.u8(1);
                let wh = &fe.whitener;
                w.array1(&wh.mean);
                w.array2(&wh.components);
                w.array1(&wh.eigenvalues);
                w.array1(&wh.scales);
                w.f64(wh.epsilon);
                w.layer(&fe.dbn.layer1);
                w.layer(&fe.dbn.layer2);
                w.u8(match fe.dbn.provenance {
                    Provenance::Pretrained => 0,
                    Provenance::Finetuned => 1,
                });
                match &fe.dbn.head {
                    None => w.u8(0),
                    Some(h) => {
                        w.u8(1);
                        w.layer(h);
                    }
                }
            }
        }

        w.array1(&self.standardizer.mean);
        w.array1(&self.standardizer.std);

        let models = &self.models;
        w.gmm(models.ubm());
        w.u64(models.len() as u64);
        for (id, g) in models.speakers() {
            w.str(id);
            w.gmm(g);
        }
        let norm = models.normalization();
        w.f64(norm.mean);
        w.f64(norm.std);
        w.f64(models.threshold());
        w.buf
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = Reader { data, pos: 0 };
        if r.take(8, "header")? != MAGIC {
            return Err(Error::Bundle("not a model bundle (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Bundle(format!("unsupported bundle version {version}")));
        }
        let config = PipelineConfig::from_kv_str(&r.str()?)?;
        let sample_rate_hz = r.u32()?;

        let frontend = match r.u8()? {
            0 => None,
            1 => {
                let whitener = PcaWhitener {
                    mean: r.array1()?,
                    components: r.array2()?,
                    eigenvalues: r.array1()?,
                    scales: r.array1()?,
                    epsilon: r.f64()?,
                };
                let layer1 = r.layer()?;
                let layer2 = r.layer()?;
                let provenance = match r.u8()? {
                    0 => Provenance::Pretrained,
                    1 => Provenance::Finetuned,
                    _ => return Err(corrupt("provenance")),
                };
                let mut dbn = DbnModel::new(layer1, layer2, provenance)?;
                dbn.head = match r.u8()? {
                    0 => None,
                    1 => Some(r.layer()?),
                    _ => return Err(corrupt("head flag")),
                };
                Some(Frontend { whitener, dbn })
            }
            _ => return Err(corrupt("front-end flag")),
        };

        let standardizer = Standardizer {
            mean: r.array1()?,
            std: r.array1()?,
        };
        let ubm = r.gmm()?;
        let n_speakers = r.len("speaker count")?;
        let mut speakers = BTreeMap::new();
        for _ in 0..n_speakers {
            let id = r.str()?;
            speakers.insert(id, r.gmm()?);
        }
        let normalization = ScoreNormalization {
            mean: r.f64()?,
            std: r.f64()?,
        };
        let threshold = r.f64()?;
        if r.pos != data.len() {
            return Err(Error::Bundle(format!("{} trailing bytes", data.len() - r.pos)));
        }
        let models = SpeakerModelSet::new(speakers, ubm)?
            .with_normalization(normalization)
            .with_threshold(threshold);
        Ok(Self {
            config,
            sample_rate_hz,
            frontend,
            standardizer,
            models,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&data)
    }
}
