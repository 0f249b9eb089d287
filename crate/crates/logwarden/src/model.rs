//! Trained-model persistence: a single binary file holding the resolved
//! configuration, the document-frequency table, the network-embedding
//! signature table, and the cluster model.
//!
//! # Layout (all integers and floats little-endian)
//!
//! ```text
//! offset  size  field
//! 0       8     magic "LWDNMDL\0"
//! 8       4     format version (u32) — currently 1
//! 12      8     config length (u64), then that many bytes of TOML
//! ...     8     tfidf.doc_count (u64)
//! ...     8     tfidf entry count (u64), then per entry, in ascending
//!               byte order of the token:
//!                 8  token length (u64), token bytes (UTF-8),
//!                 8  document frequency (u64)
//! ...     8     network-table embedding dimension (u64)
//! ...     8     network-table entry count (u64), then per entry, in
//!               ascending signature order:
//!                 8  content signature (u64),
//!                 8×dim  embedding values (f64; exact upcasts of the
//!                        trained f32 values)
//! ...     8     centroid count (u64)
//! ...     8     centroid dimension (u64)
//! ...     8×dim×count  centroid values (f64), row by row
//! ...     8×count      cluster member counts (u64)
//! ...     8     admission threshold delta (f64)
//! ...     8     anomaly multiplier tau (f64)
//! ...     8     training loss (f64)
//! ...     1     normalize flag (0 or 1)
//! ```
//!
//! Serialization is canonical: the same model saves to identical bytes
//! every time, so artifact hashes are meaningful.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::config::PipelineConfig;
use crate::detector::ClusterModel;
use crate::encoder::TfIdfModel;
use crate::error::{Error, Result};

const MAGIC: [u8; 8] = *b"LWDNMDL\0";
const VERSION: u32 = 1;

/// Everything needed to score new corpora exactly as training would.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub config: PipelineConfig,
    pub tfidf: TfIdfModel,
    /// Mean network embedding per content signature, from training.
    pub net_table: BTreeMap<u64, Vec<f32>>,
    pub clusters: ClusterModel,
}

fn fmt_err(msg: impl Into<String>) -> Error {
    Error::ModelFormat(msg.into())
}

struct Reader<R: Read> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn exact(&mut self, buf: &mut [u8]) -> Result<()> {
        self.inner
            .read_exact(buf)
            .map_err(|_| fmt_err("unexpected end of model file"))
    }

    fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    fn f64(&mut self) -> Result<f64> {
        let mut b = [0u8; 8];
        self.exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }

    fn len(&mut self, what: &str, cap: u64) -> Result<usize> {
        let n = self.u64()?;
        if n > cap {
            return Err(fmt_err(format!("{what} count {n} exceeds sanity cap {cap}")));
        }
        Ok(n as usize)
    }

    fn string(&mut self, what: &str, cap: u64) -> Result<String> {
        let n = self.len(what, cap)?;
        let mut b = vec![0u8; n];
        self.exact(&mut b)?;
        String::from_utf8(b).map_err(|_| fmt_err(format!("{what} is not valid UTF-8")))
    }
}

fn write_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

impl ModelFile {
    pub fn save<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;

        let config_text = self.config.to_toml();
        write_u64(&mut w, config_text.len() as u64)?;
        w.write_all(config_text.as_bytes())?;

        write_u64(&mut w, self.tfidf.doc_count)?;
        write_u64(&mut w, self.tfidf.doc_freq.len() as u64)?;
        for (token, df) in &self.tfidf.doc_freq {
            write_u64(&mut w, token.len() as u64)?;
            w.write_all(token.as_bytes())?;
            write_u64(&mut w, *df)?;
        }

        let dim = self.net_table.values().next().map_or(0, Vec::len);
        for (sig, v) in &self.net_table {
            if v.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: v.len() })
                    .map_err(|e| fmt_err(format!("signature {sig:#x}: {e}")));
            }
        }
        write_u64(&mut w, dim as u64)?;
        write_u64(&mut w, self.net_table.len() as u64)?;
        for (sig, v) in &self.net_table {
            write_u64(&mut w, *sig)?;
            for x in v {
                write_f64(&mut w, f64::from(*x))?;
            }
        }

        let c = &self.clusters;
        let cdim = c.dim();
        if c.member_counts.len() != c.centroids.len() {
            return Err(fmt_err("centroid and member-count lengths disagree"));
        }
        write_u64(&mut w, c.centroids.len() as u64)?;
        write_u64(&mut w, cdim as u64)?;
        for row in &c.centroids {
            if row.len() != cdim {
                return Err(fmt_err("ragged centroid matrix"));
            }
            for x in row {
                write_f64(&mut w, *x)?;
            }
        }
        for m in &c.member_counts {
            write_u64(&mut w, *m)?;
        }
        write_f64(&mut w, c.delta)?;
        write_f64(&mut w, c.tau)?;
        write_f64(&mut w, c.loss_train)?;
        w.write_all(&[u8::from(c.normalized)])?;
        Ok(())
    }

    pub fn load<R: Read>(r: R) -> Result<Self> {
        let mut r = Reader { inner: r };

        let mut magic = [0u8; 8];
        r.exact(&mut magic)?;
        if magic != MAGIC {
            return Err(fmt_err("not a model file (bad magic)"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(fmt_err(format!(
                "unsupported model version {version}, this build reads version {VERSION}"
            )));
        }

        let config_text = r.string("config", 1 << 20)?;
        let config = PipelineConfig::from_toml(&config_text)
            .map_err(|e| fmt_err(format!("embedded config rejected: {e}")))?;

        let doc_count = r.u64()?;
        let n_tokens = r.len("token table", 1 << 32)?;
        let mut doc_freq = BTreeMap::new();
        let mut prev: Option<String> = None;
        for _ in 0..n_tokens {
            let token = r.string("token", 1 << 16)?;
            if let Some(p) = &prev {
                if *p >= token {
                    return Err(fmt_err("token table is not strictly sorted"));
                }
            }
            let df = r.u64()?;
            prev = Some(token.clone());
            doc_freq.insert(token, df);
        }

        let net_dim = r.len("embedding dimension", 1 << 24)?;
        let n_sigs = r.len("signature table", 1 << 32)?;
        let mut net_table = BTreeMap::new();
        let mut prev_sig: Option<u64> = None;
        for _ in 0..n_sigs {
            let sig = r.u64()?;
            if let Some(p) = prev_sig {
                if p >= sig {
                    return Err(fmt_err("signature table is not strictly sorted"));
                }
            }
            prev_sig = Some(sig);
            let mut v = Vec::with_capacity(net_dim);
            for _ in 0..net_dim {
                let x = r.f64()?;
                let narrowed = x as f32;
                if f64::from(narrowed) != x {
                    return Err(fmt_err(format!(
                        "signature {sig:#x} holds a value that is not an exact \
                         single-precision upcast"
                    )));
                }
                v.push(narrowed);
            }
            net_table.insert(sig, v);
        }

        let n_centroids = r.len("centroids", 1 << 24)?;
        let cdim = r.len("centroid dimension", 1 << 24)?;
        let mut centroids = Vec::with_capacity(n_centroids);
        for _ in 0..n_centroids {
            let mut row = Vec::with_capacity(cdim);
            for _ in 0..cdim {
                row.push(r.f64()?);
            }
            centroids.push(row);
        }
        let mut member_counts = Vec::with_capacity(n_centroids);
        for _ in 0..n_centroids {
            member_counts.push(r.u64()?);
        }
        let delta = r.f64()?;
        let tau = r.f64()?;
        let loss_train = r.f64()?;
        let mut flag = [0u8; 1];
        r.exact(&mut flag)?;
        let normalized = match flag[0] {
            0 => false,
            1 => true,
            other => return Err(fmt_err(format!("normalize flag must be 0 or 1, got {other}"))),
        };

        let mut trailing = [0u8; 1];
        if r.inner.read(&mut trailing).map_err(Error::Io)? != 0 {
            return Err(fmt_err("trailing bytes after model payload"));
        }

        Ok(ModelFile {
            config,
            tfidf: TfIdfModel { doc_count, doc_freq },
            net_table,
            clusters: ClusterModel {
                centroids,
                member_counts,
                delta,
                tau,
                loss_train,
                normalized,
            },
        })
    }

    pub fn save_to_path(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.save(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load_from_path(path: &Path) -> Result<Self> {
        Self::load(BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample_model() -> ModelFile {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut net_table = BTreeMap::new();
        for sig in [3u64, 17, 0xdead_beef, u64::MAX] {
            let v: Vec<f32> = (0..8).map(|_| rng.gen::<f32>() * 2.0 - 1.0).collect();
            net_table.insert(sig, v);
        }
        let mut doc_freq = BTreeMap::new();
        for (t, df) in [("4624", 40u64), ("chrome.exe", 12), ("zz", 1)] {
            doc_freq.insert(t.to_string(), df);
        }
        ModelFile {
            config: PipelineConfig::default(),
            tfidf: TfIdfModel { doc_count: 57, doc_freq },
            net_table,
            clusters: ClusterModel {
                centroids: vec![
                    (0..6).map(|_| rng.gen::<f64>() - 0.5).collect(),
                    (0..6).map(|_| rng.gen::<f64>() - 0.5).collect(),
                ],
                member_counts: vec![31, 9],
                delta: 0.72,
                tau: 1.0,
                loss_train: 0.004_321,
                normalized: true,
            },
        }
    }

    #[test]
    fn round_trip_is_exact_and_byte_stable() {
        let m = sample_model();
        let mut bytes = Vec::new();
        m.save(&mut bytes).unwrap();
        let back = ModelFile::load(bytes.as_slice()).unwrap();
        assert_eq!(back, m);
        for (sig, v) in &m.net_table {
            let w = &back.net_table[sig];
            for (a, b) in v.iter().zip(w) {
                assert_eq!(a.to_bits(), b.to_bits(), "signature {sig:#x}");
            }
        }
        let mut again = Vec::new();
        back.save(&mut again).unwrap();
        assert_eq!(bytes, again, "serialization is not canonical");
    }

    #[test]
    fn special_float_values_survive() {
        let mut m = sample_model();
        m.net_table.insert(
            1,
            vec![-0.0f32, f32::MIN_POSITIVE, f32::MAX, 0.1, -1e-30, 3.141_592_7, 0.0, -2.5],
        );
        m.clusters.centroids[0][0] = -0.0;
        let mut bytes = Vec::new();
        m.save(&mut bytes).unwrap();
        let back = ModelFile::load(bytes.as_slice()).unwrap();
        for (a, b) in m.net_table[&1].iter().zip(&back.net_table[&1]) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back.clusters.centroids[0][0].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn every_truncation_fails_cleanly() {
        let m = sample_model();
        let mut bytes = Vec::new();
        m.save(&mut bytes).unwrap();
        for cut in 0..bytes.len() {
            assert!(
                ModelFile::load(&bytes[..cut]).is_err(),
                "truncation at {cut}/{} parsed",
                bytes.len()
            );
        }
    }

    #[test]
    fn trailing_garbage_is_rejected() {
        let m = sample_model();
        let mut bytes = Vec::new();
        m.save(&mut bytes).unwrap();
        bytes.push(0);
        assert!(ModelFile::load(bytes.as_slice()).is_err());
    }

    #[test]
    fn bad_magic_and_version_are_rejected() {
        let m = sample_model();
        let mut bytes = Vec::new();
        m.save(&mut bytes).unwrap();

        let mut wrong_magic = bytes.clone();
        wrong_magic[0] ^= 0xff;
        let err = ModelFile::load(wrong_magic.as_slice()).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");

        let mut wrong_version = bytes;
        wrong_version[8] = 200;
        let err = ModelFile::load(wrong_version.as_slice()).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }

    #[test]
    fn tampered_config_is_rejected() {
        let m = sample_model();
        let mut bytes = Vec::new();
        m.save(&mut bytes).unwrap();
        let needle = b"delta = 0.72";
        let pos = bytes
            .windows(needle.len())
            .position(|w| w == needle)
            .expect("config text embeds delta");
        bytes[pos..pos + needle.len()].copy_from_slice(b"delta = 7.20");
        assert!(ModelFile::load(bytes.as_slice()).is_err());
    }

    #[test]
    fn unsorted_tables_are_rejected() {
        // Handcraft a file whose token table is out of order by swapping
        // the serialized entries of a two-token model.
        let mut m = sample_model();
        m.tfidf.doc_freq.clear();
        m.tfidf.doc_freq.insert("aa".into(), 1);
        m.tfidf.doc_freq.insert("bb".into(), 2);
        let mut bytes = Vec::new();
        m.save(&mut bytes).unwrap();
        let a = bytes.windows(2).position(|w| w == b"aa").unwrap();
        let b = bytes.windows(2).position(|w| w == b"bb").unwrap();
        bytes.swap(a, b);
        bytes.swap(a + 1, b + 1);
        let err = ModelFile::load(bytes.as_slice()).unwrap_err();
        assert!(err.to_string().contains("sorted"), "{err}");
    }

    #[test]
    fn file_round_trip_via_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        let m = sample_model();
        m.save_to_path(&path).unwrap();
        assert_eq!(ModelFile::load_from_path(&path).unwrap(), m);
        assert!(ModelFile::load_from_path(&dir.path().join("missing.bin")).is_err());
    }

    #[test]
    fn ragged_tables_refuse_to_save() {
        let mut m = sample_model();
        m.net_table.get_mut(&3).unwrap().pop();
        assert!(m.save(&mut Vec::new()).is_err());
        let mut m2 = sample_model();
        m2.clusters.member_counts.pop();
        assert!(m2.save(&mut Vec::new()).is_err());
    }
}
