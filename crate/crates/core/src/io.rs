//! File formats and artifact staging.
//!
//! Images are binary PGM (P5) with 16-bit big-endian samples, keys are one
//! lowercase hex string per line, tables are CSV. Artifacts are written with
//! a `.partial` suffix and renamed only once a whole pipeline has succeeded.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::device::{ImageMeta, Quantization, SpeckleImage};
use crate::keys::BinaryKey;
use crate::{Error, Real, Result};

pub const PARTIAL_SUFFIX: &str = ".partial";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Decoded PGM raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

/// Encodes an image as 16-bit P5. Quantized images already hold counts and
/// are written as is; others are scaled so the brightest pixel is 65535.
pub fn encode_pgm<T: Real>(image: &SpeckleImage<T>, quantization: Quantization) -> Vec<u8> {
    let n = image.size;
    let mut out = format!("P5\n{n} {n}\n65535\n").into_bytes();
    out.reserve(2 * n * n);
    let max = image.intensities.iter().map(|v| v.f64()).fold(0.0, f64::max);
    let scale = match quantization {
        Quantization::Bits16 => 1.0,
        Quantization::None if max > 0.0 => 65535.0 / max,
        Quantization::None => 0.0,
    };
    for v in &image.intensities {
        let s = (v.f64() * scale).round().clamp(0.0, 65535.0) as u16;
        out.extend_from_slice(&s.to_be_bytes());
    }
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Pgm> {
    let bad = |detail: String| Error::Format { kind: "PGM", detail };
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header".into()));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|e| bad(e.to_string()))?);
    }
    if fields[0] != "P5" {
        return Err(bad(format!("magic {:?}, expected P5", fields[0])));
    }
    let num = |s: &str, what: &str| s.parse::<usize>().map_err(|_| bad(format!("{what} {s:?}")));
    let width = num(fields[1], "width")?;
    let height = num(fields[2], "height")?;
    let maxval = num(fields[3], "maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(bad(format!("maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let wide = maxval > 255;
    let need = width * height * if wide { 2 } else { 1 };
    let raster = bytes.get(pos..).unwrap_or_default();
    if raster.len() != need {
        return Err(bad(format!("raster has {} bytes, expected {need}", raster.len())));
    }
    let samples: Vec<u16> = if wide {
        raster.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
    } else {
        raster.iter().map(|&b| u16::from(b)).collect()
    };
    if let Some(s) = samples.iter().find(|&&s| usize::from(s) > maxval) {
        return Err(bad(format!("sample {s} exceeds maxval {maxval}")));
    }
    Ok(Pgm { width, height, maxval: maxval as u16, samples })
}

impl Pgm {
    /// Square frame holding the raw sample counts.
    pub fn into_image(self, meta: ImageMeta) -> Result<SpeckleImage<f64>> {
        if self.width != self.height {
            return Err(Error::Format {
                kind: "PGM",
                detail: format!("{}x{} frame is not square", self.width, self.height),
            });
        }
        Ok(SpeckleImage { size: self.width, intensities: self.samples.into_iter().map(f64::from).collect(), meta })
    }
}

pub fn read_pgm(path: &Path) -> Result<Pgm> {
    decode_pgm(&fs::read(path)?).map_err(|e| match e {
        Error::Format { kind, detail } => Error::Format { kind, detail: format!("{}: {detail}", path.display()) },
        other => other,
    })
}

pub fn format_keys(keys: &[BinaryKey]) -> String {
    let mut s = String::with_capacity(keys.len() * 65);
    for k in keys {
        s.push_str(&k.to_string());
        s.push('\n');
    }
    s
}

/// Parses one key per line; blank lines and `#` comments are skipped.
pub fn parse_keys(text: &str) -> Result<Vec<BinaryKey>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            l.parse().map_err(|e: Error| Error::Format { kind: "key file", detail: format!("line {}: {e}", i + 1) })
        })
        .collect()
}

pub fn read_keys(path: &Path) -> Result<Vec<BinaryKey>> {
    parse_keys(&fs::read_to_string(path)?)
}

/// CSV table; numbers should be pre-formatted with [`num`].
pub fn csv_table<I>(header: &[&str], rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let err = |e: csv::Error| Error::Format { kind: "CSV", detail: e.to_string() };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::Format { kind: "CSV", detail: e.to_string() })
}

/// Shortest round-trip decimal form; integral values print without a
/// fraction (`0`, `1540`).
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn json_bytes<S: Serialize>(value: &S) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("report serializes");
    v.push(b'\n');
    v
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    /// Path relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Stages artifacts under `root` as `<name>.partial` until [`commit`].
///
/// [`commit`]: ArtifactWriter::commit
#[derive(Debug)]
pub struct ArtifactWriter {
    root: PathBuf,
    records: Vec<ArtifactRecord>,
}

impl ArtifactWriter {
    pub fn new(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf(), records: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn final_path(&self, rel: &str) -> PathBuf {
        rel.split('/').fold(self.root.clone(), |p, part| p.join(part))
    }

    fn partial_path(&self, rel: &str) -> PathBuf {
        let mut p = self.final_path(rel).into_os_string();
        p.push(PARTIAL_SUFFIX);
        PathBuf::from(p)
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        if self.records.iter().any(|r| r.path == rel) {
            return Err(Error::InvalidConfig(format!("artifact {rel} written twice")));
        }
        let path = self.partial_path(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, bytes)?;
        self.records.push(ArtifactRecord {
            path: rel.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn records(&self) -> &[ArtifactRecord] {
        &self.records
    }

    /// Renames every staged file to its final name.
    pub fn commit(self) -> Result<Vec<ArtifactRecord>> {
        for r in &self.records {
            fs::rename(self.partial_path(&r.path), self.final_path(&r.path))?;
        }
        Ok(self.records)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn meta() -> ImageMeta {
        ImageMeta { device_seed: 1, wavelength_nm: 1550.0, snr_db: None, noise_seed: 0 }
    }

    #[test]
    fn pgm_header_and_byte_order() {
        let img = SpeckleImage { size: 2, intensities: vec![0.0, 1.0, 2.0, 4.0], meta: meta() };
        let bytes = encode_pgm(&img, Quantization::None);
        assert!(bytes.starts_with(b"P5\n2 2\n65535\n"));
        let raster = &bytes[b"P5\n2 2\n65535\n".len()..];
        // 65535 * 0.25 = 16383.75 -> 16384 = 0x4000
        assert_eq!(raster, &[0x00, 0x00, 0x40, 0x00, 0x80, 0x00, 0xff, 0xff]);
    }

    #[test]
    fn quantized_counts_round_trip_exactly() {
        let counts = vec![0.0, 17.0, 65535.0, 300.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let img = SpeckleImage { size: 3, intensities: counts.clone(), meta: meta() };
        let back = decode_pgm(&encode_pgm(&img, Quantization::Bits16)).unwrap().into_image(meta()).unwrap();
        assert_eq!(back.intensities, counts);
    }

    #[test]
    fn pgm_comments_and_8bit_accepted() {
        let mut b = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        b.extend_from_slice(&[3, 250]);
        let p = decode_pgm(&b).unwrap();
        assert_eq!((p.width, p.height, p.maxval), (2, 1, 255));
        assert_eq!(p.samples, vec![3, 250]);
    }

    #[test]
    fn malformed_pgm_rejected() {
        assert!(decode_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(decode_pgm(b"P5\n2 2\n65535\n\0\0").is_err());
        assert!(decode_pgm(b"P5\n1 1\n").is_err());
        let mut b = b"P5\n1 1\n100\n".to_vec();
        b.push(200);
        assert!(decode_pgm(&b).is_err());
        let p = decode_pgm(b"P5\n2 1\n255\n\0\0").unwrap();
        assert!(p.into_image(meta()).is_err());
    }

    #[test]
    fn key_file_skips_comments_and_reports_lines() {
        let mut k = BinaryKey::zero();
        k.set(0, true);
        k.set(255, true);
        let text = format!("# keys\n\n{}", format_keys(&[k, !k]));
        assert_eq!(parse_keys(&text).unwrap(), vec![k, !k]);
        let err = parse_keys("# x\nzz\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn csv_numbers_are_plain() {
        let t = csv_table(&["a", "b"], [vec![num(0.0), num(1.0 / 64.0)], vec![num(1540.0), "x,y".into()]]).unwrap();
        assert_eq!(String::from_utf8(t).unwrap(), "a,b\n0,0.015625\n1540,\"x,y\"\n");
    }

    #[test]
    fn writer_stages_then_commits() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = ArtifactWriter::new(dir.path()).unwrap();
        w.write("a/b.txt", b"hi").unwrap();
        assert!(dir.path().join("a/b.txt.partial").exists());
        assert!(!dir.path().join("a/b.txt").exists());
        assert!(w.write("a/b.txt", b"again").is_err());
        let recs = w.commit().unwrap();
        assert!(dir.path().join("a/b.txt").exists());
        assert!(!dir.path().join("a/b.txt.partial").exists());
        assert_eq!(recs[0].sha256, sha256_hex(b"hi"));
        assert_eq!(recs[0].bytes, 2);
    }

    proptest! {
        #[test]
        fn pgm_round_trip_is_lossless_on_counts(size in 1usize..12, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let counts: Vec<f64> = (0..size * size).map(|_| f64::from(r.random::<u16>())).collect();
            let img = SpeckleImage { size, intensities: counts.clone(), meta: meta() };
            let p = decode_pgm(&encode_pgm(&img, Quantization::Bits16)).unwrap();
            prop_assert_eq!(p.into_image(meta()).unwrap().intensities, counts);
        }

        #[test]
        fn key_file_round_trip(words in proptest::collection::vec(any::<[u64; 4]>(), 0..20)) {
            let keys: Vec<BinaryKey> = words.into_iter().map(BinaryKey::from_words).collect();
            prop_assert_eq!(parse_keys(&format_keys(&keys)).unwrap(), keys);
        }
    }
}
