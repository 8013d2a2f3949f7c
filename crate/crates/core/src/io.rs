//! Readers and writers for frames, flow fields, scalogram dumps and manifests.
//!
//! Binary formats:
//!
//! * PGM (`P5`), 8- or 16-bit big-endian samples, normalised to `[0, 1]`.
//! * `RIMG`: ASCII magic, `u32` width, `u32` height, row-major `f32` samples.
//! * Middlebury `.flo`: `f32` magic 202021.25, `i32` width, `i32` height,
//!   interleaved `(u, v)` `f32` pairs, row-major.
//! * `RSCL`: ASCII magic, `u32` scale count, `u32` time count, `f32` scales,
//!   `f32` cone of influence, `f32` power row-major by scale.
//!
//! Everything is little-endian except PGM payloads.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{CycleAnnotation, FlowField, Grid, Image, Scalogram};

pub const FLO_MAGIC: f32 = 202021.25;
pub const RIMG_MAGIC: &[u8; 4] = b"RIMG";
pub const RSCL_MAGIC: &[u8; 4] = b"RSCL";

/// Little-endian cursor over a byte buffer.
struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], what: &'static str) -> Self {
        Self {
            bytes,
            pos: 0,
            what,
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format(format!("truncated {} payload", self.what)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32_vec(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(
            n.checked_mul(4)
                .ok_or_else(|| Error::format("size overflow"))?,
        )?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::format(format!(
                "{} trailing bytes after {} payload",
                self.bytes.len() - self.pos,
                self.what
            )));
        }
        Ok(())
    }
}

fn push_f32s(out: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn checked_area(w: usize, h: usize) -> Result<usize> {
    w.checked_mul(h)
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::format(format!("invalid dimensions {w}x{h}")))
}

// ---------------------------------------------------------------- PGM

fn pgm_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::format("truncated PGM header"));
    }
    Ok(&bytes[start..*pos])
}

fn pgm_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let tok = pgm_token(bytes, pos)?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::format(format!("malformed PGM {what}")))
}

/// Decodes a binary PGM into a luminance image in `[0, 1]`.
pub fn read_pgm(bytes: &[u8]) -> Result<Image> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(Error::format("malformed PGM magic"));
    }
    if bytes[1] != b'5' {
        return Err(Error::format("unsupported PGM variant"));
    }
    let mut pos = 2;
    if bytes.get(pos).is_some_and(|b| !b.is_ascii_whitespace()) {
        return Err(Error::format("malformed PGM magic"));
    }
    let width = pgm_number(bytes, &mut pos, "width")?;
    let height = pgm_number(bytes, &mut pos, "height")?;
    let maxval = pgm_number(bytes, &mut pos, "maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format(format!("PGM maxval {maxval} out of range")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let n = checked_area(width, height)?;
    let bps = if maxval < 256 { 1 } else { 2 };
    let payload = bytes
        .get(pos..)
        .filter(|p| n.checked_mul(bps).is_some_and(|need| p.len() >= need))
        .ok_or_else(|| Error::format("truncated PGM payload"))?;
    let scale = 1.0 / maxval as f64;
    let data: Vec<f32> = if bps == 1 {
        payload[..n]
            .iter()
            .map(|&b| (b as f64 * scale) as f32)
            .collect()
    } else {
        payload[..2 * n]
            .chunks_exact(2)
            .map(|c| (u16::from_be_bytes([c[0], c[1]]) as f64 * scale) as f32)
            .collect()
    };
    if data.iter().any(|&v| v > 1.0) {
        return Err(Error::format("PGM sample exceeds maxval"));
    }
    Grid::new(width, height, data)
}

/// Encodes an image as binary PGM with the given `maxval` (255 or 65535 typical).
pub fn write_pgm(img: &Image, maxval: u16) -> Vec<u8> {
    let maxval = maxval.max(1);
    let mut out = format!("P5\n{} {}\n{}\n", img.width(), img.height(), maxval).into_bytes();
    let quant = |v: f32| (v.clamp(0.0, 1.0) as f64 * maxval as f64).round() as u16;
    for &v in img.as_slice() {
        let q = quant(v);
        if maxval < 256 {
            out.push(q as u8);
        } else {
            out.extend_from_slice(&q.to_be_bytes());
        }
    }
    out
}

// ---------------------------------------------------------------- RIMG

pub fn read_rimg(bytes: &[u8]) -> Result<Image> {
    let mut r = Reader::new(bytes, "RIMG");
    if r.take(4)? != RIMG_MAGIC {
        return Err(Error::format("bad RIMG magic"));
    }
    let w = r.u32()? as usize;
    let h = r.u32()? as usize;
    let data = r.f32_vec(checked_area(w, h)?)?;
    r.finish()?;
    Grid::new(w, h, data)
}

pub fn write_rimg(img: &Image) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * img.len());
    out.extend_from_slice(RIMG_MAGIC);
    out.extend_from_slice(&(img.width() as u32).to_le_bytes());
    out.extend_from_slice(&(img.height() as u32).to_le_bytes());
    push_f32s(&mut out, img.as_slice());
    out
}

// ---------------------------------------------------------------- .flo

/// Decodes a Middlebury `.flo` file.
pub fn read_flo(bytes: &[u8]) -> Result<FlowField> {
    let mut r = Reader::new(bytes, ".flo");
    let magic = r.f32()?;
    if magic != FLO_MAGIC {
        return Err(Error::format("bad .flo magic"));
    }
    let (w, h) = (r.i32()?, r.i32()?);
    if w <= 0 || h <= 0 {
        return Err(Error::format(format!("invalid .flo dimensions {w}x{h}")));
    }
    let n = checked_area(w as usize, h as usize)?;
    let expected = n.checked_mul(8).and_then(|b| b.checked_add(12));
    if expected != Some(bytes.len()) {
        return Err(Error::format(format!(
            ".flo size mismatch: header implies {} bytes, got {}",
            expected.map_or_else(|| "too many".to_string(), |e| e.to_string()),
            bytes.len()
        )));
    }
    let pairs = r.f32_vec(2 * n)?;
    let (u, v): (Vec<f32>, Vec<f32>) = pairs.chunks_exact(2).map(|p| (p[0], p[1])).unzip();
    FlowField::new(w as usize, h as usize, u, v)
}

pub fn write_flo(flow: &FlowField) -> Vec<u8> {
    let n = flow.width() * flow.height();
    let mut out = Vec::with_capacity(12 + 8 * n);
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(flow.width() as i32).to_le_bytes());
    out.extend_from_slice(&(flow.height() as i32).to_le_bytes());
    for (u, v) in flow.u().as_slice().iter().zip(flow.v().as_slice()) {
        out.extend_from_slice(&u.to_le_bytes());
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

// ---------------------------------------------------------------- RSCL

pub fn write_scalogram(s: &Scalogram) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * (s.n_scales() + s.n_times() + s.power().len()));
    out.extend_from_slice(RSCL_MAGIC);
    out.extend_from_slice(&(s.n_scales() as u32).to_le_bytes());
    out.extend_from_slice(&(s.n_times() as u32).to_le_bytes());
    push_f32s(&mut out, s.scales());
    push_f32s(&mut out, s.coi());
    push_f32s(&mut out, s.power());
    out
}

pub fn read_scalogram(bytes: &[u8]) -> Result<Scalogram> {
    let mut r = Reader::new(bytes, "RSCL");
    if r.take(4)? != RSCL_MAGIC {
        return Err(Error::format("bad RSCL magic"));
    }
    let n_scales = r.u32()? as usize;
    let n_times = r.u32()? as usize;
    let cells = checked_area(n_scales, n_times)?;
    let scales = r.f32_vec(n_scales)?;
    let coi = r.f32_vec(n_times)?;
    let power = r.f32_vec(cells)?;
    r.finish()?;
    Scalogram::new(scales, coi, power)
}

/// Scalogram as CSV: header `scale,t0,t1,…`, one row per scale.
pub fn scalogram_csv(s: &Scalogram) -> String {
    let mut out = String::from("scale");
    for t in 0..s.n_times() {
        out.push_str(&format!(",t{t}"));
    }
    out.push('\n');
    for (j, scale) in s.scales().iter().enumerate() {
        out.push_str(&scale.to_string());
        for p in s.row(j) {
            out.push(',');
            out.push_str(&p.to_string());
        }
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------- signals

/// One sample per line; blank lines and `#` comments are skipped.
pub fn read_signal(text: &str) -> Result<Vec<f64>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .enumerate()
        .map(|(i, l)| {
            let v: f64 = l.parse().map_err(|_| {
                Error::format(format!("signal line {}: not a number: {l:?}", i + 1))
            })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonFinite("signal"))
            }
        })
        .collect()
}

pub fn write_signal(samples: &[f64], fps: f64) -> String {
    let mut out = format!("# fps={fps}\n");
    for s in samples {
        out.push_str(&s.to_string());
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------- manifests

/// Where a clip's data lives, relative to the manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VideoSource {
    Frames(PathBuf),
    Flow(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub source: VideoSource,
    pub fps: f64,
    pub annotation: CycleAnnotation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub videos: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawManifest {
    videos: Vec<RawEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    frames_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    flow_dir: Option<PathBuf>,
    fps: f64,
    count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cycle_bounds: Option<Vec<usize>>,
}

pub fn read_manifest(text: &str) -> Result<Manifest> {
    let raw: RawManifest =
        serde_json::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
    let videos = raw
        .videos
        .into_iter()
        .map(|e| {
            let source = match (e.frames_dir, e.flow_dir) {
                (Some(f), None) => VideoSource::Frames(f),
                (None, Some(f)) => VideoSource::Flow(f),
                (Some(_), Some(_)) => {
                    return Err(Error::Manifest(format!(
                        "{}: exactly one of frames_dir/flow_dir allowed, got both",
                        e.id
                    )))
                }
                (None, None) => {
                    return Err(Error::Manifest(format!(
                        "{}: missing frames_dir or flow_dir",
                        e.id
                    )))
                }
            };
            let annotation = CycleAnnotation::new(e.id.clone(), e.fps, e.count, e.cycle_bounds)?;
            Ok(ManifestEntry {
                id: e.id,
                source,
                fps: e.fps,
                annotation,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Manifest { videos })
}

pub fn write_manifest(m: &Manifest) -> String {
    let raw = RawManifest {
        videos: m
            .videos
            .iter()
            .map(|e| {
                let (frames_dir, flow_dir) = match &e.source {
                    VideoSource::Frames(p) => (Some(p.clone()), None),
                    VideoSource::Flow(p) => (None, Some(p.clone())),
                };
                RawEntry {
                    id: e.id.clone(),
                    frames_dir,
                    flow_dir,
                    fps: e.fps,
                    count: e.annotation.count,
                    cycle_bounds: e.annotation.cycle_bounds.clone(),
                }
            })
            .collect(),
    };
    serde_json::to_string_pretty(&raw).expect("manifest serialises")
}

// ---------------------------------------------------------------- directories

/// Files in `dir` with one of `extensions`, in lexicographic filename order.
pub fn list_files(dir: &Path, extensions: &[&str]) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| extensions.iter().any(|x| x.eq_ignore_ascii_case(e)))
        })
        .collect();
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

pub fn read_image_file(path: &Path) -> Result<Image> {
    let bytes = fs::read(path)?;
    let is_rimg = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("rimg"));
    if is_rimg {
        read_rimg(&bytes)
    } else {
        read_pgm(&bytes)
    }
    .map_err(|e| Error::format(format!("{}: {e}", path.display())))
}

/// All `.pgm`/`.rimg` frames of a directory.
pub fn read_frames_dir(dir: &Path) -> Result<Vec<Image>> {
    let files = list_files(dir, &["pgm", "rimg"])?;
    if files.is_empty() {
        return Err(Error::format(format!("no frames in {}", dir.display())));
    }
    files.iter().map(|p| read_image_file(p)).collect()
}

/// All `.flo` fields of a directory.
pub fn read_flow_dir(dir: &Path) -> Result<Vec<FlowField>> {
    let files = list_files(dir, &["flo"])?;
    if files.is_empty() {
        return Err(Error::format(format!("no .flo files in {}", dir.display())));
    }
    files
        .iter()
        .map(|p| {
            read_flo(&fs::read(p)?).map_err(|e| Error::format(format!("{}: {e}", p.display())))
        })
        .collect()
}

pub fn write_frames_dir(dir: &Path, frames: &[Image]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, f) in frames.iter().enumerate() {
        fs::write(dir.join(format!("frame_{i:05}.pgm")), write_pgm(f, 255))?;
    }
    Ok(())
}

pub fn write_flow_dir(dir: &Path, flows: &[FlowField]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, f) in flows.iter().enumerate() {
        fs::write(dir.join(format!("flow_{i:05}.flo")), write_flo(f))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn flo_bytes(w: i32, h: i32, magic: f32, payload: &[f32]) -> Vec<u8> {
        let mut b = magic.to_le_bytes().to_vec();
        b.extend_from_slice(&w.to_le_bytes());
        b.extend_from_slice(&h.to_le_bytes());
        push_f32s(&mut b, payload);
        b
    }

    #[test]
    fn pgm_8bit() {
        let mut b = b"P5\n2 2\n255\n".to_vec();
        b.extend_from_slice(&[0, 255, 128, 64]);
        let img = read_pgm(&b).unwrap();
        let want = [0.0, 1.0, 0.50196, 0.25098];
        for (g, w) in img.as_slice().iter().zip(want) {
            assert!((g - w).abs() < 1e-5);
        }
    }

    #[test]
    fn pgm_16bit_and_comments() {
        let mut b = b"P5 # comment\n1 1\n65535\n".to_vec();
        b.extend_from_slice(&[0xFF, 0xFF]);
        assert_eq!(read_pgm(&b).unwrap().as_slice(), &[1.0]);
        let mut b = b"P5\n1 1\n65535\n".to_vec();
        b.extend_from_slice(&[0x80, 0x00]);
        assert!((read_pgm(&b).unwrap().as_slice()[0] - 32768.0 / 65535.0).abs() < 1e-7);
    }

    #[test]
    fn pgm_errors() {
        let e = read_pgm(b"P2\n1 1\n255\n0").unwrap_err().to_string();
        assert!(e.contains("unsupported PGM variant"), "{e}");
        assert!(read_pgm(b"XX\n1 1\n255\n\0").is_err());
        assert!(read_pgm(b"P5\n2 2\n255\n\0\0").is_err());
        assert!(read_pgm(b"P5\n1 1\n0\n\0").is_err());
    }

    #[test]
    fn pgm_write_read() {
        let img = Grid::new(3, 1, vec![0.0f32, 0.5, 1.0]).unwrap();
        let back = read_pgm(&write_pgm(&img, 65535)).unwrap();
        for (a, b) in img.as_slice().iter().zip(back.as_slice()) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn flo_decode() {
        let f = read_flo(&flo_bytes(1, 1, FLO_MAGIC, &[2.0, -3.0])).unwrap();
        assert_eq!(f.u().as_slice(), &[2.0]);
        assert_eq!(f.v().as_slice(), &[-3.0]);
        let f = read_flo(&flo_bytes(2, 1, FLO_MAGIC, &[1.0, 0.0, 0.0, 1.0])).unwrap();
        assert_eq!(f.u().as_slice(), &[1.0, 0.0]);
        assert_eq!(f.v().as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn flo_errors() {
        let e = read_flo(&flo_bytes(1, 1, 0.0, &[0.0, 0.0])).unwrap_err();
        assert!(e.to_string().contains("bad .flo magic"));
        assert!(read_flo(&flo_bytes(2, 2, FLO_MAGIC, &[0.0; 6])).is_err());
        assert!(read_flo(&flo_bytes(1, 1, FLO_MAGIC, &[0.0; 3])).is_err());
    }

    #[test]
    fn scalogram_tiny_and_truncated() {
        let s = Scalogram::new(vec![2.0], vec![0.7], vec![0.5]).unwrap();
        let bytes = write_scalogram(&s);
        assert_eq!(read_scalogram(&bytes).unwrap(), s);
        assert!(read_scalogram(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(read_scalogram(&bad).is_err());
    }

    #[test]
    fn rimg_round_trip() {
        let img = Grid::new(2, 2, vec![0.1f32, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(read_rimg(&write_rimg(&img)).unwrap(), img);
    }

    #[test]
    fn manifest_parsing() {
        let m = read_manifest(r#"{"videos":[{"id":"a","frames_dir":"a/","fps":30,"count":10}]}"#)
            .unwrap();
        assert_eq!(m.videos.len(), 1);
        assert_eq!(m.videos[0].source, VideoSource::Frames("a/".into()));
        assert_eq!(m.videos[0].annotation.count, 10);

        let e = read_manifest(
            r#"{"videos":[{"id":"a","frames_dir":"a","fps":30,"count":1,"cycle_bounds":[5,3]}]}"#,
        )
        .unwrap_err();
        assert!(e.to_string().contains("bounds not increasing"));

        assert!(read_manifest(
            r#"{"videos":[{"id":"a","frames_dir":"a","flow_dir":"b","fps":30,"count":1}]}"#
        )
        .is_err());
        assert!(read_manifest(r#"{"videos":[{"id":"a","frames_dir":"a","fps":30}]}"#).is_err());
        assert!(
            read_manifest(r#"{"videos":[{"id":"a","frames_dir":"a","fps":0,"count":1}]}"#).is_err()
        );
        assert_eq!(read_manifest(&write_manifest(&m)).unwrap(), m);
    }

    #[test]
    fn signal_text() {
        let s = read_signal("# fps=30\n1.5\n\n-2\n").unwrap();
        assert_eq!(s, vec![1.5, -2.0]);
        assert!(read_signal("abc").is_err());
        assert_eq!(
            read_signal(&write_signal(&[0.1, 0.25], 30.0)).unwrap(),
            vec![0.1, 0.25]
        );
    }

    #[test]
    fn lexicographic_enumeration() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["b.flo", "a10.flo", "a2.flo", "skip.txt"] {
            fs::write(dir.path().join(name), b"").unwrap();
        }
        let names: Vec<String> = list_files(dir.path(), &["flo"])
            .unwrap()
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names, ["a10.flo", "a2.flo", "b.flo"]);
    }

    fn finite_f32() -> impl Strategy<Value = f32> {
        prop::num::f32::NORMAL | prop::num::f32::ZERO | prop::num::f32::SUBNORMAL
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn flo_round_trip_bit_exact(w in 1usize..12, h in 1usize..12,
                                    seed in prop::collection::vec(finite_f32(), 288)) {
            let n = w * h;
            let u = seed[..n].to_vec();
            let v = seed[n..2 * n].to_vec();
            let f = FlowField::new(w, h, u, v).unwrap();
            let back = read_flo(&write_flo(&f)).unwrap();
            prop_assert_eq!(back.u().as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                            f.u().as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>());
            prop_assert_eq!(back.v().as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                            f.v().as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        }
    }
}
