//! Signal and label files: CSV (one value per line) and binary PGM (P5).

use std::io::Write;
use std::path::{Path, PathBuf};

use classgain::model::{ClassificationScheme, SampleSet, Shape};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Pgm,
}

impl Format {
    pub fn of_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("pgm") => Format::Pgm,
            _ => Format::Csv,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Pgm => "pgm",
        }
    }
}

/// Maps 8-bit pixel values back to signal units: `value = offset + scale * byte`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PgmScale {
    pub offset: f64,
    pub scale: f64,
}

impl PgmScale {
    pub const IDENTITY: PgmScale = PgmScale {
        offset: 0.0,
        scale: 1.0,
    };

    fn fit(values: &[f64]) -> PgmScale {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let scale = if hi > lo { (hi - lo) / 255.0 } else { 1.0 };
        PgmScale { offset: lo, scale }
    }
}

/// `<dir>/<stem>.scale.json` next to a PGM.
pub fn scale_path(pgm: &Path) -> PathBuf {
    let stem = pgm.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
    pgm.with_file_name(format!("{stem}.scale.json"))
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

fn parse_lines<V>(
    path: &Path,
    text: &str,
    what: &str,
    parse: impl Fn(&str) -> Option<V>,
) -> Result<Vec<V>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        // First field only, so "value,label" rows also work.
        let field = line.split(',').next().unwrap_or("").trim();
        match parse(field) {
            Some(v) => out.push(v),
            None => {
                return Err(CliError::Data(format!(
                    "{}:{}: expected {what}, found {field:?}",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    if out.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no {what}s found",
            path.display()
        )));
    }
    Ok(out)
}

/// Reads a signal; PGM input applies the sidecar scale when present.
pub fn read_signal(path: &Path) -> Result<SampleSet<f64>> {
    let bytes = read_bytes(path)?;
    if bytes.starts_with(b"P5") {
        let (width, height, pixels) = decode_pgm(path, &bytes)?;
        let scale = read_scale(path)?;
        let values = pixels
            .iter()
            .map(|&b| scale.offset + scale.scale * f64::from(b))
            .collect();
        return Ok(SampleSet::grid(values, height, width)?);
    }
    let text = String::from_utf8(bytes)
        .map_err(|_| CliError::Data(format!("{}: not UTF-8 text or a P5 image", path.display())))?;
    let values = parse_lines(path, &text, "a number", |f| {
        f.parse::<f64>().ok().filter(|v| v.is_finite())
    })?;
    Ok(SampleSet::new(values)?)
}

fn read_scale(pgm: &Path) -> Result<PgmScale> {
    let sidecar = scale_path(pgm);
    if !sidecar.exists() {
        return Ok(PgmScale::IDENTITY);
    }
    let text = std::fs::read_to_string(&sidecar).map_err(|e| CliError::io(&sidecar, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", sidecar.display())))
}

/// Reads 1-based labels from CSV, or a label PGM whose grey levels are spread
/// evenly over `classes`.
pub fn read_labels(path: &Path, classes: usize) -> Result<ClassificationScheme> {
    let bytes = read_bytes(path)?;
    if bytes.starts_with(b"P5") {
        let (_, _, pixels) = decode_pgm(path, &bytes)?;
        let step = 255.0 / (classes.max(2) - 1) as f64;
        let labels = pixels
            .iter()
            .map(|&b| (f64::from(b) / step).round() as usize)
            .collect();
        return ClassificationScheme::new(labels, classes)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())));
    }
    let text = String::from_utf8(bytes)
        .map_err(|_| CliError::Data(format!("{}: not UTF-8 text", path.display())))?;
    let labels = parse_lines(path, &text, "a 1-based label", |f| f.parse::<usize>().ok())?;
    ClassificationScheme::from_one_based(&labels, classes)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn decode_pgm<'a>(path: &Path, bytes: &'a [u8]) -> Result<(usize, usize, &'a [u8])> {
    let bad = |msg: &str| CliError::Data(format!("{}: {msg}", path.display()));
    let mut pos = 2;
    let mut header = [0usize; 3];
    for field in header.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("malformed PGM header"))?;
    }
    let [width, height, maxval] = header;
    if maxval == 0 || maxval > 255 {
        return Err(bad("only 8-bit PGM images are supported"));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(bad("malformed PGM header"));
    }
    let pixels = &bytes[pos + 1..];
    if pixels.len() < width * height {
        return Err(bad("truncated PGM pixel data"));
    }
    Ok((width, height, &pixels[..width * height]))
}

fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

fn grid_dims(shape: Shape) -> (usize, usize) {
    match shape {
        Shape::Grid { height, width } => (width, height),
        Shape::Linear(n) => (n, 1),
    }
}

/// Writes a signal; PGM output is quantized to 8 bits and gets a scale sidecar.
/// Returns every path written.
pub fn write_signal(path: &Path, x: &SampleSet<f64>, format: Format) -> Result<Vec<PathBuf>> {
    match format {
        Format::Csv => {
            let mut text = String::with_capacity(x.len() * 12);
            for v in x.values() {
                text.push_str(&format!("{v}\n"));
            }
            write_atomic(path, text.as_bytes())?;
            Ok(vec![path.to_path_buf()])
        }
        Format::Pgm => {
            let scale = PgmScale::fit(x.values());
            let pixels: Vec<u8> = x
                .values()
                .iter()
                .map(|v| ((v - scale.offset) / scale.scale).round().clamp(0.0, 255.0) as u8)
                .collect();
            let (w, h) = grid_dims(x.shape());
            write_atomic(path, &encode_pgm(w, h, &pixels))?;
            let sidecar = scale_path(path);
            let json = serde_json::to_string_pretty(&scale).expect("scale serializes");
            write_atomic(&sidecar, json.as_bytes())?;
            Ok(vec![path.to_path_buf(), sidecar])
        }
    }
}

/// Writes 1-based labels (CSV) or a label image with classes spread over 0..=255.
pub fn write_labels(
    path: &Path,
    z: &ClassificationScheme,
    shape: Shape,
    format: Format,
) -> Result<()> {
    match format {
        Format::Csv => {
            let text: String = z.one_based().map(|l| format!("{l}\n")).collect();
            write_atomic(path, text.as_bytes())
        }
        Format::Pgm => {
            let step = 255.0 / (z.classes().max(2) - 1) as f64;
            let pixels: Vec<u8> = z
                .labels()
                .iter()
                .map(|&l| (l as f64 * step).round() as u8)
                .collect();
            let (w, h) = grid_dims(shape);
            write_atomic(path, &encode_pgm(w, h, &pixels))
        }
    }
}
