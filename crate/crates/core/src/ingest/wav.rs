use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::Recording;

const FULL_SCALE: f64 = 32768.0;

/// Reads a 16-bit PCM mono WAV file; amplitudes are `sample / 32768`.
///
/// The subject id is taken from the file stem; callers with a manifest
/// overwrite it along with location and outcome.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Recording> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| map_hound(e, path))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::UnsupportedFormat(format!(
            "{}: {} channels, only mono is supported",
            path.display(),
            spec.channels
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedFormat(format!(
            "{}: {}-bit {:?}, only 16-bit PCM is supported",
            path.display(),
            spec.bits_per_sample,
            spec.sample_format
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / FULL_SCALE))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| map_hound(e, path))?;
    if samples.is_empty() {
        return Err(Error::Format(format!("{}: no samples", path.display())));
    }
    let subject = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Recording::new(subject, spec.sample_rate, samples)
}

/// Writes amplitudes as 16-bit PCM mono, rounding to the nearest step and
/// clipping to the representable range.
pub fn write_wav(path: impl AsRef<Path>, samples: &[f64], sample_rate_hz: u32) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(|e| map_hound(e, path))?;
    for &x in samples {
        if !x.is_finite() {
            return Err(Error::invalid("cannot quantize a non-finite sample"));
        }
        let q = (x * FULL_SCALE).round().clamp(-32768.0, 32767.0) as i16;
        w.write_sample(q).map_err(|e| map_hound(e, path))?;
    }
    w.finalize().map_err(|e| map_hound(e, path))?;
    Ok(())
}

fn map_hound(e: hound::Error, path: &Path) -> Error {
    match e {
        // short or corrupt files surface from hound as read errors
        hound::Error::IoError(io)
            if matches!(
                io.kind(),
                std::io::ErrorKind::NotFound | std::io::ErrorKind::PermissionDenied
            ) =>
        {
            Error::Io(io)
        }
        hound::Error::Unsupported => {
            Error::UnsupportedFormat(format!("{}: unsupported WAV encoding", path.display()))
        }
        other => Error::Format(format!("{}: {other}", path.display())),
    }
}
