//! WAV, mask and image files. Every writer goes through a temporary file in
//! the destination directory followed by a rename.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use foa_enhance::Mask;
use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{at, CliError, Result};

/// Magic bytes of the mask matrix format.
pub const MASK_MAGIC: &[u8; 4] = b"FMSK";
pub const MASK_VERSION: u32 = 1;

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".part");
    path.with_file_name(name)
}

/// Creates `path` through `write(tmp)` and a rename.
pub fn atomic<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&Path) -> Result<()>,
{
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(CliError::from).map_err(at(dir))?;
    }
    let tmp = temp_path(path);
    let result = write(&tmp).and_then(|_| fs::rename(&tmp, path).map_err(CliError::from));
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(at(path))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    atomic(path, |tmp| {
        let mut f = fs::File::create(tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        Ok(())
    })
}

/// Writes 32-bit float WAV, one channel per slice.
pub fn write_wav<C: AsRef<[f64]>>(path: &Path, channels: &[C], sample_rate: u32) -> Result<()> {
    let len = channels.first().map_or(0, |c| c.as_ref().len());
    if channels.iter().any(|c| c.as_ref().len() != len) {
        return Err(CliError::Data("channels differ in length".into()));
    }
    let spec = WavSpec {
        channels: channels.len() as u16,
        sample_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    atomic(path, |tmp| {
        let mut w = WavWriter::create(tmp, spec)?;
        for i in 0..len {
            for c in channels {
                w.write_sample(c.as_ref()[i] as f32)?;
            }
        }
        w.finalize()?;
        Ok(())
    })
}

/// Deinterleaved samples and the sample rate. Integer formats are scaled to
/// `[-1, 1)`.
pub fn read_wav(path: &Path) -> Result<(Vec<Vec<f64>>, u32)> {
    let run = || -> Result<(Vec<Vec<f64>>, u32)> {
        let mut r = WavReader::open(path)?;
        let spec = r.spec();
        let n = spec.channels as usize;
        let samples: Vec<f64> = match spec.sample_format {
            SampleFormat::Float => r.samples::<f32>().map(|s| s.map(f64::from)).collect::<std::result::Result<_, _>>()?,
            SampleFormat::Int => {
                let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;
                r.samples::<i32>()
                    .map(|s| s.map(|v| f64::from(v) * scale))
                    .collect::<std::result::Result<_, _>>()?
            }
        };
        let mut out = vec![Vec::with_capacity(samples.len() / n.max(1)); n];
        for (i, v) in samples.into_iter().enumerate() {
            out[i % n].push(v);
        }
        Ok((out, spec.sample_rate))
    };
    run().map_err(at(path))
}

fn check_rate(path: &Path, got: u32, want: u32) -> Result<()> {
    if got != want {
        return Err(CliError::Data(format!("{}: sample rate {got} Hz, expected {want} Hz", path.display())));
    }
    Ok(())
}

pub fn read_mono(path: &Path, sample_rate: u32) -> Result<Vec<f64>> {
    let (mut ch, sr) = read_wav(path)?;
    check_rate(path, sr, sample_rate)?;
    if ch.len() != 1 {
        return Err(CliError::Data(format!("{}: {} channels, expected mono", path.display(), ch.len())));
    }
    Ok(ch.swap_remove(0))
}

/// A 4-channel W, X, Y, Z recording.
pub fn read_foa(path: &Path, sample_rate: u32) -> Result<[Vec<f64>; 4]> {
    let (ch, sr) = read_wav(path)?;
    check_rate(path, sr, sample_rate)?;
    ch.try_into()
        .map_err(|c: Vec<Vec<f64>>| CliError::Data(format!("{}: {} channels, expected 4 (W, X, Y, Z)", path.display(), c.len())))
}

pub fn encode_mask(mask: &Mask) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * mask.values().len());
    out.extend_from_slice(MASK_MAGIC);
    out.extend_from_slice(&MASK_VERSION.to_le_bytes());
    out.extend_from_slice(&(mask.frames() as u32).to_le_bytes());
    out.extend_from_slice(&(mask.bins() as u32).to_le_bytes());
    for v in mask.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_mask(bytes: &[u8]) -> Result<Mask> {
    let bad = |m: &str| CliError::Data(format!("mask file: {m}"));
    if bytes.len() < 16 || &bytes[..4] != MASK_MAGIC {
        return Err(bad("bad magic"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    if word(4) != MASK_VERSION {
        return Err(bad(&format!("unsupported version {}", word(4))));
    }
    let (frames, bins) = (word(8) as usize, word(12) as usize);
    let body = &bytes[16..];
    if body.len() != 4 * frames * bins {
        return Err(bad(&format!("{} payload bytes for {frames}x{bins}", body.len())));
    }
    let values = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    Ok(Mask::new(frames, bins, values)?)
}

pub fn write_mask(path: &Path, mask: &Mask) -> Result<()> {
    write_bytes(path, &encode_mask(mask))
}

pub fn read_mask(path: &Path) -> Result<Mask> {
    decode_mask(&fs::read(path).map_err(CliError::from).map_err(at(path))?).map_err(at(path))
}

/// Binary PGM, one pixel per bin: time to the right, frequency upward,
/// 0 black and 1 white.
pub fn mask_pgm(mask: &Mask) -> Vec<u8> {
    let (t, f) = (mask.frames(), mask.bins());
    let mut out = format!("P5\n{t} {f}\n255\n").into_bytes();
    for row in (0..f).rev() {
        for col in 0..t {
            out.push((mask.get(col, row).clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    out
}
