//! Waveform CSV interchange: a `# fs=<rate>` comment line, a `t,value`
//! header, then one row per sample. Times are derived from the index and
//! rate on write and ignored on read.

use super::Waveform;
use crate::{CoreError, Result};
use std::io::Write;
use std::path::Path;

pub fn write_waveform_csv(w: &Waveform, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("# fs={}\n", w.fs()));
    out.push_str("t,value\n");
    for (i, &v) in w.samples().iter().enumerate() {
        out.push_str(&format!("{},{}\n", i as f64 / w.fs(), v));
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

pub fn read_waveform_csv(path: &Path) -> Result<Waveform> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CoreError::format(format!("{}: empty file", path.display())))?;
    let fs: f64 = header
        .strip_prefix("# fs=")
        .ok_or_else(|| {
            CoreError::format(format!(
                "{}: first line must be '# fs=<rate>', got {header:?}",
                path.display()
            ))
        })?
        .trim()
        .parse()
        .map_err(|_| CoreError::format(format!("{}: unparsable fs in {header:?}", path.display())))?;
    match lines.next() {
        Some("t,value") => {}
        other => {
            return Err(CoreError::format(format!(
                "{}: expected 't,value' header, got {other:?}",
                path.display()
            )))
        }
    }
    let mut samples = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let value = line
            .split_once(',')
            .ok_or_else(|| {
                CoreError::format(format!("{}: line {}: missing comma", path.display(), lineno + 3))
            })?
            .1;
        samples.push(value.trim().parse::<f64>().map_err(|_| {
            CoreError::format(format!(
                "{}: line {}: unparsable value {value:?}",
                path.display(),
                lineno + 3
            ))
        })?);
    }
    Waveform::new(samples, fs)
}
