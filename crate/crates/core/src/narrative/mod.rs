//! Clinical report rendering and the hashed text featurizer.

mod hashing;
mod template;

pub use hashing::{embed_batch, embed_text, hash_token, ngrams, tokenize, TextConfig, TextFeature};
pub use template::{
    render_report, render_segments, render_text, render_value, segments, ClinicalReport, Segment,
    CANNABIS_AGE_FALLBACK, MISSING_FALLBACK, REPORT_TEMPLATE,
};

use std::io::Write;
use std::path::Path;

use crate::cohort::Subject;
use crate::error::{Error, Result};

pub fn render_reports(subjects: &[Subject]) -> Vec<ClinicalReport> {
    subjects.iter().map(render_report).collect()
}

/// One `{"id": .., "text": ..}` object per line.
pub fn write_reports_jsonl<W: Write>(reports: &[ClinicalReport], mut w: W) -> Result<()> {
    for r in reports {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io("<jsonl writer>", e))?;
    }
    Ok(())
}

pub fn read_reports_jsonl(text: &str) -> Result<Vec<ClinicalReport>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// Writes `<dir>/<id>.txt` for every report.
pub fn write_reports_txt(reports: &[ClinicalReport], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for r in reports {
        let path = dir.join(format!("{}.txt", r.id));
        std::fs::write(&path, &r.text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
