use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::Result;

/// Append-only JSON-lines writer; a disabled log swallows records.
pub struct JsonLines {
    out: Option<BufWriter<File>>,
}

impl JsonLines {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        Ok(Self { out: Some(BufWriter::new(File::create(path)?)) })
    }

    pub fn disabled() -> Self {
        Self { out: None }
    }

    pub fn write(&mut self, record: &impl Serialize) -> Result<()> {
        if let Some(out) = &mut self.out {
            serde_json::to_writer(&mut *out, record)?;
            out.write_all(b"\n")?;
            out.flush()?;
        }
        Ok(())
    }
}

/// Reads every record of a JSON-lines file.
pub fn read_json_lines(path: impl AsRef<Path>) -> Result<Vec<serde_json::Value>> {
    let text = std::fs::read_to_string(path)?;
    text.lines().filter(|l| !l.trim().is_empty()).map(|l| Ok(serde_json::from_str(l)?)).collect()
}
