use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A named, shaped slice of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub shape: Vec<usize>,
}

impl Segment {
    pub fn new(name: impl Into<String>, shape: Vec<usize>) -> Self {
        Segment {
            name: name.into(),
            shape,
        }
    }

    pub fn size(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Flat decision-variable vector with its segment layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub layout: Vec<Segment>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    count: usize,
    encoding: String,
    segments: Vec<Segment>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, layout: Vec<Segment>) -> Self {
        debug_assert_eq!(
            values.len(),
            layout.iter().map(Segment::size).sum::<usize>()
        );
        ParamVector { values, layout }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Values of the segment called `name`.
    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        let mut offset = 0;
        for s in &self.layout {
            if s.name == name {
                return Some(&self.values[offset..offset + s.size()]);
            }
            offset += s.size();
        }
        None
    }

    /// Writes `<stem>.json` (segment header) and `<stem>.bin` (little-endian
    /// f64 values).
    pub fn write_checkpoint(&self, stem: &Path) -> Result<()> {
        let header = CheckpointHeader {
            count: self.values.len(),
            encoding: "f64-le".into(),
            segments: self.layout.clone(),
        };
        fs::write(
            with_ext(stem, "json"),
            serde_json::to_string_pretty(&header)?,
        )?;
        let bytes: Vec<u8> = self.values.iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(with_ext(stem, "bin"), bytes)?;
        Ok(())
    }

    pub fn read_checkpoint(stem: &Path) -> Result<Self> {
        let header_path = with_ext(stem, "json");
        let header: CheckpointHeader = serde_json::from_str(
            &fs::read_to_string(&header_path)
                .map_err(|_| Error::MissingArtifact(header_path.display().to_string()))?,
        )?;
        let bin_path = with_ext(stem, "bin");
        let bytes = fs::read(&bin_path)
            .map_err(|_| Error::MissingArtifact(bin_path.display().to_string()))?;
        if bytes.len() != 8 * header.count {
            return Err(Error::Parse(format!(
                "checkpoint holds {} bytes, header promises {} values",
                bytes.len(),
                header.count
            )));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(ParamVector {
            values,
            layout: header.segments,
        })
    }
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut p = stem.as_os_str().to_owned();
    p.push(".");
    p.push(ext);
    PathBuf::from(p)
}
