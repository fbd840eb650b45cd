//! Versioned binary artifact files: 8-byte magic, little-endian u32 version,
//! then a bincode payload.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub(crate) struct Format {
    pub kind: &'static str,
    pub magic: [u8; 8],
    pub version: u32,
}

impl Format {
    pub fn write_to<W: Write, T: Serialize>(&self, mut w: W, value: &T) -> Result<()> {
        w.write_all(&self.magic)?;
        w.write_all(&self.version.to_le_bytes())?;
        bincode::serialize_into(&mut w, value)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read, T: DeserializeOwned>(&self, mut r: R) -> Result<T> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| Error::BadMagic { kind: self.kind })?;
        if magic != self.magic {
            return Err(Error::BadMagic { kind: self.kind });
        }
        let mut version = [0u8; 4];
        r.read_exact(&mut version)?;
        let found = u32::from_le_bytes(version);
        if found != self.version {
            return Err(Error::VersionMismatch {
                kind: self.kind,
                found,
                expected: self.version,
            });
        }
        Ok(bincode::deserialize_from(r)?)
    }

    pub fn to_bytes<T: Serialize>(&self, value: &T) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_to(&mut buf, value)?;
        Ok(buf)
    }

    pub fn save<T: Serialize>(&self, path: &Path, value: &T) -> Result<()> {
        let file = File::create(path).map_err(|source| Error::IoPath {
            path: path.to_path_buf(),
            source,
        })?;
        self.write_to(BufWriter::new(file), value)
    }

    pub fn load<T: DeserializeOwned>(&self, path: &Path) -> Result<T> {
        let file = File::open(path).map_err(|source| Error::IoPath {
            path: path.to_path_buf(),
            source,
        })?;
        self.read_from(BufReader::new(file))
    }
}
