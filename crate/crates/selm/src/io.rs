//! File access with path-carrying errors, atomic writes and key files.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand_core::{OsRng, RngCore};
use selm_core::cipher::{SecretKey, KEY_LEN};

use crate::error::{CliError, Result};
use crate::formats::{self, Checkpoint};

pub fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    write_atomic_mode(path, bytes, None)
}

fn write_atomic_mode(path: &Path, bytes: &[u8], mode: Option<u32>) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| CliError::Usage(format!("{}: not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let result = (|| -> std::io::Result<()> {
        let mut opts = fs::OpenOptions::new();
        opts.write(true).create_new(true);
        #[cfg(unix)]
        if let Some(m) = mode {
            use std::os::unix::fs::OpenOptionsExt;
            opts.mode(m);
        }
        #[cfg(not(unix))]
        let _ = mode;
        let mut f = opts.open(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(|e| CliError::io(path, e))
}

/// Writes a raw 32-byte key readable only by its owner.
pub fn write_key(path: &Path, key: &SecretKey) -> Result<()> {
    write_atomic_mode(path, key.as_bytes(), Some(0o600))
}

pub fn read_key(path: &Path) -> Result<SecretKey> {
    let bytes = read(path)?;
    SecretKey::from_slice(&bytes).map_err(|_| {
        CliError::format(path, formats::FormatError::Invalid(format!("key file must hold {KEY_LEN} bytes, found {}", bytes.len())))
    })
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    formats::read_checkpoint(&read(path)?).map_err(|e| CliError::format(path, e))
}

/// A key from the operating system's entropy source.
pub fn os_key() -> Result<SecretKey> {
    let mut bytes = [0u8; KEY_LEN];
    OsRng.try_fill_bytes(&mut bytes).map_err(|e| CliError::Entropy(e.to_string()))?;
    Ok(SecretKey::from_bytes(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.bin");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
        assert!(matches!(read(&dir.path().join("missing")), Err(CliError::Io { .. })));
    }

    #[test]
    fn key_files_roundtrip_with_owner_only_mode() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("k");
        let key = os_key().unwrap();
        write_key(&p, &key).unwrap();
        assert_eq!(read_key(&p).unwrap(), key);
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            assert_eq!(fs::metadata(&p).unwrap().permissions().mode() & 0o777, 0o600);
        }
        fs::write(&p, [1u8; 5]).unwrap();
        assert!(matches!(read_key(&p), Err(CliError::Format { .. })));
    }
}
