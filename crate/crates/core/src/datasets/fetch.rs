//! Download or copy dataset files with checksum verification.
//!
//! A source is an `http(s)://` URL, a `file://` URL or a plain path, so the
//! same code serves online mirrors and offline copies.

use std::fs::{self, File};
use std::io;
use std::path::{Path, PathBuf};

use md5::{Digest as _, Md5};
use sha2::Sha256;

use super::{read_maybe_gzip, DatasetSource, Split};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FetchOutcome {
    pub path: PathBuf,
    /// MD5 of the decompressed content.
    pub md5: String,
    /// False when a verified copy was already present.
    pub transferred: bool,
}

pub fn md5_hex(bytes: &[u8]) -> String {
    hex(&Md5::digest(bytes))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of a file's bytes as stored.
pub fn file_sha256(path: &Path) -> Result<String> {
    let mut h = Sha256::new();
    io::copy(&mut File::open(path)?, &mut h)?;
    Ok(hex(&h.finalize()))
}

fn content_md5(path: &Path) -> Result<String> {
    Ok(md5_hex(&read_maybe_gzip(path)?))
}

fn copy_from(source: &str, tmp: &Path) -> Result<()> {
    if source.starts_with("http://") || source.starts_with("https://") {
        let resp = ureq::get(source)
            .call()
            .map_err(|e| Error::Fetch(format!("{source}: {e}")))?;
        let mut reader = resp.into_body().into_reader();
        let mut out = File::create(tmp)?;
        io::copy(&mut reader, &mut out).map_err(|e| Error::Fetch(format!("{source}: {e}")))?;
        Ok(())
    } else {
        let local = source.strip_prefix("file://").unwrap_or(source);
        fs::copy(local, tmp).map_err(|e| Error::Fetch(format!("{local}: {e}")))?;
        Ok(())
    }
}

/// Places `source` at `dest`, verifying the decompressed MD5 when given.
///
/// An existing `dest` that already verifies is left untouched.
pub fn fetch(source: &str, dest: &Path, expected_md5: Option<&str>) -> Result<FetchOutcome> {
    if dest.exists() {
        let md5 = content_md5(dest)?;
        if expected_md5.is_none_or(|e| e == md5) {
            return Ok(FetchOutcome {
                path: dest.to_path_buf(),
                md5,
                transferred: false,
            });
        }
    }
    if let Some(parent) = dest.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = dest.with_extension("part");
    let result = copy_from(source, &tmp).and_then(|()| {
        let md5 = content_md5(&tmp)?;
        match expected_md5 {
            Some(e) if e != md5 => Err(Error::Fetch(format!("{source}: checksum {md5} does not match expected {e}"))),
            _ => Ok(md5),
        }
    });
    match result {
        Ok(md5) => {
            fs::rename(&tmp, dest)?;
            Ok(FetchOutcome {
                path: dest.to_path_buf(),
                md5,
                transferred: true,
            })
        }
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}

/// Fetches both image files of `source` into `data_dir`, trying each mirror
/// (URL prefix or local directory) in order.
pub fn fetch_source(source: DatasetSource, data_dir: &Path, mirrors: &[String]) -> Result<Vec<FetchOutcome>> {
    let mut out = Vec::new();
    for split in [Split::Train, Split::Test] {
        let file = source.image_file(split);
        let dest = source.image_path(data_dir, split);
        let mut errors = Vec::new();
        let mut done = None;
        for m in mirrors {
            let src = if m.starts_with("http://") || m.starts_with("https://") {
                format!("{}/{file}", m.trim_end_matches('/'))
            } else {
                Path::new(m.strip_prefix("file://").unwrap_or(m)).join(file).to_string_lossy().into_owned()
            };
            match fetch(&src, &dest, source.image_md5(split)) {
                Ok(o) => {
                    done = Some(o);
                    break;
                }
                Err(e) => {
                    log::warn!("{e}");
                    errors.push(e.to_string());
                }
            }
        }
        match done {
            Some(o) => out.push(o),
            None => {
                return Err(Error::Fetch(format!("{source} {file}: every mirror failed: {}", errors.join("; "))));
            }
        }
    }
    Ok(out)
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digests() {
        assert_eq!(md5_hex(b""), "d41d8cd98f00b204e9800998ecf8427e");
        assert_eq!(md5_hex(b"abc"), "900150983cd24fb0d6963f7d28e17f72");
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f");
        fs::write(&p, b"abc").unwrap();
        assert_eq!(file_sha256(&p).unwrap(), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn local_copy_verifies_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("src.bin");
        fs::write(&src, b"abc").unwrap();
        let dest = dir.path().join("out/dest.bin");
        let good = "900150983cd24fb0d6963f7d28e17f72";
        let o = fetch(src.to_str().unwrap(), &dest, Some(good)).unwrap();
        assert!(o.transferred);
        assert_eq!(fs::read(&dest).unwrap(), b"abc");
        let again = fetch(&format!("file://{}", src.display()), &dest, Some(good)).unwrap();
        assert!(!again.transferred);

        let other = dir.path().join("other.bin");
        let err = fetch(src.to_str().unwrap(), &other, Some("00")).unwrap_err();
        assert!(matches!(err, Error::Fetch(_)));
        assert!(!other.exists());
    }

    #[test]
    fn mirrors_fall_through_to_a_local_directory() {
        let dir = tempfile::tempdir().unwrap();
        let mirror = dir.path().join("mirror");
        fs::create_dir_all(&mirror).unwrap();
        for split in [Split::Train, Split::Test] {
            fs::write(mirror.join(DatasetSource::FashionMnist.image_file(split)), b"x").unwrap();
        }
        let data = dir.path().join("data");
        let mirrors = vec![dir.path().join("missing").display().to_string(), mirror.display().to_string()];
        let out = fetch_source(DatasetSource::FashionMnist, &data, &mirrors).unwrap();
        assert_eq!(out.len(), 2);
        assert!(data.join("fashion_mnist/t10k-images-idx3-ubyte.gz").exists());
    }
}
