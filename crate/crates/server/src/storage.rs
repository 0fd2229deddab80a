//! Storage ports: a document store for JSON metadata records and a
//! content-addressed blob store, each with a filesystem and an in-memory
//! backend.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum StorageError {
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("invalid storage key {0:?}")]
    InvalidKey(String),
    #[error("corrupt record {key}: {message}")]
    Corrupt { key: String, message: String },
}

pub type Result<T, E = StorageError> = std::result::Result<T, E>;

/// Lowercase hex SHA-256 of `bytes`.
pub fn digest_of(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn is_digest(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

/// Keys and collection path segments: 1 to 128 of `[A-Za-z0-9_.-]`, not
/// starting with a dot.
pub fn is_valid_key(s: &str) -> bool {
    !s.is_empty()
        && s.len() <= 128
        && !s.starts_with('.')
        && s.bytes().all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b'.'))
}

fn check_collection(c: &str) -> Result<()> {
    if c.split('/').all(is_valid_key) {
        Ok(())
    } else {
        Err(StorageError::InvalidKey(c.to_string()))
    }
}

fn check_key(k: &str) -> Result<()> {
    if is_valid_key(k) {
        Ok(())
    } else {
        Err(StorageError::InvalidKey(k.to_string()))
    }
}

/// Document store for small JSON records grouped in collections.
/// Collections are `/`-separated paths of valid keys.
pub trait MetadataStore: Send + Sync {
    fn put(&self, collection: &str, key: &str, value: &[u8]) -> Result<()>;
    fn get(&self, collection: &str, key: &str) -> Result<Option<Vec<u8>>>;
    fn delete(&self, collection: &str, key: &str) -> Result<bool>;
    /// Keys of a collection in ascending order.
    fn keys(&self, collection: &str) -> Result<Vec<String>>;
}

/// Content-addressed blob store keyed by lowercase hex SHA-256.
pub trait BlobStore: Send + Sync {
    /// Stores `bytes` and returns their digest. Storing the same content
    /// twice is a no-op.
    fn put(&self, bytes: &[u8]) -> Result<String>;
    /// Returns the stored bytes as read from the backend, unverified.
    fn get(&self, digest: &str) -> Result<Option<Vec<u8>>>;
    fn contains(&self, digest: &str) -> Result<bool>;
}

/// Typed JSON access on top of a [`MetadataStore`].
pub trait MetadataStoreExt: MetadataStore {
    fn put_json<T: Serialize>(&self, collection: &str, key: &str, value: &T) -> Result<()> {
        let bytes = serde_json::to_vec(value).map_err(|e| StorageError::Corrupt {
            key: format!("{collection}/{key}"),
            message: e.to_string(),
        })?;
        self.put(collection, key, &bytes)
    }

    fn get_json<T: DeserializeOwned>(&self, collection: &str, key: &str) -> Result<Option<T>> {
        self.get(collection, key)?
            .map(|b| {
                serde_json::from_slice(&b).map_err(|e| StorageError::Corrupt {
                    key: format!("{collection}/{key}"),
                    message: e.to_string(),
                })
            })
            .transpose()
    }

    fn list_json<T: DeserializeOwned>(&self, collection: &str) -> Result<Vec<T>> {
        let mut out = Vec::new();
        for k in self.keys(collection)? {
            // A concurrent delete between listing and reading is not an error.
            if let Some(v) = self.get_json(collection, &k)? {
                out.push(v);
            }
        }
        Ok(out)
    }
}

impl<S: MetadataStore + ?Sized> MetadataStoreExt for S {}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StorageError + '_ {
    move |source| StorageError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `bytes` to `path` through a sibling temporary file, fsync and
/// rename, so readers never observe a partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().expect("storage paths have a parent");
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let tmp = dir.join(format!(
        ".tmp-{}-{}",
        std::process::id(),
        TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(io_err(path))
}

/// One JSON file per record under `<root>/<collection>/<key>.json`.
#[derive(Debug, Clone)]
pub struct FsMetadataStore {
    root: PathBuf,
}

impl FsMetadataStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        Ok(FsMetadataStore { root })
    }

    fn path(&self, collection: &str, key: &str) -> Result<PathBuf> {
        check_collection(collection)?;
        check_key(key)?;
        Ok(self.root.join(collection).join(format!("{key}.json")))
    }
}

impl MetadataStore for FsMetadataStore {
    fn put(&self, collection: &str, key: &str, value: &[u8]) -> Result<()> {
        write_atomic(&self.path(collection, key)?, value)
    }

    fn get(&self, collection: &str, key: &str) -> Result<Option<Vec<u8>>> {
        let path = self.path(collection, key)?;
        match fs::read(&path) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    fn delete(&self, collection: &str, key: &str) -> Result<bool> {
        let path = self.path(collection, key)?;
        match fs::remove_file(&path) {
            Ok(()) => Ok(true),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(false),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    fn keys(&self, collection: &str) -> Result<Vec<String>> {
        check_collection(collection)?;
        let dir = self.root.join(collection);
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_err(&dir)(e)),
        };
        let mut keys = Vec::new();
        for entry in entries {
            let name = entry.map_err(io_err(&dir))?.file_name();
            if let Some(key) = name.to_str().and_then(|n| n.strip_suffix(".json")) {
                if is_valid_key(key) {
                    keys.push(key.to_string());
                }
            }
        }
        keys.sort();
        Ok(keys)
    }
}

/// Blobs under `<root>/<first two hex digits>/<digest>`.
#[derive(Debug, Clone)]
pub struct FsBlobStore {
    root: PathBuf,
}

impl FsBlobStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        Ok(FsBlobStore { root })
    }

    /// Location of a blob on disk.
    pub fn path_of(&self, digest: &str) -> Result<PathBuf> {
        if !is_digest(digest) {
            return Err(StorageError::InvalidKey(digest.to_string()));
        }
        Ok(self.root.join(&digest[..2]).join(digest))
    }
}

impl BlobStore for FsBlobStore {
    fn put(&self, bytes: &[u8]) -> Result<String> {
        let digest = digest_of(bytes);
        let path = self.path_of(&digest)?;
        if !path.exists() {
            write_atomic(&path, bytes)?;
        }
        Ok(digest)
    }

    fn get(&self, digest: &str) -> Result<Option<Vec<u8>>> {
        let path = self.path_of(digest)?;
        match fs::read(&path) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    fn contains(&self, digest: &str) -> Result<bool> {
        Ok(self.path_of(digest)?.is_file())
    }
}

#[derive(Debug, Default)]
pub struct MemoryMetadataStore {
    records: Mutex<BTreeMap<String, BTreeMap<String, Vec<u8>>>>,
}

impl MemoryMetadataStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl MetadataStore for MemoryMetadataStore {
    fn put(&self, collection: &str, key: &str, value: &[u8]) -> Result<()> {
        check_collection(collection)?;
        check_key(key)?;
        let mut records = self.records.lock().unwrap();
        records
            .entry(collection.to_string())
            .or_default()
            .insert(key.to_string(), value.to_vec());
        Ok(())
    }

    fn get(&self, collection: &str, key: &str) -> Result<Option<Vec<u8>>> {
        check_collection(collection)?;
        check_key(key)?;
        let records = self.records.lock().unwrap();
        Ok(records.get(collection).and_then(|c| c.get(key)).cloned())
    }

    fn delete(&self, collection: &str, key: &str) -> Result<bool> {
        check_collection(collection)?;
        check_key(key)?;
        let mut records = self.records.lock().unwrap();
        Ok(records
            .get_mut(collection)
            .is_some_and(|c| c.remove(key).is_some()))
    }

    fn keys(&self, collection: &str) -> Result<Vec<String>> {
        check_collection(collection)?;
        let records = self.records.lock().unwrap();
        Ok(records
            .get(collection)
            .map(|c| c.keys().cloned().collect())
            .unwrap_or_default())
    }
}

#[derive(Debug, Default)]
pub struct MemoryBlobStore {
    blobs: RwLock<HashMap<String, Arc<Vec<u8>>>>,
}

impl MemoryBlobStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Replaces stored content without updating its key. Used to simulate
    /// storage corruption.
    pub fn overwrite(&self, digest: &str, bytes: Vec<u8>) {
        self.blobs
            .write()
            .unwrap()
            .insert(digest.to_string(), Arc::new(bytes));
    }
}

impl BlobStore for MemoryBlobStore {
    fn put(&self, bytes: &[u8]) -> Result<String> {
        let digest = digest_of(bytes);
        self.blobs
            .write()
            .unwrap()
            .entry(digest.clone())
            .or_insert_with(|| Arc::new(bytes.to_vec()));
        Ok(digest)
    }

    fn get(&self, digest: &str) -> Result<Option<Vec<u8>>> {
        Ok(self
            .blobs
            .read()
            .unwrap()
            .get(digest)
            .map(|b| b.as_ref().clone()))
    }

    fn contains(&self, digest: &str) -> Result<bool> {
        Ok(self.blobs.read().unwrap().contains_key(digest))
    }
}
