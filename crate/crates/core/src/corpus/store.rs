//! On-disk index directory: one file whose first line is a magic tag and a
//! format version, followed by the corpus and index as JSON.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Corpus, InvertedIndex};
use crate::{Error, Result};

pub const INDEX_FILE: &str = "index.qbx";
pub const INDEX_FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "QUERYBUILDER-INDEX";

#[derive(Serialize)]
struct PayloadRef<'a> {
    corpus: &'a Corpus,
    index: &'a InvertedIndex,
}

#[derive(Deserialize)]
struct Payload {
    corpus: Corpus,
    index: InvertedIndex,
}

pub fn save_index(dir: impl AsRef<Path>, corpus: &Corpus, index: &InvertedIndex) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(INDEX_FILE);
    let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{MAGIC} {INDEX_FORMAT_VERSION}").map_err(|e| Error::io(&path, e))?;
    serde_json::to_writer(&mut w, &PayloadRef { corpus, index })?;
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(())
}

pub fn load_index(dir: impl AsRef<Path>) -> Result<(Corpus, InvertedIndex)> {
    let path = dir.as_ref().join(INDEX_FILE);
    let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut reader = BufReader::new(file);
    let mut header = String::new();
    reader
        .read_line(&mut header)
        .map_err(|e| Error::io(&path, e))?;
    let bad = |message: String| Error::BadFormat {
        path: path.clone(),
        message,
    };
    let version = header
        .trim_end()
        .strip_prefix(MAGIC)
        .and_then(|rest| rest.trim().parse::<u32>().ok())
        .ok_or_else(|| bad("not an index file".into()))?;
    if version != INDEX_FORMAT_VERSION {
        return Err(bad(format!(
            "unsupported index format version {version} (expected {INDEX_FORMAT_VERSION})"
        )));
    }
    let mut payload: Payload = serde_json::from_reader(reader)?;
    payload.corpus.rebuild_lookups();
    payload.index.finalize();
    Ok((payload.corpus, payload.index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{IngestConfig, Target};

    #[test]
    fn round_trip_preserves_statistics() {
        let corpus = Corpus::from_texts(
            IngestConfig::default(),
            [("d1", "Water rose. Lead fell."), ("d2", "Water again.")],
        )
        .unwrap();
        let index = corpus.build_index();
        let dir = tempfile::tempdir().unwrap();
        save_index(dir.path(), &corpus, &index).unwrap();
        let (c2, i2) = load_index(dir.path()).unwrap();
        assert_eq!(c2.sentence("d1:1").unwrap().text, "Lead fell.");
        assert_eq!(
            serde_json::to_string(&index).unwrap(),
            serde_json::to_string(&i2).unwrap()
        );
        assert_eq!(i2.table(Target::Sentences).ordinal("d2:0"), Some(2));
    }

    #[test]
    fn rejects_wrong_magic_and_version() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(INDEX_FILE), "SOMETHING 1\n{}").unwrap();
        assert!(matches!(
            load_index(dir.path()),
            Err(Error::BadFormat { .. })
        ));
        fs::write(dir.path().join(INDEX_FILE), format!("{MAGIC} 99\n{{}}")).unwrap();
        let err = load_index(dir.path()).unwrap_err();
        assert!(err.to_string().contains("version 99"), "{err}");
    }

    #[test]
    fn same_input_gives_identical_bytes() {
        let docs = [("b", "Beta gamma. Delta."), ("a", "Alpha beta.")];
        let c1 = Corpus::from_texts(IngestConfig::default(), docs).unwrap();
        let c2 = Corpus::from_texts(IngestConfig::default(), docs).unwrap();
        let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        save_index(d1.path(), &c1, &c1.build_index()).unwrap();
        save_index(d2.path(), &c2, &c2.build_index()).unwrap();
        assert_eq!(
            fs::read(d1.path().join(INDEX_FILE)).unwrap(),
            fs::read(d2.path().join(INDEX_FILE)).unwrap()
        );
    }
}
