use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{
    AnnotationRecord, CandidateDoc, Charge, ChargeVocabulary, CorpusError, Dataset, DatasetSplit,
    GradedTriple, QueryCase, Reversal,
};

const VOCAB: &str = "vocab.jsonl";
const QUERIES: &str = "queries.jsonl";
const DOCS: &str = "docs.jsonl";
const TRIPLES: &str = "triples.jsonl";
const SPLIT: &str = "split.json";
const REVERSALS: &str = "reversals.jsonl";
const ANNOTATIONS: &str = "annotations.jsonl";

fn read(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })
}

fn schema(file: &str, line: usize, message: impl Into<String>) -> CorpusError {
    CorpusError::Schema { file: file.to_string(), line, message: message.into() }
}

/// Parses a JSONL file, running `check` on each record. Blank lines are skipped.
fn read_jsonl<T, F>(dir: &Path, file: &str, mut check: F) -> Result<Vec<T>, CorpusError>
where
    T: DeserializeOwned,
    F: FnMut(&T) -> Result<(), String>,
{
    let text = read(&dir.join(file))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(line).map_err(|e| schema(file, i + 1, e.to_string()))?;
        check(&record).map_err(|m| schema(file, i + 1, m))?;
        out.push(record);
    }
    Ok(out)
}

fn read_optional_jsonl<T: DeserializeOwned>(
    dir: &Path,
    file: &str,
    check: impl FnMut(&T) -> Result<(), String>,
) -> Result<Vec<T>, CorpusError> {
    if dir.join(file).exists() {
        read_jsonl(dir, file, check)
    } else {
        Ok(Vec::new())
    }
}

fn check_sentences(sentences: &[String]) -> Result<(), String> {
    if sentences.is_empty() {
        Err("sentences must be non-empty".into())
    } else {
        Ok(())
    }
}

/// Loads a dataset directory, validating every record and all cross references.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset, CorpusError> {
    let dir = dir.as_ref();
    let charges: Vec<Charge> = read_jsonl(dir, VOCAB, |_: &Charge| Ok(()))?;
    let vocab = ChargeVocabulary::new(charges)?;

    let queries = read_jsonl(dir, QUERIES, |q: &QueryCase| {
        check_sentences(&q.sentences)?;
        for (c, p) in &q.intent_dist {
            if !q.ccs.contains(c) {
                return Err(format!("intent_dist charge {c} not in ccs"));
            }
            if !(0.0..=1.0).contains(p) {
                return Err(format!("intent probability {p} for charge {c} outside [0,1]"));
            }
        }
        Ok(())
    })?;
    let docs = read_jsonl(dir, DOCS, |d: &CandidateDoc| check_sentences(&d.sentences))?;
    let triples = read_jsonl(dir, TRIPLES, |_: &GradedTriple| Ok(()))?;
    let split: DatasetSplit =
        serde_json::from_str(&read(&dir.join(SPLIT))?).map_err(|e| schema(SPLIT, e.line(), e.to_string()))?;
    let reversals = read_optional_jsonl(dir, REVERSALS, |r: &Reversal| {
        if r.count < 0 {
            Err(format!("negative reversal count {}", r.count))
        } else {
            Ok(())
        }
    })?;
    let annotations = read_optional_jsonl(dir, ANNOTATIONS, |_: &AnnotationRecord| Ok(()))?;

    let dataset = Dataset { vocab, queries, docs, triples, split, reversals, annotations };
    dataset.check_integrity()?;
    Ok(dataset)
}

fn write_jsonl<T: Serialize>(path: PathBuf, records: &[T]) -> Result<(), CorpusError> {
    let io_err = |source| CorpusError::Io { path: path.clone(), source };
    let file = fs::File::create(&path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| io_err(e.into()))?;
        w.write_all(b"\n").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Writes a dataset directory. Optional files are omitted when empty.
pub fn save_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<(), CorpusError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|source| CorpusError::Io { path: dir.to_path_buf(), source })?;
    write_jsonl(dir.join(VOCAB), dataset.vocab.charges())?;
    write_jsonl(dir.join(QUERIES), &dataset.queries)?;
    write_jsonl(dir.join(DOCS), &dataset.docs)?;
    write_jsonl(dir.join(TRIPLES), &dataset.triples)?;
    let split_path = dir.join(SPLIT);
    let split = serde_json::to_string(&dataset.split).expect("split serializes");
    fs::write(&split_path, split + "\n").map_err(|source| CorpusError::Io { path: split_path, source })?;
    for (file, present) in [(REVERSALS, !dataset.reversals.is_empty()), (ANNOTATIONS, !dataset.annotations.is_empty())] {
        let path = dir.join(file);
        if !present && path.exists() {
            fs::remove_file(&path).map_err(|source| CorpusError::Io { path: path.clone(), source })?;
        }
    }
    if !dataset.reversals.is_empty() {
        write_jsonl(dir.join(REVERSALS), &dataset.reversals)?;
    }
    if !dataset.annotations.is_empty() {
        write_jsonl(dir.join(ANNOTATIONS), &dataset.annotations)?;
    }
    Ok(())
}
