//! JSON-lines database file.
//!
//! Line 1 is the header `{"format":"redistill-db","version":1}`. Every
//! following non-blank line is one record with fields in this order:
//! `uid`, `caption_tokens`, `scene` (`{id, points: [[x,y,z,w], ...]}`),
//! `text_embedding`, `view_embeddings` (`[{azimuth, embedding}, ...]`),
//! `prefix_reference_embeddings` (`{front, side, back}`).

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::index::{AssetRecord, EmbeddingIndex, IndexMode, PrefixEmbeddings, ViewEmbedding};
use crate::error::{Error, Result};
use crate::render::Scene;

pub const DB_FORMAT: &str = "redistill-db";
pub const DB_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
}

pub fn save_db(index: &EmbeddingIndex, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let header = Header { format: DB_FORMAT.into(), version: DB_VERSION };
    let io = |e| Error::io(path, e);
    writeln!(out, "{}", serde_json::to_string(&header)?).map_err(io)?;
    for r in index.records() {
        writeln!(out, "{}", serde_json::to_string(r)?).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn load_db(path: &Path) -> Result<EmbeddingIndex> {
    load_db_with_mode(path, IndexMode::Exact)
}

pub fn load_db_with_mode(path: &Path, mode: IndexMode) -> Result<EmbeddingIndex> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_db(&text, mode)
}

pub(crate) fn parse_db(text: &str, mode: IndexMode) -> Result<EmbeddingIndex> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, first)) = lines.next() else {
        return EmbeddingIndex::build(Vec::new(), mode);
    };
    let header: Header =
        serde_json::from_str(first).map_err(|e| Error::Parse { line: 1, message: format!("bad header: {e}") })?;
    if header.format != DB_FORMAT || header.version != DB_VERSION {
        return Err(Error::Parse {
            line: 1,
            message: format!("unsupported database {} v{}", header.format, header.version),
        });
    }
    let mut records = Vec::new();
    for (n, line) in lines {
        let value: Value =
            serde_json::from_str(line).map_err(|e| Error::Parse { line: n + 1, message: e.to_string() })?;
        records.push(decode_record(&value, n + 1)?);
    }
    EmbeddingIndex::build(records, mode)
}

fn decode_record(value: &Value, line: usize) -> Result<AssetRecord> {
    let uid = value
        .get("uid")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::Parse { line, message: "record has no string `uid`".into() })?
        .to_string();
    let field_err = |field: &str, message: String| Error::Record { uid: uid.clone(), field: field.into(), message };
    let take = |field: &str| -> Result<&Value> { value.get(field).ok_or_else(|| field_err(field, "missing".into())) };
    let caption_tokens: Vec<String> = serde_json::from_value(take("caption_tokens")?.clone())
        .map_err(|e| field_err("caption_tokens", e.to_string()))?;
    let scene: Scene = serde_json::from_value(take("scene")?.clone()).map_err(|e| field_err("scene", e.to_string()))?;
    let text_embedding: Vec<f64> = serde_json::from_value(take("text_embedding")?.clone())
        .map_err(|e| field_err("text_embedding", e.to_string()))?;
    let view_embeddings: Vec<ViewEmbedding> = serde_json::from_value(take("view_embeddings")?.clone())
        .map_err(|e| field_err("view_embeddings", e.to_string()))?;
    let prefix_reference_embeddings: PrefixEmbeddings =
        serde_json::from_value(take("prefix_reference_embeddings")?.clone())
            .map_err(|e| field_err("prefix_reference_embeddings", e.to_string()))?;
    let record =
        AssetRecord { uid, caption_tokens, scene, text_embedding, view_embeddings, prefix_reference_embeddings };
    record.validate()?;
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_an_empty_index() {
        assert!(parse_db("", IndexMode::Exact).unwrap().is_empty());
        let header_only = format!("{{\"format\":\"{DB_FORMAT}\",\"version\":1}}\n");
        assert!(parse_db(&header_only, IndexMode::Exact).unwrap().is_empty());
    }

    #[test]
    fn wrong_header_rejected() {
        assert!(parse_db("{\"format\":\"other\",\"version\":1}\n", IndexMode::Exact).is_err());
        assert!(parse_db("not json\n", IndexMode::Exact).is_err());
    }
}
