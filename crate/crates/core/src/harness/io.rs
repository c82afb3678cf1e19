//! Embedding and selection file formats plus content digests.
//!
//! Text embeddings: line 1 is `N D`, then `N` lines of an external id
//! followed by `D` decimal reals, space-separated. Reals are printed with
//! Rust's shortest round-trip formatting, so finite doubles survive a text
//! round-trip bit-exactly. The binary variant is magic + version + counts,
//! then per row a length-prefixed id and `D` little-endian 64-bit reals.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::domain::{EmbeddingMatrix, Method, SelectionResult};
use crate::error::{Error, Result};

const BIN_MAGIC: &[u8; 4] = b"CSEM";
const BIN_VERSION: u32 = 1;
const SELECTION_MAGIC: &str = "coldstart-selection";
const SELECTION_VERSION: u32 = 1;

pub fn write_embeddings_text<W: Write>(m: &EmbeddingMatrix, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{} {}", m.count(), m.dim())?;
    for i in 0..m.count() {
        write!(out, "{}", m.id(i))?;
        for x in m.vector(i) {
            write!(out, " {x}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn save_embeddings_text(m: &EmbeddingMatrix, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_embeddings_text(m, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_embeddings_text<R: Read>(input: R, path: &Path) -> Result<EmbeddingMatrix> {
    let reader = BufReader::new(input);
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = reader.lines().enumerate();
    let (count, dim) = match lines.next() {
        Some((_, Ok(header))) => {
            let mut parts = header.split_whitespace();
            let n: usize = parts
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| parse_err(1, "bad count in header".into()))?;
            let d: usize = parts
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| parse_err(1, "bad dimension in header".into()))?;
            if parts.next().is_some() {
                return Err(parse_err(1, "header must be exactly `N D`".into()));
            }
            (n, d)
        }
        Some((_, Err(e))) => return Err(parse_err(1, e.to_string())),
        None => return Err(parse_err(1, "empty embedding file".into())),
    };
    let mut ids = Vec::with_capacity(count);
    let mut data = Vec::with_capacity(count * dim);
    for _ in 0..count {
        let (lineno, line) = match lines.next() {
            Some((i, Ok(l))) => (i + 1, l),
            Some((i, Err(e))) => return Err(parse_err(i + 1, e.to_string())),
            None => {
                return Err(Error::invalid(format!(
                    "{}: expected {count} embedding rows",
                    path.display()
                )))
            }
        };
        let mut fields = line.split_whitespace();
        let id = fields
            .next()
            .ok_or_else(|| parse_err(lineno, "missing id".into()))?;
        ids.push(id.to_string());
        let mut got = 0usize;
        for f in fields {
            let x: f64 = f
                .parse()
                .map_err(|e| parse_err(lineno, format!("bad real {f:?}: {e}")))?;
            data.push(x);
            got += 1;
        }
        if got != dim {
            return Err(parse_err(
                lineno,
                format!("expected {dim} components, got {got}"),
            ));
        }
    }
    EmbeddingMatrix::from_flat(dim, ids, data)
}

pub fn write_embeddings_binary<W: Write>(m: &EmbeddingMatrix, mut out: W) -> std::io::Result<()> {
    out.write_all(BIN_MAGIC)?;
    out.write_all(&BIN_VERSION.to_le_bytes())?;
    out.write_all(&(m.count() as u64).to_le_bytes())?;
    out.write_all(&(m.dim() as u64).to_le_bytes())?;
    for i in 0..m.count() {
        let id = m.id(i).as_bytes();
        out.write_all(&(id.len() as u32).to_le_bytes())?;
        out.write_all(id)?;
        for x in m.vector(i) {
            out.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn save_embeddings_binary(m: &EmbeddingMatrix, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_embeddings_binary(m, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_embeddings_binary<R: Read>(mut input: R, path: &Path) -> Result<EmbeddingMatrix> {
    let err = |msg: String| Error::invalid(format!("{}: {msg}", path.display()));
    let mut magic = [0u8; 4];
    input
        .read_exact(&mut magic)
        .map_err(|e| Error::io(path, e))?;
    if &magic != BIN_MAGIC {
        return Err(err("not a binary embedding file".into()));
    }
    let mut u32_buf = [0u8; 4];
    let mut u64_buf = [0u8; 8];
    input
        .read_exact(&mut u32_buf)
        .map_err(|e| Error::io(path, e))?;
    let version = u32::from_le_bytes(u32_buf);
    if version != BIN_VERSION {
        return Err(err(format!("unsupported version {version}")));
    }
    input
        .read_exact(&mut u64_buf)
        .map_err(|e| Error::io(path, e))?;
    let count = u64::from_le_bytes(u64_buf) as usize;
    input
        .read_exact(&mut u64_buf)
        .map_err(|e| Error::io(path, e))?;
    let dim = u64::from_le_bytes(u64_buf) as usize;
    let mut ids = Vec::with_capacity(count);
    let mut data = Vec::with_capacity(count * dim);
    for _ in 0..count {
        input
            .read_exact(&mut u32_buf)
            .map_err(|e| Error::io(path, e))?;
        let len = u32::from_le_bytes(u32_buf) as usize;
        let mut id = vec![0u8; len];
        input.read_exact(&mut id).map_err(|e| Error::io(path, e))?;
        ids.push(String::from_utf8(id).map_err(|e| err(format!("bad id encoding: {e}")))?);
        for _ in 0..dim {
            input
                .read_exact(&mut u64_buf)
                .map_err(|e| Error::io(path, e))?;
            data.push(f64::from_le_bytes(u64_buf));
        }
    }
    EmbeddingMatrix::from_flat(dim, ids, data)
}

/// Reads an embedding file, sniffing the binary magic and falling back to the
/// text format.
pub fn load_embeddings(path: &Path) -> Result<EmbeddingMatrix> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() >= 4 && &bytes[..4] == BIN_MAGIC {
        read_embeddings_binary(&bytes[..], path)
    } else {
        read_embeddings_text(&bytes[..], path)
    }
}

/// Writes a ranked selection with external ids:
/// a magic+version line, `method=` and `m=` lines, then `id score` rows.
pub fn write_selection<W: Write>(
    sel: &SelectionResult,
    items: &EmbeddingMatrix,
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "{SELECTION_MAGIC} {SELECTION_VERSION}")?;
    writeln!(out, "method={}", sel.method)?;
    writeln!(out, "m={}", sel.m())?;
    for (idx, score) in sel.ranked().iter().zip(sel.scores()) {
        writeln!(out, "{} {score}", items.id(*idx))?;
    }
    Ok(())
}

pub fn save_selection(sel: &SelectionResult, items: &EmbeddingMatrix, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_selection(sel, items, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Parses a selection file back against an item matrix, resolving external
/// ids to internal indices.
pub fn read_selection<R: Read>(
    input: R,
    items: &EmbeddingMatrix,
    path: &Path,
) -> Result<SelectionResult> {
    let reader = BufReader::new(input);
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = reader.lines().enumerate();
    let mut take = |expect: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((i, Ok(l))) => Ok((i + 1, l)),
            Some((i, Err(e))) => Err(parse_err(i + 1, e.to_string())),
            None => Err(Error::invalid(format!(
                "{}: unexpected end of file, expected {expect}",
                path.display()
            ))),
        }
    };
    let (lineno, magic) = take("magic header")?;
    let mut parts = magic.split_whitespace();
    if parts.next() != Some(SELECTION_MAGIC) {
        return Err(parse_err(lineno, format!("not a {SELECTION_MAGIC} file")));
    }
    if parts.next().and_then(|v| v.parse::<u32>().ok()) != Some(SELECTION_VERSION) {
        return Err(parse_err(lineno, "unsupported selection version".into()));
    }
    let (lineno, method_line) = take("method line")?;
    let method: Method = method_line
        .strip_prefix("method=")
        .ok_or_else(|| parse_err(lineno, "expected method=...".into()))?
        .parse()?;
    let (lineno, m_line) = take("m line")?;
    let m: usize = m_line
        .strip_prefix("m=")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| parse_err(lineno, "expected m=<integer>".into()))?;
    let mut ranked = Vec::with_capacity(m);
    let mut scores = Vec::with_capacity(m);
    for _ in 0..m {
        let (lineno, row) = take("selection row")?;
        let mut fields = row.split_whitespace();
        let id = fields
            .next()
            .ok_or_else(|| parse_err(lineno, "missing item id".into()))?;
        let score: f64 = fields
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| parse_err(lineno, "missing or bad score".into()))?;
        let idx = items
            .index_of(id)
            .ok_or_else(|| parse_err(lineno, format!("unknown item id {id:?}")))?;
        ranked.push(idx);
        scores.push(score);
    }
    SelectionResult::new(method, ranked, scores, items)
}

pub fn load_selection(path: &Path, items: &EmbeddingMatrix) -> Result<SelectionResult> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_selection(file, items, path)
}

pub fn digest_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(digest_bytes(&bytes))
}

/// Content digest of a matrix via its binary encoding.
pub fn digest_matrix(m: &EmbeddingMatrix) -> String {
    let mut buf = Vec::new();
    write_embeddings_binary(m, &mut buf).expect("in-memory write");
    digest_bytes(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matrix(vecs: &[&[f64]]) -> EmbeddingMatrix {
        let dim = vecs[0].len();
        let ids = (0..vecs.len()).map(|i| format!("i{i}")).collect();
        EmbeddingMatrix::new(dim, ids, vecs.iter().map(|v| v.to_vec()).collect()).unwrap()
    }

    #[test]
    fn text_round_trip_simple() {
        let m = matrix(&[&[1.5, -2.25], &[0.1, 1e-300]]);
        let mut buf = Vec::new();
        write_embeddings_text(&m, &mut buf).unwrap();
        let back = read_embeddings_text(&buf[..], Path::new("mem")).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn binary_round_trip_simple() {
        let m = matrix(&[&[std::f64::consts::PI, -0.0], &[f64::MIN_POSITIVE, 42.0]]);
        let mut buf = Vec::new();
        write_embeddings_binary(&m, &mut buf).unwrap();
        let back = read_embeddings_binary(&buf[..], Path::new("mem")).unwrap();
        for i in 0..m.count() {
            for (a, b) in m.vector(i).iter().zip(back.vector(i)) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn sniffing_loader_reads_both_formats() {
        let dir = tempfile::tempdir().unwrap();
        let m = matrix(&[&[1.0, 2.0]]);
        let text = dir.path().join("e.txt");
        let bin = dir.path().join("e.bin");
        save_embeddings_text(&m, &text).unwrap();
        save_embeddings_binary(&m, &bin).unwrap();
        assert_eq!(load_embeddings(&text).unwrap(), m);
        assert_eq!(load_embeddings(&bin).unwrap(), m);
    }

    #[test]
    fn text_parse_errors_name_lines() {
        let bad = "2 2\ni0 1.0 2.0\ni1 1.0 oops\n";
        match read_embeddings_text(bad.as_bytes(), Path::new("mem")).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn selection_round_trip() {
        let items = matrix(&[&[1.0, 0.0], &[0.0, 1.0], &[0.5, 0.5]]);
        let sel = SelectionResult::new(Method::Greedy, vec![2, 0], vec![1.0, 0.5], &items).unwrap();
        let mut buf = Vec::new();
        write_selection(&sel, &items, &mut buf).unwrap();
        let back = read_selection(&buf[..], &items, Path::new("mem")).unwrap();
        assert_eq!(sel, back);
    }

    #[test]
    fn digests_are_stable_and_distinct() {
        let a = matrix(&[&[1.0]]);
        let b = matrix(&[&[2.0]]);
        assert_eq!(digest_matrix(&a), digest_matrix(&a));
        assert_ne!(digest_matrix(&a), digest_matrix(&b));
        assert_eq!(digest_bytes(b"x").len(), 64);
    }

    proptest! {
        /// Finite doubles survive the text format bit-exactly.
        #[test]
        fn text_round_trip_is_bit_exact(
            rows in proptest::collection::vec(
                proptest::collection::vec(
                    prop_oneof![
                        any::<f64>().prop_filter("finite", |x| x.is_finite()),
                        -1.0f64..1.0,
                    ],
                    3,
                ),
                1..6,
            )
        ) {
            let ids = (0..rows.len()).map(|i| format!("r{i}")).collect();
            let m = EmbeddingMatrix::new(3, ids, rows).unwrap();
            let mut buf = Vec::new();
            write_embeddings_text(&m, &mut buf).unwrap();
            let back = read_embeddings_text(&buf[..], Path::new("mem")).unwrap();
            for i in 0..m.count() {
                for (a, b) in m.vector(i).iter().zip(back.vector(i)) {
                    prop_assert_eq!(a.to_bits(), b.to_bits());
                }
            }
        }
    }
}
