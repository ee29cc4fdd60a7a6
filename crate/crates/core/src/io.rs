//! Text formats for embeddings, codebooks, edge splits and training logs.
//!
//! Reals are written with 17 significant digits, which round-trips every
//! `f64` exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::compressor::{CodeFlavor, Codebook};
use crate::error::{Error, Result};
use crate::graph::{read_to_string, EdgeSplit, Graph};
use crate::math::DenseMatrix;
use crate::mcne_p::EpochLog;
use crate::mcne_t::McneTEpochLog;
use crate::pretrain::EmbeddingTable;
use crate::scalar::Scalar;

fn write_real<T: Scalar>(out: &mut String, v: T) {
    write!(out, "{v:.16e}").expect("write to string");
}

fn write_row<T: Scalar>(out: &mut String, row: &[T]) {
    for (j, &v) in row.iter().enumerate() {
        if j > 0 {
            out.push(' ');
        }
        write_real(out, v);
    }
    out.push('\n');
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Non-empty lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_fields<V: FromStr>(line_no: usize, line: &str, what: &str) -> Result<Vec<V>> {
    line.split_whitespace()
        .map(|f| {
            f.parse::<V>().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("invalid {what} {f:?}"),
            })
        })
        .collect()
}

fn expect_len<V>(line_no: usize, fields: &[V], want: usize, what: &str) -> Result<()> {
    if fields.len() != want {
        return Err(Error::Parse {
            line: line_no,
            msg: format!("expected {want} {what}, found {}", fields.len()),
        });
    }
    Ok(())
}

fn body_count(expected: usize, found: usize, what: &str) -> Result<()> {
    if expected != found {
        return Err(Error::Format {
            expected: format!("{expected} {what}"),
            found: format!("{found}"),
        });
    }
    Ok(())
}

/// `|V| d` header, then one row per node.
pub fn format_embeddings<T: Scalar>(table: &EmbeddingTable<T>) -> String {
    let mut out = format!("{} {}\n", table.node_count(), table.dim());
    for row in table.matrix.iter_rows() {
        write_row(&mut out, row);
    }
    out
}

pub fn parse_embeddings<T: Scalar>(text: &str) -> Result<EmbeddingTable<T>> {
    let mut lines = content_lines(text);
    let Some((hl, header)) = lines.next() else {
        return Err(Error::Format {
            expected: "header `|V| d`".into(),
            found: "empty file".into(),
        });
    };
    let dims: Vec<usize> = parse_fields(hl, header, "header count")?;
    expect_len(hl, &dims, 2, "header fields")?;
    let (n, d) = (dims[0], dims[1]);
    let mut data = Vec::with_capacity(n * d);
    let mut rows = 0;
    for (ln, line) in lines {
        let row: Vec<T> = parse_fields(ln, line, "real")?;
        expect_len(ln, &row, d, "values")?;
        data.extend(row);
        rows += 1;
    }
    body_count(n, rows, "embedding rows")?;
    EmbeddingTable::new(DenseMatrix::from_vec(n, d, data)?)
}

pub fn save_embeddings<T: Scalar>(path: impl AsRef<Path>, table: &EmbeddingTable<T>) -> Result<()> {
    write_text(path, &format_embeddings(table))
}

pub fn load_embeddings<T: Scalar>(path: impl AsRef<Path>) -> Result<EmbeddingTable<T>> {
    let path = path.as_ref();
    parse_embeddings(&read_to_string(path)?).map_err(|e| e.in_file(path))
}

/// `s t d flavor [K D]` header, `s` basis rows, then one code row per node.
pub fn format_codebook<T: Scalar>(cb: &Codebook<T>) -> String {
    let mut out = format!("{} {} {} {}\n", cb.s(), cb.t(), cb.d(), cb.flavor());
    for row in cb.basis().iter_rows() {
        write_row(&mut out, row);
    }
    for node in 0..cb.node_count() {
        let codes: Vec<String> = cb.code_row(node).iter().map(usize::to_string).collect();
        out.push_str(&codes.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse_codebook<T: Scalar>(text: &str) -> Result<Codebook<T>> {
    let mut lines = content_lines(text);
    let Some((hl, header)) = lines.next() else {
        return Err(Error::Format {
            expected: "header `s t d flavor`".into(),
            found: "empty file".into(),
        });
    };
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() < 4 {
        return Err(Error::Parse {
            line: hl,
            msg: format!("expected `s t d flavor [K D]`, found {header:?}"),
        });
    }
    let counts: Vec<usize> = parse_fields(hl, &fields[..3].join(" "), "header count")?;
    let (s, t, d) = (counts[0], counts[1], counts[2]);
    let flavor = match (fields[3], &fields[4..]) {
        ("multi_hot", []) => CodeFlavor::MultiHot,
        ("kd", [k, dd]) => {
            let kd: Vec<usize> = parse_fields(hl, &format!("{k} {dd}"), "kd size")?;
            CodeFlavor::Kd {
                block_size: kd[0],
                blocks: kd[1],
            }
        }
        _ => {
            return Err(Error::Parse {
                line: hl,
                msg: format!("unknown flavor spec {:?}", fields[3..].join(" ")),
            })
        }
    };
    let mut basis = Vec::with_capacity(s * d);
    let mut codes = Vec::new();
    let mut basis_rows = 0;
    for (ln, line) in lines {
        if basis_rows < s {
            let row: Vec<T> = parse_fields(ln, line, "real")?;
            expect_len(ln, &row, d, "basis values")?;
            basis.extend(row);
            basis_rows += 1;
        } else {
            let row: Vec<usize> = parse_fields(ln, line, "code")?;
            expect_len(ln, &row, t, "codes")?;
            codes.extend(row);
        }
    }
    body_count(s, basis_rows, "basis rows")?;
    Codebook::new(DenseMatrix::from_vec(s, d, basis)?, codes, t, flavor)
}

pub fn save_codebook<T: Scalar>(path: impl AsRef<Path>, cb: &Codebook<T>) -> Result<()> {
    write_text(path, &format_codebook(cb))
}

pub fn load_codebook<T: Scalar>(path: impl AsRef<Path>) -> Result<Codebook<T>> {
    let path = path.as_ref();
    parse_codebook(&read_to_string(path)?).map_err(|e| e.in_file(path))
}

/// `u v` lines.
pub fn format_edge_list(g: &Graph) -> String {
    let mut out = String::new();
    for (u, v) in g.edges() {
        writeln!(out, "{u} {v}").expect("write to string");
    }
    out
}

/// `|V| train_edges positives negatives` header followed by the three pair lists.
pub fn format_split(split: &EdgeSplit) -> String {
    let train = split.train_graph.edges();
    let mut out = format!(
        "{} {} {} {}\n",
        split.train_graph.node_count(),
        train.len(),
        split.positive_pairs.len(),
        split.negative_pairs.len()
    );
    for (u, v) in train.iter().chain(&split.positive_pairs).chain(&split.negative_pairs) {
        writeln!(out, "{u} {v}").expect("write to string");
    }
    out
}

pub fn parse_split(text: &str) -> Result<EdgeSplit> {
    let mut lines = content_lines(text);
    let Some((hl, header)) = lines.next() else {
        return Err(Error::Format {
            expected: "split header".into(),
            found: "empty file".into(),
        });
    };
    let h: Vec<usize> = parse_fields(hl, header, "count")?;
    expect_len(hl, &h, 4, "header fields")?;
    let (n, e, p, q) = (h[0], h[1], h[2], h[3]);
    let mut pairs = Vec::with_capacity(e + p + q);
    for (ln, line) in lines {
        let uv: Vec<usize> = parse_fields(ln, line, "node id")?;
        expect_len(ln, &uv, 2, "node ids")?;
        for &id in &uv {
            if id >= n {
                return Err(Error::NodeOutOfRange { id, count: n });
            }
        }
        pairs.push((uv[0], uv[1]));
    }
    body_count(e + p + q, pairs.len(), "pair lines")?;
    let negative_pairs = pairs.split_off(e + p);
    let positive_pairs = pairs.split_off(e);
    Ok(EdgeSplit {
        train_graph: Graph::from_edges(n, &pairs)?,
        positive_pairs,
        negative_pairs,
    })
}

pub fn load_split(path: impl AsRef<Path>) -> Result<EdgeSplit> {
    let path = path.as_ref();
    parse_split(&read_to_string(path)?).map_err(|e| e.in_file(path))
}

pub fn format_mcne_p_log(log: &[EpochLog]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss,tau\n");
    for e in log {
        writeln!(out, "{},{:.10e},{:.10e},{}", e.epoch, e.train_loss, e.val_loss, e.tau).expect("write to string");
    }
    out
}

pub fn format_mcne_t_log(log: &[McneTEpochLog]) -> String {
    let mut out = String::from("epoch,topology_loss,reconstruction_loss,combined_loss,tau\n");
    for e in log {
        writeln!(
            out,
            "{},{:.10e},{:.10e},{:.10e},{}",
            e.epoch, e.topology_loss, e.reconstruction_loss, e.combined_loss, e.tau
        )
        .expect("write to string");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_sbm, split_edges};
    use proptest::prelude::*;

    #[test]
    fn hand_written_embedding_file() {
        let t = parse_embeddings::<f64>("2 2\n1.5 -2\n0 3.25e-1\n").unwrap();
        assert_eq!(t.matrix.data(), &[1.5, -2.0, 0.0, 0.325]);
    }

    #[test]
    fn truncated_body_names_counts() {
        let err = parse_embeddings::<f64>("3 2\n1 2\n3 4\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("expected 3 embedding rows") && msg.contains("found 2"), "{msg}");
        let err = parse_codebook::<f64>("3 1 2 multi_hot\n1 2\n3 4\n").unwrap_err();
        assert!(err.to_string().contains("expected 3 basis rows"), "{err}");
        assert!(parse_embeddings::<f64>("2 2\n1 2 3\n4 5\n").is_err());
    }

    #[test]
    fn codebook_round_trip_kd() {
        let basis = DenseMatrix::from_rows(&[[0.1, 0.2], [0.3, 0.4], [-1.0, 1.0 / 3.0], [2.0, 5e-300]]).unwrap();
        let cb = Codebook::new(basis, vec![1, 2, 0, 3, 1, 3], 2, CodeFlavor::Kd { block_size: 2, blocks: 2 }).unwrap();
        let text = format_codebook(&cb);
        assert!(text.starts_with("4 2 2 kd 2 2\n"));
        let back = parse_codebook::<f64>(&text).unwrap();
        assert_eq!(back, cb);
        assert_eq!(format_codebook(&back), text);
        assert!(parse_codebook::<f64>("4 2 2 bogus\n").is_err());
    }

    #[test]
    fn split_round_trip() {
        let (g, _) = generate_sbm(&[6, 6], 0.8, 0.1, 3).unwrap();
        let split = split_edges(&g, 0.3, 1).unwrap();
        let text = format_split(&split);
        let back = parse_split(&text).unwrap();
        assert_eq!(back.positive_pairs, split.positive_pairs);
        assert_eq!(back.negative_pairs, split.negative_pairs);
        assert_eq!(back.train_graph.edges(), split.train_graph.edges());
        assert_eq!(back.train_graph.node_count(), g.node_count());
        assert_eq!(format_split(&back), text);
    }

    #[test]
    fn file_errors_carry_path() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.emb");
        write_text(&p, "1 2\n1\n").unwrap();
        let msg = load_embeddings::<f64>(&p).unwrap_err().to_string();
        assert!(msg.contains("bad.emb"), "{msg}");
        assert!(load_embeddings::<f64>(dir.path().join("missing")).is_err());
    }

    #[test]
    fn f32_round_trip() {
        let m = DenseMatrix::from_rows(&[[0.1f32, -3.3e-20], [1.0e30, 7.0]]).unwrap();
        let t = EmbeddingTable::new(m).unwrap();
        assert_eq!(parse_embeddings::<f32>(&format_embeddings(&t)).unwrap(), t);
    }

    proptest! {
        #[test]
        fn embeddings_round_trip_exactly(
            vals in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 1..40),
            d in 1usize..5,
        ) {
            let n = vals.len() / d;
            prop_assume!(n > 0);
            let m = DenseMatrix::from_vec(n, d, vals[..n * d].to_vec()).unwrap();
            let t = EmbeddingTable::new(m).unwrap();
            let text = format_embeddings(&t);
            let back = parse_embeddings::<f64>(&text).unwrap();
            prop_assert_eq!(back.matrix.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            t.matrix.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
            prop_assert_eq!(format_embeddings(&back), text);
        }
    }
}
