//! Instance parsing (Gset/rudy and ORLIB bqp formats) and
//! model/result serialization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{IsingModel, QuadraticProblem, QuboProblem, SpinState, WeightedGraph};

/// One row of the results CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultRecord {
    pub instance: String,
    pub method: String,
    pub objective: f64,
    pub rank: usize,
    pub seconds: f64,
    pub seed: u64,
    /// Free-form method parameters, rendered as `k=v` pairs joined by ';'.
    pub params: Vec<(String, String)>,
}

fn tokens(line: &str) -> Vec<&str> {
    line.split_whitespace().collect()
}

/// Lines of `text`, skipping blanks and '#' comments, with 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize) -> Result<T> {
    tok.parse().map_err(|_| Error::Parse {
        line,
        message: format!("cannot parse '{tok}'"),
    })
}

/// Parse a rudy/Gset graph: "n m" header then m lines "a b w", 1-based.
pub fn parse_gset(text: &str) -> Result<WeightedGraph> {
    let mut lines = content_lines(text);
    let (hline, header) = lines.next().ok_or(Error::Parse {
        line: 0,
        message: "empty file".into(),
    })?;
    let toks = tokens(header);
    if toks.len() != 2 {
        return Err(Error::Parse {
            line: hline,
            message: "expected header 'n m'".into(),
        });
    }
    let n: usize = parse_num(toks[0], hline)?;
    let m: usize = parse_num(toks[1], hline)?;

    let mut edges = Vec::with_capacity(m);
    for _ in 0..m {
        let (lno, line) = lines.next().ok_or(Error::Parse {
            line: 0,
            message: "unexpected end of file".into(),
        })?;
        let toks = tokens(line);
        if toks.len() != 3 {
            return Err(Error::Parse {
                line: lno,
                message: "expected 'a b w'".into(),
            });
        }
        let a: usize = parse_num(toks[0], lno)?;
        let b: usize = parse_num(toks[1], lno)?;
        let w: f64 = parse_num(toks[2], lno)?;
        if a < 1 || b < 1 || a > n || b > n || a == b {
            return Err(Error::Parse {
                line: lno,
                message: format!("edge ({a},{b}) out of range for n = {n}"),
            });
        }
        let (a, b) = (a - 1, b - 1);
        edges.push((a.min(b), a.max(b), w));
    }
    // WeightedGraph::new rejects duplicates.
    WeightedGraph::new(n, edges).map_err(|e| Error::Parse {
        line: 0,
        message: e.to_string(),
    })
}

/// Parse an ORLIB bqp file: instance count, then per instance "n nnz"
/// followed by nnz triples "i j q" (1-based). Diagonal entries feed the
/// linear term b (y_i² = y_i on {0,1}).
pub fn parse_beasley(text: &str) -> Result<Vec<QuboProblem>> {
    let mut lines = content_lines(text);
    let (hline, header) = lines.next().ok_or(Error::Parse {
        line: 0,
        message: "empty file".into(),
    })?;
    let count: usize = parse_num(tokens(header).first().ok_or(Error::Parse {
        line: hline,
        message: "missing instance count".into(),
    })?, hline)?;

    let mut problems = Vec::with_capacity(count);
    for _ in 0..count {
        let (lno, line) = lines.next().ok_or(Error::Parse {
            line: 0,
            message: "truncated file: missing instance header".into(),
        })?;
        let toks = tokens(line);
        if toks.len() != 2 {
            return Err(Error::Parse {
                line: lno,
                message: "expected instance header 'n nnz'".into(),
            });
        }
        let n: usize = parse_num(toks[0], lno)?;
        let nnz: usize = parse_num(toks[1], lno)?;
        let mut b = vec![0.0; n];
        let mut q_off = Vec::new();
        for _ in 0..nnz {
            let (lno, line) = lines.next().ok_or(Error::Parse {
                line: 0,
                message: "truncated file: missing matrix entry".into(),
            })?;
            let toks = tokens(line);
            if toks.len() != 3 {
                return Err(Error::Parse {
                    line: lno,
                    message: "expected triple 'i j q'".into(),
                });
            }
            let i: usize = parse_num(toks[0], lno)?;
            let j: usize = parse_num(toks[1], lno)?;
            let q: f64 = parse_num(toks[2], lno)?;
            if i < 1 || j < 1 || i > n || j > n {
                return Err(Error::Parse {
                    line: lno,
                    message: format!("entry ({i},{j}) out of range for n = {n}"),
                });
            }
            let (i, j) = (i - 1, j - 1);
            if i == j {
                b[i] += q;
            } else {
                q_off.push((i.min(j), i.max(j), q));
            }
        }
        problems.push(
            QuboProblem::from_parts(n, vec![0.0; n], q_off, b).map_err(|e| Error::Parse {
                line: lno,
                message: e.to_string(),
            })?,
        );
    }
    Ok(problems)
}

/// Max-cut as a ±1 quadratic form: cut(x) = constant + xᵀAx with
/// A_ab = −w_ab/4 off-diagonal and constant = Σw/2.
pub fn graph_to_maxcut_quadratic(g: &WeightedGraph) -> (QuadraticProblem, f64) {
    let off = g
        .edges()
        .iter()
        .map(|&(a, b, w)| (a, b, -w / 4.0))
        .collect();
    let p = QuadraticProblem::from_parts(g.n(), vec![0.0; g.n()], off)
        .expect("valid by construction");
    (p, g.total_weight() / 2.0)
}

/// Directly counted cut weight Σ w_ab (1 − x_a x_b) / 2.
pub fn cut_value(g: &WeightedGraph, x: &SpinState) -> Result<f64> {
    if x.len() != g.n() {
        return Err(Error::DimensionMismatch {
            expected: g.n(),
            got: x.len(),
        });
    }
    Ok(g.edges()
        .iter()
        .map(|&(a, b, w)| w * (1.0 - f64::from(x.get(a) * x.get(b))) / 2.0)
        .sum())
}

/// CSV columns: instance,method,objective,rank,seconds,seed,params.
pub fn write_results_csv(records: &[ResultRecord]) -> String {
    let mut out = String::from("instance,method,objective,rank,seconds,seed,params\n");
    for r in records {
        let params = r
            .params
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";");
        out.push_str(&format!(
            "{},{},{},{},{:.6},{},{}\n",
            r.instance, r.method, r.objective, r.rank, r.seconds, r.seed, params
        ));
    }
    out
}

#[derive(Serialize, Deserialize)]
struct IsingJson {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
    h: Vec<f64>,
}

/// {"n":int,"edges":[[a,b,J],...],"h":[...]}.
pub fn ising_to_json(m: &IsingModel) -> String {
    let doc = IsingJson {
        n: m.n(),
        edges: m.graph().edges().to_vec(),
        h: m.h().to_vec(),
    };
    serde_json::to_string(&doc).expect("serializable")
}

pub fn ising_from_json(text: &str) -> Result<IsingModel> {
    let doc: IsingJson = serde_json::from_str(text)?;
    IsingModel::new(WeightedGraph::new(doc.n, doc.edges)?, doc.h)
}
