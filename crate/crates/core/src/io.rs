//! File formats: datasets and graphs as CSV, fitted models as JSON.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, Array3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{Dataset, Standardization};
use crate::error::{Result, RhinoError};
use crate::graph::{SummaryGraph, TemporalGraph};
use crate::nn::ParamStore;
use crate::trainer::{ProgressRecord, Rhino, TrainConfig, TrainedModel};

/// Highest model file version this build reads.
pub const MODEL_FORMAT_VERSION: u32 = 1;

fn parse_err(line: u64, message: impl Into<String>) -> RhinoError {
    RhinoError::Parse {
        line,
        message: message.into(),
    }
}

/// Writes `series,t,<names...>` rows with 17 significant digits.
pub fn write_dataset<W: Write>(ds: &Dataset<f64>, out: W) -> Result<()> {
    ds.validate()?;
    let mut w = BufWriter::new(out);
    write!(w, "series,t")?;
    for n in &ds.names {
        write!(w, ",{n}")?;
    }
    writeln!(w)?;
    for (s, series) in ds.series.iter().enumerate() {
        for (t, row) in series.rows().into_iter().enumerate() {
            write!(w, "{s},{t}")?;
            for v in row {
                write!(w, ",{v:.16e}")?;
            }
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset(ds: &Dataset<f64>, path: &Path) -> Result<()> {
    write_dataset(ds, File::create(path)?)
}

/// Parses a dataset; rows may come in any order but every series needs
/// contiguous time indices from 0.
pub fn read_dataset<R: Read>(input: R) -> Result<Dataset<f64>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let header = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if header.len() < 3 || &header[0] != "series" || &header[1] != "t" {
        return Err(parse_err(1, "header must be `series,t,<variable names>`"));
    }
    let names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
    let d = names.len();
    let mut rows: BTreeMap<u64, BTreeMap<u64, (u64, Vec<f64>)>> = BTreeMap::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != d + 2 {
            return Err(parse_err(line, format!("expected {} fields, found {}", d + 2, rec.len())));
        }
        let index = |i: usize, what: &str| -> Result<u64> {
            rec[i]
                .parse::<u64>()
                .map_err(|_| parse_err(line, format!("{what} `{}` is not a non-negative integer", &rec[i])))
        };
        let (s, t) = (index(0, "series")?, index(1, "t")?);
        let mut values = Vec::with_capacity(d);
        for (i, cell) in rec.iter().skip(2).enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(line, format!("value `{cell}` of {} is not a number", names[i])))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("value of {} is not finite", names[i])));
            }
            values.push(v);
        }
        if let Some((first, _)) = rows.entry(s).or_default().insert(t, (line, values)) {
            return Err(parse_err(line, format!("duplicate row for series {s}, t {t} (first at line {first})")));
        }
    }
    if rows.is_empty() {
        return Err(parse_err(1, "no data rows"));
    }
    let mut series = Vec::with_capacity(rows.len());
    for (s, steps) in rows {
        for (expected, (&t, (line, _))) in steps.iter().enumerate() {
            if t != expected as u64 {
                return Err(parse_err(*line, format!("series {s} jumps to t {t}; t {expected} is missing")));
            }
        }
        let flat: Vec<f64> = steps.into_values().flat_map(|(_, v)| v).collect();
        series.push(Array2::from_shape_vec((flat.len() / d, d), flat).expect("rectangular rows"));
    }
    Dataset::new(names, series)
}

pub fn load_dataset(path: &Path) -> Result<Dataset<f64>> {
    read_dataset(File::open(path)?)
}

fn graph_header(lines: &mut impl Iterator<Item = (u64, String)>, kind: &str) -> Result<BTreeMap<String, usize>> {
    let (line, text) = lines.next().ok_or_else(|| parse_err(1, "empty graph file"))?;
    let rest = text
        .strip_prefix(&format!("# {kind}"))
        .ok_or_else(|| parse_err(line, format!("expected a `# {kind} ...` header")))?;
    let mut fields = BTreeMap::new();
    for item in rest.split_whitespace() {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| parse_err(line, format!("malformed header item `{item}`")))?;
        let v = v
            .parse()
            .map_err(|_| parse_err(line, format!("header value `{v}` is not an integer")))?;
        fields.insert(k.to_string(), v);
    }
    Ok(fields)
}

fn numbered_lines<R: Read>(input: R) -> impl Iterator<Item = (u64, String)> {
    BufReader::new(input)
        .lines()
        .map_while(|l| l.ok())
        .enumerate()
        .map(|(i, l)| (i as u64 + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
}

/// Dense `tau,src,dst,value` listing of every entry.
pub fn write_temporal_scores<W: Write>(scores: &Array3<f64>, out: W) -> Result<()> {
    let (k1, d, _) = scores.dim();
    let mut w = BufWriter::new(out);
    writeln!(w, "# temporal nodes={d} max_lag={}", k1.saturating_sub(1))?;
    writeln!(w, "tau,src,dst,value")?;
    for ((tau, i, j), v) in scores.indexed_iter() {
        writeln!(w, "{tau},{i},{j},{v}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_graph<W: Write>(g: &TemporalGraph, out: W) -> Result<()> {
    write_temporal_scores(&g.to_real(), out)
}

/// Reads a temporal listing; absent entries are zero.
pub fn read_temporal_scores<R: Read>(input: R) -> Result<Array3<f64>> {
    let mut lines = numbered_lines(input);
    let h = graph_header(&mut lines, "temporal")?;
    let (d, k) = match (h.get("nodes"), h.get("max_lag")) {
        (Some(&d), Some(&k)) if d > 0 => (d, k),
        _ => return Err(parse_err(1, "header needs nodes=<D> and max_lag=<K>")),
    };
    let mut out = Array3::zeros((k + 1, d, d));
    for (line, text) in lines {
        if text.trim() == "tau,src,dst,value" {
            continue;
        }
        let f: Vec<&str> = text.split(',').map(str::trim).collect();
        if f.len() != 4 {
            return Err(parse_err(line, "expected `tau,src,dst,value`"));
        }
        let idx = |s: &str, lim: usize| -> Result<usize> {
            match s.parse::<usize>() {
                Ok(v) if v < lim => Ok(v),
                _ => Err(parse_err(line, format!("index `{s}` out of range"))),
            }
        };
        let (tau, i, j) = (idx(f[0], k + 1)?, idx(f[1], d)?, idx(f[2], d)?);
        let v: f64 = f[3]
            .parse()
            .map_err(|_| parse_err(line, format!("value `{}` is not a number", f[3])))?;
        if !(0.0..=1.0).contains(&v) {
            return Err(parse_err(line, format!("value {v} outside [0, 1]")));
        }
        out[[tau, i, j]] = v;
    }
    Ok(out)
}

/// Reads a temporal listing, keeping entries above one half.
pub fn read_graph<R: Read>(input: R) -> Result<TemporalGraph> {
    let scores = read_temporal_scores(input)?;
    TemporalGraph::from_adjacency(scores.mapv(|v| u8::from(v > 0.5)))
}

pub fn write_summary<W: Write>(g: &SummaryGraph<f64>, out: W) -> Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "# summary nodes={}", g.num_nodes())?;
    writeln!(w, "src,dst,value")?;
    for ((i, j), v) in g.adjacency.indexed_iter() {
        writeln!(w, "{i},{j},{v}")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct Tensor {
    name: String,
    shape: [usize; 2],
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    config: TrainConfig,
    names: Vec<String>,
    standardization: Standardization,
    model: Rhino,
    params: Vec<Tensor>,
    alpha: f64,
    rho: f64,
    final_h: f64,
    converged: bool,
    log: Vec<ProgressRecord>,
    log_sha256: String,
}

fn log_digest(log: &[ProgressRecord]) -> Result<String> {
    let mut h = Sha256::new();
    for rec in log {
        h.update(serde_json::to_string(rec)?.as_bytes());
        h.update(b"\n");
    }
    Ok(hex::encode(h.finalize()))
}

pub fn write_model<W: Write>(m: &TrainedModel<f64>, out: W) -> Result<()> {
    let file = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        config: m.config.clone(),
        names: m.names.clone(),
        standardization: m.standardization.clone(),
        model: m.model.clone(),
        params: m
            .store
            .iter()
            .map(|(name, v)| Tensor {
                name: name.to_string(),
                shape: [v.nrows(), v.ncols()],
                data: v.iter().copied().collect(),
            })
            .collect(),
        alpha: m.alpha,
        rho: m.rho,
        final_h: m.final_h,
        converged: m.converged,
        log: m.log.clone(),
        log_sha256: log_digest(&m.log)?,
    };
    let mut w = BufWriter::new(out);
    serde_json::to_writer_pretty(&mut w, &file)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn save_model(m: &TrainedModel<f64>, path: &Path) -> Result<()> {
    write_model(m, File::create(path)?)
}

pub fn read_model<R: Read>(input: R) -> Result<TrainedModel<f64>> {
    let value: serde_json::Value = serde_json::from_reader(BufReader::new(input))?;
    let found = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| RhinoError::Config("model file has no format_version".into()))?;
    if found > MODEL_FORMAT_VERSION as u64 {
        return Err(RhinoError::Version {
            found: found.min(u32::MAX as u64) as u32,
            supported: MODEL_FORMAT_VERSION,
        });
    }
    let file: ModelFile = serde_json::from_value(value)?;
    let d = file.names.len();
    // Rebuild the layout from the stored config to validate the tensors.
    let mut reference = ParamStore::<f64>::new();
    let rebuilt = Rhino::new(&mut reference, &file.config, d, &mut ChaCha8Rng::seed_from_u64(0))?;
    if rebuilt != file.model || reference.len() != file.params.len() {
        return Err(RhinoError::Config("model structure does not match its config".into()));
    }
    let mut store = ParamStore::new();
    for ((name, expected), t) in reference.iter().zip(file.params) {
        if name != t.name || expected.dim() != (t.shape[0], t.shape[1]) {
            return Err(RhinoError::Config(format!("parameter `{}` does not match the model layout", t.name)));
        }
        let v = Array2::from_shape_vec((t.shape[0], t.shape[1]), t.data)
            .map_err(|_| RhinoError::Config(format!("parameter `{}` has the wrong number of values", t.name)))?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(RhinoError::Numeric(format!("parameter `{}` has non-finite values", t.name)));
        }
        store.add(t.name, v);
    }
    if log_digest(&file.log)? != file.log_sha256 {
        return Err(RhinoError::Config("training log digest mismatch".into()));
    }
    if file.standardization.mean.len() != d || file.standardization.std.len() != d {
        return Err(RhinoError::Config("standardization does not match the variable count".into()));
    }
    Ok(TrainedModel {
        config: file.config,
        model: file.model,
        store,
        standardization: file.standardization,
        names: file.names,
        alpha: file.alpha,
        rho: file.rho,
        log: file.log,
        final_h: file.final_h,
        converged: file.converged,
    })
}

pub fn load_model(path: &Path) -> Result<TrainedModel<f64>> {
    read_model(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn hand_written_dataset() {
        let text = "series,t,a,b\n0,1,3.0,4.0\n0,0,1.0,2.0\n0,2,5.0,6.0\n";
        let ds = read_dataset(text.as_bytes()).unwrap();
        assert_eq!(ds.names, vec!["a", "b"]);
        assert_eq!(ds.series[0], ndarray::array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
    }

    #[test]
    fn dataset_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let series = (0..3)
            .map(|_| Array2::from_shape_fn((7, 4), |_| rng.random::<f64>() * 1e3 - 500.0))
            .collect();
        let ds = Dataset::new(Dataset::<f64>::default_names(4), series).unwrap();
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        assert_eq!(read_dataset(buf.as_slice()).unwrap(), ds);
    }

    #[test]
    fn dataset_errors_name_the_line() {
        let gap = "series,t,a\n0,0,1.0\n0,2,2.0\n";
        match read_dataset(gap.as_bytes()) {
            Err(RhinoError::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("t 1 is missing"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let bad = "series,t,a\n0,0,1.0\n0,1,x\n";
        assert!(matches!(read_dataset(bad.as_bytes()), Err(RhinoError::Parse { line: 3, .. })));
        let dup = "series,t,a\n0,0,1.0\n0,0,2.0\n";
        assert!(matches!(read_dataset(dup.as_bytes()), Err(RhinoError::Parse { line: 3, .. })));
        let ragged = "series,t,a,b\n0,0,1.0,2.0\n0,1,2.0\n";
        assert!(matches!(read_dataset(ragged.as_bytes()), Err(RhinoError::Parse { line: 3, .. })));
    }

    #[test]
    fn graph_round_trip() {
        let mut g = TemporalGraph::empty(3, 2);
        g.set_edge(0, 0, 2, true).unwrap();
        g.set_edge(2, 1, 1, true).unwrap();
        let mut buf = Vec::new();
        write_graph(&g, &mut buf).unwrap();
        assert_eq!(read_graph(buf.as_slice()).unwrap(), g);
        let scores = Array3::from_shape_fn((2, 2, 2), |(t, i, j)| (t * 4 + i * 2 + j) as f64 / 7.3);
        let mut buf = Vec::new();
        write_temporal_scores(&scores, &mut buf).unwrap();
        assert_eq!(read_temporal_scores(buf.as_slice()).unwrap(), scores);
    }

    #[test]
    fn graph_parse_errors() {
        assert!(read_graph("tau,src,dst,value\n".as_bytes()).is_err());
        let out_of_range = "# temporal nodes=2 max_lag=1\ntau,src,dst,value\n0,0,5,1\n";
        assert!(matches!(read_graph(out_of_range.as_bytes()), Err(RhinoError::Parse { line: 3, .. })));
    }
}
