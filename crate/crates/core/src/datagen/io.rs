//! Columnar CSV persistence for datasets plus a JSON sidecar.
//!
//! The CSV header is `s1..sd, x1..xd, segment, u1..uk`; groups that are
//! absent from the dataset are omitted. One row per time point.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::datagen::{Dataset, DatasetMeta};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Sidecar holding the generation spec and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSidecar {
    pub seed: u64,
    pub meta: DatasetMeta,
}

pub fn write_csv<W: Write>(dataset: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = Vec::new();
    if let Some(s) = &dataset.s_true {
        header.extend((1..=s.cols()).map(|i| format!("s{i}")));
    }
    header.extend((1..=dataset.x.cols()).map(|i| format!("x{i}")));
    if dataset.segments.is_some() {
        header.push("segment".to_string());
    }
    if let Some(a) = &dataset.aux {
        header.extend((1..=a.cols()).map(|i| format!("u{i}")));
    }
    w.write_record(&header)?;
    let mut record: Vec<String> = Vec::with_capacity(header.len());
    for t in 0..dataset.len() {
        record.clear();
        if let Some(s) = &dataset.s_true {
            record.extend(s.row(t).iter().map(f64::to_string));
        }
        record.extend(dataset.x.row(t).iter().map(f64::to_string));
        if let Some(seg) = &dataset.segments {
            record.push(seg[t].to_string());
        }
        if let Some(a) = &dataset.aux {
            record.extend(a.row(t).iter().map(f64::to_string));
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, PartialEq)]
enum Group {
    S,
    X,
    Segment,
    U,
}

/// Parses a column name into its group and 1-based index.
fn classify(name: &str) -> Result<(Group, usize)> {
    if name == "segment" {
        return Ok((Group::Segment, 1));
    }
    let (group, rest) = match name.split_at_checked(1) {
        Some(("s", r)) => (Group::S, r),
        Some(("x", r)) => (Group::X, r),
        Some(("u", r)) => (Group::U, r),
        _ => return Err(Error::Parse(format!("unknown column {name:?}"))),
    };
    let idx: usize = rest
        .parse()
        .map_err(|_| Error::Parse(format!("bad column index in {name:?}")))?;
    if idx == 0 || rest.starts_with('0') {
        return Err(Error::Parse(format!("bad column index in {name:?}")));
    }
    Ok((group, idx))
}

/// Parses a dataset CSV and validates it.
pub fn read_csv<R: Read>(input: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers()?.clone();
    let mut groups = Vec::with_capacity(header.len());
    let mut counts = [0usize; 4];
    let order = [Group::S, Group::X, Group::Segment, Group::U];
    let mut stage = 0;
    for name in header.iter() {
        let (g, idx) = classify(name.trim())?;
        let gi = order.iter().position(|&o| o == g).expect("known group");
        if gi < stage {
            return Err(Error::Parse(format!("column {name:?} out of order")));
        }
        stage = gi;
        counts[gi] += 1;
        if idx != counts[gi] || (g == Group::Segment && counts[gi] > 1) {
            return Err(Error::Parse(format!("column {name:?} out of sequence")));
        }
        groups.push(g);
    }
    let [n_s, n_x, n_seg, n_u] = counts;
    if n_x == 0 {
        return Err(Error::Parse("no observation columns".into()));
    }

    let mut s = Vec::new();
    let mut x = Vec::new();
    let mut seg = Vec::new();
    let mut u = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != groups.len() {
            return Err(Error::Parse(format!(
                "row {} has {} fields, expected {}",
                line + 1,
                rec.len(),
                groups.len()
            )));
        }
        for (field, &g) in rec.iter().zip(&groups) {
            let field = field.trim();
            if g == Group::Segment {
                let v: usize = field
                    .parse()
                    .map_err(|_| Error::Parse(format!("row {}: bad segment label {field:?}", line + 1)))?;
                seg.push(v);
                continue;
            }
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Parse(format!("row {}: bad number {field:?}", line + 1)))?;
            if !v.is_finite() {
                return Err(Error::Parse(format!("row {}: non-finite value", line + 1)));
            }
            match g {
                Group::S => s.push(v),
                Group::X => x.push(v),
                Group::U => u.push(v),
                Group::Segment => unreachable!(),
            }
        }
    }
    let t = x.len() / n_x;
    if t == 0 {
        return Err(Error::Parse("no data rows".into()));
    }
    let dataset = Dataset {
        x: Tensor::from_vec(t, n_x, x)?,
        s_true: if n_s > 0 {
            Some(Tensor::from_vec(t, n_s, s)?)
        } else {
            None
        },
        segments: if n_seg > 0 { Some(seg) } else { None },
        aux: if n_u > 0 {
            Some(Tensor::from_vec(t, n_u, u)?)
        } else {
            None
        },
        seed: 0,
        meta: DatasetMeta::default(),
    };
    dataset.validate()?;
    Ok(dataset)
}

pub fn sidecar(dataset: &Dataset) -> DatasetSidecar {
    DatasetSidecar {
        seed: dataset.seed,
        meta: dataset.meta.clone(),
    }
}

pub fn parse_sidecar(s: &str) -> Result<DatasetSidecar> {
    Ok(serde_json::from_str(s)?)
}
