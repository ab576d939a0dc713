//! File formats: FASTA for sequences, CSV for θ matrices and pmfs.
//!
//! CSV outputs may start with `# key=value` metadata lines; readers skip any
//! line beginning with `#`.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::exact::ThetaPmf;
use crate::sequence::{SequenceSet, ThetaMatrix};

pub fn write_metadata<W: Write>(mut w: W, meta: &[(String, String)]) -> Result<()> {
    for (k, v) in meta {
        writeln!(w, "# {k}={v}")?;
    }
    Ok(())
}

/// One record per leaf and gene, headed `>label gene=g`, 80 columns per line.
pub fn write_fasta<W: Write>(mut w: W, sets: &[SequenceSet]) -> Result<()> {
    for set in sets {
        for (label, seq) in set.labels.iter().zip(&set.seqs) {
            writeln!(w, ">{label} gene={}", set.gene)?;
            let s = seq.to_string();
            for chunk in s.as_bytes().chunks(80) {
                w.write_all(chunk)?;
                w.write_all(b"\n")?;
            }
            if s.is_empty() {
                w.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}

/// Header `gene,k,leaf,<label>...`; one row per gene and leaf.
pub fn write_theta_csv<W: Write>(mut w: W, mats: &[ThetaMatrix], meta: &[(String, String)]) -> Result<()> {
    write_metadata(&mut w, meta)?;
    let mut cw = csv::Writer::from_writer(w);
    let Some(first) = mats.first() else {
        cw.write_record(["gene", "k", "leaf"])?;
        cw.flush()?;
        return Ok(());
    };
    let mut header = vec!["gene".to_string(), "k".into(), "leaf".into()];
    header.extend(first.labels.iter().cloned());
    cw.write_record(&header)?;
    for (g, m) in mats.iter().enumerate() {
        if m.labels != first.labels {
            return Err(Error::Domain(format!("gene {g} has different leaf labels")));
        }
        for a in 0..m.n() {
            let mut row = vec![g.to_string(), m.k.to_string(), m.labels[a].clone()];
            row.extend(m.row(a).iter().map(|v| v.to_string()));
            cw.write_record(&row)?;
        }
    }
    cw.flush()?;
    Ok(())
}

pub fn read_theta_csv<R: Read>(r: R) -> Result<Vec<ThetaMatrix>> {
    let mut cr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(r);
    let header = cr.headers()?.clone();
    if header.len() < 4 || &header[0] != "gene" || &header[1] != "k" || &header[2] != "leaf" {
        return Err(Error::Parse("theta CSV header must be gene,k,leaf,<labels...>".into()));
    }
    let labels: Vec<String> = header.iter().skip(3).map(str::to_string).collect();
    let n = labels.len();
    let parse = |s: &str, what: &str| s.parse::<u64>().map_err(|_| Error::Parse(format!("bad {what} '{s}'")));
    let mut out = Vec::new();
    let mut rows: Vec<Vec<u32>> = Vec::new();
    let mut current: Option<(u64, u64)> = None;
    let finish = |cur: Option<(u64, u64)>, rows: &mut Vec<Vec<u32>>, out: &mut Vec<ThetaMatrix>| -> Result<()> {
        if let Some((g, k)) = cur {
            if rows.len() != n {
                return Err(Error::Parse(format!("gene {g} has {} rows, expected {n}", rows.len())));
            }
            out.push(ThetaMatrix::from_rows(k as usize, labels.clone(), std::mem::take(rows))?);
        }
        Ok(())
    };
    for rec in cr.records() {
        let rec = rec?;
        let g = parse(&rec[0], "gene")?;
        let k = parse(&rec[1], "k")?;
        if current.map(|c| c.0) != Some(g) {
            finish(current, &mut rows, &mut out)?;
            current = Some((g, k));
        } else if current.map(|c| c.1) != Some(k) {
            return Err(Error::Parse(format!("gene {g} changes k mid-matrix")));
        }
        let leaf = &rec[2];
        if labels.get(rows.len()).map(String::as_str) != Some(leaf) {
            return Err(Error::Parse(format!("gene {g}: expected row for leaf {:?}, found '{leaf}'", labels.get(rows.len()))));
        }
        let row = rec.iter().skip(3).map(|v| parse(v, "theta").map(|x| x as u32)).collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    finish(current, &mut rows, &mut out)?;
    if out.is_empty() {
        return Err(Error::Parse("theta CSV has no genes".into()));
    }
    Ok(out)
}

pub fn write_pmf_csv<W: Write>(mut w: W, pmf: &ThetaPmf, meta: &[(String, String)]) -> Result<()> {
    write_metadata(&mut w, meta)?;
    writeln!(w, "j,prob")?;
    for (j, p) in pmf.probs().iter().enumerate() {
        writeln!(w, "{j},{p:e}")?;
    }
    Ok(())
}
