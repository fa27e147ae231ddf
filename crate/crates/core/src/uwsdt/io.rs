//! Directory format: `<rel>.template.csv` per relation plus `c.csv`, `f.csv` and `w.csv`.
//!
//! Template rows carry no tuple id column, so tuple ids are the 1-based row
//! positions; saving renumbers sparse ids accordingly.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::{Cell, Uwsdt};
use crate::error::{Error, Result};
use crate::model::{Cid, FieldId, Lwid, RelationSchema, Schema};
use crate::value::{Value, PLACEHOLDER_TEXT};

const TEMPLATE_SUFFIX: &str = ".template.csv";

/// Decimal text with at least nine significant digits that parses back to `p` exactly.
pub(crate) fn format_pr(p: f64) -> String {
    let mut s = format!("{p}");
    let digits = s.trim_start_matches(['0', '.', '-']).chars().filter(char::is_ascii_digit).count();
    if digits < 9 {
        if !s.contains('.') {
            s.push('.');
        }
        s.extend(std::iter::repeat('0').take(9 - digits));
    }
    s
}

pub fn save_dir(u: &Uwsdt, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut renumber: HashMap<(&str, u32), u32> = HashMap::new();
    for (rel, t) in u.templates() {
        let rs = u.schema().require(rel)?;
        let mut w = csv::Writer::from_path(dir.join(format!("{rel}{TEMPLATE_SUFFIX}")))?;
        w.write_record(rs.attrs.iter().map(|a| &**a))?;
        for (k, (tid, cells)) in t.rows().iter().enumerate() {
            renumber.insert((rel, *tid), k as u32 + 1);
            w.write_record(cells.iter().map(|c| match c {
                Cell::Placeholder => PLACEHOLDER_TEXT.to_string(),
                Cell::Const(v) => v.encode(),
            }))?;
        }
        w.flush()?;
    }
    let tid = |f: &FieldId| renumber[&(&*f.rel, f.tid)].to_string();
    let mut w = csv::Writer::from_path(dir.join("c.csv"))?;
    w.write_record(["rel", "tid", "attr", "lwid", "val"])?;
    for (f, lwid, v) in u.c_rows() {
        w.write_record([f.rel.to_string(), tid(&f), f.attr.to_string(), lwid.to_string(), v.encode()])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("f.csv"))?;
    w.write_record(["rel", "tid", "attr", "cid"])?;
    for (f, cid) in u.f_rows() {
        w.write_record([f.rel.to_string(), tid(&f), f.attr.to_string(), cid.to_string()])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("w.csv"))?;
    w.write_record(["cid", "lwid", "pr"])?;
    for (cid, lwid, pr) in u.w_rows() {
        w.write_record([cid.to_string(), lwid.to_string(), format_pr(pr)])?;
    }
    w.flush()?;
    Ok(())
}

fn read_table(path: &Path, header: &[&str]) -> Result<Vec<csv::StringRecord>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut r = csv::Reader::from_path(path)?;
    let h = r.headers()?.clone();
    if h.iter().collect::<Vec<_>>() != header {
        return Err(Error::validation(format!("{}: expected header {}", path.display(), header.join(","))));
    }
    Ok(r.records().collect::<std::result::Result<_, _>>()?)
}

fn num<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, path: &str) -> Result<T> {
    rec[i].trim().parse().map_err(|_| {
        let line = rec.position().map_or(0, |p| p.line());
        Error::validation(format!("{path} line {line}: bad number '{}'", &rec[i]))
    })
}

pub fn load_dir(dir: &Path) -> Result<Uwsdt> {
    let mut names: Vec<(String, std::path::PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let file = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if let Some(rel) = file.strip_suffix(TEMPLATE_SUFFIX) {
            names.push((rel.to_string(), path.clone()));
        }
    }
    if names.is_empty() {
        return Err(Error::validation(format!("{} holds no template files", dir.display())));
    }
    names.sort();
    let mut relations = Vec::new();
    let mut templates = Vec::new();
    for (rel, path) in &names {
        let mut r = csv::Reader::from_path(path)?;
        let attrs: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let attr_refs: Vec<&str> = attrs.iter().map(String::as_str).collect();
        let mut rows = Vec::new();
        for (k, rec) in r.records().enumerate() {
            let rec = rec?;
            let cells = rec
                .iter()
                .map(|c| if c == PLACEHOLDER_TEXT { Cell::Placeholder } else { Cell::Const(Value::decode(c)) })
                .collect();
            rows.push((k as u32 + 1, cells));
        }
        relations.push(RelationSchema::new(rel, &attr_refs, rows.len()));
        templates.push((rel.clone(), rows));
    }
    let schema = Schema::new(relations)?;
    let mut c = Vec::new();
    for rec in read_table(&dir.join("c.csv"), &["rel", "tid", "attr", "lwid", "val"])? {
        let f = FieldId::new(&rec[0], num(&rec, 1, "c.csv")?, &rec[2]);
        c.push((f, num::<Lwid>(&rec, 3, "c.csv")?, Value::decode(&rec[4])));
    }
    let mut f = Vec::new();
    for rec in read_table(&dir.join("f.csv"), &["rel", "tid", "attr", "cid"])? {
        f.push((FieldId::new(&rec[0], num(&rec, 1, "f.csv")?, &rec[2]), num::<Cid>(&rec, 3, "f.csv")?));
    }
    let mut w = Vec::new();
    for rec in read_table(&dir.join("w.csv"), &["cid", "lwid", "pr"])? {
        w.push((num::<Cid>(&rec, 0, "w.csv")?, num::<Lwid>(&rec, 1, "w.csv")?, num::<f64>(&rec, 2, "w.csv")?));
    }
    Uwsdt::from_tables(schema, templates, c, f, w)
}
