//! Fixed-format MPS export and import.
//!
//! Columns are named `C0000000`, `C0000001`, … and rows `R0000000`, … in
//! catalog and constraint order, so names always fit the 8-character fields.
//! Binary columns are written as `BV` bounds. Numbers are written in at most
//! 12 characters, choosing the closest representable rendering.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

use super::{Family, LinearConstraint, MilpInstance, Sense, VarCatalog, VarKind, VarRole};

const OBJ_ROW: &str = "COST";

pub fn column_name(idx: usize) -> String {
    format!("C{idx:07}")
}

pub fn row_name(idx: usize) -> String {
    format!("R{idx:07}")
}

/// Renders `x` in at most 12 characters with the smallest rounding error.
fn num12(x: f64) -> String {
    let x = if x == 0.0 { 0.0 } else { x };
    let plain = format!("{x}");
    if plain.len() <= 12 {
        return plain;
    }
    let sci = format!("{x:e}");
    if sci.len() <= 12 {
        return sci;
    }
    let mut best: Option<(f64, String)> = None;
    let mut consider = |s: String| {
        if s.len() <= 12 {
            let err = (s.parse::<f64>().unwrap_or(f64::INFINITY) - x).abs();
            if best.as_ref().map_or(true, |(e, _)| err < *e) {
                best = Some((err, s));
            }
        }
    };
    for d in 0..=11 {
        consider(format!("{x:.d$}"));
        consider(format!("{x:.d$e}"));
    }
    best.map(|b| b.1).unwrap_or(sci)
}

fn field_line(out: &mut impl Write, f1: &str, f2: &str, f3: &str, f4: &str, f5: &str, f6: &str) -> std::io::Result<()> {
    let line = format!(" {f1:<2} {f2:<8}  {f3:<8}  {f4:<12}   {f5:<8}  {f6}");
    writeln!(out, "{}", line.trim_end())
}

/// Writes `instance` as fixed-format MPS.
pub fn export_mps(instance: &MilpInstance, out: &mut impl Write) -> Result<()> {
    write_mps(instance, out).map_err(Error::from)
}

fn write_mps(instance: &MilpInstance, out: &mut impl Write) -> std::io::Result<()> {
    let n = instance.catalog.len();
    writeln!(
        out,
        "* floodguard model: {} columns ({} binary), {} rows",
        n,
        instance.catalog.count(VarKind::Binary),
        instance.constraints.len()
    )?;
    writeln!(out, "NAME          FLOODGRD")?;
    writeln!(out, "ROWS")?;
    field_line(out, "N", OBJ_ROW, "", "", "", "")?;
    for (r, c) in instance.constraints.iter().enumerate() {
        let s = match c.sense {
            Sense::Le => "L",
            Sense::Ge => "G",
            Sense::Eq => "E",
        };
        field_line(out, s, &row_name(r), "", "", "", "")?;
    }

    let mut columns: Vec<Vec<(String, f64)>> = vec![Vec::new(); n];
    for (v, c) in &instance.objective {
        columns[*v].push((OBJ_ROW.to_string(), *c));
    }
    for (r, con) in instance.constraints.iter().enumerate() {
        for (v, c) in &con.terms {
            columns[*v].push((row_name(r), *c));
        }
    }
    writeln!(out, "COLUMNS")?;
    for (v, entries) in columns.iter().enumerate() {
        let col = column_name(v);
        if entries.is_empty() {
            field_line(out, "", &col, OBJ_ROW, "0", "", "")?;
            continue;
        }
        for pair in entries.chunks(2) {
            let (r1, c1) = &pair[0];
            match pair.get(1) {
                Some((r2, c2)) => field_line(out, "", &col, r1, &num12(*c1), r2, &num12(*c2))?,
                None => field_line(out, "", &col, r1, &num12(*c1), "", "")?,
            }
        }
    }

    writeln!(out, "RHS")?;
    let rhs: Vec<(String, f64)> = instance
        .constraints
        .iter()
        .enumerate()
        .filter(|(_, c)| c.rhs != 0.0)
        .map(|(r, c)| (row_name(r), c.rhs))
        .collect();
    for pair in rhs.chunks(2) {
        let (r1, v1) = &pair[0];
        match pair.get(1) {
            Some((r2, v2)) => field_line(out, "", "RHS", r1, &num12(*v1), r2, &num12(*v2))?,
            None => field_line(out, "", "RHS", r1, &num12(*v1), "", "")?,
        }
    }

    writeln!(out, "BOUNDS")?;
    for (v, e) in instance.catalog.entries().iter().enumerate() {
        let col = column_name(v);
        if e.kind == VarKind::Binary {
            field_line(out, "BV", "BND", &col, "", "", "")?;
            continue;
        }
        if e.lower == e.upper {
            field_line(out, "FX", "BND", &col, &num12(e.lower), "", "")?;
            continue;
        }
        if e.lower == f64::NEG_INFINITY {
            field_line(out, "MI", "BND", &col, "", "", "")?;
        } else if e.lower != 0.0 {
            field_line(out, "LO", "BND", &col, &num12(e.lower), "", "")?;
        }
        if e.upper.is_finite() {
            field_line(out, "UP", "BND", &col, &num12(e.upper), "", "")?;
        }
    }
    writeln!(out, "ENDATA")?;
    Ok(())
}

#[derive(PartialEq)]
enum Section {
    None,
    Rows,
    Columns,
    Rhs,
    Bounds,
}

fn parse_num(tok: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|_| Error::Parse(format!("MPS line {line}: bad number {tok:?}")))
}

/// Reads an MPS file (fixed or free layout without spaces in names) back
/// into an instance with generic variable roles.
pub fn import_mps(input: impl BufRead) -> Result<MilpInstance> {
    let mut section = Section::None;
    let mut obj_row: Option<String> = None;
    let mut rows: Vec<(String, Sense)> = Vec::new();
    let mut row_idx: HashMap<String, usize> = HashMap::new();
    let mut cols: Vec<String> = Vec::new();
    let mut col_idx: HashMap<String, usize> = HashMap::new();
    let mut integer_cols: Vec<bool> = Vec::new();
    let mut lower: Vec<f64> = Vec::new();
    let mut upper: Vec<f64> = Vec::new();
    let mut terms: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut objective: Vec<(usize, f64)> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    let mut binary: Vec<bool> = Vec::new();
    let mut in_integer_block = false;

    for (ln, line) in input.lines().enumerate() {
        let ln = ln + 1;
        let line = line?;
        if line.starts_with('*') || line.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if !line.starts_with(' ') && !line.starts_with('\t') {
            section = match toks[0] {
                "NAME" => Section::None,
                "ROWS" => Section::Rows,
                "COLUMNS" => Section::Columns,
                "RHS" => Section::Rhs,
                "BOUNDS" => Section::Bounds,
                "ENDATA" => break,
                other => {
                    return Err(Error::Parse(format!("MPS line {ln}: unsupported section {other}")));
                }
            };
            continue;
        }
        match section {
            Section::Rows => {
                let [kind, name] = toks[..] else {
                    return Err(Error::Parse(format!("MPS line {ln}: malformed row")));
                };
                let sense = match kind {
                    "N" => {
                        if obj_row.is_none() {
                            obj_row = Some(name.to_string());
                        }
                        continue;
                    }
                    "L" => Sense::Le,
                    "G" => Sense::Ge,
                    "E" => Sense::Eq,
                    _ => return Err(Error::Parse(format!("MPS line {ln}: row type {kind}"))),
                };
                row_idx.insert(name.to_string(), rows.len());
                rows.push((name.to_string(), sense));
                terms.push(Vec::new());
                rhs.push(0.0);
            }
            Section::Columns => {
                if toks.len() >= 3 && toks[1] == "'MARKER'" {
                    in_integer_block = toks[2] == "'INTORG'";
                    continue;
                }
                if toks.len() != 3 && toks.len() != 5 {
                    return Err(Error::Parse(format!("MPS line {ln}: malformed column entry")));
                }
                let col = match col_idx.get(toks[0]) {
                    Some(c) => *c,
                    None => {
                        let c = cols.len();
                        col_idx.insert(toks[0].to_string(), c);
                        cols.push(toks[0].to_string());
                        integer_cols.push(in_integer_block);
                        lower.push(0.0);
                        upper.push(if in_integer_block { 1.0 } else { f64::INFINITY });
                        binary.push(false);
                        c
                    }
                };
                for pair in toks[1..].chunks(2) {
                    let v = parse_num(pair[1], ln)?;
                    if Some(pair[0]) == obj_row.as_deref() {
                        if v != 0.0 {
                            objective.push((col, v));
                        }
                    } else {
                        let r = *row_idx
                            .get(pair[0])
                            .ok_or_else(|| Error::Parse(format!("MPS line {ln}: unknown row {}", pair[0])))?;
                        terms[r].push((col, v));
                    }
                }
            }
            Section::Rhs => {
                if toks.len() != 3 && toks.len() != 5 {
                    return Err(Error::Parse(format!("MPS line {ln}: malformed rhs entry")));
                }
                for pair in toks[1..].chunks(2) {
                    if Some(pair[0]) == obj_row.as_deref() {
                        return Err(Error::Parse(format!("MPS line {ln}: objective constants are unsupported")));
                    }
                    let r = *row_idx
                        .get(pair[0])
                        .ok_or_else(|| Error::Parse(format!("MPS line {ln}: unknown row {}", pair[0])))?;
                    rhs[r] = parse_num(pair[1], ln)?;
                }
            }
            Section::Bounds => {
                if toks.len() < 3 {
                    return Err(Error::Parse(format!("MPS line {ln}: malformed bound")));
                }
                let c = *col_idx
                    .get(toks[2])
                    .ok_or_else(|| Error::Parse(format!("MPS line {ln}: unknown column {}", toks[2])))?;
                let val = || -> Result<f64> {
                    toks.get(3)
                        .ok_or_else(|| Error::Parse(format!("MPS line {ln}: bound value missing")))
                        .and_then(|t| parse_num(t, ln))
                };
                match toks[0] {
                    "BV" => {
                        binary[c] = true;
                        lower[c] = 0.0;
                        upper[c] = 1.0;
                    }
                    "LO" => lower[c] = val()?,
                    "UP" => upper[c] = val()?,
                    "FX" => {
                        let v = val()?;
                        lower[c] = v;
                        upper[c] = v;
                    }
                    "FR" => {
                        lower[c] = f64::NEG_INFINITY;
                        upper[c] = f64::INFINITY;
                    }
                    "MI" => lower[c] = f64::NEG_INFINITY,
                    "PL" => upper[c] = f64::INFINITY,
                    other => return Err(Error::Parse(format!("MPS line {ln}: bound type {other}"))),
                }
            }
            Section::None => {}
        }
    }

    let mut catalog = VarCatalog::new();
    for (j, name) in cols.iter().enumerate() {
        let is_bin = binary[j] || (integer_cols[j] && lower[j] == 0.0 && upper[j] == 1.0);
        if integer_cols[j] && !is_bin {
            return Err(Error::Parse(format!("column {name}: general integers are unsupported")));
        }
        let kind = if is_bin { VarKind::Binary } else { VarKind::Continuous };
        catalog.add(name.clone(), kind, lower[j], upper[j], VarRole::Generic { j })?;
    }
    let constraints = rows
        .into_iter()
        .zip(terms)
        .zip(rhs)
        .map(|(((name, sense), t), b)| LinearConstraint::new(name, t, sense, b, Family::Generic))
        .collect();
    let instance = MilpInstance {
        catalog,
        objective,
        constraints,
        big_m: Vec::new(),
        warnings: Vec::new(),
        structure: None,
    };
    instance.check()?;
    Ok(instance)
}
