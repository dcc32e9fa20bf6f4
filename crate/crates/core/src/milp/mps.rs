//! Free-format MPS export and import.
//!
//! Numbers are written with 12 significant digits. Reading a written file
//! and writing it again reproduces the file byte for byte.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::{Family, MilpProblem, Row, RowTag};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MpsError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unsupported MPS feature: {0}")]
    Unsupported(String),
}

fn num(v: f64) -> String {
    format!("{v:.11e}")
}

/// Round a value to what the writer prints.
pub fn round_to_print(v: f64) -> f64 {
    num(v).parse().expect("formatted float parses")
}

pub fn write_mps(p: &MilpProblem) -> String {
    let mut out = String::new();
    let row_names: Vec<(String, &Row, char)> = p
        .eq
        .iter()
        .map(|r| (r.tag.name(), r, 'E'))
        .chain(p.ineq.iter().map(|r| (r.tag.name(), r, 'L')))
        .collect();
    writeln!(out, "NAME {}", p.name).unwrap();
    out.push_str("OBJSENSE\n    MIN\nROWS\n N obj\n");
    for (name, _, sense) in &row_names {
        writeln!(out, " {sense} {name}").unwrap();
    }

    // Column-major view of the rows.
    let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); p.n_cols()];
    for (r, (_, row, _)) in row_names.iter().enumerate() {
        for (&c, &v) in row.cols.iter().zip(&row.vals) {
            by_col[c].push((r, v));
        }
    }
    out.push_str("COLUMNS\n");
    let mut in_int = false;
    let mut marker = 0;
    for c in 0..p.n_cols() {
        let is_int = p.is_integer(c);
        if is_int != in_int {
            let kind = if is_int { "INTORG" } else { "INTEND" };
            writeln!(out, "    MARKER{marker} 'MARKER' '{kind}'").unwrap();
            marker += 1;
            in_int = is_int;
        }
        let name = &p.col_names[c];
        if p.objective[c] != 0.0 || by_col[c].is_empty() {
            writeln!(out, "    {name} obj {}", num(p.objective[c])).unwrap();
        }
        for &(r, v) in &by_col[c] {
            writeln!(out, "    {name} {} {}", row_names[r].0, num(v)).unwrap();
        }
    }
    if in_int {
        writeln!(out, "    MARKER{marker} 'MARKER' 'INTEND'").unwrap();
    }
    out.push_str("RHS\n");
    for (name, row, _) in &row_names {
        if row.rhs != 0.0 {
            writeln!(out, "    RHS {name} {}", num(row.rhs)).unwrap();
        }
    }
    out.push_str("BOUNDS\n");
    for c in 0..p.n_cols() {
        let (lo, hi) = (p.lower[c], p.upper[c]);
        let name = &p.col_names[c];
        if lo == hi {
            writeln!(out, " FX BND {name} {}", num(lo)).unwrap();
            continue;
        }
        match (lo.is_finite(), hi.is_finite()) {
            (false, false) => writeln!(out, " FR BND {name}").unwrap(),
            (false, true) => {
                writeln!(out, " MI BND {name}").unwrap();
                writeln!(out, " UP BND {name} {}", num(hi)).unwrap();
            }
            (true, fin_hi) => {
                if lo != 0.0 {
                    writeln!(out, " LO BND {name} {}", num(lo)).unwrap();
                }
                if fin_hi {
                    writeln!(out, " UP BND {name} {}", num(hi)).unwrap();
                } else {
                    writeln!(out, " PL BND {name}").unwrap();
                }
            }
        }
    }
    out.push_str("ENDATA\n");
    out
}

/// Recover a provenance tag from a row name written by [`write_mps`].
fn parse_tag(name: &str) -> RowTag {
    let imported = || RowTag { family: Family::Imported, element: name.to_string(), sub: 0, k: None };
    let Some((fam, rest)) = name.split_once('.') else {
        return imported();
    };
    let Some(family) = Family::EQUALITY.iter().chain(&Family::INEQUALITY).copied().find(|f| f.label() == fam) else {
        return imported();
    };
    let parts: Vec<&str> = rest.rsplitn(3, '.').collect();
    let parse = |s: &str| s.parse::<usize>().ok().filter(|&v| v >= 1).map(|v| v - 1);
    if family == Family::FinalLevel {
        if let Some((elem, sub)) = rest.rsplit_once('.') {
            if let Some(sub) = parse(sub) {
                return RowTag { family, element: elem.to_string(), sub, k: None };
            }
        }
        return imported();
    }
    match parts.as_slice() {
        [k, sub, elem] => match (parse(sub), parse(k)) {
            (Some(sub), Some(k)) => RowTag { family, element: elem.to_string(), sub, k: Some(k) },
            _ => imported(),
        },
        _ => imported(),
    }
}

#[derive(PartialEq)]
enum Section {
    None,
    Objsense,
    Rows,
    Columns,
    Rhs,
    Bounds,
}

pub fn read_mps(text: &str) -> Result<MilpProblem, MpsError> {
    let err = |line: usize, message: &str| MpsError::Syntax { line: line + 1, message: message.to_string() };
    let mut name = String::new();
    let mut section = Section::None;
    let mut obj_row: Option<String> = None;
    let mut maximize = false;
    // (name, sense) with sense 'E', 'L' or 'G'.
    let mut rows: Vec<(String, char)> = Vec::new();
    let mut row_index: HashMap<String, usize> = HashMap::new();
    let mut col_names: Vec<String> = Vec::new();
    let mut col_index: HashMap<String, usize> = HashMap::new();
    let mut col_int: Vec<bool> = Vec::new();
    let mut objective: Vec<f64> = Vec::new();
    let mut entries: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    let mut lower: Vec<f64> = Vec::new();
    let mut upper: Vec<f64> = Vec::new();
    let mut in_int = false;

    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim_end();
        if line.trim().is_empty() || line.starts_with('*') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if !line.starts_with(' ') && !line.starts_with('\t') {
            match tokens[0] {
                "NAME" => name = tokens.get(1).unwrap_or(&"").to_string(),
                "OBJSENSE" => {
                    section = Section::Objsense;
                    if let Some(s) = tokens.get(1) {
                        maximize = *s == "MAX" || *s == "MAXIMIZE";
                        section = Section::None;
                    }
                }
                "ROWS" => section = Section::Rows,
                "COLUMNS" => section = Section::Columns,
                "RHS" => section = Section::Rhs,
                "BOUNDS" => section = Section::Bounds,
                "RANGES" => return Err(MpsError::Unsupported("RANGES section".into())),
                "ENDATA" => break,
                other => return Err(err(ln, &format!("unknown section `{other}`"))),
            }
            continue;
        }
        match section {
            Section::Objsense => {
                maximize = matches!(tokens[0], "MAX" | "MAXIMIZE");
            }
            Section::Rows => {
                if tokens.len() != 2 {
                    return Err(err(ln, "row line needs a sense and a name"));
                }
                let sense = tokens[0].chars().next().unwrap_or(' ');
                match sense {
                    'N' => {
                        if obj_row.is_none() {
                            obj_row = Some(tokens[1].to_string());
                        }
                    }
                    'E' | 'L' | 'G' => {
                        row_index.insert(tokens[1].to_string(), rows.len());
                        rows.push((tokens[1].to_string(), sense));
                        rhs.push(0.0);
                    }
                    _ => return Err(err(ln, "row sense must be N, E, L or G")),
                }
            }
            Section::Columns => {
                if tokens.len() >= 3 && tokens[1] == "'MARKER'" {
                    in_int = match tokens[2] {
                        "'INTORG'" => true,
                        "'INTEND'" => false,
                        _ => return Err(err(ln, "unknown marker")),
                    };
                    continue;
                }
                if tokens.len() != 3 && tokens.len() != 5 {
                    return Err(err(ln, "column line needs name, row, value [, row, value]"));
                }
                let c = match col_index.get(tokens[0]) {
                    Some(&c) => c,
                    None => {
                        let c = col_names.len();
                        col_index.insert(tokens[0].to_string(), c);
                        col_names.push(tokens[0].to_string());
                        col_int.push(in_int);
                        objective.push(0.0);
                        entries.push(Vec::new());
                        lower.push(0.0);
                        upper.push(f64::INFINITY);
                        c
                    }
                };
                for pair in tokens[1..].chunks(2) {
                    let v: f64 = pair[1].parse().map_err(|_| err(ln, "bad number"))?;
                    if Some(pair[0]) == obj_row.as_deref() {
                        objective[c] = v;
                    } else {
                        let &r = row_index.get(pair[0]).ok_or_else(|| err(ln, "unknown row"))?;
                        entries[c].push((r, v));
                    }
                }
            }
            Section::Rhs => {
                if tokens.len() != 3 && tokens.len() != 5 {
                    return Err(err(ln, "rhs line needs set, row, value [, row, value]"));
                }
                for pair in tokens[1..].chunks(2) {
                    let v: f64 = pair[1].parse().map_err(|_| err(ln, "bad number"))?;
                    if Some(pair[0]) == obj_row.as_deref() {
                        continue;
                    }
                    let &r = row_index.get(pair[0]).ok_or_else(|| err(ln, "unknown row"))?;
                    rhs[r] = v;
                }
            }
            Section::Bounds => {
                if tokens.len() < 3 {
                    return Err(err(ln, "bound line needs type, set and column"));
                }
                let &c = col_index.get(tokens[2]).ok_or_else(|| err(ln, "unknown column"))?;
                let value = || -> Result<f64, MpsError> {
                    tokens.get(3).ok_or_else(|| err(ln, "missing bound value"))?.parse().map_err(|_| err(ln, "bad number"))
                };
                match tokens[0] {
                    "UP" => upper[c] = value()?,
                    "LO" => lower[c] = value()?,
                    "FX" => {
                        let v = value()?;
                        lower[c] = v;
                        upper[c] = v;
                    }
                    "FR" => {
                        lower[c] = f64::NEG_INFINITY;
                        upper[c] = f64::INFINITY;
                    }
                    "MI" => lower[c] = f64::NEG_INFINITY,
                    "PL" => upper[c] = f64::INFINITY,
                    "BV" => {
                        lower[c] = 0.0;
                        upper[c] = 1.0;
                        col_int[c] = true;
                    }
                    "LI" => {
                        lower[c] = value()?;
                        col_int[c] = true;
                    }
                    "UI" => {
                        upper[c] = value()?;
                        col_int[c] = true;
                    }
                    other => return Err(MpsError::Unsupported(format!("bound type {other}"))),
                }
            }
            Section::None => return Err(err(ln, "data outside of a section")),
        }
    }

    if maximize {
        for v in &mut objective {
            *v = -*v;
        }
    }
    let mut row_cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); rows.len()];
    for (c, list) in entries.iter().enumerate() {
        for &(r, v) in list {
            row_cols[r].push((c, v));
        }
    }
    let mut eq = Vec::new();
    let mut ineq = Vec::new();
    for (r, (rname, sense)) in rows.iter().enumerate() {
        let mut list = std::mem::take(&mut row_cols[r]);
        list.sort_by_key(|&(c, _)| c);
        let flip = if *sense == 'G' { -1.0 } else { 1.0 };
        let row = Row {
            cols: list.iter().map(|&(c, _)| c).collect(),
            vals: list.iter().map(|&(_, v)| flip * v).collect(),
            rhs: flip * rhs[r],
            tag: parse_tag(rname),
        };
        if *sense == 'E' {
            eq.push(row);
        } else {
            ineq.push(row);
        }
    }
    let integer = (0..col_names.len()).filter(|&c| col_int[c]).collect();
    Ok(MilpProblem { name, col_names, objective, eq, ineq, lower, upper, integer })
}
