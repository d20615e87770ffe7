//! Fixed-format MPS writer and reader.
//!
//! Names are mangled to eight characters (`C` or `R` plus a base-36 index);
//! the original names travel in a JSON sidecar.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::LpError;
use crate::problem::{Constraint, LinearProblem, Sense, Variable};

const OBJ_ROW: &str = "OBJ";
const FIELD_WIDTH: usize = 12;

/// Mangled name to original name, for columns and rows.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NameMap {
    pub columns: BTreeMap<String, String>,
    pub rows: BTreeMap<String, String>,
}

fn base36(mut v: usize, width: usize) -> String {
    const DIGITS: &[u8] = b"0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ";
    let mut out = vec![b'0'; width];
    for slot in out.iter_mut().rev() {
        *slot = DIGITS[v % 36];
        v /= 36;
    }
    String::from_utf8(out).expect("ascii digits")
}

pub fn column_name(j: usize) -> String {
    format!("C{}", base36(j, 7))
}

pub fn row_name(r: usize) -> String {
    format!("R{}", base36(r, 7))
}

/// Shortest rendering of `v` in at most 12 characters, choosing the most
/// accurate of the plain and exponent forms.
pub fn format_number(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let plain = format!("{v}");
    if plain.len() <= FIELD_WIDTH {
        return plain;
    }
    let mut best: Option<(f64, String)> = None;
    let mut consider = |s: String| {
        if s.len() > FIELD_WIDTH {
            return;
        }
        if let Ok(parsed) = s.parse::<f64>() {
            let err = (parsed - v).abs();
            if best.as_ref().map_or(true, |(e, _)| err < *e) {
                best = Some((err, s));
            }
        }
    };
    for p in (0..FIELD_WIDTH).rev() {
        let s = format!("{v:.p$e}");
        if s.len() <= FIELD_WIDTH {
            consider(s);
            break;
        }
    }
    for p in (0..FIELD_WIDTH).rev() {
        let s = format!("{v:.p$}");
        if s.len() <= FIELD_WIDTH {
            consider(s);
            break;
        }
    }
    best.map(|(_, s)| s).unwrap_or(plain)
}

fn entry<W: Write>(w: &mut W, code: &str, name: &str, target: &str, value: Option<f64>) -> std::io::Result<()> {
    let num = value.map(format_number).unwrap_or_default();
    let line = format!(" {code:<2} {name:<8}  {target:<8}  {num:>12}");
    writeln!(w, "{}", line.trim_end())
}

/// Writes `problem` in fixed MPS format and returns the name map.
pub fn write_mps<W: Write>(problem: &LinearProblem, model_name: &str, w: &mut W) -> Result<NameMap, LpError> {
    problem.validate()?;
    let mut map = NameMap::default();
    let cols: Vec<String> = (0..problem.num_vars()).map(column_name).collect();
    let rows: Vec<String> = (0..problem.num_rows()).map(row_name).collect();
    for (c, v) in cols.iter().zip(&problem.vars) {
        map.columns.insert(c.clone(), v.name.clone());
    }
    for (r, row) in rows.iter().zip(&problem.rows) {
        map.rows.insert(r.clone(), row.name.clone());
    }

    let short: String = model_name.chars().filter(|c| !c.is_whitespace()).take(8).collect();
    writeln!(w, "NAME          {}", if short.is_empty() { "MODEL" } else { &short })?;
    writeln!(w, "ROWS")?;
    writeln!(w, " N  {OBJ_ROW}")?;
    for (name, row) in rows.iter().zip(&problem.rows) {
        let code = match row.sense {
            Sense::Le => "L",
            Sense::Ge => "G",
            Sense::Eq => "E",
        };
        writeln!(w, " {code}  {name}")?;
    }

    // Column-wise entries.
    let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); problem.num_vars()];
    for (r, row) in problem.rows.iter().enumerate() {
        for &(j, a) in &row.coeffs {
            if a != 0.0 {
                by_col[j].push((r, a));
            }
        }
    }
    writeln!(w, "COLUMNS")?;
    let mut in_int = false;
    let mut marker = 0usize;
    for (j, v) in problem.vars.iter().enumerate() {
        if v.integer != in_int {
            let tag = if v.integer { "'INTORG'" } else { "'INTEND'" };
            let mname = format!("M{}", base36(marker, 7));
            marker += 1;
            writeln!(w, "    {mname:<8}  'MARKER'                 {tag}")?;
            in_int = v.integer;
        }
        if v.cost != 0.0 || by_col[j].is_empty() {
            entry(w, "", &cols[j], OBJ_ROW, Some(v.cost))?;
        }
        for &(r, a) in &by_col[j] {
            entry(w, "", &cols[j], &rows[r], Some(a))?;
        }
    }
    if in_int {
        let mname = format!("M{}", base36(marker, 7));
        writeln!(w, "    {mname:<8}  'MARKER'                 'INTEND'")?;
    }

    writeln!(w, "RHS")?;
    for (r, row) in problem.rows.iter().enumerate() {
        if row.rhs != 0.0 {
            entry(w, "", "RHS", &rows[r], Some(row.rhs))?;
        }
    }

    writeln!(w, "BOUNDS")?;
    for (j, v) in problem.vars.iter().enumerate() {
        let c = &cols[j];
        let (lo, hi) = (v.lower, v.upper);
        if lo == hi {
            entry(w, "FX", "BND", c, Some(lo))?;
            continue;
        }
        match (lo.is_finite(), hi.is_finite()) {
            (false, false) => entry(w, "FR", "BND", c, None)?,
            (false, true) => {
                entry(w, "MI", "BND", c, None)?;
                entry(w, "UP", "BND", c, Some(hi))?;
            }
            (true, hi_finite) => {
                entry(w, "LO", "BND", c, Some(lo))?;
                if hi_finite {
                    entry(w, "UP", "BND", c, Some(hi))?;
                } else {
                    entry(w, "PL", "BND", c, None)?;
                }
            }
        }
    }
    writeln!(w, "ENDATA")?;
    Ok(map)
}

/// Path of the name-map sidecar for an MPS file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".names.json");
    PathBuf::from(s)
}

/// Writes the MPS file and its name-map sidecar.
pub fn export_mps(problem: &LinearProblem, model_name: &str, path: &Path) -> Result<NameMap, LpError> {
    let mut w = BufWriter::new(File::create(path)?);
    let map = write_mps(problem, model_name, &mut w)?;
    w.flush()?;
    let side = BufWriter::new(File::create(sidecar_path(path))?);
    serde_json::to_writer_pretty(side, &map)?;
    Ok(map)
}

/// Reads an MPS file, restoring original names when a sidecar exists.
pub fn import_mps(path: &Path) -> Result<LinearProblem, LpError> {
    let mut problem = read_mps(BufReader::new(File::open(path)?))?;
    let side = sidecar_path(path);
    if side.exists() {
        let map: NameMap = serde_json::from_reader(BufReader::new(File::open(side)?))?;
        for v in &mut problem.vars {
            if let Some(orig) = map.columns.get(&v.name) {
                v.name = orig.clone();
            }
        }
        for r in &mut problem.rows {
            if let Some(orig) = map.rows.get(&r.name) {
                r.name = orig.clone();
            }
        }
    }
    Ok(problem)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    None,
    Rows,
    Columns,
    Rhs,
    Bounds,
    ObjSense,
}

/// Parses MPS (fixed or free) from a reader; names must not contain spaces.
pub fn read_mps<R: BufRead>(reader: R) -> Result<LinearProblem, LpError> {
    let mut problem = LinearProblem::new();
    let mut section = Section::None;
    let mut obj_name: Option<String> = None;
    let mut row_index: HashMap<String, usize> = HashMap::new();
    let mut col_index: HashMap<String, usize> = HashMap::new();
    let mut in_int = false;
    let mut maximize = false;
    let mut seen_end = false;
    // Row coefficients gathered by column, merged at the end.
    let mut coeffs: Vec<Vec<(usize, f64)>> = Vec::new();

    let err = |line: usize, msg: String| LpError::MpsParse { line, msg };
    let num = |line: usize, s: &str| -> Result<f64, LpError> {
        s.parse::<f64>()
            .map_err(|_| LpError::MpsParse { line, msg: format!("bad number '{s}'") })
    };

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() || line.starts_with('*') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if !line.starts_with(' ') && !line.starts_with('\t') {
            section = match tokens[0] {
                "NAME" => Section::None,
                "ROWS" => Section::Rows,
                "COLUMNS" => Section::Columns,
                "RHS" => Section::Rhs,
                "BOUNDS" => Section::Bounds,
                "OBJSENSE" => {
                    if let Some(s) = tokens.get(1) {
                        maximize = s.starts_with("MAX");
                    }
                    Section::ObjSense
                }
                "ENDATA" => {
                    seen_end = true;
                    break;
                }
                other => return Err(err(lineno, format!("unsupported section '{other}'"))),
            };
            continue;
        }
        match section {
            Section::None => return Err(err(lineno, "data outside of a section".into())),
            Section::ObjSense => maximize = tokens[0].starts_with("MAX"),
            Section::Rows => {
                if tokens.len() != 2 {
                    return Err(err(lineno, "expected row type and name".into()));
                }
                let name = tokens[1].to_string();
                let sense = match tokens[0] {
                    "N" => {
                        if obj_name.is_none() {
                            obj_name = Some(name);
                        }
                        continue;
                    }
                    "L" => Sense::Le,
                    "G" => Sense::Ge,
                    "E" => Sense::Eq,
                    t => return Err(err(lineno, format!("unknown row type '{t}'"))),
                };
                if row_index.insert(name.clone(), problem.rows.len()).is_some() {
                    return Err(err(lineno, format!("duplicate row '{name}'")));
                }
                problem.rows.push(Constraint {
                    name,
                    coeffs: Vec::new(),
                    sense,
                    rhs: 0.0,
                });
                coeffs.push(Vec::new());
            }
            Section::Columns => {
                if tokens.len() >= 3 && tokens[1] == "'MARKER'" {
                    in_int = match tokens[2] {
                        "'INTORG'" => true,
                        "'INTEND'" => false,
                        t => return Err(err(lineno, format!("unknown marker {t}"))),
                    };
                    continue;
                }
                if tokens.len() != 3 && tokens.len() != 5 {
                    return Err(err(lineno, "expected column, row, value [row, value]".into()));
                }
                let col = *col_index.entry(tokens[0].to_string()).or_insert_with(|| {
                    problem.vars.push(Variable {
                        name: tokens[0].to_string(),
                        lower: 0.0,
                        upper: f64::INFINITY,
                        cost: 0.0,
                        integer: in_int,
                    });
                    problem.vars.len() - 1
                });
                for pair in tokens[1..].chunks(2) {
                    let value = num(lineno, pair[1])?;
                    if Some(pair[0]) == obj_name.as_deref() {
                        problem.vars[col].cost += value;
                    } else {
                        let r = *row_index
                            .get(pair[0])
                            .ok_or_else(|| err(lineno, format!("unknown row '{}'", pair[0])))?;
                        coeffs[r].push((col, value));
                    }
                }
            }
            Section::Rhs => {
                if tokens.len() != 3 && tokens.len() != 5 {
                    return Err(err(lineno, "expected set, row, value [row, value]".into()));
                }
                for pair in tokens[1..].chunks(2) {
                    let value = num(lineno, pair[1])?;
                    if Some(pair[0]) == obj_name.as_deref() {
                        continue;
                    }
                    let r = *row_index
                        .get(pair[0])
                        .ok_or_else(|| err(lineno, format!("unknown row '{}'", pair[0])))?;
                    problem.rows[r].rhs = value;
                }
            }
            Section::Bounds => {
                if tokens.len() < 3 {
                    return Err(err(lineno, "expected bound type, set, column".into()));
                }
                let col = *col_index
                    .get(tokens[2])
                    .ok_or_else(|| err(lineno, format!("unknown column '{}'", tokens[2])))?;
                let value = match tokens.get(3) {
                    Some(s) => Some(num(lineno, s)?),
                    None => None,
                };
                let need = || value.ok_or_else(|| err(lineno, "bound value missing".into()));
                let v = &mut problem.vars[col];
                match tokens[0] {
                    "LO" => v.lower = need()?,
                    "UP" => v.upper = need()?,
                    "FX" => {
                        let x = need()?;
                        v.lower = x;
                        v.upper = x;
                    }
                    "FR" => {
                        v.lower = f64::NEG_INFINITY;
                        v.upper = f64::INFINITY;
                    }
                    "MI" => v.lower = f64::NEG_INFINITY,
                    "PL" => v.upper = f64::INFINITY,
                    "BV" => {
                        v.lower = 0.0;
                        v.upper = 1.0;
                        v.integer = true;
                    }
                    "LI" => {
                        v.lower = need()?;
                        v.integer = true;
                    }
                    "UI" => {
                        v.upper = need()?;
                        v.integer = true;
                    }
                    t => return Err(err(lineno, format!("unknown bound type '{t}'"))),
                }
            }
        }
    }
    if !seen_end {
        return Err(LpError::MpsParse {
            line: 0,
            msg: "missing ENDATA".into(),
        });
    }
    for (row, c) in problem.rows.iter_mut().zip(coeffs) {
        let mut c = c;
        c.sort_by_key(|&(j, _)| j);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(c.len());
        for (j, a) in c {
            match merged.last_mut() {
                Some(last) if last.0 == j => last.1 += a,
                _ => merged.push((j, a)),
            }
        }
        row.coeffs = merged;
    }
    if maximize {
        for v in &mut problem.vars {
            v.cost = -v.cost;
        }
    }
    Ok(problem)
}
