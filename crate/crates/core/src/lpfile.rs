//! LP text format (subset): `Minimize`/`Maximize`, `Subject To`, `Bounds`,
//! `Generals`/`Binaries`, `End`, plus `name value` solution files.
//!
//! The writer names variables `x0..` and rows `c0..`, always emits every
//! objective term and explicit bounds, and records the instance name and
//! integer bound in `\` comments, so `read_lp(write_lp(inst))` reproduces the
//! instance exactly when its coefficients are listed row by row and no row
//! is empty. The reader accepts `>=` and `=` rows and normalizes them to `≤`.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{parse_err, Result};
use crate::milp::{Coef, MilpInstance};

fn num(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

fn write_expr(out: &mut String, terms: &[(usize, f64)]) {
    for (k, &(col, v)) in terms.iter().enumerate() {
        let neg = v.is_sign_negative();
        let mag = num(v.abs());
        match (k, neg) {
            (0, false) => write!(out, "{mag} x{col}"),
            (0, true) => write!(out, "- {mag} x{col}"),
            (_, false) => write!(out, " + {mag} x{col}"),
            (_, true) => write!(out, " - {mag} x{col}"),
        }
        .unwrap();
    }
}

pub fn write_lp(inst: &MilpInstance) -> String {
    let mut out = String::new();
    writeln!(out, "\\ name: {}", serde_json::to_string(&inst.name).unwrap()).unwrap();
    writeln!(out, "\\ int_bound: {}", inst.int_bound).unwrap();
    out.push_str("Minimize\n obj: ");
    let obj: Vec<(usize, f64)> = inst.obj.iter().cloned().enumerate().collect();
    write_expr(&mut out, &obj);
    out.push_str("\nSubject To\n");
    let mut rows = vec![Vec::new(); inst.num_cons];
    for c in &inst.coefs {
        rows[c.row].push((c.col, c.val));
    }
    for (i, row) in rows.iter().enumerate() {
        write!(out, " c{i}: ").unwrap();
        if row.is_empty() {
            out.push_str("0 x0");
        } else {
            write_expr(&mut out, row);
        }
        writeln!(out, " <= {}", num(inst.rhs[i])).unwrap();
    }
    out.push_str("Bounds\n");
    for i in 0..inst.num_vars {
        let (lb, ub) = (inst.lower[i], inst.upper[i]);
        if lb == f64::NEG_INFINITY && ub == f64::INFINITY {
            writeln!(out, " x{i} free").unwrap();
        } else {
            writeln!(out, " {} <= x{i} <= {}", num(lb), num(ub)).unwrap();
        }
    }
    if inst.num_int > 0 {
        out.push_str("Generals\n");
        for i in 0..inst.num_int {
            writeln!(out, " x{i}").unwrap();
        }
    }
    out.push_str("End\n");
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Section {
    Preamble,
    Objective,
    Constraints,
    Bounds,
    Generals,
    Binaries,
    End,
}

fn section_of(line: &str) -> Option<(Section, bool)> {
    let l = line.trim().to_ascii_lowercase();
    Some(match l.as_str() {
        "minimize" | "minimum" | "min" => (Section::Objective, false),
        "maximize" | "maximum" | "max" => (Section::Objective, true),
        "subject to" | "such that" | "st" | "s.t." | "st." => (Section::Constraints, false),
        "bounds" | "bound" => (Section::Bounds, false),
        "generals" | "general" | "gen" | "integers" => (Section::Generals, false),
        "binaries" | "binary" | "bin" => (Section::Binaries, false),
        "end" => (Section::End, false),
        _ => return None,
    })
}

fn parse_num(tok: &str, field: &str) -> Result<f64> {
    match tok.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" | "+infinity" => Ok(f64::INFINITY),
        "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
        _ => tok.parse::<f64>().map_err(|_| parse_err(field, format!("bad number {tok:?}"))),
    }
}

fn is_number(tok: &str) -> bool {
    parse_num(tok, "").is_ok()
}

/// Splits operators away from operands: `3x0+2x1<=4` is not supported, but
/// `3 x0 + 2 x1 <= 4` and `c0: ...` are.
fn tokenize(text: &str) -> Vec<String> {
    let mut toks = Vec::new();
    for raw in text.split_whitespace() {
        let mut s = raw;
        // Peel a trailing ':' off labels.
        if let Some(stripped) = s.strip_suffix(':') {
            if !stripped.is_empty() {
                toks.push(stripped.to_string());
            }
            toks.push(":".into());
            continue;
        }
        if let Some(idx) = s.find(':') {
            toks.push(s[..idx].to_string());
            toks.push(":".into());
            s = &s[idx + 1..];
            if s.is_empty() {
                continue;
            }
        }
        toks.push(s.to_string());
    }
    toks
}

struct Names {
    index: HashMap<String, usize>,
    order: Vec<String>,
}

impl Names {
    fn get(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.order.len();
        self.index.insert(name.to_string(), i);
        self.order.push(name.to_string());
        i
    }
}

/// Parses `[+|-] [coef] name` terms until a comparison operator or the end.
fn parse_terms(toks: &[String], pos: &mut usize, names: &mut Names, field: &str) -> Result<Vec<(usize, f64)>> {
    let mut terms = Vec::new();
    let mut sign = 1.0;
    let mut coef: Option<f64> = None;
    while *pos < toks.len() {
        let t = toks[*pos].as_str();
        match t {
            "<=" | "=<" | ">=" | "=>" | "=" | "<" | ">" => break,
            "+" => sign = 1.0,
            "-" => sign = -sign,
            _ if is_number(t) && coef.is_none() => coef = Some(parse_num(t, field)?),
            _ => {
                if is_number(t) {
                    return Err(parse_err(field, format!("unexpected number {t:?}")));
                }
                let c = sign * coef.unwrap_or(1.0);
                terms.push((names.get(t), c));
                sign = 1.0;
                coef = None;
            }
        }
        *pos += 1;
    }
    if coef.is_some() {
        return Err(parse_err(field, "dangling coefficient"));
    }
    Ok(terms)
}

pub fn read_lp(text: &str) -> Result<MilpInstance> {
    let mut name = String::from("lp");
    let mut int_bound: Option<u32> = None;
    let mut section = Section::Preamble;
    let mut maximize = false;
    let mut buffers: HashMap<u8, String> = HashMap::new();
    let key = |s: Section| s as u8;

    for line in text.lines() {
        let trimmed = line.trim();
        if let Some(comment) = trimmed.strip_prefix('\\') {
            let c = comment.trim();
            if let Some(v) = c.strip_prefix("name:") {
                name = serde_json::from_str(v.trim()).map_err(|e| parse_err("name", e.to_string()))?;
            } else if let Some(v) = c.strip_prefix("int_bound:") {
                int_bound = Some(v.trim().parse().map_err(|_| parse_err("int_bound", v.trim()))?);
            }
            continue;
        }
        if trimmed.is_empty() {
            continue;
        }
        if let Some((s, max)) = section_of(trimmed) {
            section = s;
            if s == Section::Objective {
                maximize = max;
            }
            continue;
        }
        if section == Section::End {
            break;
        }
        if section == Section::Preamble {
            return Err(parse_err("lp", format!("content before objective: {trimmed:?}")));
        }
        let buf = buffers.entry(key(section)).or_default();
        buf.push_str(trimmed);
        buf.push('\n');
    }

    let mut names = Names {
        index: HashMap::new(),
        order: Vec::new(),
    };
    let mut obj_terms = Vec::new();
    if let Some(text) = buffers.get(&key(Section::Objective)) {
        let toks = tokenize(text);
        let mut pos = 0;
        if toks.len() >= 2 && toks[1] == ":" {
            pos = 2;
        }
        obj_terms = parse_terms(&toks, &mut pos, &mut names, "objective")?;
        if pos != toks.len() {
            return Err(parse_err("objective", "unexpected comparison"));
        }
    }

    // Rows as (terms, sense, rhs).
    let mut rows: Vec<(Vec<(usize, f64)>, String, f64)> = Vec::new();
    if let Some(text) = buffers.get(&key(Section::Constraints)) {
        let toks = tokenize(text);
        let mut pos = 0;
        while pos < toks.len() {
            if pos + 1 < toks.len() && toks[pos + 1] == ":" {
                pos += 2;
            }
            let field = format!("constraint {}", rows.len());
            let terms = parse_terms(&toks, &mut pos, &mut names, &field)?;
            if pos + 1 >= toks.len() {
                return Err(parse_err(&field, "missing sense or right-hand side"));
            }
            let sense = toks[pos].clone();
            let rhs = parse_num(&toks[pos + 1], &field)?;
            pos += 2;
            rows.push((terms, sense, rhs));
        }
    }

    let mut lower: HashMap<usize, f64> = HashMap::new();
    let mut upper: HashMap<usize, f64> = HashMap::new();
    if let Some(text) = buffers.get(&key(Section::Bounds)) {
        for line in text.lines() {
            let toks: Vec<&str> = line.split_whitespace().collect();
            let field = format!("bounds line {line:?}");
            match toks.as_slice() {
                [v, free] if free.eq_ignore_ascii_case("free") => {
                    let i = names.get(v);
                    lower.insert(i, f64::NEG_INFINITY);
                    upper.insert(i, f64::INFINITY);
                }
                [lo, "<=", v, "<=", hi] => {
                    let i = names.get(v);
                    lower.insert(i, parse_num(lo, &field)?);
                    upper.insert(i, parse_num(hi, &field)?);
                }
                [lo, "<=", v] if is_number(lo) => {
                    let i = names.get(v);
                    lower.insert(i, parse_num(lo, &field)?);
                }
                [v, "<=", hi] => {
                    let i = names.get(v);
                    upper.insert(i, parse_num(hi, &field)?);
                }
                [v, ">=", lo] => {
                    let i = names.get(v);
                    lower.insert(i, parse_num(lo, &field)?);
                }
                [v, "=", val] => {
                    let i = names.get(v);
                    let x = parse_num(val, &field)?;
                    lower.insert(i, x);
                    upper.insert(i, x);
                }
                _ => return Err(parse_err(field, "unsupported bound syntax")),
            }
        }
    }

    let mut is_int: HashMap<usize, bool> = HashMap::new();
    for (sec, binary) in [(Section::Generals, false), (Section::Binaries, true)] {
        if let Some(text) = buffers.get(&key(sec)) {
            for v in text.split_whitespace() {
                let i = names.get(v);
                is_int.insert(i, true);
                if binary {
                    lower.entry(i).or_insert(0.0);
                    upper.entry(i).or_insert(1.0);
                }
            }
        }
    }

    // Integer variables first, each block in order of first appearance.
    let n = names.order.len();
    let mut perm: Vec<usize> = (0..n).filter(|i| is_int.contains_key(i)).collect();
    let num_int = perm.len();
    perm.extend((0..n).filter(|i| !is_int.contains_key(i)));
    let mut new_index = vec![0; n];
    for (new, &old) in perm.iter().enumerate() {
        new_index[old] = new;
    }

    let mut obj = vec![0.0; n];
    for (i, c) in obj_terms {
        obj[new_index[i]] += if maximize { -c } else { c };
    }
    let mut coefs = Vec::new();
    let mut rhs = Vec::new();
    let push_row = |terms: &[(usize, f64)], scale: f64, b: f64, coefs: &mut Vec<Coef>, rhs: &mut Vec<f64>| {
        let r = rhs.len();
        for &(i, c) in terms {
            coefs.push(Coef {
                row: r,
                col: new_index[i],
                val: if scale < 0.0 { -c } else { c },
            });
        }
        rhs.push(if scale < 0.0 { -b } else { b });
    };
    for (terms, sense, b) in &rows {
        match sense.as_str() {
            "<=" | "=<" | "<" => push_row(terms, 1.0, *b, &mut coefs, &mut rhs),
            ">=" | "=>" | ">" => push_row(terms, -1.0, *b, &mut coefs, &mut rhs),
            "=" => {
                push_row(terms, 1.0, *b, &mut coefs, &mut rhs);
                push_row(terms, -1.0, *b, &mut coefs, &mut rhs);
            }
            other => return Err(parse_err("constraint", format!("bad sense {other:?}"))),
        }
    }
    let lo: Vec<f64> = perm.iter().map(|i| lower.get(i).copied().unwrap_or(0.0)).collect();
    let up: Vec<f64> = perm.iter().map(|i| upper.get(i).copied().unwrap_or(f64::INFINITY)).collect();
    let k = match int_bound {
        Some(k) => k,
        None => up[..num_int].iter().filter(|u| u.is_finite()).fold(1.0f64, |a, &b| a.max(b.ceil())) as u32,
    };
    MilpInstance::new(name, num_int, k, obj, coefs, rhs, lo, up)
}

/// Variable names in writer order (`x0..`).
pub fn var_names(inst: &MilpInstance) -> Vec<String> {
    (0..inst.num_vars).map(|i| format!("x{i}")).collect()
}

/// Parses `name value` lines (`#` starts a comment). Missing variables
/// default to 0; unknown names are an error. Returns `None` when the file
/// contains no values at all.
pub fn read_solution(text: &str, names: &[String]) -> Result<Option<Vec<f64>>> {
    let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let mut values = vec![0.0; names.len()];
    let mut any = false;
    for (lineno, line) in text.lines().enumerate() {
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let field = format!("solution line {}", lineno + 1);
        let mut parts = content.split_whitespace();
        let (Some(name), Some(val), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(parse_err(field, "expected `name value`"));
        };
        let &i = index.get(name).ok_or_else(|| parse_err(&field, format!("unknown variable {name:?}")))?;
        values[i] = parse_num(val, &field)?;
        any = true;
    }
    Ok(any.then_some(values))
}

pub fn write_solution(names: &[String], values: &[f64]) -> String {
    let mut out = String::new();
    for (n, v) in names.iter().zip(values) {
        writeln!(out, "{n} {}", num(*v)).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::toy_instance;

    #[test]
    fn toy_round_trip() {
        let inst = toy_instance();
        let text = write_lp(&inst);
        assert!(text.contains("Subject To") && text.contains("Generals"));
        assert_eq!(read_lp(&text).unwrap(), inst);
    }

    #[test]
    fn infinite_bounds_round_trip() {
        let inst = MilpInstance::new(
            "inf \"quoted\"",
            0,
            1,
            vec![1.5, -0.1],
            vec![Coef { row: 0, col: 0, val: -2.25 }, Coef { row: 0, col: 1, val: 1e-9 }],
            vec![-3.0],
            vec![f64::NEG_INFINITY, -4.0],
            vec![f64::INFINITY, f64::INFINITY],
        )
        .unwrap();
        assert_eq!(read_lp(&write_lp(&inst)).unwrap(), inst);
    }

    #[test]
    fn foreign_file_with_senses() {
        let text = "Maximize\n obj: 2 a + b\nSubject To\n r1: a + b >= 1\n r2: a - b = 0\nBounds\n a <= 4\nBinaries\n b\nEnd\n";
        let inst = read_lp(text).unwrap();
        // b is integer and moves first.
        assert_eq!(inst.num_int, 1);
        assert_eq!(inst.obj, vec![-1.0, -2.0]);
        assert_eq!(inst.num_cons, 3);
        assert_eq!(inst.rhs, vec![-1.0, 0.0, -0.0]);
        assert_eq!(inst.upper, vec![1.0, 4.0]);
    }

    #[test]
    fn solution_file() {
        let names = vec!["x0".to_string(), "x1".to_string()];
        let v = read_solution("# header\nx1 2.5 # trailing\n", &names).unwrap().unwrap();
        assert_eq!(v, vec![0.0, 2.5]);
        assert!(read_solution("y 1\n", &names).is_err());
        assert_eq!(read_solution("# nothing\n", &names).unwrap(), None);
        let text = write_solution(&names, &[1.0, -3.0]);
        assert_eq!(read_solution(&text, &names).unwrap().unwrap(), vec![1.0, -3.0]);
    }
}
