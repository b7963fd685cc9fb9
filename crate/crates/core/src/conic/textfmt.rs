//! Plain-text exchange format for assembled programs.
//!
//! Line oriented, whitespace separated, `#` starts a comment:
//!
//! ```text
//! momentctl-program 1
//! counts <variables> <equalities> <inequalities> <psd_blocks>
//! var <index> <time> <x-power> <u-power> <scale>        (one per variable)
//! objective <constant> <nterms> <index> <coeff> ...
//! eq <constant> <nterms> <index> <coeff> ...            (expr = 0)
//! ineq <constant> <nterms> <index> <coeff> ...          (expr >= 0)
//! psd <time> <side>                                     (followed by entries)
//! entry <row> <col> <constant> <nterms> <index> <coeff> ...   (row <= col)
//! end
//! ```
//!
//! Floats use Rust's shortest round-trip rendering, so write-then-read is
//! exact.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::moments::MomentKey;
use crate::relaxation::{AffineExpr, ConicProgram, PsdBlock};

const MAGIC: &str = "momentctl-program";

fn push_expr(out: &mut String, e: &AffineExpr) {
    let _ = write!(out, "{} {}", e.constant, e.terms.len());
    for (i, c) in &e.terms {
        let _ = write!(out, " {i} {c}");
    }
    out.push('\n');
}

pub fn write_program(p: &ConicProgram) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} 1");
    let _ = writeln!(
        out,
        "counts {} {} {} {}",
        p.variables.len(),
        p.equalities.len(),
        p.inequalities.len(),
        p.psd_blocks.len()
    );
    for (i, ((t, k), s)) in p.variables.iter().zip(&p.variable_scale).enumerate() {
        let _ = writeln!(out, "var {i} {t} {} {} {s}", k.x, k.u);
    }
    out.push_str("objective ");
    push_expr(&mut out, &p.objective);
    for e in &p.equalities {
        out.push_str("eq ");
        push_expr(&mut out, e);
    }
    for e in &p.inequalities {
        out.push_str("ineq ");
        push_expr(&mut out, e);
    }
    for b in &p.psd_blocks {
        let _ = writeln!(out, "psd {} {}", b.time, b.size);
        for r in 0..b.size {
            for c in r..b.size {
                let _ = write!(out, "entry {r} {c} ");
                push_expr(&mut out, b.entry(r, c));
            }
        }
    }
    out.push_str("end\n");
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, Vec<&'a str>)> {
        for (no, line) in self.inner.by_ref() {
            let line = line.split('#').next().unwrap_or("");
            let toks: Vec<&str> = line.split_whitespace().collect();
            if !toks.is_empty() {
                return Ok((no + 1, toks));
            }
        }
        Err(Error::Parse("program file ended early".into()))
    }

    fn expect(&mut self, tag: &str) -> Result<(usize, Vec<&'a str>)> {
        let (no, toks) = self.next()?;
        if toks[0] != tag {
            return Err(Error::Parse(format!("line {no}: expected '{tag}', found '{}'", toks[0])));
        }
        Ok((no, toks))
    }
}

fn num<T: std::str::FromStr>(no: usize, tok: Option<&&str>) -> Result<T> {
    let tok = tok.ok_or_else(|| Error::Parse(format!("line {no}: missing field")))?;
    tok.parse()
        .map_err(|_| Error::Parse(format!("line {no}: cannot parse '{tok}'")))
}

fn parse_expr(no: usize, toks: &[&str]) -> Result<AffineExpr> {
    let constant: f64 = num(no, toks.first())?;
    let count: usize = num(no, toks.get(1))?;
    if toks.len() != 2 + 2 * count {
        return Err(Error::Parse(format!("line {no}: expected {count} terms")));
    }
    let mut terms = Vec::with_capacity(count);
    for k in 0..count {
        terms.push((num(no, toks.get(2 + 2 * k))?, num(no, toks.get(3 + 2 * k))?));
    }
    Ok(AffineExpr::from_terms(terms, constant))
}

pub fn read_program(text: &str) -> Result<ConicProgram> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let (no, head) = lines.expect(MAGIC)?;
    if head.get(1) != Some(&"1") {
        return Err(Error::Parse(format!("line {no}: unsupported format version")));
    }
    let (no, counts) = lines.expect("counts")?;
    let nv: usize = num(no, counts.get(1))?;
    let ne: usize = num(no, counts.get(2))?;
    let ni: usize = num(no, counts.get(3))?;
    let nb: usize = num(no, counts.get(4))?;
    let mut p = ConicProgram::default();
    for i in 0..nv {
        let (no, t) = lines.expect("var")?;
        let idx: usize = num(no, t.get(1))?;
        if idx != i {
            return Err(Error::Parse(format!("line {no}: variables must be listed in order")));
        }
        p.variables
            .push((num(no, t.get(2))?, MomentKey::new(num(no, t.get(3))?, num(no, t.get(4))?)));
        p.variable_scale.push(num(no, t.get(5))?);
    }
    let (no, t) = lines.expect("objective")?;
    p.objective = parse_expr(no, &t[1..])?;
    for _ in 0..ne {
        let (no, t) = lines.expect("eq")?;
        p.equalities.push(parse_expr(no, &t[1..])?);
    }
    for _ in 0..ni {
        let (no, t) = lines.expect("ineq")?;
        p.inequalities.push(parse_expr(no, &t[1..])?);
    }
    for _ in 0..nb {
        let (no, t) = lines.expect("psd")?;
        let time: usize = num(no, t.get(1))?;
        let size: usize = num(no, t.get(2))?;
        let mut entries = Vec::with_capacity(size * (size + 1) / 2);
        for r in 0..size {
            for c in r..size {
                let (no, t) = lines.expect("entry")?;
                let (er, ec): (usize, usize) = (num(no, t.get(1))?, num(no, t.get(2))?);
                if (er, ec) != (r, c) {
                    return Err(Error::Parse(format!(
                        "line {no}: expected entry ({r}, {c}), found ({er}, {ec})"
                    )));
                }
                entries.push(parse_expr(no, &t[3..])?);
            }
        }
        p.psd_blocks.push(PsdBlock { time, size, entries });
    }
    lines.expect("end")?;
    p.validate().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(p)
}
