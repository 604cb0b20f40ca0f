//! Plain-text conic program files.
//!
//! ```text
//! conic-program 1
//! dims <variables> <constraints> <nonzeros> <cones>
//! objective            one value per line
//! rhs                  one value per line
//! matrix               "<row> <col> <value>" per nonzero, column-major
//! cones                "zero|nonneg|soc <dim>" per cone, in slack order
//! map                  "<name> <start> <end>" per variable slice
//! lifted <m> <cols>    optional
//! end
//! ```
//!
//! The program is `minimise cᵀx s.t. A x + s = b, s ∈ K`. Values use the
//! shortest decimal form that round-trips.

use std::io::{BufRead, Write};

use super::{ConicProgram, VariableMap};
use crate::solver::{Cone, CscMatrix};
use crate::{Error, Real, Result};

const MAGIC: &str = "conic-program 1";

pub fn write_program<T: Real, W: Write>(program: &ConicProgram<T>, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{MAGIC}")?;
    writeln!(
        out,
        "dims {} {} {} {}",
        program.num_variables(),
        program.num_constraints(),
        program.a_eq.nnz(),
        program.cones.len()
    )?;
    writeln!(out, "objective")?;
    for v in &program.objective {
        writeln!(out, "{}", v.to_f64_lossy())?;
    }
    writeln!(out, "rhs")?;
    for v in &program.b_eq {
        writeln!(out, "{}", v.to_f64_lossy())?;
    }
    writeln!(out, "matrix")?;
    for (r, c, v) in program.a_eq.triplets() {
        writeln!(out, "{r} {c} {}", v.to_f64_lossy())?;
    }
    writeln!(out, "cones")?;
    for cone in &program.cones {
        writeln!(out, "{} {}", cone.name(), cone.dim())?;
    }
    writeln!(out, "map")?;
    for (name, r) in &program.variable_map.slices {
        writeln!(out, "{name} {} {}", r.start, r.end)?;
    }
    if let Some((m, cols)) = program.variable_map.lifted_shape {
        writeln!(out, "lifted {m} {cols}")?;
    }
    writeln!(out, "end")
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn next(&mut self) -> Result<String> {
        loop {
            self.line += 1;
            match self.inner.next() {
                None => return Err(self.err("unexpected end of file")),
                Some(Err(e)) => return Err(self.err(&e.to_string())),
                Some(Ok(s)) => {
                    let t = s.trim();
                    if !t.is_empty() && !t.starts_with('#') {
                        return Ok(t.to_string());
                    }
                }
            }
        }
    }

    fn err(&self, msg: &str) -> Error {
        Error::Parse {
            line: self.line,
            msg: msg.to_string(),
        }
    }

    fn expect(&mut self, word: &str) -> Result<()> {
        let l = self.next()?;
        if l != word {
            return Err(self.err(&format!("expected '{word}', found '{l}'")));
        }
        Ok(())
    }

    fn value<T: Real>(&self, s: &str) -> Result<T> {
        let v: f64 = s.parse().map_err(|_| self.err(&format!("bad number '{s}'")))?;
        T::from_f64(v).ok_or_else(|| self.err(&format!("number '{s}' not representable")))
    }

    fn index(&self, s: &str) -> Result<usize> {
        s.parse().map_err(|_| self.err(&format!("bad index '{s}'")))
    }
}

pub fn read_program<T: Real, R: BufRead>(input: R) -> Result<ConicProgram<T>> {
    let mut lines = Lines {
        inner: input.lines(),
        line: 0,
    };
    lines.expect(MAGIC)?;
    let dims = lines.next()?;
    let f: Vec<&str> = dims.split_whitespace().collect();
    if f.len() != 5 || f[0] != "dims" {
        return Err(lines.err("expected 'dims <n> <p> <nnz> <cones>'"));
    }
    let n = lines.index(f[1])?;
    let p = lines.index(f[2])?;
    let nnz = lines.index(f[3])?;
    let ncones = lines.index(f[4])?;

    lines.expect("objective")?;
    let mut objective = Vec::with_capacity(n);
    for _ in 0..n {
        let l = lines.next()?;
        objective.push(lines.value(&l)?);
    }
    lines.expect("rhs")?;
    let mut b_eq = Vec::with_capacity(p);
    for _ in 0..p {
        let l = lines.next()?;
        b_eq.push(lines.value(&l)?);
    }
    lines.expect("matrix")?;
    let mut trip = Vec::with_capacity(nnz);
    for _ in 0..nnz {
        let l = lines.next()?;
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.len() != 3 {
            return Err(lines.err("expected '<row> <col> <value>'"));
        }
        let r = lines.index(f[0])?;
        let c = lines.index(f[1])?;
        if r >= p || c >= n {
            return Err(lines.err(&format!("entry ({r}, {c}) outside {p}x{n}")));
        }
        trip.push((r, c, lines.value(f[2])?));
    }
    let a_eq = CscMatrix::from_triplets(p, n, &trip)?;
    lines.expect("cones")?;
    let mut cones = Vec::with_capacity(ncones);
    for _ in 0..ncones {
        let l = lines.next()?;
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.len() != 2 {
            return Err(lines.err("expected '<kind> <dim>'"));
        }
        let d = lines.index(f[1])?;
        cones.push(match f[0] {
            "zero" => Cone::Zero(d),
            "nonneg" => Cone::NonNeg(d),
            "soc" => Cone::SecondOrder(d),
            other => return Err(lines.err(&format!("unknown cone '{other}'"))),
        });
    }
    lines.expect("map")?;
    let mut map = VariableMap::default();
    loop {
        let l = lines.next()?;
        if l == "end" {
            break;
        }
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.len() != 3 {
            return Err(lines.err("expected '<name> <start> <end>'"));
        }
        if f[0] == "lifted" {
            map.lifted_shape = Some((lines.index(f[1])?, lines.index(f[2])?));
        } else {
            map.slices
                .push((f[0].to_string(), lines.index(f[1])?..lines.index(f[2])?));
        }
    }
    map.validate(n)?;
    let program = ConicProgram {
        objective,
        a_eq,
        b_eq,
        cones,
        variable_map: map,
    };
    crate::solver::validate_program(&program)?;
    Ok(program)
}
