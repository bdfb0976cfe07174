//! Plain-text QP interchange format.
//!
//! ```text
//! qp 1
//! dims <n> <n_eq> <n_ineq> <n_lowrank>
//! hessian <nnz>        followed by nnz lines "i j v" (upper triangle)
//! lowrank <coef> <nnz> followed by nnz lines "i v"   (n_lowrank blocks)
//! c                    followed by n values, one per line
//! eq <nnz>             followed by nnz lines "i j v"
//! b                    followed by n_eq values
//! ineq <nnz>           followed by nnz lines "i j v"
//! h                    followed by n_ineq values
//! end
//! ```
//!
//! The problem is `min ½xᵀHx + cᵀx` subject to `eq·x = b`, `ineq·x ≤ h`,
//! with `H` the symmetric matrix from the upper triangle plus
//! `Σ coef·vvᵀ`. Indices are zero-based; values round-trip exactly.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::solver::{Hessian, LowRankTerm, QuadraticProgram};
use crate::sparse::{self, from_triplets, SparseMatrix};

pub fn write_qp<W: Write>(qp: &QuadraticProgram, mut out: W) -> Result<()> {
    writeln!(out, "qp 1")?;
    writeln!(
        out,
        "dims {} {} {} {}",
        qp.num_vars(),
        qp.num_eq(),
        qp.num_ineq(),
        qp.hessian.low_rank.len()
    )?;
    let upper: Vec<_> = sparse::triplets(&qp.hessian.sparse)
        .into_iter()
        .filter(|&(i, j, _)| i <= j)
        .collect();
    writeln!(out, "hessian {}", upper.len())?;
    for (i, j, v) in upper {
        writeln!(out, "{i} {j} {v:e}")?;
    }
    for t in &qp.hessian.low_rank {
        writeln!(out, "lowrank {:e} {}", t.coef, t.indices.len())?;
        for (i, v) in t.indices.iter().zip(&t.values) {
            writeln!(out, "{i} {v:e}")?;
        }
    }
    let values = |out: &mut W, tag: &str, v: &[f64]| -> Result<()> {
        writeln!(out, "{tag}")?;
        for x in v {
            writeln!(out, "{x:e}")?;
        }
        Ok(())
    };
    let matrix = |out: &mut W, tag: &str, m: &SparseMatrix| -> Result<()> {
        let t = sparse::triplets(m);
        writeln!(out, "{tag} {}", t.len())?;
        for (i, j, v) in t {
            writeln!(out, "{i} {j} {v:e}")?;
        }
        Ok(())
    };
    values(&mut out, "c", &qp.c)?;
    matrix(&mut out, "eq", &qp.a)?;
    values(&mut out, "b", &qp.b)?;
    matrix(&mut out, "ineq", &qp.g)?;
    values(&mut out, "h", &qp.h)?;
    writeln!(out, "end")?;
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn next(&mut self) -> Result<Vec<String>> {
        self.line += 1;
        match self.inner.next() {
            Some(l) => Ok(l?.split_whitespace().map(str::to_owned).collect()),
            None => Err(self.err("unexpected end of file")),
        }
    }

    fn err(&self, reason: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            reason: reason.into(),
        }
    }

    fn header(&mut self, tag: &str, args: usize) -> Result<Vec<String>> {
        let f = self.next()?;
        if f.first().map(String::as_str) != Some(tag) || f.len() != args + 1 {
            return Err(self.err(format!("expected '{tag}' with {args} field(s)")));
        }
        Ok(f[1..].to_vec())
    }

    fn parse<T: std::str::FromStr>(&self, s: &str) -> Result<T> {
        s.parse().map_err(|_| self.err(format!("bad number '{s}'")))
    }

    fn triplets(&mut self, count: usize, rows: usize, cols: usize) -> Result<Vec<(usize, usize, f64)>> {
        (0..count)
            .map(|_| {
                let f = self.next()?;
                if f.len() != 3 {
                    return Err(self.err("expected 'i j v'"));
                }
                let (i, j, v) = (self.parse(&f[0])?, self.parse(&f[1])?, self.parse(&f[2])?);
                if i >= rows || j >= cols {
                    return Err(self.err("index out of range"));
                }
                Ok((i, j, v))
            })
            .collect()
    }

    fn values(&mut self, tag: &str, count: usize) -> Result<Vec<f64>> {
        self.header(tag, 0)?;
        (0..count)
            .map(|_| {
                let f = self.next()?;
                if f.len() != 1 {
                    return Err(self.err("expected one value"));
                }
                self.parse(&f[0])
            })
            .collect()
    }
}

pub fn read_qp<R: BufRead>(input: R) -> Result<QuadraticProgram> {
    let mut lines = Lines {
        inner: input.lines(),
        line: 0,
    };
    let v = lines.header("qp", 1)?;
    if v[0] != "1" {
        return Err(lines.err(format!("unsupported version {}", v[0])));
    }
    let d = lines.header("dims", 4)?;
    let n: usize = lines.parse(&d[0])?;
    let me: usize = lines.parse(&d[1])?;
    let mi: usize = lines.parse(&d[2])?;
    let nl: usize = lines.parse(&d[3])?;

    let nnz = lines.header("hessian", 1)?;
    let nnz: usize = lines.parse(&nnz[0])?;
    let mut upper = lines.triplets(nnz, n, n)?;
    let mirrored: Vec<_> = upper
        .iter()
        .filter(|&&(i, j, _)| i != j)
        .map(|&(i, j, v)| (j, i, v))
        .collect();
    upper.extend(mirrored);
    let mut low_rank = Vec::with_capacity(nl);
    for _ in 0..nl {
        let f = lines.header("lowrank", 2)?;
        let coef: f64 = lines.parse(&f[0])?;
        let count: usize = lines.parse(&f[1])?;
        let mut indices = Vec::with_capacity(count);
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            let f = lines.next()?;
            if f.len() != 2 {
                return Err(lines.err("expected 'i v'"));
            }
            let i: usize = lines.parse(&f[0])?;
            if i >= n {
                return Err(lines.err("index out of range"));
            }
            indices.push(i);
            values.push(lines.parse(&f[1])?);
        }
        low_rank.push(LowRankTerm {
            coef,
            indices,
            values,
        });
    }
    let c = lines.values("c", n)?;
    let f = lines.header("eq", 1)?;
    let cnt: usize = lines.parse(&f[0])?;
    let a = lines.triplets(cnt, me, n)?;
    let b = lines.values("b", me)?;
    let f = lines.header("ineq", 1)?;
    let cnt: usize = lines.parse(&f[0])?;
    let g = lines.triplets(cnt, mi, n)?;
    let h = lines.values("h", mi)?;
    lines.header("end", 0)?;
    QuadraticProgram::new(
        Hessian {
            sparse: from_triplets(n, n, &upper),
            low_rank,
        },
        c,
        from_triplets(me, n, &a),
        b,
        from_triplets(mi, n, &g),
        h,
    )
}
