//! Plain-text sparse listing of an [`LmiProblem`], close to SDPA's sparse
//! format so that problems can be cross-checked with external solvers.
//!
//! ```text
//! * comment lines start with '*' or '"'
//! sense minimize            # or maximize
//! offset <real>
//! vars <p>
//! blocks <number of blocks>
//! sizes <d_1> <d_2> ...
//! objective                 # then one "<var> <c_var>" line per non-zero
//! 1 2.5
//! entries                   # then one "<var> <block> <i> <j> <value>" line
//! 0 1 1 1 -1.0              # per upper-triangle entry, i <= j
//! end
//! ```
//!
//! Variable, block and row/column indices are 1-based; variable `0` is the
//! constant matrix. Unlike SDPA, the constraint reads `F₀ + Σ xᵢ Fᵢ ⪰ 0` with
//! `F₀` listed as-is (not negated). Reals are printed with 17 significant digits.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use super::{LmiBlock, LmiKind, LmiProblem, Sense, SparseSym};
use crate::error::{Error, Result};
use crate::matrix::SymMatrix;

pub fn write_listing<W: Write>(lmi: &LmiProblem, mut out: W) -> Result<()> {
    writeln!(out, "* lqgsdp LMI listing")?;
    let sense = match lmi.sense {
        Sense::Minimize => "minimize",
        Sense::Maximize => "maximize",
    };
    writeln!(out, "sense {sense}")?;
    writeln!(out, "offset {:.16e}", lmi.offset)?;
    writeln!(out, "vars {}", lmi.num_vars)?;
    writeln!(out, "blocks {}", lmi.blocks.len())?;
    let sizes: Vec<String> = lmi.blocks.iter().map(|b| b.dim.to_string()).collect();
    writeln!(out, "sizes {}", sizes.join(" "))?;
    writeln!(out, "objective")?;
    for (i, c) in lmi.objective.iter().enumerate() {
        if *c != 0.0 {
            writeln!(out, "{} {:.16e}", i + 1, c)?;
        }
    }
    writeln!(out, "entries")?;
    for (bi, b) in lmi.blocks.iter().enumerate() {
        let constant = SparseSym::from_dense(b.constant.as_matrix());
        for &(i, j, v) in &constant.entries {
            writeln!(out, "0 {} {} {} {:.16e}", bi + 1, i + 1, j + 1, v)?;
        }
        for (var, f) in &b.coeffs {
            for &(i, j, v) in &f.entries {
                writeln!(out, "{} {} {} {} {:.16e}", var + 1, bi + 1, i + 1, j + 1, v)?;
            }
        }
    }
    writeln!(out, "end")?;
    Ok(())
}

/// Parses a listing written by [`write_listing`]. Variable groups are not part
/// of the format, so the result is a [`LmiKind::Generic`] problem without groups.
pub fn read_listing<R: BufRead>(input: R) -> Result<LmiProblem> {
    let bad = |line: usize, msg: &str| Error::Input(format!("listing line {line}: {msg}"));
    let mut sense = None;
    let mut offset = 0.0;
    let mut num_vars = None;
    let mut sizes: Vec<usize> = Vec::new();
    let mut objective = Vec::new();
    let mut constants: Vec<DMatrix<f64>> = Vec::new();
    let mut coeffs: Vec<std::collections::BTreeMap<usize, Vec<(usize, usize, f64)>>> = Vec::new();
    #[derive(PartialEq)]
    enum Section {
        Header,
        Objective,
        Entries,
        Done,
    }
    let mut section = Section::Header;

    for (ln, line) in input.lines().enumerate() {
        let line = line?;
        let ln = ln + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('*') || t.starts_with('"') {
            continue;
        }
        let mut it = t.split_whitespace();
        let head = it.next().unwrap_or_default();
        match head {
            "sense" => {
                sense = Some(match it.next() {
                    Some("minimize") => Sense::Minimize,
                    Some("maximize") => Sense::Maximize,
                    _ => return Err(bad(ln, "sense must be minimize or maximize")),
                })
            }
            "offset" => offset = parse(it.next(), ln)?,
            "vars" => {
                let p: usize = parse(it.next(), ln)?;
                num_vars = Some(p);
                objective = vec![0.0; p];
            }
            "blocks" => {
                let _: usize = parse(it.next(), ln)?;
            }
            "sizes" => {
                sizes = it.map(|s| parse(Some(s), ln)).collect::<Result<_>>()?;
                constants = sizes.iter().map(|&d| DMatrix::zeros(d, d)).collect();
                coeffs = vec![Default::default(); sizes.len()];
            }
            "objective" => section = Section::Objective,
            "entries" => section = Section::Entries,
            "end" => section = Section::Done,
            _ => match section {
                Section::Objective => {
                    let var: usize = parse(Some(head), ln)?;
                    let c: f64 = parse(it.next(), ln)?;
                    if var == 0 || var > objective.len() {
                        return Err(bad(ln, "objective variable out of range"));
                    }
                    objective[var - 1] = c;
                }
                Section::Entries => {
                    let var: usize = parse(Some(head), ln)?;
                    let blk: usize = parse(it.next(), ln)?;
                    let i: usize = parse(it.next(), ln)?;
                    let j: usize = parse(it.next(), ln)?;
                    let v: f64 = parse(it.next(), ln)?;
                    if blk == 0 || blk > sizes.len() || i == 0 || j < i || j > sizes[blk - 1] {
                        return Err(bad(ln, "entry index out of range"));
                    }
                    if var > objective.len() {
                        return Err(bad(ln, "entry variable out of range"));
                    }
                    let (b, i, j) = (blk - 1, i - 1, j - 1);
                    if var == 0 {
                        constants[b][(i, j)] = v;
                        constants[b][(j, i)] = v;
                    } else {
                        coeffs[b].entry(var - 1).or_default().push((i, j, v));
                    }
                }
                _ => return Err(bad(ln, &format!("unexpected token {head}"))),
            },
        }
    }
    if section != Section::Done {
        return Err(Error::Input("listing is missing its end marker".into()));
    }
    let sense = sense.ok_or_else(|| Error::Input("listing has no sense line".into()))?;
    let num_vars = num_vars.ok_or_else(|| Error::Input("listing has no vars line".into()))?;
    let blocks = sizes
        .iter()
        .enumerate()
        .map(|(b, &dim)| LmiBlock {
            name: format!("block{}", b + 1),
            dim,
            constant: SymMatrix::symmetrize(constants[b].clone()),
            coeffs: std::mem::take(&mut coeffs[b])
                .into_iter()
                .map(|(var, entries)| (var, SparseSym { dim, entries }))
                .collect(),
        })
        .collect();
    let lmi = LmiProblem { num_vars, objective, offset, sense, blocks, groups: Vec::new(), kind: LmiKind::Generic };
    lmi.check()?;
    Ok(lmi)
}

fn parse<T: std::str::FromStr>(tok: Option<&str>, line: usize) -> Result<T> {
    tok.and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Input(format!("listing line {line}: expected a number")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::scalar;
    use crate::sdp::build_dual_sdp;

    #[test]
    fn listing_round_trip() {
        let lmi = build_dual_sdp(&scalar(2)).unwrap();
        let mut buf = Vec::new();
        write_listing(&lmi, &mut buf).unwrap();
        let back = read_listing(buf.as_slice()).unwrap();
        assert_eq!(back.num_vars, lmi.num_vars);
        assert_eq!(back.objective, lmi.objective);
        assert_eq!(back.offset, lmi.offset);
        assert_eq!(back.sense, lmi.sense);
        for (a, b) in back.blocks.iter().zip(&lmi.blocks) {
            assert_eq!(a.constant, b.constant);
            assert_eq!(a.coeffs, b.coeffs);
        }
    }

    #[test]
    fn listing_rejects_truncation() {
        let text = "sense minimize\nvars 1\nsizes 1\nentries\n0 1 1 1 1.0\n";
        assert!(read_listing(text.as_bytes()).is_err());
        let text = "sense minimize\nvars 1\nsizes 1\nentries\n0 2 1 1 1.0\nend\n";
        assert!(read_listing(text.as_bytes()).is_err());
    }
}
