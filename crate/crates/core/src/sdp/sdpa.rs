//! Sparse SDPA text format.
//!
//! A problem `min c'x, Ax = b` maps to the SDPA dual form
//! `max <F0, Y>, <F_i, Y> = c_i, Y >= 0` with `F0 = -C`, `F_i = A_i`,
//! `c_i = b_i`. PSD blocks come first, followed by one diagonal block
//! holding the non-negative variables and then each free variable split
//! into a positive and a negative part.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use super::{residuals, Column, SdpError, SdpProblem, Solution, Status};

fn lp_width(p: &SdpProblem) -> usize {
    p.n_nonneg + 2 * p.n_free
}

/// Block index (1-based) and diagonal positions for a column; a free column
/// yields two positions with signs.
fn locate(p: &SdpProblem, c: Column) -> Vec<(usize, usize, usize, f64)> {
    let lp_block = p.psd_sizes.len() + 1;
    match c {
        Column::Psd { block, row, col } => {
            let f = if row == col { 1.0 } else { 0.5 };
            vec![(block + 1, row + 1, col + 1, f)]
        }
        Column::NonNeg(i) => vec![(lp_block, i + 1, i + 1, 1.0)],
        Column::Free(i) => {
            let base = p.n_nonneg + 2 * i;
            vec![
                (lp_block, base + 1, base + 1, 1.0),
                (lp_block, base + 2, base + 2, -1.0),
            ]
        }
    }
}

fn fmt(v: f64) -> String {
    format!("{v:e}")
}

/// Serializes `p` in sparse SDPA format.
pub fn write_sdpa(p: &SdpProblem) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "\"dtcbf export");
    let _ = writeln!(s, "{}", p.rows.len());
    let lp = lp_width(p);
    let mut blocks: Vec<String> = p.psd_sizes.iter().map(|n| n.to_string()).collect();
    if lp > 0 {
        blocks.push(format!("-{lp}"));
    }
    let _ = writeln!(s, "{}", blocks.len());
    let _ = writeln!(s, "{}", blocks.join(" "));
    let rhs: Vec<String> = p.rows.iter().map(|r| fmt(r.rhs)).collect();
    let _ = writeln!(s, "{}", rhs.join(" "));
    let emit = |mat: usize, entries: &[(Column, f64)], sign: f64, s: &mut String| {
        let mut acc: std::collections::BTreeMap<(usize, usize, usize), f64> = Default::default();
        for &(c, v) in entries {
            for (blk, i, j, f) in locate(p, c) {
                *acc.entry((blk, i, j)).or_insert(0.0) += sign * f * v;
            }
        }
        for ((blk, i, j), v) in acc {
            if v != 0.0 {
                let _ = writeln!(s, "{mat} {blk} {i} {j} {}", fmt(v));
            }
        }
    };
    emit(0, &p.objective, -1.0, &mut s);
    for (k, row) in p.rows.iter().enumerate() {
        emit(k + 1, &row.entries, 1.0, &mut s);
    }
    s
}

fn numbers(line: &str, lineno: usize) -> Result<Vec<f64>, SdpError> {
    line.split(|c: char| c.is_whitespace() || c == ',' || c == '{' || c == '}' || c == '(' || c == ')')
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>().map_err(|_| SdpError::Format {
                line: lineno,
                message: format!("expected a number, found {t:?}"),
            })
        })
        .collect()
}

/// Parses a sparse SDPA file. Diagonal blocks become non-negative
/// variables; free variables are not recovered as such.
pub fn read_sdpa(text: &str) -> Result<SdpProblem, SdpError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('"') && !l.starts_with('*'));
    let mut next = |what: &str| {
        lines.next().ok_or(SdpError::Format {
            line: 0,
            message: format!("missing {what}"),
        })
    };
    let (ln, l) = next("constraint count")?;
    let m = numbers(l, ln)?.first().copied().ok_or(SdpError::Format {
        line: ln,
        message: "missing constraint count".into(),
    })? as usize;
    let (ln, l) = next("block count")?;
    let nb = numbers(l, ln)?.first().copied().unwrap_or(0.0) as usize;
    let (ln, l) = next("block structure")?;
    let structure: Vec<i64> = numbers(l, ln)?.into_iter().map(|v| v as i64).collect();
    if structure.len() < nb {
        return Err(SdpError::Format {
            line: ln,
            message: format!("expected {nb} block sizes"),
        });
    }
    let mut p = SdpProblem::new();
    // per SDPA block: Some(psd index) or Err(nonneg offset)
    let mut map: Vec<Result<usize, usize>> = Vec::new();
    for &b in &structure[..nb] {
        if b > 0 {
            map.push(Ok(p.add_psd(b as usize)));
        } else {
            map.push(Err(p.add_nonneg(b.unsigned_abs() as usize)));
        }
    }
    let (ln, l) = next("right-hand side")?;
    let c = numbers(l, ln)?;
    if c.len() < m {
        return Err(SdpError::Format {
            line: ln,
            message: format!("expected {m} right-hand side values"),
        });
    }
    for &v in &c[..m] {
        p.add_row(Vec::new(), v);
    }
    for (ln, l) in lines {
        let v = numbers(l, ln)?;
        if v.len() != 5 {
            return Err(SdpError::Format {
                line: ln,
                message: "entry lines need five fields".into(),
            });
        }
        let (mat, blk, i, j, val) = (v[0] as usize, v[1] as usize, v[2] as usize, v[3] as usize, v[4]);
        if blk == 0 || blk > nb || i == 0 || j == 0 || mat > m {
            return Err(SdpError::Format {
                line: ln,
                message: "index out of range".into(),
            });
        }
        let (r, cc) = (i.min(j) - 1, i.max(j) - 1);
        let (col, coef) = match map[blk - 1] {
            Ok(k) => {
                if cc >= p.psd_sizes[k] {
                    return Err(SdpError::Format {
                        line: ln,
                        message: "index out of range".into(),
                    });
                }
                let f = if r == cc { 1.0 } else { 2.0 };
                (Column::Psd { block: k, row: r, col: cc }, f * val)
            }
            Err(off) => {
                if r != cc {
                    return Err(SdpError::Format {
                        line: ln,
                        message: "off-diagonal entry in a diagonal block".into(),
                    });
                }
                (Column::NonNeg(off + r), val)
            }
        };
        if mat == 0 {
            p.objective.push((col, -coef));
        } else {
            p.rows[mat - 1].entries.push((col, coef));
        }
    }
    p.validate()?;
    Ok(p)
}

/// Parses a CSDP-style solution file (`y` on the first line, then
/// `1 blk i j v` entries for the dual slack and `2 blk i j v` for the
/// primal matrix) for a problem written by [`write_sdpa`].
pub fn read_sdpa_solution(text: &str, p: &SdpProblem) -> Result<Solution, SdpError> {
    let mut sol = Solution::zeros(p, Status::Optimal);
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (ln, first) = lines.next().ok_or(SdpError::Format {
        line: 0,
        message: "empty solution".into(),
    })?;
    let y = numbers(first, ln)?;
    if y.len() != p.rows.len() {
        return Err(SdpError::Format {
            line: ln,
            message: format!("expected {} dual values", p.rows.len()),
        });
    }
    sol.y = y.iter().map(|v| -v).collect();
    let lp_block = p.psd_sizes.len() + 1;
    let mut lp_x = vec![0.0; lp_width(p)];
    let mut lp_s = vec![0.0; lp_width(p)];
    for (ln, l) in lines {
        let v = numbers(l, ln)?;
        if v.len() != 5 {
            return Err(SdpError::Format {
                line: ln,
                message: "entry lines need five fields".into(),
            });
        }
        let (mat, blk, i, j, val) = (v[0] as usize, v[1] as usize, v[2] as usize, v[3] as usize, v[4]);
        let bad = || SdpError::Format {
            line: ln,
            message: "index out of range".into(),
        };
        if i == 0 || j == 0 {
            return Err(bad());
        }
        if blk == lp_block {
            let idx = i - 1;
            let target = if mat == 1 { &mut lp_s } else { &mut lp_x };
            *target.get_mut(idx).ok_or_else(bad)? = val;
        } else if blk >= 1 && blk <= p.psd_sizes.len() {
            let n = p.psd_sizes[blk - 1];
            if i > n || j > n {
                return Err(bad());
            }
            let target: &mut DMatrix<f64> = if mat == 1 {
                &mut sol.s_psd[blk - 1]
            } else {
                &mut sol.x_psd[blk - 1]
            };
            target[(i - 1, j - 1)] = val;
            target[(j - 1, i - 1)] = val;
        } else {
            return Err(bad());
        }
    }
    sol.x_nonneg = lp_x[..p.n_nonneg].to_vec();
    sol.s_nonneg = lp_s[..p.n_nonneg].to_vec();
    for i in 0..p.n_free {
        sol.x_free[i] = lp_x[p.n_nonneg + 2 * i] - lp_x[p.n_nonneg + 2 * i + 1];
    }
    sol.primal_objective = p.objective.iter().map(|&(c, a)| a * sol.value(c)).sum();
    sol.dual_objective = p.rows.iter().zip(&sol.y).map(|(r, y)| r.rhs * y).sum();
    sol.residuals = residuals(p, &sol);
    Ok(sol)
}
