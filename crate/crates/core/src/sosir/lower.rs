//! Lowering of SOS programs to standard-form SDPs.

use std::collections::BTreeMap;

use crate::poly::{AffineExpr, DecVar, Monomial, ParamPolynomial};
use crate::sdp::{Column, SdpProblem};

use super::basis::gram_basis;
use super::{Constraint, Objective, SosError, SosProgram, VarKind};

/// Where a constraint lives in the lowered problem.
#[derive(Clone, Debug, PartialEq)]
pub enum ConstraintMap {
    /// Gram block `block`; `bases[i]` is the basis of diagonal entry `i`,
    /// placed at `offsets[i]` within the block.
    Sos {
        label: String,
        block: Option<usize>,
        bases: Vec<Vec<Monomial>>,
        offsets: Vec<usize>,
        rows: Vec<usize>,
    },
    Linear {
        row: usize,
    },
}

/// A lowered program together with the map needed to lift solutions.
#[derive(Clone, Debug)]
pub struct Lowered {
    pub sdp: SdpProblem,
    pub(crate) var_columns: Vec<Column>,
    pub constraints: Vec<ConstraintMap>,
}

struct RowBuilder {
    rows: BTreeMap<Monomial, (Vec<(Column, f64)>, f64)>,
}

impl RowBuilder {
    fn new() -> Self {
        RowBuilder {
            rows: BTreeMap::new(),
        }
    }

    fn gram(&mut self, m: Monomial, c: Column, f: f64) {
        self.rows.entry(m).or_default().0.push((c, f));
    }

    /// Adds `-e` to the row of `m`.
    fn minus(&mut self, m: &Monomial, e: &AffineExpr, cols: &[Column]) {
        let row = self.rows.entry(m.clone()).or_default();
        for (v, w) in &e.terms {
            row.0.push((cols[v.0 as usize], -w));
        }
        row.1 += e.constant;
    }

    fn emit(self, sdp: &mut SdpProblem) -> Vec<usize> {
        let mut out = Vec::new();
        for (_, (entries, rhs)) in self.rows {
            if entries.is_empty() && rhs == 0.0 {
                continue;
            }
            out.push(sdp.add_row(entries, rhs));
        }
        out
    }
}

fn check_vars(e: &AffineExpr, n: usize) -> Result<(), SosError> {
    match e.terms.keys().find(|v| v.0 as usize >= n) {
        Some(v) => Err(SosError::UnknownVariable(v.0)),
        None => Ok(()),
    }
}

fn check_poly(p: &ParamPolynomial, n: usize) -> Result<(), SosError> {
    for (_, e) in p.terms() {
        check_vars(e, n)?;
    }
    Ok(())
}

impl SosProgram {
    /// Lowers the program. The layout is deterministic: free variables in
    /// declaration order, then one PSD block per declared SOS polynomial,
    /// then one per SOS constraint.
    pub fn lower(&self) -> Result<Lowered, SosError> {
        let nv = self.vars.len();
        let mut sdp = SdpProblem::new();
        let mut var_columns = Vec::with_capacity(nv);
        for kind in &self.vars {
            var_columns.push(match *kind {
                VarKind::Free { .. } => Column::Free(sdp.add_free(1)),
                VarKind::Gram { poly, p, q } => Column::Psd {
                    block: poly,
                    row: p,
                    col: q,
                },
            });
        }
        for sp in &self.sos_polys {
            sdp.add_psd(sp.basis.len().max(1));
        }
        for (k, kind) in self.vars.iter().enumerate() {
            if let VarKind::Free { lower, upper } = *kind {
                if let Some(l) = lower {
                    let s = sdp.add_nonneg(1);
                    sdp.add_row(vec![(var_columns[k], 1.0), (Column::NonNeg(s), -1.0)], l);
                }
                if let Some(u) = upper {
                    let s = sdp.add_nonneg(1);
                    sdp.add_row(vec![(var_columns[k], 1.0), (Column::NonNeg(s), 1.0)], u);
                }
            }
        }

        let mut maps = Vec::with_capacity(self.constraints.len());
        for c in &self.constraints {
            match c {
                Constraint::Scalar { label, expr } => {
                    check_poly(expr, nv)?;
                    maps.push(lower_matrix(
                        &mut sdp,
                        label,
                        &[vec![expr.clone()]],
                        &var_columns,
                    ));
                }
                Constraint::Matrix { label, entries } => {
                    for row in entries {
                        for e in row {
                            check_poly(e, nv)?;
                        }
                    }
                    maps.push(lower_matrix(&mut sdp, label, entries, &var_columns));
                }
                Constraint::LinearEq(e) => {
                    check_vars(e, nv)?;
                    let entries = e.terms.iter().map(|(v, w)| (var_columns[v.0 as usize], *w)).collect();
                    let row = sdp.add_row(entries, -e.constant);
                    maps.push(ConstraintMap::Linear { row });
                }
                Constraint::LinearIneq(e) => {
                    check_vars(e, nv)?;
                    let s = sdp.add_nonneg(1);
                    let mut entries: Vec<(Column, f64)> =
                        e.terms.iter().map(|(v, w)| (var_columns[v.0 as usize], *w)).collect();
                    entries.push((Column::NonNeg(s), -1.0));
                    let row = sdp.add_row(entries, -e.constant);
                    maps.push(ConstraintMap::Linear { row });
                }
            }
        }

        let linear = |e: &AffineExpr, sign: f64| -> Vec<(Column, f64)> {
            e.terms
                .iter()
                .map(|(v, w)| (var_columns[v.0 as usize], sign * w))
                .collect()
        };
        match &self.objective {
            Objective::Feasibility => {}
            Objective::Minimize(e) => {
                check_vars(e, nv)?;
                sdp.objective = linear(e, 1.0);
            }
            Objective::Maximize(e) => {
                check_vars(e, nv)?;
                sdp.objective = linear(e, -1.0);
            }
            Objective::Target { expr, target } => {
                check_vars(expr, nv)?;
                let s = sdp.add_nonneg(2);
                let mut entries = linear(expr, 1.0);
                entries.push((Column::NonNeg(s), -1.0));
                entries.push((Column::NonNeg(s + 1), 1.0));
                sdp.add_row(entries, target - expr.constant);
                sdp.objective = vec![(Column::NonNeg(s), 1.0), (Column::NonNeg(s + 1), 1.0)];
            }
        }
        Ok(Lowered {
            sdp,
            var_columns,
            constraints: maps,
        })
    }
}

/// Block-Gram lowering of a symmetric polynomial matrix (a scalar
/// constraint is the 1x1 case).
fn lower_matrix(
    sdp: &mut SdpProblem,
    label: &str,
    entries: &[Vec<ParamPolynomial>],
    cols: &[Column],
) -> ConstraintMap {
    let n = entries.len();
    let bases: Vec<Vec<Monomial>> = (0..n).map(|i| gram_basis(&entries[i][i])).collect();
    let mut offsets = Vec::with_capacity(n);
    let mut size = 0;
    for b in &bases {
        offsets.push(size);
        size += b.len();
    }
    let block = if size > 0 { Some(sdp.add_psd(size)) } else { None };
    let mut rows = Vec::new();
    for i in 0..n {
        for j in i..n {
            let mut rb = RowBuilder::new();
            if let Some(blk) = block {
                let (bi, bj) = (&bases[i], &bases[j]);
                for (p, mp) in bi.iter().enumerate() {
                    let start = if i == j { p } else { 0 };
                    for (q, mq) in bj.iter().enumerate().skip(start) {
                        let f = if i == j && p != q { 2.0 } else { 1.0 };
                        rb.gram(
                            mp.mul(mq),
                            Column::Psd {
                                block: blk,
                                row: offsets[i] + p,
                                col: offsets[j] + q,
                            },
                            f,
                        );
                    }
                }
            }
            for (m, e) in entries[i][j].terms() {
                rb.minus(m, e, cols);
            }
            rows.extend(rb.emit(sdp));
        }
    }
    ConstraintMap::Sos {
        label: label.to_string(),
        block,
        bases,
        offsets,
        rows,
    }
}

impl Lowered {
    pub fn column_of(&self, v: DecVar) -> Column {
        self.var_columns[v.0 as usize]
    }
}
