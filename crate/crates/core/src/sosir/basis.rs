//! Gram basis selection.

use std::collections::{BTreeMap, BTreeSet};

use crate::poly::{Monomial, ParamPolynomial, VarId};

/// Monomials `m` over `vars` with `deg(m) <= max_half` whose square can
/// appear in a Gram form of a polynomial with the given support.
///
/// Two sound filters are applied: `2m` must lie in the coordinate-wise
/// bounding box (and total-degree range) of the support, and a diagonal
/// monomial `m^2` that is neither in the support nor a product of two
/// distinct basis elements is removed, repeatedly.
pub fn half_support(support: &BTreeSet<Monomial>, vars: &[VarId], max_half: u32) -> Vec<Monomial> {
    if support.is_empty() {
        return Vec::new();
    }
    let lo: Vec<u32> = vars
        .iter()
        .map(|&v| support.iter().map(|m| m.exponent(v)).min().unwrap_or(0))
        .collect();
    let hi: Vec<u32> = vars
        .iter()
        .map(|&v| support.iter().map(|m| m.exponent(v)).max().unwrap_or(0))
        .collect();
    let dmin = support.iter().map(|m| m.degree()).min().unwrap_or(0);
    let dmax = support.iter().map(|m| m.degree()).max().unwrap_or(0);
    let mut basis: Vec<Monomial> = Monomial::all_up_to(vars, 0, max_half)
        .into_iter()
        .filter(|m| {
            let d = 2 * m.degree();
            d >= dmin
                && d <= dmax
                && vars.iter().enumerate().all(|(i, &v)| {
                    let e = 2 * m.exponent(v);
                    e >= lo[i] && e <= hi[i]
                })
        })
        .collect();
    loop {
        let mut cross: BTreeMap<Monomial, usize> = BTreeMap::new();
        for a in 0..basis.len() {
            for b in (a + 1)..basis.len() {
                *cross.entry(basis[a].mul(&basis[b])).or_insert(0) += 1;
            }
        }
        let before = basis.len();
        basis.retain(|m| {
            let sq = m.mul(m);
            support.contains(&sq) || cross.contains_key(&sq)
        });
        if basis.len() == before {
            break;
        }
    }
    basis
}

/// Gram basis for `expr`: the pruned half support, or every monomial up to
/// half the degree when pruning leaves nothing.
pub fn gram_basis(expr: &ParamPolynomial) -> Vec<Monomial> {
    let support: BTreeSet<Monomial> = expr.monomials().cloned().collect();
    if support.is_empty() {
        return Vec::new();
    }
    let vars: Vec<VarId> = expr.vars().into_iter().collect();
    let half = expr.degree().div_ceil(2);
    let pruned = half_support(&support, &vars, half);
    if pruned.is_empty() {
        Monomial::all_up_to(&vars, 0, half)
    } else {
        pruned
    }
}
