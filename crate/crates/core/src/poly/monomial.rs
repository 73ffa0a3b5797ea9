use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

/// Index of a polynomial indeterminate in the shared variable namespace.
///
/// State variables occupy `0..n`; the policy expansion places inputs at
/// `n..n + m`.
pub type VarId = u32;

/// A power product `x_{v1}^{e1} * x_{v2}^{e2} * ...` stored sparsely.
///
/// Pairs are sorted by variable and no exponent is zero, so structural
/// equality is mathematical equality.
#[derive(Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Monomial(SmallVec<[(VarId, u32); 4]>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(SmallVec::new())
    }

    pub fn var(v: VarId) -> Self {
        Self::var_pow(v, 1)
    }

    pub fn var_pow(v: VarId, e: u32) -> Self {
        let mut m = SmallVec::new();
        if e > 0 {
            m.push((v, e));
        }
        Monomial(m)
    }

    /// Builds a monomial from a dense exponent vector (`exps[i]` is the
    /// exponent of variable `i`).
    pub fn from_exponents(exps: &[u32]) -> Self {
        Monomial(
            exps.iter()
                .enumerate()
                .filter(|(_, &e)| e > 0)
                .map(|(i, &e)| (i as VarId, e))
                .collect(),
        )
    }

    /// Builds a monomial from arbitrary `(var, exp)` pairs, merging repeats.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (VarId, u32)>) -> Self {
        let mut v: SmallVec<[(VarId, u32); 4]> = pairs.into_iter().filter(|p| p.1 > 0).collect();
        v.sort_unstable_by_key(|p| p.0);
        let mut out: SmallVec<[(VarId, u32); 4]> = SmallVec::new();
        for (var, e) in v {
            match out.last_mut() {
                Some(last) if last.0 == var => last.1 += e,
                _ => out.push((var, e)),
            }
        }
        Monomial(out)
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|p| p.1).sum()
    }

    pub fn exponent(&self, v: VarId) -> u32 {
        self.0
            .iter()
            .find(|p| p.0 == v)
            .map(|p| p.1)
            .unwrap_or(0)
    }

    pub fn pairs(&self) -> &[(VarId, u32)] {
        &self.0
    }

    pub fn vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.0.iter().map(|p| p.0)
    }

    /// Largest variable id present, if any.
    pub fn max_var(&self) -> Option<VarId> {
        self.0.last().map(|p| p.0)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let (a, b) = (&self.0, &other.0);
        let mut out = SmallVec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                Ordering::Less => {
                    out.push(a[i]);
                    i += 1;
                }
                Ordering::Greater => {
                    out.push(b[j]);
                    j += 1;
                }
                Ordering::Equal => {
                    out.push((a[i].0, a[i].1 + b[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        Monomial(out)
    }

    pub fn pow(&self, e: u32) -> Monomial {
        if e == 0 {
            return Monomial::one();
        }
        Monomial(self.0.iter().map(|&(v, k)| (v, k * e)).collect())
    }

    /// Returns `self / other` when `other` divides `self`.
    pub fn div(&self, other: &Monomial) -> Option<Monomial> {
        let mut out = SmallVec::new();
        let mut j = 0;
        for &(v, e) in &self.0 {
            let mut sub = 0;
            if j < other.0.len() && other.0[j].0 == v {
                sub = other.0[j].1;
                j += 1;
            } else if j < other.0.len() && other.0[j].0 < v {
                return None;
            }
            if sub > e {
                return None;
            }
            if e > sub {
                out.push((v, e - sub));
            }
        }
        if j < other.0.len() {
            return None;
        }
        Some(Monomial(out))
    }

    /// Splits the monomial into the part over variables `< split` and the
    /// part over variables `>= split`.
    pub fn split_at_var(&self, split: VarId) -> (Monomial, Monomial) {
        let k = self.0.iter().position(|p| p.0 >= split).unwrap_or(self.0.len());
        (
            Monomial(self.0[..k].iter().copied().collect()),
            Monomial(self.0[k..].iter().copied().collect()),
        )
    }

    /// Halves every exponent; `None` unless all exponents are even.
    pub fn sqrt(&self) -> Option<Monomial> {
        if self.0.iter().any(|p| p.1 % 2 != 0) {
            return None;
        }
        Some(Monomial(self.0.iter().map(|&(v, e)| (v, e / 2)).collect()))
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        self.0
            .iter()
            .map(|&(v, e)| point[v as usize].powi(e as i32))
            .product()
    }

    /// Exponent vector restricted to the first `n` variables.
    pub fn dense(&self, n: usize) -> Vec<u32> {
        let mut out = vec![0; n];
        for &(v, e) in &self.0 {
            if (v as usize) < n {
                out[v as usize] = e;
            }
        }
        out
    }

    /// All monomials in `vars` with total degree in `min_deg..=max_deg`, in
    /// ascending graded-lex order.
    pub fn all_up_to(vars: &[VarId], min_deg: u32, max_deg: u32) -> Vec<Monomial> {
        let mut out = Vec::new();
        let mut cur = Vec::with_capacity(vars.len());
        fn rec(
            vars: &[VarId],
            idx: usize,
            left: u32,
            cur: &mut Vec<(VarId, u32)>,
            out: &mut Vec<Monomial>,
        ) {
            if idx == vars.len() {
                if left == 0 {
                    out.push(Monomial::from_pairs(cur.iter().copied()));
                }
                return;
            }
            for e in 0..=left {
                cur.push((vars[idx], e));
                rec(vars, idx + 1, left - e, cur, out);
                cur.pop();
            }
        }
        for d in min_deg..=max_deg {
            rec(vars, 0, d, &mut cur, &mut out);
        }
        out.sort();
        out.dedup();
        out
    }
}

impl Ord for Monomial {
    /// Graded lexicographic order with `x1 > x2 > ...`.
    fn cmp(&self, other: &Self) -> Ordering {
        match self.degree().cmp(&other.degree()) {
            Ordering::Equal => {}
            o => return o,
        }
        let (a, b) = (&self.0, &other.0);
        let mut i = 0;
        loop {
            match (a.get(i), b.get(i)) {
                (None, None) => return Ordering::Equal,
                (Some(_), None) => return Ordering::Greater,
                (None, Some(_)) => return Ordering::Less,
                (Some(&(va, ea)), Some(&(vb, eb))) => {
                    if va != vb {
                        // the side holding the smaller variable has the
                        // larger exponent on it
                        return if va < vb {
                            Ordering::Greater
                        } else {
                            Ordering::Less
                        };
                    }
                    if ea != eb {
                        return ea.cmp(&eb);
                    }
                }
            }
            i += 1;
        }
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_one() {
            return write!(f, "1");
        }
        for (k, &(v, e)) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, "*")?;
            }
            write!(f, "x{}", v + 1)?;
            if e > 1 {
                write!(f, "^{e}")?;
            }
        }
        Ok(())
    }
}

impl fmt::Debug for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grlex_order() {
        let one = Monomial::one();
        let x = Monomial::var(0);
        let y = Monomial::var(1);
        let xy = x.mul(&y);
        let x2 = x.pow(2);
        let y2 = y.pow(2);
        let mut v = vec![y2.clone(), xy.clone(), one.clone(), x2.clone(), y.clone(), x.clone()];
        v.sort();
        assert_eq!(v, vec![one, y, x, y2, xy, x2]);
    }

    #[test]
    fn mul_div_roundtrip() {
        let a = Monomial::from_exponents(&[2, 0, 1]);
        let b = Monomial::from_exponents(&[1, 3, 0]);
        let ab = a.mul(&b);
        assert_eq!(ab, Monomial::from_exponents(&[3, 3, 1]));
        assert_eq!(ab.div(&b), Some(a.clone()));
        assert_eq!(a.div(&b), None);
        assert_eq!(ab.degree(), 7);
    }

    #[test]
    fn enumerate_counts() {
        // C(n + d, d)
        assert_eq!(Monomial::all_up_to(&[0, 1], 0, 2).len(), 6);
        assert_eq!(Monomial::all_up_to(&[0, 1, 2, 3], 0, 4).len(), 70);
        assert_eq!(Monomial::all_up_to(&[0, 1], 2, 2).len(), 3);
    }

    #[test]
    fn sqrt_and_split() {
        let m = Monomial::from_exponents(&[2, 4, 1]);
        assert!(m.sqrt().is_none());
        let (lo, hi) = m.split_at_var(2);
        assert_eq!(lo, Monomial::from_exponents(&[2, 4]));
        assert_eq!(hi, Monomial::var(2));
        assert_eq!(lo.sqrt(), Some(Monomial::from_exponents(&[1, 2])));
    }
}
