//! Text syntax: `±c*x1^a*x2^b ...` terms joined by `+`/`-`.
//!
//! States are `x1..xn` (ids `0..n`), inputs `u1..um` (ids `n..n+m`).
//! Whitespace is ignored. A term is a product of numbers and powers of
//! variables separated by `*`.

use super::{Monomial, PolyError, Polynomial, VarId};

/// Variable namespace used by the parser.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VarNames {
    pub states: usize,
    pub inputs: usize,
}

impl VarNames {
    pub fn new(states: usize, inputs: usize) -> Self {
        VarNames { states, inputs }
    }

    fn resolve(&self, name: &str) -> Option<VarId> {
        let (kind, idx) = name.split_at(1);
        let k: usize = idx.parse().ok()?;
        if k == 0 {
            return None;
        }
        match kind {
            "x" if k <= self.states => Some((k - 1) as VarId),
            "u" if k <= self.inputs => Some((self.states + k - 1) as VarId),
            _ => None,
        }
    }
}

struct Scanner<'a> {
    chars: Vec<(usize, char)>,
    pos: usize,
    names: &'a VarNames,
}

impl Scanner<'_> {
    fn err(&self, message: impl Into<String>) -> PolyError {
        let column = self
            .chars
            .get(self.pos)
            .map(|c| c.0 + 1)
            .unwrap_or_else(|| self.chars.last().map(|c| c.0 + 2).unwrap_or(1));
        PolyError::Parse {
            column,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).map(|c| c.1)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek();
        self.pos += 1;
        c
    }

    fn number(&mut self) -> Result<f64, PolyError> {
        let start = self.pos;
        let mut s = String::new();
        while let Some(c) = self.peek() {
            let prev = s.chars().last();
            let exp_sign = (c == '+' || c == '-') && matches!(prev, Some('e') | Some('E'));
            if c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' || exp_sign {
                s.push(c);
                self.pos += 1;
            } else {
                break;
            }
        }
        s.parse::<f64>().map_err(|_| {
            self.pos = start;
            self.err(format!("invalid number '{s}'"))
        })
    }

    fn uint(&mut self) -> Result<u32, PolyError> {
        let mut s = String::new();
        while let Some(c) = self.peek().filter(char::is_ascii_digit) {
            s.push(c);
            self.pos += 1;
        }
        s.parse().map_err(|_| self.err("expected a non-negative integer exponent"))
    }

    fn factor(&mut self, coeff: &mut f64, mono: &mut Monomial) -> Result<(), PolyError> {
        match self.peek() {
            Some(c) if c.is_ascii_digit() || c == '.' => {
                *coeff *= self.number()?;
                Ok(())
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                let mut name = String::new();
                while let Some(c) = self.peek().filter(|c| c.is_ascii_alphanumeric()) {
                    name.push(c);
                    self.pos += 1;
                }
                let v = self.names.resolve(&name).ok_or_else(|| {
                    self.pos = start;
                    self.err(format!("unknown variable '{name}'"))
                })?;
                let mut e = 1;
                if self.peek() == Some('^') {
                    self.pos += 1;
                    e = self.uint()?;
                }
                *mono = mono.mul(&Monomial::var_pow(v, e));
                Ok(())
            }
            _ => Err(self.err("expected a number or a variable")),
        }
    }

    fn term(&mut self) -> Result<(f64, Monomial), PolyError> {
        let mut coeff = 1.0;
        let mut mono = Monomial::one();
        self.factor(&mut coeff, &mut mono)?;
        while self.peek() == Some('*') {
            self.pos += 1;
            self.factor(&mut coeff, &mut mono)?;
        }
        Ok((coeff, mono))
    }

    fn polynomial(&mut self) -> Result<Polynomial, PolyError> {
        let mut p = Polynomial::zero();
        if self.peek().is_none() {
            return Err(self.err("empty polynomial"));
        }
        let mut first = true;
        loop {
            let mut sign = 1.0;
            match self.peek() {
                Some('+') => {
                    self.pos += 1;
                }
                Some('-') => {
                    self.pos += 1;
                    sign = -1.0;
                }
                None => break,
                _ if first => {}
                _ => return Err(self.err("expected '+' or '-'")),
            }
            let (c, m) = self.term()?;
            p.add_term(m, sign * c);
            first = false;
            if self.peek().is_none() {
                break;
            }
        }
        Ok(p)
    }
}

fn scanner<'a>(text: &str, names: &'a VarNames) -> Scanner<'a> {
    Scanner {
        chars: text
            .char_indices()
            .filter(|(_, c)| !c.is_whitespace())
            .collect(),
        pos: 0,
        names,
    }
}

/// Parses a polynomial string.
pub fn parse_polynomial(text: &str, names: &VarNames) -> Result<Polynomial, PolyError> {
    let mut s = scanner(text, names);
    s.polynomial()
}

/// Parses a single monomial such as `x1*x2^2` or `1`.
pub fn parse_monomial(text: &str, names: &VarNames) -> Result<Monomial, PolyError> {
    let mut s = scanner(text, names);
    let (c, m) = s.term()?;
    if s.bump().is_some() {
        s.pos -= 1;
        return Err(s.err("trailing input after monomial"));
    }
    if c != 1.0 {
        return Err(PolyError::Parse {
            column: 1,
            message: "monomials may not carry a coefficient".into(),
        });
    }
    Ok(m)
}
