//! Scalar activations built from a small closed vocabulary, so that kinks are
//! known exactly and quadrature rules can split at them.
//!
//! Text form: terms joined by `+`, each term `[coef*]atom` or a bare number.
//! Atoms are `relu`, `abs`, `x` (aliases `linear`, `id`) and `heK` for the
//! probabilists' Hermite polynomial of degree `K`. Negative coefficients are
//! written `relu+-0.5*x`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::specfun::hermite_he;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Atom {
    One,
    Identity,
    Relu,
    Abs,
    Hermite(usize),
}

impl Atom {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Atom::One => 1.0,
            Atom::Identity => x,
            Atom::Relu => x.max(0.0),
            Atom::Abs => x.abs(),
            Atom::Hermite(k) => hermite_he(k, x),
        }
    }

    fn kink(self) -> Option<f64> {
        match self {
            Atom::Relu | Atom::Abs => Some(0.0),
            _ => None,
        }
    }

    /// Polynomial degree, or `None` for piecewise atoms.
    fn poly_degree(self) -> Option<usize> {
        match self {
            Atom::One => Some(0),
            Atom::Identity => Some(1),
            Atom::Hermite(k) => Some(k),
            Atom::Relu | Atom::Abs => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Activation {
    terms: Vec<(f64, Atom)>,
}

/// Highest Hermite degree accepted by the parser.
const MAX_HERMITE_DEGREE: usize = 64;

impl Activation {
    pub fn new(terms: Vec<(f64, Atom)>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidInput("activation needs at least one term".into()));
        }
        if let Some((c, _)) = terms.iter().find(|(c, _)| !c.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite coefficient {c}")));
        }
        Ok(Activation { terms })
    }

    pub fn relu() -> Self {
        Activation { terms: vec![(1.0, Atom::Relu)] }
    }

    pub fn linear() -> Self {
        Activation { terms: vec![(1.0, Atom::Identity)] }
    }

    pub fn constant(c: f64) -> Self {
        Activation { terms: vec![(c, Atom::One)] }
    }

    pub fn hermite(k: usize) -> Self {
        Activation { terms: vec![(1.0, Atom::Hermite(k))] }
    }

    /// `ReLU + c * He_3`, the activation used for the cubic experiments.
    pub fn relu_plus_he3(c: f64) -> Self {
        Activation { terms: vec![(1.0, Atom::Relu), (c, Atom::Hermite(3))] }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Activation { terms: self.terms.iter().map(|&(c, a)| (c * factor, a)).collect() }
    }

    pub fn terms(&self) -> &[(f64, Atom)] {
        &self.terms
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.terms.iter().map(|&(c, a)| c * a.eval(x)).sum()
    }

    /// Points where the activation is not smooth (sorted, deduplicated).
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .terms
            .iter()
            .filter(|(c, _)| *c != 0.0)
            .filter_map(|(_, a)| a.kink())
            .collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// Degree if the activation is a polynomial.
    pub fn polynomial_degree(&self) -> Option<usize> {
        self.terms
            .iter()
            .map(|(_, a)| a.poly_degree())
            .try_fold(0, |acc, d| d.map(|d| acc.max(d)))
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (c, atom)) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str("+")?;
            }
            let name = match atom {
                Atom::One => {
                    write!(f, "{c:?}")?;
                    continue;
                }
                Atom::Identity => "x".to_string(),
                Atom::Relu => "relu".to_string(),
                Atom::Abs => "abs".to_string(),
                Atom::Hermite(k) => format!("he{k}"),
            };
            if *c == 1.0 {
                f.write_str(&name)?;
            } else {
                write!(f, "{c:?}*{name}")?;
            }
        }
        Ok(())
    }
}

fn parse_atom(s: &str) -> Result<Atom> {
    match s {
        "relu" => Ok(Atom::Relu),
        "abs" => Ok(Atom::Abs),
        "x" | "linear" | "id" => Ok(Atom::Identity),
        _ => {
            let k = s
                .strip_prefix("he")
                .and_then(|k| k.parse::<usize>().ok())
                .ok_or_else(|| Error::InvalidInput(format!("unknown activation atom `{s}`")))?;
            if k > MAX_HERMITE_DEGREE {
                return Err(Error::InvalidInput(format!("Hermite degree {k} exceeds {MAX_HERMITE_DEGREE}")));
            }
            Ok(Atom::Hermite(k))
        }
    }
}

fn parse_coef(s: &str) -> Result<f64> {
    let c: f64 = s.parse().map_err(|_| Error::InvalidInput(format!("bad coefficient `{s}`")))?;
    if !c.is_finite() {
        return Err(Error::InvalidInput(format!("non-finite coefficient `{s}`")));
    }
    Ok(c)
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let mut terms = Vec::new();
        for raw in s.split('+') {
            let term = raw.trim();
            if term.is_empty() {
                return Err(Error::InvalidInput(format!("empty term in activation `{s}`")));
            }
            let parsed = match term.split_once('*') {
                Some((c, atom)) => (parse_coef(c.trim())?, parse_atom(atom.trim())?),
                None => match parse_atom(term) {
                    Ok(atom) => (1.0, atom),
                    Err(e) => match term.parse::<f64>() {
                        Ok(c) if c.is_finite() => (c, Atom::One),
                        _ => return Err(e),
                    },
                },
            };
            terms.push(parsed);
        }
        Activation::new(terms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_common_forms() {
        let a: Activation = "relu+0.1*he3".parse().unwrap();
        assert_eq!(a, Activation::relu_plus_he3(0.1));
        assert_eq!(a.breakpoints(), vec![0.0]);
        assert_eq!(a.polynomial_degree(), None);

        let l: Activation = "linear".parse().unwrap();
        assert_eq!(l.eval(-2.5), -2.5);
        assert_eq!(l.polynomial_degree(), Some(1));

        let c: Activation = "2.5".parse().unwrap();
        assert_eq!(c.eval(7.0), 2.5);
        let neg: Activation = "relu+-0.5*x".parse().unwrap();
        assert_eq!(neg.eval(-2.0), 1.0);
    }

    #[test]
    fn rejects_garbage() {
        for bad in ["", "relu+", "foo", "he", "he999", "inf*relu", "1*", "*relu"] {
            assert!(bad.parse::<Activation>().is_err(), "{bad:?} should fail");
        }
    }

    #[test]
    fn hermite_atom_matches_recurrence() {
        let he3: Activation = "he3".parse().unwrap();
        let x = 0.7_f64;
        assert!((he3.eval(x) - (x.powi(3) - 3.0 * x)).abs() < 1e-15);
    }

    fn atom() -> impl Strategy<Value = Atom> {
        prop_oneof![
            Just(Atom::One),
            Just(Atom::Identity),
            Just(Atom::Relu),
            Just(Atom::Abs),
            (0usize..10).prop_map(Atom::Hermite),
        ]
    }

    proptest! {
        #[test]
        fn display_round_trips(terms in prop::collection::vec((-10.0f64..10.0, atom()), 1..5)) {
            let a = Activation::new(terms).unwrap();
            let back: Activation = a.to_string().parse().unwrap();
            prop_assert_eq!(back, a);
        }
    }
}
