use std::fmt;

/// A path weight stored as a negative log probability.
///
/// `0.0` is probability one ([`Weight::ONE`]) and `+inf` is probability
/// zero ([`Weight::ZERO`]). Multiplication of probabilities is addition
/// of weights under both supported semirings.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Weight(f64);

impl Weight {
    pub const ONE: Weight = Weight(0.0);
    pub const ZERO: Weight = Weight(f64::INFINITY);

    /// Panics on NaN.
    pub fn new(value: f64) -> Self {
        assert!(!value.is_nan(), "weight must not be NaN");
        Weight(value)
    }

    pub fn from_prob(p: f64) -> Self {
        assert!(p >= 0.0 && !p.is_nan(), "probability must be non-negative, got {p}");
        if p == 0.0 {
            Weight::ZERO
        } else {
            Weight(-p.ln())
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn prob(self) -> f64 {
        (-self.0).exp()
    }

    pub fn is_zero(self) -> bool {
        self.0 == f64::INFINITY
    }

    pub fn is_one(self) -> bool {
        self.0 == 0.0
    }

    /// Semiring product. `Zero` annihilates even when the other operand is
    /// a negative weight.
    pub fn times(self, other: Weight) -> Weight {
        if self.is_zero() || other.is_zero() {
            Weight::ZERO
        } else {
            Weight(self.0 + other.0)
        }
    }

    /// Negation maps `p` to `1/p`; `Zero` is left unchanged.
    pub fn reciprocal(self) -> Weight {
        if self.is_zero() {
            self
        } else {
            Weight(-self.0)
        }
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::textfmt::format_sig9(self.0))
    }
}

/// The two semirings used by the toolkit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Semiring {
    /// `⊕` is `-log(e^-a + e^-b)`: sums probability mass over paths.
    #[default]
    Log,
    /// `⊕` is `min`: keeps the best path.
    Tropical,
}

impl Semiring {
    pub fn plus(self, a: Weight, b: Weight) -> Weight {
        match self {
            Semiring::Tropical => {
                if a.0 <= b.0 {
                    a
                } else {
                    b
                }
            }
            Semiring::Log => {
                if a.is_zero() {
                    return b;
                }
                if b.is_zero() {
                    return a;
                }
                let (lo, hi) = if a.0 <= b.0 { (a.0, b.0) } else { (b.0, a.0) };
                Weight(lo - (-(hi - lo)).exp().ln_1p())
            }
        }
    }

    pub fn sum<I: IntoIterator<Item = Weight>>(self, weights: I) -> Weight {
        weights.into_iter().fold(Weight::ZERO, |acc, w| self.plus(acc, w))
    }
}

impl std::str::FromStr for Semiring {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "log" => Ok(Semiring::Log),
            "tropical" => Ok(Semiring::Tropical),
            other => Err(crate::Error::contract(format!("unknown semiring '{other}'"))),
        }
    }
}
