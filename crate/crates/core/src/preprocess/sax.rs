//! SAX discretization with a four-letter alphabet.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Standard normal quartile breakpoints for an alphabet of four.
pub const BREAKPOINTS: [f64; 3] = [-0.674_489_750_196_081_7, 0.0, 0.674_489_750_196_081_7];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Symbol {
    A,
    B,
    C,
    D,
}

impl Symbol {
    pub const ALL: [Symbol; 4] = [Symbol::A, Symbol::B, Symbol::C, Symbol::D];

    pub fn from_value(z: f64) -> Symbol {
        match BREAKPOINTS.iter().position(|&bp| z < bp) {
            Some(0) => Symbol::A,
            Some(1) => Symbol::B,
            Some(2) => Symbol::C,
            _ => Symbol::D,
        }
    }

    pub fn as_char(self) -> char {
        (b'a' + self.index() as u8) as char
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_char(c: char) -> Option<Symbol> {
        match c {
            'a' => Some(Symbol::A),
            'b' => Some(Symbol::B),
            'c' => Some(Symbol::C),
            'd' => Some(Symbol::D),
            _ => None,
        }
    }

    pub fn from_index(i: u8) -> Option<Symbol> {
        Symbol::ALL.get(i as usize).copied()
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// Map z-normalized compressed values to symbols.
pub fn sax_symbolize(z_values: &[f64]) -> Vec<Symbol> {
    z_values.iter().map(|&z| Symbol::from_value(z)).collect()
}

/// Parse a word like `"abca"`; `None` on any letter outside a..d.
pub fn parse_word(word: &str) -> Option<Vec<Symbol>> {
    word.chars().map(Symbol::from_char).collect()
}
