//! Model checkpoint, a line-oriented text file:
//!
//! ```text
//! bcd-checkpoint 1
//! d_in 600
//! r 30
//! layers 5
//! activation leaky_relu:0.5
//! skip false
//! W1 30 600
//! <30 lines of 600 space-separated values>
//! W2 30 30
//! ...
//! W5 1 30
//! <1 line>
//! ```
//!
//! Values use 17 significant digits, so a checkpoint reloads bit-exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use bcd_core::network::check_weights;
use bcd_core::{Activation, Matrix, NetworkShape};

use crate::data::fmt_f64;
use crate::error::{CliError, Result};

pub const MAGIC: &str = "bcd-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub d_in: usize,
    pub r: usize,
    pub activation: Activation,
    pub skip: bool,
    /// `W_1, ..., W_L`.
    pub weights: Vec<Matrix>,
}

impl Checkpoint {
    pub fn layers(&self) -> usize {
        self.weights.len()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{MAGIC} {VERSION}");
        let _ = writeln!(s, "d_in {}", self.d_in);
        let _ = writeln!(s, "r {}", self.r);
        let _ = writeln!(s, "layers {}", self.layers());
        let _ = writeln!(s, "activation {}", self.activation);
        let _ = writeln!(s, "skip {}", self.skip);
        for (j, w) in self.weights.iter().enumerate() {
            let _ = writeln!(s, "W{} {} {}", j + 1, w.rows(), w.cols());
            for row in w.iter_rows() {
                let line: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
                let _ = writeln!(s, "{}", line.join(" "));
            }
        }
        s
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let mut next = |what: &str| lines.next().ok_or_else(|| format!("unexpected end of file, expected {what}"));

        let (no, magic) = next("header")?;
        match magic.split_whitespace().collect::<Vec<_>>()[..] {
            [m, v] if m == MAGIC => {
                if v != VERSION.to_string() {
                    return Err(format!("line {no}: unsupported checkpoint version {v}"));
                }
            }
            _ => return Err(format!("line {no}: not a checkpoint (expected `{MAGIC} {VERSION}`)")),
        }
        let d_in: usize = field(next("d_in")?, "d_in")?;
        let r: usize = field(next("r")?, "r")?;
        let layers: usize = field(next("layers")?, "layers")?;
        let activation: Activation = field(next("activation")?, "activation")?;
        let skip: bool = field(next("skip")?, "skip")?;

        let mut weights = Vec::with_capacity(layers);
        for j in 1..=layers {
            let (no, head) = next("weight header")?;
            let parts: Vec<&str> = head.split_whitespace().collect();
            let tag = format!("W{j}");
            let (rows, cols) = match parts[..] {
                [t, r, c] if t == tag => (
                    r.parse::<usize>().map_err(|_| format!("line {no}: bad row count {r:?}"))?,
                    c.parse::<usize>().map_err(|_| format!("line {no}: bad column count {c:?}"))?,
                ),
                _ => return Err(format!("line {no}: expected `{tag} <rows> <cols>`")),
            };
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let (no, line) = next("weight row")?;
                let before = data.len();
                for tok in line.split_whitespace() {
                    data.push(tok.parse::<f64>().map_err(|_| format!("line {no}: cannot parse {tok:?}"))?);
                }
                if data.len() - before != cols {
                    return Err(format!("line {no}: expected {cols} values, found {}", data.len() - before));
                }
            }
            weights.push(Matrix::from_vec(rows, cols, data).map_err(|e| e.to_string())?);
        }
        if let Some((no, extra)) = lines.find(|(_, l)| !l.is_empty()) {
            return Err(format!("line {no}: trailing content {extra:?}"));
        }
        let shape = NetworkShape::new(d_in, r, layers, 1).map_err(|e| e.to_string())?;
        check_weights(&shape, &weights).map_err(|e| e.to_string())?;
        Ok(Self { d_in, r, activation, skip, weights })
    }
}

fn field<T: std::str::FromStr>((no, line): (usize, &str), key: &str) -> std::result::Result<T, String> {
    match line.split_once(' ') {
        Some((k, v)) if k == key => v.trim().parse().map_err(|_| format!("line {no}: bad value for {key}: {v:?}")),
        _ => Err(format!("line {no}: expected `{key} <value>`")),
    }
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    fs::write(path, ckpt.to_text()).map_err(|e| CliError::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Checkpoint::parse(&text).map_err(|m| CliError::parse(path, m))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        Checkpoint {
            d_in: 3,
            r: 2,
            activation: Activation::LeakyRelu(0.5),
            skip: false,
            weights: vec![
                Matrix::from_rows(&[[0.1, -0.2, 1.0 / 3.0], [4.0, 5.0, -6.0]]),
                Matrix::from_rows(&[[1e-300, -2.5]]),
            ],
        }
    }

    #[test]
    fn round_trip() {
        let c = sample();
        assert_eq!(Checkpoint::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn rejects_damage() {
        let text = sample().to_text();
        assert!(Checkpoint::parse(&text.replace("W2 1 2", "W2 1 3")).is_err());
        assert!(Checkpoint::parse(&text.replace("bcd-checkpoint 1", "bcd-checkpoint 9")).is_err());
        let truncated: String = text.lines().take(8).collect::<Vec<_>>().join("\n");
        assert!(Checkpoint::parse(&truncated).unwrap_err().contains("unexpected end"));
        let err = Checkpoint::parse(&text.replace("-2.5", "x")).unwrap_err();
        assert!(err.starts_with("line 11"), "{err}");
    }
}
