//! Line-oriented text encoding of networks.
//!
//! ```text
//! stiffnet-network v1
//! depth 2
//! layer 4 2 dense
//! 1 -1
//! ...
//! bias 0 0 0 0
//! layer 1 4 sparse 4
//! 0 0 5e-1
//! ...
//! bias 0
//! end
//! ```
//!
//! Weights are listed row-major, either as full rows or as `row col value`
//! triplets when most entries are zero. Values use the shortest exponent form
//! that parses back to the same bits.

use super::matrix::{Builder, Matrix};
use super::{Layer, Network};
use crate::error::{Error, Result};
use std::fmt::Write as _;

pub const FORMAT_TAG: &str = "stiffnet-network v1";

pub fn write_network(net: &Network) -> String {
    let mut s = String::new();
    writeln!(s, "{FORMAT_TAG}").unwrap();
    writeln!(s, "depth {}", net.depth()).unwrap();
    for layer in net.layers() {
        let w = layer.weight();
        let (r, c) = (w.rows(), w.cols());
        if w.nnz() * 3 < r * c {
            writeln!(s, "layer {r} {c} sparse {}", w.nnz()).unwrap();
            for i in 0..r {
                for (j, v) in w.row(i) {
                    writeln!(s, "{i} {j} {v:e}").unwrap();
                }
            }
        } else {
            writeln!(s, "layer {r} {c} dense").unwrap();
            let data = w.to_row_major();
            for i in 0..r {
                let row: Vec<String> = data[i * c..(i + 1) * c]
                    .iter()
                    .map(|v| format!("{v:e}"))
                    .collect();
                writeln!(s, "{}", row.join(" ")).unwrap();
            }
        }
        s.push_str("bias");
        for b in layer.bias() {
            write!(s, " {b:e}").unwrap();
        }
        s.push('\n');
    }
    s.push_str("end\n");
    s
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<Vec<&'a str>> {
        for (i, l) in self.inner.by_ref() {
            self.line = i + 1;
            let l = l.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            return Ok(l.split_whitespace().collect());
        }
        Err(self.err("unexpected end of input"))
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn count(&self, tok: &str) -> Result<usize> {
        tok.parse::<usize>()
            .map_err(|_| self.err(format!("expected a count, found {tok:?}")))
    }

    fn value(&self, tok: &str) -> Result<f64> {
        let v = tok
            .parse::<f64>()
            .map_err(|_| self.err(format!("expected a number, found {tok:?}")))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.err(format!("non-finite value {tok:?}")))
        }
    }
}

pub fn parse_network(text: &str) -> Result<Network> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    let head = lines.next()?;
    if head.join(" ") != FORMAT_TAG {
        return Err(lines.err(format!("expected header {FORMAT_TAG:?}")));
    }
    let depth = match lines.next()?.as_slice() {
        ["depth", n] => lines.count(n)?,
        _ => return Err(lines.err("expected `depth <L>`")),
    };
    if depth == 0 {
        return Err(lines.err("depth must be at least 1"));
    }
    let mut layers = Vec::new();
    for _ in 0..depth {
        let header = lines.next()?;
        let (r, c, sparse_nnz) = match header.as_slice() {
            ["layer", r, c, "dense"] => (lines.count(r)?, lines.count(c)?, None),
            ["layer", r, c, "sparse", k] => {
                (lines.count(r)?, lines.count(c)?, Some(lines.count(k)?))
            }
            _ => return Err(lines.err("expected `layer <rows> <cols> dense|sparse <nnz>`")),
        };
        if c > u32::MAX as usize || r > u32::MAX as usize {
            return Err(lines.err("layer shape too large"));
        }
        let mut b = Builder::new(r, c);
        match sparse_nnz {
            None => {
                for _ in 0..r {
                    let toks = lines.next()?;
                    if toks.len() != c {
                        return Err(
                            lines.err(format!("expected {c} weights, found {}", toks.len()))
                        );
                    }
                    for (j, t) in toks.iter().enumerate() {
                        b.push(j, lines.value(t)?);
                    }
                    b.end_row();
                }
            }
            Some(k) => {
                if k as u128 > r as u128 * c as u128 {
                    return Err(lines.err("more nonzeros than entries"));
                }
                let mut row = 0usize;
                let mut last: Option<(usize, usize)> = None;
                for _ in 0..k {
                    let toks = lines.next()?;
                    let [i, j, v] = toks.as_slice() else {
                        return Err(lines.err("expected `<row> <col> <value>`"));
                    };
                    let (i, j, v) = (lines.count(i)?, lines.count(j)?, lines.value(v)?);
                    if i >= r || j >= c {
                        return Err(lines.err(format!("entry ({i},{j}) outside {r}x{c}")));
                    }
                    if last.is_some_and(|p| p >= (i, j)) {
                        return Err(lines.err("sparse entries must be strictly row-major"));
                    }
                    last = Some((i, j));
                    while row < i {
                        b.end_row();
                        row += 1;
                    }
                    b.push(j, v);
                }
                while row < r {
                    b.end_row();
                    row += 1;
                }
            }
        }
        let weight: Matrix = b.finish();
        let toks = lines.next()?;
        if toks.first() != Some(&"bias") || toks.len() != r + 1 {
            return Err(lines.err(format!("expected `bias` followed by {r} values")));
        }
        let bias = toks[1..]
            .iter()
            .map(|t| lines.value(t))
            .collect::<Result<Vec<_>>>()?;
        layers.push(Layer::new(weight, bias)?);
    }
    if lines.next()? != ["end"] {
        return Err(lines.err("expected `end`"));
    }
    Network::new(layers).map_err(|e| Error::Parse {
        line: lines.line,
        msg: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let w = Matrix::from_rows(&[vec![0.1, -1.0 / 3.0], vec![f64::MIN_POSITIVE, 1e300]]);
        let sparse = Matrix::from_rows(&[vec![0.0, 0.0, 7.25, 0.0]]).padded(3, 4);
        let net = Network::new(vec![
            Layer::new(w, vec![std::f64::consts::PI, -0.0]).unwrap(),
            Layer::new(
                Matrix::zeros(4, 2).add(&Matrix::identity(2).padded(4, 2)),
                vec![0.0; 4],
            )
            .unwrap(),
            Layer::new(sparse, vec![1e-310, 2.0, 3.0]).unwrap(),
        ])
        .unwrap();
        let text = write_network(&net);
        assert!(text.contains("sparse 1"));
        let back = parse_network(&text).unwrap();
        assert_eq!(back, net);
        for (a, b) in back.layers().iter().zip(net.layers()) {
            for (x, y) in a.bias().iter().zip(b.bias()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(parse_network("").is_err());
        assert!(
            parse_network("stiffnet-network v1\ndepth 1\nlayer 1 1 dense\nNaN\nbias 0\nend\n")
                .is_err()
        );
        assert!(parse_network(
            "stiffnet-network v1\ndepth 1\nlayer 1 1 sparse 2\n0 0 1\n0 0 1\nbias 0\nend\n"
        )
        .is_err());
        let err = parse_network("stiffnet-network v1\ndepth 1\nlayer 1 2 dense\n1\nbias 0\nend\n")
            .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }));
    }
}
