//! Versioned text format for networks.
//!
//! ```text
//! mexlab-network v1
//! layers 2
//! layer 2 16 relu
//! w <16*2 row-major values>
//! b <16 values>
//! layer 16 3 softmax
//! ...
//! ```
//!
//! Values are written with the shortest representation that parses back to
//! the same bits.

use std::io::{BufRead, Write};

use super::{Activation, Layer, Network};
use crate::error::{Error, Result};

const MAGIC: &str = "mexlab-network v1";

pub fn write_network<W: Write>(net: &Network, mut w: W) -> Result<()> {
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "layers {}", net.layers.len())?;
    for l in &net.layers {
        writeln!(w, "layer {} {} {}", l.inputs, l.outputs, l.activation.tag())?;
        write_values(&mut w, "w", &l.weights)?;
        write_values(&mut w, "b", &l.bias)?;
    }
    Ok(())
}

fn write_values<W: Write>(w: &mut W, tag: &str, values: &[f64]) -> Result<()> {
    write!(w, "{tag}")?;
    for v in values {
        write!(w, " {v:?}")?;
    }
    writeln!(w)?;
    Ok(())
}

pub fn read_network<R: BufRead>(r: R) -> Result<Network> {
    let mut lines = r.lines();
    let mut next = move || -> Result<String> {
        lines
            .next()
            .ok_or_else(|| Error::Parse("unexpected end of network file".into()))?
            .map_err(Error::from)
    };
    let magic = next()?;
    if magic.trim() != MAGIC {
        return Err(Error::Parse(format!(
            "unsupported network header `{magic}`"
        )));
    }
    let count_line = next()?;
    let count: usize = count_line
        .strip_prefix("layers ")
        .and_then(|c| c.trim().parse().ok())
        .ok_or_else(|| Error::Parse(format!("bad layer count line `{count_line}`")))?;
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let header = next()?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "layer" {
            return Err(Error::Parse(format!("bad layer header `{header}`")));
        }
        let inputs = parse_usize(parts[1])?;
        let outputs = parse_usize(parts[2])?;
        let activation = Activation::from_tag(parts[3])
            .ok_or_else(|| Error::Parse(format!("unknown activation `{}`", parts[3])))?;
        let weights = read_values(&next()?, "w")?;
        let bias = read_values(&next()?, "b")?;
        layers.push(Layer::new(inputs, outputs, weights, bias, activation)?);
    }
    Network::new(layers)
}

fn parse_usize(s: &str) -> Result<usize> {
    s.parse()
        .map_err(|_| Error::Parse(format!("expected integer, found `{s}`")))
}

fn read_values(line: &str, tag: &str) -> Result<Vec<f64>> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(tag) {
        return Err(Error::Parse(format!("expected `{tag}` row")));
    }
    parts
        .map(|p| {
            p.parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number `{p}`")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::Architecture;

    #[test]
    fn round_trip_is_bit_exact() {
        let net = Architecture::new(5, vec![7, 3], 4).init(42);
        let mut buf = Vec::new();
        write_network(&net, &mut buf).unwrap();
        let back = read_network(buf.as_slice()).unwrap();
        let bits = |n: &Network| {
            n.parameters()
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&net), bits(&back));
        assert_eq!(net, back);
    }

    #[test]
    fn rejects_unknown_header() {
        let err = read_network("mexlab-network v9\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
    }

    #[test]
    fn rejects_truncated_file() {
        let net = Architecture::new(2, vec![], 2).init(1);
        let mut buf = Vec::new();
        write_network(&net, &mut buf).unwrap();
        buf.truncate(buf.len() - 10);
        let text = String::from_utf8(buf).unwrap();
        let cut = text.rsplit_once('\n').map_or(text.as_str(), |(a, _)| a);
        assert!(read_network(cut.as_bytes()).is_err());
    }
}
