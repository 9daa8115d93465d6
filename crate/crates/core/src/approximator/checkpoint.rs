//! Plain-text checkpoints.
//!
//! ```text
//! amp-checkpoint 1
//! kind value
//! layers 3 64 64 1
//! input_norm 3
//! <means>
//! <stds>
//! output_norm none
//! params 4481
//! <one value per line>
//! ```
//!
//! Values are written with 17 significant digits so `f64` weights survive a
//! round trip bit for bit.

use std::io::{BufRead, Write};

use super::mlp::Mlp;
use super::normalize::Standardizer;
use super::value::ValueNet;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::stats::fmt17;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "amp-checkpoint";

fn join<T: Scalar>(xs: &[T]) -> String {
    xs.iter().map(|x| fmt17(x.as_f64())).collect::<Vec<_>>().join(" ")
}

fn write_norm<W: Write, T: Scalar>(out: &mut W, name: &str, s: &Option<Standardizer<T>>) -> Result<()> {
    match s {
        None => writeln!(out, "{name} none")?,
        Some(s) => {
            writeln!(out, "{name} {}", s.dim())?;
            writeln!(out, "{}", join(&s.mean))?;
            writeln!(out, "{}", join(&s.std))?;
        }
    }
    Ok(())
}

fn write_body<W: Write, T: Scalar>(out: &mut W, kind: &str, net: &Mlp<T>) -> Result<()> {
    writeln!(out, "{MAGIC} {CHECKPOINT_VERSION}")?;
    writeln!(out, "kind {kind}")?;
    let sizes: Vec<String> = net.layer_sizes().iter().map(|s| s.to_string()).collect();
    writeln!(out, "layers {}", sizes.join(" "))?;
    Ok(())
}

fn write_params<W: Write, T: Scalar>(out: &mut W, net: &Mlp<T>) -> Result<()> {
    writeln!(out, "params {}", net.num_params())?;
    for p in net.params() {
        writeln!(out, "{}", fmt17(p.as_f64()))?;
    }
    Ok(())
}

pub fn write_mlp<W: Write, T: Scalar>(mut out: W, net: &Mlp<T>) -> Result<()> {
    write_body(&mut out, "mlp", net)?;
    write_params(&mut out, net)
}

pub fn write_value_net<W: Write, T: Scalar>(mut out: W, v: &ValueNet<T>) -> Result<()> {
    write_body(&mut out, "value", &v.net)?;
    write_norm(&mut out, "input_norm", &v.input)?;
    write_norm(&mut out, "output_norm", &v.output)?;
    write_params(&mut out, &v.net)
}

struct Lines<R> {
    inner: R,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn next(&mut self) -> Result<String> {
        let mut s = String::new();
        self.line += 1;
        if self.inner.read_line(&mut s)? == 0 {
            return Err(Error::Checkpoint(format!("unexpected end of file at line {}", self.line)));
        }
        Ok(s.trim_end().to_string())
    }

    fn keyed(&mut self, key: &str) -> Result<String> {
        let l = self.next()?;
        l.strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .map(str::to_string)
            .ok_or_else(|| Error::Checkpoint(format!("line {}: expected `{key} ...`, got `{l}`", self.line)))
    }

    fn floats<T: Scalar>(&mut self, n: usize) -> Result<Vec<T>> {
        let l = self.next()?;
        let v = l
            .split_whitespace()
            .map(|t| t.parse::<f64>().map(T::of))
            .collect::<std::result::Result<Vec<T>, _>>()
            .map_err(|e| Error::Checkpoint(format!("line {}: {e}", self.line)))?;
        if v.len() != n {
            return Err(Error::Checkpoint(format!("line {}: expected {n} values, got {}", self.line, v.len())));
        }
        Ok(v)
    }
}

fn parse_usize(s: &str, line: usize) -> Result<usize> {
    s.trim().parse().map_err(|_| Error::Checkpoint(format!("line {line}: bad integer `{s}`")))
}

fn read_header<R: BufRead>(lines: &mut Lines<R>, kind: &str) -> Result<Vec<usize>> {
    let version = lines.keyed(MAGIC)?;
    if parse_usize(&version, lines.line)? != CHECKPOINT_VERSION as usize {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let k = lines.keyed("kind")?;
    if k != kind {
        return Err(Error::Checkpoint(format!("expected a `{kind}` checkpoint, found `{k}`")));
    }
    let sizes = lines.keyed("layers")?;
    sizes.split_whitespace().map(|s| parse_usize(s, lines.line)).collect()
}

fn read_norm<R: BufRead, T: Scalar>(lines: &mut Lines<R>, key: &str) -> Result<Option<Standardizer<T>>> {
    let v = lines.keyed(key)?;
    if v == "none" {
        return Ok(None);
    }
    let d = parse_usize(&v, lines.line)?;
    let mean = lines.floats(d)?;
    let std = lines.floats(d)?;
    Ok(Some(Standardizer { mean, std }))
}

fn read_params<R: BufRead, T: Scalar>(lines: &mut Lines<R>, sizes: &[usize]) -> Result<Mlp<T>> {
    let n = parse_usize(&lines.keyed("params")?, lines.line)?;
    let params = (0..n).map(|_| lines.floats::<T>(1).map(|v| v[0])).collect::<Result<Vec<T>>>()?;
    Mlp::from_params(sizes, params)
}

pub fn read_mlp<R: BufRead, T: Scalar>(input: R) -> Result<Mlp<T>> {
    let mut lines = Lines { inner: input, line: 0 };
    let sizes = read_header(&mut lines, "mlp")?;
    read_params(&mut lines, &sizes)
}

pub fn read_value_net<R: BufRead, T: Scalar>(input: R) -> Result<ValueNet<T>> {
    let mut lines = Lines { inner: input, line: 0 };
    let sizes = read_header(&mut lines, "value")?;
    let input = read_norm(&mut lines, "input_norm")?;
    let output = read_norm(&mut lines, "output_norm")?;
    let net = read_params(&mut lines, &sizes)?;
    Ok(ValueNet { net, input, output })
}
