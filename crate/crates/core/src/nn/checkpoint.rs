//! Checkpoints: `NET v1 <n_layers> <seed>\n`, one layer spec per line, then
//! the flat parameters as a TNSR v1 block.

use std::io::{BufRead, Write};

use super::{LayerSpec, Network};
use crate::error::{Error, Result};
use crate::io::{read_tnsr, write_tnsr, Precision};

pub fn write_checkpoint(out: &mut impl Write, net: &Network) -> Result<()> {
    writeln!(out, "NET v1 {} {}", net.layers().len(), net.seed())?;
    for l in net.layers() {
        writeln!(out, "{l}")?;
    }
    write_tnsr(out, net.params(), Precision::F64)
}

pub fn read_checkpoint(input: &mut impl BufRead) -> Result<Network> {
    let mut line = String::new();
    input.read_line(&mut line)?;
    let head: Vec<&str> = line.split_whitespace().collect();
    if head.len() != 4 || head[0] != "NET" || head[1] != "v1" {
        return Err(Error::Format(format!("bad checkpoint header {line:?}")));
    }
    let bad = |_| Error::Format(format!("bad checkpoint header {line:?}"));
    let n: usize = head[2].parse().map_err(bad)?;
    let seed: u64 = head[3].parse().map_err(bad)?;
    let mut layers = Vec::with_capacity(n);
    for _ in 0..n {
        let mut l = String::new();
        input.read_line(&mut l)?;
        layers.push(l.trim_end().parse::<LayerSpec>()?);
    }
    let mut net = Network::new(layers, seed)?;
    let params = read_tnsr(input)?;
    net.set_params(params)?;
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_network() {
        let mut net = Network::encoder_decoder(3, 4, [4, 6, 8], 17).unwrap();
        net.params_mut().data_mut()[3] = 0.125;
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &net).unwrap();
        assert!(buf.starts_with(b"NET v1 18 17\nconv3x3 3 4\nrelu\n"));
        let back = read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(back.layers(), net.layers());
        assert_eq!(back.params(), net.params());
    }

    #[test]
    fn rejects_mismatched_params() {
        let net = Network::mlp(&[2, 3], false, 0).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &net).unwrap();
        let text = String::from_utf8_lossy(&buf).replace("dense 2 3", "dense 2 4");
        assert!(read_checkpoint(&mut text.as_bytes()).is_err());
    }
}
