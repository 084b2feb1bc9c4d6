//! Plain-text parameter checkpoints.
//!
//! ```text
//! homeflex-checkpoint 1
//! spec <NetworkSpec as single-line JSON>
//! params <count>
//! <one parameter per line, shortest round-trip decimal>
//! end
//! ```
//! Parameters follow the layer declaration order of the spec; within a
//! layer, weights (row-major) come before biases.

use std::fmt::Write as _;

use super::{Network, NetworkSpec};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "homeflex-checkpoint 1";
const MAX_PARAMS: usize = 1 << 24;
const FILE: &str = "checkpoint";

pub fn write_checkpoint(net: &Network) -> String {
    let spec = serde_json::to_string(net.spec()).expect("spec serialises");
    let mut out = String::with_capacity(24 * net.params().len() + spec.len() + 64);
    let _ = writeln!(out, "{CHECKPOINT_MAGIC}");
    let _ = writeln!(out, "spec {spec}");
    let _ = writeln!(out, "params {}", net.params().len());
    for p in net.params() {
        let _ = writeln!(out, "{p}");
    }
    out.push_str("end\n");
    out
}

pub fn parse_checkpoint(text: &str) -> Result<Network> {
    let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l));
    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| Error::parse(FILE, 0, format!("unexpected end of file, expected {what}")))
    };
    let (ln, magic) = next("header")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::parse(FILE, ln, format!("expected `{CHECKPOINT_MAGIC}`")));
    }
    let (ln, spec_line) = next("spec")?;
    let json = spec_line
        .strip_prefix("spec ")
        .ok_or_else(|| Error::parse(FILE, ln, "expected `spec <json>`"))?;
    let spec: NetworkSpec =
        serde_json::from_str(json).map_err(|e| Error::parse(FILE, ln, e.to_string()))?;
    spec.check().map_err(|e| Error::parse(FILE, ln, e.to_string()))?;
    let expected = spec.param_count();
    if expected > MAX_PARAMS {
        return Err(Error::parse(FILE, ln, format!("{expected} parameters exceed the limit")));
    }
    let (ln, count_line) = next("parameter count")?;
    let count: usize = count_line
        .strip_prefix("params ")
        .and_then(|c| c.trim().parse().ok())
        .ok_or_else(|| Error::parse(FILE, ln, "expected `params <count>`"))?;
    if count != expected {
        return Err(Error::parse(
            FILE,
            ln,
            format!("{count} parameters listed, spec needs {expected}"),
        ));
    }
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let (ln, v) = next("parameter")?;
        let value: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::parse(FILE, ln, format!("invalid number `{v}`")))?;
        if !value.is_finite() {
            return Err(Error::parse(FILE, ln, "non-finite parameter"));
        }
        params.push(value);
    }
    let (ln, end) = next("end")?;
    if end != "end" {
        return Err(Error::parse(FILE, ln, "expected `end`"));
    }
    Network::from_params(spec, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{Activation, LayerSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net() -> Network {
        let spec = NetworkSpec::new(
            5,
            vec![
                LayerSpec::Conv1d {
                    channels_in: 1,
                    channels_out: 2,
                    length: 4,
                    passthrough: 1,
                    activation: Activation::Relu,
                },
                LayerSpec::Dense {
                    inputs: 9,
                    outputs: 2,
                    activation: Activation::Identity,
                },
                LayerSpec::Heads {
                    activations: vec![Activation::Tanh, Activation::Sigmoid],
                },
            ],
        )
        .unwrap();
        Network::init(spec, &mut ChaCha8Rng::seed_from_u64(3)).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let n = net();
        let back = parse_checkpoint(&write_checkpoint(&n)).unwrap();
        assert_eq!(back.spec(), n.spec());
        assert_eq!(back.params(), n.params());
    }

    #[test]
    fn malformed_files_name_the_line() {
        let text = write_checkpoint(&net());
        let broken = text.replacen("params 28", "params 27", 1);
        assert!(matches!(parse_checkpoint(&broken), Err(Error::Parse { line: 3, .. })));
        let mut lines: Vec<&str> = text.lines().collect();
        lines[5] = "abc";
        assert!(matches!(
            parse_checkpoint(&lines.join("\n")),
            Err(Error::Parse { line: 6, .. })
        ));
        assert!(parse_checkpoint("").is_err());
        assert!(parse_checkpoint(&text[..text.len() - 4]).is_err());
    }
}
