//! Plain-text policy checkpoints.
//!
//! A header of `key = value` lines is followed by a `params` line and then one
//! parameter per line. Networks are listed in order with their architecture
//! strings, so the file is self-describing.

use std::fmt::Write as _;
use std::path::Path;

use paramnoise::agents::{GreedyPolicy, MultiHeadNet, OnlineNormalizer};
use paramnoise::nn::{Architecture, Network};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};
use crate::fmt_f64;

const MAGIC: &str = "paramnoise-checkpoint 1";

#[derive(Debug, Clone)]
pub struct Checkpoint {
    /// SHA-256 of the serialized experiment config.
    pub config_hash: String,
    pub steps: u64,
    pub policy: GreedyPolicy,
}

pub fn config_hash(config_text: &str) -> String {
    hex::encode(Sha256::digest(config_text.as_bytes()))
}

fn join(values: &[f64]) -> String {
    values.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(",")
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{MAGIC}");
        let _ = writeln!(s, "config_hash = {}", self.config_hash);
        let _ = writeln!(s, "steps = {}", self.steps);
        let (kind, nets): (&str, Vec<&Network>) = match &self.policy {
            GreedyPolicy::Argmax { net, head } => {
                let _ = writeln!(s, "head = {head}");
                ("argmax", std::iter::once(net.trunk()).chain(net.heads()).collect())
            }
            GreedyPolicy::Vote { net } => ("vote", std::iter::once(net.trunk()).chain(net.heads()).collect()),
            GreedyPolicy::Logits { net } => ("logits", vec![net]),
            GreedyPolicy::Actor {
                actor,
                normalizer,
                low,
                high,
            } => {
                let _ = writeln!(s, "normalizer.count = {}", normalizer.count());
                let _ = writeln!(s, "normalizer.clip = {}", fmt_f64(normalizer.clip()));
                let _ = writeln!(s, "normalizer.mean = {}", join(normalizer.mean()));
                let _ = writeln!(s, "normalizer.m2 = {}", join(normalizer.m2()));
                let _ = writeln!(s, "action.low = {}", join(low));
                let _ = writeln!(s, "action.high = {}", join(high));
                ("actor", vec![actor])
            }
        };
        let _ = writeln!(s, "policy = {kind}");
        let _ = writeln!(s, "networks = {}", nets.len());
        for (i, net) in nets.iter().enumerate() {
            let _ = writeln!(s, "arch.{i} = {}", net.architecture());
        }
        let _ = writeln!(s, "params");
        for net in &nets {
            for &v in net.param_values() {
                let _ = writeln!(s, "{}", fmt_f64(v));
            }
        }
        s
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let bad = |m: String| HarnessError::format(path, m);
        let mut lines = text.lines();
        if lines.next() != Some(MAGIC) {
            return Err(bad("not a checkpoint file".into()));
        }
        let mut header = std::collections::BTreeMap::new();
        for line in lines.by_ref() {
            if line == "params" {
                break;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("malformed header line {line:?}")))?;
            header.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| header.get(k).ok_or_else(|| bad(format!("missing header key {k}")));
        let num = |k: &str| -> Result<u64> { get(k)?.parse().map_err(|_| bad(format!("invalid {k}"))) };
        let floats = |k: &str| -> Result<Vec<f64>> {
            let v = get(k)?;
            if v.is_empty() {
                return Ok(Vec::new());
            }
            v.split(',')
                .map(|x| x.parse().map_err(|_| bad(format!("invalid number in {k}"))))
                .collect()
        };
        let params: Vec<f64> = lines
            .map(|l| l.trim().parse().map_err(|_| bad(format!("invalid parameter {l:?}"))))
            .collect::<Result<_>>()?;

        let count = num("networks")? as usize;
        let mut offset = 0;
        let mut nets = Vec::with_capacity(count);
        for i in 0..count {
            let arch: Architecture = get(&format!("arch.{i}"))?.parse()?;
            let template = Network::zeroed(arch.clone())?;
            let n = template.num_params();
            let values = params
                .get(offset..offset + n)
                .ok_or_else(|| bad("parameter list too short".into()))?;
            nets.push(Network::from_params(arch, values)?);
            offset += n;
        }
        if offset != params.len() {
            return Err(bad(format!("expected {offset} parameters, found {}", params.len())));
        }
        let multi = |nets: Vec<Network>| -> Result<MultiHeadNet> {
            let mut it = nets.into_iter();
            let trunk = it.next().ok_or_else(|| bad("missing trunk network".into()))?;
            Ok(MultiHeadNet::from_parts(trunk, it.collect())?)
        };
        let single = |mut nets: Vec<Network>| -> Result<Network> {
            if nets.len() != 1 {
                return Err(bad(format!("expected one network, found {}", nets.len())));
            }
            Ok(nets.remove(0))
        };
        let policy = match get("policy")?.as_str() {
            "argmax" => GreedyPolicy::Argmax {
                head: num("head")? as usize,
                net: multi(nets)?,
            },
            "vote" => GreedyPolicy::Vote { net: multi(nets)? },
            "logits" => GreedyPolicy::Logits { net: single(nets)? },
            "actor" => GreedyPolicy::Actor {
                normalizer: OnlineNormalizer::from_parts(
                    num("normalizer.count")?,
                    floats("normalizer.mean")?,
                    floats("normalizer.m2")?,
                    get("normalizer.clip")?
                        .parse()
                        .map_err(|_| bad("invalid normalizer.clip".into()))?,
                )?,
                low: floats("action.low")?,
                high: floats("action.high")?,
                actor: single(nets)?,
            },
            other => return Err(bad(format!("unknown policy kind {other:?}"))),
        };
        Ok(Checkpoint {
            config_hash: get("config_hash")?.clone(),
            steps: num("steps")?,
            policy,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| HarnessError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse(&text, path)
    }
}
