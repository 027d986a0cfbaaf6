use std::fmt::Write as _;
use std::str::FromStr;

use crate::contrastive::NegativeCount;
use crate::error::{Error, Result};
use crate::model::Dims;

/// Hyperparameters for one training run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr_init: f64,
    /// Multiplicative learning-rate factor applied once per epoch.
    pub lr_decay: f64,
    pub alpha: f64,
    pub beta: f64,
    pub dropout: f64,
    pub dims: Dims,
    pub k_hop: usize,
    pub neg_per_anchor: NegativeCount,
    /// Unlabeled pairs drawn per epoch, as a multiple of the labeled training set.
    pub unlabeled_ratio: f64,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_init: 1e-4,
            lr_decay: 0.96,
            alpha: 100.0,
            beta: 0.8,
            dropout: 0.3,
            dims: Dims::default(),
            k_hop: 1,
            neg_per_anchor: NegativeCount::default(),
            unlabeled_ratio: 1.0,
            epochs: 500,
            patience: 30,
            seed: 0,
        }
    }
}

/// Keys accepted by [`TrainConfig::set`], in serialization order.
pub const CONFIG_KEYS: [&str; 18] = [
    "lr_init",
    "lr_decay",
    "alpha",
    "beta",
    "dropout",
    "d_h",
    "d_g",
    "d_u",
    "d_hid",
    "bampn_layers",
    "gcn_layers",
    "k_hop",
    "neg_per_anchor",
    "unlabeled_ratio",
    "epochs",
    "patience",
    "seed",
    "version",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("bad value {value:?} for {key}")))
}

impl TrainConfig {
    /// `lr_init · lr_decay^epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr_init * self.lr_decay.powi(epoch as i32)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        let finite_positive = |v: f64| v.is_finite() && v > 0.0;
        if !finite_positive(self.lr_init) || !finite_positive(self.lr_decay) {
            return bad("learning rate and decay must be positive");
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.alpha.is_finite() && self.beta.is_finite()) {
            return bad("alpha and beta must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        let d = &self.dims;
        if [d.d_h, d.d_g, d.d_u, d.d_hid, d.bampn_layers, d.gcn_layers].contains(&0) {
            return bad("widths and layer counts must be positive");
        }
        if self.k_hop == 0 {
            return bad("k_hop must be at least 1");
        }
        if matches!(self.neg_per_anchor, NegativeCount::Fixed(0) | NegativeCount::Balanced { cap: 0 }) {
            return bad("neg_per_anchor must be at least 1");
        }
        if !(self.unlabeled_ratio >= 0.0 && self.unlabeled_ratio.is_finite()) {
            return bad("unlabeled_ratio must be finite and non-negative");
        }
        if self.epochs == 0 || self.patience == 0 {
            return bad("epochs and patience must be positive");
        }
        Ok(())
    }

    /// Sets one field from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "lr_init" => self.lr_init = parse(key, value)?,
            "lr_decay" => self.lr_decay = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "beta" => self.beta = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "d_h" => self.dims.d_h = parse(key, value)?,
            "d_g" => self.dims.d_g = parse(key, value)?,
            "d_u" => self.dims.d_u = parse(key, value)?,
            "d_hid" => self.dims.d_hid = parse(key, value)?,
            "bampn_layers" => self.dims.bampn_layers = parse(key, value)?,
            "gcn_layers" => self.dims.gcn_layers = parse(key, value)?,
            "k_hop" => self.k_hop = parse(key, value)?,
            "neg_per_anchor" => self.neg_per_anchor = parse_negatives(value)?,
            "unlabeled_ratio" => self.unlabeled_ratio = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            // written for provenance only
            "version" => {}
            _ => return Err(Error::InvalidArgument(format!("unknown config key {key}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidArgument(format!("config line {}: expected key = value", n + 1))
            })?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    /// `key = value` lines that [`TrainConfig::apply_text`] reads back exactly.
    pub fn to_text(&self) -> String {
        let d = &self.dims;
        let neg = match self.neg_per_anchor {
            NegativeCount::Balanced { cap } => format!("balanced:{cap}"),
            NegativeCount::Fixed(n) => n.to_string(),
        };
        let pairs: [(&str, String); 18] = [
            ("lr_init", self.lr_init.to_string()),
            ("lr_decay", self.lr_decay.to_string()),
            ("alpha", self.alpha.to_string()),
            ("beta", self.beta.to_string()),
            ("dropout", self.dropout.to_string()),
            ("d_h", d.d_h.to_string()),
            ("d_g", d.d_g.to_string()),
            ("d_u", d.d_u.to_string()),
            ("d_hid", d.d_hid.to_string()),
            ("bampn_layers", d.bampn_layers.to_string()),
            ("gcn_layers", d.gcn_layers.to_string()),
            ("k_hop", self.k_hop.to_string()),
            ("neg_per_anchor", neg),
            ("unlabeled_ratio", self.unlabeled_ratio.to_string()),
            ("epochs", self.epochs.to_string()),
            ("patience", self.patience.to_string()),
            ("seed", self.seed.to_string()),
            ("version", env!("CARGO_PKG_VERSION").to_string()),
        ];
        let mut out = String::new();
        for (k, v) in pairs {
            writeln!(out, "{k} = {v}").expect("writing to a String");
        }
        out
    }
}

/// `balanced`, `balanced:CAP` or a fixed count.
pub fn parse_negatives(value: &str) -> Result<NegativeCount> {
    let value = value.trim();
    if value == "balanced" {
        return Ok(NegativeCount::default());
    }
    if let Some(cap) = value.strip_prefix("balanced:") {
        return Ok(NegativeCount::Balanced {
            cap: parse("neg_per_anchor", cap)?,
        });
    }
    Ok(NegativeCount::Fixed(parse("neg_per_anchor", value)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_hyperparameters() {
        let c = TrainConfig::default();
        assert_eq!((c.lr_init, c.lr_decay, c.alpha, c.beta, c.dropout), (1e-4, 0.96, 100.0, 0.8, 0.3));
        assert_eq!((c.dims.d_h, c.dims.d_g), (256, 256));
        assert_eq!(c.k_hop, 1);
        c.validate().unwrap();
    }

    #[test]
    fn schedule_is_exponential() {
        let c = TrainConfig::default();
        assert_eq!(c.lr_at(0), 1e-4);
        for e in [1, 7, 100] {
            assert!((c.lr_at(e) - 1e-4 * 0.96f64.powi(e as i32)).abs() < 1e-20);
        }
    }

    #[test]
    fn text_round_trips() {
        let mut c = TrainConfig {
            lr_init: 3.3e-4,
            alpha: 0.0,
            neg_per_anchor: NegativeCount::Fixed(7),
            seed: 99,
            ..TrainConfig::default()
        };
        c.dims.d_u = 17;
        let mut back = TrainConfig::default();
        back.apply_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
        c.neg_per_anchor = NegativeCount::Balanced { cap: 12 };
        back.apply_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn bad_input_is_rejected() {
        let mut c = TrainConfig::default();
        assert!(c.apply_text("alpha 3").is_err());
        assert!(c.apply_text("gamma = 3").is_err());
        assert!(c.apply_text("epochs = many").is_err());
        c.apply_text("# comment\n\n dropout = 0.5 # trailing\n").unwrap();
        assert_eq!(c.dropout, 0.5);
        c.dropout = 1.0;
        assert!(c.validate().is_err());
    }
}
