//! Model config files (TOML) and the canonical serialization behind weight fingerprints.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{Activation, Head, ModelSpec};
use crate::error::{Error, Result};
use crate::nn::Padding;

impl ModelSpec {
    pub fn from_config_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::format("model config", e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_config_str(&text)
    }

    /// Human-editable TOML, one inline table per sublayer.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "name = {}", toml_str(&self.name));
        let _ = writeln!(s, "input_size = {}", self.input_size);
        let _ = writeln!(s, "input_channels = {}", self.input_channels);
        let _ = writeln!(s, "max_channel_width = {}", self.max_channel_width);
        let _ = writeln!(s);
        let _ = writeln!(s, "[head]");
        match self.head {
            Head::Detection { num_classes } => {
                let _ = writeln!(s, "kind = \"detection\"\nnum_classes = {num_classes}");
            }
            Head::ClassifyV1 { num_classes } => {
                let _ = writeln!(s, "kind = \"classify_v1\"\nnum_classes = {num_classes}");
            }
            Head::ClassifyV2 { num_classes, grid } => {
                let _ = writeln!(
                    s,
                    "kind = \"classify_v2\"\nnum_classes = {num_classes}\ngrid = {grid}"
                );
            }
        }
        for ml in &self.major_layers {
            let _ = writeln!(s, "\n[[major_layers]]");
            let _ = writeln!(s, "pool_after = {}", ml.pool_after);
            if let Some(m) = ml.mid_pool {
                let _ = writeln!(s, "mid_pool = {m}");
            }
            let _ = writeln!(s, "sublayers = [");
            for l in &ml.sublayers {
                let _ = writeln!(
                    s,
                    "  {{ in_channels = {}, out_channels = {}, padding = \"{}\", activation = \"{}\" }},",
                    l.in_channels,
                    l.out_channels,
                    padding_str(l.padding),
                    activation_str(l.activation)
                );
            }
            let _ = writeln!(s, "]");
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_config_string()).map_err(|e| Error::io(path, e))
    }

    /// Structural fields only, one per line; `name` and the channel-width ceiling are
    /// excluded because they do not affect the weights.
    pub fn canonical_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "input_size={}", self.input_size);
        let _ = writeln!(s, "input_channels={}", self.input_channels);
        let _ = match self.head {
            Head::Detection { num_classes } => writeln!(s, "head=detection:{num_classes}"),
            Head::ClassifyV1 { num_classes } => writeln!(s, "head=classify_v1:{num_classes}"),
            Head::ClassifyV2 { num_classes, grid } => {
                writeln!(s, "head=classify_v2:{num_classes}:{grid}")
            }
        };
        for ml in &self.major_layers {
            let mid = ml.mid_pool.map_or("-".to_string(), |m| m.to_string());
            let _ = writeln!(
                s,
                "major:pool_after={}:mid_pool={mid}",
                u8::from(ml.pool_after)
            );
            for l in &ml.sublayers {
                let _ = writeln!(
                    s,
                    "sub:{}:{}:{}:{}",
                    l.in_channels,
                    l.out_channels,
                    padding_str(l.padding),
                    activation_str(l.activation)
                );
            }
        }
        s
    }

    /// First 8 bytes (little-endian) of the SHA-256 of [`Self::canonical_string`].
    pub fn fingerprint(&self) -> u64 {
        let digest = Sha256::digest(self.canonical_string().as_bytes());
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }
}

fn padding_str(p: Padding) -> &'static str {
    match p {
        Padding::Same => "same",
        Padding::Valid => "valid",
    }
}

fn activation_str(a: Activation) -> &'static str {
    match a {
        Activation::Relu => "relu",
        Activation::None => "none",
    }
}

fn toml_str(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        build_gnetdet_large, build_gnetdet_small, build_gnetfc_v1, build_gnetfc_v2,
    };

    #[test]
    fn config_round_trips() {
        for spec in [
            build_gnetdet_large(224, 1, 20).unwrap(),
            build_gnetdet_small(448, 3, 5).unwrap(),
            build_gnetfc_v1(3, 10, 128).unwrap(),
            build_gnetfc_v2(1, 1000, 7, 256).unwrap(),
        ] {
            let text = spec.to_config_string();
            assert_eq!(ModelSpec::from_config_str(&text).unwrap(), spec, "{text}");
        }
    }

    #[test]
    fn max_channel_width_defaults() {
        let spec = build_gnetdet_large(224, 1, 20).unwrap();
        let text = spec
            .to_config_string()
            .replace("max_channel_width = 512\n", "");
        assert_eq!(ModelSpec::from_config_str(&text).unwrap(), spec);
    }

    #[test]
    fn parse_errors_are_format_errors() {
        assert!(matches!(
            ModelSpec::from_config_str("name = 3"),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn fingerprint_tracks_structure_not_name() {
        let a = build_gnetdet_large(224, 1, 20).unwrap();
        let mut b = a.clone();
        b.name = "renamed".into();
        assert_eq!(a.fingerprint(), b.fingerprint());
        let c = build_gnetdet_large(224, 1, 19).unwrap();
        assert_ne!(a.fingerprint(), c.fingerprint());
        let mut d = a.clone();
        d.major_layers[5].sublayers[2].activation = Activation::Relu;
        assert_ne!(a.fingerprint(), d.fingerprint());
    }
}
