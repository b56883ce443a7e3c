//! Bundled experiment configurations.

pub const PRESETS: &[(&str, &str)] = &[
    ("ade-bias", include_str!("../presets/ade-bias.toml")),
    ("ade-coverage-sweep", include_str!("../presets/ade-coverage-sweep.toml")),
    ("sb-bias", include_str!("../presets/sb-bias.toml")),
    ("sb-coverage-sweep", include_str!("../presets/sb-coverage-sweep.toml")),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::FileConfig;

    #[test]
    fn presets_parse_and_validate() {
        for (name, text) in PRESETS {
            let cfg = FileConfig::parse(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            cfg.scenario().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        assert!(preset("nope").is_none());
    }
}
