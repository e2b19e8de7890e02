//! Flat `key=value` text format used for config files and checkpoint
//! metadata. Keys are sorted on write, floats use Rust's shortest
//! round-tripping representation, so serialization is byte-stable.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Kv {
    map: BTreeMap<String, String>,
}

impl Kv {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        self.map.insert(key.into(), value.to_string());
    }

    pub fn set_list(&mut self, key: impl Into<String>, values: &[usize]) {
        let joined = values
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        self.map.insert(key.into(), joined);
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|s| s.as_str())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.map.contains_key(key)
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.raw(key).ok_or_else(|| Error::ConfigParse {
            key: key.to_string(),
            reason: "missing".into(),
        })
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.require(key)?;
        raw.parse::<T>().map_err(|_| Error::ConfigParse {
            key: key.to_string(),
            reason: format!("cannot parse `{raw}`"),
        })
    }

    pub fn get_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.raw(key) {
            None => Ok(default),
            Some(_) => self.get(key),
        }
    }

    pub fn get_list(&self, key: &str) -> Result<Vec<usize>> {
        let raw = self.require(key)?;
        raw.split(',')
            .map(|p| {
                p.trim().parse::<usize>().map_err(|_| Error::ConfigParse {
                    key: key.to_string(),
                    reason: format!("cannot parse list element `{p}`"),
                })
            })
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.map {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::ConfigParse {
                    key: format!("line {}", lineno + 1),
                    reason: format!("expected key=value, got `{line}`"),
                });
            };
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(Kv { map })
    }

    pub fn write_file(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_byte_stable() {
        let mut kv = Kv::new();
        kv.set("b.float", 1e-5f32);
        kv.set("a.int", 256usize);
        kv.set_list("c.list", &[8, 8, 2, 2]);
        let text = kv.to_text();
        let back = Kv::parse(&text).unwrap();
        assert_eq!(back.to_text(), text);
        assert_eq!(back.get::<f32>("b.float").unwrap(), 1e-5);
        assert_eq!(back.get::<usize>("a.int").unwrap(), 256);
        assert_eq!(back.get_list("c.list").unwrap(), vec![8, 8, 2, 2]);
    }

    #[test]
    fn float_text_round_trips_exactly() {
        for v in [0.2f32, 1e-5, 11025.0, 0.0001, std::f32::consts::PI] {
            let text = format!("{v}");
            assert_eq!(text.parse::<f32>().unwrap(), v);
        }
    }

    #[test]
    fn comments_and_blanks_ignored() {
        let kv = Kv::parse("# header\n\nx=1\n").unwrap();
        assert_eq!(kv.get::<i32>("x").unwrap(), 1);
    }

    #[test]
    fn malformed_line_rejected() {
        assert!(Kv::parse("not-a-pair\n").is_err());
    }
}
