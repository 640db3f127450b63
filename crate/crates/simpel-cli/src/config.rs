//! Config loading: TOML with `${VAR}` / `${VAR:-default}` environment
//! interpolation and dotted-path `--set key=value` overrides.

use std::path::Path;

use serde::de::DeserializeOwned;

use crate::Failure;

/// Substitute `${NAME}` and `${NAME:-default}` from the environment.
fn interpolate_env(text: &str) -> Result<String, Failure> {
    let mut out = String::with_capacity(text.len());
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'$' && i + 1 < bytes.len() && bytes[i + 1] == b'{' {
            let end = text[i..]
                .find('}')
                .map(|off| i + off)
                .ok_or_else(|| Failure::Config("unterminated ${ in config".to_string()))?;
            let inner = &text[i + 2..end];
            let (name, default) = match inner.split_once(":-") {
                Some((n, d)) => (n, Some(d)),
                None => (inner, None),
            };
            match std::env::var(name) {
                Ok(v) => out.push_str(&v),
                Err(_) => match default {
                    Some(d) => out.push_str(d),
                    None => {
                        return Err(Failure::Config(format!(
                            "environment variable `{name}` is not set and has no default"
                        )))
                    }
                },
            }
            i = end + 1;
        } else {
            out.push(bytes[i] as char);
            i += 1;
        }
    }
    Ok(out)
}

pub fn load_toml(path: &Path) -> Result<toml::Value, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read config {}: {e}", path.display())))?;
    let text = interpolate_env(&text)?;
    text.parse::<toml::Value>()
        .map_err(|e| Failure::Config(format!("malformed config {}: {e}", path.display())))
}

/// Apply `key.path=value` overrides; the value is parsed as a TOML literal,
/// falling back to a string.
pub fn apply_overrides(root: &mut toml::Value, sets: &[String]) -> Result<(), Failure> {
    for set in sets {
        let (path, raw) = set
            .split_once('=')
            .ok_or_else(|| Failure::Config(format!("--set expects key=value, got `{set}`")))?;
        let value: toml::Value = match format!("v = {raw}").parse::<toml::Value>() {
            Ok(doc) => doc["v"].clone(),
            Err(_) => toml::Value::String(raw.to_string()),
        };
        let parts: Vec<&str> = path.split('.').collect();
        let (last, parents) = parts.split_last().expect("split_once guarantees a key");
        let mut node = &mut *root;
        for part in parents {
            let table = match node {
                toml::Value::Table(t) => t,
                _ => {
                    return Err(Failure::Config(format!(
                        "--set path `{path}`: `{part}` is not a table"
                    )))
                }
            };
            node = table
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(Default::default()));
        }
        match node {
            toml::Value::Table(t) => {
                t.insert(last.to_string(), value);
            }
            _ => {
                return Err(Failure::Config(format!(
                    "--set path `{path}` does not end in a table"
                )))
            }
        }
    }
    Ok(())
}

/// Deserialize one top-level section.
pub fn section<T: DeserializeOwned>(root: &toml::Value, name: &str) -> Result<T, Failure> {
    let value = root
        .get(name)
        .ok_or_else(|| Failure::Config(format!("config is missing the [{name}] section")))?;
    value
        .clone()
        .try_into()
        .map_err(|e| Failure::Config(format!("[{name}]: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_interpolation_with_default() {
        std::env::remove_var("SIMPEL_TEST_UNSET");
        let s = interpolate_env("a = \"${SIMPEL_TEST_UNSET:-fallback}\"").unwrap();
        assert_eq!(s, "a = \"fallback\"");
        assert!(interpolate_env("x = \"${SIMPEL_TEST_UNSET}\"").is_err());
        std::env::set_var("SIMPEL_TEST_SET", "7");
        assert_eq!(interpolate_env("n = ${SIMPEL_TEST_SET}").unwrap(), "n = 7");
    }

    #[test]
    fn overrides_create_nested_tables() {
        let mut v: toml::Value = "a = 1".parse().unwrap();
        apply_overrides(
            &mut v,
            &["b.c=2".to_string(), "a=3".to_string(), "s=hello".to_string()],
        )
        .unwrap();
        assert_eq!(v["b"]["c"].as_integer(), Some(2));
        assert_eq!(v["a"].as_integer(), Some(3));
        assert_eq!(v["s"].as_str(), Some("hello"));
    }
}
