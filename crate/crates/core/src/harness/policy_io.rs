//! Policy directories: a JSON manifest plus one checkpoint per actor or one
//! Q-table dump per agent.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marl::{parse_qtable, write_qtable, ObsEncoder, PolicySet};
use crate::neural::{parse_checkpoint, write_checkpoint};

pub const POLICY_MANIFEST: &str = "policy.json";

/// Contents of `policy.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyManifest {
    Facmac { encoder: ObsEncoder, actors: usize },
    Iql { tables: usize },
}

fn actor_file(k: usize) -> String {
    format!("actor-{k}.ckpt")
}

fn table_file(k: usize) -> String {
    format!("qtable-{k}.txt")
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn save_policy(dir: &Path, policy: &PolicySet) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = match policy {
        PolicySet::Facmac { actors, encoder } => {
            for (k, a) in actors.iter().enumerate() {
                write(&dir.join(actor_file(k)), &write_checkpoint(a))?;
            }
            PolicyManifest::Facmac {
                encoder: *encoder,
                actors: actors.len(),
            }
        }
        PolicySet::Iql { tables } => {
            for (k, t) in tables.iter().enumerate() {
                write(&dir.join(table_file(k)), &write_qtable(t))?;
            }
            PolicyManifest::Iql { tables: tables.len() }
        }
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    write(&dir.join(POLICY_MANIFEST), &json)
}

pub fn parse_manifest(text: &str) -> Result<PolicyManifest> {
    serde_json::from_str(text).map_err(|e| Error::parse(POLICY_MANIFEST, e.line(), e.to_string()))
}

pub fn load_policy(dir: &Path) -> Result<PolicySet> {
    let path = dir.join(POLICY_MANIFEST);
    let manifest = parse_manifest(&read(&path)?)?;
    Ok(match manifest {
        PolicyManifest::Facmac { encoder, actors } => PolicySet::Facmac {
            actors: (0..actors)
                .map(|k| parse_checkpoint(&read(&dir.join(actor_file(k)))?))
                .collect::<Result<_>>()?,
            encoder,
        },
        PolicyManifest::Iql { tables } => PolicySet::Iql {
            tables: (0..tables)
                .map(|k| parse_qtable(&read(&dir.join(table_file(k)))?))
                .collect::<Result<_>>()?,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marl::{train, Method, TrainConfig};
    use crate::profiles::{generate_profiles, ProfileTemplate};

    #[test]
    fn saved_policies_load_identically() {
        let s = generate_profiles(0, 2, 1, &ProfileTemplate::default()).unwrap();
        let cfg = TrainConfig {
            episodes: 1,
            ..TrainConfig::default()
        };
        for m in [Method::Facmac, Method::Iql] {
            let policy = train(m, &s, &s, &cfg, 3).unwrap().policy;
            let dir = tempfile::tempdir().unwrap();
            save_policy(dir.path(), &policy).unwrap();
            assert_eq!(load_policy(dir.path()).unwrap(), policy);
        }
    }

    #[test]
    fn missing_files_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_policy(dir.path()), Err(Error::Io { .. })));
        fs::write(dir.path().join(POLICY_MANIFEST), r#"{"kind":"iql","tables":1}"#).unwrap();
        assert!(matches!(load_policy(dir.path()), Err(Error::Io { .. })));
        fs::write(dir.path().join(POLICY_MANIFEST), r#"{"kind":"sarsa"}"#).unwrap();
        assert!(matches!(load_policy(dir.path()), Err(Error::Parse { .. })));
    }
}
