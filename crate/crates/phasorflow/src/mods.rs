//! Modification scripts: an ordered list of feeder edits.

use std::path::Path;

use phasorflow_core::feeder::Modification;
use phasorflow_core::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io::read_json;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModsDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
    pub modifications: Vec<ModDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModDoc {
    RemoveRegulator {
        from: String,
        to: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        note: Option<String>,
    },
    ReplaceWithLine {
        from: String,
        to: String,
        config: String,
        length_ft: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        note: Option<String>,
    },
    AddSpotLoad {
        node: String,
        /// One load per listed phase, e.g. `"abc"`.
        phases: String,
        re: f64,
        im: f64,
        #[serde(rename = "beta_S")]
        beta_s: f64,
        #[serde(rename = "beta_Z")]
        beta_z: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        note: Option<String>,
    },
    ScaleLoads {
        factor: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        note: Option<String>,
    },
    SetLoadModel {
        #[serde(rename = "beta_S")]
        beta_s: f64,
        #[serde(rename = "beta_Z")]
        beta_z: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        note: Option<String>,
    },
}

impl ModsDoc {
    pub fn load(path: &Path) -> Result<ModsDoc> {
        read_json(path)
    }

    pub fn to_modifications(&self) -> Result<Vec<Modification>> {
        let mut out = Vec::new();
        for m in &self.modifications {
            match m {
                ModDoc::RemoveRegulator { from, to, .. } => out.push(Modification::RemoveRegulator {
                    from: from.clone(),
                    to: to.clone(),
                }),
                ModDoc::ReplaceWithLine {
                    from,
                    to,
                    config,
                    length_ft,
                    ..
                } => out.push(Modification::ReplaceWithLine {
                    from: from.clone(),
                    to: to.clone(),
                    config: config.clone(),
                    length_ft: *length_ft,
                }),
                ModDoc::AddSpotLoad {
                    node,
                    phases,
                    re,
                    im,
                    beta_s,
                    beta_z,
                    ..
                } => {
                    for p in crate::schema::phase_set(phases)?.iter() {
                        out.push(Modification::AddSpotLoad {
                            node: node.clone(),
                            phase: p,
                            demand: Complex64::new(*re, *im),
                            beta_s: *beta_s,
                            beta_z: *beta_z,
                        });
                    }
                }
                ModDoc::ScaleLoads { factor, .. } => out.push(Modification::ScaleLoads { factor: *factor }),
                ModDoc::SetLoadModel { beta_s, beta_z, .. } => out.push(Modification::SetLoadModel {
                    beta_s: *beta_s,
                    beta_z: *beta_z,
                }),
            }
        }
        Ok(out)
    }
}
