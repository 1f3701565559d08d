use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{detokenize, tokenize, Feature, Instance, Table};

/// Corpus split. Train and dev instances must carry the auxiliary summary;
/// test instances may omit it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn parse(name: &str) -> Result<Split> {
        match name {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RecordDto {
    entity: String,
    #[serde(rename = "type")]
    rtype: String,
    value: String,
    feature: Feature,
}

#[derive(Serialize, Deserialize)]
struct InstanceDto {
    id: String,
    table: Vec<RecordDto>,
    #[serde(skip_serializing_if = "Option::is_none")]
    table_prime: Option<Vec<RecordDto>>,
    reference: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    aux: Option<String>,
}

fn table_from_dtos(dtos: Vec<RecordDto>, id: &str) -> Result<Table> {
    let cells = dtos
        .into_iter()
        .map(|r| (r.entity, r.rtype, r.value, r.feature))
        .collect();
    Table::new(cells).map_err(|e| Error::Corpus {
        id: id.to_string(),
        msg: e.to_string(),
    })
}

fn table_to_dtos(table: &Table) -> Vec<RecordDto> {
    table
        .linearize()
        .iter()
        .map(|r| RecordDto {
            entity: r.entity.clone(),
            rtype: r.rtype.clone(),
            value: r.value.clone(),
            feature: r.feature,
        })
        .collect()
}

/// Load a JSON Lines corpus file: one instance per line with fields
/// `{id, table, table_prime, reference, aux}`.
pub fn parse_corpus(path: &Path, split: Split) -> Result<Vec<Instance>> {
    let text = fs::read_to_string(path)?;
    let mut instances = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let dto: InstanceDto = serde_json::from_str(line).map_err(|e| Error::Corpus {
            id: format!("line {}", lineno + 1),
            msg: e.to_string(),
        })?;
        let id = dto.id.clone();
        let x = table_from_dtos(dto.table, &id)?;
        let x_prime = match dto.table_prime {
            Some(t) => Some(table_from_dtos(t, &id)?),
            None => None,
        };
        let y_prime = tokenize(&dto.reference);
        if y_prime.is_empty() {
            return Err(Error::Corpus {
                id,
                msg: "empty reference summary".into(),
            });
        }
        let y_aux = dto.aux.as_deref().map(tokenize);
        if matches!(split, Split::Train | Split::Dev) && y_aux.is_none() {
            return Err(Error::Corpus {
                id,
                msg: "train/dev instance without auxiliary summary".into(),
            });
        }
        instances.push(Instance {
            id,
            x,
            x_prime,
            y_prime,
            y_aux,
        });
    }
    if instances.is_empty() {
        return Err(Error::Corpus {
            id: path.display().to_string(),
            msg: "empty corpus file".into(),
        });
    }
    Ok(instances)
}

/// Write a corpus as JSON Lines, inverse of [`parse_corpus`].
pub fn write_corpus(path: &Path, instances: &[Instance]) -> Result<()> {
    let mut file = fs::File::create(path)?;
    for inst in instances {
        let dto = InstanceDto {
            id: inst.id.clone(),
            table: table_to_dtos(&inst.x),
            table_prime: inst.x_prime.as_ref().map(table_to_dtos),
            reference: detokenize(&inst.y_prime),
            aux: inst.y_aux.as_ref().map(|t| detokenize(t)),
        };
        serde_json::to_writer(&mut file, &dto)?;
        file.write_all(b"\n")?;
    }
    Ok(())
}

/// Split statistics the loader reports.
#[derive(Clone, Debug, Serialize)]
pub struct SplitStats {
    pub instances: usize,
    pub avg_reference_len: f64,
    pub n_types: usize,
    pub avg_input_records: f64,
}

pub fn stats(instances: &[Instance]) -> SplitStats {
    let n = instances.len();
    let ref_len: usize = instances.iter().map(|i| i.y_prime.len()).sum();
    let records: usize = instances.iter().map(|i| i.x.len()).sum();
    let mut types = std::collections::BTreeSet::new();
    for inst in instances {
        for t in inst.x.types() {
            types.insert(t.to_string());
        }
    }
    SplitStats {
        instances: n,
        avg_reference_len: ref_len as f64 / n.max(1) as f64,
        n_types: types.len(),
        avg_input_records: records as f64 / n.max(1) as f64,
    }
}
