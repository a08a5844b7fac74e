//! Dataset files: `<name>.meta` holds a one-line JSON header (spec +
//! generator version), `<name>.data` one JSON instance per line, and
//! `<name>.q` the portfolio risk matrix as rows of space-separated numbers.
//! Everything is deterministic, so identical inputs produce identical bytes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pto::PtoInstance;

use super::{Dataset, DatasetSpec};

#[derive(Serialize, Deserialize)]
struct MetaHeader {
    spec: DatasetSpec,
    generator_version: String,
}

pub fn save_dataset(dataset: &Dataset, dir: &Path, name: &str) -> Result<()> {
    dataset.validate()?;
    fs::create_dir_all(dir)?;
    let header = MetaHeader {
        spec: dataset.spec.clone(),
        generator_version: dataset.generator_version.clone(),
    };
    let mut meta = serde_json::to_string(&header)?;
    meta.push('\n');
    fs::write(dir.join(format!("{name}.meta")), meta)?;

    let mut data = String::new();
    for instance in &dataset.instances {
        data.push_str(&serde_json::to_string(instance)?);
        data.push('\n');
    }
    fs::write(dir.join(format!("{name}.data")), data)?;

    if let Some(q) = &dataset.q {
        let mut text = String::new();
        for row in q {
            let formatted: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            text.push_str(&formatted.join(" "));
            text.push('\n');
        }
        fs::write(dir.join(format!("{name}.q")), text)?;
    }
    Ok(())
}

pub fn load_dataset(dir: &Path, name: &str) -> Result<Dataset> {
    let meta_path = dir.join(format!("{name}.meta"));
    let meta_text = fs::read_to_string(&meta_path).map_err(|e| {
        Error::Input(format!("cannot read {}: {e}", meta_path.display()))
    })?;
    let header: MetaHeader = serde_json::from_str(meta_text.trim())?;

    let data_path = dir.join(format!("{name}.data"));
    let data_text = fs::read_to_string(&data_path).map_err(|e| {
        Error::Input(format!("cannot read {}: {e}", data_path.display()))
    })?;
    let mut instances = Vec::new();
    for line in data_text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let instance: PtoInstance = serde_json::from_str(line)?;
        instances.push(instance);
    }

    let q_path = dir.join(format!("{name}.q"));
    let q = if q_path.exists() {
        let q_text = fs::read_to_string(&q_path)?;
        let mut rows = Vec::new();
        for line in q_text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>().map_err(|_| {
                        Error::Input(format!("bad number '{tok}' in {}", q_path.display()))
                    })
                })
                .collect::<Result<_>>()?;
            rows.push(row);
        }
        Some(rows)
    } else {
        None
    };

    let dataset = Dataset {
        spec: header.spec,
        generator_version: header.generator_version,
        instances,
        q,
    };
    dataset.validate()?;
    Ok(dataset)
}
