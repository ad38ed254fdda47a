//! Reading and writing model bundle files.

use std::path::Path;

use volcast_core::persist::{deserialize_model, serialize_model, ModelBundle};

use crate::error::{CliError, Result};

pub fn save_model(path: &Path, bundle: &ModelBundle) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, serialize_model(bundle))
        .map_err(|e| CliError::Data(format!("cannot write model {}: {e}", path.display())))
}

pub fn load_model(path: &Path) -> Result<ModelBundle> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Data(format!("cannot read model {}: {e}", path.display())))?;
    Ok(deserialize_model(&bytes)?)
}
