//! Instance files: graph plus source model.

use serde::{Deserialize, Serialize};

use crate::entropy::{EntropyOracle, RawSourceModel};
use crate::error::{Error, Result};
use crate::model::{NetworkInstance, RawInstance};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProblemFile {
    #[serde(flatten)]
    pub instance: RawInstance,
    pub source_model: RawSourceModel,
}

/// A validated instance together with its entropy oracle.
#[derive(Clone, Debug)]
pub struct Problem {
    pub instance: NetworkInstance,
    pub oracle: EntropyOracle,
}

impl Problem {
    pub fn from_json(text: &str) -> Result<Problem> {
        let file: ProblemFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Problem::from_file(&file)
    }

    pub fn from_file(file: &ProblemFile) -> Result<Problem> {
        let instance = NetworkInstance::validate(&file.instance)?;
        let oracle = EntropyOracle::from_raw(&file.source_model, &instance.source_names())?;
        Ok(Problem { instance, oracle })
    }
}
