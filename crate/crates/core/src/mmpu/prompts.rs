//! Versioned prompt assets, hashed so job logs pin the exact wording.

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::provider::ProviderTask;

#[derive(Debug, Clone, Serialize)]
pub struct PromptAsset {
    pub name: &'static str,
    pub version: u32,
    pub sha256: String,
    #[serde(skip)]
    pub text: &'static str,
}

const VALIDATE: &str = include_str!("../../assets/prompts/validate.v1.txt");
const EXTRACT: &str = include_str!("../../assets/prompts/extract.v1.txt");
const REPAIR: &str = include_str!("../../assets/prompts/repair.v1.txt");

fn asset(name: &'static str, text: &'static str) -> PromptAsset {
    let digest = Sha256::digest(text.as_bytes());
    PromptAsset {
        name,
        version: 1,
        sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
        text,
    }
}

pub fn prompt(task: ProviderTask) -> PromptAsset {
    match task {
        ProviderTask::Validate => asset("validate", VALIDATE),
        ProviderTask::Extract => asset("extract", EXTRACT),
        ProviderTask::Repair => asset("repair", REPAIR),
    }
}

pub fn prompt_manifest() -> Vec<PromptAsset> {
    [ProviderTask::Validate, ProviderTask::Extract, ProviderTask::Repair]
        .into_iter()
        .map(prompt)
        .collect()
}
