#![allow(dead_code)]

pub mod cohort;
pub mod nb;
pub mod records;

use std::path::Path;
use std::sync::Arc;

use autograde::backend::{Backend, MockBackend};
use autograde::chain::RetryPolicy;
use autograde::orchestrator::EngineConfig;
use autograde::rubric_io::{load_rubric, ASSIGNMENT3_MOCK_YAML, ASSIGNMENT3_YAML};
use autograde::sandbox::SandboxConfig;
use autograde_core::RubricSpec;

pub fn rubric() -> RubricSpec {
    load_rubric(ASSIGNMENT3_YAML).unwrap()
}

pub fn mock() -> Arc<MockBackend> {
    Arc::new(MockBackend::from_yaml(ASSIGNMENT3_MOCK_YAML).unwrap())
}

pub fn config(root: &Path, backend: Arc<dyn Backend>, parallelism: usize) -> EngineConfig {
    EngineConfig {
        parallelism,
        sandbox: SandboxConfig {
            scratch_root: root.join("scratch"),
            timeout_seconds: 20.0,
            ..SandboxConfig::default()
        },
        backend,
        storage_root: root.join("storage"),
        retry: RetryPolicy::default(),
        prompts: Default::default(),
    }
}
