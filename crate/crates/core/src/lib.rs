//! Tooling for evaluating LLM-based CVSS v3.1 base-metric prediction.
//!
//! - [`cvss`]: base-metric types, vector strings and scoring
//! - [`ingest`]: CVE record parsing, filtering and dataset files
//! - [`gateway`]: prompting, provider calls, replay cache and response parsing
//! - [`metrics`]: classification metrics, baselines and association measures
//! - [`text`]: description statistics and correlation analysis
//! - [`meta`]: meta-classification over multi-model predictions

pub mod cvss;
pub mod gateway;
pub mod ingest;
pub mod meta;
pub mod metrics;
pub mod text;
