//! Measuring and mitigating stance bias in LLM stance predictions.
//!
//! The crate covers the whole loop: loading stance benchmarks, prompting an
//! LLM through a cached gateway, measuring sentiment-stance and target
//! preference bias with recall standard deviations, generating
//! counterfactual training data, and training a calibration classifier over
//! the LLM's judgments and rationales.

pub mod bias_metrics;
pub mod calibration;
pub mod cli;
pub mod corpus;
pub mod counterfactual;
pub mod experiments;
pub mod fixture;
pub mod llm_gateway;
pub mod prompting;
