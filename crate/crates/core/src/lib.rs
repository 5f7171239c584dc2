//! Multi-agent courtroom deliberation: case files, a retrieval knowledge base,
//! an LLM gateway, role agents, the round-based orchestrator and metrics.

pub mod agents;
pub mod case_model;
pub mod harness;
pub mod knowledge_base;
pub mod llm_gateway;
pub mod metrics;
pub mod orchestrator;
pub mod report;
