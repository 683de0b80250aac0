pub mod agents;
pub mod baselines;
pub mod bm25;
pub mod config;
pub mod corpus;
pub mod eval;
pub mod exec;
pub mod llm;
pub mod memory;
pub mod optimizer;
pub mod pipeline;
pub mod prompts;
pub mod ranker;
pub mod script;
pub mod seeds;
pub mod synthetic;
pub mod text;
