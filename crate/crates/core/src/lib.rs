pub mod alignment;
pub mod analysis;
pub mod backends;
pub mod corpus;
pub mod error;
pub mod hallucination;
pub mod llm;
pub mod mistakes;
pub mod pipeline;
pub mod ratio;
pub mod scoring;
pub mod synth;
pub mod textnorm;
