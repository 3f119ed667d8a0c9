//! Building blocks for grounded EDA script generation: an API knowledge
//! graph, a parser for the ESL script dialect, a static checker with repair
//! hints, a synthetic script generator, rule and document retrieval, and the
//! agentic refinement loop that ties them together.

pub mod agents;
pub mod api_graph;
pub mod checker;
pub mod llm;
pub mod retrieval;
pub mod rules;
pub mod script_lang;
pub mod sdg;
