//! Higher-level concepts inferred from code, comments and traces:
//! algorithmic strategy, thread roots, guarded regions, domain concepts and
//! comment staleness.

mod ontology;
mod staleness;
mod strategy;
mod threads;

pub use ontology::{load_ontology, tag_domain_concepts, Ontology, OntologyEntry};
pub use staleness::{validate_comment, StalenessVerdict, Verdict};
pub use strategy::{
    classify_strategy, compute_features, default_keywords, FeatureContext, FeatureVector, Label,
    Weights, UNCLASSIFIED,
};
pub use threads::{detect_guarded_regions, detect_thread_roots, lockset_analysis, VarLockset};
