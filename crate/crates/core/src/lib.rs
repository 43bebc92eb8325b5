//! Desk-scale pipeline for training and assessing a generator of DSL-JSON
//! domain-model objects: corpus preprocessing, n-gram next-token modeling,
//! BLEU/ROUGE evaluation, weighted-sum hyperparameter selection, permutation
//! importance, and repair/validation-based model assessment.

pub mod assess;
pub mod corpus;
pub mod fixtures;
pub mod generator;
pub mod importance;
pub mod metrics;
pub mod pipeline;
pub mod repair;
pub mod seeding;
pub mod tuning;
