//! Pipeline plumbing behind the `uncle` binary: recipes, stages and
//! provenance records.

pub mod error;
pub mod provenance;
pub mod recipe;
pub mod run;
pub mod stages;
