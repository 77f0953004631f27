//! Domain Vectors: a locator of an online Domain Space definition followed by
//! a sequence of numbers, plus the machinery to define, store, search and
//! summarise them.

pub mod codec;
pub mod decision;
pub mod exec;
pub mod federation;
pub mod fixtures;
pub mod model;
pub mod registry;
pub mod search;
pub mod store;
pub mod value;

pub use codec::{CodecError, UlRef};
pub use model::{DimensionDefinition, DomainDefinition, DomainVector, GlobalDimensionId, Schema};
pub use value::{Decimal, Scalar};
pub use exec::Execution;
pub use search::{DimConstraint, Metric, SearchQuery};
pub use store::Store;
