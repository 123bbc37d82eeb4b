//! File-backed study store and the HTTP API the review client talks to.

pub mod api;
pub mod store;
pub mod views;

pub use api::{router, ApiError};
pub use store::{OpenMode, StoreError, Study, StudyStore};
