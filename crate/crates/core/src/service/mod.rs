//! Annotation backend: assignment planning, judgment collection, progress
//! and agreement, served as a JSON HTTP API.

mod backend;
mod http;
mod plan;

pub use backend::{
    AgreementStatus, AnnotationService, AnnotatorProgress, LabelDescriptor, NextItem, ProgressReport,
    SchemaDescriptor, SubmitAck, SubmitRequest,
};
pub use http::{router, serve, SharedService, TOKEN_HEADER};
pub use plan::{plan_assignments, AnnotatorQueue, AssignmentPlan, DEFAULT_OVERLAP};
