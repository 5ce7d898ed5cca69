//! Corpus statistics and evaluation metrics.

pub mod cider;
pub mod distribution;
pub mod f1;
pub mod kappa;
pub mod report;

pub use cider::{cider_score, CiderConfig, CiderResult, CiderVariant};
pub use distribution::{
    distribution_of_sets, genre_distribution, labelled_pairs, overlap_rate, relation_distribution,
    DistributionReport, GroupBy, OverlapBase,
};
pub use f1::{argmax, multi_label_f1, single_label_f1, F1Report};
pub use kappa::{
    binary_kappa, cohen_kappa, cohen_kappa_label, kappa_for_sets, kappa_from_table,
    AgreementReport, KappaSummary,
};
pub use report::{emit_report, facet_table, label_table, ReportFormat, Table};
