//! Analyses comparing imputed data against the original: PCA projections,
//! variance/disagreement deltas, soft-label KL divergence, and the HTML
//! report that ties them together.

mod delta;
mod html;
mod pca;
mod softlabel;

pub use delta::{distribution_delta, save_delta_ndjson, DistributionDelta, ItemDelta};
pub use html::{render_report_html, ReportInputs};
pub use pca::{pca_project, pca_project_dense, save_pca_csv, PCAProjection, DEFAULT_SENTINEL};
pub use softlabel::{
    js_divergence, kl_divergence, save_softlabel_ndjson, softlabel_report, KlAggregate,
    SoftLabelRecord, DEFAULT_ALPHA,
};
