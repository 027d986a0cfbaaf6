//! Drug-drug interaction (DDI) link prediction from two views of each drug.
//!
//! Each drug is seen twice: as a molecular graph parsed from SMILES
//! (the inter-view, encoded by a bond-aware message passing network with
//! gated updates and attentive readout) and as a node of the DDI network
//! (the intra-view, encoded by a two-layer GCN over the inter-view
//! embeddings). A Jensen-Shannon mutual-information objective ties the two
//! views together, and two predictor heads are trained on labeled links
//! while a KL disagreement term aligns them on unlabeled links.
//!
//! Everything runs on the small reverse-mode engine in [`autodiff`].

pub mod autodiff;
pub mod contrastive;
pub mod data;
pub mod error;
pub mod interview;
pub mod intraview;
pub mod metrics;
pub mod model;
pub mod params;
pub mod predict;
pub mod smiles;
pub mod synthetic;
pub mod train;

pub use error::{Error, Result};
