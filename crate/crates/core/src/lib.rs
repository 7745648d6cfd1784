//! Part-level perception and manipulation toolkit.
//!
//! The crate covers everything downstream of a point-cloud segmentation
//! network: RGB-D ingestion and downsampling ([`ingest`]), instance proposal
//! grouping ([`grouping`]), symmetry-aware pose fitting in normalized part
//! coordinates ([`posefit`]), evaluation metrics ([`metrics`]),
//! domain-adversarial losses with a small trainable demo ([`adversarial`]),
//! and pose-driven manipulation trajectories ([`manip`]).

// `!(x > 0.0)` deliberately rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversarial;
pub mod config;
pub mod error;
pub mod grouping;
pub mod ingest;
pub mod io;
pub mod manip;
pub mod metrics;
pub mod pipeline;
pub mod posefit;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    symmetry_group, JointKind, JointParams, PartClass, PartPose, PointCloud, Proposal,
    SimilarityTransform, SymmetryGroup, SymmetryType,
};
