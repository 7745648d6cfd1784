//! Evaluation battery for part segmentation and part pose.

pub mod ap;
pub mod box_iou;
pub mod pose;

pub use ap::{instance_ap, instance_map, map_thresholds, match_instances, ApReport, GtInstance, InstanceMatchResult, MapReport};
pub use box_iou::{box_iou, box_iou_sampled};
pub use pose::{pose_accuracy, pose_errors, summarize, PoseErrors, PoseSummary};
