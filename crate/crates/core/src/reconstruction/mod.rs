//! Reconstruction of the latent cube: a pixel-space MAP baseline, a
//! pre-trained fusion backbone producing the rough estimate, and a guided
//! reconstruction network optimized per scene in deep-image-prior style.

mod backbone;
mod dip;
mod map;
mod reconnet;

pub use backbone::{train_backbone, Backbone, BackboneConfig, TrainingSample};
pub use dip::{dip_optimize, DipProblem, DipResult};
pub use map::{map_reconstruct, total_variation, Regularizer};
pub use reconnet::{recon_forward, ReconNet, ReconNetConfig};

pub(crate) use reconnet::build_graph as build_recon_graph;
