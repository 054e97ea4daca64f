//! Instruction-to-dataset synthesis: asset retrieval, physically consistent
//! layout, multi-view verification, motion planning and annotation export.

pub mod assets;
pub mod canonical;
pub mod export;
pub mod gateway;
pub mod geometry;
pub mod layout;
pub mod optimize;
pub mod planner;
pub mod render;
pub mod pipeline;
pub mod bench;
