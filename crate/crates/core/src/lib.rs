//! Off-hardware pipeline planning for CNN inference on heterogeneous
//! (big.LITTLE) multi-cores.
//!
//! The crate covers four stages:
//!
//! * [`netdesc`]: network descriptors and conv-to-GEMM geometry,
//! * [`perfmodel`]: regression latency models and the layer x stage time matrix,
//! * [`dse`]: design-space counting, the workload-flow/stage-merge heuristic
//!   and an exhaustive oracle,
//! * [`pipesim`]: a discrete-event simulation of the resulting pipeline.

pub mod dse;
pub mod lstsq;
pub mod netdesc;
pub mod perfmodel;
pub mod pipesim;
pub mod stage;

pub use dse::{LayerAllocation, PipelinePlan};
pub use netdesc::{GemmDims, LayerDescriptor, LayerKind, NetworkModel};
pub use perfmodel::{ClusterModel, PlatformModel, TimeMatrix};
pub use stage::{CoreType, StageConfig};
