//! GPU instantiation of implementation spaces: kernel backbones, the GPU
//! space definition, loop nest reconstruction, code emission and the
//! performance model.

pub mod backbone;
pub mod bound;
pub mod cost;
pub mod encoding;
pub mod host;
pub mod kernel;
pub mod layout;
pub mod machine;
pub mod nest;
pub mod realize;

pub use backbone::Backbone;
pub use encoding::GpuSpace;
pub use kernel::{build_kernel, KernelSpec};
pub use machine::MachineParams;
