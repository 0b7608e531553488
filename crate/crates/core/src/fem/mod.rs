//! Mixed continuous-velocity / discontinuous-pressure discretization.

mod assembly;
mod space;
mod transfer;

pub use assembly::{
    assemble, dot, project_dual, project_primal, AssemblyOptions, CounterSnapshot, OpCounters, StokesOperator,
};
pub use space::{
    eval_pressure_basis, pressure_basis_norm2, pressure_exponents, split_index, Constraint, PressureSpace, RefElement,
    VelocitySpace,
};
pub use transfer::{h_transfer, p_transfer, BlockTransfer};
