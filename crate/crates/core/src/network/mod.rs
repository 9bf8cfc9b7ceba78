//! Electrical plant: LC output filters, feeder lines, constant-impedance
//! loads and the grid Thevenin branch behind the PCC breaker.

mod breaker;
mod circuit;
mod load;
mod plant;

pub use breaker::{set_breaker, BreakerState};
pub use circuit::LinearStateSpace;
pub use load::{apply_load_step, ConstantImpedanceLoad, LoadBank};
pub use plant::{
    measure, GridEquivalent, InverterBranchState, InverterDrive, InverterMeasurement,
    LcFilterParams, LineImpedance, MeasurementSet, Plant, PlantParams, PlantState,
};
