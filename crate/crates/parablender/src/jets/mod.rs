//! Jets of parameter families and the jet-space lift of the blender.

mod chart;
mod family;
mod lift;
pub mod taylor;
mod witness;

pub use chart::{
    jet_plane_action, lifted_chart_check, lifted_disc_norm_check, LiftedChartReport,
    LiftedDiscNormReport,
};
pub use family::{
    jet_dim, jet_fiber_ifs, AffineFamily, Jet, JetRecord, MatPoly, ParamFamily, Poly, MAX_BRANCHES,
};
pub use lift::{
    constant_family_disc, jet_dimensions, jet_grassmann_model, jet_skew_model, lift_base,
    lift_system, JetDimensions, JetSystem, LiftedDisc, COVER_DEPTH, DEFAULT_RHO,
};
pub use taylor::{MultiIndexSet, Taylor};
pub use witness::{
    continuation_distance, parablender_witness, project_witness, steps_for_tolerance,
    unfolding_order_check, ConstantFamily, DirectionFit, DiscFamily, ProjectionCheck, SlopeReport,
    UnfoldingWitness, DISTANCE_FLOOR,
};
