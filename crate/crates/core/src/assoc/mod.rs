//! Data association: cost construction, k-best assignments, loopy belief
//! propagation, the Bethe free energy and the TOMB/P reduction.

pub mod bethe;
pub mod hungarian;
pub mod lbp;
pub mod murty;
pub mod problem;
pub mod tombp;

pub use bethe::bethe_free_energy;
pub use lbp::{lbp_marginals, Beliefs, LbpConfig};
pub use murty::{murty_kbest, murty_kbest_within, RankedAssociation};
pub use problem::AssociationProblem;
pub use tombp::{tombp_reduce, TombpOutput};
