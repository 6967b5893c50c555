//! Latent-class matrix-variate state space modelling of runner careers.
//!
//! The library fits a clustered local-level model to panels of annual
//! seasonal-best times. Each runner belongs to one of `G` latent groups;
//! group trends per discipline evolve as Gaussian random walks, and the
//! pattern of missing observations (career start and stop, discipline
//! participation) can itself inform the group membership. Four model
//! variants toggle which missingness processes enter the clustering:
//!
//! * `Complete` — career history and discipline attitude both matter,
//! * `AttitudeOnly` — only discipline participation matters,
//! * `HistoryOnly` — only career start/stop matters,
//! * `NoMissing` — missingness is ignored for clustering.
//!
//! Fitting is by Gibbs sampling with an overfitted sparse mixture prior on
//! the group weights; held-out runners are predicted conditional on their
//! missingness pattern and compared across variants by CRPS and interval
//! scores.

pub mod checkpoint;
pub mod error;
pub mod gibbs;
pub mod missingness;
pub mod panel;
pub mod predictive;
pub mod rng;
pub mod scoring;
pub mod ssm;
pub mod stats;
pub mod synthgen;

pub use error::{Error, Result};
pub use gibbs::{GibbsConfig, GibbsSampler, ModelParameters, ModelVariant, PosteriorDraws};
pub use panel::{CareerSequence, CareerState, PerformancePanel, SplitPlan};
