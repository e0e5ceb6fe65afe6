//! Joint online estimation of hidden states and noise smoothness for linear
//! time-invariant systems driven by colored (Gaussian-kernel-convolved)
//! noise, together with baseline filters and a simulation lab.
//!
//! The central object is an observer that tracks a system trajectory in
//! generalized coordinates (the state and its first `p` derivatives) while
//! estimating the kernel width `s` of the noise autocorrelation online, by
//! ascending a free-energy objective in `s`. Classical baselines — a Kalman
//! filter, state augmentation with AR noise, and an AR(1) cross-covariance
//! Kalman variant — run on the same datasets for comparison.
//!
//! ```
//! use dems::observer::{run_dems, ObserverConfig};
//! use dems::simlab::scenarios::Scenario;
//!
//! let scenario = Scenario::paper_system();
//! let dataset = scenario.simulate(0.5, 42, 8.0, 0.1)?;
//! let (prec_w, prec_z) = scenario.observer_precisions();
//! let cfg = ObserverConfig::new(6, 2, 0.1, prec_w, prec_z);
//! let out = run_dems(&dataset, scenario.plant(), &cfg)?;
//! let s_hat = out.s_traj.as_ref().unwrap().last().copied().unwrap();
//! assert!(s_hat > 0.0 && s_hat <= 1.0);
//! # Ok::<(), dems::Error>(())
//! ```

pub mod baselines;
pub mod error;
pub mod free_energy;
pub mod gencoord;
pub mod io;
pub mod linalg;
pub mod noise;
pub mod observer;
pub mod simlab;

pub use error::{Error, Result};

// The guide chapters double as doc-tests so their examples stay compilable.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            mod $name {}
        };
    }

    chapter!(introduction, "../../../book/src/introduction.md");
    chapter!(
        generalized_coordinates,
        "../../../book/src/generalized-coordinates.md"
    );
    chapter!(noise_smoothness, "../../../book/src/noise-and-smoothness.md");
    chapter!(free_energy, "../../../book/src/free-energy.md");
    chapter!(observer, "../../../book/src/observer.md");
    chapter!(baselines, "../../../book/src/baselines.md");
    chapter!(experiments, "../../../book/src/experiments.md");
}
