//! Kernel families: past-conditioned singletons and two-sided densities.

pub mod lis;
pub mod spec;

pub use lis::{
    check_singleton_normalization, DecayBound, GSingleton, LisFamily, MemoryBound, PastKernel,
    RenewalDecay,
};
pub use spec::{RhoSingleton, SpecFamily, TwoSidedKernel};
