pub mod error;
pub mod grid;
pub mod harmonic;
pub mod iterated;
pub mod jet;
pub mod params;
pub mod potential;
pub mod profile;
pub mod quad;
pub mod rates;
pub mod semigroup;
pub mod spectral;
pub mod suites;
