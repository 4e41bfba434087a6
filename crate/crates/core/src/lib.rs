//! Spectral shape engine: finite-element Laplace-Beltrami spectra of meshes
//! and contours, an auto-encoder coupled to invertible spectrum/latent maps,
//! and the applications built on it (shape from spectrum, super-resolution,
//! style transfer, exploration, point-cloud spectra, matching).

pub mod geometry;
pub mod laplacian;
pub mod eigensolve;
pub mod neural;
pub mod spectral_ae;
pub mod apps;
pub mod experiment;
