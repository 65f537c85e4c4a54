//! Hybrid neural-field library: anisotropic radial basis functions combined
//! with a multi-resolution hash grid and a small MLP decoder, trained with
//! Adam to represent images (RGB over the unit square) and signed distance
//! fields (over the unit cube).
//!
//! Layout:
//!
//! * [`params`] — flat parameter/gradient store with named segments, Adam,
//!   the learning-rate schedule and a finite-difference gradient checker.
//! * [`rbf`] — anisotropic inverse-quadratic RBF encoding with sinusoidal
//!   multi-frequency composition.
//! * [`grid`] — multi-resolution feature grid with dense low levels and
//!   hashed high levels.
//! * [`decoder`] — 3-layer MLP decoder with a sinusoidal residual on the
//!   first hidden layer.
//! * [`clustering`] — weighted k-means initialisation of RBF centers and
//!   shapes from data-dependent importance weights.
//! * [`field`] — the assembled model plus the training loop.
//! * [`mesh`], [`sdf`] — triangle meshes, BVH point/ray queries, analytic
//!   shapes, sampling and IoU evaluation.
//! * [`imageio`] — f64 image buffers, PNG I/O, PSNR and error maps.
//! * [`checkpoint`] — binary model container.
//! * [`config`] — run configuration, defaults and the parameter-budget
//!   solver.
//!
//! All numerics are f64. Every batch operation is chunked identically in the
//! parallel and sequential builds and reduced in a fixed order, so a given
//! seed produces bit-identical results regardless of thread count or the
//! `parallel` feature; see [`exec`].

pub mod checkpoint;
pub mod clustering;
pub mod config;
pub mod decoder;
pub mod error;
pub mod exec;
pub mod fastmath;
pub mod field;
pub mod grid;
pub mod imageio;
pub mod kdtree;
pub mod mesh;
pub mod params;
pub mod rbf;
pub mod rng;
pub mod sdf;
pub mod symmat;
pub mod synth;

pub use error::{Error, Result};
