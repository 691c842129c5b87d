//! Numeric substrate for GNN training: a matrix-valued reverse-mode tape,
//! dense layers, losses and Adam.

mod adam;
mod matrix;
mod nn;
mod tape;

pub use adam::{AdamConfig, AdamState};
pub use matrix::Matrix;
pub use nn::{
    init_uniform, least_squares, least_squares_loss, logistic, logistic_loss, Activation, Binder, Dense, Mlp,
};
pub use tape::{sigmoid, softplus, DegreeScalers, Gradients, SegmentReduce, Segments, Tape, Var};
